#pragma once

// Command implementations behind the `dietnet` binary. Each command is
// deterministic given its inputs and seed and writes a manifest.json (input
// hashes plus the effective configuration) beside its outputs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dietnet/baselines.hpp"
#include "dietnet/common.hpp"
#include "dietnet/diet_model.hpp"
#include "dietnet/embedding.hpp"
#include "dietnet/evaluation.hpp"
#include "dietnet/genotype_io.hpp"

namespace dietnet::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kOutputRootEnv = "DIETNET_OUTPUT_ROOT";

class ConfigError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string file_hash(const fs::path& p) {
  Fnv1a h;
  h.update(read_file(p));
  return hex64(h.digest());
}

inline std::ofstream open_out(const fs::path& p, bool binary = false) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

inline void write_text(const fs::path& p, const std::string& s) {
  auto out = open_out(p, true);
  out << s;
}

inline GenotypeDataset load_cache(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  return read_cache(in);
}

inline void save_cache(const fs::path& p, const GenotypeDataset& d) {
  auto out = open_out(p, true);
  write_cache(out, d);
}

inline RegionTable read_region_table(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  RegionTable t;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (detail::blank(line)) continue;
    const auto tok = detail::tokenize(line);
    if (tok.size() != 2) throw ParseError("region table rows are `population region`", n, 1);
    t[tok[0].text] = tok[1].text;
  }
  return t;
}

inline GenotypeDataset load_text(const fs::path& raw, const fs::path& panel,
                                 const std::optional<fs::path>& regions) {
  std::ifstream raw_in(raw);
  if (!raw_in) throw Error("cannot open " + raw.string());
  GenotypeDataset d;
  try {
    d = parse_raw(raw_in);
  } catch (const ParseError& e) {
    throw Error(raw.string() + ": " + e.what());
  }
  std::ifstream panel_in(panel);
  if (!panel_in) throw Error("cannot open " + panel.string());
  std::optional<RegionTable> table;
  if (regions) table = read_region_table(*regions);
  return parse_panel(panel_in, d, table ? &*table : nullptr);
}

inline void write_manifest(const fs::path& p, const std::string& command, const json& config,
                           const std::vector<fs::path>& inputs) {
  json m;
  m["tool"] = "dietnet";
  m["version"] = kVersion;
  m["command"] = command;
  json in = json::object();
  for (const auto& path : inputs) in[path.string()] = file_hash(path);
  m["inputs"] = in;
  m["config"] = config;
  write_text(p, m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessOptions {
  fs::path raw;
  fs::path panel;
  std::optional<fs::path> regions;
  double maf = 0.05;
  std::size_t ld_window = 50;
  std::size_t ld_step = 5;
  double r2 = 0.5;
  fs::path out;
};

struct PreprocessSummary {
  Index samples = 0;
  Index snps_in = 0;
  Index snps_after_maf = 0;
  Index snps_out = 0;
  MafReport maf;
  LdReport ld;
};

inline PreprocessSummary cmd_preprocess(const PreprocessOptions& o, std::ostream& log) {
  if (!(o.maf >= 0.0 && o.maf <= 0.5)) throw ConfigError("--maf must lie in [0, 0.5]");
  GenotypeDataset d = load_text(o.raw, o.panel, o.regions);
  PreprocessSummary s;
  s.samples = d.n_samples();
  s.snps_in = d.n_snps();
  if (o.maf > 0.0) d = filter_maf(d, o.maf, &s.maf);
  s.snps_after_maf = d.n_snps();
  d = prune_ld(d, o.ld_window, o.ld_step, o.r2, &s.ld);
  s.snps_out = d.n_snps();
  save_cache(o.out, d);
  log << "samples: " << s.samples << "  classes: " << d.n_classes()
      << "  regions: " << d.n_regions() << '\n'
      << "SNPs before: " << s.snps_in << "  after MAF " << format_double(o.maf) << ": "
      << s.snps_after_maf << "  after LD pruning: " << s.snps_out << '\n';
  if (s.maf.all_missing > 0)
    log << "warning: " << s.maf.all_missing << " SNP(s) had no observed genotype and were dropped\n";
  if (s.ld.zero_variance > 0)
    log << "note: " << s.ld.zero_variance << " zero-variance SNP(s) treated as r2 = 0\n";
  json cfg;
  cfg["maf"] = o.maf;
  cfg["ld_window"] = o.ld_window;
  cfg["ld_step"] = o.ld_step;
  cfg["r2"] = o.r2;
  std::vector<fs::path> inputs{o.raw, o.panel};
  if (o.regions) inputs.push_back(*o.regions);
  write_manifest(o.out.string() + ".manifest.json", "preprocess", cfg, inputs);
  return s;
}

// ---------------------------------------------------------------------------
// Strict JSON access

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
void get_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (j.contains(key)) out = get<T>(j, key, where);
}

// ---------------------------------------------------------------------------
// synth

// Spec: {"seed", "samples_per_population", "regions"?, and exactly one of
//   "populations": [{"name", "region"?, "samples"?, "frequencies": [...]}],
//   "blocks": {"populations", "snps", "high", "low"},
//   "drifted": {"populations", "snps", "drift"}}
inline GenotypeDataset synth_from_spec(const json& spec) {
  const std::string w = "synth spec";
  check_keys(spec, {"seed", "samples_per_population", "populations", "blocks", "drifted",
                    "names", "regions"},
             w);
  const auto seed = get<std::uint64_t>(spec, "seed", w);
  std::size_t per_pop = 0;
  get_opt(spec, "samples_per_population", per_pop, w);
  const int sources = spec.contains("populations") + spec.contains("blocks") +
                      spec.contains("drifted");
  if (sources != 1) throw ConfigError("synth spec needs exactly one of populations/blocks/drifted");

  std::vector<PopulationModel> pops;
  if (spec.contains("populations")) {
    const auto& arr = spec.at("populations");
    if (!arr.is_array() || arr.empty()) throw ConfigError("populations must be a non-empty list");
    for (std::size_t c = 0; c < arr.size(); ++c) {
      const std::string pw = w + ".populations[" + std::to_string(c) + "]";
      check_keys(arr[c], {"name", "region", "samples", "frequencies"}, pw);
      PopulationModel p;
      p.name = "POP" + std::to_string(c);
      get_opt(arr[c], "name", p.name, pw);
      get_opt(arr[c], "region", p.region, pw);
      p.samples = per_pop;
      get_opt(arr[c], "samples", p.samples, pw);
      p.frequencies = get<std::vector<double>>(arr[c], "frequencies", pw);
      pops.push_back(std::move(p));
    }
  } else {
    std::vector<std::vector<double>> freqs;
    if (spec.contains("blocks")) {
      const auto& b = spec.at("blocks");
      check_keys(b, {"populations", "snps", "high", "low"}, w + ".blocks");
      freqs = block_frequencies(get<std::size_t>(b, "populations", w), get<std::size_t>(b, "snps", w),
                                get<double>(b, "high", w), get<double>(b, "low", w));
    } else {
      const auto& b = spec.at("drifted");
      check_keys(b, {"populations", "snps", "drift"}, w + ".drifted");
      freqs = drifted_frequencies(get<std::size_t>(b, "populations", w),
                                  get<std::size_t>(b, "snps", w), get<double>(b, "drift", w),
                                  seed ^ 0xa5a5a5a5a5a5a5a5ULL);
    }
    std::vector<std::string> names, regions;
    get_opt(spec, "names", names, w);
    get_opt(spec, "regions", regions, w);
    if (!names.empty() && names.size() != freqs.size())
      throw ConfigError("names must list one entry per population");
    if (!regions.empty() && regions.size() != freqs.size())
      throw ConfigError("regions must list one entry per population");
    for (std::size_t c = 0; c < freqs.size(); ++c)
      pops.push_back({names.empty() ? "POP" + std::to_string(c) : names[c],
                      regions.empty() ? std::string() : regions[c], std::move(freqs[c]), per_pop});
  }
  for (const auto& p : pops)
    if (p.samples == 0) throw ConfigError("population " + p.name + " has no samples");
  return synthesize(pops, seed);
}

struct SynthOptions {
  fs::path spec;
  fs::path out;                 // binary cache
  std::optional<fs::path> raw;  // also write text: <raw> and <raw>.panel
};

inline GenotypeDataset cmd_synth(const SynthOptions& o, std::ostream& log) {
  json spec;
  try {
    spec = json::parse(read_file(o.spec));
  } catch (const json::parse_error& e) {
    throw ConfigError(o.spec.string() + ": " + e.what());
  }
  GenotypeDataset d = synth_from_spec(spec);
  save_cache(o.out, d);
  if (o.raw) {
    auto raw = open_out(*o.raw);
    write_raw(raw, d);
    auto panel = open_out(o.raw->string() + ".panel");
    write_panel(panel, d);
  }
  log << "synthesized " << d.n_samples() << " samples x " << d.n_snps() << " SNPs, "
      << d.n_classes() << " classes, " << d.n_regions() << " regions\n";
  std::vector<std::size_t> counts(static_cast<std::size_t>(d.n_classes()), 0);
  for (int y : d.labels) ++counts[static_cast<std::size_t>(y)];
  for (int c = 0; c < d.n_classes(); ++c)
    log << "  " << d.classes[static_cast<std::size_t>(c)] << ": "
        << counts[static_cast<std::size_t>(c)] << '\n';
  write_manifest(o.out.string() + ".manifest.json", "synth", spec, {o.spec});
  return d;
}

// ---------------------------------------------------------------------------
// run

inline void apply_train_overrides(const json& j, TrainConfig& c, const std::string& w) {
  check_keys(j,
             {"hidden", "aux_hidden", "embed_hidden", "aux_bias", "hidden_activation",
              "aux_activation", "embed_activation", "reconstruction", "gamma", "dropout", "lr",
              "rho", "eps", "batch_size", "max_epochs", "patience", "seed", "max_norm",
              "weight_decay"},
             w);
  get_opt(j, "hidden", c.hidden, w);
  get_opt(j, "aux_hidden", c.aux_hidden, w);
  get_opt(j, "embed_hidden", c.embed_hidden, w);
  get_opt(j, "aux_bias", c.aux_bias, w);
  auto act = [&](const char* key, Activation& a) {
    if (!j.contains(key)) return;
    try {
      a = activation_from_string(get<std::string>(j, key, w));
    } catch (const Error& e) {
      throw ConfigError(w + "." + key + ": " + e.what());
    }
  };
  act("hidden_activation", c.hidden_activation);
  act("aux_activation", c.aux_activation);
  act("embed_activation", c.embed_activation);
  get_opt(j, "reconstruction", c.reconstruction, w);
  get_opt(j, "gamma", c.gamma, w);
  get_opt(j, "dropout", c.dropout, w);
  get_opt(j, "lr", c.lr, w);
  get_opt(j, "rho", c.rho, w);
  get_opt(j, "eps", c.eps, w);
  get_opt(j, "batch_size", c.batch_size, w);
  get_opt(j, "max_epochs", c.max_epochs, w);
  get_opt(j, "patience", c.patience, w);
  get_opt(j, "seed", c.seed, w);
  if (j.contains("max_norm")) {
    if (j.at("max_norm").is_null())
      c.max_norm.reset();
    else
      c.max_norm = get<double>(j, "max_norm", w);
  }
  get_opt(j, "weight_decay", c.weight_decay, w);
}

inline EmbeddingSpec parse_embedding(const json& j, std::uint64_t seed, const std::string& w) {
  check_keys(j, {"kind", "dim", "seed", "alpha", "dae"}, w);
  EmbeddingSpec e;
  e.seed = seed;
  try {
    e.kind = embedding_kind_from_string(get<std::string>(j, "kind", w));
  } catch (const Error& err) {
    throw ConfigError(w + ".kind: " + err.what());
  }
  get_opt(j, "dim", e.dim, w);
  get_opt(j, "seed", e.seed, w);
  get_opt(j, "alpha", e.alpha, w);
  if (j.contains("dae")) {
    const auto& d = j.at("dae");
    const std::string dw = w + ".dae";
    check_keys(d, {"hidden", "corruption", "epochs", "batch_size", "lr"}, dw);
    get_opt(d, "hidden", e.dae.hidden_dim, dw);
    get_opt(d, "corruption", e.dae.corruption_rate, dw);
    get_opt(d, "epochs", e.dae.epochs, dw);
    get_opt(d, "batch_size", e.dae.batch_size, dw);
    get_opt(d, "lr", e.dae.lr, dw);
  }
  return e;
}

struct RunConfig {
  std::optional<fs::path> dataset;  // genotype cache
  std::optional<fs::path> raw, panel, regions;
  fs::path output_dir;
  std::uint64_t seed = 1;
  int folds = 5;
  int jobs = 1;
  std::vector<ModelSpec> models;  // configured models first, then baselines
  json source;                    // effective config, echoed into the manifest

  std::vector<fs::path> inputs() const {
    std::vector<fs::path> v;
    for (const auto* p : {&dataset, &raw, &panel, &regions})
      if (*p) v.push_back(**p);
    return v;
  }
};

struct RunOverrides {
  std::optional<fs::path> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<int> max_epochs;
};

// Relative paths in the config, output_dir included, resolve against the config
// file's directory.
// The output directory comes from, in order: the override, the config, the
// DIETNET_OUTPUT_ROOT variable joined with the config stem, ./runs/<stem>.
inline RunConfig parse_run_config(const json& j, const fs::path& config_path,
                                  const RunOverrides& ov = {}) {
  const std::string w = "config";
  check_keys(j, {"dataset", "raw", "panel", "regions", "output_dir", "seed", "folds", "jobs",
                 "train", "models", "baselines"},
             w);
  RunConfig rc;
  const fs::path base = config_path.has_parent_path() ? config_path.parent_path() : fs::path(".");
  auto path_of = [&](const char* key) -> std::optional<fs::path> {
    if (!j.contains(key)) return std::nullopt;
    fs::path p = get<std::string>(j, key, w);
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p)) throw ConfigError(std::string(key) + " path does not exist: " + p.string());
    return p;
  };
  rc.dataset = path_of("dataset");
  rc.raw = path_of("raw");
  rc.panel = path_of("panel");
  rc.regions = path_of("regions");
  if (rc.dataset.has_value() == (rc.raw.has_value() || rc.panel.has_value()))
    throw ConfigError("config needs either dataset or raw + panel");
  if (!rc.dataset && !(rc.raw && rc.panel)) throw ConfigError("raw and panel go together");

  get_opt(j, "seed", rc.seed, w);
  if (ov.seed) rc.seed = *ov.seed;
  get_opt(j, "folds", rc.folds, w);
  get_opt(j, "jobs", rc.jobs, w);
  if (ov.jobs) rc.jobs = *ov.jobs;
  if (rc.folds < 3) throw ConfigError("folds must be >= 3");
  if (rc.jobs < 1) throw ConfigError("jobs must be >= 1");

  if (ov.output_dir) {
    rc.output_dir = *ov.output_dir;
  } else if (j.contains("output_dir")) {
    rc.output_dir = get<std::string>(j, "output_dir", w);
    if (rc.output_dir.is_relative()) rc.output_dir = base / rc.output_dir;
  } else if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
    rc.output_dir = fs::path(root) / config_path.stem();
  } else {
    rc.output_dir = fs::path("runs") / config_path.stem();
  }

  TrainConfig defaults;
  defaults.seed = rc.seed;
  if (j.contains("train")) apply_train_overrides(j.at("train"), defaults, w + ".train");
  if (ov.max_epochs) defaults.max_epochs = *ov.max_epochs;

  std::map<std::string, int> names;
  auto claim = [&](const std::string& name) {
    if (name.empty()) throw ConfigError("every model needs a name");
    if (names[name]++) throw ConfigError("duplicate model name " + name);
  };
  if (j.contains("models")) {
    const auto& arr = j.at("models");
    if (!arr.is_array()) throw ConfigError("models must be a list");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string mw = w + ".models[" + std::to_string(i) + "]";
      const auto& mj = arr[i];
      check_keys(mj, {"name", "variant", "embedding", "gamma", "reconstruction", "train"}, mw);
      ModelSpec m;
      m.name = get<std::string>(mj, "name", mw);
      claim(m.name);
      const auto variant = get<std::string>(mj, "variant", mw);
      if (variant == "basic") {
        m.kind = ModelKind::Basic;
        if (mj.contains("embedding")) throw ConfigError(mw + ": basic models take no embedding");
      } else if (variant == "diet") {
        m.kind = ModelKind::Diet;
        if (!mj.contains("embedding")) throw ConfigError(mw + ": diet models need an embedding");
        m.embedding = parse_embedding(mj.at("embedding"), rc.seed, mw + ".embedding");
      } else {
        throw ConfigError(mw + ".variant must be basic or diet");
      }
      m.config = defaults;
      if (mj.contains("train")) apply_train_overrides(mj.at("train"), m.config, mw + ".train");
      get_opt(mj, "gamma", m.config.gamma, mw);
      get_opt(mj, "reconstruction", m.config.reconstruction, mw);
      if (m.config.gamma > 0.0 && !m.config.reconstruction)
        throw ConfigError(mw + ": gamma > 0 needs reconstruction");
      if (ov.max_epochs) m.config.max_epochs = *ov.max_epochs;
      try {
        m.config.validate();
      } catch (const Error& e) {
        throw ConfigError(mw + ": " + e.what());
      }
      rc.models.push_back(std::move(m));
    }
  }
  if (j.contains("baselines")) {
    const auto& arr = j.at("baselines");
    if (!arr.is_array()) throw ConfigError("baselines must be a list");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string bw = w + ".baselines[" + std::to_string(i) + "]";
      const auto& bj = arr[i];
      check_keys(bj, {"name", "pcs", "head", "train"}, bw);
      ModelSpec m;
      m.kind = ModelKind::Pca;
      m.name = get<std::string>(bj, "name", bw);
      claim(m.name);
      m.pcs = get<Index>(bj, "pcs", bw);
      if (m.pcs < 1) throw ConfigError(bw + ".pcs must be >= 1");
      get_opt(bj, "head", m.head.hidden, bw);
      m.config = defaults;
      if (bj.contains("train")) apply_train_overrides(bj.at("train"), m.config, bw + ".train");
      if (ov.max_epochs) m.config.max_epochs = *ov.max_epochs;
      try {
        m.config.validate();
      } catch (const Error& e) {
        throw ConfigError(bw + ": " + e.what());
      }
      rc.models.push_back(std::move(m));
    }
  }
  if (rc.models.empty()) throw ConfigError("config lists no models or baselines");

  rc.source = j;
  rc.source["seed"] = rc.seed;
  rc.source["jobs"] = rc.jobs;
  if (ov.max_epochs) rc.source["max_epochs_override"] = *ov.max_epochs;
  return rc;
}

inline RunConfig load_run_config(const fs::path& path, const RunOverrides& ov = {}) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j, path, ov);
}

inline GenotypeDataset load_run_dataset(const RunConfig& rc) {
  GenotypeDataset d = rc.dataset ? load_cache(*rc.dataset) : load_text(*rc.raw, *rc.panel, rc.regions);
  if (!d.labeled()) throw ConfigError("dataset carries no population labels");
  return d;
}

inline std::string slug(const std::string& name) {
  std::string s;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!s.empty() && s.back() != '_')
      s += '_';
  }
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s.empty() ? "model" : s;
}

// Fat-layer free parameters of the model as it would be built on `d`.
inline std::int64_t planned_fat_params(const ModelSpec& m, const GenotypeDataset& d,
                                       Index n_train) {
  if (m.kind == ModelKind::Pca) return -1;
  Rng rng(0);
  if (m.kind == ModelKind::Basic)
    return static_cast<std::int64_t>(
        DietNetwork::basic(d.n_snps(), d.n_classes(), m.config, rng).fat_param_count());
  Index dim = 0;
  switch (m.embedding.kind) {
    case EmbeddingKind::RandomProjection: dim = m.embedding.dim; break;
    case EmbeddingKind::ClassHistogram: dim = 3 * d.n_classes(); break;
    case EmbeddingKind::Snp2Vec: dim = m.embedding.dae.hidden_dim; break;
    case EmbeddingKind::OneHot: dim = d.n_snps(); break;
    case EmbeddingKind::Learnt: dim = n_train; break;
  }
  return static_cast<std::int64_t>(
      DietNetwork::diet(d.n_snps(), d.n_classes(), dim, m.embedding.kind == EmbeddingKind::Learnt,
                        m.config, rng)
          .fat_param_count());
}

inline void write_model_outputs(const fs::path& dir, const CvReport& r) {
  write_text(dir / "descriptor.txt", r.descriptor + "\n");
  {
    auto out = open_out(dir / "cv.csv");
    write_cv_csv(out, r);
  }
  {
    auto out = open_out(dir / "confusion_class.csv");
    write_confusion_csv(out, r.class_confusion, r.classes);
  }
  {
    auto out = open_out(dir / "confusion_class_normalized.csv");
    write_confusion_csv(out, row_normalize(r.class_confusion), r.classes);
  }
  {
    auto out = open_out(dir / "confusion_region.csv");
    write_confusion_csv(out, r.region_confusion, r.regions);
  }
  {
    auto out = open_out(dir / "confusion_region_normalized.csv");
    write_confusion_csv(out, row_normalize(r.region_confusion), r.regions);
  }
  {
    auto out = open_out(dir / "confusion.txt");
    out << "class level\n";
    write_confusion_text(out, r.class_confusion, r.classes);
    out << "\nregion level\n";
    write_confusion_text(out, r.region_confusion, r.regions);
  }
  {
    auto out = open_out(dir / "confusion_class.svg");
    write_confusion_svg(out, r.class_confusion, r.classes, r.descriptor + " (class)");
  }
  {
    auto out = open_out(dir / "confusion_region.svg");
    write_confusion_svg(out, r.region_confusion, r.regions, r.descriptor + " (region)");
  }
  for (const auto& f : r.folds) {
    const fs::path fd = dir / ("fold" + std::to_string(f.fold));
    {
      auto out = open_out(fd / "history.csv");
      write_history_csv(out, f.history);
    }
    {
      auto out = open_out(fd / "predictions.csv");
      out << "row,true,predicted\n";
      for (std::size_t i = 0; i < f.truth.size(); ++i)
        out << i << ',' << f.truth[i] << ',' << f.predicted[i] << '\n';
    }
    write_text(fd / "checkpoint.bin", f.checkpoint);
  }
}

struct RunResult {
  std::vector<std::string> names;
  std::vector<CvReport> reports;
  fs::path output_dir;
};

// Runs cross-validation for every configured model, writes per-model outputs
// and the summary table. With `dry_run` only the configuration is validated
// and the parameter column is printed.
inline RunResult cmd_run(const RunConfig& rc, bool dry_run, std::ostream& out, std::ostream& log) {
  const GenotypeDataset d = load_run_dataset(rc);
  const FoldSplit split = make_folds(d, rc.folds, rc.seed);
  if (split.unstratified_classes > 0)
    log << "warning: " << split.unstratified_classes
        << " class(es) smaller than the fold count were split unstratified\n";
  const Index n_train = static_cast<Index>(split.train(0).size());
  RunResult result;
  result.output_dir = rc.output_dir;
  if (dry_run) {
    out << "dataset: " << d.n_samples() << " samples, " << d.n_snps() << " SNPs, "
        << d.n_classes() << " classes\n";
    std::size_t w = 5;
    for (const auto& m : rc.models) w = std::max(w, m.name.size());
    out << "Model" << std::string(w - 5, ' ') << "  # of free parameters\n";
    for (const auto& m : rc.models)
      out << m.name << std::string(w - m.name.size(), ' ') << "  "
          << format_params(planned_fat_params(m, d, n_train)) << '\n';
    return result;
  }
  fs::create_directories(rc.output_dir);
  for (const auto& m : rc.models) {
    log << "running " << m.name << " (" << m.descriptor() << ")\n";
    CvOptions opt{rc.folds, rc.seed, rc.jobs};
    const fs::path dir = rc.output_dir / slug(m.name);
    try {
      CvReport r = run_cv(d, m, opt);
      write_model_outputs(dir, r);
      log << "  error " << format_fixed(100.0 * r.mean_error, 2) << " +- "
          << format_fixed(100.0 * r.std_error, 2) << " %\n";
      result.names.push_back(m.name);
      result.reports.push_back(std::move(r));
    } catch (const CvError& e) {
      write_model_outputs(dir, e.partial());
      throw Error("model " + m.name + " failed: " + e.what() + " (" +
                  std::to_string(e.partial().folds.size()) + " completed folds written to " +
                  dir.string() + ")");
    }
  }
  {
    auto f = open_out(rc.output_dir / "summary.csv");
    write_summary_csv(f, result.names, result.reports);
  }
  std::ostringstream table;
  write_summary_table(table, result.names, result.reports);
  write_text(rc.output_dir / "summary.txt", table.str());
  out << table.str();
  write_manifest(rc.output_dir / "manifest.json", "run", rc.source, rc.inputs());
  return result;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckOptions {
  Index n_d = 12;
  Index samples_per_class = 4;
  int classes = 3;
  std::vector<Index> hidden{6, 5};
  Index embedding_dim = 4;
  std::uint64_t seed = 3;
  double tolerance = 1e-4;
  double smooth_tolerance = 1e-7;
};

struct GradcheckCase {
  std::string variant;
  double gamma = 0.0;
  bool smooth = false;
  GradCheckReport report;
};

// Finite-difference check of the full model for every fat-layer variant and
// gamma in {0, 10}; "smooth" runs replace every rectifier with the identity so
// the loss is differentiable everywhere and the tighter tolerance applies.
inline std::vector<GradcheckCase> run_gradcheck(const GradcheckOptions& o) {
  Rng rng(o.seed);
  std::vector<std::vector<double>> freqs;
  for (int c = 0; c < o.classes; ++c) {
    std::vector<double> f(static_cast<std::size_t>(o.n_d));
    for (auto& v : f) v = 0.1 + 0.8 * uniform01(rng);
    freqs.push_back(std::move(f));
  }
  const GenotypeDataset d = synthesize(
      freqs, std::vector<std::size_t>(static_cast<std::size_t>(o.classes), o.samples_per_class),
      o.seed);
  const auto rows = all_rows(d.n_samples());
  const Matrix x = input_scale(d.genotypes);
  const std::vector<int>& y = d.labels;

  struct Variant {
    std::string name;
    std::optional<EmbeddingKind> kind;
  };
  const std::vector<Variant> variants{{"basic", std::nullopt},
                                      {"random_projection", EmbeddingKind::RandomProjection},
                                      {"class_histogram", EmbeddingKind::ClassHistogram},
                                      {"snp2vec", EmbeddingKind::Snp2Vec},
                                      {"one_hot", EmbeddingKind::OneHot},
                                      {"learnt", EmbeddingKind::Learnt}};
  std::vector<GradcheckCase> cases;
  for (bool smooth : {false, true})
    for (const auto& v : variants)
      for (double gamma : {0.0, 10.0}) {
        TrainConfig cfg;
        cfg.hidden = o.hidden;
        cfg.embed_hidden = o.embedding_dim;
        cfg.dropout = 0.0;
        cfg.reconstruction = true;
        cfg.gamma = gamma;
        cfg.seed = o.seed + static_cast<std::uint64_t>(cases.size());
        cfg.max_norm.reset();
        if (smooth) {
          cfg.hidden_activation = Activation::Identity;
          cfg.embed_activation = Activation::Identity;
        }
        std::optional<FeatureEmbedding> e;
        if (v.kind) {
          EmbeddingSpec es;
          es.kind = *v.kind;
          es.dim = o.embedding_dim;
          es.seed = o.seed;
          es.dae.hidden_dim = o.embedding_dim;
          es.dae.epochs = 3;
          e = build_embedding(es, d, rows, x);
        }
        DietNetwork model = make_model(d, e ? &*e : nullptr, cfg);
        const Matrix emb = e ? e->values : Matrix();
        Rng unused(0);
        auto loss = [&] {
          const auto t = model.forward_diet(x, emb, Mode::Eval, unused);
          return loss_diet(t.logits, y, t.reconstruction, x, gamma).total;
        };
        const auto t = model.forward_diet(x, emb, Mode::Eval, unused);
        const auto l = loss_diet(t.logits, y, t.reconstruction, x, gamma);
        const auto grads = model.backward_diet(t, l.grad_logits, l.grad_recon);
        GradcheckCase gc;
        gc.variant = v.name;
        gc.gamma = gamma;
        gc.smooth = smooth;
        gc.report = gradient_check(loss, model.params(), grads,
                                   smooth ? o.smooth_tolerance : o.tolerance);
        cases.push_back(std::move(gc));
      }
  return cases;
}

inline bool cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  out << "gradient check: n_d=" << o.n_d << " samples=" << o.samples_per_class * o.classes
      << " classes=" << o.classes << " hidden=";
  for (std::size_t i = 0; i < o.hidden.size(); ++i) out << (i ? "," : "") << o.hidden[i];
  out << " embedding_dim=" << o.embedding_dim << " seed=" << o.seed << '\n';
  bool ok = true;
  for (const auto& c : run_gradcheck(o)) {
    out << (c.report.passed ? "PASS" : "FAIL") << "  " << c.variant << " gamma="
        << format_double(c.gamma) << (c.smooth ? " smooth" : " rectifier")
        << "  max_rel_error=" << format_double(c.report.max_rel_error)
        << "  tol=" << format_double(c.report.tolerance) << '\n';
    ok = ok && c.report.passed;
  }
  out << (ok ? "all checks passed\n" : "gradient check FAILED\n");
  return ok;
}

// ---------------------------------------------------------------------------
// report

inline std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    if (!line.empty() && line.back() == ',') row.emplace_back();
    rows.push_back(std::move(row));
  }
  return rows;
}

inline CountMatrix read_confusion_csv(const fs::path& p, std::vector<std::string>& names) {
  const auto rows = read_csv(p);
  if (rows.empty()) throw Error(p.string() + " is empty");
  names.assign(rows[0].begin() + 1, rows[0].end());
  const auto n = static_cast<Index>(names.size());
  if (static_cast<Index>(rows.size()) != n + 1) throw Error(p.string() + " is not square");
  CountMatrix m(n, n);
  for (Index r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r + 1)];
    if (static_cast<Index>(row.size()) != n + 1) throw Error(p.string() + " is not square");
    for (Index c = 0; c < n; ++c) m(r, c) = std::stoll(row[static_cast<std::size_t>(c + 1)]);
  }
  return m;
}

// Re-renders the summary table and the confusion tables of a finished run.
inline void cmd_report(const fs::path& run_dir, bool confusion, std::ostream& out) {
  const auto rows = read_csv(run_dir / "summary.csv");
  if (rows.empty() || rows[0].size() != 5) throw Error("unexpected summary.csv layout");
  std::vector<std::string> names;
  std::vector<CvReport> reports;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 5) throw Error("unexpected summary.csv row " + std::to_string(i + 1));
    CvReport rep;
    rep.descriptor = r[1];
    rep.mean_error = std::stod(r[2]);
    rep.std_error = std::stod(r[3]);
    rep.fat_params = r[4].empty() ? -1 : std::stoll(r[4]);
    names.push_back(r[0]);
    reports.push_back(std::move(rep));
  }
  write_summary_table(out, names, reports);
  if (!confusion) return;
  for (const auto& name : names) {
    const fs::path dir = run_dir / slug(name);
    std::vector<std::string> classes, regions;
    const CountMatrix cm = read_confusion_csv(dir / "confusion_class.csv", classes);
    const CountMatrix rm = read_confusion_csv(dir / "confusion_region.csv", regions);
    out << '\n' << name << ": class level\n";
    write_confusion_text(out, cm, classes);
    out << '\n' << name << ": region level\n";
    write_confusion_text(out, rm, regions);
  }
}

}  // namespace dietnet::pipeline
