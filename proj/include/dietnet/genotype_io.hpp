#pragma once

// Genotype matrices with population labels: PLINK additive (.raw) text,
// 1000 Genomes style panels, MAF / LD filters, synthetic populations and
// stratified k-fold splits.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dietnet/common.hpp"

namespace dietnet {

inline constexpr std::int8_t kMissingGenotype = -1;

using GenotypeMatrix =
    Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct GenotypeDataset {
  GenotypeMatrix genotypes;  // samples x SNPs, {0,1,2} or kMissingGenotype
  std::vector<std::string> family_ids;
  std::vector<std::string> individual_ids;
  std::vector<std::string> snp_ids;

  // Empty when unlabeled.
  std::vector<int> labels;
  std::vector<std::string> classes;
  std::vector<int> region_of_class;
  std::vector<std::string> regions;

  Index n_samples() const { return genotypes.rows(); }
  Index n_snps() const { return genotypes.cols(); }
  int n_classes() const { return static_cast<int>(classes.size()); }
  int n_regions() const { return static_cast<int>(regions.size()); }
  bool labeled() const { return !labels.empty(); }

  std::string sample_id(Index i) const {
    const auto k = static_cast<std::size_t>(i);
    return family_ids[k] + "_" + individual_ids[k];
  }

  std::vector<std::string> sample_ids() const {
    std::vector<std::string> ids;
    ids.reserve(family_ids.size());
    for (Index i = 0; i < n_samples(); ++i) ids.push_back(sample_id(i));
    return ids;
  }

  void validate() const {
    const auto n = static_cast<std::size_t>(n_samples());
    if (family_ids.size() != n || individual_ids.size() != n)
      throw DimensionError("sample id count does not match genotype rows");
    if (snp_ids.size() != static_cast<std::size_t>(n_snps()))
      throw DimensionError("SNP id count does not match genotype columns");
    for (Index i = 0; i < genotypes.rows(); ++i)
      for (Index j = 0; j < genotypes.cols(); ++j) {
        const auto g = genotypes(i, j);
        if (g != kMissingGenotype && (g < 0 || g > 2))
          throw Error("genotype outside {0,1,2} at sample " + std::to_string(i));
      }
    std::unordered_set<std::string> seen;
    for (Index i = 0; i < n_samples(); ++i)
      if (!seen.insert(sample_id(i)).second)
        throw Error("duplicate sample id " + sample_id(i));
    seen.clear();
    for (const auto& s : snp_ids)
      if (!seen.insert(s).second) throw Error("duplicate SNP id " + s);
    if (!labeled()) return;
    if (labels.size() != n) throw DimensionError("label count does not match samples");
    for (int y : labels)
      if (y < 0 || y >= n_classes()) throw Error("label out of range");
    if (region_of_class.size() != classes.size())
      throw DimensionError("every class needs exactly one region");
    for (int r : region_of_class)
      if (r < 0 || r >= n_regions()) throw Error("region index out of range");
  }

  friend bool operator==(const GenotypeDataset& a, const GenotypeDataset& b) {
    return a.genotypes.rows() == b.genotypes.rows() &&
           a.genotypes.cols() == b.genotypes.cols() && a.genotypes == b.genotypes &&
           a.family_ids == b.family_ids && a.individual_ids == b.individual_ids &&
           a.snp_ids == b.snp_ids && a.labels == b.labels && a.classes == b.classes &&
           a.region_of_class == b.region_of_class && a.regions == b.regions;
  }
};

inline GenotypeDataset select_snps(const GenotypeDataset& d, std::span<const Index> cols) {
  GenotypeDataset out = d;
  out.genotypes.resize(d.n_samples(), static_cast<Index>(cols.size()));
  out.snp_ids.clear();
  for (std::size_t k = 0; k < cols.size(); ++k) {
    out.genotypes.col(static_cast<Index>(k)) = d.genotypes.col(cols[k]);
    out.snp_ids.push_back(d.snp_ids[static_cast<std::size_t>(cols[k])]);
  }
  return out;
}

inline GenotypeDataset select_samples(const GenotypeDataset& d, std::span<const Index> rows) {
  GenotypeDataset out = d;
  out.genotypes.resize(static_cast<Index>(rows.size()), d.n_snps());
  out.family_ids.clear();
  out.individual_ids.clear();
  out.labels.clear();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = static_cast<std::size_t>(rows[k]);
    out.genotypes.row(static_cast<Index>(k)) = d.genotypes.row(rows[k]);
    out.family_ids.push_back(d.family_ids[r]);
    out.individual_ids.push_back(d.individual_ids[r]);
    if (d.labeled()) out.labels.push_back(d.labels[r]);
  }
  return out;
}

namespace detail {

struct Token {
  std::string text;
  std::size_t column;  // 1-based field number
};

inline std::vector<Token> tokenize(const std::string& line) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = line.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= n) break;
    std::size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    out.push_back({line.substr(i, j - i), out.size() + 1});
    i = j;
  }
  return out;
}

inline bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace detail

// PLINK `--recode A` export: header `FID IID PAT MAT SEX PHENOTYPE snp...`,
// one whitespace-delimited row per sample, NA for missing.
inline GenotypeDataset parse_raw(std::istream& in) {
  static const std::array<const char*, 6> kFixed = {"FID", "IID", "PAT",
                                                    "MAT", "SEX", "PHENOTYPE"};
  GenotypeDataset d;
  std::string line;
  std::size_t line_no = 0;
  std::vector<detail::Token> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::blank(line)) {
      header = detail::tokenize(line);
      break;
    }
  }
  if (header.empty()) throw ParseError("missing header row", line_no, 0);
  if (header.size() < kFixed.size())
    throw ParseError("header has fewer than 6 fixed columns", line_no, header.size());
  for (std::size_t c = 0; c < kFixed.size(); ++c)
    if (header[c].text != kFixed[c])
      throw ParseError("expected header column " + std::string(kFixed[c]) + ", found " +
                           header[c].text,
                       line_no, c + 1);
  {
    std::unordered_set<std::string> seen;
    for (std::size_t c = kFixed.size(); c < header.size(); ++c) {
      if (!seen.insert(header[c].text).second)
        throw ParseError("duplicate SNP id " + header[c].text, line_no, c + 1);
      d.snp_ids.push_back(header[c].text);
    }
  }
  const std::size_t n_snps = d.snp_ids.size();
  std::vector<std::int8_t> values;
  std::unordered_set<std::string> seen_samples;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    const auto row = detail::tokenize(line);
    if (row.size() != header.size())
      throw ParseError("row has " + std::to_string(row.size()) + " columns, header has " +
                           std::to_string(header.size()),
                       line_no, std::min(row.size(), header.size()) + 1);
    std::string id = row[0].text + "_" + row[1].text;
    if (!seen_samples.insert(id).second)
      throw ParseError("duplicate sample id " + id, line_no, 1);
    d.family_ids.push_back(row[0].text);
    d.individual_ids.push_back(row[1].text);
    for (std::size_t c = kFixed.size(); c < row.size(); ++c) {
      const auto& t = row[c].text;
      if (t == "NA") {
        values.push_back(kMissingGenotype);
      } else if (t.size() == 1 && t[0] >= '0' && t[0] <= '2') {
        values.push_back(static_cast<std::int8_t>(t[0] - '0'));
      } else {
        throw ParseError("genotype token '" + t + "' not in {0,1,2,NA}", line_no, c + 1);
      }
    }
  }
  const auto n = static_cast<Index>(d.family_ids.size());
  d.genotypes = Eigen::Map<GenotypeMatrix>(values.data(), n, static_cast<Index>(n_snps));
  return d;
}

inline void write_raw(std::ostream& out, const GenotypeDataset& d) {
  out << "FID IID PAT MAT SEX PHENOTYPE";
  for (const auto& s : d.snp_ids) out << ' ' << s;
  out << '\n';
  for (Index i = 0; i < d.n_samples(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out << d.family_ids[k] << ' ' << d.individual_ids[k] << " 0 0 0 -9";
    for (Index j = 0; j < d.n_snps(); ++j) {
      const auto g = d.genotypes(i, j);
      out << ' ';
      if (g == kMissingGenotype)
        out << "NA";
      else
        out << static_cast<int>(g);
    }
    out << '\n';
  }
}

// CSV export for interop: sample_id[,population],snp...; missing left empty.
inline void write_genotype_csv(std::ostream& out, const GenotypeDataset& d) {
  out << "sample_id";
  if (d.labeled()) out << ",population";
  for (const auto& s : d.snp_ids) out << ',' << s;
  out << '\n';
  for (Index i = 0; i < d.n_samples(); ++i) {
    out << d.sample_id(i);
    if (d.labeled()) out << ',' << d.classes[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)])];
    for (Index j = 0; j < d.n_snps(); ++j) {
      out << ',';
      if (d.genotypes(i, j) != kMissingGenotype) out << static_cast<int>(d.genotypes(i, j));
    }
    out << '\n';
  }
}

using RegionTable = std::map<std::string, std::string>;

// 1000 Genomes population codes and their continental groups.
inline const RegionTable& thousand_genomes_regions() {
  static const RegionTable table = {
      {"ACB", "AFR"}, {"ASW", "AFR"}, {"ESN", "AFR"}, {"GWD", "AFR"}, {"LWK", "AFR"},
      {"MSL", "AFR"}, {"YRI", "AFR"}, {"CLM", "AMR"}, {"MXL", "AMR"}, {"PEL", "AMR"},
      {"PUR", "AMR"}, {"CDX", "EAS"}, {"CHB", "EAS"}, {"CHS", "EAS"}, {"JPT", "EAS"},
      {"KHV", "EAS"}, {"CEU", "EUR"}, {"FIN", "EUR"}, {"GBR", "EUR"}, {"IBS", "EUR"},
      {"TSI", "EUR"}, {"BEB", "SAS"}, {"GIH", "SAS"}, {"ITU", "SAS"}, {"PJL", "SAS"},
      {"STU", "SAS"}};
  return table;
}

// Panel rows: `sample population [region ...]`. A first row starting with
// "sample" (any case) is a header. Samples are matched on FID_IID first, then
// on IID alone. Without a region column the supplied table is used, or the
// built-in 1000 Genomes table when none is given.
inline GenotypeDataset parse_panel(std::istream& in, const GenotypeDataset& dataset,
                                   const RegionTable* region_table = nullptr) {
  struct Entry {
    std::string population;
    std::optional<std::string> region;
  };
  std::unordered_map<std::string, Entry> panel;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    auto row = detail::tokenize(line);
    if (first) {
      first = false;
      std::string head = row[0].text;
      std::transform(head.begin(), head.end(), head.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (head == "sample") continue;
    }
    if (row.size() < 2) throw ParseError("panel row needs sample and population", line_no, 2);
    Entry e{row[1].text, std::nullopt};
    if (row.size() >= 3) e.region = row[2].text;
    if (!panel.emplace(row[0].text, e).second)
      throw ParseError("duplicate panel sample " + row[0].text, line_no, 1);
  }

  const RegionTable& table = region_table ? *region_table : thousand_genomes_regions();
  std::vector<std::string> pops(static_cast<std::size_t>(dataset.n_samples()));
  std::map<std::string, std::string> region_of_pop;
  for (Index i = 0; i < dataset.n_samples(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    auto it = panel.find(dataset.sample_id(i));
    if (it == panel.end()) it = panel.find(dataset.individual_ids[k]);
    if (it == panel.end()) throw Error("sample " + dataset.sample_id(i) + " missing from panel");
    const Entry& e = it->second;
    std::string region;
    if (e.region) {
      region = *e.region;
    } else {
      auto r = table.find(e.population);
      if (r == table.end())
        throw Error("population " + e.population + " absent from region table");
      region = r->second;
    }
    auto [pos, inserted] = region_of_pop.emplace(e.population, region);
    if (!inserted && pos->second != region)
      throw Error("population " + e.population + " assigned to two regions");
    pops[k] = e.population;
  }

  GenotypeDataset out = dataset;
  out.classes.clear();
  out.regions.clear();
  out.region_of_class.clear();
  out.labels.clear();
  std::set<std::string> region_set;
  for (const auto& [pop, region] : region_of_pop) {
    out.classes.push_back(pop);
    region_set.insert(region);
  }
  out.regions.assign(region_set.begin(), region_set.end());
  for (const auto& pop : out.classes) {
    const auto& region = region_of_pop.at(pop);
    out.region_of_class.push_back(static_cast<int>(
        std::lower_bound(out.regions.begin(), out.regions.end(), region) - out.regions.begin()));
  }
  for (const auto& pop : pops)
    out.labels.push_back(static_cast<int>(
        std::lower_bound(out.classes.begin(), out.classes.end(), pop) - out.classes.begin()));
  return out;
}

inline void write_panel(std::ostream& out, const GenotypeDataset& d) {
  out << "sample pop super_pop\n";
  for (Index i = 0; i < d.n_samples(); ++i) {
    const int y = d.labels[static_cast<std::size_t>(i)];
    out << d.sample_id(i) << ' ' << d.classes[static_cast<std::size_t>(y)] << ' '
        << d.regions[static_cast<std::size_t>(d.region_of_class[static_cast<std::size_t>(y)])]
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Filters

struct MafReport {
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::size_t all_missing = 0;  // also counted in `dropped`
};

// Alternate-allele frequency over non-missing entries, nullopt if none.
inline std::optional<double> allele_frequency(const GenotypeDataset& d, Index snp) {
  double sum = 0.0;
  Index present = 0;
  for (Index i = 0; i < d.n_samples(); ++i) {
    const auto g = d.genotypes(i, snp);
    if (g == kMissingGenotype) continue;
    sum += g;
    ++present;
  }
  if (present == 0) return std::nullopt;
  return sum / (2.0 * static_cast<double>(present));
}

inline GenotypeDataset filter_maf(const GenotypeDataset& d, double threshold,
                                  MafReport* report = nullptr) {
  if (!(threshold >= 0.0 && threshold <= 0.5))
    throw Error("MAF threshold must lie in [0, 0.5]");
  MafReport r;
  std::vector<Index> keep;
  for (Index j = 0; j < d.n_snps(); ++j) {
    const auto p = allele_frequency(d, j);
    if (!p) {
      ++r.all_missing;
      ++r.dropped;
      continue;
    }
    if (std::min(*p, 1.0 - *p) >= threshold) {
      keep.push_back(j);
      ++r.kept;
    } else {
      ++r.dropped;
    }
  }
  if (report) *report = r;
  return select_snps(d, keep);
}

// Squared Pearson correlation over samples where both SNPs are observed.
// Zero variance on either side yields 0.
inline double genotype_r2(const GenotypeDataset& d, Index a, Index b) {
  double n = 0, sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (Index i = 0; i < d.n_samples(); ++i) {
    const auto ga = d.genotypes(i, a);
    const auto gb = d.genotypes(i, b);
    if (ga == kMissingGenotype || gb == kMissingGenotype) continue;
    n += 1;
    sa += ga;
    sb += gb;
    saa += ga * ga;
    sbb += gb * gb;
    sab += ga * gb;
  }
  if (n < 2) return 0.0;
  const double va = saa - sa * sa / n;
  const double vb = sbb - sb * sb / n;
  if (va <= 1e-12 || vb <= 1e-12) return 0.0;
  const double cov = sab - sa * sb / n;
  return cov * cov / (va * vb);
}

struct LdReport {
  std::size_t removed = 0;
  std::size_t zero_variance = 0;
  std::size_t passes = 0;
};

// Windowed greedy pruning: slide a window of `window` SNPs by `step`; for each
// pair (i < j) of survivors in the window with r2 > r2_max drop j. Passes repeat
// over the survivors until none is removed, so the output is a fixed point.
inline GenotypeDataset prune_ld(const GenotypeDataset& d, std::size_t window, std::size_t step,
                                double r2_max, LdReport* report = nullptr) {
  if (window < 2) throw Error("LD window must be at least 2");
  if (step < 1 || step > window) throw Error("LD step must lie in [1, window]");
  if (!(r2_max > 0.0 && r2_max <= 1.0)) throw Error("r2 threshold must lie in (0, 1]");

  LdReport r;
  for (Index j = 0; j < d.n_snps(); ++j) {
    Index lo = 2, hi = -1;
    for (Index i = 0; i < d.n_samples(); ++i) {
      const auto g = d.genotypes(i, j);
      if (g == kMissingGenotype) continue;
      lo = std::min<Index>(lo, g);
      hi = std::max<Index>(hi, g);
    }
    if (hi <= lo) ++r.zero_variance;
  }

  std::vector<Index> alive(static_cast<std::size_t>(d.n_snps()));
  std::iota(alive.begin(), alive.end(), Index{0});
  for (;;) {
    ++r.passes;
    const std::size_t n = alive.size();
    std::vector<bool> removed(n, false);
    bool any = false;
    for (std::size_t start = 0; start < n; start += step) {
      const std::size_t end = std::min(start + window, n);
      for (std::size_t i = start; i < end; ++i) {
        if (removed[i]) continue;
        for (std::size_t j = i + 1; j < end; ++j) {
          if (removed[j]) continue;
          if (genotype_r2(d, alive[i], alive[j]) > r2_max) {
            removed[j] = true;
            any = true;
          }
        }
      }
      if (end == n) break;
    }
    if (!any) break;
    std::vector<Index> next;
    for (std::size_t i = 0; i < n; ++i)
      if (!removed[i]) next.push_back(alive[i]);
    r.removed += n - next.size();
    alive = std::move(next);
  }
  if (report) *report = r;
  return select_snps(d, alive);
}

// ---------------------------------------------------------------------------
// Synthetic populations

struct PopulationModel {
  std::string name;
  std::string region;  // defaults to the population name
  std::vector<double> frequencies;
  std::size_t samples = 0;
};

// Genotypes drawn as Binomial(2, f) per (sample, SNP); labels follow the order
// of `populations`.
inline GenotypeDataset synthesize(std::span<const PopulationModel> populations,
                                  std::uint64_t seed) {
  if (populations.empty()) throw Error("synthesize needs at least one population");
  const std::size_t n_snps = populations.front().frequencies.size();
  std::size_t n = 0;
  for (const auto& p : populations) {
    if (p.frequencies.size() != n_snps)
      throw DimensionError("population " + p.name + " has a frequency vector of length " +
                           std::to_string(p.frequencies.size()) + ", expected " +
                           std::to_string(n_snps));
    for (double f : p.frequencies)
      if (!(f >= 0.0 && f <= 1.0)) throw Error("allele frequency outside [0, 1]");
    n += p.samples;
  }

  GenotypeDataset d;
  d.genotypes.resize(static_cast<Index>(n), static_cast<Index>(n_snps));
  for (std::size_t j = 0; j < n_snps; ++j) d.snp_ids.push_back("snp" + std::to_string(j + 1));
  Rng rng(seed);
  Index row = 0;
  for (std::size_t c = 0; c < populations.size(); ++c) {
    const auto& p = populations[c];
    const std::string name = p.name.empty() ? "POP" + std::to_string(c) : p.name;
    const std::string region = p.region.empty() ? name : p.region;
    d.classes.push_back(name);
    auto it = std::find(d.regions.begin(), d.regions.end(), region);
    if (it == d.regions.end()) {
      d.regions.push_back(region);
      it = d.regions.end() - 1;
    }
    d.region_of_class.push_back(static_cast<int>(it - d.regions.begin()));
    for (std::size_t s = 0; s < p.samples; ++s, ++row) {
      d.family_ids.push_back(name);
      d.individual_ids.push_back(std::to_string(s + 1));
      d.labels.push_back(static_cast<int>(c));
      for (std::size_t j = 0; j < n_snps; ++j) {
        const double f = p.frequencies[j];
        const int g = (uniform01(rng) < f) + (uniform01(rng) < f);
        d.genotypes(row, static_cast<Index>(j)) = static_cast<std::int8_t>(g);
      }
    }
  }
  return d;
}

inline GenotypeDataset synthesize(const std::vector<std::vector<double>>& frequencies,
                                  const std::vector<std::size_t>& samples_per_pop,
                                  std::uint64_t seed) {
  if (frequencies.size() != samples_per_pop.size())
    throw DimensionError("one sample count per population expected");
  std::vector<PopulationModel> pops;
  for (std::size_t c = 0; c < frequencies.size(); ++c)
    pops.push_back({"POP" + std::to_string(c), "", frequencies[c], samples_per_pop[c]});
  return synthesize(pops, seed);
}

// Population c carries `high` on the c-th contiguous block of SNPs and `low`
// elsewhere.
inline std::vector<std::vector<double>> block_frequencies(std::size_t n_pops,
                                                          std::size_t n_snps, double high,
                                                          double low) {
  std::vector<std::vector<double>> f(n_pops, std::vector<double>(n_snps, low));
  for (std::size_t j = 0; j < n_snps; ++j) f[j * n_pops / n_snps][j] = high;
  return f;
}

// Ancestral frequency ~ U(0.1, 0.9) per SNP, each population drifting by a
// Gaussian of standard deviation `drift`, clamped to [0.01, 0.99].
inline std::vector<std::vector<double>> drifted_frequencies(std::size_t n_pops,
                                                            std::size_t n_snps, double drift,
                                                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> ancestral(n_snps);
  for (auto& a : ancestral) a = 0.1 + 0.8 * uniform01(rng);
  std::vector<std::vector<double>> f(n_pops, std::vector<double>(n_snps));
  for (auto& pop : f)
    for (std::size_t j = 0; j < n_snps; ++j)
      pop[j] = std::clamp(ancestral[j] + drift * standard_normal(rng), 0.01, 0.99);
  return f;
}

// ---------------------------------------------------------------------------
// Folds

struct FoldSplit {
  int k = 0;
  std::vector<int> fold_of;  // per sample
  std::size_t unstratified_classes = 0;

  std::vector<Index> fold(int f) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == f) out.push_back(static_cast<Index>(i));
    return out;
  }
  int validation_fold(int test) const { return (test + 1) % k; }
  std::vector<Index> test(int t) const { return fold(t); }
  std::vector<Index> validation(int t) const { return fold(validation_fold(t)); }
  std::vector<Index> train(int t) const {
    std::vector<Index> out;
    const int v = validation_fold(t);
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != t && fold_of[i] != v) out.push_back(static_cast<Index>(i));
    return out;
  }
};

// Members of each class are shuffled and laid out class by class (classes too
// small to stratify go last, pooled), then dealt round-robin into k folds.
inline FoldSplit make_folds(const GenotypeDataset& d, int k, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(d.n_samples());
  if (k < 2) throw Error("need at least 2 folds");
  if (n < static_cast<std::size_t>(k)) throw Error("fewer samples than folds");
  Rng rng(seed);
  const int n_classes = d.labeled() ? d.n_classes() : 1;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < n; ++i)
    members[d.labeled() ? static_cast<std::size_t>(d.labels[i]) : 0].push_back(i);

  FoldSplit split;
  split.k = k;
  split.fold_of.assign(n, -1);
  std::vector<std::size_t> order;
  std::vector<std::size_t> pooled;
  for (auto& m : members) {
    shuffle(m, rng);
    if (m.empty()) continue;
    if (m.size() < static_cast<std::size_t>(k)) {
      ++split.unstratified_classes;
      pooled.insert(pooled.end(), m.begin(), m.end());
    } else {
      order.insert(order.end(), m.begin(), m.end());
    }
  }
  shuffle(pooled, rng);
  order.insert(order.end(), pooled.begin(), pooled.end());
  // Random fold labelling so fold 0 is not always the one that gets extras.
  std::vector<int> relabel(static_cast<std::size_t>(k));
  std::iota(relabel.begin(), relabel.end(), 0);
  shuffle(relabel, rng);
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    split.fold_of[order[pos]] = relabel[pos % static_cast<std::size_t>(k)];
  return split;
}

// ---------------------------------------------------------------------------
// Binary cache: "DNGT" magic, format version, ids, labels, row-major bytes.

inline constexpr std::uint32_t kGenotypeCacheVersion = 1;

inline void write_cache(std::ostream& out, const GenotypeDataset& d) {
  out.write("DNGT", 4);
  binio::write<std::uint32_t>(out, kGenotypeCacheVersion);
  binio::write<std::uint64_t>(out, static_cast<std::uint64_t>(d.n_samples()));
  binio::write<std::uint64_t>(out, static_cast<std::uint64_t>(d.n_snps()));
  for (Index i = 0; i < d.n_samples(); ++i) {
    binio::write_string(out, d.family_ids[static_cast<std::size_t>(i)]);
    binio::write_string(out, d.individual_ids[static_cast<std::size_t>(i)]);
  }
  for (const auto& s : d.snp_ids) binio::write_string(out, s);
  binio::write<std::uint64_t>(out, d.classes.size());
  for (std::size_t c = 0; c < d.classes.size(); ++c) {
    binio::write_string(out, d.classes[c]);
    binio::write<std::int32_t>(out, d.region_of_class[c]);
  }
  binio::write<std::uint64_t>(out, d.regions.size());
  for (const auto& r : d.regions) binio::write_string(out, r);
  binio::write<std::uint8_t>(out, d.labeled() ? 1 : 0);
  for (int y : d.labels) binio::write<std::int32_t>(out, y);
  out.write(reinterpret_cast<const char*>(d.genotypes.data()),
            static_cast<std::streamsize>(d.genotypes.size()));
  if (!out) throw Error("failed writing genotype cache");
}

inline GenotypeDataset read_cache(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "DNGT") throw Error("not a genotype cache");
  const auto version = binio::read<std::uint32_t>(in);
  if (version != kGenotypeCacheVersion)
    throw Error("unsupported genotype cache version " + std::to_string(version));
  GenotypeDataset d;
  const auto n = binio::read<std::uint64_t>(in);
  const auto m = binio::read<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    d.family_ids.push_back(binio::read_string(in));
    d.individual_ids.push_back(binio::read_string(in));
  }
  for (std::uint64_t j = 0; j < m; ++j) d.snp_ids.push_back(binio::read_string(in));
  const auto n_classes = binio::read<std::uint64_t>(in);
  for (std::uint64_t c = 0; c < n_classes; ++c) {
    d.classes.push_back(binio::read_string(in));
    d.region_of_class.push_back(binio::read<std::int32_t>(in));
  }
  const auto n_regions = binio::read<std::uint64_t>(in);
  for (std::uint64_t r = 0; r < n_regions; ++r) d.regions.push_back(binio::read_string(in));
  if (binio::read<std::uint8_t>(in))
    for (std::uint64_t i = 0; i < n; ++i) d.labels.push_back(binio::read<std::int32_t>(in));
  d.genotypes.resize(static_cast<Index>(n), static_cast<Index>(m));
  in.read(reinterpret_cast<char*>(d.genotypes.data()),
          static_cast<std::streamsize>(d.genotypes.size()));
  if (!in) throw Error("genotype cache truncated");
  d.validate();
  return d;
}

// Hash of the sample ids of a row subset, in the given order. Embeddings carry
// it so a model can verify they were built from its own training split.
inline std::uint64_t split_fingerprint(const GenotypeDataset& d, std::span<const Index> rows) {
  Fnv1a h;
  for (Index r : rows) h.update(d.sample_id(r));
  return h.digest();
}

}  // namespace dietnet
