#pragma once

// Cross-validation, confusion matrices and fat-layer parameter accounting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dietnet/baselines.hpp"
#include "dietnet/common.hpp"
#include "dietnet/diet_model.hpp"
#include "dietnet/embedding.hpp"
#include "dietnet/genotype_io.hpp"

namespace dietnet {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Entry (true, predicted).
inline CountMatrix confusion(std::span<const int> predicted, std::span<const int> truth,
                             int n_classes) {
  if (predicted.size() != truth.size()) throw DimensionError("prediction/label count mismatch");
  CountMatrix m = CountMatrix::Zero(n_classes, n_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes)
      throw Error("class index out of range in confusion()");
    ++m(t, p);
  }
  return m;
}

inline CountMatrix region_confusion(const CountMatrix& classes, std::span<const int> region_of_class,
                                    int n_regions) {
  if (static_cast<std::size_t>(classes.rows()) != region_of_class.size())
    throw DimensionError("one region per class expected");
  CountMatrix m = CountMatrix::Zero(n_regions, n_regions);
  for (Index t = 0; t < classes.rows(); ++t)
    for (Index p = 0; p < classes.cols(); ++p)
      m(region_of_class[static_cast<std::size_t>(t)], region_of_class[static_cast<std::size_t>(p)]) +=
          classes(t, p);
  return m;
}

inline Matrix row_normalize(const CountMatrix& m) {
  Matrix out = Matrix::Zero(m.rows(), m.cols());
  for (Index r = 0; r < m.rows(); ++r) {
    const auto total = m.row(r).sum();
    if (total > 0) out.row(r) = m.row(r).cast<double>() / static_cast<double>(total);
  }
  return out;
}

inline double accuracy(const CountMatrix& m) {
  const auto total = m.sum();
  return total > 0 ? static_cast<double>(m.trace()) / static_cast<double>(total) : 0.0;
}

// ---------------------------------------------------------------------------
// Parameter accounting for the fat layers

enum class FatVariant { Basic, DietFixed, RawEndToEnd };

struct FatLayerSpec {
  FatVariant variant = FatVariant::Basic;
  std::int64_t n_d = 0;
  std::int64_t n_train = 0;  // RawEndToEnd: input width of the shared embedding layer
  std::int64_t n_f = 0;      // embedding width seen by each prediction net
  std::int64_t n_h = 100;
  bool reconstruction = false;
  bool aux_bias = true;
};

inline std::int64_t count_free_params(const FatLayerSpec& s) {
  const std::int64_t heads = s.reconstruction ? 2 : 1;
  const std::int64_t head = s.n_f * s.n_h + (s.aux_bias ? s.n_h : 0);
  switch (s.variant) {
    case FatVariant::Basic:
      return heads * s.n_d * s.n_h;
    case FatVariant::DietFixed:
      return heads * head;
    case FatVariant::RawEndToEnd:
      return (s.n_train * s.n_f + s.n_f) + heads * head;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Cross-validation

enum class ModelKind { Basic, Diet, Pca };

struct ModelSpec {
  std::string name;
  ModelKind kind = ModelKind::Diet;
  EmbeddingSpec embedding;  // Diet only
  Index pcs = 10;           // Pca only
  HeadSpec head;            // Pca only
  TrainConfig config;

  std::string descriptor() const {
    std::ostringstream os;
    switch (kind) {
      case ModelKind::Basic:
        os << "basic";
        break;
      case ModelKind::Diet:
        os << "diet/" << to_string(embedding.kind);
        break;
      case ModelKind::Pca:
        os << "pca" << pcs << '/';
        if (head.linear()) {
          os << "linear";
        } else {
          os << "mlp";
          for (Index h : head.hidden) os << '-' << h;
        }
        break;
    }
    if (kind != ModelKind::Pca) os << "/gamma=" << format_double(config.gamma);
    return os.str();
  }
};

// What the basic net or diet net spends on its fat layers for a dataset of
// these dimensions; nullopt for PCA baselines.
inline std::optional<std::int64_t> fat_params_for(const ModelSpec& m, Index n_d, int n_classes,
                                                  Index n_train) {
  FatLayerSpec s;
  s.n_d = n_d;
  s.n_h = m.config.hidden.front();
  s.reconstruction = m.config.reconstruction;
  s.aux_bias = m.config.aux_bias;
  switch (m.kind) {
    case ModelKind::Pca:
      return std::nullopt;
    case ModelKind::Basic:
      s.variant = FatVariant::Basic;
      if (m.config.reconstruction && m.config.hidden.back() != m.config.hidden.front())
        return n_d * (m.config.hidden.front() + m.config.hidden.back());
      return count_free_params(s);
    case ModelKind::Diet:
      break;
  }
  if (!m.config.aux_hidden.empty() || m.config.hidden.back() != m.config.hidden.front())
    return std::nullopt;  // not expressible in the closed form; use the model count
  switch (m.embedding.kind) {
    case EmbeddingKind::RandomProjection:
    case EmbeddingKind::Snp2Vec:
      s.variant = FatVariant::DietFixed;
      s.n_f = m.embedding.kind == EmbeddingKind::Snp2Vec ? m.embedding.dae.hidden_dim
                                                         : m.embedding.dim;
      break;
    case EmbeddingKind::ClassHistogram:
      s.variant = FatVariant::DietFixed;
      s.n_f = 3 * n_classes;
      break;
    case EmbeddingKind::OneHot:
      s.variant = FatVariant::DietFixed;
      s.n_f = n_d;
      break;
    case EmbeddingKind::Learnt:
      s.variant = FatVariant::RawEndToEnd;
      s.n_train = n_train;
      s.n_f = m.config.embed_hidden;
      break;
  }
  return count_free_params(s);
}

struct FoldOutcome {
  int fold = 0;
  std::vector<int> predicted;
  std::vector<int> truth;
  double error = 0.0;
  TrainHistory history;
  std::int64_t fat_params = -1;  // -1: not applicable
  std::string checkpoint;        // serialized parameters
};

struct CvReport {
  std::string descriptor;
  std::vector<FoldOutcome> folds;
  std::vector<double> fold_errors;
  double mean_error = 0.0;
  double std_error = 0.0;
  CountMatrix class_confusion;
  CountMatrix region_confusion;
  std::vector<std::string> classes;
  std::vector<std::string> regions;
  std::int64_t fat_params = -1;
};

inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Reduces per-fold outcomes (in fold order) into a report.
inline CvReport aggregate(const GenotypeDataset& d, std::string descriptor,
                          std::vector<FoldOutcome> folds) {
  CvReport r;
  r.descriptor = std::move(descriptor);
  r.classes = d.classes;
  r.regions = d.regions;
  r.class_confusion = CountMatrix::Zero(d.n_classes(), d.n_classes());
  for (const auto& f : folds) {
    r.fold_errors.push_back(f.error);
    r.class_confusion += confusion(f.predicted, f.truth, d.n_classes());
    r.fat_params = std::max(r.fat_params, f.fat_params);
  }
  if (!r.fold_errors.empty())
    r.mean_error = std::accumulate(r.fold_errors.begin(), r.fold_errors.end(), 0.0) /
                   static_cast<double>(r.fold_errors.size());
  r.std_error = sample_std(r.fold_errors);
  r.region_confusion = region_confusion(r.class_confusion, d.region_of_class, d.n_regions());
  r.folds = std::move(folds);
  return r;
}

class CvError : public Error {
 public:
  CvError(const std::string& what, CvReport partial)
      : Error(what), partial_(std::move(partial)) {}
  const CvReport& partial() const { return partial_; }

 private:
  CvReport partial_;
};

struct CvOptions {
  int k = 5;
  std::uint64_t split_seed = 1;
  int jobs = 1;
};

using FoldTrainer = std::function<FoldOutcome(const FoldData&)>;

// Runs `trainer` on every test fold, up to `jobs` at a time. Each fold owns its
// inputs and outputs, so results do not depend on the schedule.
inline CvReport run_cv(const GenotypeDataset& d, const std::string& descriptor,
                       const FoldTrainer& trainer, const CvOptions& opt) {
  d.validate();
  if (!d.labeled()) throw Error("cross-validation needs a labeled dataset");
  if (opt.k < 3) throw Error("cross-validation needs k >= 3");
  if (d.n_samples() < opt.k) throw Error("fewer samples than folds");
  const FoldSplit split = make_folds(d, opt.k, opt.split_seed);
  std::vector<std::optional<FoldOutcome>> results(static_cast<std::size_t>(opt.k));
  std::vector<std::string> errors(static_cast<std::size_t>(opt.k));
  std::mutex mu;
  int next = 0;
  auto worker = [&] {
    for (;;) {
      int t;
      {
        std::lock_guard lock(mu);
        if (next >= opt.k) return;
        t = next++;
      }
      try {
        const FoldData fold = prepare_fold(d, split, t);
        FoldOutcome o = trainer(fold);
        o.fold = t;
        o.truth = fold.y_test;
        o.error = error_rate(o.predicted, o.truth);
        results[static_cast<std::size_t>(t)] = std::move(o);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(t)] = e.what();
      }
    }
  };
  const int jobs = std::clamp(opt.jobs, 1, opt.k);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  std::vector<FoldOutcome> done;
  std::string failure;
  for (int t = 0; t < opt.k; ++t) {
    if (results[static_cast<std::size_t>(t)])
      done.push_back(std::move(*results[static_cast<std::size_t>(t)]));
    else if (failure.empty())
      failure = "fold " + std::to_string(t) + ": " + errors[static_cast<std::size_t>(t)];
  }
  CvReport report = aggregate(d, descriptor, std::move(done));
  if (!failure.empty()) throw CvError(failure, std::move(report));
  return report;
}

// Seeds derived per fold so that folds are independent of the schedule.
inline std::uint64_t fold_seed(std::uint64_t base, int fold) {
  Fnv1a h;
  h.update_value(base);
  h.update_value(static_cast<std::int64_t>(fold));
  return h.digest();
}

inline std::string serialize_params(std::span<const ParamBlock> params,
                                    const std::map<std::string, std::string>& header) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, params, header);
  return os.str();
}

inline FoldTrainer make_fold_trainer(const GenotypeDataset& d, const ModelSpec& spec) {
  return [&d, spec](const FoldData& fold) {
    TrainConfig cfg = spec.config;
    cfg.seed = fold_seed(spec.config.seed, fold.test_fold);
    const std::map<std::string, std::string> header{
        {"model", spec.descriptor()}, {"fold", std::to_string(fold.test_fold)}};
    FoldOutcome o;
    if (spec.kind == ModelKind::Pca) {
      const PcaModel pca = fit_pca(fold.x_train, spec.pcs);
      LayerStack net = train_pca_classifier(
          standardized_scores(pca, fold.x_train), fold.y_train,
          standardized_scores(pca, fold.x_valid), fold.y_valid, d.n_classes(), spec.head, cfg,
          &o.history);
      o.predicted = argmax_rows(predict(net, standardized_scores(pca, fold.x_test)));
      std::vector<ParamBlock> p;
      append_params(p, net, "head");
      o.checkpoint = serialize_params(p, header);
      return o;
    }
    std::optional<FeatureEmbedding> embedding;
    if (spec.kind == ModelKind::Diet) {
      EmbeddingSpec es = spec.embedding;
      es.seed = fold_seed(spec.embedding.seed, fold.test_fold);
      embedding = build_embedding(es, d, fold.train_rows, fold.x_train);
    }
    DietNetwork model = make_model(d, embedding ? &*embedding : nullptr, cfg);
    o.history = train_on_fold(model, d, fold, embedding ? &*embedding : nullptr, cfg);
    Rng unused(0);
    const Matrix e = embedding ? embedding->values : Matrix();
    o.predicted = argmax_rows(model.forward_diet(fold.x_test, e, Mode::Eval, unused).logits);
    o.fat_params = static_cast<std::int64_t>(model.fat_param_count());
    o.checkpoint = serialize_params(model.params(), header);
    return o;
  };
}

inline CvReport run_cv(const GenotypeDataset& d, const ModelSpec& spec, const CvOptions& opt) {
  return run_cv(d, spec.descriptor(), make_fold_trainer(d, spec), opt);
}

// ---------------------------------------------------------------------------
// Reports

inline void write_cv_csv(std::ostream& out, const CvReport& r) {
  out << "fold,n_test,error\n";
  for (const auto& f : r.folds)
    out << f.fold << ',' << f.truth.size() << ',' << format_double(f.error) << '\n';
  out << "mean,," << format_double(r.mean_error) << '\n';
  out << "std,," << format_double(r.std_error) << '\n';
}

inline void write_confusion_csv(std::ostream& out, const CountMatrix& m,
                                std::span<const std::string> names) {
  out << "true\\predicted";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    out << names[static_cast<std::size_t>(r)];
    for (Index c = 0; c < m.cols(); ++c) out << ',' << m(r, c);
    out << '\n';
  }
}

inline void write_confusion_csv(std::ostream& out, const Matrix& m,
                                std::span<const std::string> names) {
  out << "true\\predicted";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    out << names[static_cast<std::size_t>(r)];
    for (Index c = 0; c < m.cols(); ++c) out << ',' << format_double(m(r, c));
    out << '\n';
  }
}

namespace detail {

inline std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

}  // namespace detail

// Counts and row-normalized percentages side by side.
inline void write_confusion_text(std::ostream& out, const CountMatrix& m,
                                 std::span<const std::string> names) {
  std::size_t w = 6;
  for (const auto& n : names) w = std::max(w, n.size() + 1);
  const Matrix pct = row_normalize(m) * 100.0;
  for (int pass = 0; pass < 2; ++pass) {
    out << (pass == 0 ? "counts (rows: true, columns: predicted)\n"
                      : "row percentages\n");
    out << detail::pad("", w);
    for (const auto& n : names) out << detail::pad(n, w);
    out << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
      out << detail::pad(names[static_cast<std::size_t>(r)], w);
      for (Index c = 0; c < m.cols(); ++c)
        out << detail::pad(pass == 0 ? std::to_string(m(r, c)) : format_fixed(pct(r, c), 1), w);
      out << '\n';
    }
    if (pass == 0) out << '\n';
  }
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Heatmap of the row-normalized matrix.
inline void write_confusion_svg(std::ostream& out, const CountMatrix& m,
                                std::span<const std::string> names, const std::string& title) {
  const int cell = 28, margin = 90;
  const Index n = m.rows();
  const int size = margin + cell * static_cast<int>(n) + 10;
  const Matrix p = row_normalize(m);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\""
      << size + 20 << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  out << "<text x=\"" << margin << "\" y=\"14\" font-size=\"12\">" << xml_escape(title)
      << "</text>\n";
  for (Index r = 0; r < n; ++r) {
    const int y = margin + cell * static_cast<int>(r);
    out << "<text x=\"" << margin - 4 << "\" y=\"" << y + cell / 2 + 4
        << "\" text-anchor=\"end\">" << xml_escape(names[static_cast<std::size_t>(r)])
        << "</text>\n";
    const int x = margin + cell * static_cast<int>(r) + cell / 2;
    out << "<text x=\"" << x << "\" y=\"" << margin - 4 << "\" transform=\"rotate(-60 " << x
        << ' ' << margin - 4 << ")\">" << xml_escape(names[static_cast<std::size_t>(r)])
        << "</text>\n";
    for (Index c = 0; c < n; ++c) {
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - p(r, c))));
      out << "<rect x=\"" << margin + cell * static_cast<int>(c) << "\" y=\"" << y
          << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << ','
          << shade << ",255)\" stroke=\"#ccc\"><title>" << m(r, c) << "</title></rect>\n";
    }
  }
  out << "</svg>\n";
}

inline std::string format_params(std::int64_t n) {
  if (n < 0) return "-";
  if (n >= 1'000'000) return format_fixed(static_cast<double>(n) / 1e6, 1) + "M";
  if (n >= 1'000) return format_fixed(static_cast<double>(n) / 1e3, 1) + "k";
  return std::to_string(n);
}

// One line per model: name, mean error +- std (percent), fat-layer parameters.
inline void write_summary_table(std::ostream& out, std::span<const std::string> names,
                                std::span<const CvReport> reports) {
  std::size_t w = 5;
  for (const auto& n : names) w = std::max(w, n.size());
  out << std::string("Model") + std::string(w - 5, ' ') << "  " << "Mean misclassif. error (%)"
      << "  " << "# of free parameters\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    std::string err = format_fixed(100.0 * r.mean_error, 2) + " +- " +
                      format_fixed(100.0 * r.std_error, 2);
    out << names[i] << std::string(w - names[i].size(), ' ') << "  " << err
        << std::string(err.size() < 26 ? 26 - err.size() : 0, ' ') << "  "
        << format_params(r.fat_params) << '\n';
  }
}

inline void write_summary_csv(std::ostream& out, std::span<const std::string> names,
                              std::span<const CvReport> reports) {
  out << "model,descriptor,mean_error,std_error,fat_params\n";
  for (std::size_t i = 0; i < reports.size(); ++i)
    out << names[i] << ',' << reports[i].descriptor << ',' << format_double(reports[i].mean_error)
        << ',' << format_double(reports[i].std_error) << ','
        << (reports[i].fat_params < 0 ? std::string() : std::to_string(reports[i].fat_params))
        << '\n';
}

}  // namespace dietnet
