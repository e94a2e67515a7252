#pragma once

// Diet Networks: a discriminative MLP whose fat input layer W_e (N_d x N_h1)
// and optional fat reconstruction layer W_d (N_d x N_hlast) are produced row
// by row by prediction networks applied to per-feature embeddings,
//
//   (W_e)_j = aux_enc(e_j),   (W_d)_j = aux_dec(e_j),
//   h1 = f(x W_e + b_e),  y = softmax(trunk(h1)),  x_hat = h_last W_d^T + b_r,
//
// trained on  CE(y, Y) + gamma * ||x_hat - x||^2 / batch.
// The same class also represents the basic net, where W_e and W_d are free.

#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dietnet/common.hpp"
#include "dietnet/embedding.hpp"
#include "dietnet/genotype_io.hpp"
#include "dietnet/neural_core.hpp"

namespace dietnet {

struct TrainConfig {
  // Architecture
  std::vector<Index> hidden{100, 100};  // hidden[0] is the fat layer width
  std::vector<Index> aux_hidden{};      // extra hidden layers inside each prediction net
  Index embed_hidden = 100;             // width of the end-to-end embedding layer
  bool aux_bias = true;
  Activation hidden_activation = Activation::Rectifier;
  Activation aux_activation = Activation::Identity;  // prediction-net output
  Activation embed_activation = Activation::Rectifier;
  bool reconstruction = false;

  // Objective and optimisation
  double gamma = 0.0;
  double dropout = 0.5;  // fat hidden layer and trunk hidden layers
  double lr = 1e-3;
  double rho = 0.9;
  double eps = 1e-8;
  Index batch_size = 32;
  int max_epochs = 200;
  int patience = 20;
  std::uint64_t seed = 1;
  std::optional<double> max_norm = 1.0;
  double weight_decay = 0.0;

  void validate() const {
    if (gamma < 0.0) throw Error("gamma must be >= 0");
    if (hidden.empty()) throw Error("at least one hidden layer is required");
    for (Index h : hidden)
      if (h < 1) throw Error("hidden sizes must be >= 1");
    for (Index h : aux_hidden)
      if (h < 1) throw Error("aux hidden sizes must be >= 1");
    if (embed_hidden < 1) throw Error("embedding width must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must lie in [0, 1)");
    if (batch_size < 1) throw Error("batch size must be >= 1");
    if (lr < 0.0) throw Error("learning rate must be >= 0");
    if (weight_decay < 0.0) throw Error("weight decay must be >= 0");
    if (max_norm && *max_norm <= 0.0) throw Error("max-norm cap must be > 0");
  }
};

// Missing genotypes are replaced with the training mean of the scaled column.
struct InputScaler {
  RowVector fill;

  static InputScaler fit(const GenotypeMatrix& g, std::span<const Index> rows) {
    InputScaler s;
    s.fill = RowVector::Zero(g.cols());
    for (Index j = 0; j < g.cols(); ++j) {
      double sum = 0.0, n = 0.0;
      for (Index r : rows)
        if (g(r, j) != kMissingGenotype) {
          sum += 0.5 * g(r, j);
          n += 1.0;
        }
      s.fill(j) = n > 0 ? sum / n : 0.0;
    }
    return s;
  }

  Matrix transform(const GenotypeMatrix& g, std::span<const Index> rows) const {
    if (g.cols() != fill.size()) throw DimensionError("scaler fitted on a different SNP count");
    Matrix x(static_cast<Index>(rows.size()), g.cols());
    for (std::size_t k = 0; k < rows.size(); ++k)
      for (Index j = 0; j < g.cols(); ++j) {
        const auto v = g(rows[k], j);
        x(static_cast<Index>(k), j) = v == kMissingGenotype ? fill(j) : 0.5 * v;
      }
    return x;
  }
};

inline std::vector<Index> all_rows(Index n) {
  std::vector<Index> r(static_cast<std::size_t>(n));
  std::iota(r.begin(), r.end(), Index{0});
  return r;
}

// g -> g / 2; missing entries -> mean of the scaled non-missing column values.
inline Matrix input_scale(const GenotypeMatrix& g) {
  const auto rows = all_rows(g.rows());
  return InputScaler::fit(g, rows).transform(g, rows);
}

enum class FatMode { Free, Predicted };

struct FatWeights {
  Matrix enc;  // N_d x N_h1
  Matrix dec;  // N_d x N_hlast (empty without reconstruction)
  Matrix embedding;  // effective embedding fed to the prediction nets
  ForwardTrace embed_trace;
  ForwardTrace enc_trace;
  ForwardTrace dec_trace;
};

struct DietTrace {
  FatWeights fat;
  Matrix x;
  Matrix pre1;
  Matrix mask1;
  ForwardTrace trunk;
  ForwardTrace head;
  Matrix logits;
  Matrix reconstruction;  // empty without reconstruction

  const Matrix& last_hidden() const { return head.inputs.front(); }
  Matrix probabilities() const { return softmax(logits); }
};

class DietNetwork {
 public:
  // Basic net: fat weights are free parameters.
  static DietNetwork basic(Index n_d, int n_classes, const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    DietNetwork m(FatMode::Free, n_d, n_classes, cfg);
    m.fat_enc_ = make_dense(n_d, cfg.hidden.front(), Activation::Identity, 0.0, rng).weights;
    if (cfg.reconstruction)
      m.fat_dec_ = make_dense(cfg.hidden.back(), n_d, Activation::Identity, 0.0, rng)
                       .weights.transpose();
    m.build_trunk(rng);
    m.project_initial();
    return m;
  }

  // Diet net over a fixed embedding of width `embedding_dim`, or, when
  // `learnt_embedding`, over the raw transposed training matrix (embedding_dim
  // = N_train) passed through a shared embedding layer.
  static DietNetwork diet(Index n_d, int n_classes, Index embedding_dim, bool learnt_embedding,
                          const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    DietNetwork m(FatMode::Predicted, n_d, n_classes, cfg);
    m.embedding_input_dim_ = embedding_dim;
    Index aux_in = embedding_dim;
    if (learnt_embedding) {
      m.shared_embed_ = LayerStack{
          make_dense(embedding_dim, cfg.embed_hidden, cfg.embed_activation, 0.0, rng)};
      aux_in = cfg.embed_hidden;
    }
    m.aux_enc_ = make_mlp(aux_in, cfg.aux_hidden, cfg.hidden.front(), Activation::Rectifier,
                          cfg.aux_activation, 0.0, rng);
    if (cfg.reconstruction)
      m.aux_dec_ = make_mlp(aux_in, cfg.aux_hidden, cfg.hidden.back(), Activation::Rectifier,
                            cfg.aux_activation, 0.0, rng);
    if (!cfg.aux_bias) {
      for (auto& l : m.aux_enc_) l.use_bias = false;
      if (m.aux_dec_)
        for (auto& l : *m.aux_dec_) l.use_bias = false;
    }
    m.build_trunk(rng);
    m.project_initial();
    return m;
  }

  FatMode fat_mode() const { return fat_mode_; }
  bool learnt_embedding() const { return shared_embed_.has_value(); }
  bool reconstruction() const { return config_.reconstruction; }
  Index n_d() const { return n_d_; }
  int n_classes() const { return n_classes_; }
  Index embedding_input_dim() const { return embedding_input_dim_; }
  const TrainConfig& config() const { return config_; }

  LayerStack& aux_enc() { return aux_enc_; }
  const LayerStack& aux_enc() const { return aux_enc_; }
  std::optional<LayerStack>& aux_dec() { return aux_dec_; }
  std::optional<LayerStack>& shared_embed() { return shared_embed_; }
  Matrix& fat_enc() { return fat_enc_; }
  Matrix& fat_dec() { return fat_dec_; }
  RowVector& fat_bias() { return fat_bias_; }
  LayerStack& trunk() { return trunk_; }
  LayerStack& head() { return head_; }
  RowVector& reconstruction_bias() { return recon_bias_; }

  FatWeights predict_fat_weights(const Matrix& embedding) const {
    FatWeights w;
    if (fat_mode_ == FatMode::Free) {
      w.enc = fat_enc_;
      w.dec = fat_dec_;
      return w;
    }
    if (embedding.rows() != n_d_ || embedding.cols() != embedding_input_dim_)
      throw DimensionError("embedding is " + std::to_string(embedding.rows()) + "x" +
                           std::to_string(embedding.cols()) + ", model expects " +
                           std::to_string(n_d_) + "x" + std::to_string(embedding_input_dim_));
    Rng unused(0);
    if (shared_embed_) {
      w.embed_trace = forward(*shared_embed_, embedding, Mode::Eval, unused);
      w.embedding = w.embed_trace.output;
    } else {
      w.embedding = embedding;
    }
    w.enc_trace = forward(aux_enc_, w.embedding, Mode::Eval, unused);
    w.enc = w.enc_trace.output;
    if (aux_dec_) {
      w.dec_trace = forward(*aux_dec_, w.embedding, Mode::Eval, unused);
      w.dec = w.dec_trace.output;
    }
    if (!w.enc.allFinite() || !w.dec.allFinite())
      throw NumericalError("non-finite predicted fat weights", -1);
    return w;
  }

  DietTrace forward_with(FatWeights fat, const Matrix& x, Mode mode, Rng& rng) const {
    if (x.cols() != n_d_)
      throw DimensionError("input has " + std::to_string(x.cols()) + " columns, model expects " +
                           std::to_string(n_d_));
    DietTrace t;
    t.fat = std::move(fat);
    t.x = x;
    t.pre1 = x * t.fat.enc;
    t.pre1.rowwise() += fat_bias_;
    Matrix h1 = activate(t.pre1, config_.hidden_activation);
    if (mode == Mode::Train && config_.dropout > 0.0) {
      t.mask1 = dropout_mask(h1.rows(), h1.cols(), config_.dropout, rng);
      h1 = h1.cwiseProduct(t.mask1);
    }
    if (!h1.allFinite()) throw NumericalError("non-finite activation", 0);
    t.trunk = forward(trunk_, h1, mode, rng);
    t.head = forward(head_, t.trunk.output, mode, rng);
    t.logits = t.head.output;
    if (config_.reconstruction) {
      t.reconstruction = t.last_hidden() * t.fat.dec.transpose();
      t.reconstruction.rowwise() += recon_bias_;
      if (!t.reconstruction.allFinite()) throw NumericalError("non-finite reconstruction", -1);
    }
    return t;
  }

  DietTrace forward_diet(const Matrix& x, const Matrix& embedding, Mode mode, Rng& rng) const {
    return forward_with(predict_fat_weights(embedding), x, mode, rng);
  }

  Matrix predict_proba(const Matrix& x, const Matrix& embedding) const {
    Rng unused(0);
    return forward_diet(x, embedding, Mode::Eval, unused).probabilities();
  }

  // Gradients aligned with params(). `grad_recon` may be empty (gamma = 0).
  std::vector<Matrix> backward_diet(const DietTrace& t, const Matrix& grad_logits,
                                    const Matrix& grad_recon) const {
    const auto head_back = backward(head_, t.head, grad_logits);
    Matrix d_last = head_back.input;
    Matrix d_dec, d_recon_bias;
    const bool recon_grad = config_.reconstruction && grad_recon.size() > 0;
    if (config_.reconstruction) {
      if (recon_grad) {
        d_last += grad_recon * t.fat.dec;
        d_dec = grad_recon.transpose() * t.last_hidden();
        d_recon_bias = grad_recon.colwise().sum();
      } else {
        d_dec = Matrix::Zero(t.fat.dec.rows(), t.fat.dec.cols());
        d_recon_bias = Matrix::Zero(1, n_d_);
      }
    }
    const auto trunk_back = backward(trunk_, t.trunk, d_last);
    Matrix d_pre1 = trunk_back.input;
    if (t.mask1.size() > 0) d_pre1 = d_pre1.cwiseProduct(t.mask1);
    activation_backward(d_pre1, t.pre1, config_.hidden_activation);
    const Matrix d_enc = t.x.transpose() * d_pre1;
    const Matrix d_fat_bias = d_pre1.colwise().sum();

    std::vector<Matrix> grads;
    if (fat_mode_ == FatMode::Predicted) {
      const auto enc_back = backward(aux_enc_, t.fat.enc_trace, d_enc);
      Matrix d_embedding = enc_back.input;
      std::optional<BackwardResult> dec_back;
      if (aux_dec_) {
        dec_back = backward(*aux_dec_, t.fat.dec_trace, d_dec);
        d_embedding += dec_back->input;
      }
      if (shared_embed_) {
        const auto embed_back = backward(*shared_embed_, t.fat.embed_trace, d_embedding);
        append_grads(grads, *shared_embed_, embed_back);
      }
      append_grads(grads, aux_enc_, enc_back);
      if (aux_dec_) append_grads(grads, *aux_dec_, *dec_back);
    } else {
      grads.push_back(d_enc);
      if (config_.reconstruction) grads.push_back(d_dec);
    }
    grads.push_back(d_fat_bias);
    append_grads(grads, trunk_, trunk_back);
    append_grads(grads, head_, head_back);
    if (config_.reconstruction) grads.push_back(d_recon_bias);
    return grads;
  }

  std::vector<ParamBlock> params() {
    std::vector<ParamBlock> p;
    if (fat_mode_ == FatMode::Predicted) {
      if (shared_embed_) append_params(p, *shared_embed_, "embed");
      append_params(p, aux_enc_, "aux_enc");
      if (aux_dec_) append_params(p, *aux_dec_, "aux_dec");
    } else {
      p.push_back(param_of("fat_enc", fat_enc_));
      if (config_.reconstruction) p.push_back(param_of("fat_dec", fat_dec_));
    }
    p.push_back(param_of("fat_bias", fat_bias_));
    append_params(p, trunk_, "trunk");
    append_params(p, head_, "head");
    if (config_.reconstruction) p.push_back(param_of("recon_bias", recon_bias_));
    return p;
  }

  // Free parameters behind the fat layers: W_e / W_d themselves for the basic
  // net; the prediction nets plus any shared embedding layer for a diet net.
  // The fat biases are counted with the rest of the network.
  std::size_t fat_param_count() const {
    if (fat_mode_ == FatMode::Free)
      return static_cast<std::size_t>(fat_enc_.size() + fat_dec_.size());
    std::size_t n = parameter_count(aux_enc_);
    if (aux_dec_) n += parameter_count(*aux_dec_);
    if (shared_embed_) n += parameter_count(*shared_embed_);
    return n;
  }

  std::size_t total_param_count() {
    std::size_t n = 0;
    for (const auto& p : params()) n += static_cast<std::size_t>(p.size());
    return n;
  }

 private:
  DietNetwork(FatMode mode, Index n_d, int n_classes, const TrainConfig& cfg)
      : fat_mode_(mode), n_d_(n_d), n_classes_(n_classes), config_(cfg) {
    if (n_d < 1) throw Error("model needs at least one input feature");
    if (n_classes < 1) throw Error("model needs at least one class");
  }

  void build_trunk(Rng& rng) {
    const auto& h = config_.hidden;
    fat_bias_ = RowVector::Zero(h.front());
    trunk_.clear();
    for (std::size_t l = 1; l < h.size(); ++l)
      trunk_.push_back(
          make_dense(h[l - 1], h[l], config_.hidden_activation, config_.dropout, rng));
    head_ = LayerStack{make_dense(h.back(), n_classes_, Activation::Identity, 0.0, rng)};
    if (config_.reconstruction) recon_bias_ = RowVector::Zero(n_d_);
  }

  void project_initial() {
    if (!config_.max_norm) return;
    for (const auto& p : params())
      if (p.is_weight) project_max_norm(p, *config_.max_norm);
  }

  FatMode fat_mode_;
  Index n_d_;
  int n_classes_;
  TrainConfig config_;
  Index embedding_input_dim_ = 0;

  std::optional<LayerStack> shared_embed_;
  LayerStack aux_enc_;
  std::optional<LayerStack> aux_dec_;
  Matrix fat_enc_;
  Matrix fat_dec_;
  RowVector fat_bias_;
  LayerStack trunk_;
  LayerStack head_;
  RowVector recon_bias_;
};

struct DietLoss {
  double total = 0.0;
  double cross_entropy = 0.0;
  double reconstruction = 0.0;
  Matrix grad_logits;
  Matrix grad_recon;  // empty when gamma = 0 or no reconstruction
};

// CE(softmax(logits), labels) + gamma * ||recon - x||^2 / batch.
inline DietLoss loss_diet(const Matrix& logits, std::span<const int> labels,
                          const Matrix& reconstruction, const Matrix& x, double gamma) {
  DietLoss l;
  auto ce = softmax_xent(logits, labels);
  l.cross_entropy = ce.loss;
  l.grad_logits = std::move(ce.grad);
  l.total = l.cross_entropy;
  if (gamma > 0.0 && reconstruction.size() > 0) {
    auto rec = mse(reconstruction, x);
    l.reconstruction = rec.loss;
    l.total += gamma * rec.loss;
    l.grad_recon = gamma * rec.grad;
  }
  return l;
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_err = 0.0;
  double valid_err = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_valid_err = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, TrainHistory history)
      : Error(what), history_(std::move(history)) {}
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

inline void write_history_csv(std::ostream& out, const TrainHistory& h) {
  out << "epoch,train_loss,train_err,valid_err\n";
  for (const auto& e : h.epochs)
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.train_err)
        << ',' << format_double(e.valid_err) << '\n';
}

struct TrainData {
  Matrix x_train;
  std::vector<int> y_train;
  Matrix x_valid;
  std::vector<int> y_valid;
  Matrix embedding;  // fixed embedding, or X_train^T for a learnt one; unused for basic
};

inline double error_rate(std::span<const int> predicted, std::span<const int> truth) {
  if (truth.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) wrong += predicted[i] != truth[i];
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

namespace detail {

inline Matrix gather_rows(const Matrix& x, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = x.row(rows[k]);
  return out;
}

}  // namespace detail

// One optimizer step on a minibatch; returns the minibatch objective.
inline double train_step(DietNetwork& model, RmsProp& opt, const Matrix& x,
                         std::span<const int> y, const Matrix& embedding, Rng& rng) {
  const auto trace = model.forward_diet(x, embedding, Mode::Train, rng);
  const auto loss = loss_diet(trace.logits, y, trace.reconstruction, x, model.config().gamma);
  const auto grads = model.backward_diet(trace, loss.grad_logits, loss.grad_recon);
  opt.step(model.params(), grads);
  return loss.total;
}

// Minibatch RMSProp with per-epoch evaluation and early stopping on validation
// misclassification; the best-validation parameters are restored at the end.
inline TrainHistory train(DietNetwork& model, const TrainData& data, const TrainConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(data.x_train.rows()) != data.y_train.size())
    throw DimensionError("one training label per row expected");
  Rng rng(cfg.seed);
  RmsProp opt({cfg.lr, cfg.rho, cfg.eps}, {cfg.dropout, cfg.max_norm, cfg.weight_decay});
  TrainHistory history;
  const bool has_valid = data.x_valid.rows() > 0;
  std::vector<Matrix> best = snapshot(model.params());
  int since_best = 0;

  const Index n = data.x_train.rows();
  std::vector<Index> order = all_rows(n);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    try {
      shuffle(order, rng);
      for (Index start = 0; start < n; start += cfg.batch_size) {
        const Index m = std::min(cfg.batch_size, n - start);
        std::span<const Index> idx(order.data() + start, static_cast<std::size_t>(m));
        const Matrix xb = detail::gather_rows(data.x_train, idx);
        std::vector<int> yb;
        for (Index r : idx) yb.push_back(data.y_train[static_cast<std::size_t>(r)]);
        const double l = train_step(model, opt, xb, yb, data.embedding, rng);
        if (!std::isfinite(l)) throw NumericalError("non-finite loss", -1);
      }
      EpochRecord rec;
      rec.epoch = epoch;
      Rng unused(0);
      const auto fat = model.predict_fat_weights(data.embedding);
      const auto t = model.forward_with(fat, data.x_train, Mode::Eval, unused);
      rec.train_loss =
          loss_diet(t.logits, data.y_train, t.reconstruction, data.x_train, cfg.gamma).total;
      if (!std::isfinite(rec.train_loss)) throw NumericalError("non-finite loss", -1);
      rec.train_err = error_rate(argmax_rows(t.logits), data.y_train);
      if (has_valid) {
        const auto v = model.forward_with(fat, data.x_valid, Mode::Eval, unused);
        rec.valid_err = error_rate(argmax_rows(v.logits), data.y_valid);
      }
      history.epochs.push_back(rec);
    } catch (const NumericalError& e) {
      throw DivergenceError(std::string("training diverged at epoch ") + std::to_string(epoch) +
                                ": " + e.what(),
                            history);
    }
    const double score = has_valid ? history.epochs.back().valid_err : history.epochs.back().train_loss;
    if (score < history.best_valid_err) {
      history.best_valid_err = score;
      history.best_epoch = epoch;
      best = snapshot(model.params());
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      history.stopped_early = true;
      break;
    }
  }
  restore(model.params(), best);
  return history;
}

// ---------------------------------------------------------------------------
// Fold-level entry points

struct FoldData {
  int test_fold = 0;
  std::vector<Index> train_rows, valid_rows, test_rows;
  InputScaler scaler;
  Matrix x_train, x_valid, x_test;
  std::vector<int> y_train, y_valid, y_test;
};

inline FoldData prepare_fold(const GenotypeDataset& d, const FoldSplit& split, int test_fold) {
  if (!d.labeled()) throw Error("training needs a labeled dataset");
  FoldData f;
  f.test_fold = test_fold;
  f.train_rows = split.train(test_fold);
  f.valid_rows = split.validation(test_fold);
  f.test_rows = split.test(test_fold);
  f.scaler = InputScaler::fit(d.genotypes, f.train_rows);
  f.x_train = f.scaler.transform(d.genotypes, f.train_rows);
  f.x_valid = f.scaler.transform(d.genotypes, f.valid_rows);
  f.x_test = f.scaler.transform(d.genotypes, f.test_rows);
  auto labels_of = [&](const std::vector<Index>& rows) {
    std::vector<int> y;
    for (Index r : rows) y.push_back(d.labels[static_cast<std::size_t>(r)]);
    return y;
  };
  f.y_train = labels_of(f.train_rows);
  f.y_valid = labels_of(f.valid_rows);
  f.y_test = labels_of(f.test_rows);
  return f;
}

// Refuses an embedding that was not built from this fold's training rows.
inline void check_provenance(const FeatureEmbedding& e, const GenotypeDataset& d,
                             const FoldData& fold) {
  const auto expected = split_fingerprint(d, fold.train_rows);
  if (e.provenance.fingerprint != expected)
    throw ProvenanceError("embedding fingerprint " + hex64(e.provenance.fingerprint) +
                          " does not match training split " + hex64(expected) + " of fold " +
                          std::to_string(fold.test_fold));
}

inline DietNetwork make_model(const GenotypeDataset& d, const FeatureEmbedding* embedding,
                              const TrainConfig& cfg) {
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  if (!embedding) return DietNetwork::basic(d.n_snps(), d.n_classes(), cfg, rng);
  embedding->validate(d.n_snps());
  return DietNetwork::diet(d.n_snps(), d.n_classes(), embedding->dim(),
                           embedding->kind == EmbeddingKind::Learnt, cfg, rng);
}

// Trains `model` on one fold. `embedding` is null for the basic net.
inline TrainHistory train_on_fold(DietNetwork& model, const GenotypeDataset& d,
                                  const FoldData& fold, const FeatureEmbedding* embedding,
                                  const TrainConfig& cfg) {
  TrainData data{fold.x_train, fold.y_train, fold.x_valid, fold.y_valid, Matrix()};
  if (model.fat_mode() == FatMode::Predicted) {
    if (!embedding) throw Error("a diet network needs an embedding");
    check_provenance(*embedding, d, fold);
    data.embedding = embedding->values;
  }
  return train(model, data, cfg);
}

}  // namespace dietnet
