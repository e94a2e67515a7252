#pragma once

// PCA on training genotypes (centred, not scaled) through the N x N Gram
// matrix, and softmax / MLP classifiers on the resulting scores.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "dietnet/common.hpp"
#include "dietnet/diet_model.hpp"
#include "dietnet/neural_core.hpp"

namespace dietnet {

struct PcaModel {
  RowVector mean;    // N_d
  Matrix axes;       // N_d x K, orthonormal columns
  Vector eigenvalues;  // K, non-increasing
  std::size_t padded = 0;  // axes beyond the data rank, eigenvalue 0

  Index k() const { return axes.cols(); }
};

// Flips `v` so that its entry of largest magnitude is positive.
inline void canonical_sign(Eigen::Ref<Vector> v) {
  Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0) v = -v;
}

inline PcaModel fit_pca(const Matrix& x_train, Index k) {
  const Index n = x_train.rows();
  const Index d = x_train.cols();
  if (k < 0 || k > std::min(n, d))
    throw Error("number of components must lie in [0, min(N, N_d)]");
  PcaModel m;
  m.mean = x_train.colwise().mean();
  m.axes = Matrix::Zero(d, k);
  m.eigenvalues = Vector::Zero(k);
  if (k == 0) return m;

  const Matrix centred = x_train.rowwise() - m.mean;
  const double denom = static_cast<double>(std::max<Index>(n - 1, 1));
  const Matrix gram = centred * centred.transpose() / denom;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw Error("Gram eigendecomposition failed");
  const Vector& values = eig.eigenvalues();  // ascending
  const double top = std::max(values(n - 1), 0.0);
  const double tol = std::max(top, 1.0) * 1e-10 * static_cast<double>(n);

  Index filled = 0;
  for (Index r = 0; r < k; ++r) {
    const double lambda = values(n - 1 - r);
    if (lambda <= tol) break;
    Vector axis = centred.transpose() * eig.eigenvectors().col(n - 1 - r);
    axis /= axis.norm();
    canonical_sign(axis);
    m.axes.col(r) = axis;
    m.eigenvalues(r) = lambda;
    ++filled;
  }
  // Rank-deficient: complete with an orthonormal basis built from unit vectors.
  for (Index e = 0; filled < k && e < d; ++e) {
    Vector v = Vector::Unit(d, e);
    for (int pass = 0; pass < 2; ++pass)
      for (Index c = 0; c < filled; ++c) v -= m.axes.col(c).dot(v) * m.axes.col(c);
    const double norm = v.norm();
    if (norm < 1e-6) continue;
    v /= norm;
    canonical_sign(v);
    m.axes.col(filled++) = v;
    ++m.padded;
  }
  return m;
}

inline Matrix project(const PcaModel& m, const Matrix& x) {
  if (x.cols() != m.mean.size()) throw DimensionError("PCA fitted on a different SNP count");
  return (x.rowwise() - m.mean) * m.axes;
}

// Scores divided by each component's training standard deviation, so the
// classifier head sees unit-variance inputs. Padded axes are left unscaled.
inline Matrix standardized_scores(const PcaModel& m, const Matrix& x) {
  Matrix s = project(m, x);
  for (Index c = 0; c < s.cols(); ++c)
    if (m.eigenvalues(c) > 0.0) s.col(c) /= std::sqrt(m.eigenvalues(c));
  return s;
}

inline void write_pca_csv(std::ostream& out, const Matrix& scores,
                          std::span<const std::string> row_ids) {
  out << "id";
  for (Index c = 0; c < scores.cols(); ++c) out << ",pc" << c + 1;
  out << '\n';
  for (Index r = 0; r < scores.rows(); ++r) {
    out << row_ids[static_cast<std::size_t>(r)];
    for (Index c = 0; c < scores.cols(); ++c) out << ',' << format_double(scores(r, c));
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Classifier heads on PCA scores

struct HeadSpec {
  std::vector<Index> hidden;  // empty: softmax regression

  bool linear() const { return hidden.empty(); }
};

inline LayerStack make_head(Index k, int n_classes, const HeadSpec& head, const TrainConfig& cfg,
                            Rng& rng) {
  auto net = make_mlp(k, head.hidden, n_classes, cfg.hidden_activation, Activation::Identity,
                      head.linear() ? 0.0 : cfg.dropout, rng);
  if (cfg.max_norm) {
    std::vector<ParamBlock> p;
    append_params(p, net, "head");
    for (const auto& b : p)
      if (b.is_weight) project_max_norm(b, *cfg.max_norm);
  }
  return net;
}

// Same protocol as the diet model: RMSProp minibatches, early stopping on
// validation misclassification, best parameters restored.
inline LayerStack train_pca_classifier(const Matrix& scores, std::span<const int> labels,
                                       const Matrix& valid_scores,
                                       std::span<const int> valid_labels, int n_classes,
                                       const HeadSpec& head, const TrainConfig& cfg,
                                       TrainHistory* history_out = nullptr) {
  cfg.validate();
  if (static_cast<std::size_t>(scores.rows()) != labels.size())
    throw DimensionError("one label per score row expected");
  Rng init(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  LayerStack net = make_head(scores.cols(), n_classes, head, cfg, init);
  std::vector<ParamBlock> params;
  append_params(params, net, "head");
  RmsProp opt({cfg.lr, cfg.rho, cfg.eps}, {cfg.dropout, cfg.max_norm, cfg.weight_decay});
  Rng rng(cfg.seed);
  TrainHistory history;
  std::vector<Matrix> best = snapshot(params);
  int since_best = 0;
  const bool has_valid = valid_scores.rows() > 0;
  const Index n = scores.rows();
  std::vector<Index> order = all_rows(n);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffle(order, rng);
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index m = std::min(cfg.batch_size, n - start);
      std::span<const Index> idx(order.data() + start, static_cast<std::size_t>(m));
      const Matrix xb = detail::gather_rows(scores, idx);
      std::vector<int> yb;
      for (Index r : idx) yb.push_back(labels[static_cast<std::size_t>(r)]);
      const auto trace = forward(net, xb, Mode::Train, rng);
      const auto loss = softmax_xent(trace.output, yb);
      if (!std::isfinite(loss.loss))
        throw DivergenceError("classifier diverged at epoch " + std::to_string(epoch), history);
      std::vector<Matrix> grads;
      append_grads(grads, net, backward(net, trace, loss.grad));
      opt.step(params, grads);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    const Matrix logits = predict(net, scores);
    rec.train_loss = softmax_xent(logits, labels).loss;
    rec.train_err = error_rate(argmax_rows(logits), labels);
    if (has_valid) rec.valid_err = error_rate(argmax_rows(predict(net, valid_scores)), valid_labels);
    history.epochs.push_back(rec);
    const double score = has_valid ? rec.valid_err : rec.train_loss;
    if (score < history.best_valid_err) {
      history.best_valid_err = score;
      history.best_epoch = epoch;
      best = snapshot(params);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      history.stopped_early = true;
      break;
    }
  }
  restore(params, best);
  if (history_out) *history_out = std::move(history);
  return net;
}

}  // namespace dietnet
