#pragma once

// Dense layers, losses, RMSProp with weight decay / max-norm, checkpoints and a
// central-difference gradient checker. Batches are row-major in the sense that
// one sample is one row; a layer computes act(x * W + b) with W in x out.

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dietnet/common.hpp"

namespace dietnet {

enum class Activation { Rectifier, Identity };

inline const char* to_string(Activation a) {
  return a == Activation::Rectifier ? "rectifier" : "identity";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "rectifier" || s == "relu") return Activation::Rectifier;
  if (s == "identity" || s == "linear") return Activation::Identity;
  throw Error("unknown activation '" + s + "'");
}

inline Matrix activate(const Matrix& pre, Activation a) {
  if (a == Activation::Identity) return pre;
  return pre.cwiseMax(0.0);
}

// grad <- grad * f'(pre)
inline void activation_backward(Matrix& grad, const Matrix& pre, Activation a) {
  if (a == Activation::Identity) return;
  grad = (pre.array() > 0.0).select(grad, 0.0);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

enum class Mode { Train, Eval };

struct DenseLayer {
  Matrix weights;  // in x out
  RowVector bias;
  Activation activation = Activation::Rectifier;
  double dropout = 0.0;  // on this layer's output, train mode only
  bool use_bias = true;  // false: bias is ignored and is not a parameter

  Index in_dim() const { return weights.rows(); }
  Index out_dim() const { return weights.cols(); }
};

using LayerStack = std::vector<DenseLayer>;

// Glorot-uniform weights, zero bias.
inline DenseLayer make_dense(Index in, Index out, Activation act, double dropout, Rng& rng) {
  DenseLayer l;
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  l.weights.resize(in, out);
  for (Index c = 0; c < out; ++c)
    for (Index r = 0; r < in; ++r) l.weights(r, c) = limit * (2.0 * uniform01(rng) - 1.0);
  l.bias = RowVector::Zero(out);
  l.activation = act;
  l.dropout = dropout;
  return l;
}

// in -> hidden... -> out. Hidden layers share activation and dropout; the last
// layer has `out_act` and no dropout.
inline LayerStack make_mlp(Index in, std::span<const Index> hidden, Index out,
                           Activation hidden_act, Activation out_act, double dropout, Rng& rng) {
  LayerStack s;
  Index prev = in;
  for (Index h : hidden) {
    s.push_back(make_dense(prev, h, hidden_act, dropout, rng));
    prev = h;
  }
  s.push_back(make_dense(prev, out, out_act, 0.0, rng));
  return s;
}

inline std::size_t parameter_count(const LayerStack& s) {
  std::size_t n = 0;
  for (const auto& l : s)
    n += static_cast<std::size_t>(l.weights.size() + (l.use_bias ? l.bias.size() : 0));
  return n;
}

struct ForwardTrace {
  std::vector<Matrix> inputs;  // inputs[l] feeds layer l
  std::vector<Matrix> pre;
  std::vector<Matrix> masks;  // empty matrix where no dropout was applied
  Matrix output;
};

// Inverted dropout mask: entries 0 or 1/(1-p).
inline Matrix dropout_mask(Index rows, Index cols, double p, Rng& rng) {
  Matrix m(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = uniform01(rng) < p ? 0.0 : keep;
  return m;
}

inline ForwardTrace forward(std::span<const DenseLayer> layers, const Matrix& x, Mode mode,
                            Rng& rng) {
  ForwardTrace t;
  Matrix h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (h.cols() != layer.in_dim())
      throw DimensionError("layer " + std::to_string(l) + " expects width " +
                           std::to_string(layer.in_dim()) + ", got " +
                           std::to_string(h.cols()));
    Matrix pre = h * layer.weights;
    if (layer.use_bias) pre.rowwise() += layer.bias;
    Matrix out = activate(pre, layer.activation);
    Matrix mask;
    if (mode == Mode::Train && layer.dropout > 0.0) {
      mask = dropout_mask(out.rows(), out.cols(), layer.dropout, rng);
      out = out.cwiseProduct(mask);
    }
    if (!all_finite(out)) throw NumericalError("non-finite activation", static_cast<std::ptrdiff_t>(l));
    t.inputs.push_back(std::move(h));
    t.pre.push_back(std::move(pre));
    t.masks.push_back(std::move(mask));
    h = std::move(out);
  }
  t.output = std::move(h);
  return t;
}

inline Matrix predict(std::span<const DenseLayer> layers, const Matrix& x) {
  Rng unused(0);
  return forward(layers, x, Mode::Eval, unused).output;
}

struct LayerGrads {
  Matrix weights;
  RowVector bias;
};

struct BackwardResult {
  std::vector<LayerGrads> layers;
  Matrix input;  // gradient w.r.t. the stack input
};

inline BackwardResult backward(std::span<const DenseLayer> layers, const ForwardTrace& t,
                               const Matrix& grad_output) {
  BackwardResult r;
  r.layers.resize(layers.size());
  Matrix g = grad_output;
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (t.masks[l].size() > 0) g = g.cwiseProduct(t.masks[l]);
    activation_backward(g, t.pre[l], layers[l].activation);
    r.layers[l].weights = t.inputs[l].transpose() * g;
    r.layers[l].bias = g.colwise().sum();
    g = g * layers[l].weights.transpose();
  }
  r.input = std::move(g);
  return r;
}

// ---------------------------------------------------------------------------
// Losses

struct LossResult {
  double loss = 0.0;
  Matrix grad;
};

inline Matrix softmax(const Matrix& logits) {
  Matrix p = logits;
  for (Index i = 0; i < p.rows(); ++i) {
    p.row(i).array() -= p.row(i).maxCoeff();
    p.row(i) = p.row(i).array().exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

// Mean cross-entropy over the batch; gradient (softmax - onehot) / batch.
inline LossResult softmax_xent(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw DimensionError("one label per logit row expected");
  const auto n = static_cast<double>(logits.rows());
  LossResult r;
  r.grad = softmax(logits);
  for (Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw Error("label out of range");
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    r.loss += lse - logits(i, y);
    r.grad(i, y) -= 1.0;
  }
  r.loss /= n;
  r.grad /= n;
  return r;
}

// Sum of squared differences divided by batch size.
inline LossResult mse(const Matrix& reconstruction, const Matrix& target) {
  if (reconstruction.rows() != target.rows() || reconstruction.cols() != target.cols())
    throw DimensionError("reconstruction and target shapes differ");
  const auto n = static_cast<double>(target.rows());
  const Matrix diff = reconstruction - target;
  return {diff.squaredNorm() / n, 2.0 * diff / n};
}

inline std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) {
    Index k = 0;
    m.row(i).maxCoeff(&k);
    out[static_cast<std::size_t>(i)] = static_cast<int>(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameters and optimisation

// View of one trainable block. Weight blocks (not biases) take weight decay
// and the max-norm projection.
struct ParamBlock {
  std::string name;
  double* data = nullptr;
  Index rows = 0;
  Index cols = 0;
  bool is_weight = false;

  Eigen::Map<Matrix> map() const { return {data, rows, cols}; }
  Index size() const { return rows * cols; }
};

inline ParamBlock param_of(const std::string& name, Matrix& m) {
  return {name, m.data(), m.rows(), m.cols(), true};
}

inline ParamBlock param_of(const std::string& name, RowVector& v) {
  return {name, v.data(), 1, v.size(), false};
}

inline void append_params(std::vector<ParamBlock>& out, LayerStack& s, const std::string& prefix) {
  for (std::size_t l = 0; l < s.size(); ++l) {
    out.push_back(param_of(prefix + "." + std::to_string(l) + ".W", s[l].weights));
    if (s[l].use_bias) out.push_back(param_of(prefix + "." + std::to_string(l) + ".b", s[l].bias));
  }
}

inline void append_grads(std::vector<Matrix>& out, std::span<const DenseLayer> s,
                         const BackwardResult& r) {
  for (std::size_t l = 0; l < s.size(); ++l) {
    out.push_back(r.layers[l].weights);
    if (s[l].use_bias) out.push_back(r.layers[l].bias);
  }
}

inline void append_zero_grads(std::vector<Matrix>& out, const LayerStack& s) {
  for (const auto& l : s) {
    out.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    if (l.use_bias) out.push_back(Matrix::Zero(1, l.bias.size()));
  }
}

inline std::vector<Matrix> snapshot(std::span<const ParamBlock> params) {
  std::vector<Matrix> out;
  for (const auto& p : params) out.emplace_back(p.map());
  return out;
}

inline void restore(std::span<const ParamBlock> params, std::span<const Matrix> values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].map() = values[i];
}

// Rescales every row of the block whose Euclidean norm exceeds `cap` down to
// norm `cap`.
inline void project_max_norm(const ParamBlock& p, double cap) {
  auto m = p.map();
  for (Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n > cap) m.row(r) *= cap / n;
  }
}

struct RegularizerConfig {
  double dropout = 0.0;
  std::optional<double> max_norm = 1.0;
  double weight_decay = 0.0;
};

struct RmsPropConfig {
  double lr = 1e-3;
  double rho = 0.9;
  double eps = 1e-8;
};

// a <- rho a + (1 - rho) g^2;  p <- p - lr g / sqrt(a + eps); then decoupled
// weight decay p <- p - lr wd p and the max-norm projection on weight blocks.
class RmsProp {
 public:
  RmsProp(RmsPropConfig config, RegularizerConfig reg) : config_(config), reg_(reg) {}

  void step(std::span<const ParamBlock> params, std::span<const Matrix> grads) {
    if (params.size() != grads.size()) throw DimensionError("one gradient per parameter block");
    if (accum_.empty())
      for (const auto& p : params) accum_.push_back(Matrix::Zero(p.rows, p.cols));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto value = params[i].map();
      const Matrix& g = grads[i];
      if (g.rows() != value.rows() || g.cols() != value.cols())
        throw DimensionError("gradient shape mismatch for " + params[i].name);
      accum_[i] = config_.rho * accum_[i] + (1.0 - config_.rho) * g.cwiseAbs2();
      value.array() -= config_.lr * g.array() / (accum_[i].array() + config_.eps).sqrt();
      if (params[i].is_weight) {
        if (reg_.weight_decay > 0.0) value *= 1.0 - config_.lr * reg_.weight_decay;
        if (reg_.max_norm) project_max_norm(params[i], *reg_.max_norm);
      }
    }
  }

  const std::vector<Matrix>& accumulators() const { return accum_; }
  const RmsPropConfig& config() const { return config_; }

 private:
  RmsPropConfig config_;
  RegularizerConfig reg_;
  std::vector<Matrix> accum_;
};

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckReport {
  std::vector<std::string> names;
  std::vector<double> rel_errors;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;
};

// Central differences on every scalar of every block. Relative error per block
// is ||analytic - numeric|| / max(||analytic||, ||numeric||), 0 when both vanish.
inline GradCheckReport gradient_check(const std::function<double()>& loss,
                                      std::span<const ParamBlock> params,
                                      std::span<const Matrix> analytic, double tolerance,
                                      double h = 1e-5) {
  if (params.size() != analytic.size()) throw DimensionError("one gradient per parameter block");
  GradCheckReport rep;
  rep.tolerance = tolerance;
  for (std::size_t b = 0; b < params.size(); ++b) {
    const auto& p = params[b];
    Matrix numeric(p.rows, p.cols);
    for (Index k = 0; k < p.size(); ++k) {
      const double saved = p.data[k];
      p.data[k] = saved + h;
      const double up = loss();
      p.data[k] = saved - h;
      const double down = loss();
      p.data[k] = saved;
      numeric.data()[k] = (up - down) / (2.0 * h);
    }
    const double denom = std::max(analytic[b].norm(), numeric.norm());
    const double err = denom == 0.0 ? 0.0 : (analytic[b] - numeric).norm() / denom;
    rep.names.push_back(p.name);
    rep.rel_errors.push_back(err);
    rep.max_rel_error = std::max(rep.max_rel_error, err);
  }
  rep.passed = rep.max_rel_error < tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints: "DNCK", version, string header, then named blocks with shape and
// column-major 64-bit values.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> header;
  std::vector<std::pair<std::string, Matrix>> blocks;
};

inline void write_checkpoint(std::ostream& out, std::span<const ParamBlock> params,
                             const std::map<std::string, std::string>& header = {}) {
  out.write("DNCK", 4);
  binio::write<std::uint32_t>(out, kCheckpointVersion);
  binio::write<std::uint64_t>(out, header.size());
  for (const auto& [k, v] : header) {
    binio::write_string(out, k);
    binio::write_string(out, v);
  }
  binio::write<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    binio::write_string(out, p.name);
    binio::write<std::uint64_t>(out, static_cast<std::uint64_t>(p.rows));
    binio::write<std::uint64_t>(out, static_cast<std::uint64_t>(p.cols));
    out.write(reinterpret_cast<const char*>(p.data),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.size())));
  }
  if (!out) throw Error("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "DNCK") throw Error("not a checkpoint");
  const auto version = binio::read<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  const auto n_header = binio::read<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n_header; ++i) {
    auto k = binio::read_string(in);
    c.header[k] = binio::read_string(in);
  }
  const auto n_blocks = binio::read<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n_blocks; ++i) {
    auto name = binio::read_string(in);
    const auto rows = binio::read<std::uint64_t>(in);
    const auto cols = binio::read<std::uint64_t>(in);
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    if (!in) throw Error("checkpoint truncated");
    c.blocks.emplace_back(std::move(name), std::move(m));
  }
  return c;
}

inline void load_checkpoint(const Checkpoint& c, std::span<const ParamBlock> params) {
  if (c.blocks.size() != params.size()) throw DimensionError("checkpoint block count differs");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, m] = c.blocks[i];
    if (name != params[i].name || m.rows() != params[i].rows || m.cols() != params[i].cols)
      throw DimensionError("checkpoint block " + name + " does not match " + params[i].name);
    params[i].map() = m;
  }
}

inline void write_checkpoint_csv(std::ostream& out, std::span<const ParamBlock> params) {
  out << "block,row,col,value\n";
  for (const auto& p : params) {
    const auto m = p.map();
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c)
        out << p.name << ',' << r << ',' << c << ',' << format_double(m(r, c)) << '\n';
  }
}

}  // namespace dietnet
