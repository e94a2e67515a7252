#pragma once

// Per-feature embeddings E (N_d x N_f) computed from the training rows of the
// data matrix, i.e. from its transpose: random projection, per-class genotype
// histograms, SNP2Vec from a denoising autoencoder, one-hot, and the raw input
// consumed by an end-to-end learnt embedding layer.

#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dietnet/common.hpp"
#include "dietnet/genotype_io.hpp"
#include "dietnet/neural_core.hpp"

namespace dietnet {

enum class EmbeddingKind { RandomProjection, ClassHistogram, Snp2Vec, OneHot, Learnt };

inline const char* to_string(EmbeddingKind k) {
  switch (k) {
    case EmbeddingKind::RandomProjection: return "random_projection";
    case EmbeddingKind::ClassHistogram: return "class_histogram";
    case EmbeddingKind::Snp2Vec: return "snp2vec";
    case EmbeddingKind::OneHot: return "one_hot";
    case EmbeddingKind::Learnt: return "learnt";
  }
  return "?";
}

inline EmbeddingKind embedding_kind_from_string(const std::string& s) {
  for (auto k : {EmbeddingKind::RandomProjection, EmbeddingKind::ClassHistogram,
                 EmbeddingKind::Snp2Vec, EmbeddingKind::OneHot, EmbeddingKind::Learnt})
    if (s == to_string(k)) return k;
  throw Error("unknown embedding kind '" + s + "'");
}

struct Provenance {
  std::uint64_t fingerprint = 0;  // split_fingerprint of the rows it was built from
  std::uint64_t seed = 0;
  std::string params;
};

struct FeatureEmbedding {
  Matrix values;  // N_d x N_f
  EmbeddingKind kind = EmbeddingKind::OneHot;
  Provenance provenance;

  Index n_features() const { return values.rows(); }
  Index dim() const { return values.cols(); }

  void validate(Index n_d) const {
    if (values.rows() != n_d)
      throw DimensionError("embedding has " + std::to_string(values.rows()) +
                           " rows, dataset has " + std::to_string(n_d) + " SNPs");
    if (!values.allFinite()) throw Error("embedding has non-finite entries");
    if (kind == EmbeddingKind::OneHot && !values.isIdentity(0.0))
      throw Error("one-hot embedding must be the identity");
  }
};

// E = act(X^T R), R an N_train x n_f Gaussian matrix with sd 1/sqrt(N_train).
inline FeatureEmbedding embed_random_projection(const Matrix& x_train, Index n_f,
                                                std::uint64_t seed,
                                                Activation act = Activation::Rectifier) {
  if (n_f <= 0) throw Error("random projection needs n_f >= 1");
  const Index n = x_train.rows();
  Rng rng(seed);
  const double sd = n > 0 ? 1.0 / std::sqrt(static_cast<double>(n)) : 0.0;
  Matrix r(n, n_f);
  for (Index c = 0; c < n_f; ++c)
    for (Index i = 0; i < n; ++i) r(i, c) = sd * standard_normal(rng);
  FeatureEmbedding e;
  e.values = activate(x_train.transpose() * r, act);
  e.kind = EmbeddingKind::RandomProjection;
  e.provenance.seed = seed;
  e.provenance.params = "n_f=" + std::to_string(n_f) + ";activation=" + to_string(act);
  return e;
}

// Row j holds, for each class c, the fractions of class-c training samples
// with genotype 0, 1 and 2 at SNP j (N_f = 3C). Missing entries take the
// rounded per-SNP training mean. Classes without training samples get
// (1/3, 1/3, 1/3).
inline FeatureEmbedding embed_class_histogram(const GenotypeMatrix& train_genotypes,
                                              std::span<const int> train_labels, int n_classes,
                                              std::size_t* empty_classes = nullptr) {
  if (static_cast<std::size_t>(train_genotypes.rows()) != train_labels.size())
    throw DimensionError("one label per training sample expected");
  if (n_classes < 1) throw Error("need at least one class");
  const Index n = train_genotypes.rows();
  const Index n_d = train_genotypes.cols();
  std::vector<double> class_size(static_cast<std::size_t>(n_classes), 0.0);
  for (int y : train_labels) {
    if (y < 0 || y >= n_classes) throw Error("label out of range");
    class_size[static_cast<std::size_t>(y)] += 1.0;
  }
  FeatureEmbedding e;
  e.kind = EmbeddingKind::ClassHistogram;
  e.values = Matrix::Zero(n_d, 3 * n_classes);
  for (Index j = 0; j < n_d; ++j) {
    double sum = 0.0, present = 0.0;
    for (Index i = 0; i < n; ++i)
      if (train_genotypes(i, j) != kMissingGenotype) {
        sum += train_genotypes(i, j);
        present += 1.0;
      }
    const int fill = present > 0 ? static_cast<int>(std::lround(sum / present)) : 0;
    for (Index i = 0; i < n; ++i) {
      int g = train_genotypes(i, j);
      if (g == kMissingGenotype) g = fill;
      e.values(j, 3 * train_labels[static_cast<std::size_t>(i)] + g) += 1.0;
    }
  }
  std::size_t empty = 0;
  for (int c = 0; c < n_classes; ++c) {
    const double size = class_size[static_cast<std::size_t>(c)];
    if (size == 0.0) {
      ++empty;
      e.values.middleCols(3 * c, 3).setConstant(1.0 / 3.0);
    } else {
      e.values.middleCols(3 * c, 3) /= size;
    }
  }
  if (empty_classes) *empty_classes = empty;
  e.provenance.params = "classes=" + std::to_string(n_classes);
  return e;
}

// ---------------------------------------------------------------------------
// Denoising autoencoder over sample rows

struct DaeConfig {
  Index hidden_dim = 100;
  double corruption_rate = 0.25;
  int epochs = 50;
  Index batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct Dae {
  DenseLayer encoder;  // N_d -> hidden, rectifier
  DenseLayer decoder;  // hidden -> N_d, identity
  std::vector<double> epoch_loss;

  Index input_dim() const { return encoder.in_dim(); }
  Index hidden_dim() const { return encoder.out_dim(); }
};

// Zeroes each entry independently with probability `rate`.
inline Matrix mask_inputs(const Matrix& x, double rate, Rng& rng,
                          std::size_t* zeroed = nullptr) {
  Matrix out = x;
  std::size_t count = 0;
  if (rate > 0.0)
    for (Index c = 0; c < out.cols(); ++c)
      for (Index r = 0; r < out.rows(); ++r)
        if (uniform01(rng) < rate) {
          out(r, c) = 0.0;
          ++count;
        }
  if (zeroed) *zeroed = count;
  return out;
}

inline Dae make_dae(Index n_d, Index hidden_dim, Rng& rng) {
  return {make_dense(n_d, hidden_dim, Activation::Rectifier, 0.0, rng),
          make_dense(hidden_dim, n_d, Activation::Identity, 0.0, rng),
          {}};
}

// Minimises ||decode(encode(mask(x))) - x||^2 per sample with RMSProp.
inline Dae train_dae(const Matrix& x_train, const DaeConfig& config) {
  if (config.hidden_dim < 1) throw Error("DAE hidden_dim must be >= 1");
  if (!(config.corruption_rate >= 0.0 && config.corruption_rate < 1.0))
    throw Error("DAE corruption rate must lie in [0, 1)");
  Rng rng(config.seed);
  Dae dae = make_dae(x_train.cols(), config.hidden_dim, rng);
  LayerStack stack{dae.encoder, dae.decoder};
  std::vector<ParamBlock> params;
  append_params(params, stack, "dae");
  RmsProp opt({config.lr, 0.9, 1e-8}, {0.0, std::nullopt, 0.0});

  const Index n = x_train.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const Index batch = std::max<Index>(1, config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    double total = 0.0;
    Index seen = 0;
    for (Index start = 0; start < n; start += batch) {
      const Index m = std::min(batch, n - start);
      Matrix clean(m, x_train.cols());
      for (Index r = 0; r < m; ++r)
        clean.row(r) = x_train.row(order[static_cast<std::size_t>(start + r)]);
      const Matrix noisy = mask_inputs(clean, config.corruption_rate, rng);
      const auto trace = forward(stack, noisy, Mode::Train, rng);
      const auto loss = mse(trace.output, clean);
      if (!std::isfinite(loss.loss))
        throw Error("DAE diverged at epoch " + std::to_string(epoch));
      const auto back = backward(stack, trace, loss.grad);
      std::vector<Matrix> grads;
      append_grads(grads, stack, back);
      opt.step(params, grads);
      total += loss.loss * static_cast<double>(m);
      seen += m;
    }
    dae.epoch_loss.push_back(seen > 0 ? total / static_cast<double>(seen) : 0.0);
  }
  dae.encoder = stack[0];
  dae.decoder = stack[1];
  return dae;
}

// Row j = encoder(alpha * e_j): the hidden code of an input where only SNP j is
// active.
inline FeatureEmbedding embed_snp2vec(const Dae& dae, Index n_d, double alpha = 1.0) {
  if (dae.input_dim() != n_d)
    throw DimensionError("DAE input width " + std::to_string(dae.input_dim()) +
                         " does not match " + std::to_string(n_d) + " SNPs");
  Matrix pre = alpha * dae.encoder.weights;
  pre.rowwise() += dae.encoder.bias;
  FeatureEmbedding e;
  e.values = activate(pre, dae.encoder.activation);
  e.kind = EmbeddingKind::Snp2Vec;
  e.provenance.params = "hidden=" + std::to_string(dae.hidden_dim()) +
                        ";alpha=" + format_double(alpha);
  return e;
}

inline FeatureEmbedding embed_one_hot(Index n_d) {
  FeatureEmbedding e;
  e.values = Matrix::Identity(n_d, n_d);
  e.kind = EmbeddingKind::OneHot;
  return e;
}

// Input of the end-to-end embedding layer: each SNP's vector of values over
// the training samples (the transposed data matrix).
inline FeatureEmbedding embed_learnt_input(const Matrix& x_train) {
  FeatureEmbedding e;
  e.values = x_train.transpose();
  e.kind = EmbeddingKind::Learnt;
  e.provenance.params = "n_train=" + std::to_string(x_train.rows());
  return e;
}

// How to build an embedding for one training split.
struct EmbeddingSpec {
  EmbeddingKind kind = EmbeddingKind::ClassHistogram;
  Index dim = 100;  // random projection width
  std::uint64_t seed = 1;
  DaeConfig dae;
  double alpha = 1.0;  // SNP2Vec "active" input value
};

// Builds the embedding from `train_rows` only (`x_train` is their scaled
// matrix) and stamps it with the split fingerprint.
inline FeatureEmbedding build_embedding(const EmbeddingSpec& spec, const GenotypeDataset& d,
                                        std::span<const Index> train_rows,
                                        const Matrix& x_train) {
  if (x_train.rows() != static_cast<Index>(train_rows.size()) || x_train.cols() != d.n_snps())
    throw DimensionError("scaled training matrix does not match the training rows");
  FeatureEmbedding e;
  switch (spec.kind) {
    case EmbeddingKind::RandomProjection:
      e = embed_random_projection(x_train, spec.dim, spec.seed);
      break;
    case EmbeddingKind::ClassHistogram: {
      if (!d.labeled()) throw Error("class histogram embedding needs labels");
      GenotypeMatrix g(static_cast<Index>(train_rows.size()), d.n_snps());
      std::vector<int> y;
      for (std::size_t k = 0; k < train_rows.size(); ++k) {
        g.row(static_cast<Index>(k)) = d.genotypes.row(train_rows[k]);
        y.push_back(d.labels[static_cast<std::size_t>(train_rows[k])]);
      }
      e = embed_class_histogram(g, y, d.n_classes());
      break;
    }
    case EmbeddingKind::Snp2Vec: {
      DaeConfig dc = spec.dae;
      dc.seed = spec.seed;
      e = embed_snp2vec(train_dae(x_train, dc), d.n_snps(), spec.alpha);
      e.provenance.seed = spec.seed;
      break;
    }
    case EmbeddingKind::OneHot:
      e = embed_one_hot(d.n_snps());
      break;
    case EmbeddingKind::Learnt:
      e = embed_learnt_input(x_train);
      break;
  }
  e.provenance.fingerprint = split_fingerprint(d, train_rows);
  return e;
}

// ---------------------------------------------------------------------------
// Serialization

inline void write_embedding_csv(std::ostream& out, const FeatureEmbedding& e,
                                std::span<const std::string> snp_ids) {
  if (static_cast<Index>(snp_ids.size()) != e.values.rows())
    throw DimensionError("one SNP id per embedding row expected");
  out << "snp_id";
  for (Index c = 0; c < e.values.cols(); ++c) out << ",e" << c;
  out << '\n';
  for (Index j = 0; j < e.values.rows(); ++j) {
    out << snp_ids[static_cast<std::size_t>(j)];
    for (Index c = 0; c < e.values.cols(); ++c) out << ',' << format_double(e.values(j, c));
    out << '\n';
  }
}

inline constexpr std::uint32_t kEmbeddingCacheVersion = 1;

inline void write_embedding_cache(std::ostream& out, const FeatureEmbedding& e) {
  out.write("DNEM", 4);
  binio::write<std::uint32_t>(out, kEmbeddingCacheVersion);
  binio::write_string(out, to_string(e.kind));
  binio::write<std::uint64_t>(out, e.provenance.fingerprint);
  binio::write<std::uint64_t>(out, e.provenance.seed);
  binio::write_string(out, e.provenance.params);
  binio::write<std::uint64_t>(out, static_cast<std::uint64_t>(e.values.rows()));
  binio::write<std::uint64_t>(out, static_cast<std::uint64_t>(e.values.cols()));
  out.write(reinterpret_cast<const char*>(e.values.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(e.values.size())));
  if (!out) throw Error("failed writing embedding cache");
}

inline FeatureEmbedding read_embedding_cache(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "DNEM") throw Error("not an embedding cache");
  if (binio::read<std::uint32_t>(in) != kEmbeddingCacheVersion)
    throw Error("unsupported embedding cache version");
  FeatureEmbedding e;
  e.kind = embedding_kind_from_string(binio::read_string(in));
  e.provenance.fingerprint = binio::read<std::uint64_t>(in);
  e.provenance.seed = binio::read<std::uint64_t>(in);
  e.provenance.params = binio::read_string(in);
  const auto rows = binio::read<std::uint64_t>(in);
  const auto cols = binio::read<std::uint64_t>(in);
  e.values.resize(static_cast<Index>(rows), static_cast<Index>(cols));
  in.read(reinterpret_cast<char*>(e.values.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(e.values.size())));
  if (!in) throw Error("embedding cache truncated");
  return e;
}

}  // namespace dietnet
