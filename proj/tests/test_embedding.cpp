#include <gtest/gtest.h>

#include <sstream>

#include "dietnet/diet_model.hpp"
#include "dietnet/embedding.hpp"
#include "oracles.hpp"

using namespace dietnet;

namespace {

struct RandomInstance {
  GenotypeMatrix g;
  std::vector<std::vector<int>> rows;
  std::vector<int> labels;
};

RandomInstance random_instance(Index n, Index m, int classes, std::uint64_t seed,
                               int skip_class = -1) {
  Rng rng(seed);
  RandomInstance r;
  r.g.resize(n, m);
  for (Index i = 0; i < n; ++i) {
    int y = static_cast<int>(uniform01(rng) * classes);
    if (y == skip_class) y = (y + 1) % classes;
    r.labels.push_back(y);
    std::vector<int> row;
    for (Index j = 0; j < m; ++j) {
      const int v = uniform01(rng) < 0.1 ? -1 : static_cast<int>(uniform01(rng) * 3);
      r.g(i, j) = static_cast<std::int8_t>(v);
      row.push_back(v);
    }
    r.rows.push_back(row);
  }
  return r;
}

}  // namespace

TEST(ClassHistogram, MatchesCountingOracleExactly) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const auto inst = random_instance(40, 15, 6, seed, seed % 5 == 0 ? 3 : -1);
    std::size_t empty = 0;
    const auto e = embed_class_histogram(inst.g, inst.labels, 6, &empty);
    const Matrix expect = oracle::class_histogram(inst.rows, inst.labels, 6);
    ASSERT_EQ(e.values.rows(), 15);
    ASSERT_EQ(e.values.cols(), 18);
    EXPECT_EQ(e.values, expect) << "seed " << seed;
    if (seed % 5 == 0) EXPECT_EQ(empty, 1u);
  }
}

TEST(ClassHistogram, BlocksAreDistributions) {
  const auto inst = random_instance(60, 10, 4, 3);
  const auto e = embed_class_histogram(inst.g, inst.labels, 4);
  for (Index j = 0; j < 10; ++j)
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(e.values.row(j).segment(3 * c, 3).sum(), 1.0, 1e-15);
}

TEST(ClassHistogram, TwentySixClassesGiveSeventyEightFeatures) {
  const auto inst = random_instance(80, 5, 26, 4);
  EXPECT_EQ(embed_class_histogram(inst.g, inst.labels, 26).dim(), 78);
}

TEST(ClassHistogram, HandWorkedColumn) {
  GenotypeMatrix g(4, 1);
  g << 0, 2, 2, kMissingGenotype;  // mean of observed = 4/3 -> rounds to 1
  const std::vector<int> y{0, 0, 1, 1};
  const auto e = embed_class_histogram(g, y, 2);
  EXPECT_EQ(e.values(0, 0), 0.5);
  EXPECT_EQ(e.values(0, 2), 0.5);
  EXPECT_EQ(e.values(0, 4), 0.5);  // class 1: genotype 1 (imputed)
  EXPECT_EQ(e.values(0, 5), 0.5);
}

TEST(RandomProjection, ShapeNonNegativeAndSeeded) {
  Rng rng(5);
  Matrix x(30, 12);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = 0.5 * std::floor(3 * uniform01(rng));
  const auto a = embed_random_projection(x, 7, 11);
  EXPECT_EQ(a.values.rows(), 12);
  EXPECT_EQ(a.values.cols(), 7);
  EXPECT_GE(a.values.minCoeff(), 0.0);
  EXPECT_EQ(a.values, embed_random_projection(x, 7, 11).values);
  EXPECT_NE(a.values, embed_random_projection(x, 7, 12).values);
  const auto lin = embed_random_projection(x, 7, 11, Activation::Identity);
  EXPECT_EQ(a.values, lin.values.cwiseMax(0.0));
  const Matrix x2 = 2.0 * x;
  EXPECT_LT((embed_random_projection(x2, 7, 11, Activation::Identity).values - 2.0 * lin.values)
                .norm(),
            1e-12);
}

TEST(RandomProjection, GaussianScale) {
  // With X = I the embedding is the projection matrix itself.
  const Index n = 400;
  const auto e = embed_random_projection(Matrix::Identity(n, n), 100, 3, Activation::Identity);
  const double mean = e.values.mean();
  const double var = (e.values.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 0.01 / std::sqrt(static_cast<double>(n)) * 10);
  EXPECT_NEAR(std::sqrt(var), 1.0 / std::sqrt(static_cast<double>(n)), 0.002);
}

TEST(Dae, MaskingRate) {
  Rng rng(6);
  std::size_t zeroed = 0;
  const Matrix out = mask_inputs(Matrix::Ones(100, 100), 0.25, rng, &zeroed);
  EXPECT_NEAR(static_cast<double>(zeroed) / 10000.0, 0.25, 0.02);
  EXPECT_EQ(static_cast<double>(zeroed), 10000.0 - out.sum());
}

TEST(Dae, LossDecreasesAndIsSeeded) {
  const auto d = oracle::separated_blocks();
  const Matrix x = input_scale(d.genotypes).leftCols(200);
  DaeConfig cfg;
  cfg.hidden_dim = 20;
  cfg.epochs = 15;
  const Dae a = train_dae(x, cfg);
  ASSERT_EQ(a.epoch_loss.size(), 15u);
  EXPECT_LT(a.epoch_loss.back(), 0.8 * a.epoch_loss.front());
  EXPECT_EQ(a.encoder.weights, train_dae(x, cfg).encoder.weights);
  cfg.corruption_rate = 1.5;
  EXPECT_THROW(train_dae(x, cfg), Error);
}

TEST(Snp2Vec, RowsEqualClosedFormEncoder) {
  const auto d = oracle::separated_blocks();
  const Matrix x = input_scale(d.genotypes).leftCols(50);
  DaeConfig cfg;
  cfg.hidden_dim = 8;
  cfg.epochs = 3;
  const Dae dae = train_dae(x, cfg);
  for (double alpha : {1.0, 0.5}) {
    const auto e = embed_snp2vec(dae, 50, alpha);
    ASSERT_EQ(e.values.rows(), 50);
    ASSERT_EQ(e.values.cols(), 8);
    for (Index j = 0; j < 50; ++j)
      for (Index h = 0; h < 8; ++h) {
        double pre = dae.encoder.bias(h);
        for (Index k = 0; k < 50; ++k) pre += (k == j ? alpha : 0.0) * dae.encoder.weights(k, h);
        EXPECT_NEAR(e.values(j, h), std::max(pre, 0.0), 1e-12);
      }
  }
  EXPECT_THROW(embed_snp2vec(dae, 49), DimensionError);
}

TEST(OneHotAndLearnt, Shapes) {
  const auto e = embed_one_hot(5);
  EXPECT_TRUE(e.values.isIdentity(0.0));
  e.validate(5);
  EXPECT_THROW(e.validate(6), DimensionError);
  Matrix x(3, 4);
  x.setRandom();
  EXPECT_EQ(embed_learnt_input(x).values, x.transpose());
}

TEST(BuildEmbedding, StampsTrainingFingerprint) {
  const auto d = oracle::separated_blocks();
  const auto split = make_folds(d, 5, 1);
  const auto rows = split.train(0);
  const auto scaler = InputScaler::fit(d.genotypes, rows);
  const Matrix x = scaler.transform(d.genotypes, rows);
  for (auto kind : {EmbeddingKind::RandomProjection, EmbeddingKind::ClassHistogram,
                    EmbeddingKind::OneHot, EmbeddingKind::Learnt}) {
    EmbeddingSpec spec;
    spec.kind = kind;
    spec.dim = 10;
    const auto e = build_embedding(spec, d, rows, x);
    EXPECT_EQ(e.kind, kind);
    EXPECT_EQ(e.provenance.fingerprint, split_fingerprint(d, rows));
    EXPECT_EQ(e.n_features(), d.n_snps());
  }
  EmbeddingSpec hist;
  const auto e = build_embedding(hist, d, rows, x);
  EXPECT_EQ(e.dim(), 15);
}

TEST(EmbeddingCache, RoundTrip) {
  const auto inst = random_instance(20, 6, 3, 9);
  auto e = embed_class_histogram(inst.g, inst.labels, 3);
  e.provenance.fingerprint = 0xdeadbeef;
  std::stringstream buf;
  write_embedding_cache(buf, e);
  const auto back = read_embedding_cache(buf);
  EXPECT_EQ(back.values, e.values);
  EXPECT_EQ(back.kind, e.kind);
  EXPECT_EQ(back.provenance.fingerprint, e.provenance.fingerprint);
  std::ostringstream csv;
  const std::vector<std::string> ids{"a", "b", "c", "d", "e", "f"};
  write_embedding_csv(csv, e, ids);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
}

TEST(EmbeddingKind, NamesRoundTrip) {
  for (auto k : {EmbeddingKind::RandomProjection, EmbeddingKind::ClassHistogram,
                 EmbeddingKind::Snp2Vec, EmbeddingKind::OneHot, EmbeddingKind::Learnt})
    EXPECT_EQ(embedding_kind_from_string(to_string(k)), k);
  EXPECT_THROW(embedding_kind_from_string("word2vec"), Error);
}
