#include <gtest/gtest.h>

#include <sstream>

#include "dietnet/evaluation.hpp"
#include "oracles.hpp"

using namespace dietnet;

namespace {

GenotypeDataset tiny(std::uint64_t seed = 4) {
  std::vector<PopulationModel> pops;
  const auto f = block_frequencies(4, 24, 0.9, 0.1);
  const char* names[] = {"A1", "A2", "B1", "C1"};
  const char* regions[] = {"A", "A", "B", "C"};
  for (std::size_t c = 0; c < 4; ++c) pops.push_back({names[c], regions[c], f[c], 10});
  return synthesize(pops, seed);
}

FoldTrainer constant_trainer(int c) {
  return [c](const FoldData& f) {
    FoldOutcome o;
    o.predicted.assign(f.y_test.size(), c);
    return o;
  };
}

FoldTrainer oracle_trainer() {
  return [](const FoldData& f) {
    FoldOutcome o;
    o.predicted = f.y_test;
    return o;
  };
}

// Predicts class (y + 1) mod C on every third test row.
FoldTrainer noisy_trainer(int classes) {
  return [classes](const FoldData& f) {
    FoldOutcome o;
    o.predicted = f.y_test;
    for (std::size_t i = 0; i < f.y_test.size(); i += 3) o.predicted[i] = (f.y_test[i] + 1) % classes;
    return o;
  };
}

}  // namespace

TEST(Confusion, EntriesAreTrueByPredicted) {
  const std::vector<int> truth{0, 0, 1, 2, 2, 2}, pred{0, 1, 1, 2, 0, 2};
  const auto m = confusion(pred, truth, 3);
  CountMatrix expect(3, 3);
  expect << 1, 1, 0, 0, 1, 0, 1, 0, 2;
  EXPECT_EQ(m, expect);
  EXPECT_DOUBLE_EQ(accuracy(m), 4.0 / 6.0);
  const Matrix n = row_normalize(m);
  EXPECT_DOUBLE_EQ(n(2, 2), 2.0 / 3.0);
  EXPECT_THROW(confusion(pred, std::vector<int>{0}, 3), DimensionError);
  EXPECT_THROW(confusion(std::vector<int>{3}, std::vector<int>{0}, 3), Error);
}

TEST(Confusion, RegionCollapseEqualsDirectRecount) {
  Rng rng(1);
  const std::vector<int> region_of{0, 0, 1, 2, 1, 2};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> truth, pred;
    for (int i = 0; i < 200; ++i) {
      truth.push_back(static_cast<int>(uniform01(rng) * 6));
      pred.push_back(static_cast<int>(uniform01(rng) * 6));
    }
    const auto regions = region_confusion(confusion(pred, truth, 6), region_of, 3);
    CountMatrix direct = CountMatrix::Zero(3, 3);
    for (std::size_t i = 0; i < truth.size(); ++i)
      ++direct(region_of[static_cast<std::size_t>(truth[i])],
               region_of[static_cast<std::size_t>(pred[i])]);
    EXPECT_EQ(regions, direct);
    EXPECT_GE(accuracy(regions), accuracy(confusion(pred, truth, 6)));
  }
}

TEST(ParamCount, LargeScaleFigures) {
  FatLayerSpec s;
  s.n_d = 315345;
  s.n_h = 100;
  s.n_train = 2070;
  s.variant = FatVariant::Basic;
  EXPECT_EQ(count_free_params(s), 31534500);
  s.reconstruction = true;
  EXPECT_EQ(count_free_params(s), 63069000);
  s.variant = FatVariant::DietFixed;
  s.n_f = 100;
  s.reconstruction = false;
  EXPECT_EQ(count_free_params(s), 10100);
  s.reconstruction = true;
  EXPECT_EQ(count_free_params(s), 20200);
  s.n_f = 78;
  s.reconstruction = false;
  EXPECT_EQ(count_free_params(s), 7900);
  s.reconstruction = true;
  EXPECT_EQ(count_free_params(s), 15800);
  s.variant = FatVariant::RawEndToEnd;
  s.n_f = 100;
  s.reconstruction = false;
  EXPECT_EQ(count_free_params(s), 217200);
  s.reconstruction = true;
  EXPECT_EQ(count_free_params(s), 227300);
}

TEST(ParamCount, FactorSixHundredExample) {
  FatLayerSpec basic;
  basic.n_d = 300000;
  basic.n_h = 100;
  FatLayerSpec diet;
  diet.variant = FatVariant::DietFixed;
  diet.n_f = 500;
  diet.n_h = 100;
  diet.aux_bias = false;
  EXPECT_EQ(count_free_params(basic), 30000000);
  EXPECT_EQ(count_free_params(diet), 50000);
  EXPECT_EQ(count_free_params(basic) % count_free_params(diet), 0);
  EXPECT_EQ(count_free_params(basic) / count_free_params(diet), 600);
}

TEST(ParamCount, Formatting) {
  EXPECT_EQ(format_params(31534500), "31.5M");
  EXPECT_EQ(format_params(63069000), "63.1M");
  EXPECT_EQ(format_params(10100), "10.1k");
  EXPECT_EQ(format_params(15800), "15.8k");
  EXPECT_EQ(format_params(227300), "227.3k");
  EXPECT_EQ(format_params(999), "999");
  EXPECT_EQ(format_params(-1), "-");
}

TEST(ParamCount, SpecCountsAgreeWithBuiltModels) {
  const auto d = tiny();
  for (auto kind : {EmbeddingKind::RandomProjection, EmbeddingKind::ClassHistogram,
                    EmbeddingKind::OneHot, EmbeddingKind::Learnt, EmbeddingKind::Snp2Vec})
    for (bool recon : {false, true}) {
      ModelSpec spec;
      spec.embedding.kind = kind;
      spec.embedding.dim = 7;
      spec.embedding.dae.hidden_dim = 6;
      spec.embedding.dae.epochs = 1;
      spec.config.hidden = {9, 9};
      spec.config.embed_hidden = 5;
      spec.config.reconstruction = recon;
      const auto split = make_folds(d, 5, 1);
      const auto fold = prepare_fold(d, split, 0);
      const auto e = build_embedding(spec.embedding, d, fold.train_rows, fold.x_train);
      const auto m = make_model(d, &e, spec.config);
      EXPECT_EQ(*fat_params_for(spec, d.n_snps(), d.n_classes(),
                                static_cast<Index>(fold.train_rows.size())),
                static_cast<std::int64_t>(m.fat_param_count()))
          << to_string(kind) << " recon " << recon;
    }
}

TEST(Cv, ConstantPredictorOnBalancedClasses) {
  // Two balanced classes, 10 per fold: predicting class 0 is wrong half the time.
  std::vector<PopulationModel> pops{{"P", "R1", std::vector<double>(5, 0.3), 25},
                                    {"Q", "R2", std::vector<double>(5, 0.7), 25}};
  const auto d = synthesize(pops, 3);
  const auto r = run_cv(d, "const", constant_trainer(0), CvOptions{});
  ASSERT_EQ(r.fold_errors.size(), 5u);
  for (double e : r.fold_errors) EXPECT_DOUBLE_EQ(e, 0.5);
  EXPECT_DOUBLE_EQ(r.mean_error, 0.5);
  EXPECT_DOUBLE_EQ(r.std_error, 0.0);
  EXPECT_EQ(r.class_confusion(0, 0), 25);
  EXPECT_EQ(r.class_confusion(1, 0), 25);
}

TEST(Cv, PerfectPredictorGivesDiagonal) {
  const auto d = tiny();
  const auto r = run_cv(d, "oracle", oracle_trainer(), CvOptions{});
  EXPECT_EQ(r.mean_error, 0.0);
  EXPECT_EQ(r.class_confusion.sum(), d.n_samples());
  const CountMatrix diag = r.class_confusion.diagonal().asDiagonal();
  EXPECT_EQ(r.class_confusion, diag);
  EXPECT_EQ(r.region_confusion(0, 0), 20);
}

TEST(Cv, AggregatesMatchRecomputation) {
  const auto d = tiny();
  const auto r = run_cv(d, "noisy", noisy_trainer(d.n_classes()), CvOptions{});
  EXPECT_EQ(r.class_confusion.sum(), d.n_samples());
  std::int64_t tested = 0;
  double mean = 0;
  for (const auto& f : r.folds) {
    tested += static_cast<std::int64_t>(f.truth.size());
    mean += f.error;
  }
  mean /= 5.0;
  EXPECT_EQ(tested, d.n_samples());
  EXPECT_NEAR(r.mean_error, mean, 1e-15);
  double ss = 0;
  for (const auto& f : r.folds) ss += (f.error - mean) * (f.error - mean);
  EXPECT_NEAR(r.std_error, std::sqrt(ss / 4.0), 1e-15);
  EXPECT_GE(accuracy(r.region_confusion), accuracy(r.class_confusion));
  EXPECT_EQ(r.region_confusion.sum(), r.class_confusion.sum());
}

TEST(Cv, SampleStd) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_NEAR(sample_std(v), std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(sample_std(std::vector<double>{2.0}), 0.0);
}

TEST(Cv, FailureKeepsPartialReport) {
  const auto d = tiny();
  FoldTrainer t = [](const FoldData& f) {
    if (f.test_fold == 2) throw Error("boom");
    FoldOutcome o;
    o.predicted = f.y_test;
    return o;
  };
  try {
    run_cv(d, "flaky", t, CvOptions{5, 1, 2});
    FAIL();
  } catch (const CvError& e) {
    EXPECT_NE(std::string(e.what()).find("fold 2: boom"), std::string::npos);
    EXPECT_EQ(e.partial().folds.size(), 4u);
    EXPECT_EQ(e.partial().folds[2].fold, 3);
  }
  EXPECT_THROW(run_cv(d, "x", oracle_trainer(), CvOptions{2, 1, 1}), Error);
}

TEST(Cv, RealTrainingIsScheduleIndependent) {
  const auto d = tiny();
  ModelSpec spec;
  spec.embedding.kind = EmbeddingKind::ClassHistogram;
  spec.config.hidden = {12, 12};
  spec.config.max_epochs = 15;
  spec.config.reconstruction = true;
  spec.config.gamma = 1.0;
  const auto a = run_cv(d, spec, CvOptions{5, 1, 1});
  const auto b = run_cv(d, spec, CvOptions{5, 1, 3});
  ASSERT_EQ(a.folds.size(), b.folds.size());
  for (std::size_t t = 0; t < a.folds.size(); ++t) {
    EXPECT_EQ(a.folds[t].predicted, b.folds[t].predicted);
    EXPECT_EQ(a.folds[t].checkpoint, b.folds[t].checkpoint);
  }
  EXPECT_EQ(a.mean_error, b.mean_error);
  EXPECT_EQ(a.fat_params, 2 * (12 * 12 + 12));

  ModelSpec pca;
  pca.kind = ModelKind::Pca;
  pca.pcs = 3;
  pca.config.max_epochs = 15;
  const auto p1 = run_cv(d, pca, CvOptions{5, 1, 1});
  const auto p3 = run_cv(d, pca, CvOptions{5, 1, 4});
  EXPECT_EQ(p1.mean_error, p3.mean_error);
  EXPECT_EQ(p1.fat_params, -1);
  EXPECT_EQ(pca.descriptor(), "pca3/linear");
}

TEST(FoldSeed, DistinctPerFold) {
  EXPECT_NE(fold_seed(1, 0), fold_seed(1, 1));
  EXPECT_NE(fold_seed(1, 0), fold_seed(2, 0));
  EXPECT_EQ(fold_seed(7, 3), fold_seed(7, 3));
}

TEST(Writers, CsvTextAndSvg) {
  const auto d = tiny();
  const auto r = run_cv(d, "noisy", noisy_trainer(d.n_classes()), CvOptions{});
  std::ostringstream cv;
  write_cv_csv(cv, r);
  const std::string cv_text = cv.str();
  EXPECT_EQ(cv_text.rfind("fold,n_test,error\n", 0), 0u);
  EXPECT_EQ(std::count(cv_text.begin(), cv_text.end(), '\n'), 8);
  EXPECT_NE(cv_text.find("\nmean,,"), std::string::npos);

  std::ostringstream cm;
  write_confusion_csv(cm, r.region_confusion, r.regions);
  std::istringstream lines(cm.str());
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  EXPECT_EQ(header, "true\\predicted,A,B,C");
  EXPECT_EQ(first.substr(0, 2), "A,");

  std::ostringstream txt;
  write_confusion_text(txt, r.class_confusion, r.classes);
  EXPECT_NE(txt.str().find("row percentages"), std::string::npos);

  std::ostringstream svg;
  const std::vector<std::string> odd{"a<b", "c&d", "e", "f"};
  write_confusion_svg(svg, r.class_confusion, odd, "t\"1\"");
  const std::string s = svg.str();
  EXPECT_NE(s.find("a&lt;b"), std::string::npos);
  EXPECT_NE(s.find("c&amp;d"), std::string::npos);
  EXPECT_EQ(s.find("a<b"), std::string::npos);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 2 + 4 * (2 + 4) + 1);

  std::ostringstream sum;
  const std::vector<std::string> names{"noisy"};
  const std::vector<CvReport> reports{r};
  write_summary_csv(sum, names, reports);
  EXPECT_EQ(sum.str(), "model,descriptor,mean_error,std_error,fat_params\nnoisy,noisy," +
                           format_double(r.mean_error) + "," + format_double(r.std_error) +
                           ",\n");
}
