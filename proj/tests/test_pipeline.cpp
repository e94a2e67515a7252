#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "dietnet/pipeline.hpp"

using namespace dietnet;
using namespace dietnet::pipeline;

namespace {

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::path(::testing::TempDir()) / (std::string("dietnet_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    write_text(p, text);
    return p;
  }

  // 4 populations x 10 samples, 40 SNPs; cache at dir/tiny.cache.
  fs::path tiny_cache() {
    const auto spec = write("tiny.json", R"({
      "seed": 5, "samples_per_population": 10,
      "blocks": {"populations": 4, "snps": 40, "high": 0.9, "low": 0.1},
      "names": ["A1", "A2", "B1", "C1"], "regions": ["A", "A", "B", "C"]})");
    std::ostringstream log;
    cmd_synth({spec, dir_ / "tiny.cache", std::nullopt}, log);
    return dir_ / "tiny.cache";
  }

  fs::path dir_;
};

const char* kSmallTrain = R"("train": {"hidden": [8, 8], "embed_hidden": 6, "max_epochs": 3})";

}  // namespace

TEST_F(PipelineTest, SynthWritesCountsAndIsDeterministic) {
  const auto spec = write("s.json", R"({"seed": 9, "samples_per_population": 7,
    "blocks": {"populations": 3, "snps": 25, "high": 0.8, "low": 0.2}})");
  std::ostringstream log;
  const auto d = cmd_synth({spec, dir_ / "a.cache", dir_ / "a.raw"}, log);
  cmd_synth({spec, dir_ / "b.cache", std::nullopt}, log);
  EXPECT_EQ(d.n_samples(), 21);
  EXPECT_EQ(d.n_snps(), 25);
  EXPECT_EQ(d.n_classes(), 3);
  EXPECT_EQ(read_file(dir_ / "a.cache"), read_file(dir_ / "b.cache"));
  EXPECT_NE(log.str().find("POP0: 7"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "a.cache.manifest.json"));
  const auto text = load_text(dir_ / "a.raw", dir_ / "a.raw.panel", std::nullopt);
  EXPECT_EQ(text.genotypes, d.genotypes);
  EXPECT_EQ(text.labels, d.labels);
}

TEST_F(PipelineTest, SynthSpecValidation) {
  EXPECT_THROW(synth_from_spec(json::parse(R"({"seed": 1, "samples_per_population": 2})")),
               ConfigError);
  EXPECT_THROW(synth_from_spec(json::parse(
                   R"({"seed": 1, "samples_per_population": 2, "colour": 3,
                       "blocks": {"populations": 2, "snps": 4, "high": 0.9, "low": 0.1}})")),
               ConfigError);
  EXPECT_THROW(synth_from_spec(json::parse(
                   R"({"seed": 1, "blocks": {"populations": 2, "snps": 4, "high": 0.9, "low": 0.1}})")),
               ConfigError);
  const auto d = synth_from_spec(json::parse(
      R"({"seed": 1, "samples_per_population": 4,
          "drifted": {"populations": 3, "snps": 10, "drift": 0.1}})"));
  EXPECT_EQ(d.n_samples(), 12);
}

TEST_F(PipelineTest, PreprocessDefaultsAndRepeatability) {
  const auto spec = write("s.json", R"({"seed": 3, "samples_per_population": 15,
    "blocks": {"populations": 2, "snps": 60, "high": 0.97, "low": 0.02}})");
  std::ostringstream log;
  cmd_synth({spec, dir_ / "s.cache", dir_ / "s.raw"}, log);
  PreprocessOptions o;
  o.raw = dir_ / "s.raw";
  o.panel = dir_ / "s.raw.panel";
  o.out = dir_ / "p1.cache";
  EXPECT_EQ(o.maf, 0.05);
  EXPECT_EQ(o.ld_window, 50u);
  EXPECT_EQ(o.ld_step, 5u);
  EXPECT_EQ(o.r2, 0.5);
  const auto s = cmd_preprocess(o, log);
  o.out = dir_ / "p2.cache";
  cmd_preprocess(o, log);
  EXPECT_EQ(read_file(dir_ / "p1.cache"), read_file(dir_ / "p2.cache"));
  EXPECT_EQ(s.snps_in, 60);
  EXPECT_LE(s.snps_out, s.snps_after_maf);
  EXPECT_EQ(load_cache(dir_ / "p1.cache").n_snps(), s.snps_out);
  EXPECT_EQ(read_file(dir_ / "p1.cache.manifest.json"), read_file(dir_ / "p2.cache.manifest.json"));
  o.maf = 0.7;
  EXPECT_THROW(cmd_preprocess(o, log), ConfigError);
}

TEST_F(PipelineTest, ConfigRejectsUnknownAndInconsistentKeys) {
  const auto cache = tiny_cache();
  auto parse = [&](const std::string& body) {
    return parse_run_config(json::parse(body), dir_ / "c.json");
  };
  EXPECT_THROW(parse(R"({"dataset": "tiny.cache", "modles": []})"), ConfigError);
  EXPECT_THROW(parse(R"({"dataset": "tiny.cache", "models": [{"name": "x", "variant": "diet",
      "embedding": {"kind": "class_histogram"}, "gamma": 10}]})"),
               ConfigError);
  EXPECT_THROW(parse(R"({"dataset": "tiny.cache", "models": [{"name": "x", "variant": "wide"}]})"),
               ConfigError);
  EXPECT_THROW(parse(R"({"dataset": "missing.cache", "baselines": [{"name": "p", "pcs": 2}]})"),
               ConfigError);
  EXPECT_THROW(parse(R"({"dataset": "tiny.cache", "baselines": [{"name": "p", "pcs": 2},
      {"name": "p", "pcs": 3}]})"),
               ConfigError);
  EXPECT_THROW(parse(R"({"dataset": "tiny.cache", "baselines": [{"name": "p", "pcs": 2,
      "train": {"learning_rate": 1}}]})"),
               ConfigError);
  const auto rc = parse(R"({"dataset": "tiny.cache", "output_dir": "out", "seed": 4,
      "models": [{"name": "m", "variant": "diet", "embedding": {"kind": "random_projection",
      "dim": 7}, "train": {"max_norm": null, "dropout": 0.2}}]})");
  EXPECT_EQ(*rc.dataset, cache);
  EXPECT_EQ(rc.output_dir, dir_ / "out");
  EXPECT_EQ(rc.models[0].embedding.dim, 7);
  EXPECT_EQ(rc.models[0].embedding.seed, 4u);
  EXPECT_FALSE(rc.models[0].config.max_norm.has_value());
  EXPECT_EQ(rc.models[0].config.dropout, 0.2);
  EXPECT_EQ(rc.models[0].config.seed, 4u);
}

TEST_F(PipelineTest, OutputDirectoryFallbacks) {
  tiny_cache();
  const auto j = json::parse(R"({"dataset": "tiny.cache", "baselines": [{"name": "p", "pcs": 2}]})");
  ::setenv(kOutputRootEnv, (dir_ / "root").c_str(), 1);
  EXPECT_EQ(parse_run_config(j, dir_ / "exp.json").output_dir, dir_ / "root" / "exp");
  ::unsetenv(kOutputRootEnv);
  EXPECT_EQ(parse_run_config(j, dir_ / "exp.json").output_dir, fs::path("runs") / "exp");
  RunOverrides ov;
  ov.output_dir = dir_ / "forced";
  EXPECT_EQ(parse_run_config(j, dir_ / "exp.json", ov).output_dir, dir_ / "forced");
}

TEST_F(PipelineTest, DryRunPrintsParameterColumn) {
  tiny_cache();
  const auto cfg = write("dry.json", std::string(R"({"dataset": "tiny.cache", "output_dir": "o", )") +
                                         kSmallTrain + R"(, "models": [
      {"name": "Basic", "variant": "basic"},
      {"name": "Hist", "variant": "diet", "embedding": {"kind": "class_histogram"},
       "gamma": 10, "reconstruction": true}],
      "baselines": [{"name": "PCA", "pcs": 3}]})");
  std::ostringstream out, log;
  const auto r = cmd_run(load_run_config(cfg), true, out, log);
  EXPECT_TRUE(r.reports.empty());
  EXPECT_FALSE(fs::exists(dir_ / "o"));
  const std::string s = out.str();
  EXPECT_NE(s.find("Basic  320"), std::string::npos) << s;  // 40 x 8
  EXPECT_NE(s.find("Hist   208"), std::string::npos) << s;  // 2 x (12 x 8 + 8)
  EXPECT_NE(s.find("PCA    -"), std::string::npos) << s;
}

TEST_F(PipelineTest, RunWritesSummaryAndIsRepeatable) {
  tiny_cache();
  const std::string body = std::string(R"({"dataset": "tiny.cache", )") + kSmallTrain +
                           R"(, "models": [{"name": "Basic net", "variant": "basic"}],
      "baselines": [{"name": "PCA 3", "pcs": 3}]})";
  const auto cfg = write("run.json", body);
  std::ostringstream out, log;
  RunOverrides ov;
  ov.output_dir = dir_ / "r1";
  const auto r = cmd_run(load_run_config(cfg, ov), false, out, log);
  ASSERT_EQ(r.reports.size(), 2u);
  const auto rows = read_csv(dir_ / "r1" / "summary.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "Basic net");
  EXPECT_EQ(rows[1][4], "320");
  EXPECT_EQ(rows[2][4], "");
  for (const char* f : {"descriptor.txt", "cv.csv", "confusion_class.csv",
                        "confusion_class_normalized.csv", "confusion_region.csv",
                        "confusion_region_normalized.csv", "confusion.txt", "confusion_class.svg",
                        "confusion_region.svg", "fold0/history.csv", "fold4/predictions.csv",
                        "fold2/checkpoint.bin"})
    EXPECT_TRUE(fs::exists(dir_ / "r1" / "basic_net" / f)) << f;
  EXPECT_TRUE(fs::exists(dir_ / "r1" / "pca_3" / "cv.csv"));
  std::ifstream ckpt_in(dir_ / "r1" / "basic_net" / "fold2" / "checkpoint.bin", std::ios::binary);
  const auto ckpt = read_checkpoint(ckpt_in);
  EXPECT_EQ(ckpt.header.at("fold"), "2");

  ov.output_dir = dir_ / "r2";
  ov.jobs = 3;
  cmd_run(load_run_config(cfg, ov), false, out, log);
  for (const char* f : {"summary.csv", "basic_net/cv.csv", "pca_3/confusion_class.csv",
                        "basic_net/fold1/checkpoint.bin"})
    EXPECT_EQ(read_file(dir_ / "r1" / f), read_file(dir_ / "r2" / f)) << f;

  std::ostringstream rep;
  cmd_report(dir_ / "r1", true, rep);
  EXPECT_EQ(rep.str().substr(0, read_file(dir_ / "r1" / "summary.txt").size()),
            read_file(dir_ / "r1" / "summary.txt"));
  EXPECT_NE(rep.str().find("Basic net: region level"), std::string::npos);

  const auto manifest = json::parse(read_file(dir_ / "r1" / "manifest.json"));
  EXPECT_EQ(manifest.at("command"), "run");
  EXPECT_EQ(manifest.at("inputs").size(), 1u);
}

TEST_F(PipelineTest, AllEmbeddingsPlusPcaGiveOneRowEach) {
  tiny_cache();
  const auto cfg = write("all.json", std::string(R"({"dataset": "tiny.cache", "output_dir": "o", )") +
                                         R"("train": {"hidden": [6, 6], "embed_hidden": 4, "max_epochs": 2},
      "models": [
        {"name": "Raw end2end", "variant": "diet", "embedding": {"kind": "learnt"}},
        {"name": "Random projection", "variant": "diet", "embedding": {"kind": "random_projection", "dim": 5}},
        {"name": "SNP2Vec", "variant": "diet", "embedding": {"kind": "snp2vec", "dae": {"hidden": 5, "epochs": 2}}},
        {"name": "Per class histograms", "variant": "diet", "embedding": {"kind": "class_histogram"}},
        {"name": "One hot", "variant": "diet", "embedding": {"kind": "one_hot"}}],
      "baselines": [{"name": "PCA 2", "pcs": 2}, {"name": "PCA 4 mlp", "pcs": 4, "head": [5, 5]}]})");
  std::ostringstream out, log;
  const auto r = cmd_run(load_run_config(cfg), false, out, log);
  EXPECT_EQ(r.reports.size(), 7u);
  const auto rows = read_csv(dir_ / "o" / "summary.csv");
  EXPECT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[3][1], "diet/snp2vec/gamma=0");
  EXPECT_EQ(rows[7][1], "pca4/mlp-5-5");
  EXPECT_EQ(rows[4][4], std::to_string(12 * 6 + 6));
}

TEST_F(PipelineTest, GradcheckEchoesDimensionsAndPasses) {
  GradcheckOptions o;
  o.n_d = 9;
  o.classes = 2;
  o.samples_per_class = 3;
  o.hidden = {4, 3};
  std::ostringstream out;
  EXPECT_TRUE(cmd_gradcheck(o, out));
  const std::string s = out.str();
  EXPECT_EQ(s.rfind("gradient check: n_d=9 samples=6 classes=2 hidden=4,3", 0), 0u) << s;
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + 24 + 1);
  EXPECT_NE(s.find("all checks passed"), std::string::npos);
}

TEST(Slug, Names) {
  EXPECT_EQ(slug("PCA (10 PCs) + linear"), "pca_10_pcs_linear");
  EXPECT_EQ(slug("***"), "model");
}
