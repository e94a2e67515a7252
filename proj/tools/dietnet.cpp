// dietnet: preprocess genotypes, synthesize datasets, run cross-validated
// experiments, check gradients and re-render reports.

#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "dietnet/pipeline.hpp"

namespace dp = dietnet::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Diet Networks for genotype-based population classification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", dp::kVersion);

  dp::PreprocessOptions pre;
  std::string pre_regions;
  auto* preprocess = app.add_subcommand("preprocess", "Parse, label, MAF-filter and LD-prune genotypes");
  preprocess->add_option("--raw", pre.raw, "Additive-coded genotype table (.raw)")->required();
  preprocess->add_option("--panel", pre.panel, "Sample panel: sample population [region]")->required();
  preprocess->add_option("--regions", pre_regions, "Population-to-region table");
  preprocess->add_option("--maf", pre.maf, "Minimum minor allele frequency (0 disables)")
      ->capture_default_str();
  preprocess->add_option("--ld-window", pre.ld_window, "LD window size in SNPs")
      ->capture_default_str()
      ->check(CLI::Range(2, 1 << 30));
  preprocess->add_option("--ld-step", pre.ld_step, "LD window step in SNPs")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  preprocess->add_option("--r2", pre.r2, "Maximum within-window r^2")->capture_default_str();
  preprocess->add_option("-o,--out", pre.out, "Output genotype cache")->required();

  dp::SynthOptions synth;
  std::string synth_raw;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset from a JSON spec");
  synth_cmd->add_option("spec", synth.spec, "Synthesis spec (JSON)")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("-o,--out", synth.out, "Output genotype cache")->required();
  synth_cmd->add_option("--raw", synth_raw, "Also write a .raw table and <raw>.panel");

  std::string run_config;
  dp::RunOverrides ov;
  std::string run_output;
  std::uint64_t run_seed = 0;
  int run_jobs = 0, run_epochs = 0;
  bool dry_run = false;
  auto* run = app.add_subcommand("run", "Cross-validate the configured models and baselines");
  run->add_option("config", run_config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--output", run_output, "Output directory (overrides the config)");
  run->add_option("--seed", run_seed, "Seed (overrides the config)");
  run->add_option("--jobs", run_jobs, "Folds trained in parallel")->check(CLI::PositiveNumber);
  run->add_option("--max-epochs", run_epochs, "Epoch cap for every model")->check(CLI::PositiveNumber);
  run->add_flag("--dry-run", dry_run, "Validate the config and print parameter counts only");

  dp::GradcheckOptions gc;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the full model");
  grad->add_option("--n-d", gc.n_d, "Number of SNPs")->capture_default_str();
  grad->add_option("--classes", gc.classes, "Number of classes")->capture_default_str();
  grad->add_option("--samples-per-class", gc.samples_per_class, "Samples per class")
      ->capture_default_str();
  grad->add_option("--hidden", gc.hidden, "Hidden layer sizes")->capture_default_str();
  grad->add_option("--embedding-dim", gc.embedding_dim, "Embedding width")->capture_default_str();
  grad->add_option("--seed", gc.seed, "Seed")->capture_default_str();
  grad->add_option("--tol", gc.tolerance, "Relative error tolerance")->capture_default_str();
  grad->add_option("--smooth-tol", gc.smooth_tolerance, "Tolerance for the smooth configurations")
      ->capture_default_str();

  std::string report_dir;
  bool report_confusion = false;
  auto* report = app.add_subcommand("report", "Print the summary table of a finished run");
  report->add_option("run_dir", report_dir, "Run output directory")->required()->check(CLI::ExistingDirectory);
  report->add_flag("--confusion", report_confusion, "Also print the confusion matrices");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*preprocess) {
      if (!pre_regions.empty()) pre.regions = pre_regions;
      dp::cmd_preprocess(pre, std::cout);
    } else if (*synth_cmd) {
      if (!synth_raw.empty()) synth.raw = synth_raw;
      dp::cmd_synth(synth, std::cout);
    } else if (*run) {
      if (!run_output.empty()) ov.output_dir = run_output;
      if (run->count("--seed")) ov.seed = run_seed;
      if (run_jobs > 0) ov.jobs = run_jobs;
      if (run_epochs > 0) ov.max_epochs = run_epochs;
      const auto rc = dp::load_run_config(run_config, ov);
      dp::cmd_run(rc, dry_run, std::cout, std::cerr);
    } else if (*grad) {
      return dp::cmd_gradcheck(gc, std::cout) ? 0 : 1;
    } else if (*report) {
      dp::cmd_report(report_dir, report_confusion, std::cout);
    }
  } catch (const dp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const dietnet::ProvenanceError& e) {
    std::cerr << "provenance error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
