#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "segdesc/config.hpp"
#include "segdesc/error.hpp"
#include "segdesc/pipeline.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

segdesc::PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return segdesc::PipelineConfig{};
  return segdesc::PipelineConfig::from_file(path);
}

void print_report(const segdesc::TrainReport& report) {
  std::printf("regime: %s\n", report.regime.c_str());
  for (const auto& e : report.epochs) {
    std::printf("epoch %3d  loss %.4f  metric %.4f", e.epoch, e.train_loss,
                e.train_metric);
    if (!std::isnan(e.val_loss)) std::printf("  val_loss %.4f", e.val_loss);
    if (!std::isnan(e.val_metric)) std::printf("  val_metric %.4f", e.val_metric);
    std::printf("  (%.1fs)\n", e.seconds);
  }
  for (const auto& note : report.notes) {
    std::printf("note: %s\n", note.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned point-cloud segment descriptors: synthetic data, "
               "preprocessing, training, retrieval evaluation"};
  app.require_subcommand(1);

  std::string config_path, in_path, out_path, model_path, dataset_path;
  std::string method, preset = "both";
  bool baseline_eigen = false;

  auto* generate = app.add_subcommand("generate", "Generate a synthetic dataset");
  generate->add_option("--spec", config_path, "config file (key=value)");
  generate->add_option("--out", out_path, "output directory")->required();

  auto* preprocess =
      app.add_subcommand("preprocess", "Align, voxelize and normalize a dataset");
  preprocess->add_option("--in", in_path, "dataset file or directory")->required();
  preprocess->add_option("--config", config_path, "config file");
  preprocess->add_option("--out", out_path, "output directory")->required();

  auto* train = app.add_subcommand("train", "Train a descriptor model");
  train->add_option("--method", method, "group | siamese | contrastive")
      ->required();
  train->add_option("--in", in_path, "preprocessed directory")->required();
  train->add_option("--preset", preset, "default | small (overrides config)");
  train->add_option("--config", config_path, "config file");
  train->add_option("--out", out_path, "checkpoint path")->required();

  auto* extract = app.add_subcommand("extract", "Write descriptors as CSV");
  extract->add_option("--model", model_path, "checkpoint path")->required();
  extract->add_option("--in", in_path, "preprocessed directory")->required();
  extract->add_option("--out", out_path, "output CSV path")->required();

  auto* evaluate =
      app.add_subcommand("evaluate", "ROC and candidate-match evaluation");
  evaluate->add_option("--method", method,
                       "group | siamese | contrastive | eigen")
      ->required();
  evaluate->add_option("--model", model_path, "checkpoint path");
  evaluate->add_option("--in", in_path, "preprocessed directory")->required();
  evaluate->add_option("--dataset", dataset_path,
                       "segments file (for the eigenvalue baseline)");
  evaluate->add_flag("--baseline-eigen", baseline_eigen,
                     "also evaluate the eigenvalue baseline");
  evaluate->add_option("--config", config_path, "config file");
  evaluate->add_option("--out", out_path, "report directory");

  auto* bench = app.add_subcommand("bench", "Descriptor throughput benchmark");
  bench->add_option("--model", model_path, "checkpoint path (optional)");
  bench->add_option("--preset", preset, "default | small | both");
  bench->add_option("--config", config_path, "config file");

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference verification of the network gradients");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      const auto cfg = load_config(config_path);
      const auto summary = segdesc::run_generate(cfg, out_path);
      std::printf("wrote %s: %d segments in %d groups (%d views dropped, %d "
                  "groups empty)\n",
                  summary.dataset_path.c_str(), summary.segments,
                  summary.groups, summary.dropped_views,
                  summary.dropped_groups);
    } else if (preprocess->parsed()) {
      const auto cfg = load_config(config_path);
      const auto s = segdesc::run_preprocess(in_path, cfg, out_path);
      std::printf("voxelized %d segments -> %d records (train %d / val %d / "
                  "test %d); %d alignment failures, %d empty voxelizations, "
                  "%d near-duplicates removed\n",
                  s.input_segments, s.records, s.train_records,
                  s.validation_records, s.test_records, s.alignment_failures,
                  s.empty_voxelizations, s.dedup_removed);
    } else if (train->parsed()) {
      auto cfg = load_config(config_path);
      if (!train->get_option("--preset")->empty()) cfg.preset = preset;
      const auto report = segdesc::run_train(method, in_path, cfg, out_path);
      print_report(report);
      std::printf("checkpoint written to %s\n", out_path.c_str());
    } else if (extract->parsed()) {
      segdesc::run_extract(model_path, in_path, out_path);
      std::printf("descriptors written to %s\n", out_path.c_str());
    } else if (evaluate->parsed()) {
      const auto cfg = load_config(config_path);
      if (method != "eigen" && model_path.empty()) {
        throw segdesc::UsageError("evaluate: --model is required for method " +
                                  method);
      }
      const auto reports = segdesc::run_evaluate(
          method, model_path, in_path, dataset_path, baseline_eigen, cfg,
          out_path);
      for (const auto& r : reports) {
        std::printf("%-12s auc %.4f  candidate-match %.4f (%d eligible, %d "
                    "excluded)\n",
                    r.method.c_str(), r.roc.auc, r.candidate.accuracy,
                    r.candidate.eligible, r.candidate.excluded);
      }
      if (!out_path.empty()) {
        std::printf("reports written to %s\n", out_path.c_str());
      }
    } else if (bench->parsed()) {
      const auto cfg = load_config(config_path);
      const auto s = segdesc::run_bench(model_path, preset, cfg);
      if (s.default_rate > 0) {
        std::printf("default preset: %.1f segments/s\n", s.default_rate);
      }
      if (s.small_rate > 0) {
        std::printf("small preset:   %.1f segments/s\n", s.small_rate);
      }
      if (s.model_rate > 0) {
        std::printf("model:          %.1f segments/s\n", s.model_rate);
      }
    } else if (gradcheck->parsed()) {
      const auto report = segdesc::run_gradcheck();
      for (const auto& [name, err] : report.checks) {
        std::printf("%-45s max rel err %.3g\n", name.c_str(), err);
      }
      std::printf("stacks: %.3g (tolerance 1e-4), losses: %.3g (tolerance "
                  "1e-6), %.1fs\n",
                  report.stack_max_err, report.loss_max_err, report.seconds);
      if (report.stack_max_err >= 1e-4 || report.loss_max_err >= 1e-6) {
        std::fprintf(stderr, "gradient check above tolerance\n");
        return kExitNumeric;
      }
    }
  } catch (const segdesc::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const segdesc::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const segdesc::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return 0;
}
