#pragma once

#include <string>
#include <utility>
#include <vector>

#include "segdesc/config.hpp"
#include "segdesc/dataset_io.hpp"
#include "segdesc/eval.hpp"
#include "segdesc/models.hpp"
#include "segdesc/nn/checkpoint.hpp"

namespace segdesc {

// End-to-end steps shared by the command line tool and the acceptance
// checks. Every step is deterministic for a fixed config.

struct GenerateSummary {
  int segments = 0;
  int groups = 0;
  int dropped_views = 0;
  int dropped_groups = 0;
  std::string dataset_path;
};

/// Writes <out_dir>/segments.segd.
GenerateSummary run_generate(const PipelineConfig& cfg,
                             const std::string& out_dir);

struct PreprocessSummary {
  int input_segments = 0;
  int records = 0;
  int train_records = 0;
  int validation_records = 0;
  int test_records = 0;
  int alignment_failures = 0;
  int empty_voxelizations = 0;
  int dedup_removed = 0;
};

/// Aligns, splits group-atomically, augments the training split, voxelizes,
/// deduplicates within groups and fits normalization stats on the training
/// split. Writes voxels.svx, stats.bin and manifest.json under out_dir.
PreprocessSummary run_preprocess(const std::string& dataset_path,
                                 const PipelineConfig& cfg,
                                 const std::string& out_dir);

/// Normalized grids of one preprocessed directory, split into sample sets.
/// storage owns the grids; the sample sets point into it.
struct LoadedVoxelData {
  VoxelSet set;
  NormalizationStats stats;
  DatasetManifest manifest;
  std::vector<VoxelizedSegment> storage;
  SampleSet train;
  SampleSet validation;
  SampleSet test;
};

LoadedVoxelData load_voxel_dir(const std::string& voxel_dir);

/// method is one of group | siamese | contrastive.
TrainReport run_train(const std::string& method, const std::string& voxel_dir,
                      const PipelineConfig& cfg, const std::string& ckpt_path);

/// Rebuilds a descriptor net from a checkpoint (the "descriptor" stack).
DescriptorNet load_descriptor_net(nn::LoadedCheckpoint& ckpt);

/// Descriptors of every record in the directory, written as CSV
/// (segment_id,group_id,split,d0..dN), rows ascending by segment id.
void run_extract(const std::string& ckpt_path, const std::string& voxel_dir,
                 const std::string& csv_path);

/// Pair-classification ROC and candidate-match accuracy on the test split.
/// dataset_path supplies raw segments for the eigenvalue baseline and may be
/// empty when baseline_eigen is false. method "eigen" evaluates only the
/// baseline (no checkpoint needed). Writes report.csv and report.jsonl under
/// report_dir when nonempty.
std::vector<EvalReport> run_evaluate(const std::string& method,
                                     const std::string& ckpt_path,
                                     const std::string& voxel_dir,
                                     const std::string& dataset_path,
                                     bool baseline_eigen,
                                     const PipelineConfig& cfg,
                                     const std::string& report_dir);

struct BenchSummary {
  double default_rate = 0.0;  // segments/second, 0 = not run
  double small_rate = 0.0;
  double model_rate = 0.0;
};

/// preset_mode is default | small | both; a nonempty ckpt_path additionally
/// benchmarks the stored model.
BenchSummary run_bench(const std::string& ckpt_path,
                       const std::string& preset_mode,
                       const PipelineConfig& cfg);

struct GradcheckReport {
  double stack_max_err = 0.0;
  double loss_max_err = 0.0;
  std::vector<std::pair<std::string, double>> checks;
  double seconds = 0.0;
};

/// Finite-difference verification over representative stacks (conv3d,
/// maxpool3d, dense, relu, sigmoid, softmax, dropout) and the three losses.
GradcheckReport run_gradcheck();

}  // namespace segdesc
