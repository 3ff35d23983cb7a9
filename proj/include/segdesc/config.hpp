#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "segdesc/dataset.hpp"
#include "segdesc/nn/optimizer.hpp"
#include "segdesc/preprocessing.hpp"

namespace segdesc {

/// Every tunable of the pipeline with its default, overridable from a plain
/// key=value file ('#' starts a comment). Unknown keys are usage errors.
struct PipelineConfig {
  // synthetic generation
  int n_groups = 300;
  int views_per_group = 8;
  double box_weight = 1.0;
  double cylinder_weight = 1.0;
  double l_shape_weight = 1.0;
  double wall_weight = 1.0;
  double size_min = 0.8;
  double size_max = 4.0;
  double occlusion_fraction = 0.3;
  double view_angle_range_deg = 360.0;
  double point_density = 140.0;
  double noise_sigma = 0.02;
  int min_view_points = 40;
  std::string run_id = "synth";

  // preprocessing
  double d_same = 1.5;
  int th_h = 50;
  double cluster_radius = 0.2;
  int min_cluster_points = 100;
  std::vector<double> augmentation_angles_deg{-15.0, -7.5, 0.0, 7.5, 15.0};
  int grid_nx = 38;
  int grid_ny = 38;
  int grid_nz = 18;
  double voxel_size = 0.2;
  double norm_epsilon = 1e-8;
  double split_train = 0.6;
  double split_validation = 0.2;

  // descriptor network and training
  std::string preset = "default";  // default | small
  int descriptor_dim = 64;
  double dropout_group = 0.2;
  double dropout_siamese = 0.3;
  double dropout_contrastive = 0.2;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 10;
  int min_group_size = 8;
  int n_pos = 512;           // sampled pairs per label (siamese, contrastive)
  double margin = 1.0;
  int k_hard = 0;            // 0 means 4 * batch_size
  double subsample_ratio = 0.5;
  std::uint64_t seed = 1;

  // evaluation
  int eval_n_pos = 500;
  int pair_classifier_epochs = 60;
  double pair_classifier_lr = 0.05;
  int bench_repetitions = 10;
  int bench_batch_count = 64;

  static PipelineConfig from_file(const std::string& path);
  void apply(const std::string& key, const std::string& value);

  SyntheticSpec synthetic_spec() const;
  PreprocessConfig preprocess_config() const;
  VoxelGridSpec grid_spec() const;
  nn::SgdConfig sgd_config() const;
  int effective_k_hard() const { return k_hard > 0 ? k_hard : 4 * batch_size; }

  nlohmann::json to_json() const;
};

}  // namespace segdesc
