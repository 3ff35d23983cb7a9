#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "segdesc/geometry.hpp"
#include "segdesc/nn/layers.hpp"
#include "segdesc/nn/optimizer.hpp"
#include "segdesc/preprocessing.hpp"

namespace segdesc {

/// Fixed-length real vector in Euclidean match space.
using Descriptor = std::vector<double>;

enum class NetPreset { standard, small, custom };
std::string preset_name(NetPreset preset);
NetPreset preset_from_name(const std::string& name);  // "default" | "small"

struct DescriptorNetConfig {
  NetPreset preset = NetPreset::standard;
  std::array<int, 3> grid_dims{38, 38, 18};
  int descriptor_dim = 64;
  double dropout_rate = 0.2;
  std::uint64_t seed = 1;
};

/// The shared descriptor-extraction network: a voxel grid goes in, a
/// D-dimensional descriptor comes out. All three training regimes reuse this
/// same stack; matching segments should land close in Euclidean space.
class DescriptorNet {
 public:
  /// Preset architectures; the small preset halves filter counts and the
  /// dense width for throughput.
  explicit DescriptorNet(const DescriptorNetConfig& cfg);
  /// Wraps a caller-built stack (tests, loaded checkpoints).
  DescriptorNet(const DescriptorNetConfig& cfg, nn::LayerStack stack);

  nn::LayerStack& stack() { return stack_; }
  const nn::LayerStack& stack() const { return stack_; }
  const DescriptorNetConfig& config() const { return cfg_; }
  int dim() const { return cfg_.descriptor_dim; }

 private:
  DescriptorNetConfig cfg_;
  nn::LayerStack stack_;
};

/// Scales every weight-bearing layer by one common factor so the mean
/// squared descriptor norm over the probe grids equals target. Exact while
/// biases are zero (the stack is positively homogeneous in its weights), so
/// call it before training; makes the contrastive margin meaningful on a
/// unit descriptor scale and keeps the heads out of saturation. Returns the
/// per-layer factor.
double calibrate_descriptor_scale(
    DescriptorNet& net, const std::vector<const VoxelizedSegment*>& probe,
    double target_mean_sq_norm = 1.0);

/// Deterministic infer-mode descriptor of one normalized grid.
Descriptor extract_descriptor(DescriptorNet& net, const VoxelizedSegment& v);

/// Batched extraction; elementwise equal to one-by-one calls.
std::vector<Descriptor> extract_descriptors(
    DescriptorNet& net, const std::vector<const VoxelizedSegment*>& grids,
    int batch_size = 32);

/// Unordered segment pair with a same-group label.
struct LabeledPair {
  std::int64_t id_a = 0;
  std::int64_t id_b = 0;
  int y = 0;  // 1 = same group
};

/// n_pos positive and n_pos negative pairs, unordered-unique, no self pairs,
/// deterministic per seed. Throws when the requested count exceeds the
/// achievable maximum (the message states it).
std::vector<LabeledPair> sample_pairs(const std::vector<SegmentGroup>& groups,
                                      int n_pos, std::uint64_t seed);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_metric = 0.0;  // accuracy (group, siamese) or candidate match
  double val_loss = 0.0;
  double val_metric = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::string regime;
  std::vector<EpochStats> epochs;
  std::vector<std::string> notes;

  /// Reference figures from the original full-scale KITTI experiments,
  /// recorded for context only; desk-scale runs are not expected to match.
  static std::string full_scale_reference(const std::string& regime);
};

/// One element of a training/evaluation set: a normalized grid with its
/// segment and ground-truth group ids.
struct SegmentSample {
  std::int64_t segment_id = 0;
  std::int64_t group_id = 0;
  const VoxelizedSegment* grid = nullptr;
};
using SampleSet = std::vector<SegmentSample>;

using GridLookup = std::unordered_map<std::int64_t, const VoxelizedSegment*>;
GridLookup make_grid_lookup(const SampleSet& samples);
std::vector<SegmentGroup> groups_of(const SampleSet& samples);

/// Dense + softmax head over the descriptor; class k corresponds to
/// class_group_ids[k].
struct GroupClassifier {
  nn::LayerStack head;
  std::vector<std::int64_t> class_group_ids;
};

struct GroupTrainResult {
  GroupClassifier classifier;
  TrainReport report;
};

/// Trains group membership as classification; the penultimate activations
/// (the descriptor-stack output) become the descriptor. Groups smaller than
/// min_group_size are dropped; at least two classes must remain.
GroupTrainResult train_group_classifier(DescriptorNet& net,
                                        const SampleSet& train,
                                        const SampleSet& val,
                                        int min_group_size,
                                        const nn::SgdConfig& cfg);

/// Symmetric merge head over |a - b|: dense 64 + relu, dense 1 + sigmoid.
struct SiameseHead {
  nn::LayerStack merge;
};

struct SiameseTrainResult {
  SiameseHead head;
  TrainReport report;
};

/// Twin branches evaluate the one shared stack (pairs run as a single
/// batch), so branch parameters are a single storage by construction.
SiameseTrainResult train_siamese(DescriptorNet& net,
                                 const std::vector<LabeledPair>& train_pairs,
                                 const SampleSet& data,
                                 const std::vector<LabeledPair>& val_pairs,
                                 const nn::SgdConfig& cfg);

/// Match probabilities for pairs, in order. Descriptors are extracted once
/// per distinct id.
std::vector<double> siamese_pair_scores(DescriptorNet& net, SiameseHead& head,
                                        const std::vector<LabeledPair>& pairs,
                                        const GridLookup& grids,
                                        int batch_size = 32);

struct MinedPairs {
  std::vector<LabeledPair> pairs;
  bool positive_shortfall = false;
  bool negative_shortfall = false;
};

/// Hard negatives are the k_hard closest cross-group descriptor pairs, hard
/// positives the k_hard farthest within-group pairs; each side is then
/// subsampled to the given fraction and the result balanced.
MinedPairs mine_hard_pairs(DescriptorNet& net, const SampleSet& data,
                           int k_hard, double subsample_ratio,
                           std::uint64_t seed);

struct MiningConfig {
  int n_pos_initial = 256;
  int k_hard = 128;
  double subsample_ratio = 0.5;
  std::uint64_t seed = 1;
};

/// Contrastive training: epoch 0 on randomly sampled pairs, later epochs on
/// hard pairs mined from an infer-mode descriptor snapshot taken at the end
/// of the previous epoch. The per-epoch metric is candidate-match accuracy.
TrainReport train_contrastive(DescriptorNet& net, const SampleSet& train,
                              const SampleSet& val, double margin,
                              const nn::SgdConfig& cfg,
                              const MiningConfig& mining);

}  // namespace segdesc
