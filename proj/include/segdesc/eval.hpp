#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "segdesc/models.hpp"

namespace segdesc {

struct IndexEntry {
  std::int64_t segment_id = 0;
  std::int64_t group_id = 0;
  Descriptor descriptor;
};

/// Flat descriptor store with uniform dimension and unique segment ids.
class DescriptorIndex {
 public:
  explicit DescriptorIndex(int dimension);

  void add(IndexEntry entry);
  const std::vector<IndexEntry>& entries() const { return entries_; }
  int dimension() const { return dimension_; }

 private:
  int dimension_;
  std::vector<IndexEntry> entries_;
};

struct NearestNeighbor {
  std::int64_t segment_id = 0;
  double distance = 0.0;
};

/// Exhaustive scan for the closest entry, excluding the query's own id;
/// ties break toward the lowest segment id.
NearestNeighbor nearest_neighbor_match(const DescriptorIndex& index,
                                       const Descriptor& query,
                                       std::int64_t exclude_id);

struct CandidateMatchResult {
  double accuracy = 0.0;
  int eligible = 0;  // entries whose group has another member in the index
  int excluded = 0;
  int correct = 0;
};

/// Fraction of eligible entries whose nearest neighbor shares their group.
CandidateMatchResult candidate_match_accuracy(const DescriptorIndex& index);

struct ScoredPair {
  double score = 0.0;
  int y = 0;
};

/// Threshold-sweep ROC; ties are grouped per threshold and the trapezoidal
/// AUC equals the Mann-Whitney statistic with ties counted one half.
struct RocCurve {
  std::vector<std::array<double, 2>> points;  // (fpr, tpr), (0,0) .. (1,1)
  std::vector<double> thresholds;  // per point; +inf for the initial (0,0)
  double auc = 0.0;
  std::vector<double> scores;
  std::vector<int> labels;
};

RocCurve roc_auc(const std::vector<ScoredPair>& scored);

/// The small neural pair classifier used as the secondary match scorer for
/// descriptor methods without their own head: concatenated descriptors ->
/// dense 32 + relu -> dense 1 + sigmoid.
struct PairClassifier {
  nn::LayerStack stack;
  int descriptor_dim = 0;
};

struct DescriptorPairSample {
  Descriptor a;
  Descriptor b;
  int y = 0;
};

/// Trains with binary cross-entropy; each pair is fed in both orders so the
/// learned score is close to symmetric.
PairClassifier train_pair_classifier(
    const std::vector<DescriptorPairSample>& pairs, const nn::SgdConfig& cfg);

double pair_probability(PairClassifier& clf, const Descriptor& a,
                        const Descriptor& b);

/// Scores labeled pairs through a trained pair classifier; order preserved.
std::vector<ScoredPair> score_pairs_with_classifier(
    PairClassifier& clf, const std::vector<LabeledPair>& pairs,
    const std::unordered_map<std::int64_t, Descriptor>& descriptors);

/// Scores labeled pairs through the Siamese merge head; order preserved.
std::vector<ScoredPair> score_pairs_siamese(
    DescriptorNet& net, SiameseHead& head,
    const std::vector<LabeledPair>& pairs, const GridLookup& grids);

struct ThroughputResult {
  double median_segments_per_second = 0.0;
  std::vector<double> runs;
};

/// Median over repetitions of segments/second for batched infer-mode
/// extraction; one warm-up pass is excluded.
ThroughputResult throughput_bench(DescriptorNet& net,
                                  const std::vector<const VoxelizedSegment*>& batch,
                                  int repetitions, int batch_size = 32);

struct EvalReport {
  std::string method;
  RocCurve roc;
  CandidateMatchResult candidate;
  double throughput_default = 0.0;  // 0 = not measured
  double throughput_small = 0.0;
  std::vector<std::string> notes;
};

/// Reference candidate-match rates from the original full-scale KITTI
/// comparison, for context only.
std::string full_scale_eval_reference();

/// One row per ROC point plus a summary row per method; column order:
/// kind,method,threshold,fpr,tpr,auc,candidate_match_accuracy,eligible,
/// excluded,throughput_default,throughput_small
void write_eval_reports_csv(const std::string& path,
                            const std::vector<EvalReport>& reports);

/// The same records as line-delimited JSON.
void write_eval_reports_jsonl(const std::string& path,
                              const std::vector<EvalReport>& reports);

}  // namespace segdesc
