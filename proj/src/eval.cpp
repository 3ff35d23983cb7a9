#include "segdesc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "segdesc/error.hpp"
#include "segdesc/nn/losses.hpp"
#include "segdesc/rng.hpp"

namespace segdesc {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

DescriptorIndex::DescriptorIndex(int dimension) : dimension_(dimension) {
  if (dimension < 1) {
    throw std::invalid_argument("DescriptorIndex: dimension must be >= 1");
  }
}

void DescriptorIndex::add(IndexEntry entry) {
  if (static_cast<int>(entry.descriptor.size()) != dimension_) {
    throw std::invalid_argument(
        "DescriptorIndex: descriptor dimension " +
        std::to_string(entry.descriptor.size()) + " does not match index " +
        std::to_string(dimension_));
  }
  for (const auto& e : entries_) {
    if (e.segment_id == entry.segment_id) {
      throw std::invalid_argument("DescriptorIndex: duplicate segment id " +
                                  std::to_string(entry.segment_id));
    }
  }
  entries_.push_back(std::move(entry));
}

NearestNeighbor nearest_neighbor_match(const DescriptorIndex& index,
                                       const Descriptor& query,
                                       std::int64_t exclude_id) {
  if (static_cast<int>(query.size()) != index.dimension()) {
    throw std::invalid_argument("nearest_neighbor_match: query dimension "
                                "does not match the index");
  }
  bool found = false;
  double best_d2 = std::numeric_limits<double>::infinity();
  std::int64_t best_id = 0;
  for (const auto& e : index.entries()) {
    if (e.segment_id == exclude_id) continue;
    double d2 = 0.0;
    for (std::size_t k = 0; k < query.size(); ++k) {
      const double diff = e.descriptor[k] - query[k];
      d2 += diff * diff;
    }
    if (!found || d2 < best_d2 ||
        (d2 == best_d2 && e.segment_id < best_id)) {
      found = true;
      best_d2 = d2;
      best_id = e.segment_id;
    }
  }
  if (!found) {
    throw std::invalid_argument(
        "nearest_neighbor_match: no entries besides the excluded id");
  }
  return {best_id, std::sqrt(best_d2)};
}

CandidateMatchResult candidate_match_accuracy(const DescriptorIndex& index) {
  std::map<std::int64_t, int> group_sizes;
  for (const auto& e : index.entries()) ++group_sizes[e.group_id];
  std::map<std::int64_t, std::int64_t> group_of;
  for (const auto& e : index.entries()) group_of[e.segment_id] = e.group_id;

  CandidateMatchResult r;
  for (const auto& e : index.entries()) {
    if (group_sizes[e.group_id] < 2) {
      ++r.excluded;
      continue;
    }
    ++r.eligible;
    const NearestNeighbor nn =
        nearest_neighbor_match(index, e.descriptor, e.segment_id);
    r.correct += group_of[nn.segment_id] == e.group_id;
  }
  if (r.eligible == 0) {
    throw std::invalid_argument(
        "candidate_match_accuracy: no entry has another member of its group "
        "in the index");
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.eligible);
  return r;
}

RocCurve roc_auc(const std::vector<ScoredPair>& scored) {
  if (scored.size() < 2) {
    throw std::invalid_argument("roc_auc: need at least two scored pairs");
  }
  long long p = 0, n = 0;
  for (const auto& s : scored) (s.y ? p : n) += 1;
  if (p == 0 || n == 0) {
    throw std::invalid_argument("roc_auc: both labels must be present");
  }

  std::vector<ScoredPair> sorted = scored;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredPair& a, const ScoredPair& b) {
                     return a.score > b.score;
                   });

  RocCurve curve;
  curve.scores.reserve(scored.size());
  curve.labels.reserve(scored.size());
  for (const auto& s : scored) {
    curve.scores.push_back(s.score);
    curve.labels.push_back(s.y);
  }
  curve.points.push_back({0.0, 0.0});
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());

  long long tp = 0, fp = 0;
  double auc = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    // All pairs sharing one score move together (one threshold per distinct
    // score); the trapezoid over the tie block counts ties as one half.
    const double threshold = sorted[i].score;
    long long dtp = 0, dfp = 0;
    while (i < sorted.size() && sorted[i].score == threshold) {
      (sorted[i].y ? dtp : dfp) += 1;
      ++i;
    }
    const double x0 = static_cast<double>(fp) / static_cast<double>(n);
    const double y0 = static_cast<double>(tp) / static_cast<double>(p);
    tp += dtp;
    fp += dfp;
    const double x1 = static_cast<double>(fp) / static_cast<double>(n);
    const double y1 = static_cast<double>(tp) / static_cast<double>(p);
    auc += (x1 - x0) * (y0 + y1) / 2.0;
    curve.points.push_back({x1, y1});
    curve.thresholds.push_back(threshold);
  }
  curve.auc = auc;
  return curve;
}

PairClassifier train_pair_classifier(
    const std::vector<DescriptorPairSample>& pairs, const nn::SgdConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) {
    throw std::invalid_argument("train_pair_classifier: no pairs");
  }
  bool has0 = false, has1 = false;
  const std::size_t d = pairs.front().a.size();
  for (const auto& s : pairs) {
    (s.y ? has1 : has0) = true;
    if (s.a.size() != d || s.b.size() != d) {
      throw std::invalid_argument(
          "train_pair_classifier: descriptor dimensions differ");
    }
  }
  if (!has0 || !has1) {
    throw std::invalid_argument(
        "train_pair_classifier: pairs must contain both labels");
  }

  PairClassifier clf{nn::LayerStack({2 * d}, rng::mix(cfg.seed, 0x9A1C)),
                     static_cast<int>(d)};
  clf.stack.add(std::make_unique<nn::DenseLayer>(32));
  clf.stack.add(std::make_unique<nn::ReluLayer>());
  clf.stack.add(std::make_unique<nn::DenseLayer>(1));
  clf.stack.add(std::make_unique<nn::SigmoidLayer>());

  // Each pair contributes both orders so the concatenation input does not
  // bake in an order bias.
  struct Row {
    const Descriptor* first;
    const Descriptor* second;
    int y;
  };
  std::vector<Row> rows;
  rows.reserve(2 * pairs.size());
  for (const auto& s : pairs) {
    rows.push_back({&s.a, &s.b, s.y});
    rows.push_back({&s.b, &s.a, s.y});
  }

  nn::SgdOptimizer opt(cfg, {&clf.stack});
  rng::Engine shuffler(rng::mix(cfg.seed, 0x5AFF1E));
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffler.shuffle(order);
    for (std::size_t first = 0; first < order.size();
         first += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b = std::min(order.size() - first,
                                     static_cast<std::size_t>(cfg.batch_size));
      nn::Tensor in = nn::Tensor::zeros({b, 2 * d});
      std::vector<int> labels(b);
      for (std::size_t i = 0; i < b; ++i) {
        const Row& row = rows[order[first + i]];
        for (std::size_t k = 0; k < d; ++k) {
          in.values[i * 2 * d + k] = (*row.first)[k];
          in.values[i * 2 * d + d + k] = (*row.second)[k];
        }
        labels[i] = row.y;
      }
      nn::Tensor prob = clf.stack.forward(in, nn::Mode::train);
      nn::Tensor grad_pre = nn::Tensor::zeros({b, std::size_t{1}});
      for (std::size_t i = 0; i < b; ++i) {
        grad_pre.values[i] =
            (prob.values[i] - labels[i]) / static_cast<double>(b);
      }
      clf.stack.backward_fused_final(grad_pre);
      opt.step();
      clf.stack.zero_grads();
    }
  }
  return clf;
}

double pair_probability(PairClassifier& clf, const Descriptor& a,
                        const Descriptor& b) {
  const std::size_t d = static_cast<std::size_t>(clf.descriptor_dim);
  if (a.size() != d || b.size() != d) {
    throw std::invalid_argument("pair_probability: descriptor dim mismatch");
  }
  nn::Tensor in = nn::Tensor::zeros({std::size_t{1}, 2 * d});
  for (std::size_t k = 0; k < d; ++k) {
    in.values[k] = a[k];
    in.values[d + k] = b[k];
  }
  return clf.stack.forward(in, nn::Mode::infer).values[0];
}

std::vector<ScoredPair> score_pairs_with_classifier(
    PairClassifier& clf, const std::vector<LabeledPair>& pairs,
    const std::unordered_map<std::int64_t, Descriptor>& descriptors) {
  std::vector<ScoredPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto a = descriptors.find(p.id_a);
    auto b = descriptors.find(p.id_b);
    if (a == descriptors.end() || b == descriptors.end()) {
      throw DataError("score_pairs: missing descriptor for pair (" +
                      std::to_string(p.id_a) + ", " + std::to_string(p.id_b) +
                      ")");
    }
    out.push_back({pair_probability(clf, a->second, b->second), p.y});
  }
  return out;
}

std::vector<ScoredPair> score_pairs_siamese(
    DescriptorNet& net, SiameseHead& head,
    const std::vector<LabeledPair>& pairs, const GridLookup& grids) {
  const std::vector<double> scores =
      siamese_pair_scores(net, head, pairs, grids);
  std::vector<ScoredPair> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.push_back({scores[i], pairs[i].y});
  }
  return out;
}

ThroughputResult throughput_bench(
    DescriptorNet& net, const std::vector<const VoxelizedSegment*>& batch,
    int repetitions, int batch_size) {
  if (batch.empty()) {
    throw std::invalid_argument("throughput_bench: empty batch");
  }
  if (repetitions < 1) {
    throw std::invalid_argument("throughput_bench: repetitions must be >= 1");
  }
  using Clock = std::chrono::steady_clock;
  extract_descriptors(net, batch, batch_size);  // warm-up, excluded

  ThroughputResult result;
  result.runs.reserve(static_cast<std::size_t>(repetitions));
  for (int r = 0; r < repetitions; ++r) {
    const auto t0 = Clock::now();
    extract_descriptors(net, batch, batch_size);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    result.runs.push_back(static_cast<double>(batch.size()) / secs);
  }
  std::vector<double> sorted = result.runs;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size() / 2;
  result.median_segments_per_second =
      sorted.size() % 2 ? sorted[m] : (sorted[m - 1] + sorted[m]) / 2.0;
  return result;
}

std::string full_scale_eval_reference() {
  return "full-scale KITTI reference: candidate-match rates ~0.50 (group, "
         "contrastive), ~0.30 (siamese), ~0.06 (eigenvalue baseline); "
         "throughput 680 segments/s GPU vs 12 CPU, reduced net ~340";
}

void write_eval_reports_csv(const std::string& path,
                            const std::vector<EvalReport>& reports) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open report CSV for writing: " + path);
  os << "kind,method,threshold,fpr,tpr,auc,candidate_match_accuracy,"
        "eligible,excluded,throughput_default,throughput_small\n";
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.roc.points.size(); ++i) {
      os << "roc," << r.method << ',' << fmt17(r.roc.thresholds[i]) << ','
         << fmt17(r.roc.points[i][0]) << ',' << fmt17(r.roc.points[i][1])
         << ",,,,,,\n";
    }
    os << "summary," << r.method << ",,,," << fmt17(r.roc.auc) << ','
       << fmt17(r.candidate.accuracy) << ',' << r.candidate.eligible << ','
       << r.candidate.excluded << ',' << fmt17(r.throughput_default) << ','
       << fmt17(r.throughput_small) << "\n";
  }
  if (!os) throw DataError("write failed for report CSV: " + path);
}

void write_eval_reports_jsonl(const std::string& path,
                              const std::vector<EvalReport>& reports) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open report JSONL for writing: " + path);
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.roc.points.size(); ++i) {
      nlohmann::json row;
      row["kind"] = "roc";
      row["method"] = r.method;
      row["threshold"] = std::isfinite(r.roc.thresholds[i])
                             ? nlohmann::json(r.roc.thresholds[i])
                             : nlohmann::json("inf");
      row["fpr"] = r.roc.points[i][0];
      row["tpr"] = r.roc.points[i][1];
      os << row.dump() << '\n';
    }
    nlohmann::json summary;
    summary["kind"] = "summary";
    summary["method"] = r.method;
    summary["auc"] = r.roc.auc;
    summary["candidate_match_accuracy"] = r.candidate.accuracy;
    summary["eligible"] = r.candidate.eligible;
    summary["excluded"] = r.candidate.excluded;
    summary["throughput_default"] = r.throughput_default;
    summary["throughput_small"] = r.throughput_small;
    summary["notes"] = r.notes;
    os << summary.dump() << '\n';
  }
  if (!os) throw DataError("write failed for report JSONL: " + path);
}

}  // namespace segdesc
