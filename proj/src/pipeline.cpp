#include "segdesc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include "segdesc/dataset.hpp"
#include "segdesc/eigen_baseline.hpp"
#include "segdesc/error.hpp"
#include "segdesc/nn/checkpoint.hpp"
#include "segdesc/nn/gradcheck.hpp"
#include "segdesc/nn/losses.hpp"
#include "segdesc/rng.hpp"

namespace segdesc {

namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string dataset_file_of(const std::string& path) {
  if (fs::is_directory(path)) return (fs::path(path) / "segments.segd").string();
  return path;
}

std::vector<const VoxelizedSegment*> grids_of_samples(const SampleSet& set) {
  std::vector<const VoxelizedSegment*> grids;
  grids.reserve(set.size());
  for (const auto& s : set) grids.push_back(s.grid);
  return grids;
}

long long achievable_pairs(const std::vector<SegmentGroup>& groups) {
  long long pos = 0;
  long long members = 0;
  for (const auto& g : groups) {
    const long long m = static_cast<long long>(g.member_ids.size());
    pos += m * (m - 1) / 2;
    members += m;
  }
  const long long neg = members * (members - 1) / 2 - pos;
  return std::min(pos, neg);
}

}  // namespace

GenerateSummary run_generate(const PipelineConfig& cfg,
                             const std::string& out_dir) {
  const GeneratedData data = generate_synthetic(cfg.synthetic_spec());
  fs::create_directories(out_dir);
  GenerateSummary summary;
  summary.dataset_path = (fs::path(out_dir) / "segments.segd").string();
  write_dataset(summary.dataset_path, {data.segments, data.groups});
  summary.segments = static_cast<int>(data.segments.size());
  summary.groups = static_cast<int>(data.groups.size());
  summary.dropped_views = data.dropped_views;
  summary.dropped_groups = data.dropped_groups;
  return summary;
}

PreprocessSummary run_preprocess(const std::string& dataset_path,
                                 const PipelineConfig& cfg,
                                 const std::string& out_dir) {
  const std::string file = dataset_file_of(dataset_path);
  const DatasetContent content = read_dataset(file);
  if (content.segments.empty()) {
    throw DataError("preprocess: dataset is empty: " + file);
  }
  const PreprocessConfig pre = cfg.preprocess_config();
  const VoxelGridSpec grid = cfg.grid_spec();
  const std::map<std::int64_t, Split> splits = assign_splits(
      content.groups, cfg.split_train, cfg.split_validation,
      rng::mix(cfg.seed, 0x5713));

  std::map<std::int64_t, std::int64_t> group_of;
  for (const auto& g : content.groups) {
    for (std::int64_t id : g.member_ids) group_of[id] = g.group_id;
  }

  std::vector<const Segment*> ordered;
  ordered.reserve(content.segments.size());
  for (const auto& s : content.segments) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const Segment* a, const Segment* b) {
              return a->segment_id < b->segment_id;
            });

  const auto slots = static_cast<std::int64_t>(pre.augmentation_angles.size());
  PreprocessSummary summary;
  summary.input_segments = static_cast<int>(content.segments.size());

  std::vector<VoxelRecord> records;
  for (const Segment* seg : ordered) {
    const std::int64_t gid = group_of.at(seg->segment_id);
    const Split split = splits.at(gid);
    Segment aligned;
    try {
      aligned = align_segment(*seg);
    } catch (const DataError&) {
      ++summary.alignment_failures;
      continue;
    }
    std::vector<Segment> copies;
    if (split == Split::train) {
      copies = augment_rotations(aligned, pre.augmentation_angles);
    } else {
      copies.push_back(aligned);
    }
    for (std::size_t k = 0; k < copies.size(); ++k) {
      copies[k].segment_id = seg->segment_id * slots + static_cast<std::int64_t>(k);
      try {
        records.push_back(
            pack_voxels(voxelize(copies[k], grid), gid, split));
      } catch (const DataError&) {
        ++summary.empty_voxelizations;
      }
    }
  }

  // Hamming dedup inside each group, ascending id, strict "<" threshold.
  std::map<std::int64_t, std::vector<std::size_t>> by_group;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_group[records[i].group_id].push_back(i);
  }
  std::vector<char> keep(records.size(), 0);
  for (auto& [gid, idx] : by_group) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return records[a].segment_id < records[b].segment_id;
    });
    std::vector<std::size_t> kept;
    for (std::size_t i : idx) {
      bool duplicate = false;
      for (std::size_t j : kept) {
        if (packed_hamming_distance(records[i], records[j]) < pre.th_h) {
          duplicate = true;
          break;
        }
      }
      if (!duplicate) {
        kept.push_back(i);
        keep[i] = 1;
      }
    }
  }
  std::vector<VoxelRecord> final_records;
  final_records.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) final_records.push_back(std::move(records[i]));
  }
  summary.dedup_removed =
      static_cast<int>(records.size() - final_records.size());
  std::sort(final_records.begin(), final_records.end(),
            [](const VoxelRecord& a, const VoxelRecord& b) {
              return a.segment_id < b.segment_id;
            });

  std::vector<const VoxelRecord*> train_records;
  for (const auto& r : final_records) {
    switch (r.split) {
      case Split::train: ++summary.train_records; break;
      case Split::validation: ++summary.validation_records; break;
      case Split::test: ++summary.test_records; break;
    }
    if (r.split == Split::train) train_records.push_back(&r);
  }
  summary.records = static_cast<int>(final_records.size());

  const NormalizationStats stats =
      fit_normalizer_packed(train_records, grid, pre.norm_epsilon);

  fs::create_directories(out_dir);
  DatasetManifest manifest;
  manifest.seed = cfg.seed;
  manifest.augmentation_slots = static_cast<int>(slots);
  manifest.group_split = splits;
  manifest.preprocess_config = cfg.to_json();
  manifest.source_dataset = file;
  manifest.counters = {
      {"input_segments", summary.input_segments},
      {"records", summary.records},
      {"train_records", summary.train_records},
      {"validation_records", summary.validation_records},
      {"test_records", summary.test_records},
      {"alignment_failures", summary.alignment_failures},
      {"empty_voxelizations", summary.empty_voxelizations},
      {"dedup_removed", summary.dedup_removed},
  };
  write_voxel_set((fs::path(out_dir) / manifest.voxels_file).string(),
                  {grid, final_records});
  write_stats((fs::path(out_dir) / manifest.stats_file).string(), stats);
  write_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
  return summary;
}

LoadedVoxelData load_voxel_dir(const std::string& voxel_dir) {
  LoadedVoxelData data;
  data.manifest = read_manifest((fs::path(voxel_dir) / "manifest.json").string());
  data.set = read_voxel_set(
      (fs::path(voxel_dir) / data.manifest.voxels_file).string());
  data.stats =
      read_stats((fs::path(voxel_dir) / data.manifest.stats_file).string());
  if (data.stats.dims != data.set.spec.dims) {
    throw DataError(voxel_dir + ": stats dims do not match voxel set dims");
  }
  data.storage.reserve(data.set.records.size());
  for (const VoxelRecord& r : data.set.records) {
    data.storage.push_back(
        apply_normalizer(data.stats, unpack_voxels(r, data.set.spec)));
    const SegmentSample sample{r.segment_id, r.group_id, &data.storage.back()};
    switch (r.split) {
      case Split::train: data.train.push_back(sample); break;
      case Split::validation: data.validation.push_back(sample); break;
      case Split::test: data.test.push_back(sample); break;
    }
  }
  return data;
}

namespace {

DescriptorNetConfig net_config_for(const PipelineConfig& cfg,
                                   const VoxelGridSpec& grid,
                                   const std::string& method) {
  DescriptorNetConfig nc;
  nc.preset = preset_from_name(cfg.preset);
  nc.grid_dims = grid.dims;
  nc.descriptor_dim = cfg.descriptor_dim;
  if (method == "group") nc.dropout_rate = cfg.dropout_group;
  else if (method == "siamese") nc.dropout_rate = cfg.dropout_siamese;
  else nc.dropout_rate = cfg.dropout_contrastive;
  nc.seed = cfg.seed;
  return nc;
}

nn::CheckpointMeta meta_for(const DescriptorNet& net, const VoxelGridSpec& grid,
                            const std::string& regime, std::uint64_t seed) {
  nn::CheckpointMeta meta;
  meta.regime = regime;
  meta.preset = preset_name(net.config().preset);
  meta.descriptor_dim = net.dim();
  meta.grid_dims = grid.dims;
  meta.voxel_size = grid.voxel_size;
  meta.seed = seed;
  return meta;
}

std::vector<LabeledPair> sample_pairs_clamped(
    const std::vector<SegmentGroup>& groups, int wanted, std::uint64_t seed) {
  const long long max_pairs = achievable_pairs(groups);
  const int n = static_cast<int>(
      std::min<long long>(wanted, max_pairs));
  if (n < 1) {
    throw DataError("not enough segment pairs available (achievable maximum " +
                    std::to_string(max_pairs) + ")");
  }
  return sample_pairs(groups, n, seed);
}

}  // namespace

TrainReport run_train(const std::string& method, const std::string& voxel_dir,
                      const PipelineConfig& cfg, const std::string& ckpt_path) {
  LoadedVoxelData data = load_voxel_dir(voxel_dir);
  if (data.train.empty()) {
    throw DataError("train: no training records in " + voxel_dir);
  }
  DescriptorNet net(net_config_for(cfg, data.set.spec, method));
  const nn::SgdConfig sgd = cfg.sgd_config();

  if (method == "group") {
    GroupTrainResult res = train_group_classifier(
        net, data.train, data.validation, cfg.min_group_size, sgd);
    nn::CheckpointMeta meta = meta_for(net, data.set.spec, "group", cfg.seed);
    meta.extra = {{"class_group_ids", res.classifier.class_group_ids}};
    save_checkpoint(ckpt_path, meta,
                    {{"descriptor", &net.stack()},
                     {"head", &res.classifier.head}});
    return res.report;
  }
  if (method == "siamese") {
    const std::vector<LabeledPair> train_pairs = sample_pairs_clamped(
        groups_of(data.train), cfg.n_pos, rng::mix(cfg.seed, 0xA1));
    std::vector<LabeledPair> val_pairs;
    if (!data.validation.empty()) {
      try {
        val_pairs = sample_pairs_clamped(groups_of(data.validation),
                                         std::max(1, cfg.n_pos / 4),
                                         rng::mix(cfg.seed, 0xA2));
      } catch (const std::exception&) {
        // validation too small for pairs; metrics stay NaN
      }
    }
    SampleSet lookup = data.train;
    lookup.insert(lookup.end(), data.validation.begin(),
                  data.validation.end());
    SiameseTrainResult res =
        train_siamese(net, train_pairs, lookup, val_pairs, sgd);
    save_checkpoint(ckpt_path,
                    meta_for(net, data.set.spec, "siamese", cfg.seed),
                    {{"descriptor", &net.stack()}, {"merge", &res.head.merge}});
    return res.report;
  }
  if (method == "contrastive") {
    MiningConfig mining;
    mining.n_pos_initial = cfg.n_pos;
    mining.k_hard = cfg.effective_k_hard();
    mining.subsample_ratio = cfg.subsample_ratio;
    mining.seed = rng::mix(cfg.seed, 0xC057);
    TrainReport report = train_contrastive(net, data.train, data.validation,
                                           cfg.margin, sgd, mining);
    save_checkpoint(ckpt_path,
                    meta_for(net, data.set.spec, "contrastive", cfg.seed),
                    {{"descriptor", &net.stack()}});
    return report;
  }
  throw UsageError("unknown training method '" + method +
                   "' (expected group, siamese or contrastive)");
}

DescriptorNet load_descriptor_net(nn::LoadedCheckpoint& ckpt) {
  DescriptorNetConfig nc;
  nc.preset = ckpt.meta.preset == "custom" ? NetPreset::custom
                                           : preset_from_name(ckpt.meta.preset);
  nc.grid_dims = ckpt.meta.grid_dims;
  nc.descriptor_dim = ckpt.meta.descriptor_dim;
  nc.seed = ckpt.meta.seed;
  return DescriptorNet(nc, std::move(ckpt.stack("descriptor")));
}

void run_extract(const std::string& ckpt_path, const std::string& voxel_dir,
                 const std::string& csv_path) {
  nn::LoadedCheckpoint ckpt = nn::load_checkpoint(ckpt_path);
  DescriptorNet net = load_descriptor_net(ckpt);
  LoadedVoxelData data = load_voxel_dir(voxel_dir);
  if (net.config().grid_dims != data.set.spec.dims) {
    throw DataError("extract: checkpoint grid dims do not match voxel set");
  }

  std::vector<std::size_t> order(data.set.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.set.records[a].segment_id < data.set.records[b].segment_id;
  });

  std::vector<const VoxelizedSegment*> grids;
  grids.reserve(order.size());
  for (std::size_t i : order) grids.push_back(&data.storage[i]);
  const std::vector<Descriptor> descs = extract_descriptors(net, grids);

  if (const fs::path parent = fs::path(csv_path).parent_path();
      !parent.empty()) {
    fs::create_directories(parent);
  }
  std::ofstream os(csv_path, std::ios::binary);
  if (!os) throw DataError("cannot open descriptor CSV for writing: " + csv_path);
  os << "segment_id,group_id,split";
  for (int d = 0; d < net.dim(); ++d) os << ",d" << d;
  os << '\n';
  for (std::size_t row = 0; row < order.size(); ++row) {
    const VoxelRecord& r = data.set.records[order[row]];
    os << r.segment_id << ',' << r.group_id << ',' << split_name(r.split);
    for (double v : descs[row]) os << ',' << fmt17(v);
    os << '\n';
  }
  if (!os) throw DataError("write failed for descriptor CSV: " + csv_path);
}

namespace {

Descriptor eigen_as_descriptor(const EigenDescriptor& e) {
  return Descriptor(e.values.begin(), e.values.end());
}

}  // namespace

std::vector<EvalReport> run_evaluate(const std::string& method,
                                     const std::string& ckpt_path,
                                     const std::string& voxel_dir,
                                     const std::string& dataset_path,
                                     bool baseline_eigen,
                                     const PipelineConfig& cfg,
                                     const std::string& report_dir) {
  if (method != "group" && method != "siamese" && method != "contrastive" &&
      method != "eigen") {
    throw UsageError("unknown evaluation method '" + method + "'");
  }
  LoadedVoxelData data = load_voxel_dir(voxel_dir);
  if (data.test.empty()) {
    throw DataError("evaluate: no test records in " + voxel_dir);
  }

  // One shared test pair list keeps the comparison fair across methods.
  const std::vector<SegmentGroup> test_groups = groups_of(data.test);
  const std::vector<LabeledPair> test_pairs = sample_pairs_clamped(
      test_groups, cfg.eval_n_pos, rng::mix(cfg.seed, 0xE7E57));

  nn::SgdConfig pair_cfg;
  pair_cfg.learning_rate = cfg.pair_classifier_lr;
  pair_cfg.momentum = cfg.momentum;
  pair_cfg.batch_size = std::min(cfg.batch_size, 64);
  pair_cfg.epochs = cfg.pair_classifier_epochs;

  std::vector<EvalReport> reports;

  if (method != "eigen") {
    nn::LoadedCheckpoint ckpt = nn::load_checkpoint(ckpt_path);
    if (ckpt.meta.regime != method) {
      throw DataError("evaluate: checkpoint regime '" + ckpt.meta.regime +
                      "' does not match method '" + method + "'");
    }
    DescriptorNet net = load_descriptor_net(ckpt);

    EvalReport report;
    report.method = method;
    report.notes.push_back(full_scale_eval_reference());

    const std::vector<Descriptor> test_descs =
        extract_descriptors(net, grids_of_samples(data.test));
    DescriptorIndex index(net.dim());
    std::unordered_map<std::int64_t, Descriptor> desc_of;
    for (std::size_t i = 0; i < data.test.size(); ++i) {
      index.add({data.test[i].segment_id, data.test[i].group_id,
                 test_descs[i]});
      desc_of[data.test[i].segment_id] = test_descs[i];
    }
    report.candidate = candidate_match_accuracy(index);

    std::vector<ScoredPair> scored;
    if (method == "siamese") {
      SiameseHead head{std::move(ckpt.stack("merge"))};
      scored = score_pairs_siamese(net, head, test_pairs,
                                   make_grid_lookup(data.test));
    } else {
      const std::vector<LabeledPair> train_pairs = sample_pairs_clamped(
          groups_of(data.train), cfg.n_pos, rng::mix(cfg.seed, 0x7281));
      // Only descriptors referenced by the training pairs are extracted.
      std::map<std::int64_t, std::size_t> slot;
      std::vector<const VoxelizedSegment*> grids;
      const GridLookup train_lookup = make_grid_lookup(data.train);
      for (const auto& p : train_pairs) {
        for (std::int64_t id : {p.id_a, p.id_b}) {
          if (slot.emplace(id, grids.size()).second) {
            grids.push_back(train_lookup.at(id));
          }
        }
      }
      const std::vector<Descriptor> train_descs =
          extract_descriptors(net, grids);
      std::vector<DescriptorPairSample> samples;
      samples.reserve(train_pairs.size());
      for (const auto& p : train_pairs) {
        samples.push_back(
            {train_descs[slot[p.id_a]], train_descs[slot[p.id_b]], p.y});
      }
      pair_cfg.seed = rng::mix(cfg.seed, 0x9C1);
      PairClassifier clf = train_pair_classifier(samples, pair_cfg);
      scored = score_pairs_with_classifier(clf, test_pairs, desc_of);
    }
    report.roc = roc_auc(scored);
    reports.push_back(std::move(report));
  }

  if (baseline_eigen || method == "eigen") {
    if (dataset_path.empty()) {
      throw UsageError(
          "evaluate: the eigenvalue baseline needs --dataset <segments file>");
    }
    const DatasetContent content = read_dataset(dataset_file_of(dataset_path));
    std::unordered_map<std::int64_t, const Segment*> segment_of;
    for (const auto& s : content.segments) segment_of[s.segment_id] = &s;
    const auto slots =
        static_cast<std::int64_t>(data.manifest.augmentation_slots);

    EvalReport report;
    report.method = "eigen";
    report.notes.push_back(full_scale_eval_reference());
    int degenerate = 0;

    auto eigen_of_record = [&](std::int64_t voxel_id) -> Descriptor {
      const std::int64_t orig = voxel_id / slots;
      auto it = segment_of.find(orig);
      if (it == segment_of.end()) {
        throw DataError("evaluate: dataset is missing segment " +
                        std::to_string(orig) + " referenced by the voxel set");
      }
      try {
        return eigen_as_descriptor(eigen_descriptor(*it->second));
      } catch (const DataError&) {
        ++degenerate;
        return Descriptor(EigenDescriptor::kDim, 0.0);
      }
    };

    DescriptorIndex index(EigenDescriptor::kDim);
    std::unordered_map<std::int64_t, Descriptor> desc_of;
    for (const auto& s : data.test) {
      Descriptor d = eigen_of_record(s.segment_id);
      index.add({s.segment_id, s.group_id, d});
      desc_of[s.segment_id] = std::move(d);
    }
    report.candidate = candidate_match_accuracy(index);

    // The classifier trains on original (slot 0) training segments; the
    // eigen features ignore rotation, so augmented copies add nothing.
    std::map<std::int64_t, std::set<std::int64_t>> train_orig;
    for (const auto& s : data.train) {
      train_orig[s.group_id].insert(s.segment_id / slots);
    }
    std::vector<SegmentGroup> train_groups;
    for (const auto& [gid, members] : train_orig) {
      train_groups.push_back(
          {gid, std::vector<std::int64_t>(members.begin(), members.end())});
    }
    const std::vector<LabeledPair> train_pairs = sample_pairs_clamped(
        train_groups, cfg.n_pos, rng::mix(cfg.seed, 0x7282));
    std::vector<DescriptorPairSample> samples;
    samples.reserve(train_pairs.size());
    std::unordered_map<std::int64_t, Descriptor> train_desc;
    auto eigen_of_orig = [&](std::int64_t orig) -> const Descriptor& {
      auto it = train_desc.find(orig);
      if (it != train_desc.end()) return it->second;
      auto seg = segment_of.find(orig);
      if (seg == segment_of.end()) {
        throw DataError("evaluate: dataset is missing segment " +
                        std::to_string(orig));
      }
      Descriptor d;
      try {
        d = eigen_as_descriptor(eigen_descriptor(*seg->second));
      } catch (const DataError&) {
        ++degenerate;
        d.assign(EigenDescriptor::kDim, 0.0);
      }
      return train_desc.emplace(orig, std::move(d)).first->second;
    };
    for (const auto& p : train_pairs) {
      samples.push_back({eigen_of_orig(p.id_a), eigen_of_orig(p.id_b), p.y});
    }
    pair_cfg.seed = rng::mix(cfg.seed, 0x9C2);
    PairClassifier clf = train_pair_classifier(samples, pair_cfg);
    report.roc = roc_auc(score_pairs_with_classifier(clf, test_pairs, desc_of));
    if (degenerate > 0) {
      report.notes.push_back(std::to_string(degenerate) +
                             " degenerate segments scored with a zero "
                             "descriptor");
    }
    reports.push_back(std::move(report));
  }

  if (!report_dir.empty()) {
    fs::create_directories(report_dir);
    write_eval_reports_csv((fs::path(report_dir) / "report.csv").string(),
                           reports);
    write_eval_reports_jsonl((fs::path(report_dir) / "report.jsonl").string(),
                             reports);
  }
  return reports;
}

BenchSummary run_bench(const std::string& ckpt_path,
                       const std::string& preset_mode,
                       const PipelineConfig& cfg) {
  if (preset_mode != "default" && preset_mode != "small" &&
      preset_mode != "both" && !preset_mode.empty()) {
    throw UsageError("bench: preset must be default, small or both");
  }
  const VoxelGridSpec grid = cfg.grid_spec();

  auto make_random_grids = [&](const std::array<int, 3>& dims) {
    rng::Engine engine(rng::mix(cfg.seed, 0xBE11));
    std::vector<VoxelizedSegment> grids(
        static_cast<std::size_t>(cfg.bench_batch_count));
    const std::size_t cells = static_cast<std::size_t>(dims[0]) * dims[1] *
                              static_cast<std::size_t>(dims[2]);
    for (std::size_t i = 0; i < grids.size(); ++i) {
      grids[i].segment_id = static_cast<std::int64_t>(i);
      grids[i].dims = dims;
      grids[i].stage = VoxelStage::normalized;
      grids[i].values.resize(cells);
      for (float& v : grids[i].values) {
        v = static_cast<float>(engine.normal(0.0, 1.0));
      }
    }
    return grids;
  };

  BenchSummary summary;
  auto bench_preset = [&](NetPreset preset) {
    DescriptorNetConfig nc;
    nc.preset = preset;
    nc.grid_dims = grid.dims;
    nc.descriptor_dim = cfg.descriptor_dim;
    nc.dropout_rate = 0.0;
    nc.seed = cfg.seed;
    DescriptorNet net(nc);
    const std::vector<VoxelizedSegment> grids = make_random_grids(grid.dims);
    std::vector<const VoxelizedSegment*> batch;
    for (const auto& g : grids) batch.push_back(&g);
    return throughput_bench(net, batch, cfg.bench_repetitions, cfg.batch_size)
        .median_segments_per_second;
  };

  if (preset_mode == "default" || preset_mode == "both") {
    summary.default_rate = bench_preset(NetPreset::standard);
  }
  if (preset_mode == "small" || preset_mode == "both") {
    summary.small_rate = bench_preset(NetPreset::small);
  }
  if (!ckpt_path.empty()) {
    nn::LoadedCheckpoint ckpt = nn::load_checkpoint(ckpt_path);
    DescriptorNet net = load_descriptor_net(ckpt);
    const std::vector<VoxelizedSegment> grids =
        make_random_grids(net.config().grid_dims);
    std::vector<const VoxelizedSegment*> batch;
    for (const auto& g : grids) batch.push_back(&g);
    summary.model_rate =
        throughput_bench(net, batch, cfg.bench_repetitions, cfg.batch_size)
            .median_segments_per_second;
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Gradient-check suite

namespace {

nn::Tensor random_input(const nn::Shape& per_sample, std::uint64_t seed) {
  rng::Engine engine(seed);
  nn::Tensor t = nn::Tensor::zeros(nn::batched(2, per_sample));
  for (double& v : t.values) v = engine.normal(0.0, 1.0);
  return t;
}

nn::LossProbe quadratic_probe() {
  return {[](const nn::Tensor& out) {
            double s = 0.0;
            for (double v : out.values) s += v * v;
            return 0.5 * s;
          },
          [](const nn::Tensor& out) { return out; }};
}

// Cross-entropy against class 1 of each row, differentiated through the
// softmax layer's exact Jacobian backward.
nn::LossProbe ce_probe() {
  return {[](const nn::Tensor& out) {
            const std::size_t k = out.shape[1];
            double s = 0.0;
            for (std::size_t i = 0; i < out.shape[0]; ++i) {
              s += -std::log(out.values[i * k + 1] + 1e-12);
            }
            return s;
          },
          [](const nn::Tensor& out) {
            const std::size_t k = out.shape[1];
            nn::Tensor g = nn::Tensor::zeros(out.shape);
            for (std::size_t i = 0; i < out.shape[0]; ++i) {
              g.values[i * k + 1] = -1.0 / (out.values[i * k + 1] + 1e-12);
            }
            return g;
          }};
}

double fd_loss_err(const std::function<double(const std::vector<double>&)>& f,
                   std::vector<double> x, const std::vector<double>& analytic,
                   double h) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) /
                                std::max(1e-8, std::abs(analytic[i]) +
                                                   std::abs(numeric)));
  }
  return worst;
}

}  // namespace

GradcheckReport run_gradcheck() {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckReport report;

  {
    nn::LayerStack stack({1, 8, 8, 6}, 11);
    stack.add(std::make_unique<nn::Conv3dLayer>(
        3, std::array<std::size_t, 3>{3, 3, 3}));
    stack.add(std::make_unique<nn::ReluLayer>());
    stack.add(std::make_unique<nn::MaxPool3dLayer>(
        std::array<std::size_t, 3>{2, 2, 2}));
    stack.add(std::make_unique<nn::Conv3dLayer>(
        4, std::array<std::size_t, 3>{2, 2, 2}));
    stack.add(std::make_unique<nn::FlattenLayer>());
    stack.add(std::make_unique<nn::DenseLayer>(16));
    stack.add(std::make_unique<nn::ReluLayer>());
    stack.add(std::make_unique<nn::DenseLayer>(8));
    const double err = nn::gradient_check(stack, quadratic_probe(),
                                          random_input({1, 8, 8, 6}, 21));
    report.checks.emplace_back("conv3d/relu/maxpool3d/dense quadratic", err);
  }
  {
    nn::LayerStack stack({1, 7, 7, 5}, 12);
    stack.add(std::make_unique<nn::Conv3dLayer>(
        2, std::array<std::size_t, 3>{3, 3, 3}, 2));
    stack.add(std::make_unique<nn::FlattenLayer>());
    stack.add(std::make_unique<nn::DropoutLayer>(0.0));
    stack.add(std::make_unique<nn::DenseLayer>(6));
    const double err = nn::gradient_check(stack, quadratic_probe(),
                                          random_input({1, 7, 7, 5}, 22));
    report.checks.emplace_back("strided conv3d/dropout(0)/dense quadratic",
                               err);
  }
  {
    nn::LayerStack stack({9}, 13);
    stack.add(std::make_unique<nn::DenseLayer>(12));
    stack.add(std::make_unique<nn::SigmoidLayer>());
    stack.add(std::make_unique<nn::DenseLayer>(5));
    stack.add(std::make_unique<nn::SoftmaxLayer>());
    const double err =
        nn::gradient_check(stack, ce_probe(), random_input({9}, 23));
    report.checks.emplace_back("dense/sigmoid/softmax cross-entropy", err);
  }
  for (const auto& [name, err] : report.checks) {
    report.stack_max_err = std::max(report.stack_max_err, err);
  }

  // Losses checked directly against central differences, step 1e-4.
  const double h = 1e-4;
  rng::Engine engine(31);
  {
    const std::size_t d = 6;
    for (int y : {0, 1}) {
      std::vector<double> x(2 * d);
      for (double& v : x) v = engine.normal(0.0, 0.5);
      const double margin = 4.0;  // keep clear of the hinge point
      auto f = [&](const std::vector<double>& z) {
        const std::vector<double> fa(z.begin(), z.begin() + d);
        const std::vector<double> fb(z.begin() + d, z.end());
        return nn::loss_contrastive(fa, fb, y, margin).loss;
      };
      const std::vector<double> fa(x.begin(), x.begin() + d);
      const std::vector<double> fb(x.begin() + d, x.end());
      const nn::ContrastiveResult r = nn::loss_contrastive(fa, fb, y, margin);
      std::vector<double> analytic = r.grad_a;
      analytic.insert(analytic.end(), r.grad_b.begin(), r.grad_b.end());
      const double err = fd_loss_err(f, x, analytic, h);
      report.checks.emplace_back(
          std::string("loss_contrastive y=") + std::to_string(y), err);
      report.loss_max_err = std::max(report.loss_max_err, err);
    }
  }
  {
    double worst = 0.0;
    for (double p : {0.2, 0.5, 0.9}) {
      for (int y : {0, 1}) {
        auto f = [&](const std::vector<double>& z) {
          return nn::loss_binary_ce(z[0], y).loss;
        };
        const double analytic = nn::loss_binary_ce(p, y).grad;
        worst = std::max(worst, fd_loss_err(f, {p}, {analytic}, h));
      }
    }
    report.checks.emplace_back("loss_binary_ce", worst);
    report.loss_max_err = std::max(report.loss_max_err, worst);
  }
  {
    // Categorical CE differentiated with respect to the logits feeding a
    // softmax; the fused gradient is probs minus the one-hot target.
    const std::size_t k = 5;
    std::vector<double> logits(k);
    for (double& v : logits) v = engine.normal(0.0, 1.0);
    const int target = 2;
    auto softmax = [&](const std::vector<double>& z) {
      std::vector<double> p(z.size());
      double m = z[0];
      for (double v : z) m = std::max(m, v);
      double sum = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - m);
        sum += p[i];
      }
      for (double& v : p) v /= sum;
      return p;
    };
    auto f = [&](const std::vector<double>& z) {
      return nn::loss_categorical_ce(softmax(z), target).loss;
    };
    const std::vector<double> analytic =
        nn::loss_categorical_ce(softmax(logits), target).grad_logits;
    const double err = fd_loss_err(f, logits, analytic, h);
    report.checks.emplace_back("loss_categorical_ce (fused)", err);
    report.loss_max_err = std::max(report.loss_max_err, err);
  }

  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

}  // namespace segdesc
