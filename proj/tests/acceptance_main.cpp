// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criterion 6 trains all three models on the default synthetic
// dataset across three seeds, so the full run takes several minutes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "segdesc/dataset.hpp"
#include "segdesc/dataset_io.hpp"
#include "segdesc/eigen_baseline.hpp"
#include "segdesc/error.hpp"
#include "segdesc/eval.hpp"
#include "segdesc/models.hpp"
#include "segdesc/nn/gradcheck.hpp"
#include "segdesc/nn/losses.hpp"
#include "segdesc/pipeline.hpp"
#include "segdesc/preprocessing.hpp"
#include "segdesc/rng.hpp"

using namespace segdesc;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass,
            const std::string& detail = "") {
  std::printf("[%s] criterion %2d: %s%s%s\n", pass ? "PASS" : "FAIL",
              criterion, name.c_str(), detail.empty() ? "" : " | ",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// ---------------------------------------------------------------------------
// 1. gradient correctness

void criterion_1() {
  const GradcheckReport r = run_gradcheck();
  std::string detail = "stacks " + fmt(r.stack_max_err) + " (<1e-4), losses " +
                       fmt(r.loss_max_err) + " (<1e-6), " + fmt(r.seconds) +
                       "s (<60s)";
  report(1, "gradient checks over layer stacks and losses",
         r.stack_max_err < 1e-4 && r.loss_max_err < 1e-6 && r.seconds < 60.0,
         detail);
}

// ---------------------------------------------------------------------------
// 2. contrastive loss unit suite, exact to 1e-12

void criterion_2() {
  bool pass = true;
  const std::vector<double> f{0.25, -0.5, 0.125};
  const auto same = nn::loss_contrastive(f, f, 1, 1.0);
  pass &= std::abs(same.loss) <= 1e-12;
  for (double g : same.grad_a) pass &= std::abs(g) <= 1e-12;
  for (double g : same.grad_b) pass &= std::abs(g) <= 1e-12;

  const auto inside =
      nn::loss_contrastive({0.5, 0.0}, {0.0, 0.0}, 0, 1.0);  // d2 = 0.25
  pass &= std::abs(inside.loss - 0.75) <= 1e-12;

  const auto outside =
      nn::loss_contrastive({1.5, 0.0}, {0.0, 0.0}, 0, 1.0);  // d2 = 2.25
  pass &= std::abs(outside.loss) <= 1e-12;
  for (double g : outside.grad_a) pass &= std::abs(g) <= 1e-12;
  for (double g : outside.grad_b) pass &= std::abs(g) <= 1e-12;

  const auto boundary =
      nn::loss_contrastive({1.0, 0.0}, {0.0, 0.0}, 0, 1.0);  // d2 = m
  pass &= std::abs(boundary.loss) <= 1e-12;

  report(2, "margin-on-squared-distance loss values and gradients", pass);
}

// ---------------------------------------------------------------------------
// 3. alignment invariance of voxelization

void criterion_3() {
  VoxelGridSpec spec;  // default 38x38x18 at 0.2 m
  int checked = 0, identical = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    rng::Engine engine(seed);
    const Point c0{engine.uniform(-10, 10), engine.uniform(-10, 10),
                   engine.uniform(0, 3)};
    // points on exact cell centers, mirrored so the centroid stays pinned
    std::vector<Point> points;
    for (int k = 0; k < 60; ++k) {
      const double ox = (static_cast<double>(engine.below(38)) + 0.5 - 19.0) *
                        spec.voxel_size;
      const double oy = (static_cast<double>(engine.below(38)) + 0.5 - 19.0) *
                        spec.voxel_size;
      const double oz = (static_cast<double>(engine.below(18)) + 0.5 - 9.0) *
                        spec.voxel_size;
      points.push_back({c0.x + ox, c0.y + oy, c0.z + oz});
      points.push_back({c0.x - ox, c0.y - oy, c0.z - oz});
    }
    Segment s;
    s.segment_id = static_cast<std::int64_t>(seed);
    s.points = std::move(points);
    s.observer_position = {c0.x + 12.0, c0.y, c0.z + 1.5};
    s.run_id = "acc";

    const VoxelizedSegment reference = voxelize(align_segment(s), spec);
    const double phi = engine.uniform(-M_PI, M_PI);
    Segment rotated = s;
    rotated.points = rotate_about_z(s.points, RigidZRotation{phi}, c0);
    rotated.observer_position =
        rotate_point_about_z(s.observer_position, RigidZRotation{phi}, c0);
    const VoxelizedSegment turned = voxelize(align_segment(rotated), spec);
    ++checked;
    identical += turned.values == reference.values;
  }
  report(3, "voxelization after alignment is rotation invariant",
         checked == 100 && identical == 100,
         std::to_string(identical) + "/100 cell-identical");
}

// ---------------------------------------------------------------------------
// 4. preprocessing oracles

void criterion_4() {
  bool voxel_ok = true, cluster_ok = true, dedup_ok = true, groups_ok = true;

  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    rng::Engine engine(seed);

    {  // voxelize against per-point binning
      VoxelGridSpec spec;
      spec.dims = {static_cast<int>(4 + engine.below(10)),
                   static_cast<int>(4 + engine.below(10)),
                   static_cast<int>(2 + engine.below(6))};
      spec.voxel_size = engine.uniform(0.15, 0.5);
      Segment s;
      s.segment_id = 1;
      for (int i = 0; i < 80; ++i) {
        s.points.push_back({engine.uniform(-2, 2), engine.uniform(-2, 2),
                            engine.uniform(-1, 1)});
      }
      const Point c = centroid(s);
      const VoxelizedSegment v = voxelize(s, spec);
      std::set<int> expected;
      for (const Point& p : s.points) {
        const int ix = static_cast<int>(std::floor(
            (p.x - (c.x - 0.5 * spec.dims[0] * spec.voxel_size)) /
            spec.voxel_size));
        const int iy = static_cast<int>(std::floor(
            (p.y - (c.y - 0.5 * spec.dims[1] * spec.voxel_size)) /
            spec.voxel_size));
        const int iz = static_cast<int>(std::floor(
            (p.z - (c.z - 0.5 * spec.dims[2] * spec.voxel_size)) /
            spec.voxel_size));
        if (ix >= 0 && iy >= 0 && iz >= 0 && ix < spec.dims[0] &&
            iy < spec.dims[1] && iz < spec.dims[2]) {
          expected.insert(spec.cell_index(ix, iy, iz));
        }
      }
      voxel_ok &= static_cast<int>(expected.size()) == v.occupied_count;
      for (int cell : expected) {
        voxel_ok &= v.values[static_cast<std::size_t>(cell)] == 1.0f;
      }
    }

    {  // euclidean_cluster against union-find over the epsilon graph
      std::vector<Point> points;
      for (int i = 0; i < 150; ++i) {
        points.push_back({engine.uniform(0, 6), engine.uniform(0, 6),
                          engine.uniform(0, 2)});
      }
      PreprocessConfig cfg;
      cfg.cluster_radius = 0.5;
      cfg.min_cluster_points = 1;
      const auto segments = euclidean_cluster(points, {0, 0, 5}, cfg);

      std::vector<std::size_t> parent(points.size());
      for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
      std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
      };
      for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = i + 1; j < points.size(); ++j) {
          if (squared_distance(points[i], points[j]) <=
              cfg.cluster_radius * cfg.cluster_radius) {
            parent[find(i)] = find(j);
          }
        }
      }
      std::map<std::size_t, int> sizes;
      for (std::size_t i = 0; i < points.size(); ++i) ++sizes[find(i)];
      std::size_t total = 0;
      for (const auto& s : segments) total += s.points.size();
      cluster_ok &= segments.size() == sizes.size();
      cluster_ok &= total == points.size();
    }

    {  // hamming_dedup against the quadratic greedy oracle
      const std::array<int, 3> dims{5, 5, 4};
      const std::size_t cells = 100;
      std::vector<VoxelizedSegment> group;
      for (int i = 0; i < 10; ++i) {
        VoxelizedSegment v;
        v.segment_id = i;
        v.dims = dims;
        v.stage = VoxelStage::binary;
        v.values.assign(cells, 0.0f);
        int occ = 0;
        for (auto& x : v.values) {
          if (engine.uniform01() < 0.35) {
            x = 1.0f;
            ++occ;
          }
        }
        v.occupied_count = occ;
        group.push_back(std::move(v));
      }
      const int th = static_cast<int>(engine.below(50));
      const auto kept = hamming_dedup(group, th);
      std::vector<int> oracle;
      for (const auto& g : group) {
        bool dup = false;
        for (int k : oracle) {
          int d = 0;
          for (std::size_t c = 0; c < cells; ++c) {
            d += g.values[c] != group[static_cast<std::size_t>(k)].values[c];
          }
          if (d < th) {
            dup = true;
            break;
          }
        }
        if (!dup) oracle.push_back(static_cast<int>(g.segment_id));
      }
      dedup_ok &= kept.size() == oracle.size();
      for (std::size_t i = 0; i < kept.size() && dedup_ok; ++i) {
        dedup_ok &= kept[i].segment_id == oracle[i];
      }
    }

    {  // build_groups against an independent chaining pass
      std::vector<Segment> segments;
      std::int64_t id = 0;
      for (int frame = 0; frame < 5; ++frame) {
        const int n = 1 + static_cast<int>(engine.below(4));
        for (int k = 0; k < n; ++k) {
          Segment s;
          s.segment_id = id++;
          s.frame_index = frame;
          s.points = {{engine.uniform(0, 9), engine.uniform(0, 9), 0}};
          s.observer_position = {50, 0, 2};
          s.run_id = "acc";
          segments.push_back(std::move(s));
        }
      }
      PreprocessConfig cfg;
      cfg.d_same = 2.0;
      const auto groups = build_groups(segments, cfg);
      std::vector<std::vector<std::size_t>> oracle;
      for (std::size_t i = 0; i < segments.size(); ++i) {
        long long chosen = -1;
        for (std::size_t g = 0; g < oracle.size() && chosen < 0; ++g) {
          for (std::size_t j : oracle[g]) {
            if (segments[j].frame_index < segments[i].frame_index &&
                distance(segments[j].points[0], segments[i].points[0]) <
                    cfg.d_same) {
              chosen = static_cast<long long>(g);
              break;
            }
          }
        }
        if (chosen < 0) {
          oracle.push_back({i});
        } else {
          oracle[static_cast<std::size_t>(chosen)].push_back(i);
        }
      }
      groups_ok &= groups.size() == oracle.size();
      for (std::size_t g = 0; g < groups.size() && groups_ok; ++g) {
        groups_ok &= groups[g].member_ids.size() == oracle[g].size();
      }
    }
  }

  // strict "<" at the threshold: grids differing in exactly th_H cells stay
  const std::array<int, 3> dims{8, 8, 4};
  VoxelizedSegment a, b;
  a.segment_id = 0;
  b.segment_id = 1;
  a.dims = b.dims = dims;
  a.stage = b.stage = VoxelStage::binary;
  a.values.assign(256, 0.0f);
  b.values.assign(256, 0.0f);
  for (int i = 0; i < 25; ++i) a.values[static_cast<std::size_t>(i)] = 1.0f;
  for (int i = 25; i < 50; ++i) b.values[static_cast<std::size_t>(i)] = 1.0f;
  a.occupied_count = b.occupied_count = 25;
  const bool boundary_ok = hamming_distance(a, b) == 50 &&
                           hamming_dedup({a, b}, 50).size() == 2 &&
                           hamming_dedup({a, b}, 51).size() == 1;

  report(4, "preprocessing operations match brute-force oracles",
         voxel_ok && cluster_ok && dedup_ok && groups_ok && boundary_ok,
         std::string("voxelize ") + (voxel_ok ? "ok" : "FAIL") + ", cluster " +
             (cluster_ok ? "ok" : "FAIL") + ", dedup " +
             (dedup_ok ? "ok" : "FAIL") + ", groups " +
             (groups_ok ? "ok" : "FAIL") + ", threshold boundary " +
             (boundary_ok ? "ok" : "FAIL"));
}

// ---------------------------------------------------------------------------
// 5. retrieval and ROC oracles

void criterion_5() {
  bool nn_ok = true;
  rng::Engine engine(505);
  DescriptorIndex index(6);
  std::vector<IndexEntry> entries;
  for (int i = 0; i < 400; ++i) {
    IndexEntry e{i, i % 9, {}};
    for (int k = 0; k < 6; ++k) e.descriptor.push_back(engine.normal(0, 1));
    entries.push_back(e);
    index.add(std::move(e));
  }
  for (int trial = 0; trial < 100; ++trial) {
    Descriptor q;
    for (int k = 0; k < 6; ++k) q.push_back(engine.normal(0, 1));
    const std::int64_t exclude = static_cast<std::int64_t>(engine.below(400));
    const auto got = nearest_neighbor_match(index, q, exclude);
    double best = 1e300;
    std::int64_t best_id = -1;
    for (const auto& e : entries) {
      if (e.segment_id == exclude) continue;
      double d2 = 0;
      for (int k = 0; k < 6; ++k) {
        d2 += (e.descriptor[static_cast<std::size_t>(k)] -
               q[static_cast<std::size_t>(k)]) *
              (e.descriptor[static_cast<std::size_t>(k)] -
               q[static_cast<std::size_t>(k)]);
      }
      if (d2 < best || (d2 == best && e.segment_id < best_id)) {
        best = d2;
        best_id = e.segment_id;
      }
    }
    nn_ok &= got.segment_id == best_id;
  }

  bool auc_ok = true;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    rng::Engine e2(seed);
    std::vector<ScoredPair> scored;
    for (int i = 0; i < 200; ++i) {
      const double s = std::floor(e2.uniform01() * 25.0) / 25.0;
      scored.push_back({s, e2.uniform01() < 0.35 + 0.3 * s ? 1 : 0});
    }
    bool has0 = false, has1 = false;
    for (auto& sp : scored) (sp.y ? has1 : has0) = true;
    if (!has0) scored[0].y = 0;
    if (!has1) scored[1].y = 1;

    const RocCurve curve = roc_auc(scored);
    double u = 0.0;
    long long pairs = 0;
    for (const auto& pos : scored) {
      if (!pos.y) continue;
      for (const auto& neg : scored) {
        if (neg.y) continue;
        ++pairs;
        u += pos.score > neg.score ? 1.0 : (pos.score == neg.score ? 0.5 : 0.0);
      }
    }
    auc_ok &= std::abs(curve.auc - u / static_cast<double>(pairs)) < 1e-9;
  }

  report(5, "nearest neighbor equals exhaustive scan, AUC equals Mann-Whitney",
         nn_ok && auc_ok,
         std::string("nn ") + (nn_ok ? "ok" : "FAIL") + ", auc " +
             (auc_ok ? "ok" : "FAIL"));
}

// ---------------------------------------------------------------------------
// 6. ordering reproduction on the default synthetic dataset

PipelineConfig acceptance_config(std::uint64_t seed) {
  PipelineConfig cfg;  // default synthetic dataset: 300 groups x 8 views
  cfg.seed = seed;
  cfg.preset = "small";
  cfg.augmentation_angles_deg = {0};  // single aligned copy per segment
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.01;
  cfg.n_pos = 384;
  cfg.min_group_size = 4;
  cfg.eval_n_pos = 400;
  cfg.pair_classifier_epochs = 60;
  return cfg;
}

struct SeedOutcome {
  double cand_group = 0, cand_siamese = 0, cand_contrastive = 0,
         cand_eigen = 0;
  double auc_group = 0, auc_siamese = 0, auc_contrastive = 0, auc_eigen = 0;
  double chance = 0;
};

SeedOutcome run_seed(std::uint64_t seed, const fs::path& dir) {
  PipelineConfig cfg = acceptance_config(seed);
  const auto gen = run_generate(cfg, (dir / "data").string());
  run_preprocess(gen.dataset_path, cfg, (dir / "vox").string());

  SeedOutcome out;
  {  // chance level of the test split under random assignment
    const LoadedVoxelData data = load_voxel_dir((dir / "vox").string());
    std::map<std::int64_t, int> sizes;
    for (const auto& s : data.test) ++sizes[s.group_id];
    const int n = static_cast<int>(data.test.size());
    int eligible = 0;
    double sum = 0;
    for (const auto& s : data.test) {
      if (sizes[s.group_id] < 2) continue;
      ++eligible;
      sum += static_cast<double>(sizes[s.group_id] - 1) / (n - 1);
    }
    out.chance = eligible ? sum / eligible : 0.0;
  }

  for (const std::string method : {"group", "siamese", "contrastive"}) {
    PipelineConfig mcfg = cfg;
    if (method == "contrastive") {
      mcfg.learning_rate = 0.003;
      mcfg.epochs = 3;
    }
    const std::string ckpt = (dir / (method + ".ckpt")).string();
    run_train(method, (dir / "vox").string(), mcfg, ckpt);
    const auto reports = run_evaluate(
        method, ckpt, (dir / "vox").string(),
        method == "group" ? gen.dataset_path : std::string(),
        method == "group", mcfg, "");
    for (const auto& r : reports) {
      if (r.method == "group") {
        out.cand_group = r.candidate.accuracy;
        out.auc_group = r.roc.auc;
      } else if (r.method == "siamese") {
        out.cand_siamese = r.candidate.accuracy;
        out.auc_siamese = r.roc.auc;
      } else if (r.method == "contrastive") {
        out.cand_contrastive = r.candidate.accuracy;
        out.auc_contrastive = r.roc.auc;
      } else if (r.method == "eigen") {
        out.cand_eigen = r.candidate.accuracy;
        out.auc_eigen = r.roc.auc;
      }
    }
  }
  return out;
}

void criterion_6() {
  const double t0 = now_seconds();
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    TempDir dir("segdesc_acc6_s" + std::to_string(seed));
    const SeedOutcome o = run_seed(seed, dir.path);
    const bool a = o.cand_group >= 2.0 * o.cand_eigen &&
                   o.cand_contrastive >= 2.0 * o.cand_eigen;
    const bool b = o.auc_group >= o.auc_eigen + 0.05 &&
                   o.auc_siamese >= o.auc_eigen + 0.05 &&
                   o.auc_contrastive >= o.auc_eigen + 0.05;
    const bool c = o.cand_eigen >= 5.0 * o.chance;
    pass &= a && b && c;
    detail += "seed " + std::to_string(seed) + ": cand(g/s/c/e) " +
              fmt(o.cand_group) + "/" + fmt(o.cand_siamese) + "/" +
              fmt(o.cand_contrastive) + "/" + fmt(o.cand_eigen) +
              ", auc(g/s/c/e) " + fmt(o.auc_group) + "/" + fmt(o.auc_siamese) +
              "/" + fmt(o.auc_contrastive) + "/" + fmt(o.auc_eigen) +
              ", chance " + fmt(o.chance) + (a && b && c ? " ok" : " FAIL") +
              "; ";
  }
  const double elapsed = now_seconds() - t0;
  pass &= elapsed < 1800.0;
  detail += "runtime " + fmt(elapsed) + "s (<1800s)";
  report(6, "learned descriptors beat the eigenvalue baseline", pass, detail);
}

// ---------------------------------------------------------------------------
// 7. siamese weight sharing

void criterion_7() {
  // The twin branches evaluate one shared stack: pairs run as a single batch
  // through a single parameter store, so branch parameters cannot diverge.
  // Verified here by finite-differencing the full siamese loss against the
  // analytic gradients accumulated from both branch halves.
  nn::LayerStack stack({1, 6, 6, 4}, 71);
  stack.add(std::make_unique<nn::Conv3dLayer>(
      2, std::array<std::size_t, 3>{3, 3, 3}));
  stack.add(std::make_unique<nn::ReluLayer>());
  stack.add(std::make_unique<nn::FlattenLayer>());
  stack.add(std::make_unique<nn::DenseLayer>(8));
  nn::LayerStack head({8}, 72);
  head.add(std::make_unique<nn::DenseLayer>(4));
  head.add(std::make_unique<nn::ReluLayer>());
  head.add(std::make_unique<nn::DenseLayer>(1));
  head.add(std::make_unique<nn::SigmoidLayer>());

  rng::Engine engine(73);
  nn::Tensor pair_batch = nn::Tensor::zeros({2, 1, 6, 6, 4});
  for (double& v : pair_batch.values) v = engine.normal(0, 1);
  const int label = 1;

  const auto loss_of = [&]() {
    nn::Tensor desc = stack.forward(pair_batch, nn::Mode::infer);
    nn::Tensor feat = nn::Tensor::zeros({1, 8});
    for (int k = 0; k < 8; ++k) {
      feat.values[static_cast<std::size_t>(k)] =
          std::abs(desc.values[static_cast<std::size_t>(k)] -
                   desc.values[static_cast<std::size_t>(8 + k)]);
    }
    const double p = head.forward(feat, nn::Mode::infer).values[0];
    return nn::loss_binary_ce(p, label).loss;
  };

  // analytic pass, exactly as the trainer computes it
  stack.zero_grads();
  head.zero_grads();
  nn::Tensor desc = stack.forward(pair_batch, nn::Mode::train);
  nn::Tensor feat = nn::Tensor::zeros({1, 8});
  std::vector<double> sign(8);
  for (int k = 0; k < 8; ++k) {
    const double diff = desc.values[static_cast<std::size_t>(k)] -
                        desc.values[static_cast<std::size_t>(8 + k)];
    feat.values[static_cast<std::size_t>(k)] = std::abs(diff);
    sign[static_cast<std::size_t>(k)] =
        diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
  }
  const nn::Tensor prob = head.forward(feat, nn::Mode::train);
  nn::Tensor grad_pre = nn::Tensor::zeros({1, 1});
  grad_pre.values[0] = prob.values[0] - label;
  const nn::Tensor grad_feat = head.backward_fused_final(grad_pre);
  nn::Tensor grad_desc = nn::Tensor::zeros(desc.shape);
  for (int k = 0; k < 8; ++k) {
    const double g = grad_feat.values[static_cast<std::size_t>(k)] *
                     sign[static_cast<std::size_t>(k)];
    grad_desc.values[static_cast<std::size_t>(k)] = g;
    grad_desc.values[static_cast<std::size_t>(8 + k)] = -g;
  }
  stack.backward(grad_desc);

  double worst = 0.0;
  const double h = 1e-4;
  auto params = stack.params();
  rng::Engine picker(74);
  int checked = 0;
  for (int trial = 0; trial < 80; ++trial) {
    const std::size_t v = picker.below(params.size());
    const std::size_t e = picker.below(params[v].values->size());
    double& w = (*params[v].values)[e];
    const double analytic = (*params[v].grads)[e];
    const double saved = w;
    w = saved + h;
    const double up = loss_of();
    w = saved - h;
    const double down = loss_of();
    w = saved;
    const double numeric = (up - down) / (2 * h);
    if (std::abs(analytic) + std::abs(numeric) < 1e-10) continue;
    ++checked;
    worst = std::max(worst, std::abs(analytic - numeric) /
                                std::max(1e-8, std::abs(analytic) +
                                                   std::abs(numeric)));
  }
  report(7, "siamese branches share one parameter store",
         checked > 20 && worst < 1e-4,
         "single storage by construction; both-branch gradient accumulation "
         "max rel err " +
             fmt(worst) + " over " + std::to_string(checked) + " weights");
}

// ---------------------------------------------------------------------------
// 8. hard-mining equivalence

void criterion_8() {
  bool pass = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    rng::Engine engine(seed);
    // 50 synthetic descriptors in 10 groups, mined through a stub net is
    // unnecessary: exercise the public miner via a tiny net over random
    // normalized grids, then compare against sorting its own descriptors.
    const std::array<int, 3> dims{6, 6, 4};
    std::vector<VoxelizedSegment> storage(50);
    SampleSet samples;
    for (int i = 0; i < 50; ++i) {
      storage[static_cast<std::size_t>(i)].segment_id = i;
      storage[static_cast<std::size_t>(i)].dims = dims;
      storage[static_cast<std::size_t>(i)].stage = VoxelStage::normalized;
      storage[static_cast<std::size_t>(i)].values.resize(144);
      for (float& v : storage[static_cast<std::size_t>(i)].values) {
        v = static_cast<float>(engine.normal(0, 1));
      }
      samples.push_back({i, i % 10, &storage[static_cast<std::size_t>(i)]});
    }
    nn::LayerStack stackl({1, 6, 6, 4}, seed);
    stackl.add(std::make_unique<nn::FlattenLayer>());
    stackl.add(std::make_unique<nn::DenseLayer>(8));
    DescriptorNetConfig nc;
    nc.preset = NetPreset::custom;
    nc.grid_dims = dims;
    nc.descriptor_dim = 8;
    nc.seed = seed;
    DescriptorNet net(nc, std::move(stackl));

    const int k = 15;
    const MinedPairs mined = mine_hard_pairs(net, samples, k, 1.0, seed * 7);

    std::vector<const VoxelizedSegment*> grids;
    for (const auto& s : samples) grids.push_back(s.grid);
    const auto descs = extract_descriptors(net, grids);
    struct Cand {
      double d2;
      std::int64_t a, b;
    };
    std::vector<Cand> pos, neg;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      for (std::size_t j = i + 1; j < samples.size(); ++j) {
        double d2 = 0;
        for (std::size_t c = 0; c < descs[i].size(); ++c) {
          d2 += (descs[i][c] - descs[j][c]) * (descs[i][c] - descs[j][c]);
        }
        const auto [a, b] =
            std::minmax(samples[i].segment_id, samples[j].segment_id);
        if (samples[i].group_id == samples[j].group_id) {
          pos.push_back({d2, a, b});
        } else {
          neg.push_back({d2, a, b});
        }
      }
    }
    std::sort(neg.begin(), neg.end(), [](const Cand& x, const Cand& y) {
      return x.d2 != y.d2 ? x.d2 < y.d2
                          : std::tie(x.a, x.b) < std::tie(y.a, y.b);
    });
    std::sort(pos.begin(), pos.end(), [](const Cand& x, const Cand& y) {
      return x.d2 != y.d2 ? x.d2 > y.d2
                          : std::tie(x.a, x.b) < std::tie(y.a, y.b);
    });
    std::set<std::pair<std::int64_t, std::int64_t>> top_pos, top_neg;
    for (int i = 0; i < k; ++i) {
      top_pos.insert({pos[static_cast<std::size_t>(i)].a,
                      pos[static_cast<std::size_t>(i)].b});
      top_neg.insert({neg[static_cast<std::size_t>(i)].a,
                      neg[static_cast<std::size_t>(i)].b});
    }
    pass &= mined.pairs.size() == 2 * static_cast<std::size_t>(k);
    for (const auto& p : mined.pairs) {
      const auto id = std::minmax(p.id_a, p.id_b);
      pass &= (p.y ? top_pos : top_neg).count({id.first, id.second}) == 1;
    }
  }
  report(8, "mined hard pairs equal the brute-force top-k sets", pass,
         "20 seeded 50-segment instances");
}

// ---------------------------------------------------------------------------
// 9. throughput ordering

void criterion_9() {
  PipelineConfig cfg;
  cfg.bench_repetitions = 10;
  cfg.bench_batch_count = 48;
  const BenchSummary s = run_bench("", "both", cfg);
  report(9, "small preset outruns the default preset",
         s.small_rate > s.default_rate,
         "small " + fmt(s.small_rate) + " vs default " + fmt(s.default_rate) +
             " segments/s, median of 10");
}

// ---------------------------------------------------------------------------
// 10. command line determinism

void criterion_10(const std::string& cli) {
  TempDir dir("segdesc_acc10");
  const std::string cfg_path = (dir.path / "run.cfg").string();
  {
    std::ofstream cfg(cfg_path);
    cfg << "n_groups = 24\nviews_per_group = 4\npoint_density = 70\n"
        << "min_view_points = 20\nseed = 5\npreset = small\n"
        << "augmentation_angles_deg = 0\nepochs = 3\nbatch_size = 16\n"
        << "n_pos = 48\nmin_group_size = 2\ndescriptor_dim = 32\n";
  }
  const auto run_once = [&](const std::string& tag) -> std::string {
    const fs::path w = dir.path / tag;
    fs::create_directories(w);
    const std::string log = " >> " + (w / "log.txt").string() + " 2>&1";
    const std::string data = (w / "data").string();
    const std::string vox = (w / "vox").string();
    const std::string ckpt = (w / "model.ckpt").string();
    const std::string csv = (w / "descriptors.csv").string();
    if (std::system((cli + " generate --spec " + cfg_path + " --out " + data +
                     log).c_str()) != 0) return "";
    if (std::system((cli + " preprocess --in " + data + " --config " +
                     cfg_path + " --out " + vox + log).c_str()) != 0)
      return "";
    if (std::system((cli + " train --method contrastive --in " + vox +
                     " --config " + cfg_path + " --out " + ckpt + log)
                        .c_str()) != 0)
      return "";
    if (std::system((cli + " extract --model " + ckpt + " --in " + vox +
                     " --out " + csv + log).c_str()) != 0)
      return "";
    std::ifstream is(csv, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is),
                       std::istreambuf_iterator<char>());
  };
  const std::string a = run_once("a");
  const std::string b = run_once("b");
  report(10, "repeated pipeline runs produce byte-identical descriptors",
         !a.empty() && a == b,
         "generate / preprocess / train 3 epochs / extract, " +
             std::to_string(a.size()) + " bytes compared");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance_tests <path-to-cli>\n");
    return 2;
  }
  const std::string cli = argv[1];

  const auto guarded = [](int criterion, const char* name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(criterion, name, false, std::string("exception: ") + e.what());
    }
  };

  guarded(1, "gradient checks", criterion_1);
  guarded(2, "contrastive loss unit suite", criterion_2);
  guarded(3, "alignment invariance", criterion_3);
  guarded(4, "preprocessing oracles", criterion_4);
  guarded(5, "retrieval and ROC oracles", criterion_5);
  guarded(6, "ordering reproduction", criterion_6);
  guarded(7, "siamese weight sharing", criterion_7);
  guarded(8, "hard-mining equivalence", criterion_8);
  guarded(9, "throughput ordering", criterion_9);
  guarded(10, "pipeline determinism",
          [&] { criterion_10(cli); });

  std::printf("%s\n", g_failures == 0 ? "all acceptance criteria passed"
                                      : "acceptance failures detected");
  return g_failures == 0 ? 0 : 1;
}
