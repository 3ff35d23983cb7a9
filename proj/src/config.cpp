#include "segdesc/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "segdesc/error.hpp"

namespace segdesc {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw UsageError("config: " + key + ": expected a number, got '" + value +
                     "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw UsageError("config: " + key + ": expected an integer, got '" + value +
                     "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw UsageError("config: " + key + ": expected an unsigned integer, got '" +
                     value + "'");
  }
}

std::vector<double> parse_double_list(const std::string& key,
                                      const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_double(key, item));
  }
  return out;
}

}  // namespace

void PipelineConfig::apply(const std::string& key, const std::string& value) {
  if (key == "n_groups") n_groups = parse_int(key, value);
  else if (key == "views_per_group") views_per_group = parse_int(key, value);
  else if (key == "box_weight") box_weight = parse_double(key, value);
  else if (key == "cylinder_weight") cylinder_weight = parse_double(key, value);
  else if (key == "l_shape_weight") l_shape_weight = parse_double(key, value);
  else if (key == "wall_weight") wall_weight = parse_double(key, value);
  else if (key == "size_min") size_min = parse_double(key, value);
  else if (key == "size_max") size_max = parse_double(key, value);
  else if (key == "occlusion_fraction") occlusion_fraction = parse_double(key, value);
  else if (key == "view_angle_range_deg") view_angle_range_deg = parse_double(key, value);
  else if (key == "point_density") point_density = parse_double(key, value);
  else if (key == "noise_sigma") noise_sigma = parse_double(key, value);
  else if (key == "min_view_points") min_view_points = parse_int(key, value);
  else if (key == "run_id") run_id = value;
  else if (key == "d_same") d_same = parse_double(key, value);
  else if (key == "th_h") th_h = parse_int(key, value);
  else if (key == "cluster_radius") cluster_radius = parse_double(key, value);
  else if (key == "min_cluster_points") min_cluster_points = parse_int(key, value);
  else if (key == "augmentation_angles_deg") augmentation_angles_deg = parse_double_list(key, value);
  else if (key == "grid_nx") grid_nx = parse_int(key, value);
  else if (key == "grid_ny") grid_ny = parse_int(key, value);
  else if (key == "grid_nz") grid_nz = parse_int(key, value);
  else if (key == "voxel_size") voxel_size = parse_double(key, value);
  else if (key == "norm_epsilon") norm_epsilon = parse_double(key, value);
  else if (key == "split_train") split_train = parse_double(key, value);
  else if (key == "split_validation") split_validation = parse_double(key, value);
  else if (key == "preset") preset = value;
  else if (key == "descriptor_dim") descriptor_dim = parse_int(key, value);
  else if (key == "dropout_group") dropout_group = parse_double(key, value);
  else if (key == "dropout_siamese") dropout_siamese = parse_double(key, value);
  else if (key == "dropout_contrastive") dropout_contrastive = parse_double(key, value);
  else if (key == "learning_rate") learning_rate = parse_double(key, value);
  else if (key == "momentum") momentum = parse_double(key, value);
  else if (key == "batch_size") batch_size = parse_int(key, value);
  else if (key == "epochs") epochs = parse_int(key, value);
  else if (key == "min_group_size") min_group_size = parse_int(key, value);
  else if (key == "n_pos") n_pos = parse_int(key, value);
  else if (key == "margin") margin = parse_double(key, value);
  else if (key == "k_hard") k_hard = parse_int(key, value);
  else if (key == "subsample_ratio") subsample_ratio = parse_double(key, value);
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "eval_n_pos") eval_n_pos = parse_int(key, value);
  else if (key == "pair_classifier_epochs") pair_classifier_epochs = parse_int(key, value);
  else if (key == "pair_classifier_lr") pair_classifier_lr = parse_double(key, value);
  else if (key == "bench_repetitions") bench_repetitions = parse_int(key, value);
  else if (key == "bench_batch_count") bench_batch_count = parse_int(key, value);
  else throw UsageError("config: unknown key '" + key + "'");
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config file: " + path);
  PipelineConfig cfg;
  std::string line;
  long long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(line_no) +
                       ": expected key=value");
    }
    cfg.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

SyntheticSpec PipelineConfig::synthetic_spec() const {
  SyntheticSpec spec;
  spec.n_groups = n_groups;
  spec.views_per_group = views_per_group;
  spec.box_weight = box_weight;
  spec.cylinder_weight = cylinder_weight;
  spec.l_shape_weight = l_shape_weight;
  spec.wall_weight = wall_weight;
  spec.size_min = size_min;
  spec.size_max = size_max;
  spec.occlusion_fraction = occlusion_fraction;
  spec.view_angle_range = view_angle_range_deg * M_PI / 180.0;
  spec.point_density = point_density;
  spec.noise_sigma = noise_sigma;
  spec.min_view_points = min_view_points;
  spec.seed = seed;
  spec.run_id = run_id;
  return spec;
}

PreprocessConfig PipelineConfig::preprocess_config() const {
  PreprocessConfig cfg;
  cfg.d_same = d_same;
  cfg.th_h = th_h;
  cfg.cluster_radius = cluster_radius;
  cfg.min_cluster_points = min_cluster_points;
  cfg.augmentation_angles.clear();
  for (double deg : augmentation_angles_deg) {
    cfg.augmentation_angles.push_back(deg * M_PI / 180.0);
  }
  if (cfg.augmentation_angles.empty()) {
    cfg.augmentation_angles.push_back(0.0);
  }
  cfg.norm_epsilon = norm_epsilon;
  return cfg;
}

VoxelGridSpec PipelineConfig::grid_spec() const {
  return {{grid_nx, grid_ny, grid_nz}, voxel_size};
}

nn::SgdConfig PipelineConfig::sgd_config() const {
  nn::SgdConfig cfg;
  cfg.learning_rate = learning_rate;
  cfg.momentum = momentum;
  cfg.batch_size = batch_size;
  cfg.epochs = epochs;
  cfg.seed = seed;
  return cfg;
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j;
  j["n_groups"] = n_groups;
  j["views_per_group"] = views_per_group;
  j["box_weight"] = box_weight;
  j["cylinder_weight"] = cylinder_weight;
  j["l_shape_weight"] = l_shape_weight;
  j["wall_weight"] = wall_weight;
  j["size_min"] = size_min;
  j["size_max"] = size_max;
  j["occlusion_fraction"] = occlusion_fraction;
  j["view_angle_range_deg"] = view_angle_range_deg;
  j["point_density"] = point_density;
  j["noise_sigma"] = noise_sigma;
  j["min_view_points"] = min_view_points;
  j["run_id"] = run_id;
  j["d_same"] = d_same;
  j["th_h"] = th_h;
  j["cluster_radius"] = cluster_radius;
  j["min_cluster_points"] = min_cluster_points;
  j["augmentation_angles_deg"] = augmentation_angles_deg;
  j["grid_nx"] = grid_nx;
  j["grid_ny"] = grid_ny;
  j["grid_nz"] = grid_nz;
  j["voxel_size"] = voxel_size;
  j["norm_epsilon"] = norm_epsilon;
  j["split_train"] = split_train;
  j["split_validation"] = split_validation;
  j["preset"] = preset;
  j["descriptor_dim"] = descriptor_dim;
  j["dropout_group"] = dropout_group;
  j["dropout_siamese"] = dropout_siamese;
  j["dropout_contrastive"] = dropout_contrastive;
  j["learning_rate"] = learning_rate;
  j["momentum"] = momentum;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["min_group_size"] = min_group_size;
  j["n_pos"] = n_pos;
  j["margin"] = margin;
  j["k_hard"] = k_hard;
  j["subsample_ratio"] = subsample_ratio;
  j["seed"] = seed;
  j["eval_n_pos"] = eval_n_pos;
  j["pair_classifier_epochs"] = pair_classifier_epochs;
  j["pair_classifier_lr"] = pair_classifier_lr;
  j["bench_repetitions"] = bench_repetitions;
  j["bench_batch_count"] = bench_batch_count;
  return j;
}

}  // namespace segdesc
