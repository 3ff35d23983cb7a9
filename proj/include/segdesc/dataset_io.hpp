#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "segdesc/geometry.hpp"
#include "segdesc/preprocessing.hpp"

namespace segdesc {

struct DatasetContent {
  std::vector<Segment> segments;
  std::vector<SegmentGroup> groups;
};

/// Segment dataset: line-delimited records, one segment per line:
///   1 <run_id> <frame_index> <segment_id> <group_id> <ox> <oy> <oz>
///   <n_points> <base64 of little-endian float64 xyz triples>
/// Observer coordinates print with enough digits to round-trip exactly;
/// the payload is bit-exact by construction.
void write_dataset(const std::string& path, const DatasetContent& content);

/// Errors carry the line number, and the byte offset for truncated payloads.
DatasetContent read_dataset(const std::string& path);

std::string base64_encode(const std::uint8_t* data, std::size_t n);
std::vector<std::uint8_t> base64_decode(const std::string& text);

enum class Split { train, validation, test };
std::string split_name(Split s);
Split split_from_name(const std::string& name);

/// Group-atomic split assignment: all views of a group share one split.
std::map<std::int64_t, Split> assign_splits(
    const std::vector<SegmentGroup>& groups, double train_fraction,
    double validation_fraction, std::uint64_t seed);

/// Bit-packed binary voxel grid with split and group tags; the on-disk and
/// in-memory form for whole datasets.
struct VoxelRecord {
  std::int64_t segment_id = 0;
  std::int64_t group_id = 0;
  Split split = Split::train;
  std::uint32_t occupied = 0;
  std::vector<std::uint8_t> bits;
};

struct VoxelSet {
  VoxelGridSpec spec;
  std::vector<VoxelRecord> records;
};

VoxelRecord pack_voxels(const VoxelizedSegment& v, std::int64_t group_id,
                        Split split);
VoxelizedSegment unpack_voxels(const VoxelRecord& r, const VoxelGridSpec& spec);
/// Hamming distance on packed grids (popcount of xor).
int packed_hamming_distance(const VoxelRecord& a, const VoxelRecord& b);

/// Per-cell mean and population std over packed binary grids; for binary
/// cells the variance is exactly p(1-p).
NormalizationStats fit_normalizer_packed(
    const std::vector<const VoxelRecord*>& train, const VoxelGridSpec& spec,
    double epsilon);

/// Voxel set file: magic "SVX1", u32 LE header length, JSON header, then one
/// fixed-size record per grid.
void write_voxel_set(const std::string& path, const VoxelSet& set);
VoxelSet read_voxel_set(const std::string& path);

/// Stats file: magic "SST1", u32 LE header length, JSON header, then mean and
/// standard-deviation arrays as little-endian float64.
void write_stats(const std::string& path, const NormalizationStats& stats);
NormalizationStats read_stats(const std::string& path);

struct DatasetManifest {
  int format_version = 1;
  std::uint64_t seed = 0;
  int augmentation_slots = 1;  // voxel id = segment id * slots + angle index
  std::map<std::int64_t, Split> group_split;
  nlohmann::json preprocess_config;
  std::string voxels_file = "voxels.svx";
  std::string stats_file = "stats.bin";
  std::string source_dataset;
  nlohmann::json counters;
};

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

}  // namespace segdesc
