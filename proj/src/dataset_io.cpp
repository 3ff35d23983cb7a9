#include "segdesc/dataset_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "segdesc/error.hpp"
#include "segdesc/rng.hpp"

namespace segdesc {

namespace {

constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append_f64_le(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
  }
}

double read_f64_le(const std::uint8_t* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError(path + ": truncated header");
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_i64(std::ostream& os, std::int64_t v) {
  const auto u = static_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::int64_t get_i64(std::istream& is, const std::string& path) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw DataError(path + ": truncated record");
  }
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<std::int64_t>(u);
}

nlohmann::json read_json_header(std::istream& is, const char* magic,
                                const std::string& path) {
  char got[4];
  if (!is.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
    throw DataError(path + ": bad magic (expected " + std::string(magic, 4) +
                    ")");
  }
  const std::uint32_t len = get_u32(is, path);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) {
    throw DataError(path + ": truncated header");
  }
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid header JSON: " + e.what());
  }
}

void write_json_header(std::ostream& os, const char* magic,
                       const nlohmann::json& j) {
  const std::string text = j.dump();
  os.write(magic, 4);
  put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace

std::string base64_encode(const std::uint8_t* data, std::size_t n) {
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    const std::uint32_t b0 = data[i];
    const std::uint32_t b1 = i + 1 < n ? data[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < n ? data[i + 2] : 0;
    const std::uint32_t triple = (b0 << 16) | (b1 << 8) | b2;
    out.push_back(kB64Alphabet[(triple >> 18) & 0x3f]);
    out.push_back(kB64Alphabet[(triple >> 12) & 0x3f]);
    out.push_back(i + 1 < n ? kB64Alphabet[(triple >> 6) & 0x3f] : '=');
    out.push_back(i + 2 < n ? kB64Alphabet[triple & 0x3f] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) {
    throw DataError("base64: length not a multiple of 4");
  }
  static const auto value_of = [] {
    std::array<int, 256> table;
    table.fill(-1);
    for (int i = 0; i < 64; ++i) {
      table[static_cast<unsigned char>(kB64Alphabet[i])] = i;
    }
    return table;
  }();
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        if (i + 4 != text.size() || k < 2) {
          throw DataError("base64: misplaced padding");
        }
        vals[k] = 0;
        ++pad;
      } else {
        vals[k] = value_of[static_cast<unsigned char>(c)];
        if (vals[k] < 0) {
          throw DataError("base64: invalid character");
        }
        if (pad) throw DataError("base64: data after padding");
      }
    }
    const std::uint32_t triple = (static_cast<std::uint32_t>(vals[0]) << 18) |
                                 (static_cast<std::uint32_t>(vals[1]) << 12) |
                                 (static_cast<std::uint32_t>(vals[2]) << 6) |
                                 static_cast<std::uint32_t>(vals[3]);
    out.push_back(static_cast<std::uint8_t>((triple >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((triple >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(triple & 0xff));
  }
  return out;
}

void write_dataset(const std::string& path, const DatasetContent& content) {
  std::map<std::int64_t, std::int64_t> group_of;
  for (const auto& g : content.groups) {
    for (std::int64_t id : g.member_ids) {
      if (!group_of.emplace(id, g.group_id).second) {
        throw DataError("write_dataset: segment " + std::to_string(id) +
                        " appears in more than one group");
      }
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open dataset for writing: " + path);
  std::vector<std::uint8_t> payload;
  for (const Segment& s : content.segments) {
    auto it = group_of.find(s.segment_id);
    if (it == group_of.end()) {
      throw DataError("write_dataset: segment " + std::to_string(s.segment_id) +
                      " is not a member of any group");
    }
    if (s.run_id.empty() ||
        s.run_id.find_first_of(" \t\n\r") != std::string::npos) {
      throw DataError("write_dataset: run_id must be nonempty without "
                      "whitespace (segment " +
                      std::to_string(s.segment_id) + ")");
    }
    payload.clear();
    payload.reserve(s.points.size() * 24);
    for (const Point& p : s.points) {
      append_f64_le(payload, p.x);
      append_f64_le(payload, p.y);
      append_f64_le(payload, p.z);
    }
    os << 1 << ' ' << s.run_id << ' ' << s.frame_index << ' ' << s.segment_id
       << ' ' << it->second << ' ' << fmt17(s.observer_position.x) << ' '
       << fmt17(s.observer_position.y) << ' ' << fmt17(s.observer_position.z)
       << ' ' << s.points.size() << ' '
       << base64_encode(payload.data(), payload.size()) << '\n';
  }
  if (!os) throw DataError("write failed for dataset: " + path);
}

DatasetContent read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset: " + path);

  DatasetContent content;
  std::map<std::int64_t, std::vector<std::int64_t>> group_members;
  std::vector<std::int64_t> group_order;
  std::set<std::int64_t> seen_ids;

  std::string line;
  long long line_no = 0;
  std::uint64_t offset = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::uint64_t line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;

    const std::string where =
        path + ":" + std::to_string(line_no);
    std::istringstream fields(line);
    int version = 0;
    Segment s;
    std::int64_t group_id = 0;
    std::size_t n_points = 0;
    std::string b64;
    if (!(fields >> version)) {
      throw DataError(where + ": malformed record (missing version)");
    }
    if (version != 1) {
      throw DataError(where + ": unsupported format version " +
                      std::to_string(version));
    }
    if (!(fields >> s.run_id >> s.frame_index >> s.segment_id >> group_id >>
          s.observer_position.x >> s.observer_position.y >>
          s.observer_position.z >> n_points >> b64)) {
      throw DataError(where + ": malformed record (expected 10 fields)");
    }
    std::string tail;
    if (fields >> tail) {
      throw DataError(where + ": malformed record (trailing fields)");
    }
    if (s.frame_index < 0) {
      throw DataError(where + ": negative frame index");
    }
    if (!seen_ids.insert(s.segment_id).second) {
      throw DataError(where + ": duplicate segment id " +
                      std::to_string(s.segment_id));
    }
    std::vector<std::uint8_t> payload;
    try {
      payload = base64_decode(b64);
    } catch (const DataError& e) {
      throw DataError(where + " (byte offset " + std::to_string(line_offset) +
                      "): " + e.what());
    }
    if (payload.size() != n_points * 24) {
      throw DataError(where + " (byte offset " + std::to_string(line_offset) +
                      "): truncated payload, expected " +
                      std::to_string(n_points * 24) + " bytes, got " +
                      std::to_string(payload.size()));
    }
    if (n_points == 0) {
      throw DataError(where + ": segment has no points");
    }
    s.points.reserve(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
      const std::uint8_t* p = payload.data() + i * 24;
      s.points.push_back(
          {read_f64_le(p), read_f64_le(p + 8), read_f64_le(p + 16)});
    }
    if (group_members.find(group_id) == group_members.end()) {
      group_order.push_back(group_id);
    }
    group_members[group_id].push_back(s.segment_id);
    content.segments.push_back(std::move(s));
  }
  for (std::int64_t gid : group_order) {
    content.groups.push_back({gid, group_members[gid]});
  }
  return content;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  throw DataError("unknown split name '" + name + "'");
}

std::map<std::int64_t, Split> assign_splits(
    const std::vector<SegmentGroup>& groups, double train_fraction,
    double validation_fraction, std::uint64_t seed) {
  if (train_fraction < 0 || validation_fraction < 0 ||
      train_fraction + validation_fraction > 1.0 + 1e-12) {
    throw UsageError("split fractions must be nonnegative and sum to <= 1");
  }
  std::set<std::int64_t> member_check;
  std::vector<std::int64_t> ids;
  ids.reserve(groups.size());
  for (const auto& g : groups) {
    ids.push_back(g.group_id);
    for (std::int64_t m : g.member_ids) {
      if (!member_check.insert(m).second) {
        throw DataError("assign_splits: segment " + std::to_string(m) +
                        " appears in more than one group");
      }
    }
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw DataError("assign_splits: duplicate group id");
  }
  rng::Engine engine(seed);
  engine.shuffle(ids);

  const auto g = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * g));
  const auto n_val =
      static_cast<std::size_t>(std::llround(validation_fraction * g));

  std::map<std::int64_t, Split> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out[ids[i]] = i < n_train
                      ? Split::train
                      : (i < n_train + n_val ? Split::validation : Split::test);
  }
  return out;
}

VoxelRecord pack_voxels(const VoxelizedSegment& v, std::int64_t group_id,
                        Split split) {
  if (v.stage != VoxelStage::binary) {
    throw std::invalid_argument("pack_voxels: grid must be binary");
  }
  VoxelRecord r;
  r.segment_id = v.segment_id;
  r.group_id = group_id;
  r.split = split;
  r.occupied = static_cast<std::uint32_t>(v.occupied_count);
  r.bits.assign((v.values.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    if (v.values[i] != 0.0f) r.bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return r;
}

VoxelizedSegment unpack_voxels(const VoxelRecord& r, const VoxelGridSpec& spec) {
  VoxelizedSegment v;
  v.segment_id = r.segment_id;
  v.dims = spec.dims;
  v.stage = VoxelStage::binary;
  const std::size_t cells = static_cast<std::size_t>(spec.cell_count());
  if (r.bits.size() != (cells + 7) / 8) {
    throw DataError("unpack_voxels: bit payload size does not match grid dims");
  }
  v.values.assign(cells, 0.0f);
  int occupied = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    if (r.bits[i / 8] & (1u << (i % 8))) {
      v.values[i] = 1.0f;
      ++occupied;
    }
  }
  v.occupied_count = occupied;
  if (static_cast<std::uint32_t>(occupied) != r.occupied) {
    throw DataError("unpack_voxels: occupied count mismatch for segment " +
                    std::to_string(r.segment_id));
  }
  return v;
}

NormalizationStats fit_normalizer_packed(
    const std::vector<const VoxelRecord*>& train, const VoxelGridSpec& spec,
    double epsilon) {
  if (train.empty()) {
    throw DataError("fit_normalizer_packed: training split has no records");
  }
  const std::size_t cells = static_cast<std::size_t>(spec.cell_count());
  std::vector<std::uint32_t> ones(cells, 0);
  for (const VoxelRecord* r : train) {
    for (std::size_t i = 0; i < cells; ++i) {
      if (r->bits[i / 8] & (1u << (i % 8))) ++ones[i];
    }
  }
  NormalizationStats stats;
  stats.dims = spec.dims;
  stats.epsilon = epsilon;
  stats.mean.resize(cells);
  stats.stddev.resize(cells);
  const double n = static_cast<double>(train.size());
  for (std::size_t i = 0; i < cells; ++i) {
    // Binary cells: population variance is exactly p(1-p).
    const double p = static_cast<double>(ones[i]) / n;
    stats.mean[i] = p;
    stats.stddev[i] = std::sqrt(std::max(0.0, p * (1.0 - p)));
  }
  return stats;
}

int packed_hamming_distance(const VoxelRecord& a, const VoxelRecord& b) {
  if (a.bits.size() != b.bits.size()) {
    throw std::invalid_argument("packed_hamming_distance: size mismatch");
  }
  int d = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    d += std::popcount(static_cast<unsigned>(a.bits[i] ^ b.bits[i]));
  }
  return d;
}

void write_voxel_set(const std::string& path, const VoxelSet& set) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open voxel set for writing: " + path);
  nlohmann::json header;
  header["format"] = 1;
  header["dims"] = {set.spec.dims[0], set.spec.dims[1], set.spec.dims[2]};
  header["voxel_size"] = set.spec.voxel_size;
  header["count"] = set.records.size();
  header["stage"] = "binary";
  write_json_header(os, "SVX1", header);

  const std::size_t bit_bytes =
      (static_cast<std::size_t>(set.spec.cell_count()) + 7) / 8;
  for (const VoxelRecord& r : set.records) {
    if (r.bits.size() != bit_bytes) {
      throw DataError("write_voxel_set: record bit size mismatch for segment " +
                      std::to_string(r.segment_id));
    }
    put_i64(os, r.segment_id);
    put_i64(os, r.group_id);
    os.put(static_cast<char>(r.split));
    put_u32(os, r.occupied);
    os.write(reinterpret_cast<const char*>(r.bits.data()),
             static_cast<std::streamsize>(r.bits.size()));
  }
  if (!os) throw DataError("write failed for voxel set: " + path);
}

VoxelSet read_voxel_set(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open voxel set: " + path);
  const nlohmann::json header = read_json_header(is, "SVX1", path);
  if (header.value("format", 0) != 1) {
    throw DataError(path + ": unsupported voxel set format version");
  }
  VoxelSet set;
  for (int a = 0; a < 3; ++a) {
    set.spec.dims[a] = header.at("dims").at(a).get<int>();
  }
  set.spec.voxel_size = header.at("voxel_size").get<double>();
  const auto count = header.at("count").get<std::size_t>();
  const std::size_t bit_bytes =
      (static_cast<std::size_t>(set.spec.cell_count()) + 7) / 8;
  set.records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    VoxelRecord r;
    r.segment_id = get_i64(is, path);
    r.group_id = get_i64(is, path);
    const int split = is.get();
    if (split < 0 || split > 2) {
      throw DataError(path + ": truncated or corrupt record " +
                      std::to_string(i));
    }
    r.split = static_cast<Split>(split);
    r.occupied = get_u32(is, path);
    r.bits.resize(bit_bytes);
    if (!is.read(reinterpret_cast<char*>(r.bits.data()),
                 static_cast<std::streamsize>(bit_bytes))) {
      throw DataError(path + ": truncated bit payload in record " +
                      std::to_string(i));
    }
    set.records.push_back(std::move(r));
  }
  return set;
}

void write_stats(const std::string& path, const NormalizationStats& stats) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open stats for writing: " + path);
  nlohmann::json header;
  header["format"] = 1;
  header["dims"] = {stats.dims[0], stats.dims[1], stats.dims[2]};
  header["epsilon"] = stats.epsilon;
  write_json_header(os, "SST1", header);
  std::vector<std::uint8_t> buf;
  buf.reserve(16 * stats.mean.size());
  for (double v : stats.mean) append_f64_le(buf, v);
  for (double v : stats.stddev) append_f64_le(buf, v);
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
  if (!os) throw DataError("write failed for stats: " + path);
}

NormalizationStats read_stats(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open stats: " + path);
  const nlohmann::json header = read_json_header(is, "SST1", path);
  NormalizationStats stats;
  for (int a = 0; a < 3; ++a) stats.dims[a] = header.at("dims").at(a).get<int>();
  stats.epsilon = header.at("epsilon").get<double>();
  const std::size_t cells = static_cast<std::size_t>(stats.dims[0]) *
                            stats.dims[1] * stats.dims[2];
  std::vector<std::uint8_t> buf(16 * cells);
  if (!is.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size()))) {
    throw DataError(path + ": truncated stats payload");
  }
  stats.mean.resize(cells);
  stats.stddev.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    stats.mean[i] = read_f64_le(buf.data() + 8 * i);
    stats.stddev[i] = read_f64_le(buf.data() + 8 * (cells + i));
  }
  return stats;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  nlohmann::json j;
  j["format_version"] = manifest.format_version;
  j["seed"] = manifest.seed;
  j["augmentation_slots"] = manifest.augmentation_slots;
  nlohmann::json splits = nlohmann::json::object();
  for (const auto& [gid, split] : manifest.group_split) {
    splits[std::to_string(gid)] = split_name(split);
  }
  j["splits"] = splits;
  j["preprocess_config"] = manifest.preprocess_config;
  j["voxels_file"] = manifest.voxels_file;
  j["stats_file"] = manifest.stats_file;
  j["source_dataset"] = manifest.source_dataset;
  j["counters"] = manifest.counters;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open manifest for writing: " + path);
  os << j.dump(2) << '\n';
  if (!os) throw DataError("write failed for manifest: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid manifest JSON: " + e.what());
  }
  DatasetManifest m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != 1) {
    throw DataError(path + ": unsupported manifest version " +
                    std::to_string(m.format_version));
  }
  m.seed = j.at("seed").get<std::uint64_t>();
  m.augmentation_slots = j.at("augmentation_slots").get<int>();
  for (const auto& [key, value] : j.at("splits").items()) {
    m.group_split[std::stoll(key)] = split_from_name(value.get<std::string>());
  }
  m.preprocess_config = j.value("preprocess_config", nlohmann::json::object());
  m.voxels_file = j.value("voxels_file", "voxels.svx");
  m.stats_file = j.value("stats_file", "stats.bin");
  m.source_dataset = j.value("source_dataset", "");
  m.counters = j.value("counters", nlohmann::json::object());
  return m;
}

}  // namespace segdesc
