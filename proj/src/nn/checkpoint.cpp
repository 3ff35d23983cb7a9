#include "segdesc/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "segdesc/error.hpp"

namespace segdesc::nn {

namespace {

constexpr char kMagic[4] = {'S', 'D', 'N', '1'};

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
    throw DataError(path + ": truncated checkpoint header");
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

Shape shape_from_json(const nlohmann::json& j) {
  Shape s;
  for (const auto& d : j) s.push_back(d.get<std::size_t>());
  return s;
}

}  // namespace

LayerStack& LoadedCheckpoint::stack(const std::string& name) {
  for (auto& [n, s] : stacks) {
    if (n == name) return s;
  }
  throw DataError("checkpoint has no stack named '" + name + "'");
}

bool LoadedCheckpoint::has_stack(const std::string& name) const {
  for (const auto& [n, s] : stacks) {
    if (n == name) return true;
  }
  return false;
}

void save_checkpoint(
    const std::string& path, const CheckpointMeta& meta,
    const std::vector<std::pair<std::string, const LayerStack*>>& stacks) {
  nlohmann::json header;
  header["format"] = 1;
  header["regime"] = meta.regime;
  header["preset"] = meta.preset;
  header["descriptor_dim"] = meta.descriptor_dim;
  header["grid_dims"] = {meta.grid_dims[0], meta.grid_dims[1],
                         meta.grid_dims[2]};
  header["voxel_size"] = meta.voxel_size;
  header["seed"] = meta.seed;
  if (!meta.extra.is_null()) header["extra"] = meta.extra;

  nlohmann::json stacks_json = nlohmann::json::array();
  for (const auto& [name, stack] : stacks) {
    nlohmann::json sj;
    sj["name"] = name;
    sj["seed"] = stack->seed();
    sj["input_shape"] = stack->input_shape();
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < stack->layer_count(); ++i) {
      layers.push_back(stack->layer(i).describe());
    }
    sj["layers"] = layers;
    stacks_json.push_back(sj);
  }
  header["stacks"] = stacks_json;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  const std::string header_utf8 = header.dump();
  os.write(kMagic, 4);
  put_u32(os, static_cast<std::uint32_t>(header_utf8.size()));
  os.write(header_utf8.data(),
           static_cast<std::streamsize>(header_utf8.size()));
  for (const auto& [name, stack] : stacks) {
    for (const ParamView& p : const_cast<LayerStack*>(stack)->params()) {
      for (double v : *p.values) put_f32(os, static_cast<float>(v));
    }
  }
  if (!os) throw DataError("write failed for checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path + ": not a checkpoint file (bad magic)");
  }
  const std::uint32_t header_len = get_u32(is, path);
  std::string header_utf8(header_len, '\0');
  if (!is.read(header_utf8.data(), header_len)) {
    throw DataError(path + ": truncated checkpoint header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_utf8);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid checkpoint header: " + e.what());
  }
  if (header.value("format", 0) != 1) {
    throw DataError(path + ": unsupported checkpoint format version");
  }

  LoadedCheckpoint out;
  out.meta.regime = header.value("regime", "");
  out.meta.preset = header.value("preset", "");
  out.meta.descriptor_dim = header.value("descriptor_dim", 0);
  if (header.contains("grid_dims")) {
    for (int a = 0; a < 3; ++a) {
      out.meta.grid_dims[a] = header["grid_dims"].at(a).get<int>();
    }
  }
  out.meta.voxel_size = header.value("voxel_size", 0.0);
  out.meta.seed = header.value("seed", std::uint64_t{0});
  if (header.contains("extra")) out.meta.extra = header["extra"];

  for (const auto& sj : header.at("stacks")) {
    LayerStack stack(shape_from_json(sj.at("input_shape")),
                     sj.value("seed", std::uint64_t{0}));
    for (const auto& lj : sj.at("layers")) {
      stack.add(layer_from_json(lj));
    }
    out.stacks.emplace_back(sj.at("name").get<std::string>(), std::move(stack));
  }

  for (auto& [name, stack] : out.stacks) {
    for (const ParamView& p : stack.params()) {
      for (double& v : *p.values) {
        unsigned char b[4];
        if (!is.read(reinterpret_cast<char*>(b), 4)) {
          throw DataError(path + ": truncated parameters for stack '" + name +
                          "' (" + p.name + ")");
        }
        std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                             (static_cast<std::uint32_t>(b[1]) << 8) |
                             (static_cast<std::uint32_t>(b[2]) << 16) |
                             (static_cast<std::uint32_t>(b[3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        v = static_cast<double>(f);
      }
    }
  }
  char extra;
  if (is.read(&extra, 1)) {
    throw DataError(path + ": trailing bytes after declared parameters");
  }
  return out;
}

}  // namespace segdesc::nn
