#include "cxr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cxr {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

constexpr std::string_view kMagic = "CXRCKPT1";

using json = nlohmann::json;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename Int>
void put(std::string& out, Int value) {
  char buf[sizeof(Int)];
  std::memcpy(buf, &value, sizeof(Int));
  out.append(buf, sizeof(Int));
}

template <typename Int>
Int take(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(Int)) throw DecodeError("checkpoint truncated");
  Int value;
  std::memcpy(&value, bytes.data() + pos, sizeof(Int));
  pos += sizeof(Int);
  return value;
}

json layer_to_json(const LayerSpec& spec) {
  json j{{"kind", to_string(spec.kind)}};
  switch (spec.kind) {
    case LayerKind::conv2d:
      j["filters"] = spec.filters;
      j["kernel"] = {spec.kernel_h, spec.kernel_w};
      j["padding"] = to_string(spec.padding);
      j["init"] = to_string(spec.init);
      break;
    case LayerKind::maxpool2d:
      j["window"] = spec.window;
      break;
    case LayerKind::dropout:
      j["rate"] = spec.rate;
      break;
    case LayerKind::dense:
      j["units"] = spec.units;
      j["l2"] = spec.l2;
      j["init"] = to_string(spec.init);
      break;
    default:
      break;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec spec;
  spec.kind = parse_layer_kind(j.at("kind").get<std::string>());
  switch (spec.kind) {
    case LayerKind::conv2d:
      spec.filters = j.at("filters").get<std::size_t>();
      spec.kernel_h = j.at("kernel").at(0).get<std::size_t>();
      spec.kernel_w = j.at("kernel").at(1).get<std::size_t>();
      spec.padding = parse_padding(j.at("padding").get<std::string>());
      spec.init = parse_init(j.at("init").get<std::string>());
      break;
    case LayerKind::maxpool2d:
      spec.window = j.at("window").get<std::size_t>();
      break;
    case LayerKind::dropout:
      spec.rate = j.at("rate").get<double>();
      break;
    case LayerKind::dense:
      spec.units = j.at("units").get<std::size_t>();
      spec.l2 = j.at("l2").get<double>();
      spec.init = parse_init(j.at("init").get<std::string>());
      break;
    default:
      break;
  }
  return spec;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  const Model<float>& model = checkpoint.model;
  std::string payload;
  json tensors = json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (!model.layers()[i].has_parameters()) continue;
    for (const char* role : {"weight", "bias"}) {
      const Tensor<float>& t = std::string_view(role) == "weight" ? model.weights(i) : model.bias(i);
      tensors.push_back({{"name", "layer" + std::to_string(i) + "." + role},
                         {"shape", t.shape()},
                         {"offset", offset},
                         {"count", t.size()}});
      payload.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
      offset += t.size();
    }
  }
  json layers = json::array();
  for (const auto& spec : model.layers()) layers.push_back(layer_to_json(spec));
  json header{{"format", "cxr-checkpoint"},
              {"version", kCheckpointVersion},
              {"architecture", checkpoint.architecture},
              {"seed", checkpoint.seed},
              {"input_shape", model.input_shape()},
              {"layers", layers},
              {"tensors", tensors},
              {"dtype", "float32"},
              {"payload_fnv1a64", fnv1a(payload)},
              {"metadata", checkpoint.metadata}};
  const std::string header_text = header.dump();
  std::string out(kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  out += payload;
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw DecodeError("not a checkpoint (bad magic)");
  std::size_t pos = kMagic.size();
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw DecodeError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = take<std::uint64_t>(bytes, pos);
  if (bytes.size() - pos < header_len) throw DecodeError("checkpoint header truncated");
  json header;
  try {
    header = json::parse(bytes.substr(pos, header_len));
  } catch (const json::exception& e) {
    throw DecodeError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  pos += header_len;
  const std::string_view payload = bytes.substr(pos);

  Checkpoint ckpt;
  try {
    if (payload.size() % sizeof(float) != 0 ||
        fnv1a(payload) != header.at("payload_fnv1a64").get<std::uint64_t>()) {
      throw DecodeError("checkpoint payload corrupt or truncated");
    }
    std::vector<LayerSpec> layers;
    for (const auto& j : header.at("layers")) layers.push_back(layer_from_json(j));
    ckpt.model = Model<float>(header.at("input_shape").get<Shape>(), std::move(layers));
    ckpt.architecture = header.at("architecture").get<std::string>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.metadata = header.at("metadata").get<std::map<std::string, std::string>>();
    const auto& tensors = header.at("tensors");
    auto& params = ckpt.model.parameters();
    if (tensors.size() != params.size()) {
      throw DecodeError("checkpoint lists " + std::to_string(tensors.size()) +
                        " tensors, layer stack needs " + std::to_string(params.size()));
    }
    const std::size_t available = payload.size() / sizeof(float);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto shape = tensors[i].at("shape").get<Shape>();
      const auto offset = tensors[i].at("offset").get<std::size_t>();
      const auto count = tensors[i].at("count").get<std::size_t>();
      if (shape != params[i].shape() || count != params[i].size() || offset + count > available) {
        throw DecodeError("checkpoint tensor " + tensors[i].at("name").get<std::string>() +
                          " inconsistent with layer stack");
      }
      std::memcpy(params[i].data(), payload.data() + offset * sizeof(float), count * sizeof(float));
    }
  } catch (const json::exception& e) {
    throw DecodeError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ShapeError& e) {
    throw DecodeError(std::string("checkpoint layer stack invalid: ") + e.what());
  }
  return ckpt;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

}  // namespace cxr
