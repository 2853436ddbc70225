#include "fpl/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace fpl::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

Checkpoint make_checkpoint(Network<float>& net, CheckpointMetadata metadata) {
  Checkpoint ckpt{net.config(), {}, std::move(metadata)};
  for (auto* p : net.parameters()) {
    ckpt.parameters[p->name] =
        ParameterArray{p->shape, std::vector<float>(p->value.data(), p->value.data() + p->value.size())};
  }
  return ckpt;
}

Network<float> restore_network(const Checkpoint& ckpt) {
  auto net = build_network<float>(ckpt.config, ckpt.metadata.seed);
  for (auto* p : net.parameters()) {
    auto it = ckpt.parameters.find(p->name);
    if (it == ckpt.parameters.end()) {
      throw std::runtime_error("checkpoint lacks parameter '" + p->name + "'");
    }
    if (it->second.shape != p->shape) {
      throw std::runtime_error("checkpoint parameter '" + p->name + "' has shape " +
                               shape_string(it->second.shape) + ", expected " + shape_string(p->shape));
    }
    p->value = Eigen::Map<const Vector<float>>(it->second.values.data(), p->value.size());
  }
  return net;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["config"] = to_json(ckpt.config);
  header["metadata"] = {{"seed", ckpt.metadata.seed},
                        {"epoch", ckpt.metadata.epoch},
                        {"history", ckpt.metadata.history}};
  header["parameters"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, arr] : ckpt.parameters) {
    header["parameters"].push_back(
        {{"name", name}, {"shape", arr.shape}, {"offset", offset}, {"count", arr.values.size()}});
    offset += arr.values.size();
  }
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  const std::uint64_t len = text.size();
  out.insert(out.end(), reinterpret_cast<const std::uint8_t*>(&len),
             reinterpret_cast<const std::uint8_t*>(&len) + sizeof len);
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, arr] : ckpt.parameters) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(arr.values.data());
    out.insert(out.end(), bytes, bytes + arr.values.size() * sizeof(float));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t prefix = sizeof kCheckpointMagic + sizeof(std::uint64_t);
  if (bytes.size() < prefix || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw std::runtime_error("not a checkpoint file (bad magic)");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + sizeof kCheckpointMagic, sizeof len);
  if (bytes.size() < prefix + len) throw std::runtime_error("truncated checkpoint header");
  Checkpoint ckpt;
  std::size_t data_start = prefix + len;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + prefix, bytes.begin() + static_cast<std::ptrdiff_t>(prefix + len));
    if (header.at("format_version").get<int>() != 1) throw std::runtime_error("unsupported checkpoint version");
    ckpt.config = network_config_from_json(header.at("config"));
    const auto& meta = header.at("metadata");
    ckpt.metadata.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.metadata.epoch = meta.at("epoch").get<int>();
    ckpt.metadata.history = meta.at("history").get<std::map<std::string, std::vector<double>>>();
    for (const auto& p : header.at("parameters")) {
      ParameterArray arr;
      arr.shape = p.at("shape").get<Shape>();
      const auto offset = p.at("offset").get<std::uint64_t>();
      const auto count = p.at("count").get<std::uint64_t>();
      if (static_cast<std::uint64_t>(shape_size(arr.shape)) != count) {
        throw std::runtime_error("checkpoint parameter count does not match its shape");
      }
      const std::size_t begin = data_start + offset * sizeof(float);
      if (begin + count * sizeof(float) > bytes.size()) throw std::runtime_error("truncated checkpoint data");
      arr.values.resize(count);
      std::memcpy(arr.values.data(), bytes.data() + begin, count * sizeof(float));
      ckpt.parameters.emplace(p.at("name").get<std::string>(), std::move(arr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("corrupt checkpoint header: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace fpl::nn
