#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpl/nn/network.hpp"

namespace fpl::nn {

struct ParameterArray {
  Shape shape;
  std::vector<float> values;

  bool operator==(const ParameterArray&) const = default;
};

struct CheckpointMetadata {
  std::uint64_t seed = 0;
  int epoch = 0;
  /// Named per-epoch metric series, e.g. "train_loss", "val_loss".
  std::map<std::string, std::vector<double>> history;

  bool operator==(const CheckpointMetadata&) const = default;
};

struct Checkpoint {
  NetworkConfig config;
  std::map<std::string, ParameterArray> parameters;
  CheckpointMetadata metadata;

  bool operator==(const Checkpoint&) const = default;
};

inline constexpr char kCheckpointMagic[8] = {'F', 'P', 'L', 'C', 'K', 'P', 'T', '1'};

Checkpoint make_checkpoint(Network<float>& net, CheckpointMetadata metadata = {});
/// Rebuilds a float network and loads the stored parameters.
Network<float> restore_network(const Checkpoint& ckpt);

/// Layout: 8-byte magic, u64 LE header length, JSON header, then each
/// parameter as little-endian float32 in header order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

}  // namespace fpl::nn
