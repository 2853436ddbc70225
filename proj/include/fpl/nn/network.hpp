#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpl/nn/layers.hpp"

namespace fpl::nn {

enum class NetworkMode { Supervised, SimclrPretrain, Finetune };

std::string to_string(NetworkMode mode);
NetworkMode network_mode_from_string(const std::string& name);

struct NetworkConfig {
  int flowpic_dim = 32;
  int num_classes = 5;
  bool with_dropout = false;
  NetworkMode mode = NetworkMode::Supervised;
  /// Set iff mode != Supervised.
  std::optional<int> projection_dim;

  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

nlohmann::json to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);

/// Sequential CNN with named layers. The backbone is every layer up to and
/// including the ReLU after the first fully connected layer.
template <typename Scalar>
class Network {
 public:
  Network(NetworkConfig config, std::vector<std::unique_ptr<Layer<Scalar>>> layers,
          std::vector<std::string> names, std::size_t backbone_end);

  const NetworkConfig& config() const noexcept { return config_; }
  std::size_t size() const noexcept { return layers_.size(); }
  std::size_t backbone_end() const noexcept { return backbone_end_; }
  const std::string& layer_name(std::size_t i) const { return names_.at(i); }
  Layer<Scalar>& layer(std::size_t i) { return *layers_.at(i); }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training) {
    return forward_range(x, 0, layers_.size(), training);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& grad) {
    return backward_range(grad, 0, layers_.size());
  }
  Tensor<Scalar> forward_range(Tensor<Scalar> x, std::size_t first, std::size_t last, bool training);
  Tensor<Scalar> backward_range(Tensor<Scalar> grad, std::size_t first, std::size_t last);

  std::vector<Parameter<Scalar>*> parameters();
  Parameter<Scalar>& parameter(const std::string& name);
  std::size_t parameter_count();
  std::size_t trainable_count();
  void zero_grad();
  void freeze_backbone();

  /// Kaiming-uniform (fan-in) weights, zero biases.
  void initialize(std::uint64_t seed);

  /// Snapshot of all parameter values keyed by name.
  std::map<std::string, Vector<Scalar>> state() ;
  void load_state(const std::map<std::string, Vector<Scalar>>& state);

  Rng& dropout_rng() { return dropout_rng_; }

  /// Per-layer summary: name, kind, output shape, parameter count.
  std::string summary();

 private:
  NetworkConfig config_;
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
  std::vector<std::string> names_;
  std::size_t backbone_end_;
  Rng dropout_rng_{0};
};

/// Builds the fixed topology for `config` and initializes it from `seed`.
template <typename Scalar = float>
Network<Scalar> build_network(const NetworkConfig& config, std::uint64_t seed = 0);

extern template class Network<float>;
extern template class Network<double>;
extern template Network<float> build_network<float>(const NetworkConfig&, std::uint64_t);
extern template Network<double> build_network<double>(const NetworkConfig&, std::uint64_t);

}  // namespace fpl::nn
