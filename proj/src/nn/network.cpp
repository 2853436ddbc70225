#include "fpl/nn/network.hpp"

#include <sstream>
#include <stdexcept>

namespace fpl::nn {

std::string to_string(NetworkMode mode) {
  switch (mode) {
    case NetworkMode::Supervised: return "supervised";
    case NetworkMode::SimclrPretrain: return "simclr_pretrain";
    case NetworkMode::Finetune: return "finetune";
  }
  return "";
}

NetworkMode network_mode_from_string(const std::string& name) {
  if (name == "supervised") return NetworkMode::Supervised;
  if (name == "simclr_pretrain") return NetworkMode::SimclrPretrain;
  if (name == "finetune") return NetworkMode::Finetune;
  throw std::invalid_argument("unknown network mode '" + name + "'");
}

void NetworkConfig::validate() const {
  if (flowpic_dim != 32 && flowpic_dim != 64 && flowpic_dim != 1500) {
    throw std::invalid_argument("unsupported flowpic_dim " + std::to_string(flowpic_dim));
  }
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  if (mode == NetworkMode::Supervised && projection_dim) {
    throw std::invalid_argument("projection_dim is only valid for SimCLR modes");
  }
  if (mode != NetworkMode::Supervised && !projection_dim) {
    throw std::invalid_argument("projection_dim is required for SimCLR modes");
  }
  if (projection_dim && *projection_dim < 1) throw std::invalid_argument("projection_dim must be >= 1");
}

nlohmann::json to_json(const NetworkConfig& cfg) {
  nlohmann::json j = {{"flowpic_dim", cfg.flowpic_dim},
                      {"num_classes", cfg.num_classes},
                      {"with_dropout", cfg.with_dropout},
                      {"mode", to_string(cfg.mode)}};
  j["projection_dim"] = cfg.projection_dim ? nlohmann::json(*cfg.projection_dim) : nlohmann::json(nullptr);
  return j;
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig cfg;
  cfg.flowpic_dim = j.at("flowpic_dim").get<int>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.with_dropout = j.value("with_dropout", false);
  cfg.mode = network_mode_from_string(j.value("mode", std::string("supervised")));
  if (j.contains("projection_dim") && !j["projection_dim"].is_null()) {
    cfg.projection_dim = j["projection_dim"].get<int>();
  }
  cfg.validate();
  return cfg;
}

template <typename Scalar>
Network<Scalar>::Network(NetworkConfig config, std::vector<std::unique_ptr<Layer<Scalar>>> layers,
                         std::vector<std::string> names, std::size_t backbone_end)
    : config_(std::move(config)),
      layers_(std::move(layers)),
      names_(std::move(names)),
      backbone_end_(backbone_end) {}

template <typename Scalar>
Tensor<Scalar> Network<Scalar>::forward_range(Tensor<Scalar> x, std::size_t first, std::size_t last,
                                              bool training) {
  for (std::size_t i = first; i < last; ++i) x = layers_[i]->forward(x, training, dropout_rng_);
  return x;
}

template <typename Scalar>
Tensor<Scalar> Network<Scalar>::backward_range(Tensor<Scalar> grad, std::size_t first, std::size_t last) {
  for (std::size_t i = last; i-- > first;) grad = layers_[i]->backward(grad);
  return grad;
}

template <typename Scalar>
std::vector<Parameter<Scalar>*> Network<Scalar>::parameters() {
  std::vector<Parameter<Scalar>*> out;
  for (auto& l : layers_) {
    for (auto* p : l->parameters()) out.push_back(p);
  }
  return out;
}

template <typename Scalar>
Parameter<Scalar>& Network<Scalar>::parameter(const std::string& name) {
  for (auto* p : parameters()) {
    if (p->name == name) return *p;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

template <typename Scalar>
std::size_t Network<Scalar>::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

template <typename Scalar>
std::size_t Network<Scalar>::trainable_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) {
    if (!p->frozen) n += static_cast<std::size_t>(p->value.size());
  }
  return n;
}

template <typename Scalar>
void Network<Scalar>::zero_grad() {
  for (auto* p : parameters()) p->grad.setZero();
}

template <typename Scalar>
void Network<Scalar>::freeze_backbone() {
  for (std::size_t i = 0; i < backbone_end_; ++i) {
    for (auto* p : layers_[i]->parameters()) p->frozen = true;
  }
}

template <typename Scalar>
void Network<Scalar>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (auto* p : parameters()) {
    if (p->shape.size() == 1) {
      p->value.setZero();
      continue;
    }
    const double fan_in = static_cast<double>(p->value.size() / p->shape[0]);
    const double bound = std::sqrt(6.0 / fan_in);
    for (Index i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  }
  dropout_rng_ = Rng(derive_seed(seed, 0xd40u));
}

template <typename Scalar>
std::map<std::string, Vector<Scalar>> Network<Scalar>::state() {
  std::map<std::string, Vector<Scalar>> out;
  for (auto* p : parameters()) out.emplace(p->name, p->value);
  return out;
}

template <typename Scalar>
void Network<Scalar>::load_state(const std::map<std::string, Vector<Scalar>>& state) {
  for (auto* p : parameters()) {
    auto it = state.find(p->name);
    if (it == state.end()) throw std::invalid_argument("missing parameter '" + p->name + "'");
    if (it->second.size() != p->value.size()) {
      throw std::invalid_argument("parameter '" + p->name + "' has the wrong size");
    }
    p->value = it->second;
  }
}

template <typename Scalar>
std::string Network<Scalar>::summary() {
  std::ostringstream os;
  Shape shape{1, 1, config_.flowpic_dim, config_.flowpic_dim};
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    shape = layers_[i]->output_shape(shape);
    std::size_t n = 0;
    for (auto* p : layers_[i]->parameters()) n += static_cast<std::size_t>(p->value.size());
    os << names_[i] << ' ' << layers_[i]->kind() << ' ' << shape_string(shape) << ' ' << n << '\n';
  }
  os << "total " << parameter_count() << " trainable " << trainable_count() << '\n';
  return os.str();
}

namespace {

struct Topology {
  Index conv1_out, conv2_out, kernel, stride, flatten, hidden;
};

Topology topology_for(int dim) {
  switch (dim) {
    // LeNet-5 style "mini" network
    case 32: return {6, 16, 5, 1, 16 * 5 * 5, 120};
    case 64: return {6, 16, 5, 1, 16 * 13 * 13, 120};
    // "full" network: strided 10x10 kernels, one fully connected layer fewer
    case 1500: return {10, 20, 10, 5, 20 * 14 * 14, 64};
    default: throw std::invalid_argument("unsupported flowpic_dim " + std::to_string(dim));
  }
}

}  // namespace

template <typename Scalar>
Network<Scalar> build_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  const Topology t = topology_for(config.flowpic_dim);
  const bool mini = config.flowpic_dim != 1500;
  std::vector<std::unique_ptr<Layer<Scalar>>> layers;
  std::vector<std::string> names;
  auto add = [&](std::string name, std::unique_ptr<Layer<Scalar>> layer) {
    names.push_back(std::move(name));
    layers.push_back(std::move(layer));
  };
  auto dropout = [&](double p, bool channelwise) -> std::unique_ptr<Layer<Scalar>> {
    if (config.with_dropout) return std::make_unique<Dropout<Scalar>>(p, channelwise);
    return std::make_unique<Identity<Scalar>>();
  };

  add("conv1", std::make_unique<Conv2d<Scalar>>("conv1", 1, t.conv1_out, t.kernel, t.stride));
  add("relu1", std::make_unique<Relu<Scalar>>());
  add("pool1", std::make_unique<MaxPool2d<Scalar>>());
  add("conv2", std::make_unique<Conv2d<Scalar>>("conv2", t.conv1_out, t.conv2_out, t.kernel, t.stride));
  add("relu2", std::make_unique<Relu<Scalar>>());
  add("dropout2d", dropout(0.25, true));
  add("pool2", std::make_unique<MaxPool2d<Scalar>>());
  add("flatten", std::make_unique<Flatten<Scalar>>());
  add("fc1", std::make_unique<Linear<Scalar>>("fc1", t.flatten, t.hidden));
  add("relu3", std::make_unique<Relu<Scalar>>());
  const std::size_t backbone_end = layers.size();

  const Index classes = config.num_classes;
  switch (config.mode) {
    case NetworkMode::Supervised:
      if (mini) {
        add("fc2", std::make_unique<Linear<Scalar>>("fc2", t.hidden, 84));
        add("relu4", std::make_unique<Relu<Scalar>>());
        add("dropout1d", dropout(0.5, false));
        add("out", std::make_unique<Linear<Scalar>>("out", 84, classes));
      } else {
        add("dropout1d", dropout(0.5, false));
        add("out", std::make_unique<Linear<Scalar>>("out", t.hidden, classes));
      }
      break;
    case NetworkMode::SimclrPretrain:
      add("proj1", std::make_unique<Linear<Scalar>>("proj1", t.hidden, t.hidden));
      add("relu4", std::make_unique<Relu<Scalar>>());
      add("proj2", std::make_unique<Linear<Scalar>>("proj2", t.hidden, *config.projection_dim));
      break;
    case NetworkMode::Finetune:
      add("classifier", std::make_unique<Linear<Scalar>>("classifier", t.hidden, classes));
      break;
  }
  Network<Scalar> net(config, std::move(layers), std::move(names), backbone_end);
  net.initialize(seed);
  if (config.mode == NetworkMode::Finetune) net.freeze_backbone();
  return net;
}

template class Network<float>;
template class Network<double>;
template Network<float> build_network<float>(const NetworkConfig&, std::uint64_t);
template Network<double> build_network<double>(const NetworkConfig&, std::uint64_t);

}  // namespace fpl::nn
