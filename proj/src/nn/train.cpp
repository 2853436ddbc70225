#include "fpl/nn/train.hpp"

#include <cmath>
#include <numeric>

namespace fpl::nn {

namespace {

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

std::vector<int> gather(const std::vector<int>& labels, const std::vector<std::size_t>& order) {
  std::vector<int> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(labels[i]);
  return out;
}

void check_finite(double loss, int epoch) {
  if (!std::isfinite(loss)) throw TrainingError("non-finite loss", epoch);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (patience < 1) throw std::invalid_argument("patience must be positive");
  if (min_delta < 0.0) throw std::invalid_argument("min_delta must be >= 0");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (top_k < 1) throw std::invalid_argument("top_k must be positive");
}

OptimizerParams TrainConfig::optimizer_params() const {
  return {optimizer, learning_rate, beta1, beta2, epsilon, momentum};
}

TrainConfig TrainConfig::supervised() { return TrainConfig{}; }

TrainConfig TrainConfig::simclr() {
  TrainConfig c;
  c.patience = 3;
  c.min_delta = 0.0;
  return c;
}

TrainConfig TrainConfig::finetune() {
  TrainConfig c;
  c.learning_rate = 0.01;
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"patience", c.patience},           {"min_delta", c.min_delta},
          {"max_epochs", c.max_epochs},       {"temperature", c.temperature},
          {"top_k", c.top_k},                 {"optimizer", c.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
          {"beta1", c.beta1},                 {"beta2", c.beta2},
          {"epsilon", c.epsilon},             {"momentum", c.momentum},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.patience = j.value("patience", c.patience);
  c.min_delta = j.value("min_delta", c.min_delta);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.temperature = j.value("temperature", c.temperature);
  c.top_k = j.value("top_k", c.top_k);
  if (j.contains("optimizer")) {
    const auto name = j["optimizer"].get<std::string>();
    if (name == "adam") c.optimizer = OptimizerKind::Adam;
    else if (name == "sgd") c.optimizer = OptimizerKind::Sgd;
    else throw std::invalid_argument("unknown optimizer '" + name + "'");
  }
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.momentum = j.value("momentum", c.momentum);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXf>& row) {
  int best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = static_cast<int>(j);
  }
  return best;
}

Evaluation evaluate(Network<float>& net, const std::vector<ImageF>& images, std::size_t batch_size) {
  Evaluation ev;
  if (images.empty()) return ev;
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    std::vector<std::size_t> order;
    for (std::size_t i = start; i < std::min(images.size(), start + batch_size); ++i) order.push_back(i);
    const auto out = net.forward(stack_images<float>(images, order), false);
    const auto m = out.as_matrix();
    if (ev.logits.size() == 0) ev.logits.resize(static_cast<Index>(images.size()), m.cols());
    ev.logits.middleRows(static_cast<Index>(start), m.rows()) = m;
  }
  ev.predictions.reserve(images.size());
  for (Index r = 0; r < ev.logits.rows(); ++r) ev.predictions.push_back(argmax_lowest(ev.logits.row(r)));
  return ev;
}

double mean_loss(Network<float>& net, const LabeledImages& data, std::size_t batch_size) {
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> order;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) order.push_back(i);
    const auto logits = net.forward(stack_images<float>(data.images, order), false);
    total += cross_entropy(logits, gather(data.labels, order)).loss * static_cast<double>(order.size());
  }
  return total / static_cast<double>(data.size());
}

Checkpoint train_supervised(Network<float>& net, const LabeledImages& train, const LabeledImages& val,
                            const TrainConfig& cfg) {
  cfg.validate();
  if (train.size() == 0 || val.size() == 0) throw std::invalid_argument("train and val sets must be nonempty");
  Optimizer<float> opt(cfg.optimizer_params());
  EarlyStopping stopper(cfg.patience, cfg.min_delta, false);
  Rng rng(derive_seed(cfg.seed, 0x5eed));
  auto order = iota_indices(train.size());
  CheckpointMetadata meta{cfg.seed, 0, {}};
  auto best = net.state();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch_size)));
      net.zero_grad();
      const auto logits = net.forward(stack_images<float>(train.images, batch), true);
      auto loss = cross_entropy(logits, gather(train.labels, batch));
      check_finite(loss.loss, epoch);
      net.backward(loss.grad);
      opt.step(net.parameters());
      epoch_loss += loss.loss * static_cast<double>(batch.size());
    }
    const double val_loss = mean_loss(net, val);
    check_finite(val_loss, epoch);
    meta.history["train_loss"].push_back(epoch_loss / static_cast<double>(train.size()));
    meta.history["val_loss"].push_back(val_loss);
    if (stopper.update(val_loss)) {
      best = net.state();
      meta.epoch = epoch;
    }
    if (stopper.should_stop()) break;
  }
  net.load_state(best);
  return make_checkpoint(net, std::move(meta));
}

Checkpoint pretrain_simclr(Network<float>& net, const std::vector<PacketSeries>& unlabeled,
                           const std::pair<AugmentationSpec, AugmentationSpec>& pair,
                           const FlowpicOptions& flowpic, const TrainConfig& cfg) {
  cfg.validate();
  if (net.config().mode != NetworkMode::SimclrPretrain) {
    throw std::invalid_argument("pretrain_simclr needs a simclr_pretrain network");
  }
  if (unlabeled.size() < 2) throw std::invalid_argument("SimCLR needs at least 2 samples");
  validate(pair.first);
  validate(pair.second);
  Optimizer<float> opt(cfg.optimizer_params());
  EarlyStopping stopper(cfg.patience, cfg.min_delta, true);
  Rng order_rng(derive_seed(cfg.seed, 0x5eed));
  Rng view_rng(derive_seed(cfg.seed, 0xa06));
  // guards the normalization against projections of empty views
  const InfoNceOptions loss_opts{cfg.temperature, cfg.top_k, 1e-6};
  auto order = iota_indices(unlabeled.size());
  CheckpointMetadata meta{cfg.seed, 0, {}};
  auto best = net.state();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(std::span(order));
    double loss_sum = 0.0, agree_sum = 0.0;
    std::size_t anchors = 0;
    for (std::size_t start = 0; start + 1 < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) break;
      std::vector<ImageF> views;
      views.reserve(2 * (end - start));
      for (std::size_t i = start; i < end; ++i) {
        auto [a, b] = make_views(unlabeled[order[i]], pair, flowpic, view_rng);
        views.push_back(std::move(a));
        views.push_back(std::move(b));
      }
      net.zero_grad();
      const auto proj = net.forward(stack_images<float>(views), true);
      auto loss = info_nce(proj, loss_opts);
      check_finite(loss.loss, epoch);
      net.backward(loss.grad);
      opt.step(net.parameters());
      loss_sum += loss.loss * static_cast<double>(views.size());
      agree_sum += loss.top_k_agreement * static_cast<double>(views.size());
      anchors += views.size();
    }
    const double agreement = agree_sum / static_cast<double>(anchors);
    meta.history["train_loss"].push_back(loss_sum / static_cast<double>(anchors));
    meta.history["top_k_agreement"].push_back(agreement);
    if (stopper.update(agreement)) {
      best = net.state();
      meta.epoch = epoch;
    }
    if (stopper.should_stop()) break;
  }
  net.load_state(best);
  return make_checkpoint(net, std::move(meta));
}

Checkpoint finetune(const Checkpoint& pretrained, const LabeledImages& labeled, int num_classes,
                    const TrainConfig& cfg) {
  cfg.validate();
  if (pretrained.config.mode != NetworkMode::SimclrPretrain) {
    throw std::invalid_argument("finetune needs a simclr_pretrain checkpoint");
  }
  if (labeled.size() == 0) throw std::invalid_argument("finetune needs labeled samples");
  NetworkConfig ft_cfg = pretrained.config;
  ft_cfg.mode = NetworkMode::Finetune;
  ft_cfg.num_classes = num_classes;
  auto net = build_network<float>(ft_cfg, cfg.seed);
  for (auto* p : net.parameters()) {
    if (!p->frozen) continue;
    const auto& src = pretrained.parameters.at(p->name);
    if (src.shape != p->shape) throw std::invalid_argument("backbone shape mismatch for '" + p->name + "'");
    p->value = Eigen::Map<const Vector<float>>(src.values.data(), p->value.size());
  }
  for (int y : labeled.labels) {
    if (y < 0 || y >= num_classes) throw std::invalid_argument("finetune label out of range");
  }

  // The frozen backbone runs in eval mode, so its features are fixed.
  const std::size_t head = net.backbone_end();
  std::vector<Eigen::RowVectorXf> features;
  for (std::size_t start = 0; start < labeled.size(); start += 64) {
    std::vector<std::size_t> order;
    for (std::size_t i = start; i < std::min(labeled.size(), start + 64); ++i) order.push_back(i);
    const auto f = net.forward_range(stack_images<float>(labeled.images, order), 0, head, false);
    for (Index r = 0; r < f.batch(); ++r) features.push_back(f.as_matrix().row(r));
  }
  const Index width = features.front().size();

  Optimizer<float> opt(cfg.optimizer_params());
  EarlyStopping stopper(cfg.patience, cfg.min_delta, false);
  Rng rng(derive_seed(cfg.seed, 0x5eed));
  auto order = iota_indices(labeled.size());
  CheckpointMetadata meta{cfg.seed, 0, {}};
  auto best = net.state();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Tensor<float> x({static_cast<Index>(end - start), width});
      std::vector<int> y;
      for (std::size_t i = start; i < end; ++i) {
        x.as_matrix().row(static_cast<Index>(i - start)) = features[order[i]];
        y.push_back(labeled.labels[order[i]]);
      }
      net.zero_grad();
      const auto logits = net.forward_range(x, head, net.size(), true);
      auto loss = cross_entropy(logits, y);
      check_finite(loss.loss, epoch);
      net.backward_range(loss.grad, head, net.size());
      opt.step(net.parameters());
      epoch_loss += loss.loss * static_cast<double>(end - start);
    }
    epoch_loss /= static_cast<double>(labeled.size());
    meta.history["train_loss"].push_back(epoch_loss);
    if (stopper.update(epoch_loss)) {
      best = net.state();
      meta.epoch = epoch;
    }
    if (stopper.should_stop()) break;
  }
  net.load_state(best);
  return make_checkpoint(net, std::move(meta));
}

}  // namespace fpl::nn
