#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fpl/augment.hpp"
#include "fpl/nn/checkpoint.hpp"
#include "fpl/nn/loss.hpp"
#include "fpl/nn/network.hpp"
#include "fpl/nn/optim.hpp"

namespace fpl::nn {

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch)
      : std::runtime_error(what + " at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  int patience = 5;
  double min_delta = 0.001;
  int max_epochs = 500;
  double temperature = 0.07;
  int top_k = 5;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  OptimizerParams optimizer_params() const;

  /// Supervised defaults: lr 0.001, batch 32, patience 5 on val loss, min delta 0.001.
  static TrainConfig supervised();
  /// SimCLR defaults: lr 0.001, batch 32, patience 3 on top-5 agreement, temperature 0.07.
  static TrainConfig simclr();
  /// Fine-tune defaults: lr 0.01, patience 5 on train loss, min delta 0.001.
  static TrainConfig finetune();
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep the values of `defaults`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults);

/// Tracks a monitored metric; signals a stop once `patience` consecutive
/// epochs fail to improve on the best value by more than `min_delta`.
class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_delta, bool maximize)
      : patience_(patience), min_delta_(min_delta), maximize_(maximize),
        best_(maximize ? -std::numeric_limits<double>::infinity()
                       : std::numeric_limits<double>::infinity()) {}

  /// Returns true when `value` is a new best.
  bool update(double value) {
    const bool improved = maximize_ ? value > best_ + min_delta_ : value < best_ - min_delta_;
    if (improved) {
      best_ = value;
      wait_ = 0;
    } else {
      ++wait_;
    }
    return improved;
  }
  bool should_stop() const noexcept { return wait_ >= patience_; }
  double best() const noexcept { return best_; }

 private:
  int patience_;
  double min_delta_;
  bool maximize_;
  double best_;
  int wait_ = 0;
};

struct LabeledImages {
  std::vector<ImageF> images;
  std::vector<int> labels;

  std::size_t size() const noexcept { return images.size(); }
};

/// Minimizes cross-entropy with early stopping on validation loss. The
/// network ends holding the best-validation parameters.
Checkpoint train_supervised(Network<float>& net, const LabeledImages& train, const LabeledImages& val,
                            const TrainConfig& cfg);

/// Contrastive pretraining: each mini-batch of B series yields 2B views,
/// optimized with InfoNCE; early stopping on epoch top-k agreement.
Checkpoint pretrain_simclr(Network<float>& net, const std::vector<PacketSeries>& unlabeled,
                           const std::pair<AugmentationSpec, AugmentationSpec>& pair,
                           const FlowpicOptions& flowpic, const TrainConfig& cfg);

/// Trains a fresh linear classifier on top of the frozen pretrained backbone,
/// early stopping on training loss.
Checkpoint finetune(const Checkpoint& pretrained, const LabeledImages& labeled, int num_classes,
                    const TrainConfig& cfg);

struct Evaluation {
  std::vector<int> predictions;
  Eigen::MatrixXf logits;
};

/// Eval-mode forward in batches; argmax ties go to the lowest class index.
Evaluation evaluate(Network<float>& net, const std::vector<ImageF>& images, std::size_t batch_size = 64);

/// Mean cross-entropy of `data` under `net` in eval mode.
double mean_loss(Network<float>& net, const LabeledImages& data, std::size_t batch_size = 64);

int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXf>& row);

}  // namespace fpl::nn
