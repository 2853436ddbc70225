#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fpl/dataio.hpp"
#include "fpl/flowpic.hpp"

namespace fpl::gbdt {

enum class FeatureSource { FlattenedFlowpic, EarlyTimeseries };

struct FeatureSpec {
  FeatureSource source = FeatureSource::FlattenedFlowpic;
  int resolution = 32;          // flattened flowpic
  double window = kDefaultWindow;
  int packets = 10;             // early time series

  std::size_t length() const;
};

std::string to_string(const FeatureSpec& spec);
/// "flowpic", "flowpic:64", "timeseries", "timeseries:20".
FeatureSpec feature_spec_from_string(const std::string& text);

struct FeatureVector {
  Eigen::VectorXd values;
  FeatureSpec source;
};

/// Flattened flowpic (row-major, resolution^2 values) or the first `packets`
/// sizes, directions and inter-arrival times concatenated, zero-padded.
FeatureVector extract_features(const FlowRecord& flow, const FeatureSpec& spec);
/// One row per record.
Eigen::MatrixXd feature_matrix(const Dataset& dataset, const FeatureSpec& spec);

struct BoostParams {
  int n_rounds = 100;
  int max_depth = 6;
  double learning_rate = 0.3;
  double lambda = 1.0;
  double min_child_weight = 1.0;
  double gamma = 0.0;

  void validate() const;
};

/// Node of a regression tree; leaves have feature == -1. Samples with
/// x[feature] < threshold go left.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double weight = 0.0;

  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  int leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  int depth() const;
  bool operator==(const Tree&) const = default;
};

struct BoostModel {
  int num_classes = 0;
  int num_features = 0;
  BoostParams params;
  /// rounds[r][k]: tree for class k in round r; leaf weights include the step size.
  std::vector<std::vector<Tree>> rounds;
  /// Training log-loss before any round and after each round.
  std::vector<double> train_loss;

  bool operator==(const BoostModel& o) const {
    return num_classes == o.num_classes && num_features == o.num_features && rounds == o.rounds;
  }
};

/// Second-order multiclass softmax boosting with exact greedy splits.
BoostModel fit(const Eigen::MatrixXd& features, const std::vector<int>& labels, const BoostParams& params);

struct Prediction {
  int label = 0;
  Eigen::VectorXd probabilities;
};

Prediction predict(const BoostModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& features);
std::vector<int> predict_labels(const BoostModel& model, const Eigen::MatrixXd& features);
/// Multiclass log-loss of the model on (features, labels).
double log_loss(const BoostModel& model, const Eigen::MatrixXd& features, const std::vector<int>& labels);

nlohmann::json to_json(const BoostModel& model);
BoostModel model_from_json(const nlohmann::json& j);
void save_model(const BoostModel& model, const std::filesystem::path& path);
BoostModel load_model(const std::filesystem::path& path);

}  // namespace fpl::gbdt
