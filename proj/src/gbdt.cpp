#include "fpl/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fpl::gbdt {

std::size_t FeatureSpec::length() const {
  if (source == FeatureSource::FlattenedFlowpic) {
    return static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution);
  }
  return 3 * static_cast<std::size_t>(packets);
}

std::string to_string(const FeatureSpec& spec) {
  if (spec.source == FeatureSource::FlattenedFlowpic) return "flowpic:" + std::to_string(spec.resolution);
  return "timeseries:" + std::to_string(spec.packets);
}

FeatureSpec feature_spec_from_string(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  FeatureSpec spec;
  if (kind == "flowpic") {
    spec.source = FeatureSource::FlattenedFlowpic;
    if (colon != std::string::npos) spec.resolution = std::stoi(text.substr(colon + 1));
  } else if (kind == "timeseries") {
    spec.source = FeatureSource::EarlyTimeseries;
    if (colon != std::string::npos) spec.packets = std::stoi(text.substr(colon + 1));
  } else {
    throw std::invalid_argument("unknown feature source '" + text + "'");
  }
  if (spec.resolution < 2 || spec.packets < 1) throw std::invalid_argument("bad feature source '" + text + "'");
  return spec;
}

FeatureVector extract_features(const FlowRecord& flow, const FeatureSpec& spec) {
  FeatureVector fv{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.length())), spec};
  const auto& s = flow.series;
  if (spec.source == FeatureSource::FlattenedFlowpic) {
    const auto fp = build_flowpic(s, spec.resolution, spec.window);
    for (int r = 0; r < spec.resolution; ++r) {
      for (int c = 0; c < spec.resolution; ++c) fv.values[r * spec.resolution + c] = fp.counts(r, c);
    }
    return fv;
  }
  const auto k = static_cast<std::size_t>(spec.packets);
  const auto n = std::min(k, s.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto at = static_cast<Eigen::Index>(i);
    fv.values[at] = s.sizes[i];
    fv.values[static_cast<Eigen::Index>(k) + at] = s.directions ? (*s.directions)[i] : 0;
    fv.values[static_cast<Eigen::Index>(2 * k) + at] = i == 0 ? 0.0 : s.timestamps[i] - s.timestamps[i - 1];
  }
  return fv;
}

Eigen::MatrixXd feature_matrix(const Dataset& dataset, const FeatureSpec& spec) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(dataset.size()), static_cast<Eigen::Index>(spec.length()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = extract_features(dataset.at(i), spec).values.transpose();
  }
  return m;
}

void BoostParams::validate() const {
  if (n_rounds < 0) throw std::invalid_argument("n_rounds must be >= 0");
  if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (lambda < 0.0 || min_child_weight < 0.0 || gamma < 0.0) {
    throw std::invalid_argument("lambda, min_child_weight and gamma must be >= 0");
  }
}

int Tree::leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  int at = 0;
  while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
    const auto& n = nodes[static_cast<std::size_t>(at)];
    at = x[n.feature] < n.threshold ? n.left : n.right;
  }
  return at;
}

double Tree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  return nodes[static_cast<std::size_t>(leaf_index(x))].weight;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.feature < 0) continue;
    d[static_cast<std::size_t>(n.left)] = d[i] + 1;
    d[static_cast<std::size_t>(n.right)] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

namespace {

/// Features mapped to the rank of their value among the feature's distinct
/// values; every boundary between distinct values is a split candidate.
struct BinnedFeatures {
  std::vector<std::vector<double>> distinct;
  std::vector<std::int32_t> bins;  // feature-major, n per feature
  std::vector<int> splittable;
  Eigen::Index n = 0;

  explicit BinnedFeatures(const Eigen::MatrixXd& x) : n(x.rows()) {
    const auto f = x.cols();
    distinct.resize(static_cast<std::size_t>(f));
    bins.resize(static_cast<std::size_t>(f * n));
    for (Eigen::Index j = 0; j < f; ++j) {
      auto& u = distinct[static_cast<std::size_t>(j)];
      u.assign(x.col(j).data(), x.col(j).data() + n);
      std::sort(u.begin(), u.end());
      u.erase(std::unique(u.begin(), u.end()), u.end());
      for (Eigen::Index i = 0; i < n; ++i) {
        bins[static_cast<std::size_t>(j * n + i)] =
            static_cast<std::int32_t>(std::lower_bound(u.begin(), u.end(), x(i, j)) - u.begin());
      }
      if (u.size() > 1) splittable.push_back(static_cast<int>(j));
    }
  }

  std::int32_t bin(int feature, Eigen::Index i) const { return bins[static_cast<std::size_t>(feature * n + i)]; }
};

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  std::int32_t bin = -1;  // last bin going left
};

double leaf_weight(double g, double h, double lambda) { return -g / (h + lambda); }
double score(double g, double h, double lambda) { return g * g / (h + lambda); }

/// Grows one tree level by level. `leaf_of` receives each sample's leaf.
Tree grow_tree(const BinnedFeatures& data, const Eigen::VectorXd& grad, const Eigen::VectorXd& hess,
               const BoostParams& params, std::vector<int>& leaf_of) {
  const Eigen::Index n = data.n;
  Tree tree;
  struct Stats {
    double g = 0.0, h = 0.0;
  };
  std::vector<Stats> stats(1);
  stats[0] = {grad.sum(), hess.sum()};
  tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, leaf_weight(stats[0].g, stats[0].h, params.lambda)});
  leaf_of.assign(static_cast<std::size_t>(n), 0);

  std::vector<int> frontier{0};
  std::vector<double> hist_g, hist_h;
  for (int depth = 0; depth < params.max_depth && !frontier.empty(); ++depth) {
    std::vector<int> slot(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < frontier.size(); ++s) {
      const auto& st = stats[static_cast<std::size_t>(frontier[s])];
      if (st.h >= 2.0 * params.min_child_weight) slot[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);
    }
    std::vector<SplitCandidate> best(frontier.size());
    for (int f : data.splittable) {
      const auto width = data.distinct[static_cast<std::size_t>(f)].size();
      hist_g.assign(frontier.size() * width, 0.0);
      hist_h.assign(frontier.size() * width, 0.0);
      for (Eigen::Index i = 0; i < n; ++i) {
        const int s = slot[static_cast<std::size_t>(leaf_of[static_cast<std::size_t>(i)])];
        if (s < 0) continue;
        const auto at = static_cast<std::size_t>(s) * width + static_cast<std::size_t>(data.bin(f, i));
        hist_g[at] += grad[i];
        hist_h[at] += hess[i];
      }
      for (std::size_t s = 0; s < frontier.size(); ++s) {
        const auto& st = stats[static_cast<std::size_t>(frontier[s])];
        if (slot[static_cast<std::size_t>(frontier[s])] < 0) continue;
        const double parent = score(st.g, st.h, params.lambda);
        double gl = 0.0, hl = 0.0;
        for (std::size_t b = 0; b + 1 < width; ++b) {
          gl += hist_g[s * width + b];
          hl += hist_h[s * width + b];
          const double gr = st.g - gl, hr = st.h - hl;
          if (hl < params.min_child_weight || hr < params.min_child_weight) continue;
          const double gain =
              0.5 * (score(gl, hl, params.lambda) + score(gr, hr, params.lambda) - parent) - params.gamma;
          if (gain > best[s].gain) best[s] = {gain, f, static_cast<std::int32_t>(b)};
        }
      }
    }

    std::vector<int> next;
    std::vector<int> split_left(tree.nodes.size(), -1);
    std::vector<std::int32_t> split_bin(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < frontier.size(); ++s) {
      const auto& cand = best[s];
      if (cand.feature < 0 || cand.gain <= 1e-12) continue;
      const int node = frontier[s];
      const auto& u = data.distinct[static_cast<std::size_t>(cand.feature)];
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      stats.resize(tree.nodes.size());
      auto& parent = tree.nodes[static_cast<std::size_t>(node)];
      parent.feature = cand.feature;
      parent.threshold = 0.5 * (u[static_cast<std::size_t>(cand.bin)] + u[static_cast<std::size_t>(cand.bin) + 1]);
      parent.left = left;
      parent.right = left + 1;
      parent.weight = 0.0;
      split_left[static_cast<std::size_t>(node)] = left;
      split_bin[static_cast<std::size_t>(node)] = cand.bin;
      next.push_back(left);
      next.push_back(left + 1);
    }
    if (next.empty()) break;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& leaf = leaf_of[static_cast<std::size_t>(i)];
      const int left = split_left[static_cast<std::size_t>(leaf)];
      if (left < 0) continue;
      const auto& parent = tree.nodes[static_cast<std::size_t>(leaf)];
      const bool go_left = data.bin(parent.feature, i) <= split_bin[static_cast<std::size_t>(leaf)];
      leaf = go_left ? left : left + 1;
      auto& st = stats[static_cast<std::size_t>(leaf)];
      st.g += grad[i];
      st.h += hess[i];
    }
    for (int node : next) {
      const auto& st = stats[static_cast<std::size_t>(node)];
      tree.nodes[static_cast<std::size_t>(node)] = TreeNode{-1, 0.0, -1, -1, leaf_weight(st.g, st.h, params.lambda)};
    }
    frontier = std::move(next);
  }
  return tree;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& margins) {
  Eigen::MatrixXd p = margins;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    p.row(r).array() -= p.row(r).maxCoeff();
    p.row(r) = p.row(r).array().exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

double mean_log_loss(const Eigen::MatrixXd& margins, const std::vector<int>& labels) {
  const Eigen::MatrixXd p = softmax_rows(margins);
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    total -= std::log(std::max(p(i, labels[static_cast<std::size_t>(i)]), 1e-300));
  }
  return total / static_cast<double>(p.rows());
}

}  // namespace

BoostModel fit(const Eigen::MatrixXd& features, const std::vector<int>& labels, const BoostParams& params) {
  params.validate();
  const Eigen::Index n = features.rows();
  if (n == 0 || static_cast<Eigen::Index>(labels.size()) != n) {
    throw std::invalid_argument("features and labels must be nonempty and of equal length");
  }
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  if (*std::min_element(labels.begin(), labels.end()) < 0) throw std::invalid_argument("negative label");
  std::vector<int> present(static_cast<std::size_t>(classes), 0);
  for (int y : labels) present[static_cast<std::size_t>(y)] = 1;
  if (std::count(present.begin(), present.end(), 1) < 2) {
    throw std::invalid_argument("boosting needs at least 2 distinct classes");
  }

  BoostModel model;
  model.num_classes = classes;
  model.num_features = static_cast<int>(features.cols());
  model.params = params;
  const BinnedFeatures data(features);
  Eigen::MatrixXd margins = Eigen::MatrixXd::Zero(n, classes);
  double loss = mean_log_loss(margins, labels);
  model.train_loss.push_back(loss);
  std::vector<int> leaf_of;
  for (int round = 0; round < params.n_rounds; ++round) {
    const Eigen::MatrixXd p = softmax_rows(margins);
    std::vector<Tree> trees;
    Eigen::MatrixXd delta(n, classes);
    for (int k = 0; k < classes; ++k) {
      Eigen::VectorXd g(n), h(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double pk = p(i, k);
        g[i] = pk - (labels[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0);
        h[i] = std::max(pk * (1.0 - pk), 1e-16);
      }
      trees.push_back(grow_tree(data, g, h, params, leaf_of));
      for (Eigen::Index i = 0; i < n; ++i) {
        delta(i, k) = trees.back().nodes[static_cast<std::size_t>(leaf_of[static_cast<std::size_t>(i)])].weight;
      }
    }
    // Diagonal curvature can overshoot the joint softmax; halve the step
    // until the training loss does not increase.
    double step = params.learning_rate;
    double next_loss = mean_log_loss(margins + step * delta, labels);
    for (int tries = 0; next_loss > loss && tries < 30; ++tries) {
      step *= 0.5;
      next_loss = mean_log_loss(margins + step * delta, labels);
    }
    if (next_loss > loss) {
      step = 0.0;
      next_loss = loss;
    }
    for (auto& t : trees) {
      for (auto& node : t.nodes) node.weight *= step;
    }
    margins += step * delta;
    loss = next_loss;
    model.train_loss.push_back(loss);
    model.rounds.push_back(std::move(trees));
  }
  return model;
}

Prediction predict(const BoostModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& features) {
  if (features.size() != model.num_features) {
    throw std::invalid_argument("feature length " + std::to_string(features.size()) + " does not match model (" +
                                std::to_string(model.num_features) + ")");
  }
  Eigen::VectorXd margin = Eigen::VectorXd::Zero(model.num_classes);
  for (const auto& round : model.rounds) {
    for (int k = 0; k < model.num_classes; ++k) margin[k] += round[static_cast<std::size_t>(k)].predict(features);
  }
  Prediction out;
  out.probabilities = (margin.array() - margin.maxCoeff()).exp().matrix();
  out.probabilities /= out.probabilities.sum();
  out.label = 0;
  for (int k = 1; k < model.num_classes; ++k) {
    if (out.probabilities[k] > out.probabilities[out.label]) out.label = k;
  }
  return out;
}

std::vector<int> predict_labels(const BoostModel& model, const Eigen::MatrixXd& features) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) out.push_back(predict(model, features.row(i)).label);
  return out;
}

double log_loss(const BoostModel& model, const Eigen::MatrixXd& features, const std::vector<int>& labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const auto p = predict(model, features.row(i));
    total -= std::log(std::max(p.probabilities[labels[static_cast<std::size_t>(i)]], 1e-300));
  }
  return total / static_cast<double>(features.rows());
}

nlohmann::json to_json(const BoostModel& model) {
  nlohmann::json j;
  j["num_classes"] = model.num_classes;
  j["num_features"] = model.num_features;
  j["params"] = {{"n_rounds", model.params.n_rounds},
                 {"max_depth", model.params.max_depth},
                 {"learning_rate", model.params.learning_rate},
                 {"lambda", model.params.lambda},
                 {"min_child_weight", model.params.min_child_weight},
                 {"gamma", model.params.gamma}};
  j["train_loss"] = model.train_loss;
  j["rounds"] = nlohmann::json::array();
  for (const auto& round : model.rounds) {
    auto jr = nlohmann::json::array();
    for (const auto& tree : round) {
      auto jt = nlohmann::json::array();
      for (const auto& n : tree.nodes) {
        if (n.feature < 0) {
          jt.push_back({{"leaf", n.weight}});
        } else {
          jt.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
        }
      }
      jr.push_back(std::move(jt));
    }
    j["rounds"].push_back(std::move(jr));
  }
  return j;
}

BoostModel model_from_json(const nlohmann::json& j) {
  BoostModel m;
  m.num_classes = j.at("num_classes").get<int>();
  m.num_features = j.at("num_features").get<int>();
  const auto& p = j.at("params");
  m.params = {p.at("n_rounds").get<int>(), p.at("max_depth").get<int>(), p.at("learning_rate").get<double>(),
              p.at("lambda").get<double>(), p.at("min_child_weight").get<double>(), p.at("gamma").get<double>()};
  m.train_loss = j.value("train_loss", std::vector<double>{});
  for (const auto& jr : j.at("rounds")) {
    std::vector<Tree> round;
    for (const auto& jt : jr) {
      Tree t;
      for (const auto& jn : jt) {
        if (jn.contains("leaf")) {
          t.nodes.push_back(TreeNode{-1, 0.0, -1, -1, jn["leaf"].get<double>()});
        } else {
          t.nodes.push_back(TreeNode{jn.at("feature").get<int>(), jn.at("threshold").get<double>(),
                                     jn.at("left").get<int>(), jn.at("right").get<int>(), 0.0});
        }
      }
      round.push_back(std::move(t));
    }
    if (static_cast<int>(round.size()) != m.num_classes) throw std::runtime_error("round has wrong tree count");
    m.rounds.push_back(std::move(round));
  }
  return m;
}

void save_model(const BoostModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << to_json(model).dump(1) << '\n';
}

BoostModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model '" + path.string() + "'");
  return model_from_json(nlohmann::json::parse(in));
}

}  // namespace fpl::gbdt
