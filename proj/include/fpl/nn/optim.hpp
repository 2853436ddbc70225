#pragma once

#include <map>
#include <string>
#include <vector>

#include "fpl/nn/layers.hpp"

namespace fpl::nn {

enum class OptimizerKind { Adam, Sgd };

struct OptimizerParams {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.0;  // SGD only
};

/// Updates every non-frozen parameter from its accumulated gradient.
template <typename Scalar>
class Optimizer {
 public:
  explicit Optimizer(OptimizerParams params) : params_(params) {}

  void step(const std::vector<Parameter<Scalar>*>& parameters) {
    ++t_;
    for (auto* p : parameters) {
      if (p->frozen) continue;
      auto& s = state_[p->name];
      if (s.m.size() != p->value.size()) {
        s.m = Vector<double>::Zero(p->value.size());
        s.v = Vector<double>::Zero(p->value.size());
      }
      const Vector<double> g = p->grad.template cast<double>();
      if (params_.kind == OptimizerKind::Adam) {
        s.m = params_.beta1 * s.m + (1.0 - params_.beta1) * g;
        s.v = params_.beta2 * s.v + (1.0 - params_.beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
        const Vector<double> update =
            (s.m / c1).array() / ((s.v / c2).array().sqrt() + params_.epsilon);
        p->value -= (params_.learning_rate * update).template cast<Scalar>();
      } else {
        s.m = params_.momentum * s.m + g;
        p->value -= (params_.learning_rate * s.m).template cast<Scalar>();
      }
    }
  }

 private:
  struct State {
    Vector<double> m, v;
  };
  OptimizerParams params_;
  long t_ = 0;
  std::map<std::string, State> state_;
};

}  // namespace fpl::nn
