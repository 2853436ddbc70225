#pragma once

// Central finite-difference checks for layers and losses, in double.

#include <functional>
#include <memory>

#include "fpl/nn/layers.hpp"
#include "fpl/nn/loss.hpp"

namespace gradcheck {

using fpl::nn::Index;
using fpl::nn::Layer;
using fpl::nn::Tensor;

inline constexpr double kStep = 1e-6;

/// ||a - n|| / max(||a|| + ||n||, 1e-12)
inline double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  return (analytic - numeric).norm() / std::max(analytic.norm() + numeric.norm(), 1e-12);
}

inline Tensor<double> random_tensor(fpl::Rng& rng, fpl::nn::Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (Index i = 0; i < t.data.size(); ++i) t.data[i] = rng.uniform(lo, hi);
  return t;
}

/// Worst relative error over the input gradient and every parameter gradient
/// of L = sum(w * layer(x)). `seed` fixes any randomness inside the layer.
inline double check_layer(Layer<double>& layer, Tensor<double> x, fpl::Rng& rng, bool training = true,
                          std::uint64_t seed = 17) {
  auto forward = [&](const Tensor<double>& in) {
    fpl::Rng local(seed);
    return layer.forward(in, training, local);
  };
  const auto y = forward(x);
  const auto w = random_tensor(rng, y.shape);
  auto loss = [&](const Tensor<double>& in) { return forward(in).data.dot(w.data); };

  for (auto* p : layer.parameters()) p->grad.setZero();
  forward(x);
  const auto gx = layer.backward(w);
  std::vector<Eigen::VectorXd> gp;
  for (auto* p : layer.parameters()) gp.push_back(p->grad);

  double worst = 0.0;
  Eigen::VectorXd num(x.data.size());
  for (Index i = 0; i < x.data.size(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + kStep;
    const double up = loss(x);
    x.data[i] = keep - kStep;
    const double down = loss(x);
    x.data[i] = keep;
    num[i] = (up - down) / (2 * kStep);
  }
  worst = std::max(worst, relative_error(gx.data, num));
  auto params = layer.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& v = params[k]->value;
    Eigen::VectorXd pn(v.size());
    for (Index i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + kStep;
      const double up = loss(x);
      v[i] = keep - kStep;
      const double down = loss(x);
      v[i] = keep;
      pn[i] = (up - down) / (2 * kStep);
    }
    worst = std::max(worst, relative_error(gp[k], pn));
  }
  return worst;
}

/// Relative error of a loss gradient with respect to its input.
inline double check_loss(const std::function<fpl::nn::LossResult<double>(const Tensor<double>&)>& f,
                         Tensor<double> x) {
  const auto analytic = f(x).grad.data;
  Eigen::VectorXd num(x.data.size());
  for (Index i = 0; i < x.data.size(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + kStep;
    const double up = f(x).loss;
    x.data[i] = keep - kStep;
    const double down = f(x).loss;
    x.data[i] = keep;
    num[i] = (up - down) / (2 * kStep);
  }
  return relative_error(analytic, num);
}

inline fpl::nn::LossResult<double> info_nce_as_loss(const Tensor<double>& z, double temperature) {
  auto r = fpl::nn::info_nce(z, {temperature, 5, 0.0});
  return {r.loss, std::move(r.grad)};
}

}  // namespace gradcheck
