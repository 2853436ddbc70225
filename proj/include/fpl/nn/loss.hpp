#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fpl/nn/tensor.hpp"

namespace fpl::nn {

template <typename Scalar>
struct LossResult {
  double loss = 0.0;
  Tensor<Scalar> grad;  // d loss / d input, same shape as the input
};

/// Row-wise softmax computed in double.
template <typename Scalar>
Eigen::MatrixXd softmax(const Tensor<Scalar>& logits) {
  Eigen::MatrixXd z = logits.as_matrix().template cast<double>();
  for (Index r = 0; r < z.rows(); ++r) {
    z.row(r).array() -= z.row(r).maxCoeff();
    z.row(r) = z.row(r).array().exp().matrix();
    z.row(r) /= z.row(r).sum();
  }
  return z;
}

/// Mean softmax cross-entropy over the batch.
template <typename Scalar>
LossResult<Scalar> cross_entropy(const Tensor<Scalar>& logits, const std::vector<int>& labels) {
  const Index n = logits.batch(), c = logits.stride();
  if (static_cast<Index>(labels.size()) != n) throw std::invalid_argument("cross_entropy: label count mismatch");
  const Eigen::MatrixXd p = softmax(logits);
  LossResult<Scalar> out{0.0, Tensor<Scalar>(logits.shape)};
  auto g = out.grad.as_matrix();
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) throw std::invalid_argument("cross_entropy: label out of range");
    out.loss -= std::log(std::max(p(i, y), 1e-300));
    for (Index j = 0; j < c; ++j) {
      g(i, j) = static_cast<Scalar>((p(i, j) - (j == y ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  out.loss /= static_cast<double>(n);
  return out;
}

template <typename Scalar>
struct InfoNceResult {
  double loss = 0.0;
  Tensor<Scalar> grad;
  std::vector<double> per_anchor;
  /// Fraction of anchors whose positive is among the top_k most similar of
  /// the other 2N - 1 views.
  double top_k_agreement = 0.0;
};

struct InfoNceOptions {
  double temperature = 0.07;
  int top_k = 5;
  /// Norms are clamped from below to this value. Zero means a zero-norm
  /// projection is an error.
  double min_norm = 0.0;
};

/// Normalized-temperature cross-entropy over 2N projections where rows 2i and
/// 2i+1 are the two views of sample i. Loss is the mean over all anchors.
template <typename Scalar>
InfoNceResult<Scalar> info_nce(const Tensor<Scalar>& projections, const InfoNceOptions& opts) {
  const Index m = projections.batch();
  if (m < 4 || m % 2 != 0) throw std::invalid_argument("info_nce: need an even number >= 4 of views");
  if (!(opts.temperature > 0.0)) throw std::invalid_argument("info_nce: temperature must be positive");
  const Eigen::MatrixXd z = projections.as_matrix().template cast<double>();
  Eigen::VectorXd norms = z.rowwise().norm();
  for (Index i = 0; i < m; ++i) {
    if (norms[i] <= opts.min_norm) {
      if (opts.min_norm == 0.0) throw std::domain_error("info_nce: zero-norm projection");
      norms[i] = opts.min_norm;
    }
  }
  const Eigen::MatrixXd u = norms.cwiseInverse().asDiagonal() * z;
  const Eigen::MatrixXd sim = u * u.transpose();
  const double inv_t = 1.0 / opts.temperature;

  InfoNceResult<Scalar> out;
  out.per_anchor.resize(static_cast<std::size_t>(m));
  Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(m, m);  // d loss / d (sim / t)
  Index hits = 0;
  for (Index i = 0; i < m; ++i) {
    const Index pos = i ^ 1;
    double peak = -std::numeric_limits<double>::infinity();
    for (Index k = 0; k < m; ++k) {
      if (k != i) peak = std::max(peak, sim(i, k) * inv_t);
    }
    double denom = 0.0;
    for (Index k = 0; k < m; ++k) {
      if (k != i) denom += std::exp(sim(i, k) * inv_t - peak);
    }
    const double li = -(sim(i, pos) * inv_t - peak) + std::log(denom);
    out.per_anchor[static_cast<std::size_t>(i)] = li;
    out.loss += li;
    for (Index k = 0; k < m; ++k) {
      if (k == i) continue;
      const double pk = std::exp(sim(i, k) * inv_t - peak) / denom;
      dlogits(i, k) = (pk - (k == pos ? 1.0 : 0.0)) / static_cast<double>(m);
    }
    Index better = 0;
    for (Index k = 0; k < m; ++k) {
      if (k != i && k != pos && sim(i, k) > sim(i, pos)) ++better;
    }
    if (better < opts.top_k) ++hits;
  }
  out.loss /= static_cast<double>(m);
  out.top_k_agreement = static_cast<double>(hits) / static_cast<double>(m);

  // sim = u u^T, so d/du = (G + G^T) u / t
  const Eigen::MatrixXd du = (dlogits + dlogits.transpose()) * u * inv_t;
  Eigen::MatrixXd dz(m, z.cols());
  for (Index i = 0; i < m; ++i) {
    const double proj = u.row(i).dot(du.row(i));
    const bool clamped = z.row(i).norm() <= opts.min_norm;
    dz.row(i) = clamped ? Eigen::RowVectorXd(du.row(i) / norms[i])
                        : Eigen::RowVectorXd((du.row(i) - proj * u.row(i)) / norms[i]);
  }
  out.grad = Tensor<Scalar>(projections.shape, Vector<Scalar>(m * z.cols()));
  out.grad.as_matrix() = dz.cast<Scalar>();
  return out;
}

}  // namespace fpl::nn
