#pragma once

#include <cassert>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fpl::nn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major tensor. Batches are laid out NCHW (images) or N x F.
template <typename Scalar>
struct Tensor {
  Shape shape;
  Vector<Scalar> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(Vector<Scalar>::Zero(shape_size(shape))) {}
  Tensor(Shape s, Vector<Scalar> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_size(shape)) {
      throw std::invalid_argument("tensor data does not match shape " + shape_string(shape));
    }
  }

  Index batch() const { return shape.empty() ? 0 : shape.front(); }
  /// Elements per batch item.
  Index stride() const { return shape.empty() ? 0 : data.size() / shape.front(); }

  /// View as (batch x stride) row-major matrix.
  Eigen::Map<RowMatrix<Scalar>> as_matrix() { return {data.data(), batch(), stride()}; }
  Eigen::Map<const RowMatrix<Scalar>> as_matrix() const { return {data.data(), batch(), stride()}; }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape, data.template cast<Other>());
  }
};

/// Stacks single-channel images into an N x 1 x H x W batch.
template <typename Scalar, typename ImageT>
Tensor<Scalar> stack_images(const std::vector<ImageT>& images, const std::vector<std::size_t>& order) {
  if (order.empty()) throw std::invalid_argument("empty batch");
  const Index h = images[order.front()].rows();
  const Index w = images[order.front()].cols();
  Tensor<Scalar> t({static_cast<Index>(order.size()), 1, h, w});
  for (std::size_t b = 0; b < order.size(); ++b) {
    const auto& img = images[order[b]];
    if (img.rows() != h || img.cols() != w) throw std::invalid_argument("image size mismatch in batch");
    Eigen::Map<RowMatrix<Scalar>>(t.data.data() + static_cast<Index>(b) * h * w, h, w) =
        img.template cast<Scalar>();
  }
  return t;
}

template <typename Scalar, typename ImageT>
Tensor<Scalar> stack_images(const std::vector<ImageT>& images) {
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return stack_images<Scalar>(images, order);
}

}  // namespace fpl::nn
