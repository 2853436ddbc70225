#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "fpl/nn/tensor.hpp"
#include "fpl/rng.hpp"

namespace fpl::nn {

template <typename Scalar>
struct Parameter {
  std::string name;
  Shape shape;
  Vector<Scalar> value;
  Vector<Scalar> grad;
  bool frozen = false;

  Parameter(std::string n, Shape s)
      : name(std::move(n)),
        shape(std::move(s)),
        value(Vector<Scalar>::Zero(shape_size(shape))),
        grad(Vector<Scalar>::Zero(shape_size(shape))) {}
};

/// A differentiable stage. forward() caches what backward() needs; backward()
/// accumulates parameter gradients and returns the gradient w.r.t. the input.
template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training, Rng& rng) = 0;
  virtual Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) = 0;
  virtual Shape output_shape(const Shape& in) const { return in; }
  virtual std::vector<Parameter<Scalar>*> parameters() { return {}; }
};

/// 2D convolution, no padding, square kernel. Weight layout [out, in, k, k].
template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
 public:
  Conv2d(const std::string& name, Index in_ch, Index out_ch, Index kernel, Index stride = 1)
      : in_(in_ch), out_(out_ch), k_(kernel), stride_(stride),
        weight_(name + ".weight", {out_ch, in_ch, kernel, kernel}),
        bias_(name + ".bias", {out_ch}) {}

  std::string kind() const override { return "Conv2d"; }

  Shape output_shape(const Shape& in) const override {
    return {in[0], out_, (in[2] - k_) / stride_ + 1, (in[3] - k_) / stride_ + 1};
  }

  std::vector<Parameter<Scalar>*> parameters() override { return {&weight_, &bias_}; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool, Rng&) override {
    if (x.shape.size() != 4 || x.shape[1] != in_) {
      throw std::invalid_argument("Conv2d: unexpected input shape " + shape_string(x.shape));
    }
    in_shape_ = x.shape;
    const Shape os = output_shape(x.shape);
    const Index n = x.shape[0], oh = os[2], ow = os[3], hw = oh * ow;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("Conv2d: input smaller than kernel");
    im2col(x, oh, ow);
    const auto w = weight_matrix();
    RowMatrix<Scalar> y = w * cols_;  // out x (n * hw)
    y.colwise() += bias_.value;
    Tensor<Scalar> out(os);
    for (Index b = 0; b < n; ++b) {
      Eigen::Map<RowMatrix<Scalar>>(out.data.data() + b * out_ * hw, out_, hw) =
          y.middleCols(b * hw, hw);
    }
    return out;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    const Index n = g.shape[0], hw = g.shape[2] * g.shape[3];
    RowMatrix<Scalar> gy(out_, n * hw);
    for (Index b = 0; b < n; ++b) {
      gy.middleCols(b * hw, hw) =
          Eigen::Map<const RowMatrix<Scalar>>(g.data.data() + b * out_ * hw, out_, hw);
    }
    Eigen::Map<RowMatrix<Scalar>>(weight_.grad.data(), out_, in_ * k_ * k_).noalias() +=
        gy * cols_.transpose();
    bias_.grad += gy.rowwise().sum();
    RowMatrix<Scalar> gcols = weight_matrix().transpose() * gy;
    return col2im(gcols, g.shape[2], g.shape[3]);
  }

 private:
  Eigen::Map<const RowMatrix<Scalar>> weight_matrix() const {
    return {weight_.value.data(), out_, in_ * k_ * k_};
  }

  void im2col(const Tensor<Scalar>& x, Index oh, Index ow) {
    const Index n = x.shape[0], h = x.shape[2], w = x.shape[3], hw = oh * ow;
    cols_.resize(in_ * k_ * k_, n * hw);
    for (Index b = 0; b < n; ++b) {
      for (Index c = 0; c < in_; ++c) {
        const Scalar* src = x.data.data() + (b * in_ + c) * h * w;
        for (Index ki = 0; ki < k_; ++ki) {
          for (Index kj = 0; kj < k_; ++kj) {
            Scalar* dst = cols_.row((c * k_ + ki) * k_ + kj).data() + b * hw;
            for (Index i = 0; i < oh; ++i) {
              const Scalar* row = src + (i * stride_ + ki) * w + kj;
              for (Index j = 0; j < ow; ++j) dst[i * ow + j] = row[j * stride_];
            }
          }
        }
      }
    }
  }

  Tensor<Scalar> col2im(const RowMatrix<Scalar>& gcols, Index oh, Index ow) const {
    Tensor<Scalar> gx(in_shape_);
    const Index n = in_shape_[0], h = in_shape_[2], w = in_shape_[3], hw = oh * ow;
    for (Index b = 0; b < n; ++b) {
      for (Index c = 0; c < in_; ++c) {
        Scalar* dst = gx.data.data() + (b * in_ + c) * h * w;
        for (Index ki = 0; ki < k_; ++ki) {
          for (Index kj = 0; kj < k_; ++kj) {
            const Scalar* src = gcols.row((c * k_ + ki) * k_ + kj).data() + b * hw;
            for (Index i = 0; i < oh; ++i) {
              Scalar* row = dst + (i * stride_ + ki) * w + kj;
              for (Index j = 0; j < ow; ++j) row[j * stride_] += src[i * ow + j];
            }
          }
        }
      }
    }
    return gx;
  }

  Index in_, out_, k_, stride_;
  Parameter<Scalar> weight_, bias_;
  Shape in_shape_;
  RowMatrix<Scalar> cols_;
};

/// Fully connected layer, weight layout [out, in].
template <typename Scalar>
class Linear final : public Layer<Scalar> {
 public:
  Linear(const std::string& name, Index in_features, Index out_features)
      : in_(in_features), out_(out_features),
        weight_(name + ".weight", {out_features, in_features}),
        bias_(name + ".bias", {out_features}) {}

  std::string kind() const override { return "Linear"; }
  Shape output_shape(const Shape& in) const override { return {in[0], out_}; }
  std::vector<Parameter<Scalar>*> parameters() override { return {&weight_, &bias_}; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool, Rng&) override {
    if (x.stride() != in_) {
      throw std::invalid_argument("Linear: expected " + std::to_string(in_) + " features, got " +
                                  shape_string(x.shape));
    }
    input_ = x.as_matrix();
    Tensor<Scalar> out({x.batch(), out_});
    auto y = out.as_matrix();
    y.noalias() = input_ * weight_matrix().transpose();
    y.rowwise() += bias_.value.transpose();
    return out;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    const auto gy = g.as_matrix();
    Eigen::Map<RowMatrix<Scalar>>(weight_.grad.data(), out_, in_).noalias() +=
        gy.transpose() * input_;
    bias_.grad += gy.colwise().sum().transpose();
    Tensor<Scalar> gx({g.batch(), in_});
    gx.as_matrix().noalias() = gy * weight_matrix();
    return gx;
  }

 private:
  Eigen::Map<const RowMatrix<Scalar>> weight_matrix() const {
    return {weight_.value.data(), out_, in_};
  }

  Index in_, out_;
  Parameter<Scalar> weight_, bias_;
  RowMatrix<Scalar> input_;
};

template <typename Scalar>
class Relu final : public Layer<Scalar> {
 public:
  std::string kind() const override { return "ReLU"; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool, Rng&) override {
    mask_ = (x.data.array() > Scalar(0)).template cast<Scalar>();
    return Tensor<Scalar>(x.shape, x.data.cwiseMax(Scalar(0)));
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    return Tensor<Scalar>(g.shape, g.data.cwiseProduct(mask_));
  }

 private:
  Vector<Scalar> mask_;
};

/// 2x2 max pooling with stride 2 (floor mode). Ties resolve to the first
/// element in row-major window order.
template <typename Scalar>
class MaxPool2d final : public Layer<Scalar> {
 public:
  std::string kind() const override { return "MaxPool2d"; }

  Shape output_shape(const Shape& in) const override { return {in[0], in[1], in[2] / 2, in[3] / 2}; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool, Rng&) override {
    in_shape_ = x.shape;
    const Shape os = output_shape(x.shape);
    const Index planes = x.shape[0] * x.shape[1], h = x.shape[2], w = x.shape[3];
    const Index oh = os[2], ow = os[3];
    Tensor<Scalar> out(os);
    argmax_.resize(out.data.size());
    for (Index p = 0; p < planes; ++p) {
      const Scalar* src = x.data.data() + p * h * w;
      for (Index i = 0; i < oh; ++i) {
        for (Index j = 0; j < ow; ++j) {
          Index best = (2 * i) * w + 2 * j;
          for (Index di = 0; di < 2; ++di) {
            for (Index dj = 0; dj < 2; ++dj) {
              const Index at = (2 * i + di) * w + 2 * j + dj;
              if (src[at] > src[best]) best = at;
            }
          }
          const Index o = (p * oh + i) * ow + j;
          out.data[o] = src[best];
          argmax_[static_cast<std::size_t>(o)] = p * h * w + best;
        }
      }
    }
    return out;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> gx(in_shape_);
    for (Index o = 0; o < g.data.size(); ++o) gx.data[argmax_[static_cast<std::size_t>(o)]] += g.data[o];
    return gx;
  }

 private:
  Shape in_shape_;
  std::vector<Index> argmax_;
};

template <typename Scalar>
class Flatten final : public Layer<Scalar> {
 public:
  std::string kind() const override { return "Flatten"; }
  Shape output_shape(const Shape& in) const override {
    Index f = 1;
    for (std::size_t i = 1; i < in.size(); ++i) f *= in[i];
    return {in[0], f};
  }
  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool, Rng&) override {
    in_shape_ = x.shape;
    return Tensor<Scalar>(output_shape(x.shape), x.data);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override { return Tensor<Scalar>(in_shape_, g.data); }

 private:
  Shape in_shape_;
};

/// Inverted dropout. With `channelwise` whole feature maps are dropped
/// (Dropout2d); otherwise individual elements. Identity outside training.
template <typename Scalar>
class Dropout final : public Layer<Scalar> {
 public:
  Dropout(double p, bool channelwise) : p_(p), channelwise_(channelwise) {}

  std::string kind() const override { return channelwise_ ? "Dropout2d" : "Dropout1d"; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training, Rng& rng) override {
    active_ = training && p_ > 0.0;
    if (!active_) return x;
    const Index group = channelwise_ && x.shape.size() == 4 ? x.shape[2] * x.shape[3] : 1;
    const auto keep_scale = static_cast<Scalar>(1.0 / (1.0 - p_));
    mask_.resize(x.data.size());
    for (Index start = 0; start < x.data.size(); start += group) {
      const Scalar m = rng.bernoulli(p_) ? Scalar(0) : keep_scale;
      mask_.segment(start, group).setConstant(m);
    }
    return Tensor<Scalar>(x.shape, x.data.cwiseProduct(mask_));
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    if (!active_) return g;
    return Tensor<Scalar>(g.shape, g.data.cwiseProduct(mask_));
  }

 private:
  double p_;
  bool channelwise_;
  bool active_ = false;
  Vector<Scalar> mask_;
};

/// Placeholder for a masked-out stage.
template <typename Scalar>
class Identity final : public Layer<Scalar> {
 public:
  std::string kind() const override { return "Identity"; }
  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool, Rng&) override { return x; }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override { return g; }
};

}  // namespace fpl::nn
