#pragma once

#include <cmath>
#include <vector>

#include "dskin/errors.hpp"
#include "dskin/neural/param.hpp"
#include "dskin/rng.hpp"

namespace dskin::neural {

enum class Activation { Linear, Tanh };

// Glorot-uniform draw; doubles are drawn first so f32 and f64 nets share streams.
template <class Scalar>
void glorot_fill(MatT<Scalar>& w, int fan_in, int fan_out, CounterRng& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = static_cast<Scalar>(rng.uniform(-a, a));
}

// Fully connected layer on row-major sample matrices: Y = act(X W^T + b).
template <class Scalar>
class Dense {
 public:
  Dense() = default;
  Dense(int in_dim, int out_dim, Activation act, CounterRng& rng, std::string name = "dense")
      : act_(act), name_(std::move(name)) {
    w_.resize(out_dim, in_dim);
    glorot_fill(w_, in_dim, out_dim, rng);
    b_ = VecT<Scalar>::Zero(out_dim);
    w_grad_ = MatT<Scalar>::Zero(out_dim, in_dim);
    b_grad_ = VecT<Scalar>::Zero(out_dim);
  }

  int in_dim() const { return static_cast<int>(w_.cols()); }
  int out_dim() const { return static_cast<int>(w_.rows()); }

  MatT<Scalar> forward(const MatT<Scalar>& x) {
    if (x.cols() != w_.cols()) throw DimensionError(name_ + ": input feature mismatch");
    x_ = x;
    MatT<Scalar> y = x * w_.transpose();
    y.rowwise() += b_.transpose();
    if (act_ == Activation::Tanh) y = y.array().tanh().matrix();
    y_ = y;
    return y;
  }

  // Accumulates parameter gradients, returns the input gradient.
  MatT<Scalar> backward(const MatT<Scalar>& dy) {
    MatT<Scalar> dz = dy;
    if (act_ == Activation::Tanh)
      dz = (dy.array() * (Scalar(1) - y_.array().square())).matrix();
    w_grad_ += dz.transpose() * x_;
    b_grad_ += dz.colwise().sum().transpose();
    return dz * w_;
  }

  std::vector<ParamRef<Scalar>> params() {
    return {{name_ + ".w", w_.data(), w_grad_.data(), w_.size()},
            {name_ + ".b", b_.data(), b_grad_.data(), b_.size()}};
  }

  MatT<Scalar>& weights() { return w_; }
  VecT<Scalar>& bias() { return b_; }
  Activation activation() const { return act_; }

 private:
  MatT<Scalar> w_, w_grad_;
  VecT<Scalar> b_, b_grad_;
  MatT<Scalar> x_, y_;
  Activation act_ = Activation::Linear;
  std::string name_;
};

inline int conv_output_length(int input_len, int kernel, int stride, int padding) {
  return (input_len + 2 * padding - kernel) / stride + 1;
}

// 1-D convolution (cross-correlation) on channels-first samples (C_in x P).
// Kernel columns are laid out tap-major: column u * C_in + c.
template <class Scalar>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(int in_ch, int out_ch, int kernel, int stride, int padding, Activation act,
         CounterRng& rng, std::string name = "conv")
      : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), padding_(padding),
        act_(act), name_(std::move(name)) {
    w_.resize(out_ch, in_ch * kernel);
    glorot_fill(w_, in_ch * kernel, out_ch, rng);
    b_ = VecT<Scalar>::Zero(out_ch);
    w_grad_ = MatT<Scalar>::Zero(out_ch, in_ch * kernel);
    b_grad_ = VecT<Scalar>::Zero(out_ch);
  }

  int output_length(int input_len) const {
    const int p = conv_output_length(input_len, kernel_, stride_, padding_);
    if (p < 1) throw DimensionError(name_ + ": output length < 1");
    return p;
  }

  MatT<Scalar> forward_one(const MatT<Scalar>& x) const {
    if (x.rows() != in_ch_) throw DimensionError(name_ + ": channel mismatch");
    const int p_out = output_length(static_cast<int>(x.cols()));
    MatT<Scalar> y(out_ch_, p_out);
    VecT<Scalar> col(in_ch_ * kernel_);
    for (int p = 0; p < p_out; ++p) {
      const int base = p * stride_ - padding_;
      for (int u = 0; u < kernel_; ++u) {
        const int src = base + u;
        if (src < 0 || src >= x.cols())
          col.segment(u * in_ch_, in_ch_).setZero();
        else
          col.segment(u * in_ch_, in_ch_) = x.col(src);
      }
      y.col(p) = w_ * col + b_;
    }
    if (act_ == Activation::Tanh) y = y.array().tanh().matrix();
    return y;
  }

  std::vector<MatT<Scalar>> forward(const std::vector<MatT<Scalar>>& batch) {
    x_ = batch;
    y_.clear();
    y_.reserve(batch.size());
    for (const auto& x : batch) y_.push_back(forward_one(x));
    return y_;
  }

  std::vector<MatT<Scalar>> backward(const std::vector<MatT<Scalar>>& dy) {
    std::vector<MatT<Scalar>> dx;
    dx.reserve(dy.size());
    VecT<Scalar> col(in_ch_ * kernel_);
    for (std::size_t s = 0; s < dy.size(); ++s) {
      const MatT<Scalar>& x = x_[s];
      MatT<Scalar> dz = dy[s];
      if (act_ == Activation::Tanh)
        dz = (dy[s].array() * (Scalar(1) - y_[s].array().square())).matrix();
      MatT<Scalar> dxi = MatT<Scalar>::Zero(x.rows(), x.cols());
      for (int p = 0; p < dz.cols(); ++p) {
        const int base = p * stride_ - padding_;
        for (int u = 0; u < kernel_; ++u) {
          const int src = base + u;
          if (src < 0 || src >= x.cols())
            col.segment(u * in_ch_, in_ch_).setZero();
          else
            col.segment(u * in_ch_, in_ch_) = x.col(src);
        }
        w_grad_ += dz.col(p) * col.transpose();
        b_grad_ += dz.col(p);
        const VecT<Scalar> dcol = w_.transpose() * dz.col(p);
        for (int u = 0; u < kernel_; ++u) {
          const int src = base + u;
          if (src >= 0 && src < x.cols()) dxi.col(src) += dcol.segment(u * in_ch_, in_ch_);
        }
      }
      dx.push_back(std::move(dxi));
    }
    return dx;
  }

  std::vector<ParamRef<Scalar>> params() {
    return {{name_ + ".w", w_.data(), w_grad_.data(), w_.size()},
            {name_ + ".b", b_.data(), b_grad_.data(), b_.size()}};
  }

  MatT<Scalar>& weights() { return w_; }
  VecT<Scalar>& bias() { return b_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int padding() const { return padding_; }

 private:
  int in_ch_ = 0, out_ch_ = 0, kernel_ = 1, stride_ = 1, padding_ = 0;
  MatT<Scalar> w_, w_grad_;
  VecT<Scalar> b_, b_grad_;
  std::vector<MatT<Scalar>> x_, y_;
  Activation act_ = Activation::Linear;
  std::string name_;
};

// Transposed 1-D convolution; the adjoint of Conv1d's input map, with
// output_padding to hit an exact mirror length.
template <class Scalar>
class ConvTranspose1d {
 public:
  ConvTranspose1d() = default;
  ConvTranspose1d(int in_ch, int out_ch, int kernel, int stride, int padding, int output_padding,
                  Activation act, CounterRng& rng, std::string name = "convT")
      : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), padding_(padding),
        out_padding_(output_padding), act_(act), name_(std::move(name)) {
    w_.resize(out_ch, in_ch * kernel);
    glorot_fill(w_, in_ch * kernel, out_ch, rng);
    b_ = VecT<Scalar>::Zero(out_ch);
    w_grad_ = MatT<Scalar>::Zero(out_ch, in_ch * kernel);
    b_grad_ = VecT<Scalar>::Zero(out_ch);
  }

  int output_length(int input_len) const {
    const int out = (input_len - 1) * stride_ - 2 * padding_ + kernel_ + out_padding_;
    if (out < 1) throw DimensionError(name_ + ": output length < 1");
    return out;
  }

  MatT<Scalar> forward_one(const MatT<Scalar>& x) const {
    if (x.rows() != in_ch_) throw DimensionError(name_ + ": channel mismatch");
    const int p_out = output_length(static_cast<int>(x.cols()));
    MatT<Scalar> y(out_ch_, p_out);
    y.colwise() = b_;
    for (int q = 0; q < x.cols(); ++q) {
      const int base = q * stride_ - padding_;
      for (int u = 0; u < kernel_; ++u) {
        const int dst = base + u;
        if (dst < 0 || dst >= p_out) continue;
        y.col(dst) += w_.middleCols(u * in_ch_, in_ch_) * x.col(q);
      }
    }
    if (act_ == Activation::Tanh) y = y.array().tanh().matrix();
    return y;
  }

  std::vector<MatT<Scalar>> forward(const std::vector<MatT<Scalar>>& batch) {
    x_ = batch;
    y_.clear();
    y_.reserve(batch.size());
    for (const auto& x : batch) y_.push_back(forward_one(x));
    return y_;
  }

  std::vector<MatT<Scalar>> backward(const std::vector<MatT<Scalar>>& dy) {
    std::vector<MatT<Scalar>> dx;
    dx.reserve(dy.size());
    for (std::size_t s = 0; s < dy.size(); ++s) {
      const MatT<Scalar>& x = x_[s];
      MatT<Scalar> dz = dy[s];
      if (act_ == Activation::Tanh)
        dz = (dy[s].array() * (Scalar(1) - y_[s].array().square())).matrix();
      MatT<Scalar> dxi = MatT<Scalar>::Zero(x.rows(), x.cols());
      b_grad_ += dz.rowwise().sum();
      for (int q = 0; q < x.cols(); ++q) {
        const int base = q * stride_ - padding_;
        for (int u = 0; u < kernel_; ++u) {
          const int dst = base + u;
          if (dst < 0 || dst >= dz.cols()) continue;
          w_grad_.middleCols(u * in_ch_, in_ch_) += dz.col(dst) * x.col(q).transpose();
          dxi.col(q) += w_.middleCols(u * in_ch_, in_ch_).transpose() * dz.col(dst);
        }
      }
      dx.push_back(std::move(dxi));
    }
    return dx;
  }

  std::vector<ParamRef<Scalar>> params() {
    return {{name_ + ".w", w_.data(), w_grad_.data(), w_.size()},
            {name_ + ".b", b_.data(), b_grad_.data(), b_.size()}};
  }

  MatT<Scalar>& weights() { return w_; }
  VecT<Scalar>& bias() { return b_; }

 private:
  int in_ch_ = 0, out_ch_ = 0, kernel_ = 1, stride_ = 1, padding_ = 0, out_padding_ = 0;
  MatT<Scalar> w_, w_grad_;
  VecT<Scalar> b_, b_grad_;
  std::vector<MatT<Scalar>> x_, y_;
  Activation act_ = Activation::Linear;
  std::string name_;
};

// Per-feature batch normalization over the rows of (samples x features).
// For sequence data the rows are batch x time flattened.
template <class Scalar>
class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  explicit BatchNorm1d(int features, Scalar eps = Scalar(1e-5), Scalar momentum = Scalar(0.1),
                       std::string name = "bn")
      : eps_(eps), momentum_(momentum), name_(std::move(name)) {
    gamma_ = VecT<Scalar>::Ones(features);
    beta_ = VecT<Scalar>::Zero(features);
    gamma_grad_ = VecT<Scalar>::Zero(features);
    beta_grad_ = VecT<Scalar>::Zero(features);
    running_mean_ = VecT<Scalar>::Zero(features);
    running_var_ = VecT<Scalar>::Ones(features);
  }

  int features() const { return static_cast<int>(gamma_.size()); }

  MatT<Scalar> forward(const MatT<Scalar>& x, bool train) {
    if (x.cols() != gamma_.size()) throw DimensionError(name_ + ": feature mismatch");
    if (train && x.rows() < 2) throw DataError(name_ + ": train mode needs a batch of at least 2");
    const Eigen::Index m = x.rows();
    VecT<Scalar> mean, var;
    if (train) {
      mean = x.colwise().mean().transpose();
      var = ((x.rowwise() - mean.transpose()).array().square().colwise().sum() / Scalar(m))
                .transpose();
      running_mean_ = (Scalar(1) - momentum_) * running_mean_ + momentum_ * mean;
      running_var_ = (Scalar(1) - momentum_) * running_var_ + momentum_ * var;
    } else {
      mean = running_mean_;
      var = running_var_;
    }
    inv_std_ = (var.array() + eps_).rsqrt().matrix();
    xhat_ = (x.rowwise() - mean.transpose()).array().rowwise() *
            inv_std_.transpose().array();
    MatT<Scalar> y = xhat_.array().rowwise() * gamma_.transpose().array();
    y.rowwise() += beta_.transpose();
    train_ = train;
    return y;
  }

  MatT<Scalar> backward(const MatT<Scalar>& dy) {
    const Eigen::Index m = dy.rows();
    gamma_grad_ += (dy.array() * xhat_.array()).colwise().sum().matrix().transpose();
    beta_grad_ += dy.colwise().sum().transpose();
    MatT<Scalar> dxhat = dy.array().rowwise() * gamma_.transpose().array();
    if (!train_) {
      // inference mode is a fixed affine map
      return dxhat.array().rowwise() * inv_std_.transpose().array();
    }
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum_dxhat = dxhat.colwise().sum();
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum_dxhat_xhat =
        (dxhat.array() * xhat_.array()).colwise().sum();
    MatT<Scalar> dx = Scalar(m) * dxhat;
    dx.rowwise() -= sum_dxhat;
    dx -= (xhat_.array().rowwise() * sum_dxhat_xhat.array()).matrix();
    dx = (dx.array().rowwise() * inv_std_.transpose().array()).matrix() / Scalar(m);
    return dx;
  }

  std::vector<ParamRef<Scalar>> params() {
    return {{name_ + ".gamma", gamma_.data(), gamma_grad_.data(), gamma_.size()},
            {name_ + ".beta", beta_.data(), beta_grad_.data(), beta_.size()}};
  }

  VecT<Scalar>& running_mean() { return running_mean_; }
  VecT<Scalar>& running_var() { return running_var_; }
  VecT<Scalar>& gamma() { return gamma_; }
  VecT<Scalar>& shift() { return beta_; }

 private:
  VecT<Scalar> gamma_, beta_, gamma_grad_, beta_grad_;
  VecT<Scalar> running_mean_, running_var_;
  MatT<Scalar> xhat_;
  VecT<Scalar> inv_std_;
  Scalar eps_ = Scalar(1e-5);
  Scalar momentum_ = Scalar(0.1);
  bool train_ = false;
  std::string name_;
};

}  // namespace dskin::neural
