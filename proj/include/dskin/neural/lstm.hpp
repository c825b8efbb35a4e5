#pragma once

#include <vector>

#include "dskin/errors.hpp"
#include "dskin/neural/param.hpp"
#include "dskin/rng.hpp"

namespace dskin::neural {

template <class Scalar>
struct LstmState {
  VecT<Scalar> h;
  VecT<Scalar> c;

  static LstmState zero(int hidden) {
    return {VecT<Scalar>::Zero(hidden), VecT<Scalar>::Zero(hidden)};
  }
};

// Single-layer LSTM cell. Gate rows in wx/wh/b are stacked [i; f; g; o].
// Forget-gate bias starts at 1 so the cell retains memory early in training.
template <class Scalar>
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(int input_dim, int hidden_dim, CounterRng& rng, std::string name = "lstm")
      : d_(input_dim), h_(hidden_dim), name_(std::move(name)) {
    wx_.resize(4 * h_, d_);
    wh_.resize(4 * h_, h_);
    glorot_fill(wx_, d_, h_, rng);
    glorot_fill(wh_, h_, h_, rng);
    b_ = VecT<Scalar>::Zero(4 * h_);
    b_.segment(h_, h_).setOnes();
    wx_grad_ = MatT<Scalar>::Zero(4 * h_, d_);
    wh_grad_ = MatT<Scalar>::Zero(4 * h_, h_);
    b_grad_ = VecT<Scalar>::Zero(4 * h_);
  }

  int input_dim() const { return d_; }
  int hidden_dim() const { return h_; }

  // One step; pure function of the parameters, no cache.
  LstmState<Scalar> step(const VecT<Scalar>& x, const LstmState<Scalar>& state) const {
    if (x.size() != d_) throw DimensionError(name_ + ": input dim mismatch");
    if (state.h.size() != h_ || state.c.size() != h_)
      throw DimensionError(name_ + ": state dim mismatch");
    const VecT<Scalar> z = wx_ * x + wh_ * state.h + b_;
    LstmState<Scalar> next;
    next.c.resize(h_);
    next.h.resize(h_);
    for (int j = 0; j < h_; ++j) {
      const Scalar i = sigmoid(z(j));
      const Scalar f = sigmoid(z(h_ + j));
      const Scalar g = std::tanh(z(2 * h_ + j));
      const Scalar o = sigmoid(z(3 * h_ + j));
      next.c(j) = f * state.c(j) + i * g;
      next.h(j) = o * std::tanh(next.c(j));
    }
    return next;
  }

  // Sequence forward with the step cache needed for backpropagation through
  // time; X rows are time steps.
  MatT<Scalar> forward(const MatT<Scalar>& x_seq) {
    return forward(x_seq, LstmState<Scalar>::zero(h_));
  }

  MatT<Scalar> forward(const MatT<Scalar>& x_seq, LstmState<Scalar> state) {
    const int t_len = static_cast<int>(x_seq.rows());
    cache_.assign(t_len, StepCache{});
    MatT<Scalar> h_seq(t_len, h_);
    for (int t = 0; t < t_len; ++t) {
      StepCache& sc = cache_[t];
      sc.x = x_seq.row(t).transpose();
      sc.h_prev = state.h;
      sc.c_prev = state.c;
      const VecT<Scalar> z = wx_ * sc.x + wh_ * state.h + b_;
      sc.i = z.segment(0, h_).unaryExpr([](Scalar v) { return sigmoid(v); });
      sc.f = z.segment(h_, h_).unaryExpr([](Scalar v) { return sigmoid(v); });
      sc.g = z.segment(2 * h_, h_).array().tanh();
      sc.o = z.segment(3 * h_, h_).unaryExpr([](Scalar v) { return sigmoid(v); });
      state.c = sc.f.cwiseProduct(sc.c_prev) + sc.i.cwiseProduct(sc.g);
      sc.tanh_c = state.c.array().tanh();
      state.h = sc.o.cwiseProduct(sc.tanh_c);
      h_seq.row(t) = state.h.transpose();
    }
    final_state_ = state;
    return h_seq;
  }

  const LstmState<Scalar>& final_state() const { return final_state_; }

  // BPTT over the cached sequence; gradients accumulate across time because
  // the cell shares parameters at every step. Returns dL/dX. Optional
  // gradients flowing into the final state, and out of the initial state,
  // support explicit unrolling across cells.
  MatT<Scalar> backward(const MatT<Scalar>& dh_seq, const LstmState<Scalar>* dfinal = nullptr,
                        LstmState<Scalar>* dinitial = nullptr) {
    const int t_len = static_cast<int>(cache_.size());
    if (dh_seq.rows() != t_len) throw DimensionError(name_ + ": backward length mismatch");
    MatT<Scalar> dx_seq(t_len, d_);
    VecT<Scalar> dh_rec = dfinal ? dfinal->h : VecT<Scalar>::Zero(h_);
    VecT<Scalar> dc_next = dfinal ? dfinal->c : VecT<Scalar>::Zero(h_);
    VecT<Scalar> dz(4 * h_);
    for (int t = t_len - 1; t >= 0; --t) {
      const StepCache& sc = cache_[t];
      const VecT<Scalar> dh = dh_seq.row(t).transpose() + dh_rec;
      const VecT<Scalar> do_gate = dh.cwiseProduct(sc.tanh_c);
      const VecT<Scalar> dc =
          dc_next + dh.cwiseProduct(sc.o).cwiseProduct(
                        (Scalar(1) - sc.tanh_c.array().square()).matrix());
      const VecT<Scalar> df = dc.cwiseProduct(sc.c_prev);
      const VecT<Scalar> di = dc.cwiseProduct(sc.g);
      const VecT<Scalar> dg = dc.cwiseProduct(sc.i);
      dz.segment(0, h_) =
          di.cwiseProduct(sc.i).cwiseProduct((Scalar(1) - sc.i.array()).matrix());
      dz.segment(h_, h_) =
          df.cwiseProduct(sc.f).cwiseProduct((Scalar(1) - sc.f.array()).matrix());
      dz.segment(2 * h_, h_) = dg.cwiseProduct((Scalar(1) - sc.g.array().square()).matrix());
      dz.segment(3 * h_, h_) =
          do_gate.cwiseProduct(sc.o).cwiseProduct((Scalar(1) - sc.o.array()).matrix());

      wx_grad_ += dz * sc.x.transpose();
      wh_grad_ += dz * sc.h_prev.transpose();
      b_grad_ += dz;
      dx_seq.row(t) = (wx_.transpose() * dz).transpose();
      dh_rec = wh_.transpose() * dz;
      dc_next = dc.cwiseProduct(sc.f);
    }
    if (dinitial) {
      dinitial->h = dh_rec;
      dinitial->c = dc_next;
    }
    return dx_seq;
  }

  std::vector<ParamRef<Scalar>> params() {
    return {{name_ + ".wx", wx_.data(), wx_grad_.data(), wx_.size()},
            {name_ + ".wh", wh_.data(), wh_grad_.data(), wh_.size()},
            {name_ + ".b", b_.data(), b_grad_.data(), b_.size()}};
  }

  MatT<Scalar>& input_weights() { return wx_; }
  MatT<Scalar>& recurrent_weights() { return wh_; }
  VecT<Scalar>& bias() { return b_; }

  static Scalar sigmoid(Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); }

 private:
  struct StepCache {
    VecT<Scalar> x, h_prev, c_prev, i, f, g, o, tanh_c;
  };

  int d_ = 0, h_ = 0;
  MatT<Scalar> wx_, wh_, wx_grad_, wh_grad_;
  VecT<Scalar> b_, b_grad_;
  std::vector<StepCache> cache_;
  LstmState<Scalar> final_state_;
  std::string name_;
};

}  // namespace dskin::neural
