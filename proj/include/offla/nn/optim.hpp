#pragma once

// Adaptive-moment optimizer with decoupled weight decay. Decay multiplies the
// parameter by (1 - lr * weight_decay) before the moment update.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "offla/nn/layers.hpp"

namespace offla::nn {

struct AdamOptions {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParameterList params, AdamOptions opts) : opts_(opts) {
    for (auto& p : params) {
      Slot s{p.tensor, Matrix::Zero(p.tensor.rows(), p.tensor.cols()), Matrix::Zero(p.tensor.rows(), p.tensor.cols())};
      slots_.push_back(std::move(s));
    }
  }

  /// Applies one update from the gradients currently held by the parameters.
  void step() {
    for (auto& s : slots_)
      if (!s.param.grad().allFinite()) throw std::runtime_error("optimizer: non-finite gradient");
    ++steps_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(steps_));
    for (auto& s : slots_) {
      Matrix& w = s.param.mutable_value();
      const Matrix& g = s.param.grad();
      if (opts_.weight_decay != 0.0) w *= (1.0 - opts_.lr * opts_.weight_decay);
      s.m = opts_.beta1 * s.m + (1.0 - opts_.beta1) * g;
      s.v = opts_.beta2 * s.v + (1.0 - opts_.beta2) * g.cwiseProduct(g);
      w.array() -= opts_.lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + opts_.eps);
    }
  }

  void zero_grad() {
    for (auto& s : slots_) s.param.zero_grad();
  }

  long long step_count() const { return steps_; }
  AdamOptions& options() { return opts_; }

 private:
  struct Slot {
    Tensor param;
    Matrix m;
    Matrix v;
  };
  std::vector<Slot> slots_;
  AdamOptions opts_;
  long long steps_ = 0;
};

}  // namespace offla::nn
