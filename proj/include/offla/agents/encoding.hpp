#pragma once

#include <span>
#include <vector>

#include "offla/env.hpp"
#include "offla/nn/tensor.hpp"

namespace offla {

/// Observation features: one-hot retransmission state, context / context_max,
/// one-hot CQI bucket. Every entry lies in [0, 1].
class ObservationEncoder {
 public:
  ObservationEncoder() = default;
  ObservationEncoder(int n_states, int context_max, int n_cqi)
      : n_states_(n_states), context_max_(context_max), n_cqi_(n_cqi) {}
  explicit ObservationEncoder(const EnvConfig& cfg) : ObservationEncoder(cfg.n_states, cfg.context_max, cfg.n_cqi) {}

  int width() const { return n_states_ + 1 + n_cqi_; }

  void encode_into(const Observation& obs, Eigen::Ref<Eigen::RowVectorXd> row) const {
    row.setZero();
    row(obs.k) = 1.0;
    row(n_states_) = static_cast<double>(obs.x) / context_max_;
    row(n_states_ + 1 + obs.cqi) = 1.0;
  }

  nn::Matrix encode(std::span<const Observation> obs) const {
    nn::Matrix m(static_cast<Eigen::Index>(obs.size()), width());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      Eigen::RowVectorXd row(width());
      encode_into(obs[i], row);
      m.row(static_cast<Eigen::Index>(i)) = row;
    }
    return m;
  }

  nn::Matrix encode(const Observation& obs) const { return encode(std::span(&obs, 1)); }

  int n_states() const { return n_states_; }
  int context_max() const { return context_max_; }
  int n_cqi() const { return n_cqi_; }

 private:
  int n_states_ = 5;
  int context_max_ = 500;
  int n_cqi_ = 15;
};

}  // namespace offla
