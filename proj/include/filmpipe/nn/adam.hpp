#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "filmpipe/nn/layers.hpp"

namespace filmpipe::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // L2 added to the gradient, off by default
};

/// Adam with bias correction. Moments are kept in double regardless of T.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(const std::vector<Parameter<T>*>& params) {
    if (m_.empty()) {
      for (const Parameter<T>* p : params) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
      }
    }
    if (m_.size() != params.size()) {
      throw InvalidInputError("Adam: parameter list changed between steps");
    }
    ++t_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Parameter<T>& p = *params[k];
      std::vector<double>& m = m_[k];
      std::vector<double>& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        double g = static_cast<double>(p.grad[i]);
        if (config_.weight_decay != 0.0) {
          g += config_.weight_decay * static_cast<double>(p.value[i]);
        }
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) -
                                    lr_scale_ * config_.learning_rate * mhat /
                                        (std::sqrt(vhat) + config_.epsilon));
      }
    }
  }

  [[nodiscard]] const AdamConfig& config() const { return config_; }
  [[nodiscard]] std::int64_t steps() const { return t_; }
  [[nodiscard]] double current_lr() const { return lr_scale_ * config_.learning_rate; }
  void set_lr_scale(double s) { lr_scale_ = s; }

  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void restore(std::int64_t t, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  double lr_scale_ = 1.0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace filmpipe::nn
