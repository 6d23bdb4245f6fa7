#pragma once

#include "csiforge/nn/tensor.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <vector>

namespace csiforge::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const ParamList<T>& params, AdamOptions opts) : opts_(opts) {
    for (const auto* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  /// One bias-corrected update. A non-finite gradient anywhere skips the
  /// whole update (the step counter still advances) and returns false.
  bool step(const ParamList<T>& params) {
    CSIFORGE_EXPECT(params.size() == m_.size(), "Adam::step: parameter list changed");
    ++t_;
    for (const auto* p : params)
      for (T g : p->grad)
        if (!std::isfinite(static_cast<double>(g))) {
          spdlog::warn("adam: non-finite gradient in {}, step {} skipped", p->name, t_);
          return false;
        }
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<T>& p = *params[i];
      CSIFORGE_EXPECT(p.size() == m_[i].size(), "Adam::step: moment shape mismatch");
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double g = static_cast<double>(p.grad[j]);
        m_[i][j] = opts_.beta1 * m_[i][j] + (1.0 - opts_.beta1) * g;
        v_[i][j] = opts_.beta2 * v_[i][j] + (1.0 - opts_.beta2) * g * g;
        const double mhat = m_[i][j] / c1;
        const double vhat = v_[i][j] / c2;
        p.value[j] = static_cast<T>(static_cast<double>(p.value[j]) -
                                    opts_.learning_rate * mhat / (std::sqrt(vhat) + opts_.epsilon));
      }
    }
    return true;
  }

  long long step_count() const { return t_; }
  const AdamOptions& options() const { return opts_; }

 private:
  AdamOptions opts_;
  std::vector<std::vector<double>> m_, v_;
  long long t_ = 0;
};

}  // namespace csiforge::nn
