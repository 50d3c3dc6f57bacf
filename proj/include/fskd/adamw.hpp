#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fskd/param_set.hpp"
#include "fskd/tensor.hpp"

namespace fskd {

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay. Moment buffers are keyed by parameter
// name and allocated lazily on the first step.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  long step_count() const { return step_; }

  // One update over every tensor in `params`; clears gradients afterwards.
  void step(ParamSet& params) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [name, p] : params) {
      if (!p->requires_grad || p->g.size() != p->v.size())
        throw std::runtime_error("adamw: parameter '" + name + "' has no gradient buffer");
      auto& m = moments_[name];
      if (m.m1.size() != p->v.size()) {
        m.m1.assign(p->v.size(), 0.0);
        m.m2.assign(p->v.size(), 0.0);
      }
      for (size_t i = 0; i < p->v.size(); ++i) {
        const double grad = p->g[i];
        m.m1[i] = cfg_.beta1 * m.m1[i] + (1.0 - cfg_.beta1) * grad;
        m.m2[i] = cfg_.beta2 * m.m2[i] + (1.0 - cfg_.beta2) * grad * grad;
        const double mhat = m.m1[i] / bc1;
        const double vhat = m.m2[i] / bc2;
        p->v[i] -= cfg_.lr * cfg_.weight_decay * p->v[i];
        p->v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
      p->g.assign(p->v.size(), 0.0);
    }
  }

 private:
  struct Moments {
    std::vector<double> m1, m2;
  };
  AdamWConfig cfg_;
  long step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace fskd
