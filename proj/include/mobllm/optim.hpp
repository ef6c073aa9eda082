#pragma once

#include <cmath>
#include <vector>

#include "mobllm/parameters.hpp"

namespace mobllm {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Frozen parameters are never touched; trainable
// parameters without a gradient entry are treated as having a zero gradient.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParameterStore& store, const GradBuffer& grads) {
    if (first_.size() < store.size()) {
      first_.resize(store.size());
      second_.resize(store.size());
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (Parameter& p : store) {
      if (!p.trainable) continue;
      Matrix& m = first_[p.id];
      Matrix& v = second_[p.id];
      if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
        m = Matrix::Zero(p.value.rows(), p.value.cols());
        v = Matrix::Zero(p.value.rows(), p.value.cols());
      }
      const Matrix* g = grads.find(p);
      if (g != nullptr) {
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * *g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g->cwiseProduct(*g);
      } else {
        m *= cfg_.beta1;
        v *= cfg_.beta2;
      }
      p.value.array() -= cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
    }
  }

  long steps() const { return steps_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  long steps_ = 0;
};

}  // namespace mobllm
