#pragma once

// Central finite-difference oracle for tape gradients. Test-only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "mobllm/autodiff.hpp"
#include "mobllm/parameters.hpp"
#include "mobllm/rng.hpp"

namespace mobllm::testing {

struct GradCheckResult {
  double worst = 0.0;
  std::string worst_name;
  int tensors = 0;
};

using LossFn = std::function<ad::Var(ad::Tape&)>;

inline double evaluate(const LossFn& loss) {
  ad::Tape tape;
  return loss(tape).scalar();
}

// Relative error per tensor is ||analytic - numeric|| / max(||analytic||, ||numeric||);
// a tensor whose both norms fall below `floor` counts as agreeing.
inline GradCheckResult check_gradients(ParameterStore& store, const LossFn& loss, double h = 1e-5,
                                       double floor = 1e-9) {
  GradBuffer grads;
  {
    ad::Tape tape(&grads);
    tape.backward(loss(tape));
  }
  GradCheckResult result;
  for (Parameter& p : store) {
    if (!p.trainable) continue;
    Matrix numeric(p.value.rows(), p.value.cols());
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double saved = p.value.data()[i];
      p.value.data()[i] = saved + h;
      const double up = evaluate(loss);
      p.value.data()[i] = saved - h;
      const double down = evaluate(loss);
      p.value.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const Matrix* g = grads.find(p);
    const Matrix analytic = g != nullptr ? *g : Matrix::Zero(p.value.rows(), p.value.cols());
    const double scale = std::max(analytic.norm(), numeric.norm());
    const double err = scale < floor ? 0.0 : (analytic - numeric).norm() / scale;
    ++result.tensors;
    if (err >= result.worst) {
      result.worst = err;
      result.worst_name = p.name;
    }
  }
  return result;
}

// Scalar probe sum(out .* weights) with fixed random weights.
inline ad::Var random_projection(const ad::Var& out, std::uint64_t seed) {
  Rng rng(seed);
  Matrix w = rng.normal_matrix(out.rows(), out.cols(), 1.0);
  return ad::sum(ad::mul(out, out.tape().constant(std::move(w))));
}

}  // namespace mobllm::testing
