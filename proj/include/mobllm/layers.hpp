#pragma once

#include <cmath>
#include <string>

#include "mobllm/autodiff.hpp"
#include "mobllm/parameters.hpp"
#include "mobllm/rng.hpp"

namespace mobllm {

// x * W + b with W stored in x out.
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Linear make(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
                     bool with_bias = true) {
    Linear l;
    l.weight = &store.add(name + ".w", rng.normal_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in))));
    if (with_bias) l.bias = &store.add(name + ".b", Matrix::Zero(1, out));
    return l;
  }

  ad::Var operator()(const ad::Var& x) const {
    ad::Var y = ad::matmul(x, x.tape().param(*weight));
    return bias != nullptr ? ad::add_row(y, x.tape().param(*bias)) : y;
  }

  Eigen::Index in() const { return weight->value.rows(); }
  Eigen::Index out() const { return weight->value.cols(); }

  void set_trainable(bool on) const {
    weight->trainable = on;
    if (bias != nullptr) bias->trainable = on;
  }
};

// Row-wise layer normalisation with gain and bias.
struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  static LayerNorm make(ParameterStore& store, const std::string& name, Eigen::Index width) {
    return {&store.add(name + ".g", Matrix::Ones(1, width)), &store.add(name + ".b", Matrix::Zero(1, width))};
  }

  ad::Var operator()(const ad::Var& x) const {
    ad::Tape& t = x.tape();
    return ad::add_row(ad::mul_row(ad::layer_norm_rows(x), t.param(*gain)), t.param(*bias));
  }

  void set_trainable(bool on) const {
    gain->trainable = on;
    bias->trainable = on;
  }
};

}  // namespace mobllm
