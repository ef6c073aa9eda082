#pragma once

// Task heads: next-POI classifier over beta, user classifier over alpha and
// beta, and the log-normal mixture head for the next inter-event time.

#include <cmath>
#include <numbers>
#include <optional>

#include "mobllm/autodiff.hpp"
#include "mobllm/layers.hpp"
#include "mobllm/mixture.hpp"

namespace mobllm {

enum class Pooling { mean, last };

struct HeadConfig {
  Pooling pooling = Pooling::mean;
  int k_mix = 16;
};

inline ad::Var pool_rows(const ad::Var& x, Pooling mode) {
  if (x.rows() < 1) throw ArgumentError("pool: no rows");
  return mode == Pooling::mean ? ad::mean_rows(x) : ad::slice_rows(x, x.rows() - 1, 1);
}

struct LpHead {
  Linear proj;
  Pooling pooling = Pooling::mean;

  LpHead(ParameterStore& store, int width, int pois, Pooling mode, Rng& rng)
      : proj(Linear::make(store, "head.lp", width, pois, rng)), pooling(mode) {}

  ad::Var logits(const ad::Var& beta) const { return proj(pool_rows(beta, pooling)); }
  ad::Var probabilities(const ad::Var& beta) const { return ad::softmax_rows(logits(beta)); }
};

struct TulHead {
  Linear proj;

  TulHead(ParameterStore& store, int width, int users, Rng& rng)
      : proj(Linear::make(store, "head.tul", width, users, rng)) {}

  ad::Var logits(const ad::Var& alpha, const std::optional<ad::Var>& beta) const {
    return proj(ad::mean_rows(beta ? ad::concat_rows({alpha, *beta}) : alpha));
  }
  ad::Var probabilities(const ad::Var& alpha, const std::optional<ad::Var>& beta) const {
    return ad::softmax_rows(logits(alpha, beta));
  }
};

// Mixture parameters on the tape, each 1 x K_mix.
struct MixtureVars {
  ad::Var log_w;
  ad::Var mu;
  ad::Var s;

  MixtureParams values() const {
    return {log_w.value().row(0).array().exp().matrix().transpose(), mu.value().row(0).transpose(),
            s.value().row(0).transpose()};
  }
};

inline constexpr double kScaleFloor = 1e-6;

struct TpHead {
  Linear weights, means, scales;
  Pooling pooling = Pooling::mean;

  TpHead(ParameterStore& store, int width, int k_mix, Pooling mode, Rng& rng)
      : weights(Linear::make(store, "head.tp.w", width, k_mix, rng)),
        means(Linear::make(store, "head.tp.mu", width, k_mix, rng)),
        scales(Linear::make(store, "head.tp.s", width, k_mix, rng)),
        pooling(mode) {
    if (k_mix < 1) throw ConfigError("heads.k_mix must be positive");
  }

  MixtureVars params(const ad::Var& beta) const {
    ad::Var pooled = pool_rows(beta, pooling);
    return {ad::log_softmax_rows(weights(pooled)), means(pooled), ad::add_scalar(ad::softplus(scales(pooled)), kScaleFloor)};
  }
};

// log p(tau) of the de-normalised mixture (1 x 1).
inline ad::Var mixture_log_density(const MixtureVars& m, double tau, const LogTimeNormalizer& norm) {
  if (!(tau > 0.0)) throw ArgumentError("mixture_log_density: tau must be positive");
  const double lt = std::log(tau);
  ad::Var log_s = ad::log(m.s);
  ad::Var z = ad::scale(ad::mul(ad::add_scalar(ad::scale(m.mu, -norm.b), lt - norm.a), ad::exp(ad::scale(log_s, -1.0))),
                        1.0 / norm.b);
  const double c = lt + std::log(norm.b) + 0.5 * std::log(2.0 * std::numbers::pi);
  ad::Var terms = ad::sub(ad::add_scalar(ad::sub(m.log_w, log_s), -c), ad::scale(ad::square(z), 0.5));
  return ad::logsumexp_rows(terms);
}

// sum_k w_k exp(a + b mu_k + b^2 s_k^2 / 2) (1 x 1).
inline ad::Var mixture_expectation(const MixtureVars& m, const LogTimeNormalizer& norm) {
  ad::Var terms = ad::add(ad::add_scalar(ad::add(m.log_w, ad::scale(m.mu, norm.b)), norm.a),
                          ad::scale(ad::square(m.s), 0.5 * norm.b * norm.b));
  return ad::exp(ad::logsumexp_rows(terms));
}

}  // namespace mobllm
