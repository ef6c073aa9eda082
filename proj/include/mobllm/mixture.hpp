#pragma once

// Log-normal mixture over inter-event times. Model-space log-times x map to
// data space via log(tau) = b * x + a.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mobllm/error.hpp"
#include "mobllm/rng.hpp"

namespace mobllm {

struct MixtureParams {
  Eigen::VectorXd w;
  Eigen::VectorXd mu;
  Eigen::VectorXd s;

  Eigen::Index size() const { return w.size(); }

  void validate() const {
    if (w.size() < 1 || mu.size() != w.size() || s.size() != w.size())
      throw ArgumentError("mixture: component vectors must be non-empty and equally sized");
    if ((w.array() < 0.0).any() || std::abs(w.sum() - 1.0) > 1e-6) throw ArgumentError("mixture: weights off the simplex");
    if (!(s.array() > 0.0).all()) throw ArgumentError("mixture: scales must be positive");
  }
};

struct LogTimeNormalizer {
  double a = 0.0;  // mean of log tau
  double b = 1.0;  // standard deviation of log tau

  // Population statistics of log(tau); b falls back to 1 when degenerate.
  static LogTimeNormalizer fit(std::span<const double> taus) {
    if (taus.empty()) throw DataError("normalizer: no inter-event times");
    double sum = 0.0;
    for (double t : taus) {
      if (!(t > 0.0)) throw DataError("normalizer: non-positive inter-event time");
      sum += std::log(t);
    }
    const double mean = sum / static_cast<double>(taus.size());
    double var = 0.0;
    for (double t : taus) var += (std::log(t) - mean) * (std::log(t) - mean);
    var /= static_cast<double>(taus.size());
    const double sd = std::sqrt(var);
    return {mean, sd > 1e-12 ? sd : 1.0};
  }
};

// Parameters of the same mixture expressed directly over log(tau).
inline MixtureParams denormalize(const MixtureParams& p, const LogTimeNormalizer& norm) {
  return {p.w, (norm.a + norm.b * p.mu.array()).matrix(), (norm.b * p.s.array()).matrix()};
}

// log sum_k w_k LogNormal(tau; mu_k, s_k).
inline double mixture_log_density(double tau, const MixtureParams& p) {
  if (!(tau > 0.0)) throw ArgumentError("mixture_log_density: tau must be positive");
  p.validate();
  const double lt = std::log(tau);
  Eigen::ArrayXd terms(p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double z = (lt - p.mu(k)) / p.s(k);
    terms(k) = std::log(p.w(k)) - lt - std::log(p.s(k)) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * z * z;
  }
  const double m = terms.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((terms - m).exp().sum());
}

// sum_k w_k exp(a + b mu_k + b^2 s_k^2 / 2).
inline double mixture_expectation(const MixtureParams& p, const LogTimeNormalizer& norm = {}) {
  p.validate();
  double out = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    out += p.w(k) * std::exp(norm.a + norm.b * p.mu(k) + 0.5 * norm.b * norm.b * p.s(k) * p.s(k));
  return out;
}

inline std::vector<double> mixture_sample(const MixtureParams& p, const LogTimeNormalizer& norm, std::size_t count,
                                          std::uint64_t seed) {
  if (count < 1) throw ArgumentError("mixture_sample: count must be at least 1");
  p.validate();
  Rng rng(seed);
  std::vector<double> weights(p.w.data(), p.w.data() + p.w.size());
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto k = static_cast<Eigen::Index>(rng.categorical(weights));
    out.push_back(std::exp(norm.a + norm.b * rng.normal(p.mu(k), p.s(k))));
  }
  return out;
}

}  // namespace mobllm
