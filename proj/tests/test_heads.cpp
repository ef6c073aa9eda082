#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "mobllm/heads.hpp"

using namespace mobllm;
using mobllm::testing::check_gradients;
using mobllm::testing::randomize_all;

namespace {

MixtureParams random_mixture(Rng& rng, int k) {
  MixtureParams p;
  p.w.resize(k);
  p.mu.resize(k);
  p.s.resize(k);
  for (int i = 0; i < k; ++i) {
    p.w(i) = rng.uniform(0.05, 1.0);
    p.mu(i) = rng.uniform(-2.0, 2.0);
    p.s(i) = rng.uniform(0.1, 1.5);
  }
  p.w /= p.w.sum();
  return p;
}

MixtureParams single(double mu, double s) {
  MixtureParams p;
  p.w = Eigen::VectorXd::Ones(1);
  p.mu = Eigen::VectorXd::Constant(1, mu);
  p.s = Eigen::VectorXd::Constant(1, s);
  return p;
}

// Integral of the density over (0, inf), done in u = log(tau) where the
// integrand is smooth; the range covers every component by 15 scales.
double total_mass(const MixtureParams& p) {
  double lo = 1e300, hi = -1e300;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    lo = std::min(lo, p.mu(k) - 15.0 * p.s(k));
    hi = std::max(hi, p.mu(k) + 15.0 * p.s(k));
  }
  auto f = [&](double u) { return std::exp(mixture_log_density(std::exp(u), p) + u); };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-12);
}

}  // namespace

TEST(Mixture, DensityExamples) {
  EXPECT_NEAR(mixture_log_density(1.0, single(0.0, 1.0)), -0.5 * std::log(2.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(mixture_log_density(1.0, single(0.0, 1.0)), -0.9189385332, 1e-10);
  MixtureParams twin;
  twin.w = Eigen::Vector2d(0.5, 0.5);
  twin.mu = Eigen::Vector2d(0.3, 0.3);
  twin.s = Eigen::Vector2d(0.7, 0.7);
  for (double tau : {0.1, 1.0, 4.0}) EXPECT_NEAR(mixture_log_density(tau, twin), mixture_log_density(tau, single(0.3, 0.7)), 1e-14);
  EXPECT_THROW(mixture_log_density(0.0, twin), ArgumentError);
  EXPECT_THROW(mixture_log_density(-1.0, twin), ArgumentError);
}

TEST(Mixture, DensityIntegratesToOne) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_mixture(rng, 1 + static_cast<int>(rng.index(6)));
    EXPECT_NEAR(total_mass(p), 1.0, 1e-3) << "trial " << trial;
  }
}

TEST(Mixture, ExpectationExamples) {
  EXPECT_NEAR(mixture_expectation(single(0.0, 1e-9)), 1.0, 1e-12);
  EXPECT_NEAR(mixture_expectation(single(0.0, 1.0)), std::exp(0.5), 1e-12);
  MixtureParams two;
  two.w = Eigen::Vector2d(0.5, 0.5);
  two.mu = Eigen::Vector2d(1.0, -1.0);
  two.s = Eigen::Vector2d(1e-9, 1e-9);
  EXPECT_NEAR(mixture_expectation(two), (std::exp(1.0) + std::exp(-1.0)) / 2.0, 1e-12);
  // log tau = b x + a: the single component scales to mean a + b mu, sd b s.
  const LogTimeNormalizer norm{2.0, 0.5};
  EXPECT_NEAR(mixture_expectation(single(1.0, 0.8), norm), std::exp(2.0 + 0.5 + 0.5 * 0.16), 1e-12);
  EXPECT_NEAR(mixture_expectation(single(1.0, 0.8), norm), mixture_expectation(denormalize(single(1.0, 0.8), norm)), 1e-12);
}

TEST(Mixture, ExpectationMatchesMonteCarlo) {
  Rng rng(2);
  const auto mc_mean = [](const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
  };
  EXPECT_NEAR(mc_mean(mixture_sample(single(0.0, 1.0), {}, 1000000, 3)) / std::exp(0.5), 1.0, 0.01);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_mixture(rng, 1 + static_cast<int>(rng.index(4)));
    p.s = p.s.cwiseMin(0.8);
    const LogTimeNormalizer norm{rng.uniform(-1.0, 1.0), rng.uniform(0.3, 1.2)};
    const double mean = mc_mean(mixture_sample(p, norm, 1000000, 100 + static_cast<std::uint64_t>(trial)));
    EXPECT_NEAR(mean / mixture_expectation(p, norm), 1.0, 0.01) << "trial " << trial;
  }
}

TEST(Mixture, SamplingIsDeterministicAndDegenerate) {
  Rng rng(4);
  const auto p = random_mixture(rng, 3);
  EXPECT_EQ(mixture_sample(p, {}, 100, 9), mixture_sample(p, {}, 100, 9));
  EXPECT_NE(mixture_sample(p, {}, 100, 9), mixture_sample(p, {}, 100, 10));
  const LogTimeNormalizer norm{1.0, 2.0};
  for (double x : mixture_sample(single(0.5, 1e-12), norm, 50, 1)) EXPECT_NEAR(x, std::exp(1.0 + 2.0 * 0.5), 1e-9);
  EXPECT_THROW(mixture_sample(p, {}, 0, 1), ArgumentError);
}

TEST(Mixture, ValidationAndNormalizer) {
  MixtureParams bad = single(0.0, 1.0);
  bad.w(0) = 0.5;
  EXPECT_THROW(bad.validate(), ArgumentError);
  bad = single(0.0, 0.0);
  EXPECT_THROW(bad.validate(), ArgumentError);
  const double taus[] = {1.0, std::exp(2.0)};
  const auto n = LogTimeNormalizer::fit(taus);
  EXPECT_NEAR(n.a, 1.0, 1e-15);
  EXPECT_NEAR(n.b, 1.0, 1e-15);
  const double same[] = {5.0, 5.0};
  EXPECT_EQ(LogTimeNormalizer::fit(same).b, 1.0);
  const double zero[] = {0.0};
  EXPECT_THROW(LogTimeNormalizer::fit(zero), DataError);
}

TEST(Heads, LpZeroAffineIsUniform) {
  ParameterStore store;
  Rng rng(5);
  LpHead head(store, 4, 7, Pooling::mean, rng);
  head.proj.weight->value.setZero();
  ad::Tape tape;
  RowVector p = head.probabilities(tape.constant(rng.normal_matrix(3, 4, 1.0))).value();
  for (Eigen::Index i = 0; i < 7; ++i) EXPECT_NEAR(p(i), 1.0 / 7.0, 1e-15);
}

TEST(Heads, LpSimplexAndArgmax) {
  ParameterStore store;
  Rng rng(6);
  LpHead head(store, 4, 9, Pooling::mean, rng);
  for (int trial = 0; trial < 100; ++trial) {
    randomize_all(store, static_cast<std::uint64_t>(trial), 1.0);
    const Matrix beta = rng.normal_matrix(1 + static_cast<Eigen::Index>(rng.index(5)), 4, 1.0);
    ad::Tape tape;
    const RowVector p = head.probabilities(tape.constant(beta)).value();
    EXPECT_NEAR(p.sum(), 1.0, 1e-6);
    EXPECT_TRUE((p.array() >= 0.0).all());
    // Recompute the logits from the mean row.
    const RowVector logits = beta.colwise().mean() * head.proj.weight->value + head.proj.bias->value;
    Eigen::Index a = 0, b = 0;
    p.maxCoeff(&a);
    logits.maxCoeff(&b);
    EXPECT_EQ(a, b);
  }
}

TEST(Heads, LastPoolingUsesFinalRow) {
  ParameterStore store;
  Rng rng(7);
  LpHead head(store, 4, 5, Pooling::last, rng);
  const Matrix beta = rng.normal_matrix(3, 4, 1.0);
  ad::Tape tape;
  const RowVector expected = beta.row(2) * head.proj.weight->value + head.proj.bias->value;
  EXPECT_LT((head.logits(tape.constant(beta)).value() - expected).norm(), 1e-14);
}

TEST(Heads, TulPoolsAlphaAndBeta) {
  ParameterStore store;
  Rng rng(8);
  TulHead head(store, 4, 6, rng);
  randomize_all(store, 8, 1.0);
  const Matrix alpha = rng.normal_matrix(3, 4, 1.0), beta = rng.normal_matrix(2, 4, 1.0);
  ad::Tape tape;
  const RowVector p = head.probabilities(tape.constant(alpha), tape.constant(beta)).value();
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  // Permuting the pooled rows (moving one between alpha and beta) changes nothing.
  Matrix alpha2(2, 4), beta2(3, 4);
  alpha2 << beta.row(1), alpha.row(0);
  beta2 << alpha.row(2), beta.row(0), alpha.row(1);
  const RowVector p2 = head.probabilities(tape.constant(alpha2), tape.constant(beta2)).value();
  EXPECT_LT((p - p2).cwiseAbs().maxCoeff(), 1e-14);
  // Direct recomputation.
  Matrix all(5, 4);
  all << alpha, beta;
  RowVector logits = all.colwise().mean() * head.proj.weight->value + head.proj.bias->value;
  RowVector e = (logits.array() - logits.maxCoeff()).exp();
  EXPECT_LT((p - e / e.sum()).cwiseAbs().maxCoeff(), 1e-14);
  // A single alpha row and no beta pools to that row.
  const Matrix one = rng.normal_matrix(1, 4, 1.0);
  const RowVector l1 = head.logits(tape.constant(one), std::nullopt).value();
  EXPECT_LT((l1 - (one * head.proj.weight->value + head.proj.bias->value)).norm(), 1e-14);
}

TEST(Heads, TpZeroAffine) {
  ParameterStore store;
  Rng rng(9);
  TpHead head(store, 4, 3, Pooling::mean, rng);
  for (Parameter& p : store) p.value.setZero();
  ad::Tape tape;
  const MixtureParams m = head.params(tape.constant(rng.normal_matrix(2, 4, 1.0))).values();
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(m.w(k), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(m.mu(k), 0.0);
    EXPECT_NEAR(m.s(k), std::log(2.0) + 1e-6, 1e-15);
  }
}

TEST(Heads, TpMatchesRecomputation) {
  ParameterStore store;
  Rng rng(10);
  TpHead head(store, 4, 5, Pooling::mean, rng);
  for (int trial = 0; trial < 50; ++trial) {
    randomize_all(store, static_cast<std::uint64_t>(trial) + 50, 2.0);
    const Matrix beta = rng.normal_matrix(3, 4, 2.0);
    ad::Tape tape;
    const MixtureParams m = head.params(tape.constant(beta)).values();
    EXPECT_NO_THROW(m.validate());
    const RowVector pooled = beta.colwise().mean();
    const RowVector lw = pooled * head.weights.weight->value + head.weights.bias->value;
    const RowVector mu = pooled * head.means.weight->value + head.means.bias->value;
    const RowVector sp = pooled * head.scales.weight->value + head.scales.bias->value;
    RowVector w = (lw.array() - lw.maxCoeff()).exp();
    w /= w.sum();
    for (int k = 0; k < 5; ++k) {
      EXPECT_NEAR(m.w(k), w(k), 1e-12);
      EXPECT_NEAR(m.mu(k), mu(k), 1e-12);
      EXPECT_NEAR(m.s(k), std::log1p(std::exp(sp(k))) + 1e-6, 1e-12);
      EXPECT_GT(m.s(k), 0.0);
    }
  }
}

TEST(Heads, TapeMixtureMatchesPlainFunctions) {
  ParameterStore store;
  Rng rng(11);
  TpHead head(store, 4, 4, Pooling::mean, rng);
  for (int trial = 0; trial < 30; ++trial) {
    randomize_all(store, static_cast<std::uint64_t>(trial) + 7, 1.0);
    const LogTimeNormalizer norm{rng.uniform(5.0, 9.0), rng.uniform(0.5, 2.0)};
    ad::Tape tape;
    const MixtureVars mv = head.params(tape.constant(rng.normal_matrix(2, 4, 1.0)));
    const MixtureParams p = mv.values();
    const double tau = std::exp(rng.uniform(3.0, 10.0));
    EXPECT_NEAR(mixture_log_density(mv, tau, norm).scalar(), mixture_log_density(tau, denormalize(p, norm)), 1e-10);
    EXPECT_NEAR(mixture_expectation(mv, norm).scalar() / mixture_expectation(p, norm), 1.0, 1e-12);
  }
}

TEST(Heads, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ParameterStore store;
    Rng rng(seed);
    LpHead lp(store, 4, 5, Pooling::mean, rng);
    TulHead tul(store, 4, 3, rng);
    TpHead tp(store, 4, 3, Pooling::mean, rng);
    Parameter& alpha = store.add("alpha", rng.normal_matrix(3, 4, 1.0));
    Parameter& beta = store.add("beta", rng.normal_matrix(2, 4, 1.0));
    const LogTimeNormalizer norm{1.0, 0.7};
    const double tau = std::exp(rng.uniform(-1.0, 2.0));
    auto r = check_gradients(store, [&](ad::Tape& t) {
      ad::Var a = t.param(alpha), b = t.param(beta);
      ad::Var loss = ad::element(ad::log_softmax_rows(lp.logits(b)), 0, 2);
      loss = ad::add(loss, ad::element(ad::log_softmax_rows(tul.logits(a, b)), 0, 1));
      const MixtureVars m = tp.params(b);
      loss = ad::add(loss, mixture_log_density(m, tau, norm));
      return ad::add(loss, ad::scale(mixture_expectation(m, norm), 0.1));
    });
    EXPECT_LT(r.worst, 1e-4) << "seed " << seed << " tensor " << r.worst_name;
  }
}
