#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "mobllm/autodiff.hpp"
#include "mobllm/optim.hpp"

using namespace mobllm;
using mobllm::testing::check_gradients;
using mobllm::testing::random_projection;

namespace {

struct Fixture {
  ParameterStore store;
  Parameter* a;
  Parameter* b;
  Parameter* row;
  explicit Fixture(std::uint64_t seed) {
    Rng rng(seed);
    a = &store.add("a", rng.normal_matrix(3, 4, 1.0));
    b = &store.add("b", rng.normal_matrix(4, 5, 1.0));
    row = &store.add("row", rng.normal_matrix(1, 4, 1.0));
  }
};

void expect_grad_ok(ParameterStore& store, const mobllm::testing::LossFn& fn) {
  auto r = check_gradients(store, fn);
  EXPECT_LT(r.worst, 1e-6) << r.worst_name;
}

}  // namespace

TEST(Autodiff, MatmulAndBroadcast) {
  Fixture f(1);
  expect_grad_ok(f.store, [&](ad::Tape& t) {
    auto x = ad::add_row(t.param(*f.a), t.param(*f.row));
    return random_projection(ad::matmul(x, t.param(*f.b)), 11);
  });
}

TEST(Autodiff, ElementwiseNonlinearities) {
  Fixture f(2);
  expect_grad_ok(f.store, [&](ad::Tape& t) {
    auto x = t.param(*f.a);
    auto y = ad::add(ad::sigmoid(x), ad::tanh(x));
    y = ad::add(y, ad::softplus(x));
    y = ad::add(y, ad::mul(ad::exp(ad::scale(x, 0.3)), ad::square(x)));
    y = ad::add(y, ad::log(ad::add_scalar(ad::square(x), 1.0)));
    y = ad::add(y, ad::relu(x));
    y = ad::add(y, ad::abs(x));
    return random_projection(y, 12);
  });
}

TEST(Autodiff, RowwiseNormalisations) {
  Fixture f(3);
  expect_grad_ok(f.store, [&](ad::Tape& t) {
    auto x = t.param(*f.a);
    auto y = ad::add(ad::softmax_rows(x), ad::log_softmax_rows(x));
    y = ad::add(y, ad::layer_norm_rows(x));
    auto lse = ad::logsumexp_rows(x);
    auto s = ad::add(ad::sum(random_projection(y, 13)), ad::sum(lse));
    return ad::add(s, ad::sum(ad::mean_rows(ad::square(x))));
  });
}

TEST(Autodiff, CausalSoftmaxIgnoresFutureColumns) {
  Fixture f(4);
  ad::Tape t;
  auto sq = t.constant(Matrix::Random(4, 4));
  auto y = ad::causal_softmax_rows(sq).value();
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(y.row(i).sum(), 1.0, 1e-12);
    for (Eigen::Index j = i + 1; j < 4; ++j) EXPECT_EQ(y(i, j), 0.0);
  }
  ParameterStore store;
  Rng rng(5);
  auto& p = store.add("scores", rng.normal_matrix(5, 5, 1.0));
  expect_grad_ok(store, [&](ad::Tape& t) { return random_projection(ad::causal_softmax_rows(t.param(p)), 14); });
}

TEST(Autodiff, ShapeOpsAndGather) {
  Fixture f(6);
  std::vector<int> idx = {2, 0, 2};
  expect_grad_ok(f.store, [&](ad::Tape& t) {
    auto x = t.param(*f.a);
    auto top = ad::slice_rows(x, 1, 2);
    auto left = ad::slice_cols(x, 0, 3);
    auto rows = ad::gather_rows(t, *f.a, idx);
    auto cat = ad::concat_rows({top, rows});
    auto catc = ad::concat_cols({left, ad::transpose(ad::slice_rows(ad::transpose(x), 3, 1))});
    auto s = ad::add(random_projection(cat, 15), random_projection(catc, 16));
    return ad::add(s, ad::element(x, 2, 1));
  });
}

TEST(Autodiff, CosineRowsWithZeroRow) {
  ParameterStore store;
  Rng rng(7);
  auto& h = store.add("h", rng.normal_matrix(3, 5, 1.0));
  auto& k = store.add("k", rng.normal_matrix(4, 5, 1.0));
  expect_grad_ok(store, [&](ad::Tape& t) { return random_projection(ad::cosine_rows(t.param(h), t.param(k)), 17); });
  ad::Tape t;
  Matrix kz = k.value;
  kz.row(1).setZero();
  auto c = ad::cosine_rows(t.param(h), t.constant(kz)).value();
  EXPECT_EQ(c.col(1).norm(), 0.0);
}

TEST(Autodiff, RotaryIsNormPreservingAndDifferentiable) {
  ParameterStore store;
  Rng rng(8);
  auto& x = store.add("x", rng.normal_matrix(6, 8, 1.0));
  ad::Tape t;
  auto y = ad::rotary(t.param(x), 4).value();
  EXPECT_NEAR(y.norm(), x.value.norm(), 1e-12);
  EXPECT_TRUE(y.row(0).isApprox(x.value.row(0)));
  expect_grad_ok(store, [&](ad::Tape& t) { return random_projection(ad::rotary(t.param(x), 4), 18); });
}

TEST(Autodiff, FrozenParametersGetNoGradient) {
  Fixture f(9);
  f.b->trainable = false;
  GradBuffer grads;
  ad::Tape t(&grads);
  t.backward(random_projection(ad::matmul(t.param(*f.a), t.param(*f.b)), 19));
  EXPECT_NE(grads.find(*f.a), nullptr);
  EXPECT_EQ(grads.find(*f.b), nullptr);
}

TEST(Adam, SkipsFrozenAndMovesTrainable) {
  Fixture f(10);
  f.b->trainable = false;
  const Matrix before_a = f.a->value, before_b = f.b->value;
  Adam opt;
  for (int s = 0; s < 3; ++s) {
    GradBuffer grads;
    ad::Tape t(&grads);
    t.backward(random_projection(ad::matmul(t.param(*f.a), t.param(*f.b)), 20));
    opt.step(f.store, grads);
  }
  EXPECT_TRUE((f.b->value.array() == before_b.array()).all());
  EXPECT_FALSE((f.a->value.array() == before_a.array()).all());
}
