#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dpvqa/ops.hpp"
#include "oracles.hpp"

using namespace dpvqa;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, bool grad = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = normal(rng);
  return Tensor<double>::from_data(std::move(shape), std::move(v), grad);
}

Tensor<float> random_float(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = normal(rng);
  return Tensor<float>::from_data(std::move(shape), std::move(v));
}

}  // namespace

TEST(Tensor, FactoriesAndShape) {
  auto z = Tensor<float>::zeros({2, 3});
  EXPECT_EQ(z.numel(), 6u);
  EXPECT_EQ(z.rank(), 2u);
  EXPECT_EQ(shape_str(z.shape()), "[2, 3]");
  auto f = Tensor<double>::full({4}, 2.5);
  for (double v : f.data()) EXPECT_EQ(v, 2.5);
  EXPECT_EQ(Tensor<double>::scalar(3.0).item(), 3.0);
  EXPECT_THROW(z.item(), ContractError);
  EXPECT_THROW(Tensor<float>::from_data({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Tensor, PrecisionNames) {
  EXPECT_EQ(parse_precision("f32"), Precision::f32);
  EXPECT_EQ(parse_precision("f64"), Precision::f64);
  EXPECT_EQ(to_string(Precision::f64), "f64");
  EXPECT_THROW(parse_precision("f16"), ContractError);
}

TEST(Autograd, SharedParameterAccumulates) {
  auto w = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
  auto y = sum(add(mul(w, w), w));  // Σ w² + w
  backward(y);
  EXPECT_DOUBLE_EQ(w.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(w.grad()[1], 5.0);
  backward(sum(w));
  EXPECT_DOUBLE_EQ(w.grad()[0], 4.0);
  w.zero_grad();
  EXPECT_DOUBLE_EQ(w.grad()[1], 0.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  auto w = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    auto y = mul(w, w);
    EXPECT_TRUE(y.node()->inputs.empty());
  }
  EXPECT_TRUE(grad_enabled());
}

TEST(Autograd, DetachCutsHistory) {
  auto w = Tensor<double>::from_data({1}, {3.0}, true);
  auto d = mul(w, w).detach();
  EXPECT_FALSE(d.requires_grad());
  EXPECT_EQ(d.item(), 9.0);
}

TEST(Ops, LinearMatchesBruteForce) {
  auto x = random_float({3, 4, 7}, 1);
  auto w = random_float({5, 7}, 2);
  auto b = random_float({5}, 3);
  auto y = linear(x, w, b);
  ASSERT_EQ(y.shape(), (Shape{3, 4, 5}));
  auto bv = oracle::values(b);
  auto expected = oracle::linear(oracle::values(x), 7, oracle::values(w), 5, &bv);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(y[i], expected[i]) << i;
  auto nb = linear(x, w);
  auto expected_nb = oracle::linear<float>(oracle::values(x), 7, oracle::values(w), 5, nullptr);
  for (std::size_t i = 0; i < expected_nb.size(); ++i) EXPECT_EQ(nb[i], expected_nb[i]);
  EXPECT_THROW(linear(x, random_float({5, 6}, 4), b), DimensionError);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  auto x = random_float({6, 9}, 5);
  auto p = softmax(x);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 9; ++c) s += p[r * 9 + c];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  auto big = Tensor<float>::from_data({3}, {1000.0f, 1000.0f, -1000.0f});
  auto pb = softmax(big);
  EXPECT_FLOAT_EQ(pb[0], 0.5f);
  EXPECT_FLOAT_EQ(pb[2], 0.0f);
}

TEST(Ops, BroadcastAndShapes) {
  auto a = random_float({2, 3}, 6);
  auto b = random_float({3}, 7);
  auto c = add(a, b);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(c[i], a[i] + b[i % 3]);
  EXPECT_THROW(add(a, random_float({2}, 8)), DimensionError);
  auto pair = std::vector<Tensor<float>>{b, b};
  auto st = stack(std::span<const Tensor<float>>(pair));
  EXPECT_EQ(st.shape(), (Shape{2, 3}));
  auto cat = concat({a, a}, 1);
  EXPECT_EQ(cat.shape(), (Shape{2, 6}));
  EXPECT_EQ(cat[4], a[1]);
  EXPECT_THROW(reshape(a, {4}), DimensionError);
  EXPECT_EQ(select(a, 1)[0], a[3]);
  EXPECT_EQ(slice_last(a, 1, 2).shape(), (Shape{2, 2}));
  std::vector<std::size_t> idx{1, 1, 0};
  auto sel = index_select(a, std::span<const std::size_t>(idx));
  EXPECT_EQ(sel.shape(), (Shape{3, 3}));
  EXPECT_EQ(sel[0], a[3]);
}

TEST(Ops, ReductionsAccumulateInOrder) {
  auto x = random_float({4, 3}, 9);
  auto r = reduce_sum(x, 0);
  for (std::size_t c = 0; c < 3; ++c) {
    float acc = 0;
    for (std::size_t i = 0; i < 4; ++i) acc += x[i * 3 + c];
    EXPECT_EQ(r[c], acc);
  }
  auto m = mean(x, 1);
  EXPECT_EQ(m.shape(), (Shape{4}));
  auto parts = std::vector<Tensor<float>>{x, x, x};
  auto n = add_n(std::span<const Tensor<float>>(parts));
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(n[i], 0.0f + x[i] + x[i] + x[i]);
}

TEST(Ops, CrossEntropyScalarOracle) {
  const std::vector<double> z{0.3, -1.2, 2.0, 0.7};
  auto logits = Tensor<double>::from_data({4}, z);
  double mx = 2.0, s = 0;
  for (double v : z) s += std::exp(v - mx);
  for (std::size_t label = 0; label < 4; ++label) {
    double expected = -(z[label] - mx - std::log(s));
    EXPECT_NEAR(cross_entropy(logits, label).item(), expected, 1e-6);
  }
  EXPECT_THROW(cross_entropy(logits, 4), VocabularyError);
}

TEST(Ops, SquaredErrorScalarOracle) {
  auto p = Tensor<double>::from_data({1}, {1.75});
  EXPECT_NEAR(squared_error(p, 4.0).item(), (1.75 - 4.0) * (1.75 - 4.0), 1e-12);
}

TEST(Ops, DropoutIsSeededAndInverted) {
  auto x = Tensor<double>::full({1000}, 1.0);
  auto a = dropout(x, 0.5, 11), b = dropout(x, 0.5, 11);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    EXPECT_EQ(a[i], b[i]);
    EXPECT_TRUE(a[i] == 0.0 || a[i] == 2.0);
    kept += a[i] != 0.0;
  }
  EXPECT_GT(kept, 400u);
  EXPECT_LT(kept, 600u);
  auto same = dropout(x, 0.0, 11);
  EXPECT_EQ(same[3], 1.0);
}

struct FdCase {
  const char* name;
  std::function<Tensor<double>(const Tensor<double>&)> f;
};

TEST(OpGradient, MatchesFiniteDifferences) {
  auto w = random_tensor({5, 4}, 21, false);
  auto b = random_tensor({5}, 22, false);
  auto other = random_tensor({3, 4}, 23, false);
  auto weights = softmax(random_tensor({3, 2}, 24, false));
  std::vector<FdCase> cases{
      {"linear", [&](const Tensor<double>& x) { return linear(x, w, b); }},
      {"softmax", [&](const Tensor<double>& x) { return mul(softmax(x), other); }},
      {"elu", [](const Tensor<double>& x) { return elu(x); }},
      {"relu", [](const Tensor<double>& x) { return relu(x); }},
      {"tanh", [](const Tensor<double>& x) { return tanh(x); }},
      {"sigmoid", [](const Tensor<double>& x) { return sigmoid(x); }},
      {"mul", [&](const Tensor<double>& x) { return mul(x, x); }},
      {"sub", [&](const Tensor<double>& x) { return sub(mul(x, other), x); }},
      {"concat", [&](const Tensor<double>& x) { return mul(concat({x, x}, 1), concat({other, x}, 1)); }},
      {"reduce_sum", [](const Tensor<double>& x) { return mul(reduce_sum(x, 0), reduce_sum(x, 0)); }},
      {"mean", [](const Tensor<double>& x) { return mul(mean(x, 1), mean(x, 1)); }},
      {"scale", [](const Tensor<double>& x) { return add_scalar(scale(mul(x, x), 0.5), 1.0); }},
      {"select", [](const Tensor<double>& x) { return mul(select(x, 2), select(x, 0)); }},
      {"slice", [](const Tensor<double>& x) { return mul(slice_last(x, 1, 2), slice_last(x, 2, 2)); }},
      {"weighted_sum",
       [&](const Tensor<double>& x) {
         auto v = reshape(concat({x, x}, 1), {3, 2, 4});
         return mul(weighted_sum(weights, v), weighted_sum(softmax(slice_last(x, 0, 2)), v));
       }},
      {"cross_entropy", [](const Tensor<double>& x) { return cross_entropy(reshape(x, {12}), 5); }},
      {"squared_error", [](const Tensor<double>& x) { return squared_error(sum(x), 1.5); }},
  };
  for (const auto& c : cases) {
    auto x = random_tensor({3, 4}, 25);
    auto loss = [&] { return sum(mul(c.f(x), c.f(x))); };
    EXPECT_LT(oracle::fd_max_error(x, loss), 1e-5) << c.name;
  }
}
