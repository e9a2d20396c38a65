#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include <json.hpp>

#include "dpvqa/mac.hpp"
#include "dpvqa/ops.hpp"
#include "oracles.hpp"

using namespace dpvqa;

namespace {

Tensor<double> randn(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = normal(rng);
  return Tensor<double>::from_data(std::move(shape), std::move(v));
}

std::vector<double> softmax(const std::vector<double>& z) {
  double mx = *std::max_element(z.begin(), z.end()), s = 0;
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s += out[i] = std::exp(z[i] - mx);
  for (auto& v : out) v /= s;
  return out;
}

double dot(const std::vector<double>& a, std::size_t off, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < b.size(); ++i) s += a[off + i] * b[i];
  return s;
}

struct Fixture {
  static constexpr std::size_t d = 5;
  ParamStore<double> store{17};
  MacReasoner<double> mac{store, MacConfig{d, 3}};
  // Non-zero initial states exercise every term of the units.
  Fixture() {
    for (auto& v : mac.control_init.mutable_data()) v = 0.3;
    for (auto& v : mac.memory_init.mutable_data()) v = -0.2;
    for (auto& v : mac.control_attn_b.mutable_data()) v = 0.1;
  }
};

}  // namespace

TEST(Mac, InitialStateIsLearnedZeroVector) {
  ParamStore<float> store(1);
  MacReasoner<float> mac(store, MacConfig{4, 2});
  auto s = mac.initial_state();
  for (float v : s.control.data()) EXPECT_EQ(v, 0.0f);
  for (float v : s.memory.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_TRUE(store.contains("mac.c0"));
  EXPECT_TRUE(store.contains("mac.m0"));
  EXPECT_TRUE(store.contains("mac.q2.w"));
  EXPECT_FALSE(store.contains("mac.q3.w"));
  EXPECT_THROW(MacReasoner<float>(store, MacConfig{4, 0}, "other"), ContractError);
}

TEST(Mac, ControlUnitMatchesOracle) {
  Fixture f;
  const std::size_t d = Fixture::d, S = 4;
  auto words = randn({S, d}, 1), q = randn({d}, 2), c_prev = randn({d}, 3);
  auto [c, alpha] = f.mac.control_unit(q, words, c_prev);

  auto w = oracle::values(words);
  auto proj = oracle::linear<double>(oracle::values(c_prev), d, oracle::values(f.mac.control_w0), d,
                                     nullptr);
  auto qv = oracle::values(q);
  proj.insert(proj.end(), qv.begin(), qv.end());
  auto fi = oracle::linear<double>(proj, 2 * d, oracle::values(f.mac.control_w1), d, nullptr);
  auto aw = oracle::values(f.mac.control_attn_w);
  std::vector<double> logits(S);
  for (std::size_t s = 0; s < S; ++s) {
    std::vector<double> prod(d);
    for (std::size_t i = 0; i < d; ++i) prod[i] = w[s * d + i] * fi[i];
    logits[s] = dot(prod, 0, aw) + f.mac.control_attn_b[0];
  }
  auto expected_alpha = softmax(logits);
  for (std::size_t s = 0; s < S; ++s) EXPECT_NEAR(alpha[s], expected_alpha[s], 1e-12);
  for (std::size_t i = 0; i < d; ++i) {
    double ci = 0;
    for (std::size_t s = 0; s < S; ++s) ci += expected_alpha[s] * w[s * d + i];
    EXPECT_NEAR(c[i], ci, 1e-12);
  }
}

TEST(Mac, ReadUnitMatchesOracle) {
  Fixture f;
  const std::size_t d = Fixture::d, cells = 6;
  auto grid = randn({3, 2, d}, 4), m = randn({d}, 5), c = randn({d}, 6);
  auto [r, alpha] = f.mac.read_unit(m, KnowledgeBase<double>{grid}, c);
  ASSERT_EQ(alpha.numel(), cells);

  auto g = oracle::values(grid), mv = oracle::values(m), cv = oracle::values(c);
  auto rw = oracle::values(f.mac.read_w), aw = oracle::values(f.mac.read_attn_w);
  std::vector<double> logits(cells);
  for (std::size_t k = 0; k < cells; ++k) {
    std::vector<double> inter(2 * d);
    for (std::size_t i = 0; i < d; ++i) {
      inter[i] = g[k * d + i] * mv[i];
      inter[d + i] = g[k * d + i];
    }
    auto proj = oracle::linear<double>(inter, 2 * d, rw, d, nullptr);
    for (std::size_t i = 0; i < d; ++i) proj[i] *= cv[i];
    logits[k] = dot(proj, 0, aw) + f.mac.read_attn_b[0];
  }
  auto expected_alpha = softmax(logits);
  for (std::size_t k = 0; k < cells; ++k) EXPECT_NEAR(alpha[k], expected_alpha[k], 1e-12);
  for (std::size_t i = 0; i < d; ++i) {
    double ri = 0;
    for (std::size_t k = 0; k < cells; ++k) ri += expected_alpha[k] * g[k * d + i];
    EXPECT_NEAR(r[i], ri, 1e-12);
  }
}

TEST(Mac, WriteUnitMatchesOracle) {
  Fixture f;
  const std::size_t d = Fixture::d;
  auto m = randn({d}, 7), r = randn({d}, 8);
  auto out = f.mac.write_unit(m, r);
  auto joined = oracle::values(m);
  auto rv = oracle::values(r);
  joined.insert(joined.end(), rv.begin(), rv.end());
  auto b = oracle::values(f.mac.write_b);
  auto expected = oracle::linear(joined, 2 * d, oracle::values(f.mac.write_w), d, &b);
  for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(out[i], expected[i], 1e-12);
  EXPECT_THROW(f.mac.write_unit(m, randn({d + 1}, 9)), DimensionError);
}

TEST(Mac, RunChainsUnitsAndRecordsAttention) {
  Fixture f;
  const std::size_t d = Fixture::d;
  EncodedQuestion<double> q{randn({4, d}, 10), randn({d}, 11)};
  KnowledgeBase<double> kb{randn({2, 3, d}, 12)};
  auto result = f.mac.run(q, kb);
  ASSERT_EQ(result.trace.steps(), 3u);
  EXPECT_EQ(result.trace.grid_width, 2u);
  EXPECT_EQ(result.trace.grid_height, 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    double ws = 0, ls = 0;
    for (double v : result.trace.word_weights[i]) ws += v;
    for (double v : result.trace.location_weights[i]) ls += v;
    EXPECT_NEAR(ws, 1.0, 1e-12);
    EXPECT_NEAR(ls, 1.0, 1e-12);
  }
  // Unrolled by hand.
  auto state = f.mac.initial_state();
  for (std::size_t i = 1; i <= 3; ++i) {
    auto c = f.mac.control_unit(f.mac.project_question(q.question, i), q.words, state.control).first;
    auto r = f.mac.read_unit(state.memory, kb, c).first;
    state = {c, f.mac.write_unit(state.memory, r), i};
  }
  for (std::size_t i = 0; i < d; ++i) EXPECT_EQ(result.memory[i], state.memory[i]);
  EXPECT_EQ(result.final_state.step, 3u);
  EXPECT_EQ(f.mac.run(q, kb, 1).trace.steps(), 1u);
  EXPECT_THROW(f.mac.run(q, kb, 4), ContractError);
  EXPECT_THROW(f.mac.project_question(q.question, 0), ContractError);
}

TEST(Mac, RejectsEmptyInputs) {
  Fixture f;
  const std::size_t d = Fixture::d;
  EXPECT_THROW(f.mac.control_unit(randn({d}, 1), Tensor<double>(), randn({d}, 2)), ContractError);
  EXPECT_THROW(f.mac.read_unit(randn({d}, 1), KnowledgeBase<double>{}, randn({d}, 2)),
               ContractError);
  EXPECT_THROW(f.mac.control_unit(randn({d}, 1), randn({2, d + 1}, 3), randn({d}, 2)),
               DimensionError);
}

TEST(Mac, TraceJsonLines) {
  AttentionTrace t;
  t.grid_width = 2;
  t.grid_height = 1;
  t.word_weights = {{0.25, 0.75}};
  t.location_weights = {{0.5, 0.5}};
  std::ostringstream out;
  write_trace(out, t);
  auto j = nlohmann::json::parse(out.str());
  EXPECT_EQ(j["step"], 1);
  EXPECT_EQ(j["word_weights"][1], 0.75);
  EXPECT_EQ(j["location_weights"].size(), 2u);
  EXPECT_EQ(j["location_weights"][1][0], 0.5);
}
