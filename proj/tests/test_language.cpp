#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dpvqa/language.hpp"
#include "dpvqa/ops.hpp"
#include "oracles.hpp"

using namespace dpvqa;

TEST(Tokenize, LowercasesAndSplitsOnPunctuation) {
  EXPECT_EQ(tokenize("What color is the Red cube?"),
            (std::vector<std::string>{"what", "color", "is", "the", "red", "cube"}));
  EXPECT_EQ(tokenize("move-left,  stop"), (std::vector<std::string>{"move", "left", "stop"}));
  EXPECT_TRUE(tokenize("  ?! ").empty());
}

TEST(Vocabulary, ReservedIndicesAndLookup) {
  auto v = Vocabulary::build({{"the", "cube"}, {"a", "cube"}}, {"yes", "no"});
  EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.token(Vocabulary::kUnknown), "<unk>");
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.token_index("a"), 2u);  // sorted insertion
  EXPECT_EQ(v.token_index("zebra"), Vocabulary::kUnknown);
  EXPECT_EQ(v.encode({"cube", "zebra"}), (std::vector<std::size_t>{3, 1}));
  EXPECT_THROW(v.token(99), VocabularyError);
  EXPECT_EQ(v.answer(v.answer_index("no")), "no");
  EXPECT_THROW(v.answer_index("maybe"), VocabularyError);
  EXPECT_THROW(v.answer(7), VocabularyError);
  EXPECT_EQ(v.add_token("cube"), v.token_index("cube"));
}

TEST(Vocabulary, IndependentOfQuestionOrder) {
  auto a = Vocabulary::build({{"b", "a"}, {"c"}}, {"x"});
  auto b = Vocabulary::build({{"c"}, {"a", "b"}}, {"x"});
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.token(i), b.token(i));
}

TEST(Lstm, BidirectionalMatchesScalarOracle) {
  ParamStore<double> store(5);
  const std::size_t e = 3, h = 4, S = 5;
  auto fwd = make_lstm_direction(store, "f", e, h);
  auto bwd = make_lstm_direction(store, "b", e, h);
  std::vector<double> seq(S * e);
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = std::sin(0.7 * static_cast<double>(i));
  auto out = bilstm(Tensor<double>::from_data({S, e}, seq), fwd, bwd);
  ASSERT_EQ(out.states.shape(), (Shape{S, 2 * h}));

  auto scalar = [&](const LstmDirection<double>& d) {
    return oracle::ScalarLstm{h, e, oracle::values(d.w_ih), oracle::values(d.w_hh),
                              oracle::values(d.bias)};
  };
  auto of = scalar(fwd), ob = scalar(bwd);
  std::vector<std::vector<double>> hf(S), hb(S);
  std::vector<double> hh(h, 0.0), cc(h, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    of.step({seq.begin() + s * e, seq.begin() + (s + 1) * e}, hh, cc);
    hf[s] = hh;
  }
  hh.assign(h, 0.0);
  cc.assign(h, 0.0);
  for (std::size_t s = S; s-- > 0;) {
    ob.step({seq.begin() + s * e, seq.begin() + (s + 1) * e}, hh, cc);
    hb[s] = hh;
  }
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t u = 0; u < h; ++u) {
      EXPECT_NEAR(out.states[s * 2 * h + u], hf[s][u], 1e-12);
      EXPECT_NEAR(out.states[s * 2 * h + h + u], hb[s][u], 1e-12);
    }
  }
  for (std::size_t u = 0; u < h; ++u) {
    EXPECT_NEAR(out.final_fwd[u], hf[S - 1][u], 1e-12);
    EXPECT_NEAR(out.final_bwd[u], hb[0][u], 1e-12);
  }
}

TEST(Lstm, EmptySequenceRejected) {
  ParamStore<float> store(1);
  auto d = make_lstm_direction(store, "x", 2, 2);
  EXPECT_THROW(bilstm(Tensor<float>::zeros({0, 2}), d, d), std::exception);
}

TEST(LanguageEncoder, ShapesAndQuestionVectorLayout) {
  ParamStore<double> store(3);
  LanguageEncoder<double> enc(store, {10, 4, 6, 8});
  std::vector<std::size_t> toks{2, 5, 7};
  auto q = enc.encode(std::span<const std::size_t>(toks));
  EXPECT_EQ(q.words.shape(), (Shape{3, 6}));
  ASSERT_EQ(q.question.numel(), 6u);
  auto emb = enc.embed(std::span<const std::size_t>(toks));
  auto direct = bilstm(emb, enc.forward_direction(), enc.backward_direction());
  for (std::size_t u = 0; u < 3; ++u) {
    EXPECT_EQ(q.question[u], direct.final_bwd[u]);
    EXPECT_EQ(q.question[3 + u], direct.final_fwd[u]);
  }
}

TEST(LanguageEncoder, RejectsBadInput) {
  ParamStore<float> store(3);
  EXPECT_THROW(LanguageEncoder<float>(store, {10, 4, 5, 8}), ContractError);
  LanguageEncoder<float> enc(store, {10, 4, 6, 3});
  std::vector<std::size_t> bad{2, 10};
  EXPECT_THROW(enc.embed(std::span<const std::size_t>(bad)), VocabularyError);
  std::vector<std::size_t> empty;
  EXPECT_THROW(enc.encode(std::span<const std::size_t>(empty)), ContractError);
  std::vector<std::size_t> too_long{2, 3, 4, 5};
  EXPECT_THROW(enc.encode(std::span<const std::size_t>(too_long)), ContractError);
}

TEST(LanguageEncoder, LoadsEmbeddingRows) {
  auto vocab = Vocabulary::build({{"cube", "red"}}, {"yes"});
  ParamStore<float> store(3);
  LanguageEncoder<float> enc(store, {vocab.size(), 2, 4, 8});
  const auto path = std::filesystem::temp_directory_path() / "dpvqa_emb.txt";
  {
    std::ofstream out(path);
    out << "cube 0.5 -0.25\nunseen 1 1\n";
  }
  EXPECT_EQ(enc.load_embeddings(path.string(), vocab), 1u);
  const std::size_t row = vocab.token_index("cube");
  EXPECT_EQ(enc.table()[row * 2], 0.5f);
  EXPECT_EQ(enc.table()[row * 2 + 1], -0.25f);
  {
    std::ofstream out(path);
    out << "cube 0.5\n";
  }
  EXPECT_THROW(enc.load_embeddings(path.string(), vocab), FormatError);
  std::filesystem::remove(path);
}
