#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dpvqa/lstm.hpp"

namespace dpvqa {

/// Lowercases and splits on whitespace and punctuation.
std::vector<std::string> tokenize(const std::string& text);

// Word index plus the answer-label space. Index 0 is padding and index 1 the
// unknown token; every other token maps to exactly one index.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnknown = 1;

  Vocabulary();

  /// Tokens are inserted in sorted order so the result depends only on the corpus.
  static Vocabulary build(const std::vector<std::vector<std::string>>& questions,
                          const std::vector<std::string>& answer_labels);

  std::size_t add_token(const std::string& token);
  std::size_t token_index(const std::string& token) const;  // kUnknown when absent
  const std::string& token(std::size_t index) const;
  std::size_t size() const { return tokens_.size(); }
  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;

  std::size_t add_answer(const std::string& label);
  /// Throws VocabularyError for labels outside the answer space.
  std::size_t answer_index(const std::string& label) const;
  const std::string& answer(std::size_t index) const;
  std::size_t answer_count() const { return answers_.size(); }
  const std::vector<std::string>& answers() const { return answers_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> token_ids_;
  std::vector<std::string> answers_;
  std::unordered_map<std::string, std::size_t> answer_ids_;
};

template <class T>
struct EncodedQuestion {
  Tensor<T> words;     // [S, d] contextual word states
  Tensor<T> question;  // [d] = [final backward ; final forward]
};

struct LanguageConfig {
  std::size_t vocab_size = 2;
  std::size_t embed_dim = 300;
  std::size_t dim = 512;  // total over both directions
  std::size_t max_length = 64;
};

template <class T>
class LanguageEncoder {
 public:
  LanguageEncoder(ParamStore<T>& store, const LanguageConfig& config,
                  const std::string& prefix = "lang");

  /// Row lookup into the embedding table; VocabularyError on out-of-range ids.
  Tensor<T> embed(std::span<const std::size_t> tokens) const;
  EncodedQuestion<T> encode(std::span<const std::size_t> tokens) const;

  /// Loads "token v1 … ve" lines for tokens present in `vocab`; returns rows replaced.
  std::size_t load_embeddings(const std::string& path, const Vocabulary& vocab);

  const LanguageConfig& config() const { return config_; }
  Tensor<T>& table() { return table_; }
  LstmDirection<T>& forward_direction() { return fwd_; }
  LstmDirection<T>& backward_direction() { return bwd_; }

 private:
  LanguageConfig config_;
  Tensor<T> table_;
  LstmDirection<T> fwd_;
  LstmDirection<T> bwd_;
};

extern template class LanguageEncoder<float>;
extern template class LanguageEncoder<double>;

}  // namespace dpvqa
