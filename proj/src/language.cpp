#include "dpvqa/language.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "dpvqa/ops.hpp"

namespace dpvqa {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

Vocabulary::Vocabulary() {
  add_token("<pad>");
  add_token("<unk>");
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& questions,
                             const std::vector<std::string>& answer_labels) {
  std::set<std::string> unique;
  for (const auto& q : questions) unique.insert(q.begin(), q.end());
  Vocabulary v;
  for (const auto& t : unique) v.add_token(t);
  for (const auto& a : answer_labels) v.add_answer(a);
  return v;
}

std::size_t Vocabulary::add_token(const std::string& token) {
  auto it = token_ids_.find(token);
  if (it != token_ids_.end()) return it->second;
  tokens_.push_back(token);
  token_ids_.emplace(token, tokens_.size() - 1);
  return tokens_.size() - 1;
}

std::size_t Vocabulary::token_index(const std::string& token) const {
  auto it = token_ids_.find(token);
  return it == token_ids_.end() ? kUnknown : it->second;
}

const std::string& Vocabulary::token(std::size_t index) const {
  if (index >= tokens_.size()) {
    throw VocabularyError("token index " + std::to_string(index) + " outside vocabulary of size " +
                          std::to_string(tokens_.size()));
  }
  return tokens_[index];
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(token_index(t));
  return ids;
}

std::size_t Vocabulary::add_answer(const std::string& label) {
  auto it = answer_ids_.find(label);
  if (it != answer_ids_.end()) return it->second;
  answers_.push_back(label);
  answer_ids_.emplace(label, answers_.size() - 1);
  return answers_.size() - 1;
}

std::size_t Vocabulary::answer_index(const std::string& label) const {
  auto it = answer_ids_.find(label);
  if (it == answer_ids_.end()) throw VocabularyError("answer '" + label + "' not in answer space");
  return it->second;
}

const std::string& Vocabulary::answer(std::size_t index) const {
  if (index >= answers_.size()) {
    throw VocabularyError("answer index " + std::to_string(index) + " outside answer space");
  }
  return answers_[index];
}

template <class T>
LanguageEncoder<T>::LanguageEncoder(ParamStore<T>& store, const LanguageConfig& config,
                                    const std::string& prefix)
    : config_(config) {
  if (config.dim == 0 || config.dim % 2 != 0) {
    throw ContractError("language encoder: hidden size " + std::to_string(config.dim) +
                        " must be even (two directions)");
  }
  table_ = store.add(prefix + ".embedding", {config.vocab_size, config.embed_dim},
                     Init::unit_uniform);
  fwd_ = make_lstm_direction(store, prefix + ".fwd", config.embed_dim, config.dim / 2);
  bwd_ = make_lstm_direction(store, prefix + ".bwd", config.embed_dim, config.dim / 2);
}

template <class T>
Tensor<T> LanguageEncoder<T>::embed(std::span<const std::size_t> tokens) const {
  for (auto id : tokens) {
    if (id >= config_.vocab_size) {
      throw VocabularyError("token id " + std::to_string(id) + " outside embedding table of " +
                            std::to_string(config_.vocab_size) + " rows");
    }
  }
  return index_select(table_, tokens);
}

template <class T>
EncodedQuestion<T> LanguageEncoder<T>::encode(std::span<const std::size_t> tokens) const {
  if (tokens.empty()) throw ContractError("encode_question: empty question");
  if (tokens.size() > config_.max_length) {
    throw ContractError("encode_question: " + std::to_string(tokens.size()) +
                        " tokens exceed the configured maximum of " +
                        std::to_string(config_.max_length));
  }
  auto out = bilstm(embed(tokens), fwd_, bwd_);
  return {out.states, concat<T>({out.final_bwd, out.final_fwd}, 0)};
}

template <class T>
std::size_t LanguageEncoder<T>::load_embeddings(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding file " + path);
  const std::size_t width = config_.embed_dim;
  auto data = table_.mutable_data();
  std::size_t loaded = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    double v;
    while (fields >> v) values.push_back(v);
    if (values.size() != width) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(width) + " values, found " + std::to_string(values.size()));
    }
    std::size_t id = vocab.token_index(token);
    if (id == Vocabulary::kUnknown && token != "<unk>") continue;
    if (id >= config_.vocab_size) continue;
    for (std::size_t k = 0; k < width; ++k) data[id * width + k] = static_cast<T>(values[k]);
    ++loaded;
  }
  return loaded;
}

template class LanguageEncoder<float>;
template class LanguageEncoder<double>;

}  // namespace dpvqa
