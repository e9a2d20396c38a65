#pragma once

#include <span>
#include <string>

#include "dpvqa/param_store.hpp"

namespace dpvqa {

enum class AnswerKind { open_ended, count, multichoice };

template <class T>
struct AnswerLogits {
  AnswerKind kind = AnswerKind::open_ended;
  Tensor<T> values;  // probabilities [V], score [1], or candidate scores [n]
};

inline constexpr int kMaxCount = 10;

/// Count prediction: round to nearest, clamp onto the labels 0..10.
int count_prediction(double score);

// Two stacked linear layers over [m_P ; W^q q + b^q]; hidden width d.
template <class T>
class OpenEndedHead {
 public:
  OpenEndedHead(ParamStore<T>& store, std::size_t dim, std::size_t labels,
                const std::string& prefix = "open");

  Tensor<T> logits(const Tensor<T>& memory, const Tensor<T>& question) const;
  /// softmax(logits); a valid distribution over the answer space.
  Tensor<T> probabilities(const Tensor<T>& memory, const Tensor<T>& question) const;

  std::size_t labels() const { return out_w.extent(0); }

  Tensor<T> q_w, q_b, hidden_w, hidden_b, out_w, out_b;
};

// Same layout as the open-ended head with a single real output.
template <class T>
class CountHead {
 public:
  CountHead(ParamStore<T>& store, std::size_t dim, const std::string& prefix = "count");

  /// Un-rounded regression output s, shape [1]; train with squared_error.
  Tensor<T> score(const Tensor<T>& memory, const Tensor<T>& question) const;
  int predict(const Tensor<T>& memory, const Tensor<T>& question) const;

  Tensor<T> q_w, q_b, hidden_w, hidden_b, out_w, out_b;
};

// Scores one answer candidate from [m_q ; m_a ; W^q q + b^q ; W^a a + b^a]
// through an ELU layer and a linear read-out.
template <class T>
class MultiChoiceHead {
 public:
  MultiChoiceHead(ParamStore<T>& store, std::size_t dim, const std::string& prefix = "choice");

  Tensor<T> score(const Tensor<T>& question_memory, const Tensor<T>& answer_memory,
                  const Tensor<T>& question, const Tensor<T>& answer) const;

  /// Scores for every candidate, shape [n]; ContractError when n < 2.
  Tensor<T> scores(const Tensor<T>& question_memory, const Tensor<T>& question,
                   std::span<const Tensor<T>> answer_memories,
                   std::span<const Tensor<T>> answers) const;

  Tensor<T> q_w, q_b, a_w, a_b, y_w, y_b, s_w, s_b;
};

/// Σ_n max(0, 1 + s_n − s_p), shape [1].
template <class T>
Tensor<T> hinge_loss(const Tensor<T>& positive, std::span<const Tensor<T>> negatives);

/// Hinge loss over a score vector with the correct candidate at `correct`.
template <class T>
Tensor<T> hinge_loss(const Tensor<T>& scores, std::size_t correct);

extern template class OpenEndedHead<float>;
extern template class OpenEndedHead<double>;
extern template class CountHead<float>;
extern template class CountHead<double>;
extern template class MultiChoiceHead<float>;
extern template class MultiChoiceHead<double>;

}  // namespace dpvqa
