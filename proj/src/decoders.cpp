#include "dpvqa/decoders.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dpvqa/ops.hpp"

namespace dpvqa {

int count_prediction(double score) {
  if (!std::isfinite(score)) return score > 0 ? kMaxCount : 0;
  double r = std::round(score);
  return static_cast<int>(std::clamp(r, 0.0, static_cast<double>(kMaxCount)));
}

template <class T>
OpenEndedHead<T>::OpenEndedHead(ParamStore<T>& store, std::size_t dim, std::size_t labels,
                                const std::string& prefix) {
  if (labels < 2) throw ContractError("open-ended head needs at least 2 labels");
  q_w = store.add(prefix + ".q.w", {dim, dim}, Init::fan_in_uniform);
  q_b = store.add(prefix + ".q.b", {dim}, Init::zeros);
  hidden_w = store.add(prefix + ".o1.w", {dim, 2 * dim}, Init::fan_in_uniform);
  hidden_b = store.add(prefix + ".o1.b", {dim}, Init::zeros);
  out_w = store.add(prefix + ".o2.w", {labels, dim}, Init::fan_in_uniform);
  out_b = store.add(prefix + ".o2.b", {labels}, Init::zeros);
}

template <class T>
Tensor<T> OpenEndedHead<T>::logits(const Tensor<T>& memory, const Tensor<T>& question) const {
  auto joined = concat<T>({memory, linear(question, q_w, q_b)}, 0);
  return linear(linear(joined, hidden_w, hidden_b), out_w, out_b);
}

template <class T>
Tensor<T> OpenEndedHead<T>::probabilities(const Tensor<T>& memory,
                                          const Tensor<T>& question) const {
  return softmax(logits(memory, question));
}

template <class T>
CountHead<T>::CountHead(ParamStore<T>& store, std::size_t dim, const std::string& prefix) {
  q_w = store.add(prefix + ".q.w", {dim, dim}, Init::fan_in_uniform);
  q_b = store.add(prefix + ".q.b", {dim}, Init::zeros);
  hidden_w = store.add(prefix + ".o1.w", {dim, 2 * dim}, Init::fan_in_uniform);
  hidden_b = store.add(prefix + ".o1.b", {dim}, Init::zeros);
  out_w = store.add(prefix + ".o2.w", {1, dim}, Init::fan_in_uniform);
  out_b = store.add(prefix + ".o2.b", {1}, Init::zeros);
}

template <class T>
Tensor<T> CountHead<T>::score(const Tensor<T>& memory, const Tensor<T>& question) const {
  auto joined = concat<T>({memory, linear(question, q_w, q_b)}, 0);
  return linear(linear(joined, hidden_w, hidden_b), out_w, out_b);
}

template <class T>
int CountHead<T>::predict(const Tensor<T>& memory, const Tensor<T>& question) const {
  return count_prediction(static_cast<double>(score(memory, question).item()));
}

template <class T>
MultiChoiceHead<T>::MultiChoiceHead(ParamStore<T>& store, std::size_t dim,
                                    const std::string& prefix) {
  q_w = store.add(prefix + ".q.w", {dim, dim}, Init::fan_in_uniform);
  q_b = store.add(prefix + ".q.b", {dim}, Init::zeros);
  a_w = store.add(prefix + ".a.w", {dim, dim}, Init::fan_in_uniform);
  a_b = store.add(prefix + ".a.b", {dim}, Init::zeros);
  y_w = store.add(prefix + ".y.w", {dim, 4 * dim}, Init::fan_in_uniform);
  y_b = store.add(prefix + ".y.b", {dim}, Init::zeros);
  s_w = store.add(prefix + ".s.w", {1, dim}, Init::fan_in_uniform);
  s_b = store.add(prefix + ".s.b", {1}, Init::zeros);
}

template <class T>
Tensor<T> MultiChoiceHead<T>::score(const Tensor<T>& question_memory,
                                    const Tensor<T>& answer_memory, const Tensor<T>& question,
                                    const Tensor<T>& answer) const {
  auto y = concat<T>({question_memory, answer_memory, linear(question, q_w, q_b),
                      linear(answer, a_w, a_b)},
                     0);
  auto hidden = elu(linear(y, y_w, y_b));
  return linear(hidden, s_w, s_b);
}

template <class T>
Tensor<T> MultiChoiceHead<T>::scores(const Tensor<T>& question_memory, const Tensor<T>& question,
                                     std::span<const Tensor<T>> answer_memories,
                                     std::span<const Tensor<T>> answers) const {
  if (answers.size() < 2 || answer_memories.size() != answers.size()) {
    throw ContractError("multi-choice decoding needs at least 2 candidates, got " +
                        std::to_string(answers.size()));
  }
  std::vector<Tensor<T>> parts;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    parts.push_back(score(question_memory, answer_memories[i], question, answers[i]));
  }
  return concat(std::span<const Tensor<T>>(parts), 0);
}

template <class T>
Tensor<T> hinge_loss(const Tensor<T>& positive, std::span<const Tensor<T>> negatives) {
  if (negatives.empty()) throw ContractError("hinge_loss: at least one negative score required");
  std::vector<Tensor<T>> terms;
  for (const auto& n : negatives) terms.push_back(relu(add_scalar(sub(n, positive), T(1))));
  if (terms.size() == 1) return terms[0];
  return add_n(std::span<const Tensor<T>>(terms));
}

template <class T>
Tensor<T> hinge_loss(const Tensor<T>& scores, std::size_t correct) {
  const std::size_t n = scores.numel();
  if (correct >= n) throw ContractError("hinge_loss: correct index outside score vector");
  std::vector<Tensor<T>> negatives;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != correct) negatives.push_back(select(scores, i));
  }
  return hinge_loss(select(scores, correct), std::span<const Tensor<T>>(negatives));
}

template class OpenEndedHead<float>;
template class OpenEndedHead<double>;
template class CountHead<float>;
template class CountHead<double>;
template class MultiChoiceHead<float>;
template class MultiChoiceHead<double>;
template Tensor<float> hinge_loss(const Tensor<float>&, std::span<const Tensor<float>>);
template Tensor<double> hinge_loss(const Tensor<double>&, std::span<const Tensor<double>>);
template Tensor<float> hinge_loss(const Tensor<float>&, std::size_t);
template Tensor<double> hinge_loss(const Tensor<double>&, std::size_t);

}  // namespace dpvqa
