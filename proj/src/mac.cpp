#include "dpvqa/mac.hpp"

#include <ostream>

#include <json.hpp>

#include "dpvqa/ops.hpp"

namespace dpvqa {

void write_trace(std::ostream& out, const AttentionTrace& trace) {
  for (std::size_t i = 0; i < trace.steps(); ++i) {
    nlohmann::json grid = nlohmann::json::array();
    for (std::size_t x = 0; x < trace.grid_width; ++x) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t y = 0; y < trace.grid_height; ++y) {
        row.push_back(trace.location_weights[i][x * trace.grid_height + y]);
      }
      grid.push_back(std::move(row));
    }
    nlohmann::json rec = {{"step", i + 1},
                          {"word_weights", trace.word_weights[i]},
                          {"location_weights", std::move(grid)}};
    out << rec.dump() << '\n';
  }
}

template <class T>
MacReasoner<T>::MacReasoner(ParamStore<T>& store, const MacConfig& config,
                            const std::string& prefix)
    : config_(config) {
  const std::size_t d = config.dim;
  if (d == 0) throw ContractError("mac: dimension must be positive");
  if (config.steps == 0) throw ContractError("mac: P must be at least 1");
  for (std::size_t i = 1; i <= config.steps; ++i) {
    std::string p = prefix + ".q" + std::to_string(i);
    step_w.push_back(store.add(p + ".w", {d, d}, Init::fan_in_uniform));
    step_b.push_back(store.add(p + ".b", {d}, Init::zeros));
  }
  control_w0 = store.add(prefix + ".control.w0", {d, d}, Init::fan_in_uniform);
  control_w1 = store.add(prefix + ".control.w1", {d, 2 * d}, Init::fan_in_uniform);
  control_attn_w = store.add(prefix + ".control.attn_w", {1, d}, Init::fan_in_uniform);
  control_attn_b = store.add(prefix + ".control.attn_b", {1}, Init::zeros);
  read_w = store.add(prefix + ".read.w", {d, 2 * d}, Init::fan_in_uniform);
  read_attn_w = store.add(prefix + ".read.attn_w", {1, d}, Init::fan_in_uniform);
  read_attn_b = store.add(prefix + ".read.attn_b", {1}, Init::zeros);
  write_w = store.add(prefix + ".write.w", {d, 2 * d}, Init::fan_in_uniform);
  write_b = store.add(prefix + ".write.b", {d}, Init::zeros);
  control_init = store.add(prefix + ".c0", {d}, Init::zeros);
  memory_init = store.add(prefix + ".m0", {d}, Init::zeros);
}

template <class T>
Tensor<T> MacReasoner<T>::project_question(const Tensor<T>& question, std::size_t step) const {
  if (step < 1 || step > step_w.size()) {
    throw ContractError("project_question: step " + std::to_string(step) + " outside [1, " +
                        std::to_string(step_w.size()) + "]");
  }
  return linear(question, step_w[step - 1], step_b[step - 1]);
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> MacReasoner<T>::control_unit(const Tensor<T>& step_question,
                                                             const Tensor<T>& words,
                                                             const Tensor<T>& prev_control) const {
  const std::size_t d = config_.dim;
  if (!words.defined() || words.rank() != 2 || words.extent(0) == 0) {
    throw ContractError("control_unit: question has no words");
  }
  if (words.extent(1) != d || step_question.numel() != d || prev_control.numel() != d) {
    throw DimensionError("control_unit: words " + shape_str(words.shape()) + ", q_i " +
                         shape_str(step_question.shape()) + ", c " +
                         shape_str(prev_control.shape()) + " inconsistent with d=" +
                         std::to_string(d));
  }
  const std::size_t S = words.extent(0);
  auto joined = concat<T>({linear(prev_control, control_w0), step_question}, 0);
  auto f = linear(joined, control_w1);                                   // F_i [d]
  auto logits = linear(mul(words, f), control_attn_w, control_attn_b);   // [S, 1]
  auto alpha = softmax(reshape(logits, {S}));
  auto c = weighted_sum(reshape(alpha, {1, S}), reshape(words, {1, S, d}));
  return {reshape(c, {d}), alpha};
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> MacReasoner<T>::read_unit(const Tensor<T>& prev_memory,
                                                          const KnowledgeBase<T>& kb,
                                                          const Tensor<T>& control) const {
  const std::size_t d = config_.dim;
  if (!kb.grid.defined() || kb.grid.numel() == 0) {
    throw ContractError("read_unit: empty knowledge base");
  }
  if (kb.grid.shape().back() != d || prev_memory.numel() != d || control.numel() != d) {
    throw DimensionError("read_unit: knowledge base " + shape_str(kb.grid.shape()) +
                         " inconsistent with d=" + std::to_string(d));
  }
  const std::size_t cells = kb.grid.numel() / d;
  auto cells_t = reshape(kb.grid, {cells, d});
  auto interaction = concat<T>({mul(cells_t, prev_memory), cells_t}, 1);  // [WH, 2d]
  auto projected = linear(interaction, read_w);                          // [WH, d]
  auto logits = linear(mul(projected, control), read_attn_w, read_attn_b);
  auto alpha = softmax(reshape(logits, {cells}));
  auto r = weighted_sum(reshape(alpha, {1, cells}), reshape(cells_t, {1, cells, d}));
  return {reshape(r, {d}), alpha};
}

template <class T>
Tensor<T> MacReasoner<T>::write_unit(const Tensor<T>& prev_memory,
                                     const Tensor<T>& retrieved) const {
  if (prev_memory.numel() != config_.dim || retrieved.numel() != config_.dim) {
    throw DimensionError("write_unit: memory " + shape_str(prev_memory.shape()) +
                         " and retrieved " + shape_str(retrieved.shape()) + " must both have d=" +
                         std::to_string(config_.dim));
  }
  return linear(concat<T>({prev_memory, retrieved}, 0), write_w, write_b);
}

template <class T>
MacResult<T> MacReasoner<T>::run(const EncodedQuestion<T>& question, const KnowledgeBase<T>& kb,
                                 std::size_t steps) const {
  if (steps == 0) steps = config_.steps;
  if (steps > step_w.size()) {
    throw ContractError("run_mac: P=" + std::to_string(steps) + " exceeds the " +
                        std::to_string(step_w.size()) + " configured steps");
  }
  MacResult<T> out;
  const auto& gs = kb.grid.shape();
  out.trace.grid_width = gs.size() >= 3 ? gs[0] : 1;
  out.trace.grid_height = gs.size() >= 3 ? gs[1] : kb.grid.numel() / config_.dim;
  MacState<T> state = initial_state();
  for (std::size_t i = 1; i <= steps; ++i) {
    auto q_i = project_question(question.question, i);
    auto [c, word_alpha] = control_unit(q_i, question.words, state.control);
    auto [r, read_alpha] = read_unit(state.memory, kb, c);
    auto m = write_unit(state.memory, r);
    state = {c, m, i};
    out.trace.word_weights.emplace_back(word_alpha.data().begin(), word_alpha.data().end());
    out.trace.location_weights.emplace_back(read_alpha.data().begin(), read_alpha.data().end());
  }
  out.memory = state.memory;
  out.final_state = state;
  return out;
}

template class MacReasoner<float>;
template class MacReasoner<double>;

}  // namespace dpvqa
