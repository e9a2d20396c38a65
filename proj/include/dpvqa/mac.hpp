#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "dpvqa/crn.hpp"
#include "dpvqa/language.hpp"

namespace dpvqa {

template <class T>
struct MacState {
  Tensor<T> control;  // c_i
  Tensor<T> memory;   // m_i
  std::size_t step = 0;
};

// Per-step attention distributions recorded during a run.
struct AttentionTrace {
  std::size_t grid_width = 0;
  std::size_t grid_height = 0;
  std::vector<std::vector<double>> word_weights;      // [P][S]
  std::vector<std::vector<double>> location_weights;  // [P][W·H], row-major over (x, y)

  std::size_t steps() const { return word_weights.size(); }
};

/// One JSON object per line: {"step", "word_weights", "location_weights"[W][H]}.
void write_trace(std::ostream& out, const AttentionTrace& trace);

struct MacConfig {
  std::size_t dim = 64;
  std::size_t steps = 12;
};

template <class T>
struct MacResult {
  Tensor<T> memory;  // m_P
  MacState<T> final_state;
  AttentionTrace trace;
};

// Control, read and write units iterated over a knowledge base. Only the
// question projection is step-specific; the unit weights are shared.
template <class T>
class MacReasoner {
 public:
  MacReasoner(ParamStore<T>& store, const MacConfig& config, const std::string& prefix = "mac");

  const MacConfig& config() const { return config_; }

  /// q_i = W_i q + b_i for 1 ≤ step ≤ P.
  Tensor<T> project_question(const Tensor<T>& question, std::size_t step) const;

  /// Returns (c_i, word attention [S]).
  std::pair<Tensor<T>, Tensor<T>> control_unit(const Tensor<T>& step_question,
                                               const Tensor<T>& words,
                                               const Tensor<T>& prev_control) const;

  /// Returns (r_i, location attention [W·H]).
  std::pair<Tensor<T>, Tensor<T>> read_unit(const Tensor<T>& prev_memory,
                                            const KnowledgeBase<T>& kb,
                                            const Tensor<T>& control) const;

  Tensor<T> write_unit(const Tensor<T>& prev_memory, const Tensor<T>& retrieved) const;

  MacState<T> initial_state() const { return {control_init, memory_init, 0}; }

  /// Runs `steps` cells (0 uses the configured P) from the learned initial state.
  MacResult<T> run(const EncodedQuestion<T>& question, const KnowledgeBase<T>& kb,
                   std::size_t steps = 0) const;

  std::vector<Tensor<T>> step_w, step_b;
  Tensor<T> control_w0, control_w1, control_attn_w, control_attn_b;
  Tensor<T> read_w, read_attn_w, read_attn_b;
  Tensor<T> write_w, write_b;
  Tensor<T> control_init, memory_init;

 private:
  MacConfig config_;
};

extern template class MacReasoner<float>;
extern template class MacReasoner<double>;

}  // namespace dpvqa
