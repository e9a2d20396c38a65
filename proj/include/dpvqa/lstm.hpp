#pragma once

#include <string>

#include "dpvqa/param_store.hpp"

namespace dpvqa {

// One LSTM direction. Gate blocks are stacked in the order input, forget,
// cell candidate, output: w_ih [4h, e], w_hh [4h, h], bias [4h].
template <class T>
struct LstmDirection {
  Tensor<T> w_ih;
  Tensor<T> w_hh;
  Tensor<T> bias;

  std::size_t hidden() const { return w_hh.extent(1); }
  std::size_t input() const { return w_ih.extent(1); }
};

template <class T>
LstmDirection<T> make_lstm_direction(ParamStore<T>& store, const std::string& prefix,
                                     std::size_t input, std::size_t hidden);

template <class T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

template <class T>
LstmState<T> lstm_zero_state(std::size_t hidden);

/// One recurrence step from the input x [e].
template <class T>
LstmState<T> lstm_step(const Tensor<T>& x, const LstmState<T>& prev, const LstmDirection<T>& p);

/// One step given the precomputed input projection w_ih·x + bias [4h].
template <class T>
LstmState<T> lstm_cell(const Tensor<T>& input_gates, const LstmState<T>& prev,
                       const Tensor<T>& w_hh);

template <class T>
struct BiLstmOutput {
  Tensor<T> states;     // [S, 2h]; row s = [forward_s ; backward_s]
  Tensor<T> final_fwd;  // forward state after the last token
  Tensor<T> final_bwd;  // backward state after the first token
};

/// Runs both directions over seq [S, e]; throws ContractError when S == 0.
template <class T>
BiLstmOutput<T> bilstm(const Tensor<T>& seq, const LstmDirection<T>& fwd,
                       const LstmDirection<T>& bwd);

}  // namespace dpvqa
