#include "dpvqa/lstm.hpp"

#include <vector>

#include "dpvqa/ops.hpp"

namespace dpvqa {

template <class T>
LstmDirection<T> make_lstm_direction(ParamStore<T>& store, const std::string& prefix,
                                     std::size_t input, std::size_t hidden) {
  LstmDirection<T> d;
  d.w_ih = store.add(prefix + ".w_ih", {4 * hidden, input}, Init::fan_in_uniform);
  d.w_hh = store.add(prefix + ".w_hh", {4 * hidden, hidden}, Init::fan_in_uniform);
  d.bias = store.add(prefix + ".bias", {4 * hidden}, Init::zeros);
  return d;
}

template <class T>
LstmState<T> lstm_zero_state(std::size_t hidden) {
  return {Tensor<T>::zeros({hidden}), Tensor<T>::zeros({hidden})};
}

template <class T>
LstmState<T> lstm_cell(const Tensor<T>& input_gates, const LstmState<T>& prev,
                       const Tensor<T>& w_hh) {
  const std::size_t h = w_hh.extent(1);
  if (input_gates.numel() != 4 * h || prev.h.numel() != h || prev.c.numel() != h) {
    throw DimensionError("lstm_cell: gates " + shape_str(input_gates.shape()) + " / state " +
                         shape_str(prev.h.shape()) + " do not match w_hh " +
                         shape_str(w_hh.shape()));
  }
  auto gates = add(input_gates, linear(prev.h, w_hh));
  auto i = sigmoid(slice_last(gates, 0, h));
  auto f = sigmoid(slice_last(gates, h, h));
  auto g = tanh(slice_last(gates, 2 * h, h));
  auto o = sigmoid(slice_last(gates, 3 * h, h));
  auto c = add(mul(f, prev.c), mul(i, g));
  auto hs = mul(o, tanh(c));
  return {hs, c};
}

template <class T>
LstmState<T> lstm_step(const Tensor<T>& x, const LstmState<T>& prev, const LstmDirection<T>& p) {
  return lstm_cell(linear(x, p.w_ih, p.bias), prev, p.w_hh);
}

template <class T>
BiLstmOutput<T> bilstm(const Tensor<T>& seq, const LstmDirection<T>& fwd,
                       const LstmDirection<T>& bwd) {
  if (seq.rank() != 2) throw DimensionError("bilstm: expected [S, e], got " + shape_str(seq.shape()));
  const std::size_t steps = seq.extent(0);
  if (steps == 0) throw ContractError("bilstm: empty sequence");

  auto xf = linear(seq, fwd.w_ih, fwd.bias);
  auto xb = linear(seq, bwd.w_ih, bwd.bias);

  std::vector<Tensor<T>> hf(steps), hb(steps);
  auto state = lstm_zero_state<T>(fwd.hidden());
  for (std::size_t s = 0; s < steps; ++s) {
    state = lstm_cell(select(xf, s), state, fwd.w_hh);
    hf[s] = state.h;
  }
  state = lstm_zero_state<T>(bwd.hidden());
  for (std::size_t s = steps; s-- > 0;) {
    state = lstm_cell(select(xb, s), state, bwd.w_hh);
    hb[s] = state.h;
  }

  std::vector<Tensor<T>> rows(steps);
  for (std::size_t s = 0; s < steps; ++s) rows[s] = concat<T>({hf[s], hb[s]}, 0);
  BiLstmOutput<T> out;
  out.states = stack(std::span<const Tensor<T>>(rows));
  out.final_fwd = hf[steps - 1];
  out.final_bwd = hb[0];
  return out;
}

#define DPVQA_INSTANTIATE_LSTM(T)                                                                  \
  template LstmDirection<T> make_lstm_direction(ParamStore<T>&, const std::string&, std::size_t,   \
                                                std::size_t);                                      \
  template LstmState<T> lstm_zero_state(std::size_t);                                              \
  template LstmState<T> lstm_cell(const Tensor<T>&, const LstmState<T>&, const Tensor<T>&);        \
  template LstmState<T> lstm_step(const Tensor<T>&, const LstmState<T>&, const LstmDirection<T>&); \
  template BiLstmOutput<T> bilstm(const Tensor<T>&, const LstmDirection<T>&, const LstmDirection<T>&);

DPVQA_INSTANTIATE_LSTM(float)
DPVQA_INSTANTIATE_LSTM(double)

}  // namespace dpvqa
