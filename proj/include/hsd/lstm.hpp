#pragma once

#include <cstddef>
#include <vector>

#include "hsd/ops.hpp"

namespace hsd {

enum class Direction { forward, backward, bidirectional };

/// Weights of one LSTM direction. Gate blocks are stacked in the order
/// input, forget, cell candidate, output.
template <std::floating_point T>
struct LstmCell {
  Var<T> w_input;      // [4h × in]
  Var<T> w_recurrent;  // [4h × h]
  Var<T> bias;         // [4h]

  std::size_t hidden() const { return bias.dim(0) / 4; }
  std::size_t input_dim() const { return w_input.dim(1); }
};

template <std::floating_point T>
struct LstmLayer {
  LstmCell<T> forward;
  std::vector<LstmCell<T>> backward;  // empty for unidirectional layers
};

template <std::floating_point T>
using LstmParams = std::vector<LstmLayer<T>>;

/// Runs one direction over x[T×in]; returns the hidden state at every step,
/// indexed by sequence position.
template <std::floating_point T>
std::vector<Var<T>> lstm_direction(const Var<T>& x, const LstmCell<T>& cell, bool reverse) {
  const std::size_t len = x.dim(0);
  const std::size_t h = cell.hidden();
  detail::require(x.dim(1) == cell.input_dim(), "lstm: input " + shape_str(x.shape()) + " for cell with input dim " +
                                                    std::to_string(cell.input_dim()));
  // Input projections for all steps at once: [T × 4h].
  const Var<T> projected = matmul(x, transpose(cell.w_input));

  std::vector<Var<T>> states(len);
  Var<T> hidden_state, cell_state;
  for (std::size_t step = 0; step < len; ++step) {
    const std::size_t t = reverse ? len - 1 - step : step;
    Var<T> z = add(row(projected, t), cell.bias);
    if (step > 0) z = add(z, matvec(cell.w_recurrent, hidden_state));
    const Var<T> in_gate = sigmoid(slice(z, 0, h));
    const Var<T> forget_gate = sigmoid(slice(z, h, h));
    const Var<T> candidate = hsd::tanh(slice(z, 2 * h, h));
    const Var<T> out_gate = sigmoid(slice(z, 3 * h, h));
    Var<T> c = mul(in_gate, candidate);
    if (step > 0) c = add(mul(forget_gate, cell_state), c);
    cell_state = c;
    hidden_state = mul(out_gate, hsd::tanh(cell_state));
    states[t] = hidden_state;
  }
  return states;
}

/// Stacked (optionally bidirectional) LSTM over x[T×in]. Returns [T×out]
/// where out is h, or 2h for bidirectional layers with the forward state
/// first.
template <std::floating_point T>
Var<T> lstm_forward(const Var<T>& x, const LstmParams<T>& params) {
  detail::require_rank(x.shape(), 2, "lstm_forward");
  detail::require(!params.empty(), "lstm_forward: no layers");
  Var<T> input = x;
  for (const auto& layer : params) {
    auto fwd = lstm_direction(input, layer.forward, false);
    if (layer.backward.empty()) {
      input = stack(fwd);
      continue;
    }
    auto bwd = lstm_direction(input, layer.backward.front(), true);
    std::vector<Var<T>> rows;
    rows.reserve(fwd.size());
    for (std::size_t t = 0; t < fwd.size(); ++t) rows.push_back(concat<T>({fwd[t], bwd[t]}));
    input = stack(rows);
  }
  return input;
}

/// Trainable parameter count of a stack of LSTM layers.
inline std::size_t lstm_param_count(std::size_t input_dim, std::size_t hidden, std::size_t layers, Direction dir) {
  const std::size_t directions = dir == Direction::bidirectional ? 2 : 1;
  std::size_t total = 0;
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < layers; ++l) {
    total += directions * (4 * hidden * (in + hidden) + 4 * hidden);
    in = directions * hidden;
  }
  return total;
}

}  // namespace hsd
