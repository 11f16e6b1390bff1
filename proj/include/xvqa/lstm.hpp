#pragma once

#include <array>
#include <span>
#include <vector>

#include "xvqa/tensor.hpp"

namespace xvqa {

enum class Gate : std::size_t { input = 0, forget = 1, output = 2, candidate = 3 };

/// Single-layer LSTM parameters. The four gate blocks are stacked along the
/// first axis in the order input, forget, output, candidate.
template <class T>
struct LstmParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Tensor<T> w_input;   // 4H x D
  Tensor<T> w_hidden;  // 4H x H
  Tensor<T> bias;      // 4H

  LstmParams() = default;
  LstmParams(std::size_t D, std::size_t H)
      : input_size(D),
        hidden_size(H),
        w_input({4 * H, D}),
        w_hidden({4 * H, H}),
        bias({4 * H}) {}

  std::span<T> input_block(Gate g) {
    return w_input.values().subspan(static_cast<std::size_t>(g) * hidden_size * input_size,
                                    hidden_size * input_size);
  }
  std::span<T> hidden_block(Gate g) {
    return w_hidden.values().subspan(static_cast<std::size_t>(g) * hidden_size * hidden_size,
                                     hidden_size * hidden_size);
  }
  std::span<T> bias_block(Gate g) {
    return bias.values().subspan(static_cast<std::size_t>(g) * hidden_size, hidden_size);
  }

  bool consistent() const {
    const std::size_t H = hidden_size, D = input_size;
    return w_input.shape() == std::vector<std::size_t>{4 * H, D} &&
           w_hidden.shape() == std::vector<std::size_t>{4 * H, H} &&
           bias.shape() == std::vector<std::size_t>{4 * H};
  }

  std::vector<Tensor<T>*> parameters() { return {&w_input, &w_hidden, &bias}; }
};

/// Everything the backward pass needs from one forward step.
template <class T>
struct LstmStep {
  std::vector<T> x, h_prev, c_prev;
  std::vector<T> gates;  // post-activation, 4H
  std::vector<T> c, tanh_c, h;
};

template <class T>
LstmStep<T> lstm_cell_step(std::span<const T> x, std::span<const T> h, std::span<const T> c,
                           const LstmParams<T>& p) {
  const std::size_t H = p.hidden_size, D = p.input_size;
  detail::require(x.size() == D, "lstm_cell_step: input has length " + std::to_string(x.size()) +
                                     ", expected " + std::to_string(D));
  detail::require(h.size() == H && c.size() == H, "lstm_cell_step: state length mismatch");
  LstmStep<T> s;
  s.x.assign(x.begin(), x.end());
  s.h_prev.assign(h.begin(), h.end());
  s.c_prev.assign(c.begin(), c.end());
  s.gates.resize(4 * H);
  detail::affine_into<T>(x, p.w_input, p.bias, s.gates);
  const T* wh = p.w_hidden.data();
  for (std::size_t r = 0; r < 4 * H; ++r) {
    const T* wr = wh + r * H;
    T acc = 0;
    for (std::size_t k = 0; k < H; ++k) acc += wr[k] * h[k];
    s.gates[r] += acc;
  }
  for (std::size_t k = 0; k < 3 * H; ++k) s.gates[k] = sigmoid(s.gates[k]);
  for (std::size_t k = 3 * H; k < 4 * H; ++k) s.gates[k] = std::tanh(s.gates[k]);
  s.c.resize(H);
  s.tanh_c.resize(H);
  s.h.resize(H);
  for (std::size_t k = 0; k < H; ++k) {
    const T i = s.gates[k], f = s.gates[H + k], o = s.gates[2 * H + k], g = s.gates[3 * H + k];
    s.c[k] = f * c[k] + i * g;
    s.tanh_c[k] = std::tanh(s.c[k]);
    s.h[k] = o * s.tanh_c[k];
  }
  return s;
}

template <class T>
struct LstmStepGrad {
  std::vector<T> dx, dh_prev, dc_prev;
};

/// Backpropagates dh, dc through one step, accumulating into `grads`.
template <class T>
LstmStepGrad<T> lstm_cell_backward(const LstmStep<T>& s, const LstmParams<T>& p,
                                   std::span<const T> dh, std::span<const T> dc,
                                   LstmParams<T>& grads) {
  const std::size_t H = p.hidden_size, D = p.input_size;
  std::vector<T> dpre(4 * H);
  LstmStepGrad<T> g{std::vector<T>(D), std::vector<T>(H), std::vector<T>(H)};
  for (std::size_t k = 0; k < H; ++k) {
    const T i = s.gates[k], f = s.gates[H + k], o = s.gates[2 * H + k], gg = s.gates[3 * H + k];
    const T tc = s.tanh_c[k];
    const T dct = dc[k] + dh[k] * o * (T{1} - tc * tc);
    dpre[k] = dct * gg * i * (T{1} - i);
    dpre[H + k] = dct * s.c_prev[k] * f * (T{1} - f);
    dpre[2 * H + k] = dh[k] * tc * o * (T{1} - o);
    dpre[3 * H + k] = dct * i * (T{1} - gg * gg);
    g.dc_prev[k] = dct * f;
  }
  detail::affine_backward_accumulate<T>(s.x, p.w_input, dpre, g.dx, grads.w_input, grads.bias);
  const T* wh = p.w_hidden.data();
  T* gwh = grads.w_hidden.data();
  for (std::size_t r = 0; r < 4 * H; ++r) {
    const T d = dpre[r];
    if (d == T{0}) continue;
    const T* wr = wh + r * H;
    T* gr = gwh + r * H;
    for (std::size_t k = 0; k < H; ++k) {
      gr[k] += d * s.h_prev[k];
      g.dh_prev[k] += d * wr[k];
    }
  }
  return g;
}

/// Runs the cell over a sequence from the zero state.
template <class T>
std::vector<LstmStep<T>> lstm_forward(const std::vector<std::vector<T>>& inputs,
                                      const LstmParams<T>& p) {
  std::vector<LstmStep<T>> steps;
  steps.reserve(inputs.size());
  std::vector<T> h(p.hidden_size, T{0}), c(p.hidden_size, T{0});
  for (const auto& x : inputs) {
    steps.push_back(lstm_cell_step<T>(x, h, c, p));
    h = steps.back().h;
    c = steps.back().c;
  }
  return steps;
}

/// Backpropagation through time given per-step hidden-state gradients
/// (dh_steps[t] may be empty for steps that feed no loss directly). Returns
/// the input gradient for every step.
template <class T>
std::vector<std::vector<T>> lstm_backward(const std::vector<LstmStep<T>>& steps,
                                          const LstmParams<T>& p,
                                          const std::vector<std::vector<T>>& dh_steps,
                                          LstmParams<T>& grads) {
  const std::size_t H = p.hidden_size;
  std::vector<std::vector<T>> dxs(steps.size());
  std::vector<T> dh_next(H, T{0}), dc_next(H, T{0});
  for (std::size_t t = steps.size(); t-- > 0;) {
    std::vector<T> dh = dh_next;
    if (t < dh_steps.size() && !dh_steps[t].empty()) {
      for (std::size_t k = 0; k < H; ++k) dh[k] += dh_steps[t][k];
    }
    auto g = lstm_cell_backward<T>(steps[t], p, dh, dc_next, grads);
    dxs[t] = std::move(g.dx);
    dh_next = std::move(g.dh_prev);
    dc_next = std::move(g.dc_prev);
  }
  return dxs;
}

}  // namespace xvqa
