#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "replysent/graph.hpp"
#include "replysent/rng.hpp"

namespace replysent::nn {

template <typename T>
Tensor<T> uniform_tensor(std::vector<std::size_t> shape, double bound, RngStream& rng) {
  Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<T>(rng.uniform(-bound, bound));
  }
  return t;
}

// One LSTM direction: fused gate weights in i, f, g, o order.
// w_ih is (4H x I), w_hh is (4H x H), bias is (4H).
template <typename T>
struct LstmDirection {
  Parameter<T> w_ih;
  Parameter<T> w_hh;
  Parameter<T> bias;

  std::size_t hidden_size() const { return w_hh.value.dim(1); }

  static LstmDirection init(std::size_t input_size, std::size_t hidden_size,
                            const std::string& name_prefix, RngStream& rng) {
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    LstmDirection d;
    d.w_ih = Parameter<T>(name_prefix + ".w_ih",
                          uniform_tensor<T>({4 * hidden_size, input_size}, k, rng));
    d.w_hh = Parameter<T>(name_prefix + ".w_hh",
                          uniform_tensor<T>({4 * hidden_size, hidden_size}, k, rng));
    d.bias = Parameter<T>(name_prefix + ".bias", uniform_tensor<T>({4 * hidden_size}, k, rng));
    return d;
  }
};

template <typename T>
struct LstmStepOut {
  typename Graph<T>::NodeId h;
  typename Graph<T>::NodeId c;
};

template <typename T>
LstmStepOut<T> lstm_step(Graph<T>& g, LstmDirection<T>& dir, typename Graph<T>::NodeId x,
                         typename Graph<T>::NodeId h_prev, typename Graph<T>::NodeId c_prev) {
  const std::size_t h = dir.hidden_size();
  auto pre = g.add(g.add(g.matvec(g.parameter(dir.w_ih), x), g.matvec(g.parameter(dir.w_hh), h_prev)),
                   g.parameter(dir.bias));
  auto gate_i = g.sigmoid(g.slice(pre, 0, h));
  auto gate_f = g.sigmoid(g.slice(pre, h, h));
  auto gate_g = g.tanh(g.slice(pre, 2 * h, h));
  auto gate_o = g.sigmoid(g.slice(pre, 3 * h, h));
  auto c = g.add(g.mul(gate_f, c_prev), g.mul(gate_i, gate_g));
  auto h_out = g.mul(gate_o, g.tanh(c));
  return {h_out, c};
}

template <typename T>
struct BiLstmLayer {
  LstmDirection<T> fwd;
  LstmDirection<T> bwd;

  static BiLstmLayer init(std::size_t input_size, std::size_t hidden_size,
                          const std::string& name_prefix, RngStream& rng) {
    BiLstmLayer layer;
    layer.fwd = LstmDirection<T>::init(input_size, hidden_size, name_prefix + ".fwd", rng);
    layer.bwd = LstmDirection<T>::init(input_size, hidden_size, name_prefix + ".bwd", rng);
    return layer;
  }
};

template <typename T>
struct BiLstmRun {
  typename Graph<T>::NodeId sequence;       // (L x 2H): per-timestep [fwd | bwd]
  typename Graph<T>::NodeId final_forward;  // forward hidden state at t = L-1
  typename Graph<T>::NodeId final_backward; // backward hidden state at t = 0
};

// Runs both directions over a time-major (L x I) input.
template <typename T>
BiLstmRun<T> run_bilstm(Graph<T>& g, BiLstmLayer<T>& layer, typename Graph<T>::NodeId input) {
  const std::size_t len = g.value(input).dim(0);
  const std::size_t h = layer.fwd.hidden_size();

  auto zeros = g.constant(Tensor<T>({h}));
  std::vector<typename Graph<T>::NodeId> fwd_h(len);
  {
    auto state_h = zeros;
    auto state_c = zeros;
    for (std::size_t t = 0; t < len; ++t) {
      auto step = lstm_step(g, layer.fwd, g.row(input, t), state_h, state_c);
      state_h = step.h;
      state_c = step.c;
      fwd_h[t] = step.h;
    }
  }
  std::vector<typename Graph<T>::NodeId> bwd_h(len);
  {
    auto state_h = zeros;
    auto state_c = zeros;
    for (std::size_t t = len; t-- > 0;) {
      auto step = lstm_step(g, layer.bwd, g.row(input, t), state_h, state_c);
      state_h = step.h;
      state_c = step.c;
      bwd_h[t] = step.h;
    }
  }

  std::vector<typename Graph<T>::NodeId> rows(len);
  for (std::size_t t = 0; t < len; ++t) {
    rows[t] = g.concat({fwd_h[t], bwd_h[t]}, 0);
  }
  return {g.stack_rows(rows), fwd_h[len - 1], bwd_h[0]};
}

}  // namespace replysent::nn
