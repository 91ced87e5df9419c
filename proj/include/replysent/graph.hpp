#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "replysent/rng.hpp"
#include "replysent/tensor.hpp"

namespace replysent::nn {

// Reverse-mode differentiation over a dynamically recorded tape. Each
// operation computes its forward value immediately and records a closure
// that propagates the node's adjoint to its inputs. backward() sweeps the
// tape in reverse creation order and accumulates leaf adjoints into the
// bound Parameters.
//
// A Graph is built for one forward/backward pass and discarded; it is
// single-threaded by construction.
template <typename T>
class Graph {
public:
  using NodeId = std::size_t;

  // ---- leaves ----

  NodeId constant(Tensor<T> value) { return emit(std::move(value), false); }

  // Binds a leaf to an external parameter, aliasing its value (no copy);
  // the parameter must outlive the graph. Repeated calls with the same
  // parameter return the same node, so weights reused across timesteps
  // accumulate all their contributions.
  NodeId parameter(Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    nodes_.push_back(Node{Tensor<T>(), Tensor<T>(), true, &p, nullptr});
    const NodeId id = nodes_.size() - 1;
    param_nodes_.emplace(&p, id);
    return id;
  }

  // ---- core ops ----

  NodeId add(NodeId a, NodeId b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    require_same_shape("add", va, vb);
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
    NodeId id = emit(std::move(out), needs(a) || needs(b));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [a, b, id](Graph& g) {
        const Tensor<T>& go = g.nodes_[id].grad;
        if (g.needs(a)) {
          Tensor<T>& ga = g.grad_of(a);
          for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (g.needs(b)) {
          Tensor<T>& gb = g.grad_of(b);
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
        }
      });
    }
    return id;
  }

  // Elementwise product.
  NodeId mul(NodeId a, NodeId b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    require_same_shape("mul", va, vb);
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
    NodeId id = emit(std::move(out), needs(a) || needs(b));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [a, b, id](Graph& g) {
        const Tensor<T>& go = g.nodes_[id].grad;
        const Tensor<T>& va = g.val(a);
        const Tensor<T>& vb = g.val(b);
        if (g.needs(a)) {
          Tensor<T>& ga = g.grad_of(a);
          for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb[i];
        }
        if (g.needs(b)) {
          Tensor<T>& gb = g.grad_of(b);
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
        }
      });
    }
    return id;
  }

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor<T>& va = rank_checked("matmul", a, 2);
    const Tensor<T>& vb = rank_checked("matmul", b, 2);
    if (va.dim(1) != vb.dim(0)) {
      throw NumericError("matmul: incompatible shapes " + va.shape_string() + " and " +
                         vb.shape_string());
    }
    const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Tensor<T> out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const T s = va.at(i, p);
        if (s == T{}) continue;
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) += s * vb.at(p, j);
      }
    }
    NodeId id = emit(std::move(out), needs(a) || needs(b));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [a, b, id, m, k, n](Graph& g) {
        const Tensor<T>& go = g.nodes_[id].grad;
        const Tensor<T>& va = g.val(a);
        const Tensor<T>& vb = g.val(b);
        if (g.needs(a)) {  // dA += G * B^T
          Tensor<T>& ga = g.grad_of(a);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              T s{};
              for (std::size_t j = 0; j < n; ++j) s += go.at(i, j) * vb.at(p, j);
              ga.at(i, p) += s;
            }
        }
        if (g.needs(b)) {  // dB += A^T * G
          Tensor<T>& gb = g.grad_of(b);
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < m; ++i) {
              const T s = va.at(i, p);
              if (s == T{}) continue;
              for (std::size_t j = 0; j < n; ++j) gb.at(p, j) += s * go.at(i, j);
            }
        }
      });
    }
    return id;
  }

  // (R x C) matrix times length-C vector -> length-R vector.
  NodeId matvec(NodeId m, NodeId v) {
    const Tensor<T>& vm = rank_checked("matvec", m, 2);
    const Tensor<T>& vv = rank_checked("matvec", v, 1);
    if (vm.dim(1) != vv.dim(0)) {
      throw NumericError("matvec: incompatible shapes " + vm.shape_string() + " and " +
                         vv.shape_string());
    }
    const std::size_t rows = vm.dim(0), cols = vm.dim(1);
    Tensor<T> out({rows});
    for (std::size_t r = 0; r < rows; ++r) {
      T s{};
      const T* wr = vm.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) s += wr[c] * vv[c];
      out[r] = s;
    }
    NodeId id = emit(std::move(out), needs(m) || needs(v));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [m, v, id, rows, cols](Graph& g) {
        const Tensor<T>& go = g.nodes_[id].grad;
        const Tensor<T>& vm = g.val(m);
        const Tensor<T>& vv = g.val(v);
        if (g.needs(m)) {
          Tensor<T>& gm = g.grad_of(m);
          for (std::size_t r = 0; r < rows; ++r) {
            const T s = go[r];
            if (s == T{}) continue;
            T* gr = gm.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) gr[c] += s * vv[c];
          }
        }
        if (g.needs(v)) {
          Tensor<T>& gv = g.grad_of(v);
          for (std::size_t r = 0; r < rows; ++r) {
            const T s = go[r];
            if (s == T{}) continue;
            const T* wr = vm.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) gv[c] += s * wr[c];
          }
        }
      });
    }
    return id;
  }

  NodeId tanh(NodeId a) {
    return unary(a, "tanh", [](T x) { return std::tanh(x); },
                 [](T, T y) { return T(1) - y * y; });
  }

  NodeId sigmoid(NodeId a) {
    return unary(a, "sigmoid", [](T x) { return stable_sigmoid(x); },
                 [](T, T y) { return y * (T(1) - y); });
  }

  NodeId relu(NodeId a) {
    return unary(a, "relu", [](T x) { return x > T{} ? x : T{}; },
                 [](T x, T) { return x > T{} ? T(1) : T{}; });
  }

  // Sum of all entries -> scalar.
  NodeId sum(NodeId a) {
    const Tensor<T>& va = val(a);
    T s{};
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
    NodeId id = emit(Tensor<T>::scalar(s), needs(a));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [a, id](Graph& g) {
        const T go = g.nodes_[id].grad[0];
        Tensor<T>& ga = g.grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
      });
    }
    return id;
  }

  // Concatenation along `axis`. Rank-1 inputs concatenate along axis 0;
  // rank-2 inputs along axis 0 (rows) or 1 (columns).
  NodeId concat(std::vector<NodeId> parts, std::size_t axis) {
    if (parts.empty()) throw NumericError("concat: no inputs");
    const std::size_t rank = val(parts[0]).rank();
    if (axis >= rank) {
      throw NumericError("concat: axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
    }
    bool any_needs = false;
    for (NodeId p : parts) {
      const Tensor<T>& vp = val(p);
      if (vp.rank() != rank) throw NumericError("concat: mixed input ranks");
      for (std::size_t ax = 0; ax < rank; ++ax) {
        if (ax != axis && vp.dim(ax) != val(parts[0]).dim(ax)) {
          throw NumericError("concat: incompatible shapes " + val(parts[0]).shape_string() +
                             " and " + vp.shape_string());
        }
      }
      any_needs = any_needs || needs(p);
    }

    Tensor<T> out = concat_forward(parts, axis, rank);
    NodeId id = emit(std::move(out), any_needs);
    if (nodes_[id].needs_grad) {
      set_backprop(id, [parts, axis, rank, id](Graph& g) {
        const Tensor<T>& go = g.nodes_[id].grad;
        if (rank == 1 || axis == 0) {
          // Contiguous blocks of rows (or of a flat vector).
          std::size_t offset = 0;
          for (NodeId p : parts) {
            const std::size_t n = g.val(p).size();
            if (g.needs(p)) {
              Tensor<T>& gp = g.grad_of(p);
              for (std::size_t i = 0; i < n; ++i) gp[i] += go[offset + i];
            }
            offset += n;
          }
        } else {
          const std::size_t rows = go.dim(0);
          std::size_t col_offset = 0;
          for (NodeId p : parts) {
            const std::size_t cols = g.val(p).dim(1);
            if (g.needs(p)) {
              Tensor<T>& gp = g.grad_of(p);
              for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) gp.at(r, c) += go.at(r, col_offset + c);
            }
            col_offset += cols;
          }
        }
      });
    }
    return id;
  }

  // Stacks L equal-length vectors into an (L x F) matrix.
  NodeId stack_rows(std::vector<NodeId> rows) {
    if (rows.empty()) throw NumericError("stack_rows: no inputs");
    const std::size_t f = rank_checked("stack_rows", rows[0], 1).dim(0);
    bool any_needs = false;
    for (NodeId r : rows) {
      if (rank_checked("stack_rows", r, 1).dim(0) != f) {
        throw NumericError("stack_rows: incompatible shapes (" + std::to_string(f) + ") and " +
                           val(r).shape_string());
      }
      any_needs = any_needs || needs(r);
    }
    Tensor<T> out({rows.size(), f});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Tensor<T>& vr = val(rows[r]);
      for (std::size_t c = 0; c < f; ++c) out.at(r, c) = vr[c];
    }
    NodeId id = emit(std::move(out), any_needs);
    if (nodes_[id].needs_grad) {
      set_backprop(id, [rows, f, id](Graph& g) {
        const Tensor<T>& go = g.nodes_[id].grad;
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (!g.needs(rows[r])) continue;
          Tensor<T>& gr = g.grad_of(rows[r]);
          for (std::size_t c = 0; c < f; ++c) gr[c] += go.at(r, c);
        }
      });
    }
    return id;
  }

  // Selects row r of a matrix as a vector.
  NodeId row(NodeId m, std::size_t r) {
    const Tensor<T>& vm = rank_checked("row", m, 2);
    if (r >= vm.dim(0)) {
      throw NumericError("row: index " + std::to_string(r) + " out of range for " +
                         vm.shape_string());
    }
    const std::size_t cols = vm.dim(1);
    Tensor<T> out({cols});
    for (std::size_t c = 0; c < cols; ++c) out[c] = vm.at(r, c);
    NodeId id = emit(std::move(out), needs(m));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [m, r, cols, id](Graph& g) {
        const Tensor<T>& go = g.nodes_[id].grad;
        Tensor<T>& gm = g.grad_of(m);
        for (std::size_t c = 0; c < cols; ++c) gm.at(r, c) += go[c];
      });
    }
    return id;
  }

  // Contiguous slice of a vector.
  NodeId slice(NodeId v, std::size_t offset, std::size_t len) {
    const Tensor<T>& vv = rank_checked("slice", v, 1);
    if (offset + len > vv.dim(0)) {
      throw NumericError("slice: range [" + std::to_string(offset) + ", " +
                         std::to_string(offset + len) + ") out of bounds for " +
                         vv.shape_string());
    }
    Tensor<T> out({len});
    for (std::size_t i = 0; i < len; ++i) out[i] = vv[offset + i];
    NodeId id = emit(std::move(out), needs(v));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [v, offset, len, id](Graph& g) {
        const Tensor<T>& go = g.nodes_[id].grad;
        Tensor<T>& gv = g.grad_of(v);
        for (std::size_t i = 0; i < len; ++i) gv[offset + i] += go[i];
      });
    }
    return id;
  }

  // Gathers rows of a (V x E) table -> (L x E). Gradient scatters back.
  NodeId embedding_lookup(NodeId table, std::vector<int> indices) {
    const Tensor<T>& vt = rank_checked("embedding_lookup", table, 2);
    if (indices.empty()) throw NumericError("embedding_lookup: empty index list");
    const std::size_t v = vt.dim(0), e = vt.dim(1);
    for (int ix : indices) {
      if (ix < 0 || static_cast<std::size_t>(ix) >= v) {
        throw NumericError("embedding_lookup: index " + std::to_string(ix) +
                           " out of range for table " + vt.shape_string());
      }
    }
    Tensor<T> out({indices.size(), e});
    for (std::size_t t = 0; t < indices.size(); ++t) {
      const T* src = vt.data() + static_cast<std::size_t>(indices[t]) * e;
      T* dst = out.data() + t * e;
      for (std::size_t c = 0; c < e; ++c) dst[c] = src[c];
    }
    NodeId id = emit(std::move(out), needs(table));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [table, indices = std::move(indices), e, id](Graph& g) {
        const Tensor<T>& go = g.nodes_[id].grad;
        Tensor<T>& gt = g.grad_of(table);
        for (std::size_t t = 0; t < indices.size(); ++t) {
          T* dst = gt.data() + static_cast<std::size_t>(indices[t]) * e;
          const T* src = go.data() + t * e;
          for (std::size_t c = 0; c < e; ++c) dst[c] += src[c];
        }
      });
    }
    return id;
  }

  // Training mode: zeroes each element with probability p and scales the
  // survivors by 1/(1-p). Inference mode is the exact identity (the input
  // node is returned unchanged).
  NodeId dropout(NodeId a, double p, bool training, RngStream& rng) {
    if (p < 0.0 || p >= 1.0) {
      throw NumericError("dropout: probability " + std::to_string(p) + " outside [0, 1)");
    }
    if (!training || p == 0.0) return a;
    const Tensor<T>& va = val(a);
    const T scale = T(1.0 / (1.0 - p));
    Tensor<T> mask(va.shape());
    for (std::size_t i = 0; i < mask.size(); ++i) {
      mask[i] = rng.bernoulli(p) ? T{} : scale;
    }
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * mask[i];
    NodeId id = emit(std::move(out), needs(a));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [a, mask = std::move(mask), id](Graph& g) {
        const Tensor<T>& go = g.nodes_[id].grad;
        Tensor<T>& ga = g.grad_of(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * mask[i];
      });
    }
    return id;
  }

  // Softmax along `axis`. Rank-1 tensors use axis 0; rank-2 tensors
  // normalize rows (axis 1) or columns (axis 0). Stabilized by max
  // subtraction.
  NodeId softmax(NodeId a, std::size_t axis = 0) {
    const Tensor<T>& va = val(a);
    if (va.rank() == 1) {
      if (axis != 0) throw NumericError("softmax: axis out of range for rank-1 input");
    } else if (va.rank() == 2) {
      if (axis > 1) throw NumericError("softmax: axis out of range for rank-2 input");
    } else {
      throw NumericError("softmax: unsupported rank for shape " + va.shape_string());
    }

    Tensor<T> out(va.shape());
    auto normalize = [&](std::size_t count, std::size_t stride, std::size_t base) {
      T mx = va[base];
      for (std::size_t i = 1; i < count; ++i) mx = std::max(mx, va[base + i * stride]);
      T z{};
      for (std::size_t i = 0; i < count; ++i) {
        const T e = std::exp(va[base + i * stride] - mx);
        out[base + i * stride] = e;
        z += e;
      }
      for (std::size_t i = 0; i < count; ++i) out[base + i * stride] /= z;
    };
    if (va.rank() == 1) {
      normalize(va.dim(0), 1, 0);
    } else if (axis == 1) {
      for (std::size_t r = 0; r < va.dim(0); ++r) normalize(va.dim(1), 1, r * va.dim(1));
    } else {
      for (std::size_t c = 0; c < va.dim(1); ++c) normalize(va.dim(0), va.dim(1), c);
    }

    NodeId id = emit(std::move(out), needs(a));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [a, axis, id](Graph& g) {
        const Tensor<T>& y = g.nodes_[id].value;
        const Tensor<T>& go = g.nodes_[id].grad;
        Tensor<T>& ga = g.grad_of(a);
        auto slice_back = [&](std::size_t count, std::size_t stride, std::size_t base) {
          T dot{};
          for (std::size_t i = 0; i < count; ++i) {
            const std::size_t k = base + i * stride;
            dot += go[k] * y[k];
          }
          for (std::size_t i = 0; i < count; ++i) {
            const std::size_t k = base + i * stride;
            ga[k] += y[k] * (go[k] - dot);
          }
        };
        if (y.rank() == 1) {
          slice_back(y.dim(0), 1, 0);
        } else if (axis == 1) {
          for (std::size_t r = 0; r < y.dim(0); ++r) slice_back(y.dim(1), 1, r * y.dim(1));
        } else {
          for (std::size_t c = 0; c < y.dim(1); ++c) slice_back(y.dim(0), y.dim(1), c);
        }
      });
    }
    return id;
  }

  // Valid 1-D convolution over a time-major (L x C) input. The weight is
  // (F x width*C): filter f at tap dt, channel c sits at column dt*C + c.
  // Output is (L-width+1 x F).
  NodeId conv1d(NodeId input, NodeId weight, NodeId bias, std::size_t width) {
    const Tensor<T>& vi = rank_checked("conv1d", input, 2);
    const Tensor<T>& vw = rank_checked("conv1d", weight, 2);
    const Tensor<T>& vb = rank_checked("conv1d", bias, 1);
    const std::size_t len = vi.dim(0), channels = vi.dim(1), filters = vw.dim(0);
    if (width == 0 || vw.dim(1) != width * channels) {
      throw NumericError("conv1d: weight " + vw.shape_string() + " incompatible with input " +
                         vi.shape_string() + " at width " + std::to_string(width));
    }
    if (vb.dim(0) != filters) {
      throw NumericError("conv1d: bias " + vb.shape_string() + " incompatible with weight " +
                         vw.shape_string());
    }
    if (len < width) {
      throw NumericError("conv1d: input length " + std::to_string(len) +
                         " shorter than filter width " + std::to_string(width));
    }
    const std::size_t out_len = len - width + 1;
    Tensor<T> out({out_len, filters});
    for (std::size_t t = 0; t < out_len; ++t) {
      const T* window = vi.data() + t * channels;
      for (std::size_t f = 0; f < filters; ++f) {
        const T* wf = vw.data() + f * width * channels;
        T s = vb[f];
        for (std::size_t k = 0; k < width * channels; ++k) s += window[k] * wf[k];
        out.at(t, f) = s;
      }
    }
    NodeId id = emit(std::move(out), needs(input) || needs(weight) || needs(bias));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [input, weight, bias, width, out_len, channels, filters, id](Graph& g) {
        const Tensor<T>& go = g.nodes_[id].grad;
        const Tensor<T>& vi = g.val(input);
        const Tensor<T>& vw = g.val(weight);
        for (std::size_t t = 0; t < out_len; ++t) {
          for (std::size_t f = 0; f < filters; ++f) {
            const T gof = go.at(t, f);
            if (gof == T{}) continue;
            if (g.needs(bias)) g.grad_of(bias)[f] += gof;
            const T* wf = vw.data() + f * width * channels;
            const T* window = vi.data() + t * channels;
            if (g.needs(input)) {
              T* gi = g.grad_of(input).data() + t * channels;
              for (std::size_t k = 0; k < width * channels; ++k) gi[k] += gof * wf[k];
            }
            if (g.needs(weight)) {
              T* gw = g.grad_of(weight).data() + f * width * channels;
              for (std::size_t k = 0; k < width * channels; ++k) gw[k] += gof * window[k];
            }
          }
        }
      });
    }
    return id;
  }

  // Per-feature maximum over the time axis of an (L x F) input -> (F).
  // Ties resolve to the earliest position.
  NodeId max_over_time(NodeId a) {
    const Tensor<T>& va = rank_checked("max_over_time", a, 2);
    const std::size_t len = va.dim(0), f = va.dim(1);
    Tensor<T> out({f});
    std::vector<std::size_t> argmax(f, 0);
    for (std::size_t c = 0; c < f; ++c) {
      T best = va.at(0, c);
      for (std::size_t t = 1; t < len; ++t) {
        if (va.at(t, c) > best) {
          best = va.at(t, c);
          argmax[c] = t;
        }
      }
      out[c] = best;
    }
    NodeId id = emit(std::move(out), needs(a));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [a, argmax = std::move(argmax), id](Graph& g) {
        const Tensor<T>& go = g.nodes_[id].grad;
        Tensor<T>& ga = g.grad_of(a);
        for (std::size_t c = 0; c < go.size(); ++c) ga.at(argmax[c], c) += go[c];
      });
    }
    return id;
  }

  // Mean over the batch of -w[y_i] * log softmax(logits_i)[y_i], computed
  // with log-sum-exp stabilization. Logits are (B x num_classes).
  NodeId weighted_cross_entropy(NodeId logits, std::vector<int> targets,
                                std::array<double, 3> class_weights) {
    const Tensor<T>& vl = rank_checked("weighted_cross_entropy", logits, 2);
    const std::size_t batch = vl.dim(0), classes = vl.dim(1);
    if (classes != 3) {
      throw NumericError("weighted_cross_entropy: expected 3 classes, got logits " +
                         vl.shape_string());
    }
    if (targets.size() != batch) {
      throw NumericError("weighted_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + vl.shape_string());
    }
    for (int y : targets) {
      if (y < 0 || y >= static_cast<int>(classes)) {
        throw NumericError("weighted_cross_entropy: target " + std::to_string(y) +
                           " outside class range");
      }
    }
    if (!vl.all_finite()) throw NumericError("weighted_cross_entropy: non-finite logits");

    // Softmax rows are cached for the backward pass.
    Tensor<T> probs({batch, classes});
    T loss{};
    for (std::size_t i = 0; i < batch; ++i) {
      const T* lr = vl.data() + i * classes;
      T mx = lr[0];
      for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, lr[c]);
      T z{};
      for (std::size_t c = 0; c < classes; ++c) {
        const T e = std::exp(lr[c] - mx);
        probs.at(i, c) = e;
        z += e;
      }
      for (std::size_t c = 0; c < classes; ++c) probs.at(i, c) /= z;
      const T lse = std::log(z) + mx;
      const T w = static_cast<T>(class_weights[static_cast<std::size_t>(targets[i])]);
      loss += w * (lse - lr[targets[i]]);
    }
    loss /= static_cast<T>(batch);

    NodeId id = emit(Tensor<T>::scalar(loss), needs(logits));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [logits, targets = std::move(targets), class_weights,
                        probs = std::move(probs), batch, classes, id](Graph& g) {
        const T go = g.nodes_[id].grad[0];
        Tensor<T>& gl = g.grad_of(logits);
        for (std::size_t i = 0; i < batch; ++i) {
          const T w = static_cast<T>(class_weights[static_cast<std::size_t>(targets[i])]);
          const T scale = go * w / static_cast<T>(batch);
          for (std::size_t c = 0; c < classes; ++c) {
            const T delta = (static_cast<int>(c) == targets[i]) ? T(1) : T{};
            gl.at(i, c) += scale * (probs.at(i, c) - delta);
          }
        }
      });
    }
    return id;
  }

  // ---- evaluation / differentiation ----

  const Tensor<T>& value(NodeId id) const { return val(id); }

  // Accumulates d(loss)/d(parameter) into every reachable Parameter's grad.
  // Node adjoints are reset per call, so calling backward twice doubles the
  // parameter gradients.
  void backward(NodeId loss) {
    if (val(loss).size() != 1) {
      throw NumericError("backward: loss must be scalar, got shape " +
                         val(loss).shape_string());
    }
    for (Node& n : nodes_) n.grad = Tensor<T>();
    grad_of(loss)[0] = T(1);
    for (std::size_t id = loss + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.grad.empty() && n.backprop) n.backprop(*this);
    }
    for (auto& [param, id] : param_nodes_) {
      const Tensor<T>& g = nodes_[id].grad;
      if (g.empty()) continue;
      Tensor<T>& dst = param->grad;
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // sized on demand during backward
    bool needs_grad = false;
    Parameter<T>* bound = nullptr;
    std::function<void(Graph&)> backprop;
  };

  static T stable_sigmoid(T x) {
    if (x >= T{}) {
      return T(1) / (T(1) + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
  }

  NodeId emit(Tensor<T> value, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), needs_grad, nullptr, nullptr});
    return nodes_.size() - 1;
  }

  void set_backprop(NodeId id, std::function<void(Graph&)> fn) {
    nodes_[id].backprop = std::move(fn);
  }

  const Tensor<T>& val(NodeId id) const {
    const Node& n = nodes_.at(id);
    return n.bound != nullptr ? n.bound->value : n.value;
  }
  bool needs(NodeId id) const { return nodes_[id].needs_grad; }

  Tensor<T>& grad_of(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(val(id).shape());
    return n.grad;
  }

  const Tensor<T>& rank_checked(const char* op, NodeId id, std::size_t rank) const {
    const Tensor<T>& v = val(id);
    if (v.rank() != rank) {
      throw NumericError(std::string(op) + ": expected rank-" + std::to_string(rank) +
                         " input, got shape " + v.shape_string());
    }
    return v;
  }

  static void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) {
      throw NumericError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
    }
  }

  template <typename FwdFn, typename BwdFn>
  NodeId unary(NodeId a, const char*, FwdFn fwd, BwdFn bwd) {
    const Tensor<T>& va = val(a);
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(va[i]);
    NodeId id = emit(std::move(out), needs(a));
    if (nodes_[id].needs_grad) {
      set_backprop(id, [a, id, bwd](Graph& g) {
        const Tensor<T>& go = g.nodes_[id].grad;
        const Tensor<T>& x = g.val(a);
        const Tensor<T>& y = g.nodes_[id].value;
        Tensor<T>& ga = g.grad_of(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bwd(x[i], y[i]);
      });
    }
    return id;
  }

  Tensor<T> concat_forward(const std::vector<NodeId>& parts, std::size_t axis,
                           std::size_t rank) const {
    if (rank == 1 || axis == 0) {
      std::size_t lead = 0;
      for (NodeId p : parts) lead += val(p).dim(0);
      std::vector<std::size_t> shape = val(parts[0]).shape();
      shape[0] = lead;
      Tensor<T> out(std::move(shape));
      std::size_t offset = 0;
      for (NodeId p : parts) {
        const Tensor<T>& vp = val(p);
        for (std::size_t i = 0; i < vp.size(); ++i) out[offset + i] = vp[i];
        offset += vp.size();
      }
      return out;
    }
    std::size_t total_cols = 0;
    for (NodeId p : parts) total_cols += val(p).dim(1);
    const std::size_t rows = val(parts[0]).dim(0);
    Tensor<T> out({rows, total_cols});
    std::size_t col_offset = 0;
    for (NodeId p : parts) {
      const Tensor<T>& vp = val(p);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < vp.dim(1); ++c) out.at(r, col_offset + c) = vp.at(r, c);
      col_offset += vp.dim(1);
    }
    return out;
  }

  std::vector<Node> nodes_;
  std::unordered_map<Parameter<T>*, NodeId> param_nodes_;
};

}  // namespace replysent::nn
