// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Reverse-mode differentiation over exactly the layer set the spatial
// spectrum network uses: conv2d, linear, relu/sigmoid, per-channel affine,
// residual add, channel concat, global average pool and MSE.
//
// All feature maps are single examples in CHW layout; batching is done by
// accumulating parameter gradients over several tapes.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doapnn/errors.hpp"
#include "doapnn/tensor/ndarray.hpp"

namespace doapnn {

struct Hw {
  std::size_t h = 1;
  std::size_t w = 1;
};

enum class Activation { kRelu, kSigmoid };

inline std::size_t conv_out_dim(std::size_t in, std::size_t k,
                                std::size_t stride, std::size_t pad) {
  if (stride < 1) throw DimensionError("stride must be >= 1");
  if (in + 2 * pad < k)
    throw DimensionError("kernel " + std::to_string(k) +
                         " does not fit padded input " +
                         std::to_string(in + 2 * pad));
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

struct ConvGeom {
  std::size_t c_in, h_in, w_in;
  std::size_t c_out, kh, kw;
  std::size_t sh, sw, ph, pw;
  std::size_t h_out, w_out;

  // Output column range [lo, hi) whose input column for kernel tap j lies
  // inside the unpadded input.
  void col_range(std::size_t j, std::size_t& lo, std::size_t& hi) const {
    const long off = static_cast<long>(j) - static_cast<long>(pw);
    lo = off >= 0 ? 0 : static_cast<std::size_t>((-off + sw - 1) / sw);
    const long last = static_cast<long>(w_in) - 1 - off;
    hi = last < 0 ? 0
                  : std::min(w_out, static_cast<std::size_t>(last) / sw + 1);
    if (lo > hi) lo = hi;
  }
  bool in_row(std::size_t oh, std::size_t i, std::size_t& ih) const {
    const long r = static_cast<long>(oh * sh + i) - static_cast<long>(ph);
    if (r < 0 || r >= static_cast<long>(h_in)) return false;
    ih = static_cast<std::size_t>(r);
    return true;
  }
};

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// 1x1, unit stride, no padding: the input already is its column matrix.
inline bool is_pointwise(const ConvGeom& g) {
  return g.kh == 1 && g.kw == 1 && g.sh == 1 && g.sw == 1 && g.ph == 0 &&
         g.pw == 0;
}

// cols[(ci, i, j), (oh, ow)] = padded input at the tap's position.
template <class T>
void im2col(const ConvGeom& g, const T* in, T* cols) {
  const std::size_t plane = g.h_out * g.w_out;
  for (std::size_t ci = 0; ci < g.c_in; ++ci)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* dst = cols + ((ci * g.kh + i) * g.kw + j) * plane;
        std::fill(dst, dst + plane, T{0});
        std::size_t lo, hi;
        g.col_range(j, lo, hi);
        const long off = static_cast<long>(j) - static_cast<long>(g.pw);
        for (std::size_t oh = 0; oh < g.h_out; ++oh) {
          std::size_t ih;
          if (!g.in_row(oh, i, ih)) continue;
          const T* irow = in + (ci * g.h_in + ih) * g.w_in;
          T* drow = dst + oh * g.w_out;
          for (std::size_t ow = lo; ow < hi; ++ow)
            drow[ow] = irow[static_cast<long>(ow * g.sw) + off];
        }
      }
}

// Adjoint of im2col: scatter-add column gradients back onto the input.
template <class T>
void col2im(const ConvGeom& g, const T* cols, T* din) {
  const std::size_t plane = g.h_out * g.w_out;
  for (std::size_t ci = 0; ci < g.c_in; ++ci)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* src = cols + ((ci * g.kh + i) * g.kw + j) * plane;
        std::size_t lo, hi;
        g.col_range(j, lo, hi);
        const long off = static_cast<long>(j) - static_cast<long>(g.pw);
        for (std::size_t oh = 0; oh < g.h_out; ++oh) {
          std::size_t ih;
          if (!g.in_row(oh, i, ih)) continue;
          T* drow = din + (ci * g.h_in + ih) * g.w_in;
          const T* srow = src + oh * g.w_out;
          for (std::size_t ow = lo; ow < hi; ++ow)
            drow[static_cast<long>(ow * g.sw) + off] += srow[ow];
        }
      }
}

}  // namespace detail

template <class T>
class Tape {
 public:
  struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
  };

  Tape() = default;
  // An inference tape treats every parameter as a constant, so no
  // backward state is kept.
  explicit Tape(bool track_params) : track_params_(track_params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }

  const NdArray<T>& value(Var v) const { return node(v).value; }
  // Gradient of the last backward's loss w.r.t. v; empty when v did not
  // require a gradient.
  const NdArray<T>& grad(Var v) const { return node(v).grad; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  Var input(NdArray<T> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, nullptr, {});
  }

  Var param(Parameter<T>& p) {
    return push(p.value, track_params_ && !p.frozen, &p, {});
  }

  Var conv2d(Var x, Var w, Var b, Hw stride = {1, 1}, Hw pad = {0, 0}) {
    const auto& xs = value(x).shape();
    const auto& ws = value(w).shape();
    if (xs.size() != 3 || ws.size() != 4)
      throw DimensionError("conv2d expects CHW input and OIHW weights");
    if (ws[1] != xs[0])
      throw DimensionError("conv2d weights expect " + std::to_string(ws[1]) +
                           " input channels, got " + std::to_string(xs[0]));
    if (value(b).size() != ws[0])
      throw DimensionError("conv2d bias length mismatch");
    detail::ConvGeom g{xs[0], xs[1], xs[2], ws[0], ws[2], ws[3],
                       stride.h, stride.w, pad.h, pad.w, 0, 0};
    g.h_out = conv_out_dim(g.h_in, g.kh, g.sh, g.ph);
    g.w_out = conv_out_dim(g.w_in, g.kw, g.sw, g.pw);
    const std::size_t plane = g.h_out * g.w_out;
    const std::size_t rows = g.c_in * g.kh * g.kw;
    NdArray<T> out({g.c_out, g.h_out, g.w_out});
    std::vector<T> cols;
    const T* col_ptr = value(x).data();
    if (!detail::is_pointwise(g)) {
      cols.resize(rows * plane);
      detail::im2col(g, value(x).data(), cols.data());
      col_ptr = cols.data();
    }
    {
      using M = detail::RowMat<T>;
      Eigen::Map<const M> wm(value(w).data(), g.c_out, rows);
      Eigen::Map<const M> cm(col_ptr, rows, plane);
      Eigen::Map<M> om(out.data(), g.c_out, plane);
      om.noalias() = wm * cm;
      const T* bv = value(b).data();
      for (std::size_t co = 0; co < g.c_out; ++co) om.row(co).array() += bv[co];
    }
    const bool rg = any_grad({x, w, b});
    if (!node(w).requires_grad) cols.clear();
    return push(std::move(out), rg, nullptr,
                [this, x, w, b, g, cols = std::move(cols)](Node& self) {
      using M = detail::RowMat<T>;
      Node& nx = node(x);
      Node& nw = node(w);
      Node& nb = node(b);
      const std::size_t plane = g.h_out * g.w_out;
      const std::size_t rows = g.c_in * g.kh * g.kw;
      Eigen::Map<const M> dout(self.grad.data(), g.c_out, plane);
      if (nb.requires_grad) {
        // Plain loop: Eigen's vectorized sum peels by address, which would
        // make the summation order (and the result) allocation dependent.
        for (std::size_t co = 0; co < g.c_out; ++co) {
          const T* row = self.grad.data() + co * plane;
          T acc{0};
          for (std::size_t i = 0; i < plane; ++i) acc += row[i];
          nb.grad[co] += acc;
        }
      }
      if (nw.requires_grad) {
        const T* cp = detail::is_pointwise(g) ? nx.value.data() : cols.data();
        Eigen::Map<const M> cm(cp, rows, plane);
        Eigen::Map<M> dw(nw.grad.data(), g.c_out, rows);
        dw.noalias() += dout * cm.transpose();
      }
      if (nx.requires_grad) {
        Eigen::Map<const M> wm(nw.value.data(), g.c_out, rows);
        if (detail::is_pointwise(g)) {
          Eigen::Map<M> dx(nx.grad.data(), rows, plane);
          dx.noalias() += wm.transpose() * dout;
        } else {
          M dcols = wm.transpose() * dout;
          detail::col2im(g, dcols.data(), nx.grad.data());
        }
      }
    });
  }

  Var linear(Var x, Var w, Var b) {
    const auto& ws = value(w).shape();
    if (ws.size() != 2) throw DimensionError("linear expects m x n weights");
    const std::size_t m = ws[0], n = ws[1];
    if (value(x).size() != n)
      throw DimensionError("linear input length " +
                           std::to_string(value(x).size()) + " != " +
                           std::to_string(n));
    if (value(b).size() != m) throw DimensionError("linear bias length");
    NdArray<T> out({m});
    const T* xv = value(x).data();
    const T* wv = value(w).data();
    const T* bv = value(b).data();
    for (std::size_t i = 0; i < m; ++i) {
      T acc = bv[i];
      for (std::size_t j = 0; j < n; ++j) acc += wv[i * n + j] * xv[j];
      out[i] = acc;
    }
    return push(std::move(out), any_grad({x, w, b}), nullptr,
                [this, x, w, b, m, n](Node& self) {
                  Node& nx = node(x);
                  Node& nw = node(w);
                  Node& nb = node(b);
                  const T* g = self.grad.data();
                  for (std::size_t i = 0; i < m; ++i) {
                    if (nb.requires_grad) nb.grad[i] += g[i];
                    for (std::size_t j = 0; j < n; ++j) {
                      if (nw.requires_grad) nw.grad[i * n + j] += g[i] * nx.value[j];
                      if (nx.requires_grad) nx.grad[j] += g[i] * nw.value[i * n + j];
                    }
                  }
                });
  }

  Var activation(Activation kind, Var x) {
    NdArray<T> out = value(x);
    if (kind == Activation::kRelu) {
      for (auto& v : out.values()) v = v < T{0} ? T{0} : v;  // NaN passes through
    } else {
      for (auto& v : out.values()) v = T{1} / (T{1} + std::exp(-v));
    }
    return push(std::move(out), any_grad({x}), nullptr,
                [this, x, kind](Node& self) {
                  Node& nx = node(x);
                  const std::size_t n = self.value.size();
                  if (kind == Activation::kRelu) {
                    for (std::size_t i = 0; i < n; ++i)
                      if (nx.value[i] > T{0}) nx.grad[i] += self.grad[i];
                  } else {
                    for (std::size_t i = 0; i < n; ++i) {
                      const T y = self.value[i];
                      nx.grad[i] += self.grad[i] * y * (T{1} - y);
                    }
                  }
                });
  }
  Var relu(Var x) { return activation(Activation::kRelu, x); }
  Var sigmoid(Var x) { return activation(Activation::kSigmoid, x); }

  // y[c, ...] = scale[c] * x[c, ...] + shift[c]
  Var affine(Var x, Var scale, Var shift) {
    const auto& xs = value(x).shape();
    const std::size_t c = xs.at(0);
    if (value(scale).size() != c || value(shift).size() != c)
      throw DimensionError("affine scale/shift must have one value per channel");
    const std::size_t plane = value(x).size() / c;
    NdArray<T> out(xs);
    for (std::size_t k = 0; k < c; ++k) {
      const T s = value(scale)[k], b = value(shift)[k];
      const T* src = value(x).data() + k * plane;
      T* dst = out.data() + k * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = s * src[i] + b;
    }
    return push(std::move(out), any_grad({x, scale, shift}), nullptr,
                [this, x, scale, shift, c, plane](Node& self) {
                  Node& nx = node(x);
                  Node& ns = node(scale);
                  Node& nb = node(shift);
                  for (std::size_t k = 0; k < c; ++k) {
                    const T* g = self.grad.data() + k * plane;
                    const T* xv = nx.value.data() + k * plane;
                    T gs = 0, gb = 0;
                    for (std::size_t i = 0; i < plane; ++i) {
                      gs += g[i] * xv[i];
                      gb += g[i];
                    }
                    if (ns.requires_grad) ns.grad[k] += gs;
                    if (nb.requires_grad) nb.grad[k] += gb;
                    if (nx.requires_grad) {
                      T* dx = nx.grad.data() + k * plane;
                      const T s = ns.value[k];
                      for (std::size_t i = 0; i < plane; ++i) dx[i] += s * g[i];
                    }
                  }
                });
  }

  Var add(Var a, Var b) {
    if (value(a).shape() != value(b).shape())
      throw DimensionError("add: shape " + shape_str(value(a).shape()) +
                           " vs " + shape_str(value(b).shape()));
    NdArray<T> out = value(a);
    const T* bv = value(b).data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return push(std::move(out), any_grad({a, b}), nullptr,
                [this, a, b](Node& self) {
                  for (Var v : {a, b}) {
                    Node& n = node(v);
                    if (!n.requires_grad) continue;
                    for (std::size_t i = 0; i < n.grad.size(); ++i)
                      n.grad[i] += self.grad[i];
                  }
                });
  }

  // Concatenate CHW maps along C, in argument order.
  Var concat_channels(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat of nothing");
    const auto& s0 = value(parts[0]).shape();
    std::size_t c = 0;
    for (Var p : parts) {
      const auto& s = value(p).shape();
      if (s.size() != 3 || s[1] != s0[1] || s[2] != s0[2])
        throw DimensionError("concat_channels: incompatible map " +
                             shape_str(s));
      c += s[0];
    }
    if (parts.size() == 1) return parts[0];
    NdArray<T> out({c, s0[1], s0[2]});
    std::size_t off = 0;
    std::vector<Var> ids(parts.begin(), parts.end());
    for (Var p : ids) {
      const auto& v = value(p);
      std::copy(v.data(), v.data() + v.size(), out.data() + off);
      off += v.size();
    }
    return push(std::move(out), any_grad(ids), nullptr,
                [this, ids](Node& self) {
                  std::size_t o = 0;
                  for (Var p : ids) {
                    Node& n = node(p);
                    if (n.requires_grad)
                      for (std::size_t i = 0; i < n.value.size(); ++i)
                        n.grad[i] += self.grad[o + i];
                    o += n.value.size();
                  }
                });
  }

  // C x H x W -> C
  Var global_avg_pool(Var x) {
    const auto& xs = value(x).shape();
    if (xs.size() != 3) throw DimensionError("global_avg_pool expects CHW");
    const std::size_t c = xs[0], plane = xs[1] * xs[2];
    NdArray<T> out({c});
    for (std::size_t k = 0; k < c; ++k) {
      const T* src = value(x).data() + k * plane;
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += src[i];
      out[k] = acc / static_cast<T>(plane);
    }
    return push(std::move(out), any_grad({x}), nullptr,
                [this, x, c, plane](Node& self) {
                  Node& nx = node(x);
                  for (std::size_t k = 0; k < c; ++k) {
                    const T g = self.grad[k] / static_cast<T>(plane);
                    T* dx = nx.grad.data() + k * plane;
                    for (std::size_t i = 0; i < plane; ++i) dx[i] += g;
                  }
                });
  }

  // Mean squared error, a scalar node.
  Var mse(Var pred, Var target) {
    if (value(pred).size() != value(target).size())
      throw DimensionError("mse: length mismatch");
    const std::size_t n = value(pred).size();
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T d = value(pred)[i] - value(target)[i];
      acc += d * d;
    }
    NdArray<T> out({1}, acc / static_cast<T>(n));
    return push(std::move(out), any_grad({pred, target}), nullptr,
                [this, pred, target, n](Node& self) {
                  Node& np = node(pred);
                  Node& nt = node(target);
                  const T g = self.grad[0] * T{2} / static_cast<T>(n);
                  for (std::size_t i = 0; i < n; ++i) {
                    const T d = np.value[i] - nt.value[i];
                    if (np.requires_grad) np.grad[i] += g * d;
                    if (nt.requires_grad) nt.grad[i] -= g * d;
                  }
                });
  }

  // Accumulates d(seed * loss)/dp into every unfrozen parameter on the tape.
  void backward(Var loss, T seed = T{1}) {
    if (nodes_.empty() || loss.id >= nodes_.size())
      throw StateError("backward called before a forward pass was recorded");
    if (consumed_) throw StateError("backward already ran on this tape");
    Node& root = nodes_[loss.id];
    if (root.value.size() != 1)
      throw DimensionError("backward needs a scalar loss, got " +
                           shape_str(root.value.shape()));
    consumed_ = true;
    if (!root.requires_grad) return;
    for (std::size_t i = 0; i <= loss.id; ++i)
      if (nodes_[i].requires_grad) nodes_[i].grad = NdArray<T>(nodes_[i].value.shape());
    root.grad[0] = seed;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad) continue;
      if (n.backward) n.backward(n);
      if (n.param) {
        auto& pg = n.param->grad;
        for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
        n.param->has_grad = true;
      }
    }
  }

 private:
  struct Node {
    NdArray<T> value;
    NdArray<T> grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    std::function<void(Node&)> backward;
  };

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw StateError("unknown tape variable");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw StateError("unknown tape variable");
    return nodes_[v.id];
  }

  bool any_grad(std::initializer_list<Var> vs) const {
    for (Var v : vs)
      if (node(v).requires_grad) return true;
    return false;
  }
  bool any_grad(const std::vector<Var>& vs) const {
    for (Var v : vs)
      if (node(v).requires_grad) return true;
    return false;
  }

  Var push(NdArray<T> value, bool requires_grad, Parameter<T>* param,
           std::function<void(Node&)> bw) {
    if (consumed_) throw StateError("tape already consumed by backward");
    nodes_.push_back(Node{std::move(value), {}, requires_grad, param,
                          requires_grad ? std::move(bw) : nullptr});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
  bool track_params_ = true;
};

}  // namespace doapnn
