#pragma once

// Differentiable tensor operations. Image-like tensors are single images in
// C x H x W layout; there is no batch dimension.

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <optional>
#include <span>

#include "semadv/core/autodiff.hpp"

namespace semadv::ad {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

inline void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x->value.rank() != rank)
    throw Error(std::string(op) + ": expected rank " + std::to_string(rank) +
                " input, got " + to_string(x->shape()));
}

inline void require_same(const Var& a, const Var& b, const char* op) {
  if (a->shape() != b->shape())
    throw Error(std::string(op) + ": shape mismatch " + to_string(a->shape()) +
                " vs " + to_string(b->shape()));
}

template <class F>
Var unary(const Var& x, F&& f_and_df) {
  Tensor out(x->shape());
  Tensor deriv(x->shape());
  const auto& in = x->value;
  for (std::size_t i = 0; i < in.size(); ++i) {
    auto [y, dy] = f_and_df(in[i]);
    out[i] = y;
    deriv[i] = dy;
  }
  return make_result(std::move(out), {x}, [deriv = std::move(deriv)](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    auto& g = p->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv[i];
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Var add(const Var& a, const Var& b) {
  detail::require_same(a, b, "add");
  Tensor out = a->value;
  out += b->value;
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->grad_buffer() += self.grad;
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same(a, b, "sub");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->grad_buffer() += self.grad;
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same(a, b, "mul");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

inline Var scale(const Var& x, double s) {
  return detail::unary(x, [s](double v) { return std::pair{s * v, s}; });
}

inline Var add_scalar(const Var& x, double s) {
  return detail::unary(x, [s](double v) { return std::pair{v + s, 1.0}; });
}

inline Var relu(const Var& x) {
  return detail::unary(x, [](double v) {
    return v > 0.0 ? std::pair{v, 1.0} : std::pair{0.0, 0.0};
  });
}

inline Var tanh(const Var& x) {
  return detail::unary(x, [](double v) {
    const double t = std::tanh(v);
    return std::pair{t, 1.0 - t * t};
  });
}

inline Var sigmoid(const Var& x) {
  return detail::unary(x, [](double v) {
    const double s = 1.0 / (1.0 + std::exp(-v));
    return std::pair{s, s * (1.0 - s)};
  });
}

inline Var square(const Var& x) {
  return detail::unary(x, [](double v) { return std::pair{v * v, 2.0 * v}; });
}

/// Multiplies a C x H x W tensor by a 1 x H x W tensor broadcast over channels.
inline Var mul_broadcast_channels(const Var& x, const Var& m) {
  detail::require_rank(x, 3, "mul_broadcast_channels");
  detail::require_rank(m, 3, "mul_broadcast_channels");
  const std::size_t C = x->shape()[0], P = x->shape()[1] * x->shape()[2];
  if (m->shape()[0] != 1 || m->shape()[1] != x->shape()[1] ||
      m->shape()[2] != x->shape()[2])
    throw Error("mul_broadcast_channels: mask shape " + to_string(m->shape()) +
                " incompatible with " + to_string(x->shape()));
  Tensor out = x->value;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < P; ++p) out[c * P + p] *= m->value[p];
  return make_result(std::move(out), {x, m}, [C, P](Node& self) {
    const auto& xv = self.parents[0]->value;
    const auto& mv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < P; ++p) g[c * P + p] += self.grad[c * P + p] * mv[p];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < P; ++p) g[p] += self.grad[c * P + p] * xv[c * P + p];
    }
  });
}

/// y[c] = x[c] * scale[c] + shift[c] for a C x H x W input. Used for inference
/// batch normalisation and for input normalisation.
inline Var channel_affine(const Var& x, const Var& scale_c, const Var& shift_c) {
  detail::require_rank(x, 3, "channel_affine");
  const std::size_t C = x->shape()[0], P = x->shape()[1] * x->shape()[2];
  if (scale_c->value.size() != C || shift_c->value.size() != C)
    throw Error("channel_affine: per-channel parameters must have " +
                std::to_string(C) + " entries");
  Tensor out(x->shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < P; ++p)
      out[c * P + p] = x->value[c * P + p] * scale_c->value[c] + shift_c->value[c];
  return make_result(std::move(out), {x, scale_c, shift_c}, [C, P](Node& self) {
    const auto& xv = self.parents[0]->value;
    const auto& sv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < P; ++p) g[c * P + p] += self.grad[c * P + p] * sv[c];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < P; ++p) g[c] += self.grad[c * P + p] * xv[c * P + p];
    }
    if (self.parents[2]->requires_grad) {
      auto& g = self.parents[2]->grad_buffer();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < P; ++p) g[c] += self.grad[c * P + p];
    }
  });
}

// ---------------------------------------------------------------- reductions

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x->value.data()) s += v;
  return make_result(Tensor({1}, {s}), {x}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const double d = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
  });
}

inline Var mean(const Var& x) { return scale(sum(x), 1.0 / double(x->value.size())); }

inline Var sum_squares(const Var& x) {
  double s = 0.0;
  for (double v : x->value.data()) s += v * v;
  return make_result(Tensor({1}, {s}), {x}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const auto& xv = self.parents[0]->value;
    const double d = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * d * xv[i];
  });
}

/// Sum of a list of scalars.
inline Var add_n(const std::vector<Var>& terms) {
  if (terms.empty()) return constant(Tensor({1}, {0.0}));
  double s = 0.0;
  for (const auto& t : terms) {
    if (t->value.size() != 1) throw Error("add_n: terms must be scalars");
    s += t->value[0];
  }
  return make_result(Tensor({1}, {s}), terms, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->grad_buffer()[0] += self.grad[0];
  });
}

// ---------------------------------------------------------------- shape ops

inline Var reshape(const Var& x, Shape shape) {
  Tensor out = x->value.reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

inline Var flatten(const Var& x) { return reshape(x, {x->value.size()}); }

/// Concatenates rank-3 tensors along the channel axis.
inline Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat_channels: no inputs");
  const std::size_t H = parts[0]->shape().at(1), W = parts[0]->shape().at(2);
  std::size_t C = 0;
  for (const auto& p : parts) {
    detail::require_rank(p, 3, "concat_channels");
    if (p->shape()[1] != H || p->shape()[2] != W)
      throw Error("concat_channels: spatial mismatch " + to_string(p->shape()));
    C += p->shape()[0];
  }
  Tensor out({C, H, W});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data().begin(), p->value.data().end(), out.raw() + off);
    off += p->value.size();
  }
  return make_result(std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      const std::size_t n = p->value.size();
      if (p->requires_grad) {
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

/// Channels [begin, end) of a rank-3 tensor.
inline Var slice_channels(const Var& x, std::size_t begin, std::size_t end) {
  detail::require_rank(x, 3, "slice_channels");
  if (begin >= end || end > x->shape()[0])
    throw Error("slice_channels: invalid range for " + to_string(x->shape()));
  const std::size_t P = x->shape()[1] * x->shape()[2];
  Tensor out({end - begin, x->shape()[1], x->shape()[2]});
  std::copy(x->value.raw() + begin * P, x->value.raw() + end * P, out.raw());
  return make_result(std::move(out), {x}, [begin, P](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * P + i] += self.grad[i];
  });
}

/// Nearest-neighbour resampling of a rank-3 tensor to out_h x out_w.
/// Source index is floor(i * in / out).
inline Var upsample_nearest(const Var& x, std::size_t out_h, std::size_t out_w) {
  detail::require_rank(x, 3, "upsample_nearest");
  const std::size_t C = x->shape()[0], H = x->shape()[1], W = x->shape()[2];
  std::vector<std::size_t> src(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t xx = 0; xx < out_w; ++xx)
      src[y * out_w + xx] = (y * H / out_h) * W + (xx * W / out_w);
  Tensor out({C, out_h, out_w});
  const std::size_t P = out_h * out_w;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < P; ++p) out[c * P + p] = x->value[c * H * W + src[p]];
  return make_result(std::move(out), {x}, [src = std::move(src), C, P, HW = H * W](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) g[c * HW + src[p]] += self.grad[c * P + p];
  });
}

/// Row i of a rank-2 tensor, as a rank-1 tensor.
inline Var row(const Var& m, std::size_t i) {
  detail::require_rank(m, 2, "row");
  const std::size_t R = m->shape()[0], C = m->shape()[1];
  if (i >= R) throw Error("row: index " + std::to_string(i) + " outside " + std::to_string(R) + " rows");
  Tensor out({C});
  std::copy(m->value.raw() + i * C, m->value.raw() + (i + 1) * C, out.raw());
  return make_result(std::move(out), {m}, [i, C](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t j = 0; j < C; ++j) g[i * C + j] += self.grad[j];
  });
}

inline Var transpose2d(const Var& m) {
  detail::require_rank(m, 2, "transpose2d");
  const std::size_t R = m->shape()[0], C = m->shape()[1];
  Tensor out({C, R});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c * R + r] = m->value[r * C + c];
  return make_result(std::move(out), {m}, [R, C](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) g[r * C + c] += self.grad[c * R + r];
  });
}

// ---------------------------------------------------------------- linear algebra

/// A (M x K) times B^T (N x K) -> M x N.
inline Var matmul_nt(const Var& a, const Var& b) {
  detail::require_rank(a, 2, "matmul_nt");
  detail::require_rank(b, 2, "matmul_nt");
  const std::size_t M = a->shape()[0], K = a->shape()[1], N = b->shape()[0];
  if (b->shape()[1] != K)
    throw Error("matmul_nt: inner dimension mismatch " + to_string(a->shape()) +
                " vs " + to_string(b->shape()));
  Tensor out({M, N});
  detail::ConstMapMat A(a->value.raw(), M, K), B(b->value.raw(), N, K);
  detail::MapMat(out.raw(), M, N).noalias() = A * B.transpose();
  return make_result(std::move(out), {a, b}, [M, K, N](Node& self) {
    detail::ConstMapMat G(self.grad.raw(), M, N);
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      detail::MapMat(self.parents[0]->grad_buffer().raw(), M, K).noalias() +=
          G * detail::ConstMapMat(bv.raw(), N, K);
    }
    if (self.parents[1]->requires_grad) {
      detail::MapMat(self.parents[1]->grad_buffer().raw(), N, K).noalias() +=
          G.transpose() * detail::ConstMapMat(av.raw(), M, K);
    }
  });
}

/// Fully connected layer: W (M x N) x + b, x flattened to N.
inline Var linear(const Var& x, const Var& w, const Var& b) {
  const std::size_t N = x->value.size();
  if (w->value.rank() != 2 || w->shape()[1] != N)
    throw Error("linear: weight " + to_string(w->shape()) + " incompatible with input of " +
                std::to_string(N) + " values");
  const std::size_t M = w->shape()[0];
  Tensor out({M});
  detail::ConstMapMat W(w->value.raw(), M, N);
  Eigen::Map<const Eigen::VectorXd> X(x->value.raw(), N);
  Eigen::Map<Eigen::VectorXd> Y(out.raw(), M);
  Y.noalias() = W * X;
  if (b) {
    if (b->value.size() != M) throw Error("linear: bias size mismatch");
    for (std::size_t i = 0; i < M; ++i) out[i] += b->value[i];
  }
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  return make_result(std::move(out), std::move(parents), [M, N](Node& self) {
    Eigen::Map<const Eigen::VectorXd> G(self.grad.raw(), M);
    auto& xn = self.parents[0];
    auto& wn = self.parents[1];
    if (xn->requires_grad) {
      Eigen::Map<Eigen::VectorXd>(xn->grad_buffer().raw(), N).noalias() +=
          detail::ConstMapMat(wn->value.raw(), M, N).transpose() * G;
    }
    if (wn->requires_grad) {
      detail::MapMat(wn->grad_buffer().raw(), M, N).noalias() +=
          G * Eigen::Map<const Eigen::VectorXd>(xn->value.raw(), N).transpose();
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& g = self.parents[2]->grad_buffer();
      for (std::size_t i = 0; i < M; ++i) g[i] += self.grad[i];
    }
  });
}

// ---------------------------------------------------------------- convolution

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
};

/// 2-D cross-correlation with zero padding. x: C x H x W, w: O x C x k x k,
/// b: O (may be null).
inline Var conv2d(const Var& x, const Var& w, const Var& b, Conv2dOptions opt = {}) {
  detail::require_rank(x, 3, "conv2d");
  if (w->value.rank() != 4 || w->shape()[1] != x->shape()[0] || w->shape()[2] != w->shape()[3])
    throw Error("conv2d: weight " + to_string(w->shape()) + " incompatible with input " +
                to_string(x->shape()));
  if (opt.stride == 0 || opt.dilation == 0) throw Error("conv2d: stride and dilation must be positive");
  const std::size_t C = x->shape()[0], H = x->shape()[1], W = x->shape()[2];
  const std::size_t O = w->shape()[0], k = w->shape()[2];
  const std::size_t span = opt.dilation * (k - 1) + 1;
  if (H + 2 * opt.padding < span || W + 2 * opt.padding < span)
    throw Error("conv2d: kernel larger than padded input " + to_string(x->shape()));
  const std::size_t Ho = (H + 2 * opt.padding - span) / opt.stride + 1;
  const std::size_t Wo = (W + 2 * opt.padding - span) / opt.stride + 1;
  const std::size_t K = C * k * k, P = Ho * Wo;

  // Column buffer index map: for each (row r of K, output p) the flat input
  // index or -1 for padding.
  std::vector<std::ptrdiff_t> index(K * P);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const std::size_t r = (c * k + ky) * k + kx;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const std::ptrdiff_t iy = std::ptrdiff_t(oy * opt.stride + ky * opt.dilation) -
                                    std::ptrdiff_t(opt.padding);
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const std::ptrdiff_t ix = std::ptrdiff_t(ox * opt.stride + kx * opt.dilation) -
                                      std::ptrdiff_t(opt.padding);
            const bool inside = iy >= 0 && ix >= 0 && iy < std::ptrdiff_t(H) && ix < std::ptrdiff_t(W);
            index[r * P + oy * Wo + ox] =
                inside ? std::ptrdiff_t((c * H + std::size_t(iy)) * W + std::size_t(ix)) : -1;
          }
        }
      }
  detail::RowMat cols(K, P);
  for (std::size_t i = 0; i < K * P; ++i)
    cols.data()[i] = index[i] >= 0 ? x->value[std::size_t(index[i])] : 0.0;

  Tensor out({O, Ho, Wo});
  detail::MapMat Y(out.raw(), O, P);
  Y.noalias() = detail::ConstMapMat(w->value.raw(), O, K) * cols;
  if (b) {
    if (b->value.size() != O) throw Error("conv2d: bias size mismatch");
    for (std::size_t o = 0; o < O; ++o) Y.row(o).array() += b->value[o];
  }
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  return make_result(std::move(out), std::move(parents),
                     [cols = std::move(cols), index = std::move(index), O, K, P](Node& self) {
    detail::ConstMapMat G(self.grad.raw(), O, P);
    auto& xn = self.parents[0];
    auto& wn = self.parents[1];
    if (wn->requires_grad)
      detail::MapMat(wn->grad_buffer().raw(), O, K).noalias() += G * cols.transpose();
    if (xn->requires_grad) {
      detail::RowMat dcols = detail::ConstMapMat(wn->value.raw(), O, K).transpose() * G;
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < K * P; ++i)
        if (index[i] >= 0) g[std::size_t(index[i])] += dcols.data()[i];
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& g = self.parents[2]->grad_buffer();
      for (std::size_t o = 0; o < O; ++o) g[o] += G.row(o).sum();
    }
  });
}

// ---------------------------------------------------------------- pooling

/// Max pooling over k x k windows. Padding cells never win (they act as
/// -infinity).
inline Var max_pool2d(const Var& x, std::size_t k, std::size_t stride, std::size_t padding = 0) {
  detail::require_rank(x, 3, "max_pool2d");
  const std::size_t C = x->shape()[0], H = x->shape()[1], W = x->shape()[2];
  if (H + 2 * padding < k || W + 2 * padding < k || padding >= k)
    throw Error("max_pool2d: invalid window for input " + to_string(x->shape()));
  const std::size_t Ho = (H + 2 * padding - k) / stride + 1, Wo = (W + 2 * padding - k) / stride + 1;
  Tensor out({C, Ho, Wo});
  std::vector<std::size_t> arg(out.size());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t bi = 0;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const auto iy = std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(padding);
            const auto ix = std::ptrdiff_t(ox * stride + kx) - std::ptrdiff_t(padding);
            if (iy < 0 || ix < 0 || iy >= std::ptrdiff_t(H) || ix >= std::ptrdiff_t(W)) continue;
            const std::size_t i = (c * H + std::size_t(iy)) * W + std::size_t(ix);
            if (x->value[i] > best) {
              best = x->value[i];
              bi = i;
            }
          }
        const std::size_t o = (c * Ho + oy) * Wo + ox;
        out[o] = best;
        arg[o] = bi;
      }
  return make_result(std::move(out), {x}, [arg = std::move(arg)](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += self.grad[o];
  });
}

inline Var avg_pool2d(const Var& x, std::size_t k, std::size_t stride) {
  detail::require_rank(x, 3, "avg_pool2d");
  const std::size_t C = x->shape()[0], H = x->shape()[1], W = x->shape()[2];
  if (H < k || W < k) throw Error("avg_pool2d: window larger than input");
  const std::size_t Ho = (H - k) / stride + 1, Wo = (W - k) / stride + 1;
  const double inv = 1.0 / double(k * k);
  Tensor out({C, Ho, Wo});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        double s = 0.0;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx)
            s += x->value.at(c, oy * stride + ky, ox * stride + kx);
        out.at(c, oy, ox) = s * inv;
      }
  return make_result(std::move(out), {x}, [k, stride, inv](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const auto& s = self.grad.shape();
    for (std::size_t c = 0; c < s[0]; ++c)
      for (std::size_t oy = 0; oy < s[1]; ++oy)
        for (std::size_t ox = 0; ox < s[2]; ++ox) {
          const double d = self.grad.at(c, oy, ox) * inv;
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) g.at(c, oy * stride + ky, ox * stride + kx) += d;
        }
  });
}

/// C x H x W -> C, spatial mean per channel.
inline Var global_avg_pool(const Var& x) {
  detail::require_rank(x, 3, "global_avg_pool");
  const std::size_t C = x->shape()[0], P = x->shape()[1] * x->shape()[2];
  Tensor out({C});
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t p = 0; p < P; ++p) s += x->value[c * P + p];
    out[c] = s / double(P);
  }
  return make_result(std::move(out), {x}, [C, P](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t c = 0; c < C; ++c) {
      const double d = self.grad[c] / double(P);
      for (std::size_t p = 0; p < P; ++p) g[c * P + p] += d;
    }
  });
}

// ---------------------------------------------------------------- softmax & losses

inline std::vector<double> softmax_values(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double m = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) z += (v = std::exp(v - m));
  for (double& v : p) v /= z;
  return p;
}

/// Softmax across the channel axis at every pixel of a C x H x W tensor.
inline Var softmax_channels(const Var& x) {
  detail::require_rank(x, 3, "softmax_channels");
  const std::size_t C = x->shape()[0], P = x->shape()[1] * x->shape()[2];
  Tensor out(x->shape());
  for (std::size_t p = 0; p < P; ++p) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) m = std::max(m, x->value[c * P + p]);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += (out[c * P + p] = std::exp(x->value[c * P + p] - m));
    for (std::size_t c = 0; c < C; ++c) out[c * P + p] /= z;
  }
  return make_result(std::move(out), {x}, [C, P](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const auto& y = self.value;
    for (std::size_t p = 0; p < P; ++p) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += self.grad[c * P + p] * y[c * P + p];
      for (std::size_t c = 0; c < C; ++c)
        g[c * P + p] += y[c * P + p] * (self.grad[c * P + p] - dot);
    }
  });
}

/// Softmax of a rank-1 tensor.
inline Var softmax(const Var& x) {
  detail::require_rank(x, 1, "softmax");
  auto p = softmax_values(x->value.data());
  const std::size_t n = p.size();
  return make_result(Tensor({n}, std::move(p)), {x}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const auto& y = self.value;
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += self.grad[i] * y[i];
    for (std::size_t i = 0; i < y.size(); ++i) g[i] += y[i] * (self.grad[i] - dot);
  });
}

/// Cross-entropy -log softmax(logits)[target] for a rank-1 logit vector.
inline Var cross_entropy(const Var& logits, std::size_t target) {
  const std::size_t N = logits->value.size();
  if (target >= N)
    throw Error("cross_entropy: target " + std::to_string(target) + " outside " +
                std::to_string(N) + " classes");
  auto p = softmax_values(logits->value.data());
  // logsumexp - logit[target]
  const auto& l = logits->value;
  const double m = *std::max_element(l.data().begin(), l.data().end());
  double z = 0.0;
  for (double v : l.data()) z += std::exp(v - m);
  const double loss = m + std::log(z) - l[target];
  return make_result(Tensor({1}, {loss}), {logits}, [p = std::move(p), target](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const double d = self.grad[0];
    for (std::size_t i = 0; i < p.size(); ++i) g[i] += d * (p[i] - (i == target ? 1.0 : 0.0));
  });
}

}  // namespace semadv::ad
