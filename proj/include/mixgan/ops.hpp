#pragma once

#include <cmath>
#include <vector>

#include "mixgan/autodiff.hpp"

namespace mixgan {

// ---------------------------------------------------------------------------
// Broadcasting (NumPy rules: align trailing dims, size-1 dims stretch).
// ---------------------------------------------------------------------------

inline Shape bcast_shape(const Shape& a, const Shape& b) {
  const std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    const std::int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da == db || db == 1)
      out[nd - 1 - i] = da;
    else if (da == 1)
      out[nd - 1 - i] = db;
    else
      throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
  }
  return out;
}

namespace detail {

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
  std::vector<std::int64_t> str(s.size());
  std::int64_t acc = 1;
  for (std::size_t d = s.size(); d-- > 0;) {
    str[d] = acc;
    acc *= s[d];
  }
  return str;
}

// Strides of `small` viewed inside iteration space `big` (0 on stretched dims).
inline std::vector<std::int64_t> bcast_strides(const Shape& small, const Shape& big) {
  const auto sstr = row_major_strides(small);
  std::vector<std::int64_t> str(big.size(), 0);
  const std::size_t off = big.size() - small.size();
  for (std::size_t i = 0; i < big.size(); ++i) {
    if (i < off) continue;
    const std::size_t si = i - off;
    if (small[si] == big[i])
      str[i] = sstr[si];
    else if (small[si] == 1)
      str[i] = 0;
    else
      throw ShapeError("broadcast: cannot map " + shape_str(small) + " into " + shape_str(big));
  }
  return str;
}

}  // namespace detail

inline Tensor broadcast_values(const Tensor& x, const Shape& to) {
  if (x.shape() == to) return x;
  const auto str = detail::bcast_strides(x.shape(), to);
  Tensor out(to);
  const std::int64_t n = out.numel();
  const std::size_t nd = to.size();
  std::vector<std::int64_t> idx(nd, 0);
  const real_t* src = x.data();
  real_t* dst = out.data();
  std::int64_t off = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    dst[i] = src[off];
    for (std::size_t d = nd; d-- > 0;) {
      ++idx[d];
      off += str[d];
      if (idx[d] < to[d]) break;
      idx[d] = 0;
      off -= str[d] * to[d];
    }
  }
  return out;
}

inline Tensor sum_to_values(const Tensor& x, const Shape& to) {
  if (x.shape() == to) return x;
  const auto str = detail::bcast_strides(to, x.shape());
  Tensor out(to);
  const std::int64_t n = x.numel();
  const std::size_t nd = x.shape().size();
  std::vector<std::int64_t> idx(nd, 0);
  const real_t* src = x.data();
  real_t* dst = out.data();
  std::int64_t off = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    dst[off] += src[i];
    for (std::size_t d = nd; d-- > 0;) {
      ++idx[d];
      off += str[d];
      if (idx[d] < x.shape()[d]) break;
      idx[d] = 0;
      off -= str[d] * x.shape()[d];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Primitive ops. Every backward is built from these same ops, which keeps the
// backward graph differentiable (needed for the gradient penalty).
// ---------------------------------------------------------------------------

inline Var broadcast_to(const Var& x, const Shape& shape);
inline Var sum_to(const Var& x, const Shape& shape);
inline Var add(const Var& a, const Var& b);
inline Var mul(const Var& a, const Var& b);
inline Var mul_scalar(const Var& x, real_t c);
inline Var pow_scalar(const Var& x, real_t p);
inline Var avg_pool2d(const Var& x, std::int64_t k);
inline Var nearest_upsample(const Var& x, std::int64_t k);
inline Var im2col(const Var& x, std::int64_t k, std::int64_t stride, std::int64_t pad);
inline Var col2im(const Var& cols, const Shape& img_shape, std::int64_t k, std::int64_t stride, std::int64_t pad);

inline Var broadcast_to(const Var& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  const Shape orig = x.shape();
  return make_op(
      broadcast_values(x.val(), shape), {x},
      [orig](const Var& g) { return std::vector<Var>{sum_to(g, orig)}; }, "broadcast_to");
}

inline Var sum_to(const Var& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  const Shape orig = x.shape();
  return make_op(
      sum_to_values(x.val(), shape), {x},
      [orig](const Var& g) { return std::vector<Var>{broadcast_to(g, orig)}; }, "sum_to");
}

inline Var reshape(const Var& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  const Shape orig = x.shape();
  return make_op(
      x.val().reshaped(shape), {x},
      [orig](const Var& g) { return std::vector<Var>{reshape(g, orig)}; }, "reshape");
}

inline Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    const Shape to = bcast_shape(a.shape(), b.shape());
    return add(broadcast_to(a, to), broadcast_to(b, to));
  }
  Tensor out(a.shape());
  out.array() = a.val().array() + b.val().array();
  return make_op(
      std::move(out), {a, b}, [](const Var& g) { return std::vector<Var>{g, g}; }, "add");
}

namespace detail {
inline Var add_accum(const Var& a, const Var& b) { return add(a, b); }
}  // namespace detail

inline Var mul(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    const Shape to = bcast_shape(a.shape(), b.shape());
    return mul(broadcast_to(a, to), broadcast_to(b, to));
  }
  Tensor out(a.shape());
  out.array() = a.val().array() * b.val().array();
  return make_op(
      std::move(out), {a, b},
      [a, b](const Var& g) { return std::vector<Var>{mul(g, b), mul(g, a)}; }, "mul");
}

inline Var mul_scalar(const Var& x, real_t c) {
  Tensor out(x.shape());
  out.array() = x.val().array() * c;
  return make_op(
      std::move(out), {x},
      [c](const Var& g) { return std::vector<Var>{mul_scalar(g, c)}; }, "mul_scalar");
}

inline Var neg(const Var& x) { return mul_scalar(x, -1.0); }

inline Var sub(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    const Shape to = bcast_shape(a.shape(), b.shape());
    return sub(broadcast_to(a, to), broadcast_to(b, to));
  }
  Tensor out(a.shape());
  out.array() = a.val().array() - b.val().array();
  return make_op(
      std::move(out), {a, b},
      [](const Var& g) { return std::vector<Var>{g, neg(g)}; }, "sub");
}

inline Var div(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    const Shape to = bcast_shape(a.shape(), b.shape());
    return div(broadcast_to(a, to), broadcast_to(b, to));
  }
  Tensor out(a.shape());
  out.array() = a.val().array() / b.val().array();
  return make_op(
      std::move(out), {a, b},
      [a, b](const Var& g) {
        Var ga = div(g, b);
        Var gb = neg(div(mul(g, a), mul(b, b)));
        return std::vector<Var>{ga, gb};
      },
      "div");
}

inline Var add_scalar(const Var& x, real_t c) {
  Tensor out(x.shape());
  out.array() = x.val().array() + c;
  return make_op(
      std::move(out), {x}, [](const Var& g) { return std::vector<Var>{g}; }, "add_scalar");
}

/// c - x.
inline Var rsub_scalar(real_t c, const Var& x) {
  Tensor out(x.shape());
  out.array() = c - x.val().array();
  return make_op(
      std::move(out), {x}, [](const Var& g) { return std::vector<Var>{neg(g)}; }, "rsub_scalar");
}

inline Var relu(const Var& x) {
  Tensor out(x.shape());
  Tensor mask(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const real_t v = x.val()[i];
    out[i] = v > 0 ? v : 0;
    mask[i] = v > 0 ? 1.0 : 0.0;
  }
  return make_op(
      std::move(out), {x},
      [mask](const Var& g) { return std::vector<Var>{mul(g, constant(mask))}; }, "relu");
}

inline Var leaky_relu(const Var& x, real_t slope) {
  Tensor out(x.shape());
  Tensor mask(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const real_t v = x.val()[i];
    out[i] = v > 0 ? v : slope * v;
    mask[i] = v > 0 ? 1.0 : slope;
  }
  return make_op(
      std::move(out), {x},
      [mask](const Var& g) { return std::vector<Var>{mul(g, constant(mask))}; }, "leaky_relu");
}

inline Var tanh(const Var& x) {
  Tensor out(x.shape());
  out.array() = x.val().array().tanh();
  return make_op(
      std::move(out), {x},
      [x](const Var& g) {
        Var t = tanh(x);  // recomputed so the derivative stays differentiable
        return std::vector<Var>{mul(g, rsub_scalar(1.0, mul(t, t)))};
      },
      "tanh");
}

inline Var pow_scalar(const Var& x, real_t p) {
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = std::pow(x.val()[i], p);
  return make_op(
      std::move(out), {x},
      [x, p](const Var& g) {
        return std::vector<Var>{mul(g, mul_scalar(pow_scalar(x, p - 1.0), p))};
      },
      "pow_scalar");
}

inline Var sqrt(const Var& x) {
  Tensor out(x.shape());
  out.array() = x.val().array().sqrt();
  return make_op(
      std::move(out), {x},
      [x](const Var& g) {
        return std::vector<Var>{mul(g, mul_scalar(pow_scalar(x, -0.5), 0.5))};
      },
      "sqrt");
}

inline Var square(const Var& x) { return mul(x, x); }

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

inline Var sum_all(const Var& x) {
  const Shape orig = x.shape();
  return make_op(
      Tensor::scalar(sum_value(x.val())), {x},
      [orig](const Var& g) { return std::vector<Var>{broadcast_to(g, orig)}; }, "sum_all");
}

inline Var mean_all(const Var& x) {
  return mul_scalar(sum_all(x), 1.0 / static_cast<real_t>(x.numel()));
}

inline Var sum_axes(const Var& x, const std::vector<std::int64_t>& axes, bool keepdims = true) {
  Shape target = x.shape();
  for (auto a : axes) target.at(static_cast<std::size_t>(a)) = 1;
  Var y = sum_to(x, target);
  if (!keepdims) {
    Shape squeezed;
    for (std::size_t d = 0; d < target.size(); ++d) {
      bool reduced = false;
      for (auto a : axes) reduced |= (static_cast<std::size_t>(a) == d);
      if (!reduced) squeezed.push_back(target[d]);
    }
    y = reshape(y, squeezed);
  }
  return y;
}

inline Var mean_axes(const Var& x, const std::vector<std::int64_t>& axes, bool keepdims = true) {
  std::int64_t n = 1;
  for (auto a : axes) n *= x.shape().at(static_cast<std::size_t>(a));
  return mul_scalar(sum_axes(x, axes, keepdims), 1.0 / static_cast<real_t>(n));
}

// ---------------------------------------------------------------------------
// Matrix multiply (2-D, optional operand transposes).
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b, bool ta = false, bool tb = false) {
  check_shape(a.val().dim() == 2 && b.val().dim() == 2, "matmul: operands must be 2-D");
  const auto A = a.val().matrix();
  const auto B = b.val().matrix();
  const std::int64_t m = ta ? A.cols() : A.rows();
  const std::int64_t ka = ta ? A.rows() : A.cols();
  const std::int64_t kb = tb ? B.cols() : B.rows();
  const std::int64_t n = tb ? B.rows() : B.cols();
  check_shape(ka == kb, "matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                            shape_str(b.shape()));
  Tensor out({m, n});
  auto C = out.matrix();
  if (!ta && !tb)
    C.noalias() = A * B;
  else if (ta && !tb)
    C.noalias() = A.transpose() * B;
  else if (!ta && tb)
    C.noalias() = A * B.transpose();
  else
    C.noalias() = A.transpose() * B.transpose();
  return make_op(
      std::move(out), {a, b},
      [a, b, ta, tb](const Var& g) {
        Var ga = !ta ? matmul(g, b, false, !tb) : matmul(b, g, tb, true);
        Var gb = !tb ? matmul(a, g, !ta, false) : matmul(g, a, true, ta);
        return std::vector<Var>{ga, gb};
      },
      "matmul");
}

// ---------------------------------------------------------------------------
// Convolution building blocks: im2col / col2im and NHWC-row <-> NCHW permutes.
// im2col and col2im are exact adjoints for a fixed geometry.
// ---------------------------------------------------------------------------

inline std::int64_t conv_out_size(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline Tensor im2col_values(const Tensor& x, std::int64_t k, std::int64_t stride, std::int64_t pad) {
  check_shape(x.dim() == 4, "im2col: expect [N,C,H,W]");
  const std::int64_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  const std::int64_t OH = conv_out_size(H, k, stride, pad);
  const std::int64_t OW = conv_out_size(W, k, stride, pad);
  check_shape(OH >= 1 && OW >= 1, "im2col: kernel larger than padded input");
  Tensor out({N * OH * OW, C * k * k});
  real_t* dst = out.data();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t oh = 0; oh < OH; ++oh)
      for (std::int64_t ow = 0; ow < OW; ++ow) {
        for (std::int64_t c = 0; c < C; ++c)
          for (std::int64_t ki = 0; ki < k; ++ki) {
            const std::int64_t ih = oh * stride - pad + ki;
            for (std::int64_t kj = 0; kj < k; ++kj) {
              const std::int64_t iw = ow * stride - pad + kj;
              *dst++ = (ih >= 0 && ih < H && iw >= 0 && iw < W) ? x.at(n, c, ih, iw) : 0.0;
            }
          }
      }
  return out;
}

inline Tensor col2im_values(const Tensor& cols, const Shape& img_shape, std::int64_t k,
                            std::int64_t stride, std::int64_t pad) {
  check_shape(img_shape.size() == 4, "col2im: expect image shape [N,C,H,W]");
  const std::int64_t N = img_shape[0], C = img_shape[1], H = img_shape[2], W = img_shape[3];
  const std::int64_t OH = conv_out_size(H, k, stride, pad);
  const std::int64_t OW = conv_out_size(W, k, stride, pad);
  check_shape(cols.dim() == 2 && cols.size(0) == N * OH * OW && cols.size(1) == C * k * k,
              "col2im: column shape does not match geometry");
  Tensor out(img_shape);
  const real_t* src = cols.data();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t oh = 0; oh < OH; ++oh)
      for (std::int64_t ow = 0; ow < OW; ++ow) {
        for (std::int64_t c = 0; c < C; ++c)
          for (std::int64_t ki = 0; ki < k; ++ki) {
            const std::int64_t ih = oh * stride - pad + ki;
            for (std::int64_t kj = 0; kj < k; ++kj) {
              const std::int64_t iw = ow * stride - pad + kj;
              if (ih >= 0 && ih < H && iw >= 0 && iw < W) out.at(n, c, ih, iw) += *src;
              ++src;
            }
          }
      }
  return out;
}

inline Var im2col(const Var& x, std::int64_t k, std::int64_t stride, std::int64_t pad) {
  const Shape orig = x.shape();
  return make_op(
      im2col_values(x.val(), k, stride, pad), {x},
      [orig, k, stride, pad](const Var& g) {
        return std::vector<Var>{col2im(g, orig, k, stride, pad)};
      },
      "im2col");
}

inline Var col2im(const Var& cols, const Shape& img_shape, std::int64_t k, std::int64_t stride,
                  std::int64_t pad) {
  return make_op(
      col2im_values(cols.val(), img_shape, k, stride, pad), {cols},
      [k, stride, pad](const Var& g) { return std::vector<Var>{im2col(g, k, stride, pad)}; },
      "col2im");
}

inline Tensor rows_to_nchw_values(const Tensor& rows, std::int64_t N, std::int64_t H, std::int64_t W) {
  const std::int64_t C = rows.size(1);
  check_shape(rows.size(0) == N * H * W, "rows_to_nchw: row count mismatch");
  Tensor out({N, C, H, W});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t h = 0; h < H; ++h)
      for (std::int64_t w = 0; w < W; ++w) {
        const real_t* src = rows.data() + ((n * H + h) * W + w) * C;
        for (std::int64_t c = 0; c < C; ++c) out.at(n, c, h, w) = src[c];
      }
  return out;
}

inline Tensor nchw_to_rows_values(const Tensor& x) {
  const std::int64_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  Tensor out({N * H * W, C});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t h = 0; h < H; ++h)
      for (std::int64_t w = 0; w < W; ++w) {
        real_t* dst = out.data() + ((n * H + h) * W + w) * C;
        for (std::int64_t c = 0; c < C; ++c) dst[c] = x.at(n, c, h, w);
      }
  return out;
}

inline Var nchw_to_rows(const Var& x);

/// [N*H*W, C] rows (NHW order) -> [N, C, H, W].
inline Var rows_to_nchw(const Var& rows, std::int64_t N, std::int64_t H, std::int64_t W) {
  return make_op(
      rows_to_nchw_values(rows.val(), N, H, W), {rows},
      [](const Var& g) { return std::vector<Var>{nchw_to_rows(g)}; }, "rows_to_nchw");
}

inline Var nchw_to_rows(const Var& x) {
  const std::int64_t N = x.shape()[0], H = x.shape()[2], W = x.shape()[3];
  return make_op(
      nchw_to_rows_values(x.val()), {x},
      [N, H, W](const Var& g) { return std::vector<Var>{rows_to_nchw(g, N, H, W)}; },
      "nchw_to_rows");
}

// ---------------------------------------------------------------------------
// Pooling / upsampling (non-overlapping, factor k). Mutually adjoint up to
// the 1/k^2 averaging factor.
// ---------------------------------------------------------------------------

inline Tensor avg_pool2d_values(const Tensor& x, std::int64_t k) {
  const std::int64_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  check_shape(H % k == 0 && W % k == 0, "avg_pool2d: spatial dims must divide by " + std::to_string(k));
  Tensor out({N, C, H / k, W / k});
  const real_t inv = 1.0 / static_cast<real_t>(k * k);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t oh = 0; oh < H / k; ++oh)
        for (std::int64_t ow = 0; ow < W / k; ++ow) {
          real_t acc = 0;
          for (std::int64_t i = 0; i < k; ++i)
            for (std::int64_t j = 0; j < k; ++j) acc += x.at(n, c, oh * k + i, ow * k + j);
          out.at(n, c, oh, ow) = acc * inv;
        }
  return out;
}

inline Tensor nearest_upsample_values(const Tensor& x, std::int64_t k) {
  const std::int64_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  Tensor out({N, C, H * k, W * k});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w) {
          const real_t v = x.at(n, c, h, w);
          for (std::int64_t i = 0; i < k; ++i)
            for (std::int64_t j = 0; j < k; ++j) out.at(n, c, h * k + i, w * k + j) = v;
        }
  return out;
}

inline Var avg_pool2d(const Var& x, std::int64_t k) {
  return make_op(
      avg_pool2d_values(x.val(), k), {x},
      [k](const Var& g) {
        return std::vector<Var>{mul_scalar(nearest_upsample(g, k), 1.0 / static_cast<real_t>(k * k))};
      },
      "avg_pool2d");
}

inline Var nearest_upsample(const Var& x, std::int64_t k) {
  return make_op(
      nearest_upsample_values(x.val(), k), {x},
      [k](const Var& g) {
        return std::vector<Var>{mul_scalar(avg_pool2d(g, k), static_cast<real_t>(k * k))};
      },
      "nearest_upsample");
}

}  // namespace mixgan
