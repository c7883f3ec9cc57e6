#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mixgan/ops.hpp"

namespace mixgan {

struct ParamRef {
  std::string name;
  Var* var;
};

struct BufferRef {
  std::string name;
  Tensor* tensor;
};

inline Var parameter(Tensor t) { return Var::leaf(std::move(t), true); }

inline Tensor normal_init(const Shape& shape, Rng& rng, real_t mean, real_t stddev) {
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(mean, stddev);
  return t;
}

// ---------------------------------------------------------------------------
// Spectral normalization (power iteration, one step per training forward).
// ---------------------------------------------------------------------------

struct PowerIterState {
  Tensor u;  // [rows]
  Tensor v;  // [cols]

  void init(std::int64_t rows, std::int64_t cols, Rng& rng) {
    u = randn({rows}, rng);
    const real_t n = std::sqrt(u.array().square().sum());
    if (n > 0) u.array() /= n;
    v = Tensor::zeros({cols});
  }
};

/// Advance (u, v) one power iteration on w2d and return the spectral-norm
/// estimate u^T W v, floored at eps.
inline real_t power_iteration_step(const Tensor& w2d, PowerIterState& state, real_t eps = 1e-12) {
  check_shape(w2d.dim() == 2, "power_iteration_step: weight must be 2-D");
  const auto W = w2d.matrix();
  Eigen::VectorXd u = Eigen::Map<const Eigen::VectorXd>(state.u.data(), state.u.numel());
  Eigen::VectorXd v = W.transpose() * u;
  v /= std::max(v.norm(), eps);
  u = W * v;
  u /= std::max(u.norm(), eps);
  Tensor nu({w2d.size(0)}), nv({w2d.size(1)});
  Eigen::Map<Eigen::VectorXd>(nu.data(), nu.numel()) = u;
  Eigen::Map<Eigen::VectorXd>(nv.data(), nv.numel()) = v;
  state.u = nu;  // fresh storage; older graphs keep their captured tensors
  state.v = nv;
  const real_t sigma = u.dot(W * v);
  return std::max(sigma, eps);
}

inline real_t spectral_sigma(const Tensor& w2d, const PowerIterState& state, real_t eps = 1e-12) {
  const auto W = w2d.matrix();
  const Eigen::Map<const Eigen::VectorXd> u(state.u.data(), state.u.numel());
  const Eigen::Map<const Eigen::VectorXd> v(state.v.data(), state.v.numel());
  return std::max(static_cast<real_t>(u.dot(W * v)), eps);
}

/// One power-iteration step plus normalization: w / sigma_hat.
inline Tensor spectral_normalize(const Tensor& w2d, PowerIterState& state, real_t eps = 1e-12) {
  const real_t sigma = power_iteration_step(w2d, state, eps);
  Tensor out(w2d.shape());
  out.array() = w2d.array() / sigma;
  return out;
}

/// Graph-aware weight normalization. In training mode the state advances one
/// iteration first; sigma itself is u^T W v with u, v as constants, so the
/// gradient flows through W exactly as in the reference method.
inline Var apply_spectral_norm(const Var& weight, PowerIterState& state, bool training,
                               real_t eps = 1e-12) {
  const std::int64_t rows = weight.shape()[0];
  const std::int64_t cols = weight.numel() / rows;
  const Tensor w2d_vals = weight.val().reshaped({rows, cols});
  if (training) power_iteration_step(w2d_vals, state, eps);
  const real_t sigma_val = spectral_sigma(w2d_vals, state, eps);
  Var w2d = reshape(weight, {rows, cols});
  Var w_hat;
  if (sigma_val <= eps) {
    w_hat = mul_scalar(w2d, 1.0 / eps);  // zero-weight floor
  } else {
    Var sigma = matmul(matmul(constant(state.u.reshaped({1, rows})), w2d),
                       constant(state.v.reshaped({cols, 1})));  // [1,1]
    w_hat = div(w2d, sigma);
  }
  return reshape(w_hat, weight.shape());
}

// ---------------------------------------------------------------------------
// Layers.
// ---------------------------------------------------------------------------

struct Linear {
  std::int64_t in_f = 0, out_f = 0;
  bool spectral = false;
  Var weight;  // [out, in]
  Var bias;    // [out]
  PowerIterState sn;

  void init(std::int64_t in, std::int64_t out, Rng& rng, bool use_spectral) {
    in_f = in;
    out_f = out;
    spectral = use_spectral;
    weight = parameter(normal_init({out, in}, rng, 0.0, 0.02));
    bias = parameter(Tensor::zeros({out}));
    if (spectral) {
      sn.init(out, in, rng);
      power_iteration_step(weight.val(), sn);  // make u, v consistent with W
    }
  }

  Var forward(const Var& x, bool training) {
    Var w = spectral ? apply_spectral_norm(weight, sn, training) : weight;
    return add(matmul(x, w, false, true), reshape(bias, {1, out_f}));
  }

  void register_to(const std::string& p, std::vector<ParamRef>& ps, std::vector<BufferRef>& bs) {
    ps.push_back({p + ".weight", &weight});
    ps.push_back({p + ".bias", &bias});
    if (spectral) {
      bs.push_back({p + ".sn_u", &sn.u});
      bs.push_back({p + ".sn_v", &sn.v});
    }
  }
};

struct Conv2d {
  std::int64_t in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
  bool spectral = false;
  Var weight;  // [out, in, k, k]
  Var bias;    // [out]
  PowerIterState sn;

  void init(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride_,
            std::int64_t pad_, Rng& rng, bool use_spectral) {
    in_c = in;
    out_c = out;
    k = kernel;
    stride = stride_;
    pad = pad_;
    spectral = use_spectral;
    weight = parameter(normal_init({out, in, k, k}, rng, 0.0, 0.02));
    bias = parameter(Tensor::zeros({out}));
    if (spectral) {
      sn.init(out, in * k * k, rng);
      power_iteration_step(weight.val().reshaped({out, in * k * k}), sn);
    }
  }

  Var forward(const Var& x, bool training) {
    Var w = spectral ? apply_spectral_norm(weight, sn, training) : weight;
    const std::int64_t N = x.shape()[0];
    const std::int64_t OH = conv_out_size(x.shape()[2], k, stride, pad);
    const std::int64_t OW = conv_out_size(x.shape()[3], k, stride, pad);
    Var cols = im2col(x, k, stride, pad);                   // [N*OH*OW, in*k*k]
    Var rows = matmul(cols, reshape(w, {out_c, in_c * k * k}), false, true);
    Var y = rows_to_nchw(rows, N, OH, OW);
    return add(y, reshape(bias, {1, out_c, 1, 1}));
  }

  void register_to(const std::string& p, std::vector<ParamRef>& ps, std::vector<BufferRef>& bs) {
    ps.push_back({p + ".weight", &weight});
    ps.push_back({p + ".bias", &bias});
    if (spectral) {
      bs.push_back({p + ".sn_u", &sn.u});
      bs.push_back({p + ".sn_v", &sn.v});
    }
  }
};

struct ConvTranspose2d {
  std::int64_t in_c = 0, out_c = 0, k = 4, stride = 2, pad = 1;
  Var weight;  // [in, out, k, k]
  Var bias;    // [out]

  void init(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride_,
            std::int64_t pad_, Rng& rng) {
    in_c = in;
    out_c = out;
    k = kernel;
    stride = stride_;
    pad = pad_;
    weight = parameter(normal_init({in, out, k, k}, rng, 0.0, 0.02));
    bias = parameter(Tensor::zeros({out}));
  }

  Var forward(const Var& x, bool) {
    const std::int64_t N = x.shape()[0], H = x.shape()[2], W = x.shape()[3];
    const std::int64_t OH = (H - 1) * stride - 2 * pad + k;
    const std::int64_t OW = (W - 1) * stride - 2 * pad + k;
    Var rows = nchw_to_rows(x);                              // [N*H*W, in]
    Var cols = matmul(rows, reshape(weight, {in_c, out_c * k * k}));
    Var y = col2im(cols, {N, out_c, OH, OW}, k, stride, pad);
    return add(y, reshape(bias, {1, out_c, 1, 1}));
  }

  void register_to(const std::string& p, std::vector<ParamRef>& ps, std::vector<BufferRef>&) {
    ps.push_back({p + ".weight", &weight});
    ps.push_back({p + ".bias", &bias});
  }
};

struct BatchNorm2d {
  std::int64_t channels = 0;
  real_t eps = 1e-5;
  real_t momentum = 0.1;
  Var gamma, beta;            // [C]
  Tensor running_mean, running_var;

  void init(std::int64_t C, Rng& rng) {
    channels = C;
    gamma = parameter(normal_init({C}, rng, 1.0, 0.02));  // DCGAN-style affine init
    beta = parameter(Tensor::zeros({C}));
    running_mean = Tensor::zeros({C});
    running_var = Tensor::ones({C});
  }

  Var forward(const Var& x, bool training) {
    const std::int64_t C = channels;
    if (training) {
      Var mean = mean_axes(x, {0, 2, 3}, true);            // [1,C,1,1]
      Var centered = sub(x, mean);
      Var var = mean_axes(square(centered), {0, 2, 3}, true);
      {
        // running stats track the unbiased batch variance, outside the graph
        const std::int64_t n = x.numel() / C;
        const real_t unbias = n > 1 ? static_cast<real_t>(n) / static_cast<real_t>(n - 1) : 1.0;
        Tensor rm = running_mean.clone(), rv = running_var.clone();
        for (std::int64_t c = 0; c < C; ++c) {
          rm[c] = (1 - momentum) * rm[c] + momentum * mean.val()[c];
          rv[c] = (1 - momentum) * rv[c] + momentum * var.val()[c] * unbias;
        }
        running_mean = rm;
        running_var = rv;
      }
      Var xhat = div(centered, sqrt(add_scalar(var, eps)));
      return add(mul(xhat, reshape(gamma, {1, C, 1, 1})), reshape(beta, {1, C, 1, 1}));
    }
    Tensor scale({C}), shift({C});
    for (std::int64_t c = 0; c < C; ++c) {
      scale[c] = 1.0 / std::sqrt(running_var[c] + eps);
      shift[c] = -running_mean[c] * scale[c];
    }
    Var xhat = add(mul(x, constant(scale.reshaped({1, C, 1, 1}))),
                   constant(shift.reshaped({1, C, 1, 1})));
    return add(mul(xhat, reshape(gamma, {1, C, 1, 1})), reshape(beta, {1, C, 1, 1}));
  }

  void register_to(const std::string& p, std::vector<ParamRef>& ps, std::vector<BufferRef>& bs) {
    ps.push_back({p + ".gamma", &gamma});
    ps.push_back({p + ".beta", &beta});
    bs.push_back({p + ".running_mean", &running_mean});
    bs.push_back({p + ".running_var", &running_var});
  }
};

/// Per-sample normalization over (C,H,W), per-channel affine.
struct LayerNorm2d {
  std::int64_t channels = 0;
  real_t eps = 1e-5;
  Var gamma, beta;  // [C]

  void init(std::int64_t C) {
    channels = C;
    gamma = parameter(Tensor::ones({C}));
    beta = parameter(Tensor::zeros({C}));
  }

  Var forward(const Var& x) {
    const std::int64_t C = channels;
    Var mean = mean_axes(x, {1, 2, 3}, true);  // [N,1,1,1]
    Var centered = sub(x, mean);
    Var var = mean_axes(square(centered), {1, 2, 3}, true);
    Var xhat = div(centered, sqrt(add_scalar(var, eps)));
    return add(mul(xhat, reshape(gamma, {1, C, 1, 1})), reshape(beta, {1, C, 1, 1}));
  }

  void register_to(const std::string& p, std::vector<ParamRef>& ps, std::vector<BufferRef>&) {
    ps.push_back({p + ".gamma", &gamma});
    ps.push_back({p + ".beta", &beta});
  }
};

}  // namespace mixgan
