#pragma once

#include <algorithm>

#include "mixgan/models.hpp"

namespace mixgan {

struct RegularizerConfig {
  bool gp_enabled = false;
  std::int64_t gp_every = 5;     // apply the penalty every k-th critic iteration
  real_t gp_coefficient = 10.0;
  bool cr_enabled = false;
  real_t cr_coefficient = 1.0;
  std::int64_t cr_max_shift = 4;
  bool cr_include_mixed = false;  // experimental: also enforce consistency on mixed samples

  void validate() const {
    check_config(gp_every >= 1, "gp_every must be >= 1");
    check_config(gp_coefficient > 0, "gp_coefficient must be positive");
    check_config(cr_coefficient > 0, "cr_coefficient must be positive");
    check_config(cr_max_shift >= 0, "cr_max_shift must be >= 0");
  }
};

/// Whether the penalty fires on this 0-indexed critic iteration: with
/// gp_every = k it contributes to exactly floor(N/k) of N iterations.
inline bool gp_applies(std::int64_t d_iter, std::int64_t gp_every) {
  return (d_iter + 1) % gp_every == 0;
}

/// Two-sided gradient penalty at fixed interpolation weights eps [B]:
/// mean over the batch of (||grad_xhat D(xhat)||_2 - 1)^2 with
/// xhat_s = eps_s * real_s + (1 - eps_s) * fake_s.
inline Var gradient_penalty_at(Discriminator& d, const Tensor& reals, const Tensor& fakes,
                               const Tensor& eps) {
  check_shape(reals.shape() == fakes.shape(), "gradient penalty: batch shapes differ");
  check_shape(reals.dim() == 4, "gradient penalty: expected [B,C,H,W] batches");
  const std::int64_t B = reals.size(0);
  check_shape(eps.dim() == 1 && eps.size(0) == B, "gradient penalty: eps must have shape [B]");

  Tensor xhat(reals.shape());
  const std::int64_t per = reals.numel() / B;
  for (std::int64_t s = 0; s < B; ++s) {
    const real_t e = eps[s];
    for (std::int64_t i = 0; i < per; ++i)
      xhat[s * per + i] = e * reals[s * per + i] + (1.0 - e) * fakes[s * per + i];
  }

  Var x = Var::leaf(std::move(xhat), true);
  Var scores = d.forward(x, true);
  if (!scores.requires_grad())
    throw CapabilityError("gradient penalty: discriminator output carries no gradient path");

  // The architectures couple samples through weights only (layer norm is
  // per-sample, no batch norm), so the gradient of the score sum splits into
  // per-sample gradient rows.
  auto gs = grad(sum_all(scores), {x}, /*create_graph=*/true);
  Var flat = reshape(gs[0], {B, per});
  Var sq_norm = sum_axes(mul(flat, flat), {1}, false);            // [B]
  Var norm = sqrt(add_scalar(sq_norm, 1e-12));
  Var excess = add_scalar(norm, -1.0);
  return mean_all(mul(excess, excess));
}

/// Penalty with eps ~ Uniform(0,1) drawn per sample.
inline Var gradient_penalty(Discriminator& d, const Tensor& reals, const Tensor& fakes,
                            Rng& rng) {
  const std::int64_t B = reals.size(0);
  Tensor eps({B});
  for (std::int64_t s = 0; s < B; ++s) eps[s] = rng.uniform();
  return gradient_penalty_at(d, reals, fakes, eps);
}

/// Deterministic flip/shift with explicit parameters: mirror horizontally,
/// then translate by (sx, sy) pixels with replicate-edge padding.
inline Tensor flip_shift(const Tensor& image, bool flip, std::int64_t sx, std::int64_t sy) {
  check_shape(image.dim() == 3, "cr_augment: expected a [C,H,W] image");
  const std::int64_t C = image.size(0), H = image.size(1), W = image.size(2);
  Tensor out(image.shape());
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x) {
        std::int64_t src_y = std::clamp<std::int64_t>(y - sy, 0, H - 1);
        std::int64_t src_x = std::clamp<std::int64_t>(x - sx, 0, W - 1);
        if (flip) src_x = W - 1 - src_x;
        out.at(c, y, x) = image.at(c, src_y, src_x);
      }
  return out;
}

/// Consistency-regularization view: horizontal flip with probability 1/2,
/// then an integer shift drawn uniformly from [-max_shift, max_shift]^2.
/// Draw order: flip coin, x shift, y shift.
inline Tensor cr_augment(const Tensor& image, Rng& rng, std::int64_t max_shift = 4) {
  const bool flip = rng.coin();
  const std::int64_t sx = max_shift > 0 ? rng.uniform_int(-max_shift, max_shift) : 0;
  const std::int64_t sy = max_shift > 0 ? rng.uniform_int(-max_shift, max_shift) : 0;
  return flip_shift(image, flip, sx, sy);
}

/// mean over the batch of (D(x) - D(T(x)))^2 on real samples.
inline Var consistency_regularization(Discriminator& d, const Tensor& reals, Rng& rng,
                                      std::int64_t max_shift = 4) {
  check_shape(reals.dim() == 4 && reals.size(0) >= 1,
              "consistency regularization: expected a nonempty [B,C,H,W] batch");
  const std::int64_t B = reals.size(0);
  Tensor augmented(reals.shape());
  for (std::int64_t s = 0; s < B; ++s)
    set_batch_item(augmented, s, cr_augment(batch_item(reals, s), rng, max_shift));

  Var s_orig = d.forward(Var(reals, false), true);
  Var s_aug = d.forward(Var(augmented, false), true);
  if (grad_mode() && !s_orig.requires_grad() && !s_aug.requires_grad())
    throw CapabilityError("consistency regularization: discriminator output carries no gradient path");
  Var delta = sub(s_orig, s_aug);
  return mean_all(mul(delta, delta));
}

}  // namespace mixgan
