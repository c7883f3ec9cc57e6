#pragma once

#include <cmath>
#include <utility>

#include "mixgan/rng.hpp"
#include "mixgan/tensor.hpp"

namespace mixgan {

// Mask-based sample mixing: x_tilde = M (.) x_i + (1 - M) (.) x_j, with M a
// per-pixel weight map in [0,1]^{HxW} shared across channels. Three mask
// families: spatially constant (mixup), binary rectangle (cutmix), and a
// smooth one-axis ramp (srmix).

struct MixupParams {
  real_t alpha = 1.0;  // Beta(alpha, alpha) concentration; alpha=1 is uniform
};

struct CutMixBox {
  std::int64_t r_x = 0, r_y = 0;  // top-left corner (x = column, y = row)
  std::int64_t r_w = 1, r_h = 1;  // extents, >= 1
};

enum class MixAxis { horizontal, vertical };  // horizontal: varies along width

struct SRMixParams {
  int sigma = 1;  // +1 or -1, ramp direction
  MixAxis axis = MixAxis::horizontal;
  real_t x0 = 0;  // ramp center, continuous pixel coordinate
  real_t dx = 2;  // transition width, pixels
};

enum class MixKind { none, mixup, cutmix, srmix };

enum class MixPairing { real_fake, real_real, fake_fake };

struct MixStrategyConfig {
  MixKind kind = MixKind::none;
  MixupParams mixup;
  MixPairing pairing = MixPairing::real_fake;
};

inline const char* mix_kind_name(MixKind k) {
  switch (k) {
    case MixKind::none: return "none";
    case MixKind::mixup: return "mixup";
    case MixKind::cutmix: return "cutmix";
    case MixKind::srmix: return "srmix";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Mask constructors (deterministic given parameters).
// ---------------------------------------------------------------------------

inline Tensor mixup_mask_from_lambda(std::int64_t H, std::int64_t W, real_t lambda) {
  check_config(lambda >= 0.0 && lambda <= 1.0, "mixup lambda must lie in [0,1]");
  return Tensor::full({H, W}, lambda);
}

inline Tensor cutmix_mask_from_box(std::int64_t H, std::int64_t W, const CutMixBox& box) {
  check_config(box.r_w >= 1 && box.r_h >= 1, "cutmix box extents must be >= 1");
  check_config(box.r_x >= 0 && box.r_y >= 0 && box.r_x + box.r_w <= W && box.r_y + box.r_h <= H,
               "cutmix box must lie fully inside the image");
  Tensor mask = Tensor::zeros({H, W});
  for (std::int64_t y = box.r_y; y < box.r_y + box.r_h; ++y)
    for (std::int64_t x = box.r_x; x < box.r_x + box.r_w; ++x) mask.at(y, x) = 1.0;
  return mask;
}

inline Tensor srmix_mask_from_params(std::int64_t H, std::int64_t W, const SRMixParams& p) {
  check_config(p.sigma == 1 || p.sigma == -1, "srmix sigma must be +1 or -1");
  check_config(p.dx > 0, "srmix dx must be positive");
  Tensor mask({H, W});
  // Evaluated at 0-indexed integer pixel centers along the ramp axis.
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x) {
      const real_t t = p.axis == MixAxis::horizontal ? static_cast<real_t>(x)
                                                     : static_cast<real_t>(y);
      mask.at(y, x) = 0.5 * (1.0 + p.sigma * std::tanh((t - p.x0) / p.dx));
    }
  return mask;
}

// ---------------------------------------------------------------------------
// Mask samplers. Draw order is part of the contract (training reproducibility):
// mixup draws lambda; cutmix draws lambda then the two center coordinates;
// srmix draws sigma, axis, x0, dx.
// ---------------------------------------------------------------------------

inline Tensor sample_mixup_mask(std::int64_t H, std::int64_t W, const MixupParams& params,
                                Rng& rng) {
  check_config(H >= 1 && W >= 1, "mask shape must be at least 1x1");
  check_config(params.alpha > 0, "mixup alpha must be positive");
  return mixup_mask_from_lambda(H, W, rng.beta(params.alpha, params.alpha));
}

/// Box area fraction follows 1 - lambda with lambda ~ Beta(1,1); each side is
/// scaled by sqrt(1-lambda). The center is drawn uniformly, then clamped so
/// the whole box stays inside the image — this keeps the mean area fraction at
/// 1/2 (plain edge-cropping would bias it down to ~1/3).
inline std::pair<Tensor, CutMixBox> sample_cutmix_mask(std::int64_t H, std::int64_t W, Rng& rng) {
  check_config(H >= 4 && W >= 4, "cutmix needs at least a 4x4 image");
  const real_t lambda = rng.beta(1.0, 1.0);
  const real_t side = std::sqrt(1.0 - lambda);
  CutMixBox box;
  box.r_w = std::clamp<std::int64_t>(std::llround(W * side), 1, W);
  box.r_h = std::clamp<std::int64_t>(std::llround(H * side), 1, H);
  const real_t cx = rng.uniform(0.0, static_cast<real_t>(W));
  const real_t cy = rng.uniform(0.0, static_cast<real_t>(H));
  box.r_x = std::clamp<std::int64_t>(std::llround(cx - box.r_w / 2.0), 0, W - box.r_w);
  box.r_y = std::clamp<std::int64_t>(std::llround(cy - box.r_h / 2.0), 0, H - box.r_h);
  return {cutmix_mask_from_box(H, W, box), box};
}

inline std::pair<Tensor, SRMixParams> sample_srmix_mask(std::int64_t H, std::int64_t W,
                                                        std::int64_t resolution, Rng& rng) {
  check_config(H >= 1 && W >= 1, "mask shape must be at least 1x1");
  check_config(resolution >= 1, "resolution must be positive");
  SRMixParams p;
  p.sigma = rng.coin() ? 1 : -1;
  p.axis = rng.coin() ? MixAxis::horizontal : MixAxis::vertical;
  const std::int64_t L = p.axis == MixAxis::horizontal ? W : H;
  p.x0 = rng.uniform(L / 8.0, 7.0 * L / 8.0);
  const real_t dx_hi = std::max<real_t>(2.0, resolution / 16.0);
  p.dx = rng.uniform(2.0, dx_hi);
  return {srmix_mask_from_params(H, W, p), p};
}

// ---------------------------------------------------------------------------
// Mixing.
// ---------------------------------------------------------------------------

/// Per-pixel convex combination of two images under a [H,W] mask.
inline Tensor mix(const Tensor& x_i, const Tensor& x_j, const Tensor& mask) {
  check_shape(x_i.shape() == x_j.shape(), "mix: image shapes differ");
  check_shape(x_i.dim() == 3, "mix: expected [C,H,W] images");
  check_shape(mask.dim() == 2 && mask.size(0) == x_i.size(1) && mask.size(1) == x_i.size(2),
              "mix: mask shape must match the image's spatial shape");
  const std::int64_t C = x_i.size(0), H = x_i.size(1), W = x_i.size(2);
  Tensor out(x_i.shape());
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x) {
        const real_t m = mask.at(y, x);
        out.at(c, y, x) = m * x_i.at(c, y, x) + (1.0 - m) * x_j.at(c, y, x);
      }
  return out;
}

inline Tensor sample_mask_for(const MixStrategyConfig& strategy, std::int64_t H, std::int64_t W,
                              std::int64_t resolution, Rng& rng) {
  switch (strategy.kind) {
    case MixKind::mixup:
      return sample_mixup_mask(H, W, strategy.mixup, rng);
    case MixKind::cutmix:
      return sample_cutmix_mask(H, W, rng).first;
    case MixKind::srmix:
      return sample_srmix_mask(H, W, resolution, rng).first;
    case MixKind::none:
      break;
  }
  throw ConfigError("cannot sample a mask for strategy 'none'");
}

/// Compose the discriminator's fake-side batch: the first floor(r*B) slots
/// become mixed samples (a fresh mask per slot), the rest stay untouched
/// fakes. Pairing follows the configured rule; the default pairs real i with
/// fake i. Same-batch pairings partner slot s with slot (s+1) mod B.
inline Tensor compose_discriminator_batch(const Tensor& reals, const Tensor& fakes,
                                          const MixStrategyConfig& strategy, real_t r, Rng& rng) {
  check_shape(reals.shape() == fakes.shape(), "compose: real/fake batch shapes differ");
  check_shape(reals.dim() == 4, "compose: expected [B,C,H,W] batches");
  check_config(r >= 0.0 && r <= 1.0, "ladder ratio must lie in [0,1]");
  const std::int64_t B = reals.size(0), H = reals.size(2), W = reals.size(3);
  const std::int64_t mixed = static_cast<std::int64_t>(r * B);  // floor
  if (mixed > 0)
    check_config(strategy.kind != MixKind::none,
                 "ladder ratio > 0 requires a mix strategy");

  Tensor out = fakes.clone();
  for (std::int64_t s = 0; s < mixed; ++s) {
    Tensor mask = sample_mask_for(strategy, H, W, std::max(H, W), rng);
    Tensor xi, xj;
    switch (strategy.pairing) {
      case MixPairing::real_fake:
        xi = batch_item(reals, s);
        xj = batch_item(fakes, s);
        break;
      case MixPairing::real_real:
        xi = batch_item(reals, s);
        xj = batch_item(reals, (s + 1) % B);
        break;
      case MixPairing::fake_fake:
        xi = batch_item(fakes, s);
        xj = batch_item(fakes, (s + 1) % B);
        break;
    }
    set_batch_item(out, s, mix(xi, xj, mask));
  }
  return out;
}

inline std::int64_t mixed_slot_count(real_t r, std::int64_t B) {
  check_config(r >= 0.0 && r <= 1.0, "ladder ratio must lie in [0,1]");
  return static_cast<std::int64_t>(r * B);
}

}  // namespace mixgan
