// Mask families, mixing, batch composition, adversarial losses, and the two
// regularizers — with statistical oracles for the mask laws and
// finite-difference oracles for every differentiable surface.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "mixgan/augment.hpp"
#include "mixgan/losses.hpp"
#include "mixgan/regularize.hpp"

using namespace mixgan;

namespace {

real_t max_grad_error(const std::function<Var(std::vector<Var>&)>& f, std::vector<Tensor> inputs,
                      real_t h = 1e-5) {
  std::vector<Var> leaves;
  for (auto& t : inputs) leaves.push_back(Var::leaf(t.clone(), true));
  Var out = f(leaves);
  auto grads = grad(out, leaves);
  real_t worst = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::int64_t j = 0; j < inputs[i].numel(); ++j) {
      auto eval = [&](real_t delta) {
        std::vector<Var> ls;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          Tensor t = inputs[k].clone();
          if (k == i) t[j] += delta;
          ls.push_back(Var::leaf(std::move(t), false));
        }
        return f(ls).item();
      };
      const real_t fd = (eval(h) - eval(-h)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grads[i].val()[j]));
    }
  }
  return worst;
}

Var scores_of(const std::vector<real_t>& v) {
  Tensor t({static_cast<std::int64_t>(v.size())});
  for (std::size_t i = 0; i < v.size(); ++i) t[static_cast<std::int64_t>(i)] = v[i];
  return Var(t, false);
}

// Discriminator computing <w, x> per sample — the closed-form gradient
// penalty case.
struct LinearScoreD final : Discriminator {
  Var w;  // [1, numel(image)]
  explicit LinearScoreD(Tensor weights) { w = Var::leaf(weights, true); }
  Var forward(const Var& x, bool) override {
    const std::int64_t B = x.shape()[0];
    return reshape(matmul(reshape(x, {B, w.numel()}), w, false, true), {B});
  }
  void collect(std::vector<ParamRef>& ps, std::vector<BufferRef>&) override {
    ps.push_back({"w", &w});
  }
};

// Small two-layer MLP score head over flattened 3x4x4 inputs.
struct TinyMlpD final : Discriminator {
  Linear l1, l2;
  TinyMlpD(Rng& rng) {
    l1.init(48, 16, rng, false);
    l2.init(16, 1, rng, false);
  }
  Var forward(const Var& x, bool training) override {
    const std::int64_t B = x.shape()[0];
    Var h = tanh(l1.forward(reshape(x, {B, 48}), training));
    return reshape(l2.forward(h, training), {B});
  }
  void collect(std::vector<ParamRef>& ps, std::vector<BufferRef>& bs) override {
    l1.register_to("l1", ps, bs);
    l2.register_to("l2", ps, bs);
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Mixup masks
// ---------------------------------------------------------------------------

TEST_CASE("mixup mask: constant, uniform law at alpha=1, concentration at large alpha") {
  Rng rng(1);
  MixupParams p;

  Tensor m = sample_mixup_mask(8, 8, p, rng);
  REQUIRE(m.shape() == Shape{8, 8});
  for (std::int64_t i = 1; i < 64; ++i) REQUIRE(m[i] == m[0]);

  double sum = 0, sum2 = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const real_t lam = sample_mixup_mask(2, 2, p, rng)[0];
    REQUIRE(lam >= 0.0);
    REQUIRE(lam <= 1.0);
    sum += lam;
    sum2 += lam * lam;
  }
  const double mean = sum / n;
  REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(0.5, 0.02));
  REQUIRE_THAT(sum2 / n - mean * mean, Catch::Matchers::WithinAbs(1.0 / 12, 0.01));

  MixupParams sharp{1e6};
  for (int i = 0; i < 1000; ++i) {
    const real_t lam = sample_mixup_mask(2, 2, sharp, rng)[0];
    REQUIRE_THAT(lam, Catch::Matchers::WithinAbs(0.5, 0.01));
  }

  MixupParams bad{0.0};
  REQUIRE_THROWS_AS(sample_mixup_mask(4, 4, bad, rng), ConfigError);
}

// ---------------------------------------------------------------------------
// CutMix masks
// ---------------------------------------------------------------------------

TEST_CASE("cutmix mask: binary, box-consistent, mean area one half") {
  Rng rng(2);

  Tensor full = cutmix_mask_from_box(8, 8, {0, 0, 8, 8});
  REQUIRE(min_value(full) == 1.0);

  double area_sum = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto [mask, box] = sample_cutmix_mask(64, 64, rng);
    REQUIRE(box.r_w >= 1);
    REQUIRE(box.r_h >= 1);
    REQUIRE(box.r_x >= 0);
    REQUIRE(box.r_y >= 0);
    REQUIRE(box.r_x + box.r_w <= 64);
    REQUIRE(box.r_y + box.r_h <= 64);
    const real_t s = sum_value(mask);
    REQUIRE(s == static_cast<real_t>(box.r_w * box.r_h));  // ones exactly in the box
    area_sum += s / (64.0 * 64.0);
    if (i < 50) {  // binarity spot check
      for (std::int64_t j = 0; j < mask.numel(); ++j)
        REQUIRE((mask[j] == 0.0 || mask[j] == 1.0));
    }
  }
  REQUIRE_THAT(area_sum / n, Catch::Matchers::WithinAbs(0.5, 0.03));

  REQUIRE_THROWS_AS(sample_cutmix_mask(3, 8, rng), ConfigError);
}

TEST_CASE("cutmix mask: ones exactly inside the reported box") {
  Rng rng(3);
  auto [mask, box] = sample_cutmix_mask(32, 32, rng);
  for (std::int64_t y = 0; y < 32; ++y)
    for (std::int64_t x = 0; x < 32; ++x) {
      const bool inside = x >= box.r_x && x < box.r_x + box.r_w && y >= box.r_y &&
                          y < box.r_y + box.r_h;
      REQUIRE(mask.at(y, x) == (inside ? 1.0 : 0.0));
    }
}

// ---------------------------------------------------------------------------
// SRMix masks
// ---------------------------------------------------------------------------

TEST_CASE("srmix mask: ramp values, complement symmetry, monotonicity") {
  SRMixParams p;
  p.sigma = 1;
  p.axis = MixAxis::horizontal;
  p.x0 = 7.0;
  p.dx = 2.0;
  Tensor m = srmix_mask_from_params(16, 16, p);

  REQUIRE_THAT(m.at(0, 7), Catch::Matchers::WithinAbs(0.5, 1e-12));  // tanh(0)
  // (x - x0)/dx = 4 at column 15: 0.5*(1+tanh(4)) ~ 0.99933
  REQUIRE_THAT(m.at(5, 15), Catch::Matchers::WithinAbs(1.0, 1e-3));

  SRMixParams q = p;
  q.sigma = -1;
  Tensor mc = srmix_mask_from_params(16, 16, q);
  for (std::int64_t i = 0; i < m.numel(); ++i)
    REQUIRE_THAT(m[i] + mc[i], Catch::Matchers::WithinAbs(1.0, 1e-12));

  // Non-decreasing along the ramp axis, constant along the other.
  for (std::int64_t y = 0; y < 16; ++y)
    for (std::int64_t x = 1; x < 16; ++x) {
      REQUIRE(m.at(y, x) >= m.at(y, x - 1));
      REQUIRE(m.at(y, x) == m.at(0, x));
    }
}

TEST_CASE("srmix sampler: parameter ranges hold over many draws") {
  Rng rng(4);
  int vertical = 0, negative = 0;
  for (int i = 0; i < 10000; ++i) {
    auto [mask, p] = sample_srmix_mask(64, 64, 64, rng);
    REQUIRE(p.x0 >= 64.0 / 8);
    REQUIRE(p.x0 <= 64.0 * 7 / 8);
    REQUIRE(p.dx >= 2.0);
    REQUIRE(p.dx <= 4.0);  // max(2, 64/16)
    REQUIRE(min_value(mask) >= 0.0);
    REQUIRE(max_value(mask) <= 1.0);
    vertical += p.axis == MixAxis::vertical;
    negative += p.sigma == -1;
  }
  REQUIRE_THAT(vertical / 10000.0, Catch::Matchers::WithinAbs(0.5, 0.02));
  REQUIRE_THAT(negative / 10000.0, Catch::Matchers::WithinAbs(0.5, 0.02));

  // Tiny resolution: dx range degenerates to exactly 2.
  auto [mask16, p16] = sample_srmix_mask(16, 16, 16, rng);
  REQUIRE(p16.dx == 2.0);
}

// ---------------------------------------------------------------------------
// Mixing and batch composition
// ---------------------------------------------------------------------------

TEST_CASE("mix: convex combination basics and complementarity") {
  Rng rng(5);
  Tensor xi = rand_uniform({3, 6, 6}, rng, -1.0, 1.0);
  Tensor xj = rand_uniform({3, 6, 6}, rng, -1.0, 1.0);

  REQUIRE(mix(xi, xj, Tensor::ones({6, 6})).same_values(xi));

  Tensor avg = mix(xi, xj, Tensor::full({6, 6}, 0.5));
  for (std::int64_t i = 0; i < xi.numel(); ++i)
    REQUIRE_THAT(avg[i], Catch::Matchers::WithinAbs((xi[i] + xj[i]) / 2, 1e-12));

  Tensor mask = rand_uniform({6, 6}, rng, 0.0, 1.0);
  REQUIRE(mix(xi, xi, mask).same_values(xi));

  Tensor a = mix(xi, xj, mask), b = mix(xj, xi, mask);
  for (std::int64_t i = 0; i < xi.numel(); ++i) {
    REQUIRE_THAT(a[i] + b[i], Catch::Matchers::WithinAbs(xi[i] + xj[i], 1e-12));
    REQUIRE(a[i] >= std::min(xi[i], xj[i]) - 1e-12);
    REQUIRE(a[i] <= std::max(xi[i], xj[i]) + 1e-12);
  }

  REQUIRE_THROWS_AS(mix(xi, rand_uniform({3, 5, 6}, rng, 0, 1), mask), ShapeError);
  REQUIRE_THROWS_AS(mix(xi, xj, Tensor::ones({5, 6})), ShapeError);
}

TEST_CASE("compose_discriminator_batch: floor rule, untouched tail, determinism") {
  Rng data_rng(6);
  Tensor reals = rand_uniform({64, 3, 16, 16}, data_rng, -1.0, 1.0);
  Tensor fakes = rand_uniform({64, 3, 16, 16}, data_rng, -1.0, 1.0);
  MixStrategyConfig strategy;
  strategy.kind = MixKind::srmix;

  Rng r1(7);
  Tensor out = compose_discriminator_batch(reals, fakes, strategy, 0.25, r1);

  // Reproduce the first 16 slots with an identically seeded generator.
  Rng r2(7);
  for (std::int64_t s = 0; s < 16; ++s) {
    Tensor mask = sample_srmix_mask(16, 16, 16, r2).first;
    Tensor want = mix(batch_item(reals, s), batch_item(fakes, s), mask);
    REQUIRE(batch_item(out, s).same_values(want));
  }
  for (std::int64_t s = 16; s < 64; ++s)
    REQUIRE(batch_item(out, s).same_values(batch_item(fakes, s)));

  // Determinism: same seed, same output.
  Rng r3(7);
  REQUIRE(compose_discriminator_batch(reals, fakes, strategy, 0.25, r3).same_values(out));

  // r = 0.15 over 64 -> floor(9.6) = 9 mixed slots.
  REQUIRE(mixed_slot_count(0.15, 64) == 9);
  Rng r4(8);
  Tensor out15 = compose_discriminator_batch(reals, fakes, strategy, 0.15, r4);
  std::int64_t untouched = 0;
  for (std::int64_t s = 0; s < 64; ++s)
    untouched += batch_item(out15, s).same_values(batch_item(fakes, s));
  REQUIRE(untouched == 64 - 9);

  // r = 0 passes fakes through even with strategy none.
  MixStrategyConfig none;
  Rng r5(9);
  REQUIRE(compose_discriminator_batch(reals, fakes, none, 0.0, r5).same_values(fakes));

  Rng r6(10);
  REQUIRE_THROWS_AS(compose_discriminator_batch(reals, fakes, strategy, 1.2, r6), ConfigError);
}

TEST_CASE("compose_discriminator_batch: same-batch pairing rules") {
  Rng data_rng(11);
  Tensor reals = rand_uniform({8, 3, 8, 8}, data_rng, -1.0, 1.0);
  Tensor fakes = rand_uniform({8, 3, 8, 8}, data_rng, -1.0, 1.0);
  MixStrategyConfig strategy;
  strategy.kind = MixKind::mixup;
  strategy.pairing = MixPairing::real_real;

  Rng r1(12);
  Tensor out = compose_discriminator_batch(reals, fakes, strategy, 0.5, r1);
  Rng r2(12);
  for (std::int64_t s = 0; s < 4; ++s) {
    Tensor mask = sample_mixup_mask(8, 8, strategy.mixup, r2);
    Tensor want = mix(batch_item(reals, s), batch_item(reals, (s + 1) % 8), mask);
    REQUIRE(batch_item(out, s).same_values(want));
  }
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

TEST_CASE("d_loss: closed-form examples") {
  REQUIRE_THAT(discriminator_loss(scores_of({2}), scores_of({-2}), LossKind::hinge).item(),
               Catch::Matchers::WithinAbs(0.0, 1e-12));
  REQUIRE_THAT(discriminator_loss(scores_of({0}), scores_of({0}), LossKind::hinge).item(),
               Catch::Matchers::WithinAbs(2.0, 1e-12));
  REQUIRE_THAT(
      discriminator_loss(scores_of({1.0}), scores_of({0.5}), LossKind::wasserstein).item(),
      Catch::Matchers::WithinAbs(-0.5, 1e-12));
}

TEST_CASE("g_loss: negated mean for both kinds") {
  REQUIRE_THAT(generator_loss(scores_of({3}), LossKind::hinge).item(),
               Catch::Matchers::WithinAbs(-3.0, 1e-12));
  REQUIRE_THAT(generator_loss(scores_of({1, -1}), LossKind::wasserstein).item(),
               Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("losses: invariances") {
  Rng rng(13);
  Tensor real = randn({9}, rng), fake = randn({9}, rng);

  // Wasserstein: shifting all scores by a constant cancels.
  Tensor real_c = real.clone(), fake_c = fake.clone();
  for (std::int64_t i = 0; i < 9; ++i) {
    real_c[i] += 3.7;
    fake_c[i] += 3.7;
  }
  const real_t w0 =
      discriminator_loss(Var(real, false), Var(fake, false), LossKind::wasserstein).item();
  const real_t w1 =
      discriminator_loss(Var(real_c, false), Var(fake_c, false), LossKind::wasserstein).item();
  REQUIRE_THAT(w1, Catch::Matchers::WithinAbs(w0, 1e-9));

  // Permutation invariance.
  Tensor real_p = real.clone();
  std::swap(real_p[0], real_p[5]);
  std::swap(real_p[2], real_p[8]);
  for (auto kind : {LossKind::wasserstein, LossKind::hinge}) {
    const real_t a = discriminator_loss(Var(real, false), Var(fake, false), kind).item();
    const real_t b = discriminator_loss(Var(real_p, false), Var(fake, false), kind).item();
    REQUIRE_THAT(a, Catch::Matchers::WithinAbs(b, 1e-12));
  }

  // Hinge is nonnegative; zero exactly when margins are satisfied.
  REQUIRE(discriminator_loss(Var(real, false), Var(fake, false), LossKind::hinge).item() >= 0.0);
  REQUIRE(discriminator_loss(scores_of({1.0, 2.5}), scores_of({-1.0, -7.0}),
                             LossKind::hinge).item() == 0.0);
}

TEST_CASE("losses: gradients match finite differences") {
  Rng rng(14);
  // Away from hinge kinks (|1 - s| etc. bounded off zero by the ranges).
  Tensor real = rand_uniform({6}, rng, -0.8, 0.8), fake = rand_uniform({6}, rng, -0.8, 0.8);
  for (auto kind : {LossKind::wasserstein, LossKind::hinge}) {
    const real_t derr = max_grad_error(
        [kind](std::vector<Var>& v) { return discriminator_loss(v[0], v[1], kind); },
        {real, fake});
    REQUIRE(derr < 1e-8);
    const real_t gerr = max_grad_error(
        [kind](std::vector<Var>& v) { return generator_loss(v[0], kind); }, {fake});
    REQUIRE(gerr < 1e-8);
  }
}

TEST_CASE("losses: non-finite scores raise numeric errors") {
  Tensor bad({2});
  bad[0] = 1.0;
  bad[1] = std::numeric_limits<real_t>::quiet_NaN();
  REQUIRE_THROWS_AS(discriminator_loss(Var(bad, false), scores_of({0}), LossKind::hinge),
                    NumericError);
  REQUIRE_THROWS_AS(generator_loss(Var(bad, false), LossKind::wasserstein), NumericError);
}

TEST_CASE("g_loss on a frozen model pair matches an independent forward chain") {
  ModelSpec s;
  s.resolution = 32;
  s.z_dim = 8;
  s.base_channels = 2;
  auto g = build_generator(s, 31);
  auto d = build_discriminator(s, 32);
  Rng rng(15);
  Tensor z = randn({3, 8}, rng);
  Tensor imgs = g->sample_images(z);
  Tensor scores = d->forward(Var(imgs, false), false).val();

  real_t hand = 0;
  for (std::int64_t i = 0; i < 3; ++i) hand += scores[i];
  hand = -hand / 3;

  const real_t got = generator_loss(Var(scores, false), LossKind::hinge).item();
  REQUIRE_THAT(got, Catch::Matchers::WithinAbs(hand, 1e-6));
}

// ---------------------------------------------------------------------------
// Gradient penalty
// ---------------------------------------------------------------------------

TEST_CASE("gradient penalty: closed form for linear discriminators") {
  Rng rng(16);
  Tensor w = randn({1, 3 * 8 * 8}, rng);
  real_t norm = 0;
  for (std::int64_t i = 0; i < w.numel(); ++i) norm += w[i] * w[i];
  norm = std::sqrt(norm);

  Tensor reals = rand_uniform({4, 3, 8, 8}, rng, -1.0, 1.0);
  Tensor fakes = rand_uniform({4, 3, 8, 8}, rng, -1.0, 1.0);

  // Unit-norm weight: gradient norm 1 everywhere, penalty 0.
  Tensor w_unit = w.clone();
  for (std::int64_t i = 0; i < w.numel(); ++i) w_unit[i] /= norm;
  LinearScoreD d_unit(w_unit);
  Rng r1(17);
  REQUIRE_THAT(gradient_penalty(d_unit, reals, fakes, r1).item(),
               Catch::Matchers::WithinAbs(0.0, 1e-9));

  // Norm-3 weight: penalty (3-1)^2 = 4.
  Tensor w3 = w.clone();
  for (std::int64_t i = 0; i < w.numel(); ++i) w3[i] *= 3.0 / norm;
  LinearScoreD d3(w3);
  Rng r2(18);
  REQUIRE_THAT(gradient_penalty(d3, reals, fakes, r2).item(),
               Catch::Matchers::WithinAbs(4.0, 1e-9));
}

TEST_CASE("gradient penalty: value matches a finite-difference gradient-norm oracle") {
  Rng rng(19);
  TinyMlpD d(rng);
  Tensor reals = rand_uniform({2, 3, 4, 4}, rng, -1.0, 1.0);
  Tensor fakes = rand_uniform({2, 3, 4, 4}, rng, -1.0, 1.0);
  Tensor eps({2});
  eps[0] = 0.3;
  eps[1] = 0.8;

  const real_t got = gradient_penalty_at(d, reals, fakes, eps).item();

  // Oracle: per-sample numeric gradient of the score at xhat.
  auto score_one = [&](const Tensor& img) {
    NoGradGuard guard;
    return d.forward(Var(img.reshaped({1, 3, 4, 4}), false), true).val()[0];
  };
  real_t want = 0;
  const real_t h = 1e-5;
  for (std::int64_t s = 0; s < 2; ++s) {
    Tensor xhat({3, 4, 4});
    for (std::int64_t i = 0; i < 48; ++i)
      xhat[i] = eps[s] * reals[s * 48 + i] + (1 - eps[s]) * fakes[s * 48 + i];
    real_t sq = 0;
    for (std::int64_t i = 0; i < 48; ++i) {
      Tensor xp = xhat.clone(), xm = xhat.clone();
      xp[i] += h;
      xm[i] -= h;
      const real_t gi = (score_one(xp) - score_one(xm)) / (2 * h);
      sq += gi * gi;
    }
    const real_t excess = std::sqrt(sq) - 1.0;
    want += excess * excess;
  }
  want /= 2;
  REQUIRE_THAT(got, Catch::Matchers::WithinRel(want, 1e-3));
}

TEST_CASE("gradient penalty: swap symmetry under eps -> 1-eps") {
  Rng rng(20);
  ModelSpec s;
  s.resolution = 32;
  s.z_dim = 8;
  s.base_channels = 2;
  s.d_layer_norm = true;
  auto d = build_discriminator(s, 33);
  Tensor reals = rand_uniform({3, 3, 32, 32}, rng, -1.0, 1.0);
  Tensor fakes = rand_uniform({3, 3, 32, 32}, rng, -1.0, 1.0);
  Tensor eps({3});
  eps[0] = 0.2;
  eps[1] = 0.55;
  eps[2] = 0.9;
  Tensor eps_c({3});
  for (int i = 0; i < 3; ++i) eps_c[i] = 1.0 - eps[i];

  const real_t a = gradient_penalty_at(*d, reals, fakes, eps).item();
  const real_t b = gradient_penalty_at(*d, fakes, reals, eps_c).item();
  REQUIRE(a >= 0.0);
  REQUIRE(a == b);
}

TEST_CASE("gradient penalty: parameter gradients survive the double backward") {
  // The full training path for the penalty: differentiate the gradient-norm
  // penalty of a real conv discriminator with respect to its weights, and
  // compare against central finite differences at sampled coordinates.
  ModelSpec s;
  s.resolution = 32;
  s.z_dim = 8;
  s.base_channels = 2;
  s.d_layer_norm = true;  // spectral off: keeps forwards state-free for FD
  auto d = build_discriminator(s, 34);

  Rng rng(21);
  Tensor reals = rand_uniform({2, 3, 32, 32}, rng, -1.0, 1.0);
  Tensor fakes = rand_uniform({2, 3, 32, 32}, rng, -1.0, 1.0);
  Tensor eps({2});
  eps[0] = 0.4;
  eps[1] = 0.7;

  Var penalty = gradient_penalty_at(*d, reals, fakes, eps);
  auto params = d->parameters();
  std::vector<Var> leaves;
  for (auto& p : params) leaves.push_back(*p.var);
  auto gs = grad(penalty, leaves);

  const real_t h = 1e-4;
  for (int probe = 0; probe < 8; ++probe) {
    const auto pi = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(params.size()) - 1));
    const std::int64_t ci = rng.uniform_int(0, params[pi].var->numel() - 1);
    const real_t saved = params[pi].var->val()[ci];

    auto eval_at = [&](real_t v) {
      Tensor t = params[pi].var->val().clone();
      t[ci] = v;
      params[pi].var->set_value(std::move(t));
      return gradient_penalty_at(*d, reals, fakes, eps).item();
    };
    const real_t fp = eval_at(saved + h);
    const real_t fm = eval_at(saved - h);
    eval_at(saved);
    const real_t fd = (fp - fm) / (2 * h);
    CAPTURE(params[pi].name, ci, fd);
    REQUIRE_THAT(gs[pi].val()[ci], Catch::Matchers::WithinAbs(fd, 5e-6));
  }
}

// ---------------------------------------------------------------------------
// Consistency regularization
// ---------------------------------------------------------------------------

TEST_CASE("flip_shift: identity, involution, ramp oracle with replicate padding") {
  Rng rng(22);
  Tensor img = rand_uniform({3, 8, 8}, rng, -1.0, 1.0);

  REQUIRE(flip_shift(img, false, 0, 0).same_values(img));
  REQUIRE(flip_shift(flip_shift(img, true, 0, 0), true, 0, 0).same_values(img));

  // Horizontal ramp: pixel value = column index.
  Tensor ramp({1, 8, 8});
  for (std::int64_t y = 0; y < 8; ++y)
    for (std::int64_t x = 0; x < 8; ++x) ramp.at(0, y, x) = static_cast<real_t>(x);
  Tensor shifted = flip_shift(ramp, false, 4, 0);
  for (std::int64_t y = 0; y < 8; ++y)
    for (std::int64_t x = 0; x < 8; ++x) {
      const real_t want = static_cast<real_t>(std::max<std::int64_t>(x - 4, 0));
      REQUIRE(shifted.at(0, y, x) == want);
    }

  Tensor aug = cr_augment(img, rng);
  REQUIRE(aug.shape() == img.shape());
  REQUIRE(min_value(aug) >= min_value(img));
  REQUIRE(max_value(aug) <= max_value(img));
}

TEST_CASE("consistency regularization: zero cases, determinism, nonnegativity") {
  ModelSpec s;
  s.resolution = 32;
  s.z_dim = 8;
  s.base_channels = 2;
  s.d_layer_norm = true;
  auto d = build_discriminator(s, 35);

  Rng data_rng(23);
  Tensor reals = rand_uniform({4, 3, 32, 32}, data_rng, -1.0, 1.0);

  // A constant discriminator scores augmented views identically.
  struct ConstD final : Discriminator {
    Var forward(const Var& x, bool) override {
      return constant(Tensor::zeros({x.shape()[0]}));
    }
    void collect(std::vector<ParamRef>&, std::vector<BufferRef>&) override {}
  } const_d;
  {
    NoGradGuard guard;
    Rng r(24);
    REQUIRE(consistency_regularization(const_d, reals, r).item() == 0.0);
  }

  Rng r1(25), r2(25);
  const real_t a = consistency_regularization(*d, reals, r1).item();
  const real_t b = consistency_regularization(*d, reals, r2).item();
  REQUIRE(a == b);  // bitwise reproducible given the seed
  REQUIRE(a >= 0.0);

  // Identity augmentation (no flip, zero shift) nulls the term regardless of
  // D. With max_shift=0 each sample draws only its flip coin, so find a seed
  // whose first four coins all land tails.
  std::uint64_t seed = 0;
  for (;; ++seed) {
    Rng probe(seed);
    bool all_tails = true;
    for (int i = 0; i < 4; ++i) all_tails &= !probe.coin();
    if (all_tails) break;
  }
  Rng r3(seed);
  const real_t c = consistency_regularization(*d, reals, r3, 0).item();
  REQUIRE_THAT(c, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("regularizer schedule and config validation") {
  std::int64_t fired = 0;
  for (std::int64_t it = 0; it < 23; ++it) fired += gp_applies(it, 5);
  REQUIRE(fired == 4);  // floor(23/5)

  fired = 0;
  for (std::int64_t it = 0; it < 20; ++it) fired += gp_applies(it, 1);
  REQUIRE(fired == 20);

  RegularizerConfig bad;
  bad.gp_every = 0;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
  RegularizerConfig ok;
  ok.validate();
}
