// Layers and architectures: normalization layers, spectral normalization
// against an SVD oracle, layer gradients against finite differences, model
// shape/determinism contracts, and the spatial score tap.
#include <catch2/catch_amalgamated.hpp>

#include <Eigen/SVD>
#include <cmath>
#include <functional>
#include <vector>

#include "mixgan/models.hpp"

using namespace mixgan;

namespace {

// FD check for stateful modules: f() rebuilds the scalar output; leaves are
// the parameters/inputs to perturb in place via set_value.
real_t module_grad_error(const std::function<Var()>& f, std::vector<Var> leaves,
                         real_t h = 1e-5) {
  Var out = f();
  auto gs = grad(out, leaves);
  real_t worst = 0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    for (std::int64_t j = 0; j < leaves[i].numel(); ++j) {
      const real_t saved = leaves[i].val()[j];
      auto eval_at = [&](real_t v) {
        Tensor t = leaves[i].val().clone();
        t[j] = v;
        leaves[i].set_value(std::move(t));
        NoGradGuard guard;
        return f().item();
      };
      const real_t fp = eval_at(saved + h);
      const real_t fm = eval_at(saved - h);
      eval_at(saved);  // restore
      worst = std::max(worst, std::abs((fp - fm) / (2 * h) - gs[i].val()[j]));
    }
  }
  return worst;
}

real_t top_singular_value(const Tensor& w2d) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(w2d.matrix());
  return svd.singularValues()(0);
}

}  // namespace

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

TEST_CASE("linear: forward matches hand computation and gradients check out") {
  Rng rng(1);
  Linear lin;
  lin.init(3, 2, rng, false);
  Tensor x = randn({4, 3}, rng);

  Tensor y = lin.forward(Var(x, false), false).val();
  for (std::int64_t n = 0; n < 4; ++n)
    for (std::int64_t o = 0; o < 2; ++o) {
      real_t want = lin.bias.val()[o];
      for (std::int64_t i = 0; i < 3; ++i) want += x.at(n, i) * lin.weight.val().at(o, i);
      REQUIRE_THAT(y.at(n, o), Catch::Matchers::WithinAbs(want, 1e-12));
    }

  Var vx = Var::leaf(x.clone(), true);
  const real_t err = module_grad_error(
      [&] { return sum_all(square(lin.forward(vx, true))); }, {lin.weight, lin.bias, vx});
  REQUIRE(err < 1e-6);
}

TEST_CASE("conv2d layer: gradients through weights, bias and input") {
  Rng rng(2);
  Conv2d conv;
  conv.init(2, 3, 3, 2, 1, rng, false);
  Var vx = Var::leaf(randn({2, 2, 5, 5}, rng), true);
  const real_t err = module_grad_error(
      [&] { return sum_all(square(conv.forward(vx, true))); }, {conv.weight, conv.bias, vx});
  REQUIRE(err < 1e-5);
}

TEST_CASE("conv_transpose2d layer: output size and gradients") {
  Rng rng(3);
  ConvTranspose2d dc;
  dc.init(3, 2, 4, 2, 1, rng);
  Var vx = Var::leaf(randn({2, 3, 4, 4}, rng), true);
  Tensor y = dc.forward(vx, true).val();
  REQUIRE(y.shape() == Shape{2, 2, 8, 8});

  const real_t err = module_grad_error(
      [&] { return sum_all(square(dc.forward(vx, true))); }, {dc.weight, dc.bias, vx});
  REQUIRE(err < 1e-5);
}

TEST_CASE("batch norm: normalizes in training, tracks running stats, eval uses them") {
  Rng rng(4);
  BatchNorm2d bn;
  bn.init(3, rng);
  bn.gamma.set_value(Tensor::ones({3}));  // isolate the normalization itself
  bn.beta.set_value(Tensor::zeros({3}));

  Tensor x = rand_uniform({4, 3, 5, 5}, rng, -2.0, 5.0);
  Tensor y = bn.forward(Var(x, false), true).val();

  // Per-channel batch statistics of the output: mean 0, variance ~1.
  const std::int64_t per = 4 * 5 * 5;
  for (std::int64_t c = 0; c < 3; ++c) {
    real_t m = 0, v = 0;
    for (std::int64_t n = 0; n < 4; ++n)
      for (std::int64_t i = 0; i < 5; ++i)
        for (std::int64_t j = 0; j < 5; ++j) m += y.at(n, c, i, j);
    m /= per;
    for (std::int64_t n = 0; n < 4; ++n)
      for (std::int64_t i = 0; i < 5; ++i)
        for (std::int64_t j = 0; j < 5; ++j) v += (y.at(n, c, i, j) - m) * (y.at(n, c, i, j) - m);
    v /= per;
    REQUIRE_THAT(m, Catch::Matchers::WithinAbs(0.0, 1e-10));
    REQUIRE_THAT(v, Catch::Matchers::WithinAbs(1.0, 1e-3));
  }

  // Running stats moved toward the batch stats from (0, 1).
  REQUIRE(bn.running_mean[0] != 0.0);
  REQUIRE(bn.running_var[0] != 1.0);

  // Eval mode: same input twice gives identical output, stats untouched.
  Tensor rm = bn.running_mean.clone();
  Tensor e1 = bn.forward(Var(x, false), false).val();
  Tensor e2 = bn.forward(Var(x, false), false).val();
  REQUIRE(e1.same_values(e2));
  REQUIRE(bn.running_mean.same_values(rm));

  BatchNorm2d bn2;
  bn2.init(2, rng);
  Var vx = Var::leaf(randn({3, 2, 4, 4}, rng), true);
  const real_t err = module_grad_error(
      [&] { return sum_all(square(bn2.forward(vx, true))); }, {bn2.gamma, bn2.beta, vx});
  REQUIRE(err < 1e-5);
}

TEST_CASE("layer norm: per-sample normalization and gradients") {
  Rng rng(5);
  LayerNorm2d ln;
  ln.init(3);
  Tensor x = rand_uniform({2, 3, 4, 4}, rng, -3.0, 3.0);
  Tensor y = ln.forward(Var(x, false)).val();
  for (std::int64_t n = 0; n < 2; ++n) {
    real_t m = 0, v = 0;
    for (std::int64_t i = 0; i < 3 * 16; ++i) m += y[n * 48 + i];
    m /= 48;
    for (std::int64_t i = 0; i < 3 * 16; ++i) v += (y[n * 48 + i] - m) * (y[n * 48 + i] - m);
    v /= 48;
    REQUIRE_THAT(m, Catch::Matchers::WithinAbs(0.0, 1e-10));
    REQUIRE_THAT(v, Catch::Matchers::WithinAbs(1.0, 1e-3));
  }

  Var vx = Var::leaf(x.clone(), true);
  const real_t err = module_grad_error(
      [&] { return sum_all(square(ln.forward(vx))); }, {ln.gamma, ln.beta, vx});
  REQUIRE(err < 1e-5);
}

// ---------------------------------------------------------------------------
// Spectral normalization
// ---------------------------------------------------------------------------

TEST_CASE("spectral_normalize: identity and scaled identity") {
  Rng rng(6);
  Tensor eye = Tensor::zeros({4, 4});
  for (int i = 0; i < 4; ++i) eye.at(i, i) = 1.0;

  PowerIterState st;
  st.init(4, 4, rng);
  Tensor w = spectral_normalize(eye, st);
  REQUIRE(max_abs_diff(w, eye) < 1e-9);  // sigma = 1 for any u on the sphere

  Tensor three = Tensor::zeros({4, 4});
  for (int i = 0; i < 4; ++i) three.at(i, i) = 3.0;
  PowerIterState st2;
  st2.init(4, 4, rng);
  Tensor out;
  for (int it = 0; it < 20; ++it) out = spectral_normalize(three, st2);
  REQUIRE(max_abs_diff(out, eye) < 1e-9);  // sigma converges to 3
}

TEST_CASE("spectral_normalize: random matrix converges to unit top singular value") {
  Rng rng(7);
  Tensor w = randn({16, 32}, rng);
  PowerIterState st;
  st.init(16, 32, rng);
  Tensor out;
  for (int it = 0; it < 100; ++it) out = spectral_normalize(w, st);
  const real_t sv = top_singular_value(out);
  REQUIRE_THAT(sv, Catch::Matchers::WithinAbs(1.0, 0.01));
}

TEST_CASE("spectral_normalize: zero weight floors sigma instead of dividing by zero") {
  Rng rng(8);
  PowerIterState st;
  st.init(3, 3, rng);
  Tensor out = spectral_normalize(Tensor::zeros({3, 3}), st);
  REQUIRE(out.all_finite());
}

TEST_CASE("apply_spectral_norm: gradient flows through the sigma estimate") {
  Rng rng(9);
  Var w = Var::leaf(randn({4, 6}, rng), true);
  PowerIterState st;
  st.init(4, 6, rng);
  for (int i = 0; i < 30; ++i) power_iteration_step(w.val(), st);  // settle u, v

  Tensor a = randn({4, 6}, rng);
  const real_t err = module_grad_error(
      [&] {
        // eval mode: u, v stay fixed, so finite differences are valid
        return sum_all(mul(apply_spectral_norm(w, st, false), constant(a.clone())));
      },
      {w});
  REQUIRE(err < 1e-6);
}

// ---------------------------------------------------------------------------
// Architectures
// ---------------------------------------------------------------------------

TEST_CASE("model spec validation rejects unsupported shapes") {
  ModelSpec s;
  s.resolution = 48;
  REQUIRE_THROWS_AS(s.validate(), ConfigError);
  s.resolution = 32;
  s.z_dim = 0;
  REQUIRE_THROWS_AS(s.validate(), ConfigError);
  s.z_dim = 16;
  s.base_channels = 0;
  REQUIRE_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("dcgan generator: output shape, range, determinism") {
  ModelSpec s;
  s.family = ModelFamily::dcgan;
  s.resolution = 64;
  s.z_dim = 128;
  s.base_channels = 4;
  auto g = build_generator(s, 17);

  Rng rng(10);
  Tensor z = randn({7, 128}, rng);
  Tensor imgs = g->sample_images(z);
  REQUIRE(imgs.shape() == Shape{7, 3, 64, 64});
  REQUIRE(imgs.all_finite());
  REQUIRE(min_value(imgs) >= -1.0);
  REQUIRE(max_value(imgs) <= 1.0);

  // z = 0 stays finite and in range
  Tensor z0 = Tensor::zeros({2, 128});
  Tensor i0 = g->sample_images(z0);
  REQUIRE(i0.all_finite());
  REQUIRE(min_value(i0) >= -1.0);
  REQUIRE(max_value(i0) <= 1.0);

  // same seed -> bitwise-identical parameters; different seed -> different
  auto g2 = build_generator(s, 17);
  auto p1 = g->parameters(), p2 = g2->parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    REQUIRE(p1[i].name == p2[i].name);
    REQUIRE(p1[i].var->val().same_values(p2[i].var->val()));
  }
  auto g3 = build_generator(s, 18);
  REQUIRE_FALSE(g3->parameters()[0].var->val().same_values(p1[0].var->val()));
  REQUIRE(g->parameter_count() == g3->parameter_count());  // seed-independent count
}

TEST_CASE("dcgan discriminator: score shape, spectral and layer norm wiring") {
  ModelSpec s;
  s.family = ModelFamily::dcgan;
  s.resolution = 32;
  s.z_dim = 32;
  s.base_channels = 4;
  s.d_spectral_norm = true;
  s.d_layer_norm = true;
  auto d = build_discriminator(s, 3);

  Rng rng(11);
  Tensor x = rand_uniform({5, 3, 32, 32}, rng, -1.0, 1.0);
  Tensor scores = d->forward(Var(x, false), false).val();
  REQUIRE(scores.shape() == Shape{5});
  REQUIRE(scores.all_finite());

  // Spectral invariant: after >= 50 training forwards every normalized weight
  // has top singular value in [0.9, 1.1].
  for (int step = 0; step < 60; ++step) (void)d->forward(Var(x, false), true);
  auto* dc = dynamic_cast<DcganDiscriminator*>(d.get());
  REQUIRE(dc != nullptr);
  for (auto& conv : dc->convs) {
    const std::int64_t rows = conv.out_c, cols = conv.in_c * conv.k * conv.k;
    const Tensor w2d = conv.weight.val().reshaped({rows, cols});
    const real_t sigma = spectral_sigma(w2d, conv.sn);
    Tensor norm(w2d.shape());
    norm.array() = w2d.array() / sigma;
    REQUIRE_THAT(top_singular_value(norm), Catch::Matchers::WithinAbs(1.0, 0.1));
  }
}

TEST_CASE("resnet generator and discriminator: shapes and eval determinism") {
  ModelSpec s;
  s.family = ModelFamily::resnet;
  s.resolution = 32;
  s.z_dim = 24;
  s.base_channels = 4;
  s.d_spectral_norm = true;
  s.d_layer_norm = true;
  auto g = build_generator(s, 5);
  auto d = build_discriminator(s, 5);

  Rng rng(12);
  Tensor z = randn({3, 24}, rng);
  Tensor imgs = g->sample_images(z);
  REQUIRE(imgs.shape() == Shape{3, 3, 32, 32});
  REQUIRE(min_value(imgs) >= -1.0);
  REQUIRE(max_value(imgs) <= 1.0);
  REQUIRE(imgs.same_values(g->sample_images(z)));  // frozen params, eval mode

  Tensor scores = d->forward(Var(imgs, false), false).val();
  REQUIRE(scores.shape() == Shape{3});
  REQUIRE(scores.all_finite());
}

// ---------------------------------------------------------------------------
// Spatial score tap
// ---------------------------------------------------------------------------

TEST_CASE("dcgan spatial tap: map sums to the score minus head bias; 4x4 is identity") {
  ModelSpec s;
  s.family = ModelFamily::dcgan;
  s.resolution = 32;
  s.z_dim = 16;
  s.base_channels = 4;
  auto d = build_discriminator(s, 21);
  auto* dc = dynamic_cast<DcganDiscriminator*>(d.get());

  Rng rng(13);
  Tensor x = rand_uniform({2, 3, 32, 32}, rng, -1.0, 1.0);
  Tensor tap = dc->spatial_tap(x);  // [2, 4, 4]
  REQUIRE(tap.shape() == Shape{2, 4, 4});

  Tensor scores = d->forward(Var(x, false), false).val();
  const real_t head_bias = dc->convs.back().bias.val()[0];
  for (std::int64_t n = 0; n < 2; ++n) {
    real_t total = head_bias;
    for (std::int64_t i = 0; i < 16; ++i) total += tap[n * 16 + i];
    REQUIRE_THAT(total, Catch::Matchers::WithinAbs(scores[n], 1e-8));
  }

  // Tap is already 4x4, so the pooled map equals the tap exactly.
  Tensor map = spatial_score_map(*d, batch_item(x, 0));
  REQUIRE(map.shape() == Shape{4, 4});
  for (std::int64_t i = 0; i < 16; ++i)
    REQUIRE_THAT(map[i], Catch::Matchers::WithinAbs(tap[i], 1e-12));
}

TEST_CASE("resnet spatial tap: 8x8 pools to 4x4 block means; sums reproduce the score") {
  ModelSpec s;
  s.family = ModelFamily::resnet;
  s.resolution = 32;
  s.z_dim = 16;
  s.base_channels = 4;
  s.d_spectral_norm = true;
  auto d = build_discriminator(s, 22);
  auto* rd = dynamic_cast<ResnetDiscriminator*>(d.get());

  Rng rng(14);
  Tensor x = rand_uniform({1, 3, 32, 32}, rng, -1.0, 1.0);
  Tensor tap = rd->spatial_tap(x);  // [1, 8, 8]
  REQUIRE(tap.shape() == Shape{1, 8, 8});

  Tensor scores = d->forward(Var(x, false), false).val();
  real_t total = rd->head.bias.val()[0];
  for (std::int64_t i = 0; i < 64; ++i) total += tap[i];
  REQUIRE_THAT(total, Catch::Matchers::WithinAbs(scores[0], 1e-8));

  Tensor map = spatial_score_map(*d, x);
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j) {
      const real_t want = (tap.at(0, 2 * i, 2 * j) + tap.at(0, 2 * i, 2 * j + 1) +
                           tap.at(0, 2 * i + 1, 2 * j) + tap.at(0, 2 * i + 1, 2 * j + 1)) /
                          4.0;
      REQUIRE_THAT(map.at(i, j), Catch::Matchers::WithinAbs(want, 1e-12));
    }
}

TEST_CASE("spatial_score_map: capability error without a tap") {
  struct NoTapD final : Discriminator {
    Var forward(const Var& x, bool) override {
      return reshape(mean_axes(x, {1, 2, 3}, false), {x.shape()[0]});
    }
    void collect(std::vector<ParamRef>&, std::vector<BufferRef>&) override {}
  } d;
  REQUIRE_THROWS_AS(spatial_score_map(d, Tensor::zeros({3, 32, 32})), CapabilityError);
}
