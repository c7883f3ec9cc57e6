#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mixgan/nn.hpp"

namespace mixgan {

enum class ModelFamily { dcgan, resnet };

inline const char* family_name(ModelFamily f) {
  return f == ModelFamily::dcgan ? "dcgan" : "resnet";
}

struct ModelSpec {
  ModelFamily family = ModelFamily::dcgan;
  std::int64_t resolution = 32;     // 32, 64 or 128
  std::int64_t z_dim = 128;
  std::int64_t base_channels = 64;  // width multiplier; doubled per stage, capped at 8x
  bool d_spectral_norm = false;
  bool d_layer_norm = false;

  void validate() const {
    check_config(resolution == 32 || resolution == 64 || resolution == 128,
                 "unsupported resolution " + std::to_string(resolution) +
                     " (expected 32, 64 or 128)");
    check_config(z_dim >= 1, "z_dim must be positive");
    check_config(base_channels >= 1, "base_channels must be positive");
  }
};

inline std::int64_t int_log2(std::int64_t v) {
  std::int64_t l = 0;
  while ((std::int64_t{1} << l) < v) ++l;
  return l;
}

// ---------------------------------------------------------------------------
// Base classes.
// ---------------------------------------------------------------------------

struct Module {
  virtual ~Module() = default;
  virtual void collect(std::vector<ParamRef>& ps, std::vector<BufferRef>& bs) = 0;

  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> ps;
    std::vector<BufferRef> bs;
    collect(ps, bs);
    return ps;
  }
  std::vector<BufferRef> buffers() {
    std::vector<ParamRef> ps;
    std::vector<BufferRef> bs;
    collect(ps, bs);
    return bs;
  }
  std::int64_t parameter_count() {
    std::int64_t n = 0;
    for (auto& p : parameters()) n += p.var->numel();
    return n;
  }
};

struct Generator : Module {
  ModelSpec spec;
  virtual Var forward(const Var& z, bool training) = 0;

  /// Evaluation-mode convenience: z values in, image values out, no graph.
  Tensor sample_images(const Tensor& z) {
    NoGradGuard guard;
    return forward(Var(z, false), false).val();
  }
};

struct Discriminator : Module {
  ModelSpec spec;
  virtual Var forward(const Var& x, bool training) = 0;  // [N,C,H,W] -> [N]
  virtual bool has_spatial_tap() const { return false; }
  /// Per-location score contributions before global pooling, [N, h', w'].
  virtual Tensor spatial_tap(const Tensor&) {
    throw CapabilityError("discriminator exposes no spatial tap");
  }
};

/// Project the discriminator's spatial tap down to a 4x4 score map.
inline Tensor spatial_score_map(Discriminator& d, const Tensor& image) {
  if (!d.has_spatial_tap()) throw CapabilityError("discriminator exposes no spatial tap");
  Tensor batch = image;
  if (image.dim() == 3)
    batch = image.reshaped({1, image.size(0), image.size(1), image.size(2)});
  check_shape(batch.dim() == 4 && batch.size(0) == 1, "spatial_score_map expects a single image");
  NoGradGuard guard;
  Tensor tap = d.spatial_tap(batch);  // [1, h, w]
  const std::int64_t h = tap.size(1), w = tap.size(2);
  check_shape(h == w && h >= 4 && h % 4 == 0, "spatial tap must be square with side a multiple of 4");
  Var pooled = avg_pool2d(Var(tap.reshaped({1, 1, h, w}), false), h / 4);
  return pooled.val().reshaped({4, 4});
}

// ---------------------------------------------------------------------------
// DCGAN-style generator/discriminator.
//
// Stage widths follow the classic convention: feature maps double per
// downsampling (cap 8x base), mirrored for the generator. The generator uses
// batch norm + ReLU in every hidden block and tanh on the output; the
// discriminator uses leaky ReLU (0.2), optional layer norm on the hidden
// blocks (never the first), and optional spectral norm on every conv weight.
// ---------------------------------------------------------------------------

struct DcganGenerator final : Generator {
  std::vector<ConvTranspose2d> deconvs;  // stages hidden blocks + output head
  std::vector<BatchNorm2d> bns;

  void init(const ModelSpec& s, Rng& rng) {
    spec = s;
    const std::int64_t stages = int_log2(s.resolution) - 2;
    auto mult = [&](std::int64_t i) { return std::min<std::int64_t>(1 << (stages - 1 - i), 8); };
    deconvs.resize(stages + 1);
    bns.resize(stages);
    deconvs[0].init(s.z_dim, s.base_channels * mult(0), 4, 1, 0, rng);  // -> 4x4
    bns[0].init(s.base_channels * mult(0), rng);
    for (std::int64_t i = 1; i < stages; ++i) {
      deconvs[i].init(s.base_channels * mult(i - 1), s.base_channels * mult(i), 4, 2, 1, rng);
      bns[i].init(s.base_channels * mult(i), rng);
    }
    deconvs[stages].init(s.base_channels * mult(stages - 1), 3, 4, 2, 1, rng);
  }

  Var forward(const Var& z, bool training) override {
    check_shape(z.shape().size() == 2 && z.shape()[1] == spec.z_dim,
                "generator expects z of shape [N, z_dim]");
    Var h = reshape(z, {z.shape()[0], spec.z_dim, 1, 1});
    for (std::size_t i = 0; i + 1 < deconvs.size(); ++i) {
      h = deconvs[i].forward(h, training);
      h = bns[i].forward(h, training);
      h = relu(h);
    }
    return tanh(deconvs.back().forward(h, training));
  }

  void collect(std::vector<ParamRef>& ps, std::vector<BufferRef>& bs) override {
    for (std::size_t i = 0; i < deconvs.size(); ++i)
      deconvs[i].register_to("g.deconv" + std::to_string(i), ps, bs);
    for (std::size_t i = 0; i < bns.size(); ++i)
      bns[i].register_to("g.bn" + std::to_string(i), ps, bs);
  }
};

struct DcganDiscriminator final : Discriminator {
  std::vector<Conv2d> convs;       // stages down convs + 1x1-output head
  std::vector<LayerNorm2d> lns;    // hidden blocks only, when layer norm is on

  void init(const ModelSpec& s, Rng& rng) {
    spec = s;
    const std::int64_t stages = int_log2(s.resolution) - 2;
    auto mult = [&](std::int64_t i) { return std::min<std::int64_t>(1 << i, 8); };
    convs.resize(stages + 1);
    convs[0].init(3, s.base_channels * mult(0), 4, 2, 1, rng, s.d_spectral_norm);
    if (s.d_layer_norm) lns.resize(stages - 1);
    for (std::int64_t i = 1; i < stages; ++i) {
      convs[i].init(s.base_channels * mult(i - 1), s.base_channels * mult(i), 4, 2, 1, rng,
                    s.d_spectral_norm);
      if (s.d_layer_norm) lns[i - 1].init(s.base_channels * mult(i));
    }
    convs[stages].init(s.base_channels * mult(stages - 1), 1, 4, 1, 0, rng, s.d_spectral_norm);
  }

  Var features(const Var& x, bool training) {  // last conv activations, [N, C, 4, 4]
    Var h = leaky_relu(convs[0].forward(x, training), 0.2);
    for (std::size_t i = 1; i + 1 < convs.size(); ++i) {
      h = convs[i].forward(h, training);
      if (spec.d_layer_norm) h = lns[i - 1].forward(h);
      h = leaky_relu(h, 0.2);
    }
    return h;
  }

  Var forward(const Var& x, bool training) override {
    check_shape(x.shape().size() == 4 && x.shape()[2] == spec.resolution &&
                    x.shape()[3] == spec.resolution,
                "discriminator expects [N, 3, " + std::to_string(spec.resolution) + ", " +
                    std::to_string(spec.resolution) + "] input");
    Var f = features(x, training);
    Var s = convs.back().forward(f, training);  // [N, 1, 1, 1]
    return reshape(s, {x.shape()[0]});
  }

  bool has_spatial_tap() const override { return true; }

  /// Per-location contribution of the head conv: map[n,i,j] = sum_c W[0,c,i,j] * F[n,c,i,j];
  /// summing the map over (i,j) plus the head bias reproduces the score.
  Tensor spatial_tap(const Tensor& x) override {
    NoGradGuard guard;
    Tensor f = features(Var(x, false), false).val();  // [N, C, 4, 4]
    Conv2d& head = convs.back();
    Tensor w = head.weight.val();
    if (head.spectral) {
      const Tensor w2d = w.reshaped({head.out_c, head.in_c * head.k * head.k});
      const real_t sigma = spectral_sigma(w2d, head.sn);
      Tensor scaled(w.shape());
      scaled.array() = w.array() / sigma;
      w = scaled;
    }
    const std::int64_t N = f.size(0), C = f.size(1), H = f.size(2), W = f.size(3);
    Tensor map = Tensor::zeros({N, H, W});
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t i = 0; i < H; ++i)
          for (std::int64_t j = 0; j < W; ++j)
            map.at(n, i, j) += w.at(0, c, i, j) * f.at(n, c, i, j);
    return map;
  }

  void collect(std::vector<ParamRef>& ps, std::vector<BufferRef>& bs) override {
    for (std::size_t i = 0; i < convs.size(); ++i)
      convs[i].register_to("d.conv" + std::to_string(i), ps, bs);
    for (std::size_t i = 0; i < lns.size(); ++i)
      lns[i].register_to("d.ln" + std::to_string(i), ps, bs);
  }
};

// ---------------------------------------------------------------------------
// ResNet-style generator/discriminator (pre-activation residual blocks,
// nearest-neighbor upsampling in G, mean-pool downsampling in D, global sum
// pooling before the final linear score).
// ---------------------------------------------------------------------------

struct ResUpBlock {
  BatchNorm2d bn1, bn2;
  Conv2d conv1, conv2, skip;
  bool has_skip = false;

  void init(std::int64_t ci, std::int64_t co, Rng& rng) {
    bn1.init(ci, rng);
    conv1.init(ci, co, 3, 1, 1, rng, false);
    bn2.init(co, rng);
    conv2.init(co, co, 3, 1, 1, rng, false);
    has_skip = ci != co;
    if (has_skip) skip.init(ci, co, 1, 1, 0, rng, false);
  }

  Var forward(const Var& x, bool training) {
    Var h = relu(bn1.forward(x, training));
    h = conv1.forward(nearest_upsample(h, 2), training);
    h = relu(bn2.forward(h, training));
    h = conv2.forward(h, training);
    Var s = nearest_upsample(x, 2);
    if (has_skip) s = skip.forward(s, training);
    return add(h, s);
  }

  void register_to(const std::string& p, std::vector<ParamRef>& ps, std::vector<BufferRef>& bs) {
    bn1.register_to(p + ".bn1", ps, bs);
    conv1.register_to(p + ".conv1", ps, bs);
    bn2.register_to(p + ".bn2", ps, bs);
    conv2.register_to(p + ".conv2", ps, bs);
    if (has_skip) skip.register_to(p + ".skip", ps, bs);
  }
};

struct ResDownBlock {
  Conv2d conv1, conv2, skip;
  LayerNorm2d ln1, ln2;
  bool use_ln = false;
  bool down = true;
  bool has_skip = false;

  void init(std::int64_t ci, std::int64_t co, bool downsample, bool layer_norm, bool spectral,
            Rng& rng) {
    use_ln = layer_norm;
    down = downsample;
    if (use_ln) ln1.init(ci);
    conv1.init(ci, co, 3, 1, 1, rng, spectral);
    if (use_ln) ln2.init(co);
    conv2.init(co, co, 3, 1, 1, rng, spectral);
    has_skip = ci != co;
    if (has_skip) skip.init(ci, co, 1, 1, 0, rng, spectral);
  }

  Var forward(const Var& x, bool training) {
    Var h = x;
    if (use_ln) h = ln1.forward(h);
    h = conv1.forward(relu(h), training);
    if (use_ln) h = ln2.forward(h);
    h = conv2.forward(relu(h), training);
    if (down) h = avg_pool2d(h, 2);
    Var s = x;
    if (has_skip) s = skip.forward(s, training);
    if (down) s = avg_pool2d(s, 2);
    return add(h, s);
  }

  void register_to(const std::string& p, std::vector<ParamRef>& ps, std::vector<BufferRef>& bs) {
    if (use_ln) ln1.register_to(p + ".ln1", ps, bs);
    conv1.register_to(p + ".conv1", ps, bs);
    if (use_ln) ln2.register_to(p + ".ln2", ps, bs);
    conv2.register_to(p + ".conv2", ps, bs);
    if (has_skip) skip.register_to(p + ".skip", ps, bs);
  }
};

struct ResnetGenerator final : Generator {
  Linear fc;
  std::vector<ResUpBlock> ups;
  BatchNorm2d bn_out;
  Conv2d conv_out;
  std::int64_t ch0 = 0;

  void init(const ModelSpec& s, Rng& rng) {
    spec = s;
    const std::int64_t stages = int_log2(s.resolution) - 2;  // up blocks from 4x4
    auto mult = [&](std::int64_t i) { return std::min<std::int64_t>(1 << (stages - 1 - i), 8); };
    ch0 = s.base_channels * mult(0);  // width at 4x4
    fc.init(s.z_dim, ch0 * 4 * 4, rng, false);
    ups.resize(stages);
    std::int64_t ci = ch0;
    for (std::int64_t i = 0; i < stages; ++i) {
      const std::int64_t co = i + 1 < stages ? s.base_channels * mult(i + 1) : s.base_channels;
      ups[i].init(ci, co, rng);
      ci = co;
    }
    bn_out.init(ci, rng);
    conv_out.init(ci, 3, 3, 1, 1, rng, false);
  }

  Var forward(const Var& z, bool training) override {
    check_shape(z.shape().size() == 2 && z.shape()[1] == spec.z_dim,
                "generator expects z of shape [N, z_dim]");
    Var h = reshape(fc.forward(z, training), {z.shape()[0], ch0, 4, 4});
    for (auto& b : ups) h = b.forward(h, training);
    h = relu(bn_out.forward(h, training));
    return tanh(conv_out.forward(h, training));
  }

  void collect(std::vector<ParamRef>& ps, std::vector<BufferRef>& bs) override {
    fc.register_to("g.fc", ps, bs);
    for (std::size_t i = 0; i < ups.size(); ++i)
      ups[i].register_to("g.up" + std::to_string(i), ps, bs);
    bn_out.register_to("g.bn_out", ps, bs);
    conv_out.register_to("g.conv_out", ps, bs);
  }
};

struct ResnetDiscriminator final : Discriminator {
  Conv2d stem;
  std::vector<ResDownBlock> blocks;
  Linear head;
  std::int64_t ch_last = 0;

  void init(const ModelSpec& s, Rng& rng) {
    spec = s;
    const std::int64_t n_down = int_log2(s.resolution) - 3;  // bottoms out at 8x8
    auto mult = [&](std::int64_t i) { return std::min<std::int64_t>(1 << i, 8); };
    stem.init(3, s.base_channels * mult(0), 3, 1, 1, rng, s.d_spectral_norm);
    blocks.resize(n_down + 1);
    std::int64_t ci = s.base_channels * mult(0);
    for (std::int64_t i = 0; i < n_down; ++i) {
      const std::int64_t co = s.base_channels * mult(i + 1);
      blocks[i].init(ci, co, true, s.d_layer_norm, s.d_spectral_norm, rng);
      ci = co;
    }
    blocks[n_down].init(ci, ci, false, s.d_layer_norm, s.d_spectral_norm, rng);
    ch_last = ci;
    head.init(ci, 1, rng, s.d_spectral_norm);
  }

  Var features(const Var& x, bool training) {  // final activations, [N, C, 8, 8]
    Var h = stem.forward(x, training);
    for (auto& b : blocks) h = b.forward(h, training);
    return relu(h);
  }

  Var forward(const Var& x, bool training) override {
    check_shape(x.shape().size() == 4 && x.shape()[2] == spec.resolution &&
                    x.shape()[3] == spec.resolution,
                "discriminator expects [N, 3, " + std::to_string(spec.resolution) + ", " +
                    std::to_string(spec.resolution) + "] input");
    Var f = features(x, training);
    Var pooled = sum_axes(f, {2, 3}, false);  // global sum pool, [N, C]
    return reshape(head.forward(pooled, training), {x.shape()[0]});
  }

  bool has_spatial_tap() const override { return true; }

  /// Per-location contribution of the head projection: map[n,i,j] = sum_c w[0,c] * F[n,c,i,j].
  Tensor spatial_tap(const Tensor& x) override {
    NoGradGuard guard;
    Tensor f = features(Var(x, false), false).val();  // [N, C, 8, 8]
    Tensor w = head.weight.val();
    if (head.spectral) {
      const real_t sigma = spectral_sigma(w, head.sn);
      Tensor scaled(w.shape());
      scaled.array() = w.array() / sigma;
      w = scaled;
    }
    const std::int64_t N = f.size(0), C = f.size(1), H = f.size(2), W = f.size(3);
    Tensor map = Tensor::zeros({N, H, W});
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t i = 0; i < H; ++i)
          for (std::int64_t j = 0; j < W; ++j)
            map.at(n, i, j) += w.at(0, c) * f.at(n, c, i, j);
    return map;
  }

  void collect(std::vector<ParamRef>& ps, std::vector<BufferRef>& bs) override {
    stem.register_to("d.stem", ps, bs);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].register_to("d.block" + std::to_string(i), ps, bs);
    head.register_to("d.head", ps, bs);
  }
};

// ---------------------------------------------------------------------------
// Builders. Initialization is deterministic given the seed; generator and
// discriminator draw from independent derived streams.
// ---------------------------------------------------------------------------

inline std::unique_ptr<Generator> build_generator(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(Rng::derive(seed, 0x67656e));
  if (spec.family == ModelFamily::dcgan) {
    auto g = std::make_unique<DcganGenerator>();
    g->init(spec, rng);
    return g;
  }
  auto g = std::make_unique<ResnetGenerator>();
  g->init(spec, rng);
  return g;
}

inline std::unique_ptr<Discriminator> build_discriminator(const ModelSpec& spec,
                                                          std::uint64_t seed) {
  spec.validate();
  Rng rng(Rng::derive(seed, 0x64697363));
  if (spec.family == ModelFamily::dcgan) {
    auto d = std::make_unique<DcganDiscriminator>();
    d->init(spec, rng);
    return d;
  }
  auto d = std::make_unique<ResnetDiscriminator>();
  d->init(spec, rng);
  return d;
}

}  // namespace mixgan
