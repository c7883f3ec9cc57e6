#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mixgan/augment.hpp"
#include "mixgan/checkpoint.hpp"
#include "mixgan/config.hpp"
#include "mixgan/data.hpp"
#include "mixgan/losses.hpp"
#include "mixgan/metrics.hpp"
#include "mixgan/models.hpp"
#include "mixgan/optimizer.hpp"
#include "mixgan/regularize.hpp"

namespace mixgan {

/// Per-step scalars; gp/cr are the raw (unweighted) penalty values and stay
/// zero on steps where the regularizer did not run.
struct StepMetrics {
  real_t d_loss = 0.0;
  real_t g_loss = 0.0;
  real_t gp = 0.0;
  real_t cr = 0.0;
};

/// Everything one logical training thread owns: both networks, their
/// optimizer moments, the step counters, and the single RNG stream that
/// feeds every stochastic draw made while training (latents, mix masks,
/// penalty interpolants, augmentation coins).
struct TrainState {
  ExperimentConfig cfg;
  std::unique_ptr<Generator> g;
  std::unique_ptr<Discriminator> d;
  std::vector<ParamRef> g_params, d_params;
  Adam opt_g, opt_d;
  Rng rng{0};
  std::int64_t iteration = 0;  // completed generator updates
  std::int64_t d_iter = 0;     // completed discriminator updates (drives the gp schedule)
};

inline TrainState init_train_state(const ExperimentConfig& cfg) {
  cfg.validate();
  check_config(cfg.batch_size >= 2, "training needs batch_size >= 2");
  TrainState s;
  s.cfg = cfg;
  s.g = build_generator(cfg.model, cfg.seed);
  s.d = build_discriminator(cfg.model, cfg.seed);
  s.g_params = s.g->parameters();
  s.d_params = s.d->parameters();
  s.opt_g.init(s.g_params, cfg.adam);
  s.opt_d.init(s.d_params, cfg.adam);
  s.rng = Rng(Rng::derive(cfg.seed, 0x747261696e));  // "train" stream
  return s;
}

namespace detail {

inline std::vector<Var> as_vars(const std::vector<ParamRef>& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(*p.var);
  return vars;
}

inline void require_finite(real_t v, const char* what, std::int64_t iteration) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string(what) + " became non-finite at iteration " +
                       std::to_string(iteration));
  }
}

}  // namespace detail

/// One critic update (Algorithm lines 3-12): draw one latent batch (one
/// batched draw in place of per-item draws; distributionally identical),
/// build fakes, fill the first floor(r*B) fake slots with mixed samples,
/// then descend the critic loss plus scheduled penalties. Only the critic's
/// parameters move. Draw order from the training stream: latents, mask
/// parameters per mixed slot, penalty interpolants (when scheduled),
/// augmentation coins (when enabled).
inline StepMetrics discriminator_step(TrainState& s, const Tensor& reals) {
  const auto& cfg = s.cfg;
  check_shape(reals.dim() == 4 && reals.size(0) == cfg.batch_size,
              "discriminator_step: reals batch must be [batch_size, C, H, W]");

  Tensor z = sample_latent(cfg.batch_size, cfg.model.z_dim, s.rng);
  Tensor fakes;
  {
    // Generator runs in training mode here too, so batch-norm sees the same
    // statistics regime in both phases of the alternation; no graph is kept.
    NoGradGuard ng;
    fakes = s.g->forward(Var::leaf(z, false), /*training=*/true).val();
  }
  Tensor composed =
      compose_discriminator_batch(reals, fakes, cfg.mix, cfg.effective_mix_ratio(), s.rng);

  Var real_scores = s.d->forward(Var::leaf(reals, false), /*training=*/true);
  Var fake_scores = s.d->forward(Var::leaf(composed, false), /*training=*/true);
  Var loss = discriminator_loss(real_scores, fake_scores, cfg.loss);

  StepMetrics m;
  m.d_loss = loss.val()[0];

  Var total = loss;
  if (cfg.reg.gp_enabled && gp_applies(s.d_iter, cfg.reg.gp_every)) {
    // The penalty interpolates between the real batch and the batch the
    // critic actually scored as fake (mixed slots included).
    Var gp = gradient_penalty(*s.d, reals, composed, s.rng);
    m.gp = gp.val()[0];
    total = add(total, mul_scalar(gp, cfg.reg.gp_coefficient));
  }
  if (cfg.reg.cr_enabled) {
    Var cr = consistency_regularization(*s.d, reals, s.rng, cfg.reg.cr_max_shift);
    m.cr = cr.val()[0];
    total = add(total, mul_scalar(cr, cfg.reg.cr_coefficient));
  }
  detail::require_finite(total.val()[0], "discriminator loss", s.iteration);

  auto grads = grad(total, detail::as_vars(s.d_params));
  s.opt_d.step(s.d_params, grads);
  ++s.d_iter;
  return m;
}

/// One generator update (Algorithm lines 14-15): a fresh latent batch —
/// never the one used in the critic loop — no mixed samples anywhere, and
/// only the generator's parameters move.
inline StepMetrics generator_step(TrainState& s) {
  const auto& cfg = s.cfg;
  Tensor z = sample_latent(cfg.batch_size, cfg.model.z_dim, s.rng);
  Var images = s.g->forward(Var::leaf(z, false), /*training=*/true);
  Var scores = s.d->forward(images, /*training=*/true);
  Var loss = generator_loss(scores, cfg.loss);

  StepMetrics m;
  m.g_loss = loss.val()[0];
  detail::require_finite(m.g_loss, "generator loss", s.iteration);

  auto grads = grad(loss, detail::as_vars(s.g_params));
  s.opt_g.step(s.g_params, grads);
  ++s.iteration;
  return m;
}

/// Draws `count` images from the generator in evaluation mode, in batches.
/// The RNG is the caller's; parameters and buffers are left untouched.
inline Tensor generate_images(Generator& g, std::int64_t count, std::int64_t z_dim, Rng& rng,
                              std::int64_t chunk = 128) {
  check_config(count > 0, "generate_images: count must be positive");
  std::vector<Tensor> parts;
  std::int64_t done = 0;
  while (done < count) {
    const std::int64_t n = std::min(chunk, count - done);
    Tensor z = sample_latent(n, z_dim, rng);
    Tensor imgs = g.sample_images(z);
    for (std::int64_t i = 0; i < n; ++i) parts.push_back(batch_item(imgs, i));
    done += n;
  }
  return stack(parts);
}

/// FID of a frozen snapshot: generation happens in eval mode with an RNG
/// derived from (seed, iteration), so the number is a pure function of the
/// parameters and never consumes from the training stream.
inline real_t evaluate_fid(TrainState& s, const FeatureExtractor& extractor,
                           const Tensor& real_images) {
  Rng eval_rng(Rng::derive(s.cfg.seed, 0xe7a10000ull + static_cast<std::uint64_t>(s.iteration)));
  Tensor fakes = generate_images(*s.g, s.cfg.fid_n_fake, s.cfg.model.z_dim, eval_rng);
  return compute_fid(extractor, real_images, fakes, s.cfg.fid_n_fake);
}

/// One metrics-log line. `fid` is null except on evaluation iterations;
/// every field other than wall_time is deterministic for a fixed config
/// and seed.
struct MetricsRecord {
  std::int64_t iteration = 0;
  real_t d_loss = 0.0;
  real_t g_loss = 0.0;
  real_t gp = 0.0;
  real_t cr = 0.0;
  std::optional<real_t> fid;
  real_t wall_time = 0.0;

  std::string to_line() const {
    nlohmann::json j{{"iteration", iteration}, {"d_loss", d_loss}, {"g_loss", g_loss},
                     {"gp", gp},               {"cr", cr},         {"wall_time", wall_time}};
    if (fid) {
      j["fid"] = *fid;
    } else {
      j["fid"] = nullptr;
    }
    return j.dump();
  }

  static MetricsRecord from_line(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError("corrupt metrics line: " + line);
    MetricsRecord r;
    r.iteration = j.at("iteration").get<std::int64_t>();
    r.d_loss = j.at("d_loss").get<real_t>();
    r.g_loss = j.at("g_loss").get<real_t>();
    r.gp = j.at("gp").get<real_t>();
    r.cr = j.at("cr").get<real_t>();
    if (!j.at("fid").is_null()) r.fid = j.at("fid").get<real_t>();
    r.wall_time = j.at("wall_time").get<real_t>();
    return r;
  }
};

/// Exclusive ownership of a run directory. Creation is atomic
/// (O_CREAT|O_EXCL), so two trainers cannot share an output directory; the
/// lock releases on destruction.
class RunLock {
 public:
  explicit RunLock(const std::string& dir) : path_((std::filesystem::path(dir) / ".lock").string()) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw ConfigError("run directory is locked by another process (remove " + path_ +
                        " if that run is dead)");
    }
  }
  ~RunLock() { release(); }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

  void release() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
      fd_ = -1;
    }
  }

 private:
  std::string path_;
  int fd_ = -1;
};

struct RunRecord {
  std::string run_dir;
  std::string config_path;
  std::string metrics_path;
  std::vector<std::string> checkpoint_paths;
  std::vector<std::pair<std::int64_t, real_t>> fid_history;
  std::int64_t iterations_completed = 0;
};

namespace detail {

inline Checkpoint snapshot_train_state(const TrainState& s, const LoaderState& loader) {
  Checkpoint ck;
  ck.iteration = s.iteration;
  ck.ints["d_iter"] = s.d_iter;
  ck.ints["loader.epoch"] = loader.epoch;
  ck.ints["loader.cursor"] = loader.cursor;
  // The full config travels inside the checkpoint so downstream consumers
  // (FID evaluation, analysis) need nothing but the checkpoint path.
  ck.strings["config"] = config_snapshot_text(s.cfg);
  ck.strings["rng.train"] = s.rng.serialize();
  pack_module(ck, "g", *s.g);
  pack_module(ck, "d", *s.d);
  pack_adam(ck, "opt_g", s.opt_g);
  pack_adam(ck, "opt_d", s.opt_d);
  return ck;
}

inline LoaderState restore_train_state(TrainState& s, const Checkpoint& ck) {
  s.iteration = ck.iteration;
  s.d_iter = ck.ints.at("d_iter");
  s.rng = Rng::deserialize(ck.strings.at("rng.train"));
  unpack_module(ck, "g", *s.g);
  unpack_module(ck, "d", *s.d);
  unpack_adam(ck, "opt_g", s.opt_g);
  unpack_adam(ck, "opt_d", s.opt_d);
  return LoaderState{ck.ints.at("loader.epoch"), ck.ints.at("loader.cursor")};
}

}  // namespace detail

/// Builds a training state from a saved checkpoint file plus its config.
inline TrainState load_train_state(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                                   LoaderState* loader_state = nullptr) {
  TrainState s = init_train_state(cfg);
  Checkpoint ck = load_checkpoint(checkpoint_path);
  LoaderState ls = detail::restore_train_state(s, ck);
  if (loader_state) *loader_state = ls;
  return s;
}

/// The config a checkpoint was trained under (checkpoints are self-describing).
inline ExperimentConfig config_from_checkpoint(const Checkpoint& ck) {
  auto it = ck.strings.find("config");
  if (it == ck.strings.end())
    throw DataError("checkpoint carries no config snapshot; it predates self-describing checkpoints");
  nlohmann::json j = nlohmann::json::parse(it->second, nullptr, false);
  if (j.is_discarded()) throw DataError("checkpoint config snapshot is not valid JSON");
  return config_from_json(j);
}

/// Loads a checkpoint and rebuilds its training state from the embedded config.
inline TrainState load_self_describing_state(const std::string& checkpoint_path,
                                             ExperimentConfig* config_out = nullptr,
                                             LoaderState* loader_state = nullptr) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  ExperimentConfig cfg = config_from_checkpoint(ck);
  TrainState s = init_train_state(cfg);
  LoaderState ls = detail::restore_train_state(s, ck);
  if (config_out) *config_out = cfg;
  if (loader_state) *loader_state = ls;
  return s;
}

/// Algorithm's outer loop: n_crit critic updates per generator update until
/// `iterations` generator updates have happened. Emits line-delimited
/// metrics, periodic checkpoints, and frozen-snapshot FID evaluations into
/// the run directory. Resumes from <out_dir>/latest.ckpt when present; a
/// non-finite loss saves <out_dir>/failure.ckpt before propagating.
inline RunRecord run_training(const ExperimentConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  RunLock lock(cfg.out_dir);

  RunRecord record;
  record.run_dir = cfg.out_dir;
  record.config_path = (fs::path(cfg.out_dir) / "config.json").string();
  record.metrics_path = (fs::path(cfg.out_dir) / "metrics.jsonl").string();
  const std::string latest_path = (fs::path(cfg.out_dir) / "latest.ckpt").string();
  const std::string final_path = (fs::path(cfg.out_dir) / "final.ckpt").string();

  {
    std::ofstream cf(record.config_path, std::ios::binary | std::ios::trunc);
    if (!cf) throw DataError("cannot write config snapshot: " + record.config_path);
    cf << config_snapshot_text(cfg);
  }

  Dataset dataset = open_dataset(cfg.dataset, cfg.model.resolution);
  const std::int64_t extractor_dim = dataset.channels * cfg.model.resolution * cfg.model.resolution;
  auto extractor = make_feature_extractor(cfg.extractor, extractor_dim);
  Tensor real_images;
  {
    std::vector<Tensor> items;
    items.reserve(static_cast<std::size_t>(dataset.size()));
    for (std::int64_t i = 0; i < dataset.size(); ++i) items.push_back(dataset.item(i));
    real_images = stack(items);
  }

  TrainState state = init_train_state(cfg);
  DataLoader loader(dataset, cfg.batch_size, Rng::derive(cfg.seed, 0x64617461));  // "data" stream

  const bool resuming = fs::exists(latest_path);
  if (resuming) {
    Checkpoint ck = load_checkpoint(latest_path);
    loader.restore(detail::restore_train_state(state, ck));
    record.checkpoint_paths.push_back(latest_path);
  }

  std::ofstream metrics(record.metrics_path,
                        std::ios::binary | (resuming ? std::ios::app : std::ios::trunc));
  if (!metrics) throw DataError("cannot open metrics log: " + record.metrics_path);

  const auto start = std::chrono::steady_clock::now();
  auto seconds_elapsed = [&]() {
    return std::chrono::duration<real_t>(std::chrono::steady_clock::now() - start).count();
  };

  auto save_state = [&](const std::string& path) {
    save_checkpoint(path, detail::snapshot_train_state(state, loader.state()));
    if (std::find(record.checkpoint_paths.begin(), record.checkpoint_paths.end(), path) ==
        record.checkpoint_paths.end()) {
      record.checkpoint_paths.push_back(path);
    }
  };

  while (state.iteration < cfg.iterations) {
    StepMetrics d_metrics, g_metrics;
    try {
      for (std::int64_t t = 0; t < cfg.n_critic; ++t) {
        d_metrics = discriminator_step(state, loader.next_batch());
      }
      g_metrics = generator_step(state);
    } catch (const NumericError&) {
      save_state((fs::path(cfg.out_dir) / "failure.ckpt").string());
      throw;
    }

    const std::int64_t it = state.iteration;
    const bool eval_now = (it % cfg.eval_every == 0) || it == cfg.iterations;
    const bool log_now = (it % cfg.log_every == 0) || it == cfg.iterations || eval_now;

    std::optional<real_t> fid;
    if (eval_now) {
      fid = evaluate_fid(state, *extractor, real_images);
      record.fid_history.emplace_back(it, *fid);
    }
    if (log_now) {
      MetricsRecord r;
      r.iteration = it;
      r.d_loss = d_metrics.d_loss;  // last critic step of this iteration
      r.gp = d_metrics.gp;
      r.cr = d_metrics.cr;
      r.g_loss = g_metrics.g_loss;
      r.fid = fid;
      r.wall_time = seconds_elapsed();
      metrics << r.to_line() << "\n";
      metrics.flush();
    }
    if (it % cfg.checkpoint_every == 0 || it == cfg.iterations) {
      save_state(latest_path);
    }
  }

  save_state(final_path);
  record.iterations_completed = state.iteration;
  return record;
}

}  // namespace mixgan
