#pragma once

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "mixgan/augment.hpp"
#include "mixgan/losses.hpp"
#include "mixgan/models.hpp"
#include "mixgan/optimizer.hpp"
#include "mixgan/regularize.hpp"

namespace mixgan {

inline ModelFamily parse_model_family(const std::string& s) {
  if (s == "dcgan") return ModelFamily::dcgan;
  if (s == "resnet") return ModelFamily::resnet;
  throw ConfigError("unknown model family: " + s);
}

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "wasserstein") return LossKind::wasserstein;
  if (s == "hinge") return LossKind::hinge;
  throw ConfigError("unknown loss: " + s);
}

inline MixKind parse_mix_kind(const std::string& s) {
  if (s == "none") return MixKind::none;
  if (s == "mixup") return MixKind::mixup;
  if (s == "cutmix") return MixKind::cutmix;
  if (s == "srmix") return MixKind::srmix;
  throw ConfigError("unknown mix kind: " + s);
}

inline const char* mix_pairing_name(MixPairing p) {
  switch (p) {
    case MixPairing::real_fake: return "real-fake";
    case MixPairing::real_real: return "real-real";
    case MixPairing::fake_fake: return "fake-fake";
  }
  return "?";
}

inline MixPairing parse_mix_pairing(const std::string& s) {
  if (s == "real-fake") return MixPairing::real_fake;
  if (s == "real-real") return MixPairing::real_real;
  if (s == "fake-fake") return MixPairing::fake_fake;
  throw ConfigError("unknown mix pairing: " + s);
}

constexpr std::int64_t kConfigSchemaVersion = 1;

/// Full description of one experiment. Serialized as nested JSON; every
/// field has a default, so a config file only states what it changes.
struct ExperimentConfig {
  std::int64_t schema_version = kConfigSchemaVersion;

  ModelSpec model;
  LossKind loss = LossKind::hinge;

  MixStrategyConfig mix;
  real_t mix_ratio = 0.0;  // fraction of the fake batch replaced by mixed samples

  RegularizerConfig reg;

  std::int64_t batch_size = 64;
  std::int64_t n_critic = 2;
  std::int64_t iterations = 100000;
  AdamHyper adam;
  std::uint64_t seed = 0;

  std::string dataset = "synthetic://colored-shapes?n=2000&seed=0";
  std::string out_dir = "runs/run";

  std::int64_t log_every = 10;
  std::int64_t eval_every = 1000;
  std::int64_t checkpoint_every = 1000;
  std::int64_t fid_n_fake = 10000;
  std::string extractor = "toy";

  /// The mix ratio only has an effect once a mix kind is selected; presets
  /// carry their ratio even in vanilla mode so switching the kind on is a
  /// one-key change.
  real_t effective_mix_ratio() const { return mix.kind == MixKind::none ? 0.0 : mix_ratio; }

  void validate() const {
    check_config(schema_version == kConfigSchemaVersion,
                 "unsupported config schema_version " + std::to_string(schema_version));
    model.validate();
    reg.validate();
    adam.validate();
    check_config(mix.mixup.alpha > 0, "mixup alpha must be positive");
    check_config(mix_ratio >= 0.0 && mix_ratio <= 1.0, "mix ratio must lie in [0, 1]");
    check_config(batch_size > 0, "batch_size must be positive");
    check_config(n_critic >= 1, "n_critic must be at least 1");
    check_config(iterations >= 0, "iterations must be non-negative");
    check_config(log_every >= 1, "log_every must be at least 1");
    check_config(eval_every >= 1, "eval_every must be at least 1");
    check_config(checkpoint_every >= 1, "checkpoint_every must be at least 1");
    check_config(fid_n_fake >= 2, "fid_n_fake must be at least 2");
    check_config(!dataset.empty(), "dataset must be set");
    check_config(!out_dir.empty(), "out_dir must be set");
  }
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  return nlohmann::json{
      {"schema_version", c.schema_version},
      {"model",
       {{"family", family_name(c.model.family)},
        {"resolution", c.model.resolution},
        {"z_dim", c.model.z_dim},
        {"base_channels", c.model.base_channels},
        {"spectral_norm", c.model.d_spectral_norm},
        {"layer_norm", c.model.d_layer_norm}}},
      {"loss", loss_kind_name(c.loss)},
      {"mix",
       {{"kind", mix_kind_name(c.mix.kind)},
        {"ratio", c.mix_ratio},
        {"mixup_alpha", c.mix.mixup.alpha},
        {"pairing", mix_pairing_name(c.mix.pairing)}}},
      {"regularize",
       {{"gp", c.reg.gp_enabled},
        {"gp_every", c.reg.gp_every},
        {"gp_coefficient", c.reg.gp_coefficient},
        {"cr", c.reg.cr_enabled},
        {"cr_coefficient", c.reg.cr_coefficient},
        {"cr_max_shift", c.reg.cr_max_shift},
        {"cr_include_mixed", c.reg.cr_include_mixed}}},
      {"train",
       {{"batch_size", c.batch_size},
        {"n_critic", c.n_critic},
        {"iterations", c.iterations},
        {"lr", c.adam.eta},
        {"beta1", c.adam.beta1},
        {"beta2", c.adam.beta2},
        {"adam_eps", c.adam.eps},
        {"seed", c.seed}}},
      {"data", {{"dataset", c.dataset}, {"out_dir", c.out_dir}}},
      {"eval",
       {{"log_every", c.log_every},
        {"eval_every", c.eval_every},
        {"checkpoint_every", c.checkpoint_every},
        {"fid_n_fake", c.fid_n_fake},
        {"extractor", c.extractor}}},
  };
}

namespace detail {

inline void collect_unknown_keys(const nlohmann::json& obj, const std::string& scope,
                                 const std::vector<std::string>& allowed,
                                 std::vector<std::string>& unknown) {
  if (!obj.is_object()) return;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      unknown.push_back(scope.empty() ? it.key() : scope + "." + it.key());
    }
  }
}

template <typename T>
void fetch(const nlohmann::json& obj, const char* key, const std::string& scope, T& out) {
  if (!obj.is_object() || !obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for config key " + (scope.empty() ? std::string(key) : scope + "." + key) +
                      ": " + e.what());
  }
}

inline void fetch_str(const nlohmann::json& obj, const char* key, const std::string& scope,
                      std::string& out) {
  fetch<std::string>(obj, key, scope, out);
}

}  // namespace detail

/// Builds a config from JSON, starting from defaults. Unknown keys anywhere
/// in the document are rejected together, listing every offender.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  ExperimentConfig c;
  std::vector<std::string> unknown;
  detail::collect_unknown_keys(
      j, "", {"schema_version", "model", "loss", "mix", "regularize", "train", "data", "eval"},
      unknown);

  detail::fetch(j, "schema_version", "", c.schema_version);

  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::collect_unknown_keys(
        m, "model", {"family", "resolution", "z_dim", "base_channels", "spectral_norm", "layer_norm"},
        unknown);
    std::string family = family_name(c.model.family);
    detail::fetch_str(m, "family", "model", family);
    c.model.family = parse_model_family(family);
    detail::fetch(m, "resolution", "model", c.model.resolution);
    detail::fetch(m, "z_dim", "model", c.model.z_dim);
    detail::fetch(m, "base_channels", "model", c.model.base_channels);
    detail::fetch(m, "spectral_norm", "model", c.model.d_spectral_norm);
    detail::fetch(m, "layer_norm", "model", c.model.d_layer_norm);
  }

  if (j.contains("loss")) {
    std::string loss;
    detail::fetch_str(j, "loss", "", loss);
    c.loss = parse_loss_kind(loss);
  }

  if (j.contains("mix")) {
    const auto& m = j.at("mix");
    detail::collect_unknown_keys(m, "mix", {"kind", "ratio", "mixup_alpha", "pairing"}, unknown);
    std::string kind = mix_kind_name(c.mix.kind);
    detail::fetch_str(m, "kind", "mix", kind);
    c.mix.kind = parse_mix_kind(kind);
    detail::fetch(m, "ratio", "mix", c.mix_ratio);
    detail::fetch(m, "mixup_alpha", "mix", c.mix.mixup.alpha);
    std::string pairing = mix_pairing_name(c.mix.pairing);
    detail::fetch_str(m, "pairing", "mix", pairing);
    c.mix.pairing = parse_mix_pairing(pairing);
  }

  if (j.contains("regularize")) {
    const auto& r = j.at("regularize");
    detail::collect_unknown_keys(
        r, "regularize",
        {"gp", "gp_every", "gp_coefficient", "cr", "cr_coefficient", "cr_max_shift", "cr_include_mixed"},
        unknown);
    detail::fetch(r, "gp", "regularize", c.reg.gp_enabled);
    detail::fetch(r, "gp_every", "regularize", c.reg.gp_every);
    detail::fetch(r, "gp_coefficient", "regularize", c.reg.gp_coefficient);
    detail::fetch(r, "cr", "regularize", c.reg.cr_enabled);
    detail::fetch(r, "cr_coefficient", "regularize", c.reg.cr_coefficient);
    detail::fetch(r, "cr_max_shift", "regularize", c.reg.cr_max_shift);
    detail::fetch(r, "cr_include_mixed", "regularize", c.reg.cr_include_mixed);
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::collect_unknown_keys(
        t, "train", {"batch_size", "n_critic", "iterations", "lr", "beta1", "beta2", "adam_eps", "seed"},
        unknown);
    detail::fetch(t, "batch_size", "train", c.batch_size);
    detail::fetch(t, "n_critic", "train", c.n_critic);
    detail::fetch(t, "iterations", "train", c.iterations);
    detail::fetch(t, "lr", "train", c.adam.eta);
    detail::fetch(t, "beta1", "train", c.adam.beta1);
    detail::fetch(t, "beta2", "train", c.adam.beta2);
    detail::fetch(t, "adam_eps", "train", c.adam.eps);
    detail::fetch(t, "seed", "train", c.seed);
  }

  if (j.contains("data")) {
    const auto& d = j.at("data");
    detail::collect_unknown_keys(d, "data", {"dataset", "out_dir"}, unknown);
    detail::fetch_str(d, "dataset", "data", c.dataset);
    detail::fetch_str(d, "out_dir", "data", c.out_dir);
  }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::collect_unknown_keys(
        e, "eval", {"log_every", "eval_every", "checkpoint_every", "fid_n_fake", "extractor"}, unknown);
    detail::fetch(e, "log_every", "eval", c.log_every);
    detail::fetch(e, "eval_every", "eval", c.eval_every);
    detail::fetch(e, "checkpoint_every", "eval", c.checkpoint_every);
    detail::fetch(e, "fid_n_fake", "eval", c.fid_n_fake);
    detail::fetch_str(e, "extractor", "eval", c.extractor);
  }

  if (!unknown.empty()) {
    std::string msg = "unknown config key(s): ";
    for (std::size_t i = 0; i < unknown.size(); ++i) {
      if (i) msg += ", ";
      msg += unknown[i];
    }
    throw ConfigError(msg);
  }

  c.validate();
  return c;
}

/// Bundled experiment setups:
///   case1: DCGAN + hinge, LayerNorm critic, CR + GP, mix ratio 0.25
///   case2: DCGAN + hinge, SpectralNorm critic, CR only, mix ratio 0.25
///   case3: ResNet + hinge, LayerNorm + SpectralNorm critic, CR + GP, ratio 0.15
/// All share batch 64, n_critic 2, Adam(1e-3, 0.01, 0.999), 100k iterations.
/// The gradient penalty, where present, fires every 5th critic step. The mix
/// kind starts as "none" (the vanilla baseline); select one explicitly.
inline ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.loss = LossKind::hinge;
  c.batch_size = 64;
  c.n_critic = 2;
  c.iterations = 100000;
  c.adam.eta = 1e-3;
  c.adam.beta1 = 0.01;
  c.adam.beta2 = 0.999;
  c.reg.cr_enabled = true;
  c.reg.cr_coefficient = 1.0;
  c.reg.cr_max_shift = 4;
  c.model.resolution = 64;
  c.model.z_dim = 128;
  c.model.base_channels = 64;
  if (name == "case1") {
    c.model.family = ModelFamily::dcgan;
    c.model.d_layer_norm = true;
    c.model.d_spectral_norm = false;
    c.reg.gp_enabled = true;
    c.reg.gp_every = 5;
    c.reg.gp_coefficient = 10.0;
    c.mix_ratio = 0.25;
  } else if (name == "case2") {
    c.model.family = ModelFamily::dcgan;
    c.model.d_layer_norm = false;
    c.model.d_spectral_norm = true;
    c.reg.gp_enabled = false;
    c.mix_ratio = 0.25;
  } else if (name == "case3") {
    c.model.family = ModelFamily::resnet;
    c.model.d_layer_norm = true;
    c.model.d_spectral_norm = true;
    c.reg.gp_enabled = true;
    c.reg.gp_every = 5;
    c.reg.gp_coefficient = 10.0;
    c.mix_ratio = 0.15;
  } else {
    throw ConfigError("unknown preset: " + name + " (expected case1, case2 or case3)");
  }
  return c;
}

/// Applies one `dotted.path=value` assignment onto a JSON document,
/// creating intermediate objects as needed. Values parse as JSON scalars
/// when possible and fall back to plain strings.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key=value, got: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  nlohmann::json value;
  nlohmann::json parsed = nlohmann::json::parse(text, nullptr, false);
  if (!parsed.is_discarded() && (parsed.is_number() || parsed.is_boolean() || parsed.is_null())) {
    value = parsed;
  } else {
    value = text;
  }

  nlohmann::json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string seg = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (seg.empty()) throw ConfigError("override path has an empty segment: " + path);
    if (dot == std::string::npos) {
      (*cur)[seg] = value;
      break;
    }
    nlohmann::json& next = (*cur)[seg];
    if (!next.is_object() && !next.is_null()) {
      throw ConfigError("override path " + path + " descends into a non-object at '" + seg + "'");
    }
    if (next.is_null()) next = nlohmann::json::object();
    cur = &next;
    start = dot + 1;
  }
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
  return j;
}

/// Resolves a base document plus command-line overrides into a validated
/// config.
inline ExperimentConfig resolve_config(nlohmann::json base,
                                       const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) apply_override(base, o);
  return config_from_json(base);
}

/// Canonical text form used for run-directory snapshots; resolving the
/// snapshot again reproduces it byte for byte.
inline std::string config_snapshot_text(const ExperimentConfig& c) {
  return config_to_json(c).dump(2) + "\n";
}

}  // namespace mixgan
