// Command-line front end: train runs experiments, eval-fid scores saved
// checkpoints, analyze renders score histograms / heatmaps / sample grids,
// and mask-debug dumps sampled mixing masks for visual inspection.
//
// Exit codes: 0 success, 2 configuration/usage, 3 data, 4 numeric,
// 5 missing capability, 1 internal error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "mixgan/analysis.hpp"
#include "mixgan/train.hpp"

namespace fs = std::filesystem;
using namespace mixgan;

namespace {

/// Directory searched for feature-extractor weights. Overridable so shared
/// machines can point every run at one download location.
std::string weights_cache_dir() {
  if (const char* env = std::getenv("MIXGAN_CACHE_DIR")) return env;
  if (const char* home = std::getenv("HOME"))
    return (fs::path(home) / ".cache" / "mixgan").string();
  return ".mixgan-cache";
}

fs::path directory_of(const std::string& file_path) {
  fs::path parent = fs::path(file_path).parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

/// Evaluation-mode discriminator scores, chunked to bound peak memory.
std::vector<real_t> score_images(Discriminator& d, const Tensor& images,
                                 std::int64_t chunk = 64) {
  NoGradGuard guard;
  std::vector<real_t> scores;
  const std::int64_t n = images.size(0);
  scores.reserve(static_cast<std::size_t>(n));
  for (std::int64_t start = 0; start < n; start += chunk) {
    const std::int64_t count = std::min(chunk, n - start);
    std::vector<Tensor> part;
    part.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) part.push_back(batch_item(images, start + i));
    Tensor out = d.forward(Var(stack(part), false), false).val();
    for (std::int64_t i = 0; i < count; ++i) scores.push_back(out[i]);
  }
  return scores;
}

Tensor stack_items(const Dataset& ds, std::int64_t count) {
  std::vector<Tensor> items;
  items.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) items.push_back(ds.item(i % ds.size()));
  return stack(items);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::optional<std::string> config_path;
  std::optional<std::string> preset;
  std::vector<std::string> sets;
  std::optional<std::string> dataset;
  std::optional<std::string> out_dir;
  std::optional<std::string> mix;
  std::optional<double> mix_ratio;
  std::optional<std::int64_t> iterations;
  std::optional<std::int64_t> batch_size;
  std::optional<std::int64_t> seed;
};

int cmd_train(const TrainArgs& a) {
  if (a.config_path && a.preset)
    throw ConfigError("pass either --config or --preset, not both");
  nlohmann::json base = config_to_json(ExperimentConfig{});
  if (a.preset)
    base = config_to_json(preset_config(*a.preset));
  else if (a.config_path)
    base = read_json_file(*a.config_path);

  // Convenience flags become ordinary overrides; explicit --set entries come
  // last so they win.
  std::vector<std::string> overrides;
  if (a.mix) overrides.push_back("mix.kind=" + *a.mix);
  if (a.mix_ratio) overrides.push_back("mix.ratio=" + std::to_string(*a.mix_ratio));
  if (a.dataset) overrides.push_back("data.dataset=" + *a.dataset);
  if (a.out_dir) overrides.push_back("data.out_dir=" + *a.out_dir);
  if (a.iterations) overrides.push_back("train.iterations=" + std::to_string(*a.iterations));
  if (a.batch_size) overrides.push_back("train.batch_size=" + std::to_string(*a.batch_size));
  if (a.seed) overrides.push_back("train.seed=" + std::to_string(*a.seed));
  overrides.insert(overrides.end(), a.sets.begin(), a.sets.end());

  ExperimentConfig cfg = resolve_config(base, overrides);
  RunRecord rec = run_training(cfg);

  std::cout << "run directory:   " << rec.run_dir << "\n"
            << "iterations:      " << rec.iterations_completed << "\n"
            << "metrics log:     " << rec.metrics_path << "\n";
  if (!rec.checkpoint_paths.empty())
    std::cout << "final snapshot:  " << rec.checkpoint_paths.back() << "\n";
  if (!rec.fid_history.empty()) {
    const auto& [it, fid] = rec.fid_history.back();
    std::cout << "last FID:        " << nlohmann::json(fid).dump() << " (iteration " << it << ")\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval-fid
// ---------------------------------------------------------------------------

struct EvalFidArgs {
  std::string checkpoint;
  std::optional<std::string> dataset;
  std::int64_t n_fake = 10000;
  std::string extractor = "toy";
  std::optional<std::int64_t> seed;
  std::optional<std::string> report;
};

int cmd_eval_fid(const EvalFidArgs& a) {
  TrainState s = load_self_describing_state(a.checkpoint);
  if (a.dataset) s.cfg.dataset = *a.dataset;
  if (a.seed) s.cfg.seed = *a.seed;
  s.cfg.fid_n_fake = a.n_fake;
  s.cfg.extractor = a.extractor;

  if (a.extractor != "toy") {
    fs::path weights = fs::path(weights_cache_dir()) / (a.extractor + ".weights");
    if (!fs::exists(weights))
      throw CapabilityError("no '" + a.extractor + "' weights at " + weights.string() +
                            " (set MIXGAN_CACHE_DIR to the download directory); the built-in "
                            "'toy' extractor is the supported fallback");
  }

  Dataset ds = open_dataset(s.cfg.dataset, s.cfg.model.resolution);
  Tensor reals = stack_items(ds, ds.size());
  auto extractor = make_feature_extractor(
      s.cfg.extractor, ds.channels * ds.resolution * ds.resolution);
  const real_t fid = evaluate_fid(s, *extractor, reals);

  const std::string report_path =
      a.report ? *a.report : (directory_of(a.checkpoint) / "fid_report.json").string();
  nlohmann::json report{{"checkpoint", a.checkpoint}, {"dataset", s.cfg.dataset},
                        {"extractor", a.extractor},   {"fid", fid},
                        {"iteration", s.iteration},   {"n_fake", a.n_fake},
                        {"seed", s.cfg.seed}};
  write_text_file(report_path, report.dump(2) + "\n");

  std::cout << "FID at iteration " << s.iteration << ": " << nlohmann::json(fid).dump() << "\n"
            << "report: " << report_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string checkpoint;
  std::string what;
  std::optional<std::string> dataset;
  std::optional<std::string> out_dir;
  std::uint64_t seed = 0;
  std::int64_t count = 256;
};

int cmd_analyze(const AnalyzeArgs& a) {
  TrainState s = load_self_describing_state(a.checkpoint);
  if (a.dataset) s.cfg.dataset = *a.dataset;
  const fs::path out = a.out_dir ? fs::path(*a.out_dir) : directory_of(a.checkpoint);
  fs::create_directories(out);

  Dataset ds = open_dataset(s.cfg.dataset, s.cfg.model.resolution);
  const std::int64_t res = s.cfg.model.resolution;
  Rng rng(Rng::derive(a.seed, 0x616e6c7aull));  // analysis sampling stream

  if (a.what == "histograms") {
    const std::int64_t n = std::min<std::int64_t>(ds.size(), a.count);
    if (n < 1) throw DataError("dataset is empty");
    Tensor reals = stack_items(ds, n);
    Tensor fakes = generate_images(*s.g, n, s.cfg.model.z_dim, rng);
    std::vector<real_t> real_scores = score_images(*s.d, reals);
    std::vector<real_t> fake_scores = score_images(*s.d, fakes);
    std::vector<real_t> mixed_scores;
    if (s.cfg.mix.kind != MixKind::none) {
      std::vector<Tensor> mixed;
      mixed.reserve(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) {
        Tensor mask = sample_mask_for(s.cfg.mix, res, res, res, rng);
        mixed.push_back(mix(batch_item(reals, i), batch_item(fakes, i), mask));
      }
      mixed_scores = score_images(*s.d, stack(mixed));
    }
    ScoreHistogram hist = score_statistics(real_scores, fake_scores, mixed_scores);
    const std::string csv = (out / "scores_hist.csv").string();
    const std::string png = (out / "scores_hist.png").string();
    render_score_distributions(hist, csv, png);
    std::cout << "wrote " << csv << "\n" << "wrote " << png << "\n";
    return 0;
  }

  if (a.what == "heatmaps") {
    if (ds.size() < 2) throw DataError("need at least 2 dataset images for heatmaps");
    Tensor fakes = generate_images(*s.g, 2, s.cfg.model.z_dim, rng);
    const std::vector<std::pair<std::string, Tensor>> samples{
        {"real_0", ds.item(0)},
        {"real_1", ds.item(1)},
        {"fake_0", batch_item(fakes, 0)},
        {"fake_1", batch_item(fakes, 1)},
    };
    for (const auto& [name, image] : samples) {
      const std::string src = (out / ("heatmap_source_" + name + ".png")).string();
      const std::string map = (out / ("heatmap_" + name + ".png")).string();
      save_image_png(src, image);
      save_heatmap_png(map, spatial_score_map(*s.d, image), res / 4);
      std::cout << "wrote " << map << "\n";
    }
    return 0;
  }

  if (a.what == "grid") {
    if (ds.size() < 1) throw DataError("dataset is empty");
    const std::int64_t cols = 8, real_rows = 4, fake_rows = 4;
    std::vector<Tensor> tiles;
    tiles.reserve(static_cast<std::size_t>((real_rows + fake_rows) * cols));
    for (std::int64_t i = 0; i < real_rows * cols; ++i) tiles.push_back(ds.item(i % ds.size()));
    Tensor fakes = generate_images(*s.g, fake_rows * cols, s.cfg.model.z_dim, rng);
    for (std::int64_t i = 0; i < fake_rows * cols; ++i) tiles.push_back(batch_item(fakes, i));
    Tensor grid = image_grid(stack(tiles), real_rows + fake_rows, cols);
    const std::string path = (out / "grid.png").string();
    save_image_png(path, grid);
    std::cout << "wrote " << path << " (top " << real_rows << " rows real, bottom " << fake_rows
              << " rows generated)\n";
    return 0;
  }

  throw ConfigError("unknown analyze target '" + a.what +
                    "' (expected histograms, heatmaps or grid)");
}

// ---------------------------------------------------------------------------
// mask-debug
// ---------------------------------------------------------------------------

struct MaskDebugArgs {
  std::string strategy = "all";
  std::string out_dir = "mask-debug";
  std::int64_t resolution = 64;
  std::int64_t count = 8;
  std::uint64_t seed = 0;
  std::int64_t upscale = 4;
};

int cmd_mask_debug(const MaskDebugArgs& a) {
  check_config(a.resolution >= 4, "resolution must be at least 4");
  check_config(a.count >= 1, "count must be at least 1");
  std::vector<MixKind> kinds;
  if (a.strategy == "all")
    kinds = {MixKind::mixup, MixKind::cutmix, MixKind::srmix};
  else
    kinds = {parse_mix_kind(a.strategy)};

  fs::create_directories(a.out_dir);
  for (MixKind kind : kinds) {
    MixStrategyConfig strategy;
    strategy.kind = kind;
    // One stream per family so adding strategies never shifts the others.
    Rng rng(Rng::derive(a.seed, 0x6d61736bull + static_cast<std::uint64_t>(kind)));
    for (std::int64_t i = 0; i < a.count; ++i) {
      Tensor mask = sample_mask_for(strategy, a.resolution, a.resolution, a.resolution, rng);
      const std::string path =
          (fs::path(a.out_dir) / (std::string(mix_kind_name(kind)) + "_" + std::to_string(i) + ".png"))
              .string();
      save_unit_png(path, mask, a.upscale);
    }
    std::cout << "wrote " << a.count << " " << mix_kind_name(kind) << " masks to " << a.out_dir
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  cv::setNumThreads(1);

  CLI::App app{"GAN training with mixed-sample discriminator batches: run experiments, "
               "score checkpoints with FID, and render diagnostic figures."};
  app.require_subcommand(1);
  app.footer("Environment:\n  MIXGAN_CACHE_DIR  directory searched for feature-extractor weights\n"
             "                    (default: $HOME/.cache/mixgan)");

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Run a training experiment");
  train_cmd->add_option("--config", train_args.config_path, "JSON config file to start from")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--preset", train_args.preset,
                        "built-in experiment preset (case1, case2, case3)");
  train_cmd->add_option("--set,-s", train_args.sets,
                        "dotted-key override, e.g. -s train.n_critic=2 -s mix.ratio=0.25");
  train_cmd->add_option("--mix", train_args.mix, "mixing strategy (none, mixup, cutmix, srmix)");
  train_cmd->add_option("--mix-ratio", train_args.mix_ratio, "fraction of fake slots made mixed");
  train_cmd->add_option("--dataset", train_args.dataset,
                        "dataset URI (folder path or synthetic://<kind>?n=..&seed=..)");
  train_cmd->add_option("--out", train_args.out_dir, "run output directory");
  train_cmd->add_option("--iterations", train_args.iterations, "generator updates to run");
  train_cmd->add_option("--batch-size", train_args.batch_size, "per-step batch size");
  train_cmd->add_option("--seed", train_args.seed, "master experiment seed");

  EvalFidArgs fid_args;
  CLI::App* fid_cmd = app.add_subcommand("eval-fid", "Compute FID for a saved checkpoint");
  fid_cmd->add_option("--checkpoint", fid_args.checkpoint, "checkpoint file to evaluate")
      ->required()
      ->check(CLI::ExistingFile);
  fid_cmd->add_option("--dataset", fid_args.dataset,
                      "real-image dataset URI (default: the one recorded in the checkpoint)");
  fid_cmd->add_option("--n-fake", fid_args.n_fake, "number of generated samples")
      ->capture_default_str();
  fid_cmd->add_option("--extractor", fid_args.extractor, "feature extractor name")
      ->capture_default_str();
  fid_cmd->add_option("--seed", fid_args.seed,
                      "evaluation sampling seed (default: the checkpoint's)");
  fid_cmd->add_option("--report", fid_args.report,
                      "report file path (default: fid_report.json beside the checkpoint)");

  AnalyzeArgs analyze_args;
  CLI::App* analyze_cmd = app.add_subcommand("analyze", "Render diagnostic artifacts");
  analyze_cmd->add_option("--checkpoint", analyze_args.checkpoint, "checkpoint file to analyze")
      ->required()
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--what", analyze_args.what, "artifact family")
      ->required()
      ->check(CLI::IsMember({"histograms", "heatmaps", "grid"}));
  analyze_cmd->add_option("--dataset", analyze_args.dataset,
                          "real-image dataset URI (default: the one recorded in the checkpoint)");
  analyze_cmd->add_option("--out", analyze_args.out_dir,
                          "output directory (default: the checkpoint's directory)");
  analyze_cmd->add_option("--seed", analyze_args.seed, "sampling seed")->capture_default_str();
  analyze_cmd->add_option("--count", analyze_args.count, "samples per histogram group")
      ->capture_default_str();

  MaskDebugArgs mask_args;
  CLI::App* mask_cmd = app.add_subcommand("mask-debug", "Write sampled mixing masks as PNGs");
  mask_cmd->add_option("--strategy", mask_args.strategy,
                       "mask family (mixup, cutmix, srmix or all)")
      ->check(CLI::IsMember({"mixup", "cutmix", "srmix", "all"}))
      ->capture_default_str();
  mask_cmd->add_option("--out", mask_args.out_dir, "output directory")->capture_default_str();
  mask_cmd->add_option("--resolution", mask_args.resolution, "mask side length")
      ->capture_default_str();
  mask_cmd->add_option("--count", mask_args.count, "masks per family")->capture_default_str();
  mask_cmd->add_option("--seed", mask_args.seed, "sampling seed")->capture_default_str();
  mask_cmd->add_option("--upscale", mask_args.upscale, "nearest-neighbor display upscale")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // malformed usage is a configuration error
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (fid_cmd->parsed()) return cmd_eval_fid(fid_args);
    if (analyze_cmd->parsed()) return cmd_analyze(analyze_args);
    if (mask_cmd->parsed()) return cmd_mask_debug(mask_args);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const CapabilityError& e) {
    std::cerr << "capability error: " << e.what() << "\n";
    return 5;
  } catch (const Error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
