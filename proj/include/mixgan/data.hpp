#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mixgan/rng.hpp"
#include "mixgan/tensor.hpp"

namespace mixgan {

/// In-memory image collection. Every item is [C, resolution, resolution]
/// with values in [-1, 1].
struct Dataset {
  std::vector<Tensor> items;
  std::int64_t resolution = 0;
  std::int64_t channels = 0;
  /// Number of files that could not be decoded during a folder load.
  std::int64_t skipped_files = 0;

  std::int64_t size() const { return static_cast<std::int64_t>(items.size()); }

  const Tensor& item(std::int64_t i) const {
    check(i >= 0 && i < size(), "Dataset::item: index out of range");
    return items[static_cast<std::size_t>(i)];
  }
};

enum class SyntheticKind { gaussian_blobs, colored_shapes };

inline const char* synthetic_kind_name(SyntheticKind k) {
  return k == SyntheticKind::gaussian_blobs ? "gaussian-blobs" : "colored-shapes";
}

inline SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "gaussian-blobs") return SyntheticKind::gaussian_blobs;
  if (name == "colored-shapes") return SyntheticKind::colored_shapes;
  throw ConfigError("unknown synthetic dataset kind: " + name);
}

namespace detail {

inline const std::vector<std::array<real_t, 3>>& blob_palette() {
  static const std::vector<std::array<real_t, 3>> p = {
      {1.0, 0.25, 0.25}, {0.25, 1.0, 0.35}, {0.3, 0.45, 1.0},
      {1.0, 0.9, 0.2},   {0.95, 0.3, 0.95}, {0.25, 0.95, 0.95},
  };
  return p;
}

inline const std::vector<std::array<real_t, 3>>& shape_palette() {
  static const std::vector<std::array<real_t, 3>> p = {
      {0.9, 0.1, 0.1}, {0.1, 0.8, 0.15}, {0.15, 0.3, 0.95}, {0.95, 0.85, 0.1},
      {0.9, 0.2, 0.85}, {0.1, 0.85, 0.9}, {0.95, 0.55, 0.1}, {0.85, 0.85, 0.85},
  };
  return p;
}

/// One image of soft Gaussian bumps on a dark background.
/// Draw order: blob count, then per blob (cx, cy, sigma, palette index,
/// amplitude).
inline Tensor render_gaussian_blobs(std::int64_t resolution, Rng& rng) {
  const std::int64_t res = resolution;
  Tensor img = Tensor::full({3, res, res}, -1.0);
  const std::int64_t n_blobs = rng.uniform_int(1, 3);
  for (std::int64_t b = 0; b < n_blobs; ++b) {
    const real_t cx = rng.uniform(0.2, 0.8) * static_cast<real_t>(res);
    const real_t cy = rng.uniform(0.2, 0.8) * static_cast<real_t>(res);
    const real_t sigma = rng.uniform(0.08, 0.18) * static_cast<real_t>(res);
    const auto& color =
        blob_palette()[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(blob_palette().size()) - 1))];
    const real_t amp = rng.uniform(0.7, 1.0);
    for (std::int64_t y = 0; y < res; ++y) {
      for (std::int64_t x = 0; x < res; ++x) {
        const real_t dx = (static_cast<real_t>(x) + 0.5) - cx;
        const real_t dy = (static_cast<real_t>(y) + 0.5) - cy;
        const real_t g = amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        for (std::int64_t c = 0; c < 3; ++c) {
          real_t& v = img.at(c, y, x);
          v = std::min<real_t>(1.0, v + 2.0 * g * color[static_cast<std::size_t>(c)]);
        }
      }
    }
  }
  return img;
}

/// One filled shape (circle / square / upward triangle) on a dark gray
/// background. Draw order: background level, shape kind, palette index,
/// cx, cy, half-size.
inline Tensor render_colored_shape(std::int64_t resolution, Rng& rng) {
  const std::int64_t res = resolution;
  const real_t bg = rng.uniform(-1.0, -0.6);
  Tensor img = Tensor::full({3, res, res}, bg);
  const std::int64_t kind = rng.uniform_int(0, 2);  // 0 circle, 1 square, 2 triangle
  const auto& color =
      shape_palette()[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(shape_palette().size()) - 1))];
  const real_t cx = rng.uniform(0.3, 0.7) * static_cast<real_t>(res);
  const real_t cy = rng.uniform(0.3, 0.7) * static_cast<real_t>(res);
  const real_t half = rng.uniform(0.12, 0.28) * static_cast<real_t>(res);
  for (std::int64_t y = 0; y < res; ++y) {
    for (std::int64_t x = 0; x < res; ++x) {
      const real_t px = static_cast<real_t>(x) + 0.5;
      const real_t py = static_cast<real_t>(y) + 0.5;
      bool inside = false;
      if (kind == 0) {
        const real_t dx = px - cx, dy = py - cy;
        inside = dx * dx + dy * dy <= half * half;
      } else if (kind == 1) {
        inside = std::abs(px - cx) <= half && std::abs(py - cy) <= half;
      } else {
        // Isoceles triangle with apex at (cx, cy - half) and base at cy + half.
        const real_t t = (py - (cy - half)) / (2.0 * half);
        inside = t >= 0.0 && t <= 1.0 && std::abs(px - cx) <= t * half;
      }
      if (inside) {
        for (std::int64_t c = 0; c < 3; ++c) {
          img.at(c, y, x) = 2.0 * color[static_cast<std::size_t>(c)] - 1.0;
        }
      }
    }
  }
  return img;
}

}  // namespace detail

/// Deterministic synthetic dataset: item i depends only on (seed, i), so
/// the collection is reproducible regardless of generation order.
inline Dataset make_synthetic_dataset(SyntheticKind kind, std::int64_t n, std::int64_t resolution,
                                      std::uint64_t seed) {
  check_config(n > 0, "synthetic dataset size must be positive");
  check_config(resolution >= 4, "synthetic dataset resolution must be at least 4");
  Dataset ds;
  ds.resolution = resolution;
  ds.channels = 3;
  ds.items.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    Rng item_rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
    ds.items.push_back(kind == SyntheticKind::gaussian_blobs
                           ? detail::render_gaussian_blobs(resolution, item_rng)
                           : detail::render_colored_shape(resolution, item_rng));
  }
  return ds;
}

/// Loads every decodable image under `dir` (non-recursive), sorted by
/// filename: short-side bilinear resize to `resolution`, center crop,
/// then map [0, 255] -> [-1, 1]. Undecodable files are skipped with a
/// warning and counted in `skipped_files`.
inline Dataset load_image_folder(const std::string& dir, std::int64_t resolution) {
  namespace fs = std::filesystem;
  check_config(resolution >= 4, "resolution must be at least 4");
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DataError("not a directory: " + dir);

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  Dataset ds;
  ds.resolution = resolution;
  ds.channels = 3;
  for (const auto& path : files) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (img.empty()) {
      ++ds.skipped_files;
      std::cerr << "warning: skipping undecodable file " << path.string() << "\n";
      continue;
    }
    const std::int64_t h = img.rows, w = img.cols;
    const real_t scale = static_cast<real_t>(resolution) / static_cast<real_t>(std::min(h, w));
    const std::int64_t nh = std::max<std::int64_t>(resolution, std::llround(scale * static_cast<real_t>(h)));
    const std::int64_t nw = std::max<std::int64_t>(resolution, std::llround(scale * static_cast<real_t>(w)));
    cv::Mat resized;
    cv::resize(img, resized, cv::Size(static_cast<int>(nw), static_cast<int>(nh)), 0, 0,
               cv::INTER_LINEAR);
    const std::int64_t x0 = (nw - resolution) / 2;
    const std::int64_t y0 = (nh - resolution) / 2;
    cv::Mat crop = resized(cv::Rect(static_cast<int>(x0), static_cast<int>(y0),
                                    static_cast<int>(resolution), static_cast<int>(resolution)));
    Tensor t({3, resolution, resolution});
    for (std::int64_t y = 0; y < resolution; ++y) {
      for (std::int64_t x = 0; x < resolution; ++x) {
        const cv::Vec3b bgr = crop.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x));
        t.at(0, y, x) = static_cast<real_t>(bgr[2]) / 127.5 - 1.0;
        t.at(1, y, x) = static_cast<real_t>(bgr[1]) / 127.5 - 1.0;
        t.at(2, y, x) = static_cast<real_t>(bgr[0]) / 127.5 - 1.0;
      }
    }
    ds.items.push_back(std::move(t));
  }
  if (ds.items.empty()) {
    throw DataError("no decodable images in " + dir + " (" + std::to_string(ds.skipped_files) +
                    " file(s) skipped)");
  }
  return ds;
}

/// `synthetic://<kind>?n=<count>&seed=<seed>`, or a filesystem directory.
inline Dataset open_dataset(const std::string& uri, std::int64_t resolution) {
  const std::string scheme = "synthetic://";
  if (uri.rfind(scheme, 0) != 0) return load_image_folder(uri, resolution);

  std::string rest = uri.substr(scheme.size());
  std::string kind_name = rest;
  std::int64_t n = 1000;
  std::uint64_t seed = 0;
  const auto qpos = rest.find('?');
  if (qpos != std::string::npos) {
    kind_name = rest.substr(0, qpos);
    std::string query = rest.substr(qpos + 1);
    std::size_t start = 0;
    while (start <= query.size()) {
      const auto amp = query.find('&', start);
      const std::string pair =
          query.substr(start, amp == std::string::npos ? std::string::npos : amp - start);
      if (!pair.empty()) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos) throw ConfigError("malformed dataset query item: " + pair);
        const std::string key = pair.substr(0, eq);
        const std::string value = pair.substr(eq + 1);
        try {
          if (key == "n") {
            n = std::stoll(value);
          } else if (key == "seed") {
            seed = std::stoull(value);
          } else {
            throw ConfigError("unknown dataset query key: " + key);
          }
        } catch (const std::invalid_argument&) {
          throw ConfigError("non-numeric dataset query value: " + pair);
        } catch (const std::out_of_range&) {
          throw ConfigError("out-of-range dataset query value: " + pair);
        }
      }
      if (amp == std::string::npos) break;
      start = amp + 1;
    }
  }
  return make_synthetic_dataset(parse_synthetic_kind(kind_name), n, resolution, seed);
}

/// Serializable loader position. The permutation itself is a pure function
/// of (shuffle seed, epoch), so position alone pins the stream.
struct LoaderState {
  std::int64_t epoch = 0;
  std::int64_t cursor = 0;
};

/// Epoch-reshuffling batch iterator. Batches may span an epoch boundary;
/// each epoch's permutation is drawn from a seed derived from
/// (shuffle_seed, epoch).
class DataLoader {
 public:
  DataLoader(const Dataset& ds, std::int64_t batch_size, std::uint64_t shuffle_seed)
      : ds_(&ds), batch_size_(batch_size), shuffle_seed_(shuffle_seed) {
    check_config(batch_size > 0, "batch size must be positive");
    check(ds.size() > 0, "DataLoader: empty dataset");
    rebuild_permutation();
  }

  Tensor next_batch() {
    std::vector<Tensor> picks;
    picks.reserve(static_cast<std::size_t>(batch_size_));
    for (std::int64_t b = 0; b < batch_size_; ++b) {
      if (cursor_ == ds_->size()) {
        ++epoch_;
        cursor_ = 0;
        rebuild_permutation();
      }
      picks.push_back(ds_->item(perm_[static_cast<std::size_t>(cursor_++)]));
    }
    return stack(picks);
  }

  LoaderState state() const { return {epoch_, cursor_}; }

  void restore(const LoaderState& s) {
    // cursor == size() is a legal resting point: the epoch advances lazily
    // on the next draw.
    check(s.epoch >= 0 && s.cursor >= 0 && s.cursor <= ds_->size(),
          "DataLoader::restore: invalid state");
    epoch_ = s.epoch;
    cursor_ = s.cursor;
    rebuild_permutation();
  }

  std::int64_t epoch() const { return epoch_; }

 private:
  void rebuild_permutation() {
    perm_.resize(static_cast<std::size_t>(ds_->size()));
    std::iota(perm_.begin(), perm_.end(), std::int64_t{0});
    Rng r(Rng::derive(shuffle_seed_, static_cast<std::uint64_t>(epoch_)));
    r.shuffle(perm_);
  }

  const Dataset* ds_;
  std::int64_t batch_size_;
  std::uint64_t shuffle_seed_;
  std::int64_t epoch_ = 0;
  std::int64_t cursor_ = 0;
  std::vector<std::int64_t> perm_;
};

/// [batch, z_dim] of iid standard normal draws, row-major draw order.
inline Tensor sample_latent(std::int64_t batch, std::int64_t z_dim, Rng& rng) {
  check_config(batch > 0 && z_dim > 0, "sample_latent: batch and z_dim must be positive");
  Tensor z({batch, z_dim});
  for (std::int64_t i = 0; i < z.numel(); ++i) z[i] = rng.normal();
  return z;
}

}  // namespace mixgan
