#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mixgan/metrics.hpp"
#include "mixgan/tensor.hpp"

namespace mixgan {

/// Min-max normalizes a per-location score map to [0, 1]: the lowest score
/// renders darkest. A constant map has no contrast to show and becomes a
/// uniform 0.5. Normalization is per map, so each heatmap uses its own full
/// dynamic range (values are only comparable within one map).
inline Tensor heatmap_intensity(const Tensor& score_map) {
  check_shape(score_map.dim() == 2, "heatmap_intensity: need a 2-D score map");
  if (!score_map.all_finite()) throw NumericError("heatmap_intensity: non-finite score map");
  const real_t lo = min_value(score_map);
  const real_t hi = max_value(score_map);
  if (hi - lo < 1e-12) return Tensor::full(score_map.shape(), 0.5);
  Tensor out(score_map.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = (score_map[i] - lo) / (hi - lo);
  return out;
}

namespace detail {

inline std::uint8_t display_byte(real_t v) {
  // [-1, 1] -> [0, 255]
  return static_cast<std::uint8_t>(std::clamp<long>(std::lround((v + 1.0) * 127.5), 0, 255));
}

inline std::uint8_t unit_byte(real_t v) {
  // [0, 1] -> [0, 255]
  return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v * 255.0), 0, 255));
}

}  // namespace detail

/// [C, H, W] image in [-1, 1] (C = 1 or 3) to an 8-bit BGR matrix.
inline cv::Mat image_to_bgr8(const Tensor& img) {
  check_shape(img.dim() == 3 && (img.size(0) == 1 || img.size(0) == 3),
              "image_to_bgr8: need [C, H, W] with 1 or 3 channels");
  const std::int64_t c = img.size(0), h = img.size(1), w = img.size(2);
  cv::Mat m(static_cast<int>(h), static_cast<int>(w), CV_8UC3);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const std::uint8_t r = detail::display_byte(img.at(0, y, x));
      const std::uint8_t g = detail::display_byte(img.at(c == 3 ? 1 : 0, y, x));
      const std::uint8_t b = detail::display_byte(img.at(c == 3 ? 2 : 0, y, x));
      m.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x)) = cv::Vec3b(b, g, r);
    }
  }
  return m;
}

inline void save_image_png(const std::string& path, const Tensor& img) {
  if (!cv::imwrite(path, image_to_bgr8(img))) throw DataError("cannot write image: " + path);
}

/// Reads an image back as [3, H, W] in [-1, 1] without resizing.
inline Tensor load_image_png(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("cannot read image: " + path);
  Tensor t({3, m.rows, m.cols});
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      const cv::Vec3b bgr = m.at<cv::Vec3b>(y, x);
      t.at(0, y, x) = static_cast<real_t>(bgr[2]) / 127.5 - 1.0;
      t.at(1, y, x) = static_cast<real_t>(bgr[1]) / 127.5 - 1.0;
      t.at(2, y, x) = static_cast<real_t>(bgr[0]) / 127.5 - 1.0;
    }
  }
  return t;
}

/// Grayscale PNG of a 2-D map already in [0,1] (values clamped); `upscale`
/// repeats pixels (nearest) so small maps stay visible.
inline void save_unit_png(const std::string& path, const Tensor& intensity,
                          std::int64_t upscale = 1) {
  check_config(upscale >= 1, "heatmap upscale must be at least 1");
  check_shape(intensity.dim() == 2, "save_unit_png: need a 2-D map");
  const std::int64_t h = intensity.size(0), w = intensity.size(1);
  cv::Mat m(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      m.at<std::uint8_t>(static_cast<int>(y), static_cast<int>(x)) =
          detail::unit_byte(intensity.at(y, x));
    }
  }
  if (upscale > 1) {
    cv::Mat big;
    cv::resize(m, big, cv::Size(static_cast<int>(w * upscale), static_cast<int>(h * upscale)), 0, 0,
               cv::INTER_NEAREST);
    m = big;
  }
  if (!cv::imwrite(path, m)) throw DataError("cannot write heatmap: " + path);
}

/// Grayscale heatmap PNG: min-max normalizes the raw score map first.
inline void save_heatmap_png(const std::string& path, const Tensor& score_map,
                             std::int64_t upscale = 1) {
  save_unit_png(path, heatmap_intensity(score_map), upscale);
}

/// Tiles [N, C, H, W] into [C, rows*H, cols*W], row-major (image k lands at
/// row k/cols, column k%cols), no padding between tiles.
inline Tensor image_grid(const Tensor& images, std::int64_t rows, std::int64_t cols) {
  check_shape(images.dim() == 4, "image_grid: need [N, C, H, W] images");
  check_config(rows >= 1 && cols >= 1, "image_grid: rows and cols must be positive");
  const std::int64_t n = images.size(0);
  check_config(n == rows * cols, "image_grid: " + std::to_string(n) + " images cannot fill a " +
                                     std::to_string(rows) + "x" + std::to_string(cols) + " grid");
  const std::int64_t c = images.size(1), h = images.size(2), w = images.size(3);
  Tensor out({c, rows * h, cols * w});
  for (std::int64_t k = 0; k < n; ++k) {
    const std::int64_t gy = (k / cols) * h;
    const std::int64_t gx = (k % cols) * w;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
          out.at(ch, gy + y, gx + x) = images.at(k, ch, y, x);
        }
      }
    }
  }
  return out;
}

namespace detail {

inline std::string format_real(real_t v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Stable CSV form of a shared-bin score histogram (one row per bin).
inline std::string histogram_csv(const ScoreHistogram& h) {
  std::string out = "bin_left,bin_right,real,fake,mixed\n";
  for (std::int64_t b = 0; b < h.bins; ++b) {
    out += detail::format_real(h.bin_left(b)) + "," + detail::format_real(h.bin_right(b)) + "," +
           std::to_string(h.real_counts[static_cast<std::size_t>(b)]) + "," +
           std::to_string(h.fake_counts[static_cast<std::size_t>(b)]) + "," +
           std::to_string(h.mixed_counts[static_cast<std::size_t>(b)]) + "\n";
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("failed writing file: " + path);
}

/// CSV plus a line plot of the score histograms. Real scores draw in blue,
/// fake in orange, mixed in green; an all-empty mixed group is left off
/// the plot entirely.
inline void render_score_distributions(const ScoreHistogram& h, const std::string& csv_path,
                                       const std::string& plot_path) {
  write_text_file(csv_path, histogram_csv(h));

  const int width = 640, height = 480;
  const int ml = 70, mr = 20, mt = 20, mb = 50;
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));

  std::int64_t peak = 1;
  for (std::int64_t b = 0; b < h.bins; ++b) {
    peak = std::max({peak, h.real_counts[static_cast<std::size_t>(b)],
                     h.fake_counts[static_cast<std::size_t>(b)],
                     h.mixed_counts[static_cast<std::size_t>(b)]});
  }

  auto px = [&](std::int64_t bin) {
    const real_t center = (static_cast<real_t>(bin) + 0.5) / static_cast<real_t>(h.bins);
    return ml + static_cast<int>(std::lround(center * (width - ml - mr)));
  };
  auto py = [&](std::int64_t count) {
    const real_t frac = static_cast<real_t>(count) / static_cast<real_t>(peak);
    return height - mb - static_cast<int>(std::lround(frac * (height - mt - mb)));
  };

  const cv::Scalar axis(80, 80, 80);
  cv::line(canvas, {ml, mt}, {ml, height - mb}, axis, 1);
  cv::line(canvas, {ml, height - mb}, {width - mr, height - mb}, axis, 1);
  cv::putText(canvas, detail::format_real(h.lo), {ml - 10, height - mb + 20},
              cv::FONT_HERSHEY_SIMPLEX, 0.35, axis, 1);
  cv::putText(canvas, detail::format_real(h.hi), {width - mr - 60, height - mb + 20},
              cv::FONT_HERSHEY_SIMPLEX, 0.35, axis, 1);
  cv::putText(canvas, std::to_string(peak), {5, mt + 10}, cv::FONT_HERSHEY_SIMPLEX, 0.35, axis, 1);

  struct Series {
    const std::vector<std::int64_t>* counts;
    cv::Scalar color;  // BGR
    const char* label;
  };
  std::int64_t mixed_total = 0;
  for (auto cnt : h.mixed_counts) mixed_total += cnt;
  std::vector<Series> series = {
      {&h.real_counts, cv::Scalar(180, 119, 31), "real"},
      {&h.fake_counts, cv::Scalar(14, 127, 255), "fake"},
  };
  if (mixed_total > 0) series.push_back({&h.mixed_counts, cv::Scalar(44, 160, 44), "mixed"});

  int legend_y = mt + 15;
  for (const auto& s : series) {
    for (std::int64_t b = 0; b + 1 < h.bins; ++b) {
      cv::line(canvas, {px(b), py((*s.counts)[static_cast<std::size_t>(b)])},
               {px(b + 1), py((*s.counts)[static_cast<std::size_t>(b + 1)])}, s.color, 2);
    }
    cv::line(canvas, {width - mr - 90, legend_y}, {width - mr - 70, legend_y}, s.color, 2);
    cv::putText(canvas, s.label, {width - mr - 62, legend_y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                axis, 1);
    legend_y += 18;
  }

  if (!cv::imwrite(plot_path, canvas)) throw DataError("cannot write plot: " + plot_path);
}

}  // namespace mixgan
