#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mixgan/rng.hpp"
#include "mixgan/tensor.hpp"

namespace mixgan {

/// Maps a batch of images [N, C, H, W] to feature vectors [N, dim].
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual std::int64_t dim() const = 0;
  virtual Tensor extract(const Tensor& images) const = 0;
};

/// Fixed random linear projection of flattened pixels. Deterministic for a
/// given (input_dim, seed), so distances computed with it are comparable
/// across runs.
class ToyFeatureExtractor final : public FeatureExtractor {
 public:
  static constexpr std::int64_t kDim = 64;
  static constexpr std::uint64_t kDefaultSeed = 0x746f79;  // "toy"

  explicit ToyFeatureExtractor(std::int64_t input_dim, std::uint64_t seed = kDefaultSeed)
      : input_dim_(input_dim), proj_({input_dim, kDim}) {
    check_config(input_dim > 0, "feature extractor input dimension must be positive");
    Rng rng(Rng::derive(seed, 0));
    const real_t scale = 1.0 / std::sqrt(static_cast<real_t>(input_dim));
    for (std::int64_t i = 0; i < proj_.numel(); ++i) proj_[i] = scale * rng.normal();
  }

  std::string name() const override { return "toy"; }
  std::int64_t dim() const override { return kDim; }

  Tensor extract(const Tensor& images) const override {
    check_shape(images.dim() == 4, "extract: need [N, C, H, W] images");
    const std::int64_t n = images.size(0);
    const std::int64_t per = images.numel() / n;
    check_shape(per == input_dim_, "extract: image size does not match extractor input dimension");
    Tensor flat = images.reshaped({n, input_dim_});
    Tensor out({n, kDim});
    out.matrix() = flat.matrix() * proj_.matrix();
    return out;
  }

  const Tensor& projection() const { return proj_; }

 private:
  std::int64_t input_dim_;
  Tensor proj_;
};

/// Only the toy extractor ships with this library; asking for anything
/// else (e.g. a pretrained network) reports the fallback by name.
inline std::unique_ptr<FeatureExtractor> make_feature_extractor(const std::string& name,
                                                                std::int64_t input_dim) {
  if (name == "toy") return std::make_unique<ToyFeatureExtractor>(input_dim);
  throw CapabilityError("feature extractor '" + name +
                        "' is not available in this build; the built-in 'toy' extractor is the "
                        "supported fallback");
}

struct GaussianStats {
  Tensor mean;  // [d]
  Tensor cov;   // [d, d], unbiased
};

inline GaussianStats fit_gaussian(const Tensor& features) {
  check_shape(features.dim() == 2, "fit_gaussian: need [N, d] features");
  const std::int64_t n = features.size(0);
  const std::int64_t d = features.size(1);
  if (n < 2) throw DataError("fit_gaussian: need at least 2 samples, got " + std::to_string(n));
  GaussianStats out{Tensor({d}), Tensor({d, d})};
  auto x = features.matrix();
  Eigen::RowVectorXd mu = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mu;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<real_t>(n - 1);
  for (std::int64_t j = 0; j < d; ++j) out.mean[j] = mu(j);
  out.cov.matrix() = cov;
  return out;
}

namespace detail {

constexpr real_t kEigRoundOff = 1e-6;

/// Eigenvalues of a nominally-PSD symmetric matrix: tiny negatives from
/// round-off are clamped to zero, anything beyond -1e-6 is an error.
inline void clamp_psd_eigenvalues(Eigen::VectorXd& eig, const char* what) {
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    if (eig(i) < -kEigRoundOff) {
      throw NumericError(std::string(what) + ": matrix has eigenvalue " + std::to_string(eig(i)) +
                         ", beyond round-off tolerance");
    }
    if (eig(i) < 0) eig(i) = 0;
  }
}

inline Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& s, const char* what) {
  Eigen::MatrixXd sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigendecomposition failed");
  Eigen::VectorXd eig = es.eigenvalues();
  clamp_psd_eigenvalues(eig, what);
  return es.eigenvectors() * eig.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Squared Frechet distance between two Gaussians:
///   |mu_a - mu_b|^2 + tr(cov_a + cov_b - 2 (cov_a cov_b)^{1/2}).
/// The cross term is computed through the symmetric product
/// A cov_b A with A = cov_a^{1/2}, whose eigenvalues match those of
/// cov_a cov_b but stay real under round-off.
inline real_t frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  check_shape(a.mean.shape() == b.mean.shape() && a.cov.shape() == b.cov.shape(),
              "frechet_distance: dimension mismatch");
  const std::int64_t d = a.mean.numel();
  check_shape(a.cov.dim() == 2 && a.cov.size(0) == d && a.cov.size(1) == d,
              "frechet_distance: covariance shape mismatch");

  Eigen::Map<const Eigen::VectorXd> mu_a(a.mean.data(), d);
  Eigen::Map<const Eigen::VectorXd> mu_b(b.mean.data(), d);
  const real_t mean_term = (mu_a - mu_b).squaredNorm();

  Eigen::MatrixXd root_a = detail::symmetric_sqrt(a.cov.matrix(), "frechet_distance");
  Eigen::MatrixXd cross = root_a * b.cov.matrix() * root_a;
  cross = 0.5 * (cross + cross.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cross);
  if (es.info() != Eigen::Success) throw NumericError("frechet_distance: eigendecomposition failed");
  Eigen::VectorXd eig = es.eigenvalues();
  detail::clamp_psd_eigenvalues(eig, "frechet_distance");
  const real_t trace_cross = eig.cwiseSqrt().sum();

  real_t dist = mean_term + a.cov.matrix().trace() + b.cov.matrix().trace() - 2.0 * trace_cross;
  if (dist < -detail::kEigRoundOff) {
    throw NumericError("frechet_distance: negative distance " + std::to_string(dist) +
                       " beyond round-off tolerance");
  }
  return std::max<real_t>(dist, 0.0);
}

/// Frechet distance between feature distributions of two image sets.
/// `n_fake` fixes the fake-sample budget (first n_fake images are used);
/// fewer fakes than the budget is an error, so a smaller run must lower
/// n_fake explicitly.
inline real_t compute_fid(const FeatureExtractor& extractor, const Tensor& real_images,
                          const Tensor& fake_images, std::int64_t n_fake = 10000) {
  check_shape(real_images.dim() == 4 && fake_images.dim() == 4,
              "compute_fid: need [N, C, H, W] image batches");
  check_config(n_fake >= 2, "compute_fid: n_fake must be at least 2");
  if (fake_images.size(0) < n_fake) {
    throw DataError("compute_fid: have " + std::to_string(fake_images.size(0)) +
                    " fake images but n_fake=" + std::to_string(n_fake) +
                    "; pass a smaller n_fake to override");
  }
  Tensor fakes_used = fake_images;
  if (fake_images.size(0) > n_fake) {
    std::vector<Tensor> head;
    head.reserve(static_cast<std::size_t>(n_fake));
    for (std::int64_t i = 0; i < n_fake; ++i) head.push_back(batch_item(fake_images, i));
    fakes_used = stack(head);
  }
  GaussianStats real_stats = fit_gaussian(extractor.extract(real_images));
  GaussianStats fake_stats = fit_gaussian(extractor.extract(fakes_used));
  return frechet_distance(real_stats, fake_stats);
}

/// Histogram of discriminator scores over shared uniform bins. The bin
/// range pools every provided group, so the three histograms line up
/// column for column; constant scores collapse into one shared bin.
struct ScoreHistogram {
  real_t lo = 0.0;
  real_t hi = 0.0;
  std::int64_t bins = 0;
  std::vector<std::int64_t> real_counts;
  std::vector<std::int64_t> fake_counts;
  std::vector<std::int64_t> mixed_counts;  // all zero when no mixed scores given

  real_t bin_left(std::int64_t b) const {
    return lo + (hi - lo) * static_cast<real_t>(b) / static_cast<real_t>(bins);
  }
  real_t bin_right(std::int64_t b) const {
    return lo + (hi - lo) * static_cast<real_t>(b + 1) / static_cast<real_t>(bins);
  }
};

inline ScoreHistogram score_statistics(const std::vector<real_t>& real_scores,
                                       const std::vector<real_t>& fake_scores,
                                       const std::vector<real_t>& mixed_scores = {},
                                       std::int64_t bins = 50) {
  check_config(bins > 0, "score_statistics: bins must be positive");
  if (real_scores.empty() || fake_scores.empty()) {
    throw DataError("score_statistics: real and fake score lists must be non-empty");
  }
  real_t lo = real_scores[0], hi = real_scores[0];
  auto widen = [&](const std::vector<real_t>& v) {
    for (real_t s : v) {
      if (!std::isfinite(s)) throw NumericError("score_statistics: non-finite score");
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  };
  widen(real_scores);
  widen(fake_scores);
  widen(mixed_scores);
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }

  ScoreHistogram h;
  h.lo = lo;
  h.hi = hi;
  h.bins = bins;
  h.real_counts.assign(static_cast<std::size_t>(bins), 0);
  h.fake_counts.assign(static_cast<std::size_t>(bins), 0);
  h.mixed_counts.assign(static_cast<std::size_t>(bins), 0);
  auto fill = [&](const std::vector<real_t>& v, std::vector<std::int64_t>& counts) {
    for (real_t s : v) {
      auto b = static_cast<std::int64_t>(std::floor((s - lo) / (hi - lo) * static_cast<real_t>(bins)));
      b = std::clamp<std::int64_t>(b, 0, bins - 1);
      ++counts[static_cast<std::size_t>(b)];
    }
  };
  fill(real_scores, h.real_counts);
  fill(fake_scores, h.fake_counts);
  fill(mixed_scores, h.mixed_counts);
  return h;
}

}  // namespace mixgan
