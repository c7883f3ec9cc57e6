#pragma once

#include "mixgan/ops.hpp"

namespace mixgan {

// Saturated adversarial objectives. The discriminator sees mixed samples only
// through the fake-slot score vector; there is no separate mixed-sample term.
// Reductions are batch means, so the learning rate is batch-size independent.

enum class LossKind { wasserstein, hinge };

inline const char* loss_kind_name(LossKind k) {
  return k == LossKind::wasserstein ? "wasserstein" : "hinge";
}

namespace detail {
inline void check_scores(const Var& scores, const char* what) {
  check_shape(scores.shape().size() == 1 && scores.numel() >= 1,
              std::string(what) + ": expected a nonempty score vector");
  if (!scores.val().all_finite())
    throw NumericError(std::string(what) + ": non-finite score encountered");
}
}  // namespace detail

/// Critic objective. wasserstein: mean(fake) - mean(real). hinge:
/// mean(max(0, 1 - real)) + mean(max(0, 1 + fake)).
inline Var discriminator_loss(const Var& real_scores, const Var& fake_scores, LossKind kind) {
  detail::check_scores(real_scores, "d_loss(real)");
  detail::check_scores(fake_scores, "d_loss(fake)");
  if (kind == LossKind::wasserstein)
    return sub(mean_all(fake_scores), mean_all(real_scores));
  Var real_term = mean_all(relu(rsub_scalar(1.0, real_scores)));   // max(0, 1 - s)
  Var fake_term = mean_all(relu(add_scalar(fake_scores, 1.0)));    // max(0, 1 + s)
  return add(real_term, fake_term);
}

/// Saturated generator objective: -mean(fake) for both loss kinds.
inline Var generator_loss(const Var& fake_scores, LossKind kind) {
  (void)kind;
  detail::check_scores(fake_scores, "g_loss");
  return neg(mean_all(fake_scores));
}

}  // namespace mixgan
