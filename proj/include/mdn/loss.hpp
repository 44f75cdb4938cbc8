#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdn/error.hpp"
#include "mdn/nn/layers.hpp"

namespace mdn {

enum class LossKind { BCE, DICE, BCE_PLUS_DICE };

constexpr std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::BCE: return "BCE";
    case LossKind::DICE: return "DICE";
    case LossKind::BCE_PLUS_DICE: return "BCE_PLUS_DICE";
  }
  return "BCE_PLUS_DICE";
}

inline LossKind loss_kind_from_string(std::string_view s) {
  if (s == "BCE") return LossKind::BCE;
  if (s == "DICE") return LossKind::DICE;
  if (s == "BCE_PLUS_DICE") return LossKind::BCE_PLUS_DICE;
  fail(Errc::ParseError, "unknown loss '" + std::string(s) + "'");
}

inline constexpr double kProbabilityClamp = 1e-7;
inline constexpr double kDiceSmoothing = 1.0;

inline bool uses_bce(LossKind k) { return k != LossKind::DICE; }
inline bool uses_dice(LossKind k) { return k != LossKind::BCE; }

// Loss of one probability map against its {0,1} target. Probabilities are
// clamped to [1e-7, 1 - 1e-7] inside the logarithms.
template <typename P, typename Q>
double map_loss(std::span<const P> pred, std::span<const Q> target, LossKind kind) {
  require(pred.size() == target.size() && !pred.empty(), Errc::ShapeMismatch,
          "prediction and target sizes differ");
  double bce = 0.0, inter = 0.0, sum_p = 0.0, sum_t = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = double(pred[i]);
    const double t = double(target[i]);
    const double pc = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
    bce -= t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc);
    inter += p * t;
    sum_p += p;
    sum_t += t;
  }
  double out = 0.0;
  if (uses_bce(kind)) out += bce / double(pred.size());
  if (uses_dice(kind))
    out += 1.0 - (2.0 * inter + kDiceSmoothing) / (sum_p + sum_t + kDiceSmoothing);
  return out;
}

// Batch loss: the mean of the per-map losses.
template <typename P, typename Q>
double loss(const std::vector<std::vector<P>>& pred, const std::vector<std::vector<Q>>& target,
            LossKind kind) {
  require(pred.size() == target.size() && !pred.empty(), Errc::ShapeMismatch,
          "batch sizes differ");
  double total = 0.0;
  for (std::size_t b = 0; b < pred.size(); ++b)
    total += map_loss<P, Q>(pred[b], target[b], kind);
  return total / double(pred.size());
}

// Loss from logits, evaluated without the probability clamp (BCE via softplus),
// with dL/dlogit * scale written to `dlogits`. Training uses this path.
template <typename T>
double logit_loss(std::span<const T> logits, std::span<const std::uint8_t> target, LossKind kind,
                  std::span<T> dlogits, double scale) {
  const std::size_t n = logits.size();
  require(target.size() == n && dlogits.size() == n && n > 0, Errc::ShapeMismatch,
          "logit and target sizes differ");
  std::vector<double> prob(n);
  double bce = 0.0, inter = 0.0, sum_p = 0.0, sum_t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = double(logits[i]);
    const double t = target[i];
    const double p = 1.0 / (1.0 + std::exp(-z));
    prob[i] = p;
    bce += nn::softplus(z) - t * z;
    inter += p * t;
    sum_p += p;
    sum_t += t;
  }
  double out = 0.0;
  const double S = sum_p + sum_t + kDiceSmoothing;
  const double numer = 2.0 * inter + kDiceSmoothing;
  if (uses_bce(kind)) out += bce / double(n);
  if (uses_dice(kind)) out += 1.0 - numer / S;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = prob[i];
    const double t = target[i];
    double g = 0.0;
    if (uses_bce(kind)) g += (p - t) / double(n);
    if (uses_dice(kind)) g += -(2.0 * t * S - numer) / (S * S) * p * (1.0 - p);
    dlogits[i] = T(g * scale);
  }
  return out;
}

// Momentum SGD: v <- momentum * v + g; w <- w - lr * v.
template <typename T>
void sgd_step(std::span<T> weights, std::span<const T> grads, std::span<T> velocity, double lr,
              double momentum) {
  require(weights.size() == grads.size() && weights.size() == velocity.size(),
          Errc::ShapeMismatch, "gradients do not conform to the parameters");
  const T m = T(momentum), step = T(lr);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    velocity[i] = m * velocity[i] + grads[i];
    weights[i] -= step * velocity[i];
  }
}

}  // namespace mdn
