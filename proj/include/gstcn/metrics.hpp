#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "gstcn/model.hpp"
#include "gstcn/rng.hpp"
#include "gstcn/scene.hpp"

namespace gstcn {

inline constexpr int kEvalRateHz = 5;
inline constexpr int kHorizons = 5;  // 1..5 s

/// RMSE at the 1..5 s horizons plus their mean, meters.
struct HorizonRmse {
  std::array<double, kHorizons> at{};  // index h-1 for h seconds
  double average = 0.0;

  void finish() {
    average = 0.0;
    for (double v : at) average += v;
    average /= static_cast<double>(kHorizons);
  }
};

// Step index of a horizon in seconds at the evaluation rate (1 s -> step 4).
inline std::size_t horizon_step(double seconds, int future_len, int rate_hz = kEvalRateHz) {
  double exact = seconds * rate_hz;
  long step = std::lround(exact) - 1;
  if (step < 0 || step >= future_len)
    throw std::invalid_argument("horizon " + std::to_string(seconds) +
                                " s is outside the prediction window");
  return static_cast<std::size_t>(step);
}

// Single-scene RMSE at one horizon; preds/truth are (2,F,N) row-major.
inline double rmse_at(const std::vector<double>& preds, const std::vector<double>& truth,
                      std::size_t n, int future_len, double seconds, int rate_hz = kEvalRateHz) {
  if (n == 0) throw std::invalid_argument("rmse_at: no vehicles");
  if (preds.size() != truth.size() || preds.size() != 2 * static_cast<std::size_t>(future_len) * n)
    throw std::invalid_argument("rmse_at: size mismatch");
  std::size_t t = horizon_step(seconds, future_len, rate_hz);
  std::size_t fn = static_cast<std::size_t>(future_len) * n;
  double sq = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    double dx = preds[t * n + v] - truth[t * n + v];
    double dy = preds[fn + t * n + v] - truth[fn + t * n + v];
    sq += dx * dx + dy * dy;
  }
  return std::sqrt(sq / static_cast<double>(n));
}

namespace detail {

// Squared-error sums at every horizon for a vehicle subset, minimized over k
// seeded draws per horizon independently.
inline std::array<double, kHorizons> best_of_k_sqerr(const BiGaussianField& field,
                                                     const std::vector<double>& truth,
                                                     const std::vector<std::size_t>& vehicles,
                                                     int k, std::uint64_t seed) {
  std::size_t n = field.n_vehicles;
  std::size_t fn = static_cast<std::size_t>(field.future_len) * n;
  std::array<double, kHorizons> best;
  best.fill(std::numeric_limits<double>::infinity());
  for (int j = 0; j < k; ++j) {
    auto draw = sample_trajectory(field, derive_seed(seed, {0xBE57ull, static_cast<std::uint64_t>(j)}));
    for (int h = 1; h <= kHorizons; ++h) {
      std::size_t t = horizon_step(h, field.future_len);
      double sq = 0.0;
      for (std::size_t v : vehicles) {
        double dx = draw[t * n + v] - truth[t * n + v];
        double dy = draw[fn + t * n + v] - truth[fn + t * n + v];
        sq += dx * dx + dy * dy;
      }
      best[h - 1] = std::min(best[h - 1], sq);
    }
  }
  return best;
}

}  // namespace detail

// Lowest per-horizon RMSE over k trajectories sampled from the field
// (deterministic per seed); single scene, all vehicles.
inline HorizonRmse best_of_k_rmse(const BiGaussianField& field, const std::vector<double>& truth,
                                  int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("best_of_k_rmse: k must be >= 1");
  std::vector<std::size_t> all(field.n_vehicles);
  std::iota(all.begin(), all.end(), 0);
  auto sq = detail::best_of_k_sqerr(field, truth, all, k, seed);
  HorizonRmse r;
  for (int h = 0; h < kHorizons; ++h)
    r.at[static_cast<std::size_t>(h)] =
        std::sqrt(sq[static_cast<std::size_t>(h)] / static_cast<double>(field.n_vehicles));
  r.finish();
  return r;
}

/// Vehicle index sets by longitudinal position relative to the reference
/// vehicle at the last past frame: front beyond +L/3, rear beyond -L/3,
/// middle in between (L = 100 m).
struct LocationStrata {
  std::vector<std::size_t> middle, front, rear;
};

inline LocationStrata stratify_by_location(const SceneSegment& seg, double range = 100.0) {
  LocationStrata out;
  int last = seg.past_len - 1;
  double ref_y = seg.past_at(1, last, seg.reference_vehicle);
  double bound = range / 3.0;
  for (std::size_t v = 0; v < seg.n_vehicles; ++v) {
    double rel = seg.past_at(1, last, v) - ref_y;
    if (rel > bound)
      out.front.push_back(v);
    else if (rel < -bound)
      out.rear.push_back(v);
    else
      out.middle.push_back(v);
  }
  return out;
}

// Accumulates squared errors across scenes (pooled before the root).
struct PooledRmse {
  std::array<double, kHorizons> sqsum{};
  std::array<double, kHorizons> count{};

  void add(const std::array<double, kHorizons>& sq, std::size_t vehicles) {
    for (int h = 0; h < kHorizons; ++h) {
      sqsum[static_cast<std::size_t>(h)] += sq[static_cast<std::size_t>(h)];
      count[static_cast<std::size_t>(h)] += static_cast<double>(vehicles);
    }
  }
  HorizonRmse result() const {
    HorizonRmse r;
    for (int h = 0; h < kHorizons; ++h) {
      std::size_t i = static_cast<std::size_t>(h);
      r.at[i] = count[i] > 0 ? std::sqrt(sqsum[i] / count[i]) : 0.0;
    }
    r.finish();
    return r;
  }
};

}  // namespace gstcn
