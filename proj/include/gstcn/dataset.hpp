#pragma once

#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "gstcn/preprocess.hpp"
#include "gstcn/rng.hpp"
#include "gstcn/scene.hpp"

namespace gstcn {

struct DatasetSplit {
  std::vector<SceneSegment> train, val, test;
  std::uint64_t seed = 0;
};

// Deterministic shuffled split; bucket sizes by largest remainder so the
// proportions are within one segment of the requested ratios.
inline DatasetSplit split_dataset(const std::vector<SceneSegment>& segments,
                                  std::array<double, 3> ratios, std::uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  for (double r : ratios)
    if (r < 0.0) throw std::invalid_argument("split_dataset: negative ratio");
  if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("split_dataset: ratios must sum to 1");

  std::size_t n = segments.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0x5A117ull}));
  rng.shuffle(order);

  std::array<std::size_t, 3> counts;
  std::array<double, 3> frac;
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = ratios[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(exact);
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (frac[i] > frac[best]) best = i;
    ++counts[best];
    frac[best] = -1.0;
    ++assigned;
  }

  DatasetSplit split;
  split.seed = seed;
  std::size_t at = 0;
  for (std::size_t k = 0; k < counts[0]; ++k) split.train.push_back(segments[order[at++]]);
  for (std::size_t k = 0; k < counts[1]; ++k) split.val.push_back(segments[order[at++]]);
  for (std::size_t k = 0; k < counts[2]; ++k) split.test.push_back(segments[order[at++]]);
  return split;
}

enum class CorruptionCase { partial, total };

namespace detail {

// Deletes `n_drop` random interior past points of one vehicle and restores
// them with cubic Hermite interpolation, mimicking sensor dropouts that are
// patched before reaching the model.
inline void degrade_and_restore_track(SceneSegment& seg, std::size_t vehicle, std::size_t n_drop,
                                      Rng& rng) {
  int t_len = seg.past_len;
  if (t_len < 3 || n_drop == 0) return;
  std::vector<int> interior(static_cast<std::size_t>(t_len - 2));
  std::iota(interior.begin(), interior.end(), 1);
  rng.shuffle(interior);
  std::vector<bool> drop(static_cast<std::size_t>(t_len), false);
  for (std::size_t k = 0; k < n_drop && k < interior.size(); ++k)
    drop[static_cast<std::size_t>(interior[k])] = true;

  VehicleTrack survivors;
  survivors.vehicle_id = seg.vehicle_ids[vehicle];
  for (int t = 0; t < t_len; ++t) {
    if (drop[static_cast<std::size_t>(t)]) continue;
    TrajectoryPoint p;
    p.vehicle_id = survivors.vehicle_id;
    p.frame = t;
    p.x = seg.past_at(0, t, vehicle);
    p.y = seg.past_at(1, t, vehicle);
    p.lane = seg.lane_ids[vehicle];
    survivors.points.push_back(p);
  }
  VehicleTrack filled = interpolate_missing(survivors, 0, t_len - 1);
  for (int t = 0; t < t_len; ++t) {
    seg.past_at(0, t, vehicle) = filled.points[static_cast<std::size_t>(t)].x;
    seg.past_at(1, t, vehicle) = filled.points[static_cast<std::size_t>(t)].y;
  }
}

}  // namespace detail

// Case I: half the segments are selected at random; in each, every vehicle
// loses 20% of its past points, which are then reconstructed by interpolation.
inline std::vector<SceneSegment> corrupt_partial(const std::vector<SceneSegment>& segments,
                                                 std::uint64_t seed) {
  if (segments.empty()) throw std::invalid_argument("corrupt_partial: no segments");
  std::vector<SceneSegment> out = segments;
  std::vector<std::size_t> order(segments.size());
  std::iota(order.begin(), order.end(), 0);
  Rng pick(derive_seed(seed, {0xC0FF}));
  pick.shuffle(order);
  std::size_t affected = segments.size() / 2;
  for (std::size_t k = 0; k < affected; ++k) {
    std::size_t si = order[k];
    SceneSegment& seg = out[si];
    std::size_t n_drop = static_cast<std::size_t>(
        std::llround(0.2 * static_cast<double>(seg.past_len)));
    Rng rng(derive_seed(seed, {0xD40ull, si}));
    for (std::size_t v = 0; v < seg.n_vehicles; ++v)
      detail::degrade_and_restore_track(seg, v, n_drop, rng);
  }
  return out;
}

// Case II: one randomly chosen non-reference vehicle disappears entirely; the
// scene is rebuilt with N-1 vehicles.
inline SceneSegment corrupt_total(const SceneSegment& seg, Rng& rng) {
  if (seg.n_vehicles < 2) throw std::runtime_error("no removable vehicle");
  std::size_t victim = rng.index(seg.n_vehicles - 1);
  if (victim >= seg.reference_vehicle) ++victim;  // skip the reference

  SceneSegment out;
  out.past_len = seg.past_len;
  out.future_len = seg.future_len;
  out.n_vehicles = seg.n_vehicles - 1;
  out.origin_x = seg.origin_x;
  out.origin_y = seg.origin_y;
  out.past.assign(2 * static_cast<std::size_t>(seg.past_len) * out.n_vehicles, 0.0);
  out.future.assign(2 * static_cast<std::size_t>(seg.future_len) * out.n_vehicles, 0.0);
  std::size_t to = 0;
  for (std::size_t v = 0; v < seg.n_vehicles; ++v) {
    if (v == victim) continue;
    if (v == seg.reference_vehicle) out.reference_vehicle = to;
    out.vehicle_ids.push_back(seg.vehicle_ids[v]);
    out.lane_ids.push_back(seg.lane_ids[v]);
    for (int c = 0; c < 2; ++c) {
      for (int t = 0; t < seg.past_len; ++t) out.past_at(c, t, to) = seg.past_at(c, t, v);
      for (int t = 0; t < seg.future_len; ++t) out.future_at(c, t, to) = seg.future_at(c, t, v);
    }
    ++to;
  }
  return out;
}

inline std::vector<SceneSegment> corrupt_total(const std::vector<SceneSegment>& segments,
                                               std::uint64_t seed) {
  if (segments.empty()) throw std::invalid_argument("corrupt_total: no segments");
  std::vector<SceneSegment> out;
  out.reserve(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    Rng rng(derive_seed(seed, {0x7074, i}));
    out.push_back(corrupt_total(segments[i], rng));
  }
  return out;
}

inline std::vector<SceneSegment> corrupt_for_robustness(const std::vector<SceneSegment>& segments,
                                                        CorruptionCase c, std::uint64_t seed) {
  return c == CorruptionCase::partial ? corrupt_partial(segments, seed)
                                      : corrupt_total(segments, seed);
}

}  // namespace gstcn
