#pragma once

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gstcn/cv_baseline.hpp"
#include "gstcn/dataset.hpp"
#include "gstcn/metrics.hpp"
#include "gstcn/model.hpp"
#include "gstcn/train.hpp"

namespace gstcn {

enum class RobustnessCase { none, partial, total };
enum class LocationFilter { all, middle, front, rear, reference_only };

inline const char* to_string(RobustnessCase c) {
  switch (c) {
    case RobustnessCase::none: return "none";
    case RobustnessCase::partial: return "partial";
    case RobustnessCase::total: return "total";
  }
  return "?";
}
inline RobustnessCase robustness_from_string(const std::string& s) {
  if (s == "none") return RobustnessCase::none;
  if (s == "partial") return RobustnessCase::partial;
  if (s == "total") return RobustnessCase::total;
  throw std::invalid_argument("unknown robustness case: " + s);
}
inline const char* to_string(LocationFilter f) {
  switch (f) {
    case LocationFilter::all: return "all";
    case LocationFilter::middle: return "middle";
    case LocationFilter::front: return "front";
    case LocationFilter::rear: return "rear";
    case LocationFilter::reference_only: return "reference_only";
  }
  return "?";
}
inline LocationFilter location_from_string(const std::string& s) {
  if (s == "all") return LocationFilter::all;
  if (s == "middle") return LocationFilter::middle;
  if (s == "front") return LocationFilter::front;
  if (s == "rear") return LocationFilter::rear;
  if (s == "reference_only" || s == "center-only") return LocationFilter::reference_only;
  throw std::invalid_argument("unknown location filter: " + s);
}

struct ExperimentSpec {
  ModelVariant variant = ModelVariant::full;
  AdjacencyScheme scheme = AdjacencyScheme::reciprocal;
  RobustnessCase robustness = RobustnessCase::none;
  LocationFilter location = LocationFilter::all;
  int best_of_k = 5;
};

namespace detail {

inline std::vector<std::size_t> filter_vehicles(const SceneSegment& seg, LocationFilter f) {
  switch (f) {
    case LocationFilter::reference_only: return {seg.reference_vehicle};
    case LocationFilter::all: {
      std::vector<std::size_t> all(seg.n_vehicles);
      std::iota(all.begin(), all.end(), 0);
      return all;
    }
    default: {
      auto strata = stratify_by_location(seg);
      if (f == LocationFilter::middle) return strata.middle;
      if (f == LocationFilter::front) return strata.front;
      return strata.rear;
    }
  }
}

}  // namespace detail

// Pooled best-of-k RMSE of a trained model over a scene list. Robustness
// corruption, when requested, is applied to the inputs only; errors are always
// measured against the clean ground truth of the surviving vehicles.
template <typename T>
HorizonRmse evaluate_model_rmse(const Parameters<T>& params, const ModelConfig& cfg,
                                const std::vector<SceneSegment>& scenes,
                                const ExperimentSpec& spec, std::uint64_t seed) {
  std::vector<SceneSegment> inputs = scenes;
  if (spec.robustness == RobustnessCase::partial)
    inputs = corrupt_partial(scenes, derive_seed(seed, {0x0B57ull}));
  else if (spec.robustness == RobustnessCase::total)
    inputs = corrupt_total(scenes, derive_seed(seed, {0x0B58ull}));

  ModelConfig eval_cfg = cfg;
  eval_cfg.scheme = spec.scheme;
  PooledRmse pool;
  for (std::size_t si = 0; si < inputs.size(); ++si) {
    const SceneSegment& seg = inputs[si];
    auto vehicles = detail::filter_vehicles(seg, spec.location);
    if (vehicles.empty()) continue;
    auto field = predict_field(params, eval_cfg, seg);
    auto sq = detail::best_of_k_sqerr(field, seg.future, vehicles, spec.best_of_k,
                                      derive_seed(seed, {0xE7A1ull, si}));
    pool.add(sq, vehicles.size());
  }
  return pool.result();
}

// Constant-velocity Kalman baseline under the same pooling protocol
// (deterministic, so no sampling is involved).
inline HorizonRmse evaluate_cv_rmse(const std::vector<SceneSegment>& scenes,
                                    LocationFilter location = LocationFilter::all,
                                    const CvKalmanConfig& cfg = {}) {
  PooledRmse pool;
  for (const auto& seg : scenes) {
    auto vehicles = detail::filter_vehicles(seg, location);
    if (vehicles.empty()) continue;
    auto pred = cv_predict_scene(seg, cfg);
    std::array<double, kHorizons> sq{};
    std::size_t n = seg.n_vehicles;
    std::size_t fn = static_cast<std::size_t>(seg.future_len) * n;
    for (int h = 1; h <= kHorizons; ++h) {
      std::size_t t = horizon_step(h, seg.future_len);
      for (std::size_t v : vehicles) {
        double dx = pred[t * n + v] - seg.future[t * n + v];
        double dy = pred[fn + t * n + v] - seg.future[fn + t * n + v];
        sq[static_cast<std::size_t>(h - 1)] += dx * dx + dy * dy;
      }
    }
    pool.add(sq, vehicles.size());
  }
  return pool.result();
}

struct ExperimentResult {
  ExperimentSpec spec;
  HorizonRmse rmse;
  std::uint64_t seed = 0;
  std::size_t test_scenes = 0;
  TrainReport report;
};

// Trains the specified variant/scheme on the split and evaluates on its test
// set under the spec's protocol.
template <typename T>
ExperimentResult run_experiment(const ExperimentSpec& spec, const DatasetSplit& split,
                                ModelConfig cfg, TrainConfig tcfg) {
  cfg.variant = spec.variant;
  cfg.scheme = spec.scheme;
  auto [params, report] = fit<T>(cfg, tcfg, split);
  ExperimentResult out;
  out.spec = spec;
  out.seed = tcfg.seed;
  out.test_scenes = split.test.size();
  out.report = std::move(report);
  out.rmse = evaluate_model_rmse(params, cfg, split.test, spec, tcfg.seed);
  return out;
}

inline void write_horizon_csv(std::ostream& out, const HorizonRmse& r) {
  out << "horizon_s,rmse_m\n";
  char buf[64];
  for (int h = 1; h <= kHorizons; ++h) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g\n", h, r.at[static_cast<std::size_t>(h - 1)]);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "average,%.10g\n", r.average);
  out << buf;
}

inline nlohmann::ordered_json experiment_spec_to_json(const ExperimentSpec& s) {
  nlohmann::ordered_json j;
  j["variant"] = to_string(s.variant);
  j["adjacency"] = to_string(s.scheme);
  j["robustness"] = to_string(s.robustness);
  j["location"] = to_string(s.location);
  j["best_of_k"] = s.best_of_k;
  return j;
}

inline ExperimentSpec experiment_spec_from_json(const nlohmann::json& j) {
  ExperimentSpec s;
  if (j.contains("variant")) s.variant = model_variant_from_string(j["variant"]);
  if (j.contains("adjacency")) s.scheme = adjacency_scheme_from_string(j["adjacency"]);
  if (j.contains("robustness")) s.robustness = robustness_from_string(j["robustness"]);
  if (j.contains("location")) s.location = location_from_string(j["location"]);
  s.best_of_k = j.value("best_of_k", 5);
  return s;
}

/// Wall-time statistics for single-pass all-vehicle prediction.
struct BenchResult {
  std::size_t parameter_count = 0;
  std::size_t scenes = 0;
  std::size_t vehicles = 0;
  double mean_ms_per_vehicle = 0.0;
  double median_ms_per_vehicle = 0.0;
  double p95_ms_per_vehicle = 0.0;
};

template <typename T>
BenchResult bench_inference(const Parameters<T>& params, const ModelConfig& cfg,
                            const std::vector<SceneSegment>& scenes, int repetitions = 5) {
  if (scenes.empty()) throw std::invalid_argument("bench_inference: no scenes");
  if (repetitions < 1) throw std::invalid_argument("bench_inference: repetitions must be >= 1");
  BenchResult r;
  r.parameter_count = count_parameters(params);
  r.scenes = scenes.size();
  std::vector<double> per_vehicle;
  for (int rep = 0; rep < repetitions; ++rep) {
    for (const auto& seg : scenes) {
      auto t0 = std::chrono::steady_clock::now();
      volatile double sink = predict_field(params, cfg, seg).mu_x[0];
      (void)sink;
      double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
      per_vehicle.push_back(ms / static_cast<double>(seg.n_vehicles));
      if (rep == 0) r.vehicles += seg.n_vehicles;
    }
  }
  std::sort(per_vehicle.begin(), per_vehicle.end());
  double sum = 0;
  for (double v : per_vehicle) sum += v;
  r.mean_ms_per_vehicle = sum / static_cast<double>(per_vehicle.size());
  r.median_ms_per_vehicle = per_vehicle[per_vehicle.size() / 2];
  r.p95_ms_per_vehicle = per_vehicle[std::min(per_vehicle.size() - 1,
                                              static_cast<std::size_t>(0.95 * per_vehicle.size()))];
  return r;
}

}  // namespace gstcn
