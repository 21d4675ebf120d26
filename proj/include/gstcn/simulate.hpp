#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gstcn/rng.hpp"
#include "gstcn/trajectory.hpp"

namespace gstcn {

enum class Regime { mild, moderate, heavy };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::mild: return "mild";
    case Regime::moderate: return "moderate";
    case Regime::heavy: return "heavy";
  }
  return "?";
}
inline Regime regime_from_string(const std::string& s) {
  if (s == "mild") return Regime::mild;
  if (s == "moderate") return Regime::moderate;
  if (s == "heavy") return Regime::heavy;
  throw std::invalid_argument("unknown regime: " + s);
}

struct ScenarioConfig {
  int lanes = 3;
  double lane_width = 3.6;
  int vehicles = 6;
  double duration_s = 60.0;
  Regime regime = Regime::moderate;
  double p_keep = 0.7;
  double p_lane_change = 0.2;
  double p_brake = 0.1;
  double noise_std = 0.05;  // observation noise, meters
  std::uint64_t seed = 0;
  double rate_hz = 10.0;
  double max_speed = 40.0;
  double min_gap = 5.0;      // hard bumper spacing floor
  double headway_s = 1.2;    // desired time headway
  double init_window_m = 0;  // 0: sized from the regime spacing
  double speed_lo = 0;       // >0 overrides the regime speed band
  double speed_hi = 0;
};

namespace detail {

struct RegimeParams {
  double v_lo, v_hi, spacing;
};

inline RegimeParams regime_params(Regime r) {
  switch (r) {
    case Regime::mild: return {22.0, 30.0, 80.0};
    case Regime::moderate: return {9.0, 16.0, 35.0};
    case Regime::heavy: return {3.0, 7.0, 14.0};
  }
  return {9.0, 16.0, 35.0};
}

struct SimVehicle {
  long id;
  int lane;        // current lane id
  double x, y, v;  // lateral, longitudinal, longitudinal speed
  double v_des;
  // maneuver state
  enum class M { none, lane_change, brake } m = M::none;
  double m_t0 = 0, m_dur = 0;
  double lc_from = 0, lc_to = 0;
  int lc_target_lane = 0;
  double saved_v_des = 0;
  double blocked_time = 0;  // seconds spent stuck behind a slower leader
};

}  // namespace detail

// Kinematic multi-lane traffic: speed-matching car following with a minimum
// gap barrier, smooth polynomial lane changes, random braking episodes, and
// Gaussian observation noise. Deterministic per seed.
inline std::vector<VehicleTrack> generate_scenario(const ScenarioConfig& cfg) {
  if (cfg.lanes < 1 || cfg.vehicles < 1 || cfg.duration_s <= 0)
    throw std::invalid_argument("generate_scenario: invalid counts");
  double mix = cfg.p_keep + cfg.p_lane_change + cfg.p_brake;
  if (std::fabs(mix - 1.0) > 1e-9)
    throw std::invalid_argument("generate_scenario: maneuver mix must sum to 1");

  Rng rng(derive_seed(cfg.seed, {0x5CE7ull}));
  auto rp = detail::regime_params(cfg.regime);
  if (cfg.speed_lo > 0 && cfg.speed_hi >= cfg.speed_lo) {
    rp.v_lo = cfg.speed_lo;
    rp.v_hi = cfg.speed_hi;
  }
  double lane_center_0 = cfg.lane_width / 2.0;

  // initial placement, lane round-robin, stacked longitudinally
  int per_lane = (cfg.vehicles + cfg.lanes - 1) / cfg.lanes;
  double window = cfg.init_window_m > 0 ? cfg.init_window_m
                                        : rp.spacing * static_cast<double>(per_lane);
  std::vector<detail::SimVehicle> cars;
  std::vector<int> lane_count(static_cast<std::size_t>(cfg.lanes), 0);
  for (int i = 0; i < cfg.vehicles; ++i) {
    detail::SimVehicle c;
    c.id = i + 1;
    c.lane = i % cfg.lanes + 1;
    int slot = lane_count[static_cast<std::size_t>(c.lane - 1)]++;
    double spacing = per_lane > 0 ? window / static_cast<double>(per_lane) : window;
    c.y = spacing * static_cast<double>(slot) + rng.uniform(0.0, 0.25 * spacing);
    c.x = lane_center_0 + (c.lane - 1) * cfg.lane_width;
    c.v = rng.uniform(rp.v_lo, rp.v_hi);
    c.v_des = c.v;
    cars.push_back(c);
  }
  // overlap check within each lane
  for (int lane = 1; lane <= cfg.lanes; ++lane) {
    std::vector<double> ys;
    for (const auto& c : cars)
      if (c.lane == lane) ys.push_back(c.y);
    std::sort(ys.begin(), ys.end());
    for (std::size_t i = 1; i < ys.size(); ++i)
      if (ys[i] - ys[i - 1] < cfg.min_gap)
        throw std::runtime_error("infeasible density: vehicles overlap at initialization");
  }

  const double dt = 1.0 / cfg.rate_hz;
  const long frames = static_cast<long>(std::llround(cfg.duration_s * cfg.rate_hz));
  const double event_rate = 1.0 / 8.0;  // maneuver draws per second when idle

  std::vector<VehicleTrack> tracks(cars.size());
  for (std::size_t i = 0; i < cars.size(); ++i) tracks[i].vehicle_id = cars[i].id;

  auto leader_of = [&](std::size_t i) -> int {
    double best = 1e18;
    int found = -1;
    for (std::size_t j = 0; j < cars.size(); ++j) {
      if (j == i || cars[j].lane != cars[i].lane) continue;
      double gap = cars[j].y - cars[i].y;
      if (gap > 0 && gap < best) {
        best = gap;
        found = static_cast<int>(j);
      }
    }
    return found;
  };
  auto lane_center = [&](int lane) { return lane_center_0 + (lane - 1) * cfg.lane_width; };
  auto gap_safe = [&](std::size_t i, int lane) {
    for (std::size_t j = 0; j < cars.size(); ++j) {
      if (j == i || cars[j].lane != lane) continue;
      double d = cars[j].y - cars[i].y;
      double need = d >= 0 ? cfg.min_gap + cfg.headway_s * cars[i].v
                           : cfg.min_gap + cfg.headway_s * cars[j].v;
      if (std::fabs(d) < need) return false;
    }
    return true;
  };

  for (long f = 0; f < frames; ++f) {
    double now = static_cast<double>(f) * dt;
    // record first (frame 0 is the initial state)
    for (std::size_t i = 0; i < cars.size(); ++i) {
      TrajectoryPoint p;
      p.vehicle_id = cars[i].id;
      p.frame = f;
      p.x = cars[i].x + (cfg.noise_std > 0 ? rng.normal(0.0, cfg.noise_std) : 0.0);
      p.y = cars[i].y + (cfg.noise_std > 0 ? rng.normal(0.0, cfg.noise_std) : 0.0);
      p.lane = cars[i].lane;
      tracks[i].points.push_back(p);
    }

    // overtaking: a vehicle held below its desired speed long enough moves to
    // a free adjacent lane, so lane changes are anticipatable from context
    for (std::size_t i = 0; i < cars.size(); ++i) {
      auto& c = cars[i];
      if (c.m != detail::SimVehicle::M::none) {
        c.blocked_time = 0;
        continue;
      }
      int li = leader_of(i);
      bool blocked = false;
      if (li >= 0) {
        double gap = cars[static_cast<std::size_t>(li)].y - c.y;
        blocked = gap < cfg.min_gap + 1.5 * cfg.headway_s * c.v_des && c.v < 0.8 * c.v_des;
      }
      c.blocked_time = blocked ? c.blocked_time + dt : 0.0;
      if (c.blocked_time > 1.0 && cfg.p_lane_change > 0) {
        int prefer = rng.uniform() < 0.5 ? -1 : 1;
        for (int dir : {prefer, -prefer}) {
          int target = c.lane + dir;
          if (target < 1 || target > cfg.lanes || !gap_safe(i, target)) continue;
          c.m = detail::SimVehicle::M::lane_change;
          c.m_t0 = now;
          c.m_dur = rng.uniform(3.0, 5.0);
          c.lc_from = c.x;
          c.lc_to = lane_center(target);
          c.lc_target_lane = target;
          c.blocked_time = 0;
          break;
        }
      }
    }

    // spontaneous maneuver triggers
    for (std::size_t i = 0; i < cars.size(); ++i) {
      auto& c = cars[i];
      if (c.m != detail::SimVehicle::M::none) continue;
      if (rng.uniform() >= event_rate * dt) continue;
      double pick = rng.uniform();
      if (pick < cfg.p_lane_change) {
        int dir = rng.uniform() < 0.5 ? -1 : 1;
        int target = c.lane + dir;
        if (target < 1 || target > cfg.lanes) target = c.lane - dir;
        if (target >= 1 && target <= cfg.lanes && target != c.lane && gap_safe(i, target)) {
          c.m = detail::SimVehicle::M::lane_change;
          c.m_t0 = now;
          c.m_dur = rng.uniform(3.0, 5.0);
          c.lc_from = c.x;
          c.lc_to = lane_center(target);
          c.lc_target_lane = target;
        }
      } else if (pick < cfg.p_lane_change + cfg.p_brake) {
        c.m = detail::SimVehicle::M::brake;
        c.m_t0 = now;
        c.m_dur = rng.uniform(2.0, 4.0);
        c.saved_v_des = c.v_des;
        c.v_des *= rng.uniform(0.3, 0.6);
      }
      // keep-lane: nothing to do
    }

    // longitudinal dynamics
    std::vector<double> new_v(cars.size());
    for (std::size_t i = 0; i < cars.size(); ++i) {
      auto& c = cars[i];
      int li = leader_of(i);
      double v_cmd = c.v_des;
      if (li >= 0) {
        double gap = cars[static_cast<std::size_t>(li)].y - c.y;
        v_cmd = std::min(v_cmd, std::max(0.0, (gap - cfg.min_gap) / cfg.headway_s));
      }
      double a = std::clamp(1.5 * (v_cmd - c.v), -4.0, 2.5);
      double v = std::clamp(c.v + a * dt, 0.0, cfg.max_speed);
      if (li >= 0) {
        // hard barrier: the next-step gap stays at or above min_gap
        double gap = cars[static_cast<std::size_t>(li)].y - c.y;
        v = std::min(v, cars[static_cast<std::size_t>(li)].v + (gap - cfg.min_gap) / dt);
        v = std::max(v, 0.0);
      }
      new_v[i] = v;
    }
    for (std::size_t i = 0; i < cars.size(); ++i) {
      cars[i].v = new_v[i];
      cars[i].y += cars[i].v * dt;
    }

    // lateral dynamics / maneuver completion
    for (auto& c : cars) {
      if (c.m == detail::SimVehicle::M::lane_change) {
        double u = std::clamp((now + dt - c.m_t0) / c.m_dur, 0.0, 1.0);
        double s = u * u * (3.0 - 2.0 * u);  // smoothstep
        c.x = c.lc_from + (c.lc_to - c.lc_from) * s;
        if (u >= 0.5) c.lane = c.lc_target_lane;
        if (u >= 1.0) c.m = detail::SimVehicle::M::none;
      } else if (c.m == detail::SimVehicle::M::brake) {
        if (now + dt - c.m_t0 >= c.m_dur) {
          c.v_des = c.saved_v_des;
          c.m = detail::SimVehicle::M::none;
        }
      }
    }
  }
  return tracks;
}

}  // namespace gstcn
