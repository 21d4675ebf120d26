#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gstcn/trajectory.hpp"

namespace gstcn {

// Drops points whose implied frame-to-frame speed or acceleration exceeds the
// thresholds. Greedy forward pass anchored at the first point: a dropped point
// becomes a gap, survivors are untouched.
inline VehicleTrack remove_anomalies(const VehicleTrack& track, double max_speed = 60.0,
                                     double max_accel = 15.0, double frame_rate_hz = 10.0) {
  VehicleTrack out;
  out.vehicle_id = track.vehicle_id;
  if (track.points.empty()) return out;
  out.points.push_back(track.points.front());
  bool have_speed = false;
  double prev_speed = 0.0;
  for (std::size_t i = 1; i < track.points.size(); ++i) {
    const TrajectoryPoint& cand = track.points[i];
    const TrajectoryPoint& prev = out.points.back();
    double dt = static_cast<double>(cand.frame - prev.frame) / frame_rate_hz;
    if (dt <= 0.0) continue;
    double speed = std::hypot(cand.x - prev.x, cand.y - prev.y) / dt;
    if (speed > max_speed) continue;
    if (have_speed && std::fabs(speed - prev_speed) / dt > max_accel) continue;
    out.points.push_back(cand);
    prev_speed = speed;
    have_speed = true;
  }
  return out;
}

namespace detail {

// Tangents per surviving point, centered finite differences on the (possibly
// non-uniform) frame grid, one-sided at the ends. Units: value per frame.
inline std::vector<double> hermite_tangents(const std::vector<long>& frames,
                                            const std::vector<double>& values) {
  std::size_t m = frames.size();
  std::vector<double> tan(m);
  if (m == 1) {
    tan[0] = 0.0;
    return tan;
  }
  tan[0] = (values[1] - values[0]) / static_cast<double>(frames[1] - frames[0]);
  tan[m - 1] = (values[m - 1] - values[m - 2]) / static_cast<double>(frames[m - 1] - frames[m - 2]);
  for (std::size_t k = 1; k + 1 < m; ++k)
    tan[k] = (values[k + 1] - values[k - 1]) / static_cast<double>(frames[k + 1] - frames[k - 1]);
  return tan;
}

inline double hermite_eval(double s, double v0, double v1, double m0, double m1, double span) {
  double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * v0 + (s3 - 2 * s2 + s) * span * m0 + (-2 * s3 + 3 * s2) * v1 +
         (s3 - s2) * span * m1;
}

}  // namespace detail

// Fills every missing interior frame by cubic Hermite interpolation per
// coordinate. Existing points are copied through bit-identically. When an
// expected frame range is given and a gap touches either end, interpolation is
// impossible and this throws.
inline VehicleTrack interpolate_missing(const VehicleTrack& track, long expected_first,
                                        long expected_last) {
  if (track.points.size() < 2) throw std::invalid_argument("interpolate_missing: need >= 2 points");
  if (track.points.front().frame > expected_first || track.points.back().frame < expected_last)
    throw std::runtime_error("cannot extrapolate");

  std::size_t m = track.points.size();
  std::vector<long> frames(m);
  std::vector<double> xs(m), ys(m);
  for (std::size_t i = 0; i < m; ++i) {
    frames[i] = track.points[i].frame;
    xs[i] = track.points[i].x;
    ys[i] = track.points[i].y;
  }
  auto tx = detail::hermite_tangents(frames, xs);
  auto ty = detail::hermite_tangents(frames, ys);

  VehicleTrack out;
  out.vehicle_id = track.vehicle_id;
  for (std::size_t k = 0; k + 1 < m; ++k) {
    out.points.push_back(track.points[k]);
    long span = frames[k + 1] - frames[k];
    for (long f = frames[k] + 1; f < frames[k + 1]; ++f) {
      double s = static_cast<double>(f - frames[k]) / static_cast<double>(span);
      TrajectoryPoint p;
      p.vehicle_id = track.vehicle_id;
      p.frame = f;
      p.x = detail::hermite_eval(s, xs[k], xs[k + 1], tx[k], tx[k + 1], static_cast<double>(span));
      p.y = detail::hermite_eval(s, ys[k], ys[k + 1], ty[k], ty[k + 1], static_cast<double>(span));
      p.lane = s < 0.5 ? track.points[k].lane : track.points[k + 1].lane;
      out.points.push_back(p);
    }
  }
  out.points.push_back(track.points.back());
  return out;
}

inline VehicleTrack interpolate_missing(const VehicleTrack& track) {
  if (track.points.size() < 2) throw std::invalid_argument("interpolate_missing: need >= 2 points");
  return interpolate_missing(track, track.points.front().frame, track.points.back().frame);
}

// Keeps every factor-th point starting at the first; frame indices are
// re-based to the new rate by floor division.
inline VehicleTrack downsample(const VehicleTrack& track, long factor) {
  if (factor < 1) throw std::invalid_argument("downsample: factor must be >= 1");
  for (std::size_t i = 1; i < track.points.size(); ++i)
    if (track.points[i].frame != track.points[i - 1].frame + 1)
      throw std::invalid_argument("downsample: track has gaps");
  VehicleTrack out;
  out.vehicle_id = track.vehicle_id;
  for (std::size_t i = 0; i < track.points.size(); i += static_cast<std::size_t>(factor)) {
    TrajectoryPoint p = track.points[i];
    p.frame = p.frame / factor;
    out.points.push_back(p);
  }
  return out;
}

}  // namespace gstcn
