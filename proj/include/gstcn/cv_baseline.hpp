#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "gstcn/scene.hpp"

namespace gstcn {

/// Constant-velocity Kalman filter state over (x, y, vx, vy) with a white-
/// acceleration process model. Neighbor vehicles are ignored entirely.
struct CvKalmanConfig {
  double dt = 0.2;                  // 5 Hz
  double process_accel_std = 1.0;   // m/s^2
  double measurement_std = 0.1;     // m
};

namespace detail {

struct Kf4 {
  std::array<double, 4> x{};    // state
  std::array<double, 16> p{};   // covariance, row-major

  static Kf4 init(double x0, double y0, double vx0, double vy0, double meas_var) {
    Kf4 f;
    f.x = {x0, y0, vx0, vy0};
    for (auto& v : f.p) v = 0.0;
    f.p[0] = meas_var;
    f.p[5] = meas_var;
    f.p[10] = 25.0;
    f.p[15] = 25.0;
    return f;
  }

  void predict(double dt, double q) {
    // x <- A x
    x[0] += dt * x[2];
    x[1] += dt * x[3];
    // P <- A P A^T + Q
    std::array<double, 16> ap;
    auto at = [&](const std::array<double, 16>& m, int r, int c) { return m[r * 4 + c]; };
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        double v = at(p, r, c);
        if (r == 0) v += dt * at(p, 2, c);
        if (r == 1) v += dt * at(p, 3, c);
        ap[r * 4 + c] = v;
      }
    std::array<double, 16> apa;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        double v = at(ap, r, c);
        if (c == 0) v += dt * at(ap, r, 2);
        if (c == 1) v += dt * at(ap, r, 3);
        apa[r * 4 + c] = v;
      }
    p = apa;
    double d2 = dt * dt, d3 = d2 * dt, d4 = d3 * dt;
    p[0] += q * d4 / 4.0;
    p[2] += q * d3 / 2.0;
    p[8] += q * d3 / 2.0;
    p[10] += q * d2;
    p[5] += q * d4 / 4.0;
    p[7] += q * d3 / 2.0;
    p[13] += q * d3 / 2.0;
    p[15] += q * d2;
  }

  void update(double zx, double zy, double r_var) {
    // H = [[1,0,0,0],[0,1,0,0]]
    double s00 = p[0] + r_var, s01 = p[1];
    double s10 = p[4], s11 = p[5] + r_var;
    double det = s00 * s11 - s01 * s10;
    double i00 = s11 / det, i01 = -s01 / det, i10 = -s10 / det, i11 = s00 / det;
    std::array<double, 8> k;  // 4x2 gain
    for (int r = 0; r < 4; ++r) {
      double ph0 = p[r * 4 + 0], ph1 = p[r * 4 + 1];
      k[r * 2 + 0] = ph0 * i00 + ph1 * i10;
      k[r * 2 + 1] = ph0 * i01 + ph1 * i11;
    }
    double ix = zx - x[0], iy = zy - x[1];
    for (int r = 0; r < 4; ++r) x[static_cast<std::size_t>(r)] += k[r * 2] * ix + k[r * 2 + 1] * iy;
    std::array<double, 16> kh{};  // K H (4x4, only first two columns)
    for (int r = 0; r < 4; ++r) {
      kh[r * 4 + 0] = k[r * 2 + 0];
      kh[r * 4 + 1] = k[r * 2 + 1];
    }
    std::array<double, 16> np;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        double v = (r == c ? 1.0 : 0.0) - kh[r * 4 + c];
        np[r * 4 + c] = v;
      }
    std::array<double, 16> out{};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        double s = 0;
        for (int m = 0; m < 4; ++m) s += np[r * 4 + m] * p[m * 4 + c];
        out[r * 4 + c] = s;
      }
    p = out;
  }
};

}  // namespace detail

// Filters the past positions of one vehicle with a constant-velocity model and
// rolls the transition forward, producing a deterministic (2,F) trajectory.
// Velocity is initialized from the first measurement difference, so the filter
// is exact on model-matched (constant velocity) input.
inline std::vector<double> cv_predict(const std::vector<double>& xs, const std::vector<double>& ys,
                                      std::size_t future_len, const CvKalmanConfig& cfg = {}) {
  if (xs.size() != ys.size() || xs.empty())
    throw std::invalid_argument("cv_predict: empty or mismatched past");
  std::size_t t_len = xs.size();
  double r_var = cfg.measurement_std * cfg.measurement_std;
  double q = cfg.process_accel_std * cfg.process_accel_std;

  detail::Kf4 f = t_len >= 2
                      ? detail::Kf4::init(xs[1], ys[1], (xs[1] - xs[0]) / cfg.dt,
                                          (ys[1] - ys[0]) / cfg.dt, r_var)
                      : detail::Kf4::init(xs[0], ys[0], 0.0, 0.0, r_var);
  for (std::size_t t = (t_len >= 2 ? 2 : 1); t < t_len; ++t) {
    f.predict(cfg.dt, q);
    f.update(xs[t], ys[t], r_var);
  }

  std::vector<double> out(2 * future_len);
  for (std::size_t k = 0; k < future_len; ++k) {
    double tau = cfg.dt * static_cast<double>(k + 1);
    out[k] = f.x[0] + tau * f.x[2];
    out[future_len + k] = f.x[1] + tau * f.x[3];
  }
  return out;
}

// Per-scene CV baseline prediction for every vehicle, laid out (2,F,N) to
// match SceneSegment::future.
inline std::vector<double> cv_predict_scene(const SceneSegment& seg,
                                            const CvKalmanConfig& cfg = {}) {
  std::size_t n = seg.n_vehicles;
  std::size_t F = static_cast<std::size_t>(seg.future_len);
  std::vector<double> out(2 * F * n);
  std::vector<double> xs(static_cast<std::size_t>(seg.past_len)),
      ys(static_cast<std::size_t>(seg.past_len));
  for (std::size_t v = 0; v < n; ++v) {
    for (int t = 0; t < seg.past_len; ++t) {
      xs[static_cast<std::size_t>(t)] = seg.past_at(0, t, v);
      ys[static_cast<std::size_t>(t)] = seg.past_at(1, t, v);
    }
    auto pred = cv_predict(xs, ys, F, cfg);
    for (std::size_t k = 0; k < F; ++k) {
      out[k * n + v] = pred[k];
      out[F * n + k * n + v] = pred[F + k];
    }
  }
  return out;
}

}  // namespace gstcn
