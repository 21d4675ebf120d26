#pragma once

// Test-side reference implementations. These are written independently of the
// library paths they check: plain loops, no shared helpers, double precision.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracles {

// Generic dense matmul, used to assemble the naive normalized adjacency.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

// Naive D^{-1/2} (A + I) D^{-1/2} via explicit matrix products.
inline std::vector<double> normalized_adjacency(const std::vector<double>& a, std::size_t n) {
  std::vector<double> ahat(a);
  for (std::size_t i = 0; i < n; ++i) ahat[i * n + i] += 1.0;
  std::vector<double> dinv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += ahat[i * n + j];
    dinv[i * n + i] = 1.0 / std::sqrt(deg);
  }
  return matmul(matmul(dinv, ahat, n, n, n), dinv, n, n, n);
}

// Direct 2-D convolution with explicit zero padding materialized up front.
// input (Ci,H,W), kernel (Co,Ci,kh,kw), stride 1.
inline std::vector<double> conv2d(const std::vector<double>& input, std::size_t ci, std::size_t h,
                                  std::size_t w, const std::vector<double>& kernel, std::size_t co,
                                  std::size_t kh, std::size_t kw, std::size_t pad) {
  std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
  std::vector<double> padded(ci * hp * wp, 0.0);
  for (std::size_t c = 0; c < ci; ++c)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t q = 0; q < w; ++q)
        padded[c * hp * wp + (r + pad) * wp + (q + pad)] = input[c * h * w + r * w + q];
  std::size_t ho = hp - kh + 1, wo = wp - kw + 1;
  std::vector<double> out(co * ho * wo, 0.0);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t r = 0; r < ho; ++r)
      for (std::size_t q = 0; q < wo; ++q) {
        double s = 0.0;
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t y = 0; y < kh; ++y)
            for (std::size_t x = 0; x < kw; ++x)
              s += padded[c * hp * wp + (r + y) * wp + (q + x)] *
                   kernel[((o * ci + c) * kh + y) * kw + x];
        out[o * ho * wo + r * wo + q] = s;
      }
  return out;
}

// Scalar reference GRU step (Cho et al. formulation): gates from fused loops,
// candidate uses the reset gate applied to h before the hidden matmul.
struct GruWeights {
  // wz,wr,wn: (in,h); uz,ur,un: (h,h); bz,br,bn: (h)
  std::vector<double> wz, wr, wn, uz, ur, un, bz, br, bn;
  std::size_t in, h;
};

inline std::vector<double> gru_step(const GruWeights& g, const std::vector<double>& x,
                                    const std::vector<double>& h) {
  auto affine = [&](const std::vector<double>& w, const std::vector<double>& u,
                    const std::vector<double>& b) {
    std::vector<double> out(g.h, 0.0);
    for (std::size_t j = 0; j < g.h; ++j) {
      double s = b[j];
      for (std::size_t i = 0; i < g.in; ++i) s += x[i] * w[i * g.h + j];
      out[j] = s;
    }
    return out;
  };
  std::vector<double> z = affine(g.wz, g.uz, g.bz);
  std::vector<double> r = affine(g.wr, g.ur, g.br);
  for (std::size_t j = 0; j < g.h; ++j) {
    double sz = z[j], sr = r[j];
    for (std::size_t i = 0; i < g.h; ++i) {
      sz += h[i] * g.uz[i * g.h + j];
      sr += h[i] * g.ur[i * g.h + j];
    }
    z[j] = 1.0 / (1.0 + std::exp(-sz));
    r[j] = 1.0 / (1.0 + std::exp(-sr));
  }
  std::vector<double> rh(g.h);
  for (std::size_t i = 0; i < g.h; ++i) rh[i] = r[i] * h[i];
  std::vector<double> n = affine(g.wn, g.un, g.bn);
  for (std::size_t j = 0; j < g.h; ++j) {
    double s = n[j];
    for (std::size_t i = 0; i < g.h; ++i) s += rh[i] * g.un[i * g.h + j];
    n[j] = std::tanh(s);
  }
  std::vector<double> out(g.h);
  for (std::size_t j = 0; j < g.h; ++j) out[j] = (1.0 - z[j]) * h[j] + z[j] * n[j];
  return out;
}

// Closed-form negative log density of a bivariate normal at (x, y).
inline double bignll(double x, double y, double mx, double my, double sx, double sy, double rho) {
  double dx = x - mx, dy = y - my;
  double om = 1.0 - rho * rho;
  double q = dx * dx / (sx * sx) - 2.0 * rho * dx * dy / (sx * sy) + dy * dy / (sy * sy);
  return std::log(2.0 * M_PI * sx * sy * std::sqrt(om)) + q / (2.0 * om);
}

}  // namespace oracles
