#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gstcn {

enum class AdjacencyScheme { reciprocal, distance, ones };

inline const char* to_string(AdjacencyScheme s) {
  switch (s) {
    case AdjacencyScheme::reciprocal: return "reciprocal";
    case AdjacencyScheme::distance: return "distance";
    case AdjacencyScheme::ones: return "ones";
  }
  return "?";
}

inline AdjacencyScheme adjacency_scheme_from_string(const std::string& s) {
  if (s == "reciprocal") return AdjacencyScheme::reciprocal;
  if (s == "distance") return AdjacencyScheme::distance;
  if (s == "ones") return AdjacencyScheme::ones;
  throw std::invalid_argument("unknown adjacency scheme: " + s);
}

// Floor on pairwise distance before taking reciprocals, in meters. Keeps the
// weight finite when two tracked positions coincide.
inline constexpr double kMinVehicleDistance = 1e-3;

// N x N row-major weighted adjacency from positions at one timestamp.
// Zero diagonal; off-diagonal weight by scheme (reciprocal of Euclidean
// distance, the distance itself, or 1).
inline std::vector<double> build_weighted_adjacency(const double* xs, const double* ys,
                                                    std::size_t n, AdjacencyScheme scheme) {
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double dx = xs[i] - xs[j];
      double dy = ys[i] - ys[j];
      double d = std::sqrt(dx * dx + dy * dy);
      double w;
      switch (scheme) {
        case AdjacencyScheme::reciprocal: w = 1.0 / std::max(d, kMinVehicleDistance); break;
        case AdjacencyScheme::distance: w = d; break;
        default: w = 1.0; break;
      }
      a[i * n + j] = w;
      a[j * n + i] = w;
    }
  }
  return a;
}

// Symmetric normalization D^{-1/2} (A + I) D^{-1/2} with D the degree matrix
// of A + I. Well defined for any non-negative A since the diagonal of A + I
// is 1, so every degree is >= 1.
inline std::vector<double> normalize_adjacency(const std::vector<double>& a, std::size_t n) {
  if (a.size() != n * n) throw std::invalid_argument("normalize_adjacency: size mismatch");
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0;  // self loop
    for (std::size_t j = 0; j < n; ++j) s += a[i * n + j];
    deg[i] = 1.0 / std::sqrt(s);
  }
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double hat = a[i * n + j] + (i == j ? 1.0 : 0.0);
      out[i * n + j] = deg[i] * hat * deg[j];
    }
  return out;
}

/// Per-timestamp weighted adjacency matrices of a scene and their normalized
/// form, each stored row-major as T stacked N x N blocks.
struct AdjacencyStack {
  std::size_t steps = 0;
  std::size_t vehicles = 0;
  AdjacencyScheme scheme = AdjacencyScheme::reciprocal;
  std::vector<double> raw;         // T*N*N
  std::vector<double> normalized;  // T*N*N

  const double* raw_at(std::size_t t) const { return raw.data() + t * vehicles * vehicles; }
  const double* normalized_at(std::size_t t) const {
    return normalized.data() + t * vehicles * vehicles;
  }
};

// positions: 2*T*N row-major (coordinate channel, timestamp, vehicle)
inline AdjacencyStack build_adjacency_stack(const std::vector<double>& positions, std::size_t t_len,
                                            std::size_t n, AdjacencyScheme scheme) {
  if (positions.size() != 2 * t_len * n)
    throw std::invalid_argument("build_adjacency_stack: positions size mismatch");
  AdjacencyStack s;
  s.steps = t_len;
  s.vehicles = n;
  s.scheme = scheme;
  s.raw.resize(t_len * n * n);
  s.normalized.resize(t_len * n * n);
  std::vector<double> xs(n), ys(n);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t v = 0; v < n; ++v) {
      xs[v] = positions[0 * t_len * n + t * n + v];
      ys[v] = positions[1 * t_len * n + t * n + v];
    }
    auto a = build_weighted_adjacency(xs.data(), ys.data(), n, scheme);
    auto norm = normalize_adjacency(a, n);
    std::copy(a.begin(), a.end(), s.raw.begin() + t * n * n);
    std::copy(norm.begin(), norm.end(), s.normalized.begin() + t * n * n);
  }
  return s;
}

}  // namespace gstcn
