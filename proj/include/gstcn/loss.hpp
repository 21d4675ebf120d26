#pragma once

#include <cmath>
#include <string>

#include "gstcn/model.hpp"
#include "gstcn/tensor.hpp"

namespace gstcn {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

// Negative log-likelihood of the ground truth under per-cell bivariate
// normals. Inputs are (F,N); the result is the raw sum over steps and
// vehicles. Throws if any cell evaluates non-finite, naming the cell.
template <typename T>
Tensor<T> nll_loss(const Tensor<T>& mu_x, const Tensor<T>& mu_y, const Tensor<T>& sigma_x,
                   const Tensor<T>& sigma_y, const Tensor<T>& rho, const Tensor<T>& truth_x,
                   const Tensor<T>& truth_y) {
  auto dx = sub(truth_x, mu_x);
  auto dy = sub(truth_y, mu_y);
  auto one_m_r2 = T(1) - mul(rho, rho);
  auto q = sub(add(div(mul(dx, dx), mul(sigma_x, sigma_x)),
                   div(mul(dy, dy), mul(sigma_y, sigma_y))),
               T(2) * div(mul(rho, mul(dx, dy)), mul(sigma_x, sigma_y)));
  auto cell = add(add(add(log(sigma_x), log(sigma_y)) + T(kLogTwoPi),
                      T(0.5) * log(one_m_r2)),
                  div(q, T(2) * one_m_r2));
  const auto& vals = cell.values();
  std::size_t n = cell.dim(1);
  for (std::size_t i = 0; i < vals.size(); ++i)
    if (!std::isfinite(static_cast<double>(vals[i])))
      throw std::runtime_error("nll_loss: non-finite at (t=" + std::to_string(i / n) +
                               ", n=" + std::to_string(i % n) + ")");
  return sum(cell);
}

// Truth tensors (F,N) for a segment, re-indexed by the head's canonical order.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> truth_tensors(const SceneSegment& seg,
                                              const std::vector<std::size_t>& order) {
  std::size_t F = static_cast<std::size_t>(seg.future_len);
  std::size_t N = seg.n_vehicles;
  std::vector<T> tx(F * N), ty(F * N);
  for (std::size_t t = 0; t < F; ++t)
    for (std::size_t k = 0; k < N; ++k) {
      tx[t * N + k] = static_cast<T>(seg.future[(0 * F + t) * N + order[k]]);
      ty[t * N + k] = static_cast<T>(seg.future[(1 * F + t) * N + order[k]]);
    }
  return {Tensor<T>({F, N}, std::move(tx)), Tensor<T>({F, N}, std::move(ty))};
}

template <typename T>
Tensor<T> nll_loss(const GaussianHead<T>& head, const SceneSegment& seg) {
  auto [tx, ty] = truth_tensors<T>(seg, head.order);
  return nll_loss(head.mu_x, head.mu_y, head.sigma_x, head.sigma_y, head.rho, tx, ty);
}

// Value-level convenience: evaluates the loss of a materialized field against
// a (2,F,N) ground-truth trajectory.
inline double nll_loss(const BiGaussianField& f, const std::vector<double>& truth) {
  std::size_t F = static_cast<std::size_t>(f.future_len);
  std::size_t N = f.n_vehicles;
  if (truth.size() != 2 * F * N)
    throw std::invalid_argument("nll_loss: truth size does not match field");
  Shape s{F, N};
  std::vector<double> tx(truth.begin(), truth.begin() + F * N);
  std::vector<double> ty(truth.begin() + F * N, truth.end());
  return nll_loss<double>(Tensor<double>(s, f.mu_x), Tensor<double>(s, f.mu_y),
                          Tensor<double>(s, f.sigma_x), Tensor<double>(s, f.sigma_y),
                          Tensor<double>(s, f.rho), Tensor<double>(s, std::move(tx)),
                          Tensor<double>(s, std::move(ty)))
      .item();
}

}  // namespace gstcn
