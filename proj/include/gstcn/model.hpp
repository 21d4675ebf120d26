#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gstcn/adjacency.hpp"
#include "gstcn/rng.hpp"
#include "gstcn/scene.hpp"
#include "gstcn/tensor.hpp"

namespace gstcn {

enum class Activation { relu, tanh_act };
enum class ModelVariant { full, no_gcn, no_tde, no_gru };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
inline const char* to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::full: return "full";
    case ModelVariant::no_gcn: return "no_gcn";
    case ModelVariant::no_tde: return "no_tde";
    case ModelVariant::no_gru: return "no_gru";
  }
  return "?";
}
inline ModelVariant model_variant_from_string(const std::string& s) {
  if (s == "full") return ModelVariant::full;
  if (s == "no_gcn") return ModelVariant::no_gcn;
  if (s == "no_tde") return ModelVariant::no_tde;
  if (s == "no_gru") return ModelVariant::no_gru;
  throw std::invalid_argument("unknown model variant: " + s);
}
inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh_act;
  throw std::invalid_argument("unknown activation: " + s);
}

struct ModelConfig {
  int past_len = 15;
  int future_len = 25;
  int coord_channels = 2;
  int embed_channels = 32;  // 1x1 conv output channels
  int gcn_layers = 1;
  int tde_layers = 5;
  int tde_kernel = 3;
  int tde_padding = 1;
  int gru_hidden = 32;
  double dropout = 0.5;
  // Fixed feature scale applied to coordinate inputs before the embedding.
  // Distances for the adjacency stay in meters; outputs stay in meters.
  double input_scale = 1.0;
  // Mean head: predicted position = last observed position + raw / mu_scale.
  // With residual_head off, the mean is the raw head output alone.
  bool residual_head = false;
  double mu_scale = 1.0;
  AdjacencyScheme scheme = AdjacencyScheme::reciprocal;
  Activation activation = Activation::relu;
  ModelVariant variant = ModelVariant::full;
};

inline ModelConfig ablation_variant(ModelConfig base, ModelVariant v) {
  base.variant = v;
  return base;
}

/// Named parameter collection; iteration order is the canonical checkpoint
/// and gradient-reduction order.
template <typename T>
struct Parameters {
  std::vector<std::pair<std::string, Tensor<T>>> items;

  Tensor<T>& at(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return t;
    throw std::invalid_argument("unknown parameter: " + name);
  }
  const Tensor<T>& at(const std::string& name) const {
    return const_cast<Parameters*>(this)->at(name);
  }
  bool has(const std::string& name) const {
    for (auto& [n, t] : items)
      if (n == name) return true;
    return false;
  }
  void add(const std::string& name, Tensor<T> t) { items.emplace_back(name, std::move(t)); }

  Parameters clone() const {
    Parameters out;
    for (const auto& [n, t] : items)
      out.items.emplace_back(n, Tensor<T>(t.shape(), t.values(), t.requires_grad()));
    return out;
  }
  void set_requires_grad(bool b) {
    for (auto& [n, t] : items) t.set_requires_grad(b);
  }
  void zero_grad() {
    for (auto& [n, t] : items) t.zero_grad();
  }
};

template <typename T>
std::size_t count_parameters(const Parameters<T>& p) {
  std::size_t n = 0;
  for (const auto& [name, t] : p.items) n += t.size();
  return n;
}

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init, drawn in parameter order
template <typename T>
Parameters<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  Parameters<T> p;
  Rng rng(derive_seed(seed, {0x1417ull}));
  auto u = [&](Shape shape, std::size_t fan_in) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<T> v(shape_size(shape));
    for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
    return Tensor<T>(std::move(shape), std::move(v), true);
  };
  std::size_t C = static_cast<std::size_t>(cfg.coord_channels);
  std::size_t Cp = static_cast<std::size_t>(cfg.embed_channels);
  std::size_t Tn = static_cast<std::size_t>(cfg.past_len);
  std::size_t F = static_cast<std::size_t>(cfg.future_len);
  std::size_t H = static_cast<std::size_t>(cfg.gru_hidden);
  std::size_t K = static_cast<std::size_t>(cfg.tde_kernel);

  p.add("embed.weight", u({Cp, C, 1, 1}, C));
  p.add("embed.bias", u({Cp}, C));
  if (cfg.variant != ModelVariant::no_gcn)
    for (int l = 0; l < cfg.gcn_layers; ++l)
      p.add("gcn." + std::to_string(l) + ".weight", u({Cp, Cp}, Cp));
  if (cfg.variant != ModelVariant::no_tde) {
    for (int l = 0; l < cfg.tde_layers; ++l) {
      std::size_t in_ch = l == 0 ? Tn : F;
      std::string base = "tde." + std::to_string(l);
      p.add(base + ".weight", u({F, in_ch, K, K}, in_ch * K * K));
      p.add(base + ".bias", u({F}, in_ch * K * K));
    }
  } else {
    p.add("tde_map.weight", u({F, Tn}, Tn));
    p.add("tde_map.bias", u({F}, Tn));
  }
  if (cfg.variant != ModelVariant::no_gru) {
    for (const char* side : {"enc", "dec"}) {
      for (const char* gate : {"wz", "wr", "wn"})
        p.add(std::string(side) + "." + gate, u({Cp, H}, Cp));
      for (const char* gate : {"uz", "ur", "un"})
        p.add(std::string(side) + "." + gate, u({H, H}, H));
      for (const char* gate : {"bz", "br", "bn"})
        p.add(std::string(side) + "." + gate, u({H}, H));
    }
    p.add("head.weight", u({H, 5}, H));
    p.add("head.bias", u({5}, H));
  } else {
    p.add("head.weight", u({Cp, 5}, Cp));
    p.add("head.bias", u({5}, Cp));
  }
  return p;
}

namespace detail {
template <typename T>
Tensor<T> act(const Tensor<T>& x, Activation a) {
  return a == Activation::relu ? relu(x) : gstcn::tanh(x);
}
}  // namespace detail

// Pointwise 1x1 convolution lifting (x, y) channels to the embedding width,
// followed by the activation.
template <typename T>
Tensor<T> embed_input(const Tensor<T>& v, const Tensor<T>& weight, const Tensor<T>& bias,
                      Activation a) {
  auto lifted = conv2d(v, weight, 0);
  auto biased = add(lifted, reshape(bias, {bias.size(), 1, 1}));
  return detail::act(biased, a);
}

// One spatial graph convolution: per timestamp, Z'_t = f(Abar_t Z_t^T W)^T.
// z: (C',T,N); normalized adjacency: (T,N,N); w: (C',C'). Output (C',T,N).
template <typename T>
Tensor<T> spatial_graph_conv(const Tensor<T>& z, const Tensor<T>& adj, const Tensor<T>& w,
                             Activation a) {
  if (z.rank() != 3 || adj.rank() != 3 || z.dim(2) != adj.dim(1) || adj.dim(1) != adj.dim(2) ||
      z.dim(1) != adj.dim(0))
    op_error("spatial_graph_conv",
             "features " + shape_str(z.shape()) + " vs adjacency " + shape_str(adj.shape()));
  auto zt = transpose(z, {1, 2, 0});            // (T,N,C')
  auto mixed = matmul(adj, zt);                 // (T,N,C')
  auto projected = matmul(mixed, w);            // (T,N,C')
  return transpose(detail::act(projected, a), {2, 0, 1});
}

// Temporal dependency extractor: timestamps become channels and are mapped to
// the prediction horizon. First layer T->F, the rest are F->F residual blocks.
// h: (C',T,N) -> output (F,C',N).
template <typename T>
Tensor<T> temporal_dependency_extractor(const Tensor<T>& h, const Parameters<T>& p,
                                        const ModelConfig& cfg) {
  auto x = transpose(h, {1, 0, 2});  // (T,C',N)
  std::size_t pad = static_cast<std::size_t>(cfg.tde_padding);
  for (int l = 0; l < cfg.tde_layers; ++l) {
    std::string base = "tde." + std::to_string(l);
    const Tensor<T>& w = p.at(base + ".weight");
    const Tensor<T>& b = p.at(base + ".bias");
    auto y = add(conv2d(x, w, pad), reshape(b, {b.size(), 1, 1}));
    y = detail::act(y, cfg.activation);
    x = l == 0 ? y : add(y, x);  // residual once shapes agree
  }
  return x;
}

template <typename T>
struct GruParams {
  Tensor<T> wz, wr, wn, uz, ur, un, bz, br, bn;
};

template <typename T>
GruParams<T> gru_params(const Parameters<T>& p, const std::string& side) {
  return {p.at(side + ".wz"), p.at(side + ".wr"), p.at(side + ".wn"),
          p.at(side + ".uz"), p.at(side + ".ur"), p.at(side + ".un"),
          p.at(side + ".bz"), p.at(side + ".br"), p.at(side + ".bn")};
}

// Standard gated recurrent unit update; x (N,in), h (N,H) -> (N,H).
// h' = (1 - z) . h + z . tanh(W x + U (r . h) + b)
template <typename T>
Tensor<T> gru_cell(const Tensor<T>& x, const Tensor<T>& h, const GruParams<T>& w) {
  auto z = sigmoid(add(add(matmul(x, w.wz), matmul(h, w.uz)), w.bz));
  auto r = sigmoid(add(add(matmul(x, w.wr), matmul(h, w.ur)), w.br));
  auto n = gstcn::tanh(add(add(matmul(x, w.wn), matmul(mul(r, h), w.un)), w.bn));
  return add(mul(T(1) - z, h), mul(z, n));
}

/// Distribution parameters for every (future step, vehicle); tensors are laid
/// out (F, N) in the model's canonical vehicle order, `order[k]` giving the
/// original vehicle index of canonical slot k.
template <typename T>
struct GaussianHead {
  Tensor<T> mu_x, mu_y, sigma_x, sigma_y, rho;
  std::vector<std::size_t> order;
  int future_len = 0;
  std::size_t n_vehicles = 0;
};

/// Plain-value bivariate Gaussian parameters per (future step, vehicle),
/// indexed [t * N + n] in the segment's original vehicle order.
struct BiGaussianField {
  int future_len = 0;
  std::size_t n_vehicles = 0;
  std::vector<double> mu_x, mu_y, sigma_x, sigma_y, rho;

  std::size_t idx(int t, std::size_t n) const {
    return static_cast<std::size_t>(t) * n_vehicles + n;
  }
};

// Vehicles are processed in a canonical order (longitudinal position, then
// lateral, then id, at the last past frame) so results do not depend on the
// order vehicles appear in the segment.
inline std::vector<std::size_t> canonical_vehicle_order(const SceneSegment& seg) {
  std::vector<std::size_t> order(seg.n_vehicles);
  std::iota(order.begin(), order.end(), 0);
  int last = seg.past_len - 1;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    double ya = seg.past_at(1, last, a), yb = seg.past_at(1, last, b);
    if (ya != yb) return ya < yb;
    double xa = seg.past_at(0, last, a), xb = seg.past_at(0, last, b);
    if (xa != xb) return xa < xb;
    return seg.vehicle_ids[a] < seg.vehicle_ids[b];
  });
  return order;
}

namespace detail {

// past tensor (2,T,N) with vehicles re-indexed by `order`
template <typename T>
Tensor<T> canonical_past(const SceneSegment& seg, const std::vector<std::size_t>& order,
                         double scale) {
  std::size_t n = seg.n_vehicles;
  std::size_t t_len = static_cast<std::size_t>(seg.past_len);
  std::vector<T> v(2 * t_len * n);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t k = 0; k < n; ++k)
        v[(c * t_len + t) * n + k] =
            static_cast<T>(scale * seg.past[(c * t_len + t) * n + order[k]]);
  return Tensor<T>({2, t_len, n}, std::move(v), false);
}

template <typename T>
Tensor<T> adjacency_tensor(const SceneSegment& seg, const std::vector<std::size_t>& order,
                           AdjacencyScheme scheme) {
  std::size_t n = seg.n_vehicles;
  std::size_t t_len = static_cast<std::size_t>(seg.past_len);
  std::vector<double> pos(2 * t_len * n);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t k = 0; k < n; ++k)
        pos[(c * t_len + t) * n + k] = seg.past[(c * t_len + t) * n + order[k]];
  AdjacencyStack stack = build_adjacency_stack(pos, t_len, n, scheme);
  std::vector<T> v(stack.normalized.begin(), stack.normalized.end());
  return Tensor<T>({t_len, n, n}, std::move(v), false);
}

}  // namespace detail

// Full pipeline: embedding -> spatial graph convolutions -> temporal extractor
// -> GRU encoder/decoder -> per-step bivariate Gaussian parameters for every
// vehicle in one pass. `dropout_rng` is only consulted when training.
template <typename T>
GaussianHead<T> forward(const Parameters<T>& params, const ModelConfig& cfg,
                        const SceneSegment& seg, bool training, Rng* dropout_rng = nullptr) {
  if (seg.n_vehicles == 0) op_error("forward", "segment has no vehicles");
  if (seg.past_len != cfg.past_len)
    op_error("forward", "segment past length " + std::to_string(seg.past_len) +
                            " does not match config " + std::to_string(cfg.past_len));
  if (training && cfg.dropout > 0.0 && !dropout_rng)
    op_error("forward", "training with dropout requires an rng");

  std::optional<autograd::NoGrad> guard;
  if (!training) guard.emplace();

  GaussianHead<T> out;
  out.order = canonical_vehicle_order(seg);
  out.future_len = cfg.future_len;
  out.n_vehicles = seg.n_vehicles;

  std::size_t N = seg.n_vehicles;
  std::size_t Cp = static_cast<std::size_t>(cfg.embed_channels);
  std::size_t F = static_cast<std::size_t>(cfg.future_len);

  Tensor<T> v = detail::canonical_past<T>(seg, out.order, cfg.input_scale);
  Tensor<T> z = embed_input(v, params.at("embed.weight"), params.at("embed.bias"), cfg.activation);

  Tensor<T> hp;  // (T, C', N)
  if (cfg.variant != ModelVariant::no_gcn) {
    Tensor<T> adj = detail::adjacency_tensor<T>(seg, out.order, cfg.scheme);
    for (int l = 0; l < cfg.gcn_layers; ++l)
      z = spatial_graph_conv(z, adj, params.at("gcn." + std::to_string(l) + ".weight"),
                             cfg.activation);
  }
  hp = transpose(z, {1, 0, 2});

  Tensor<T> tde;  // (F, C', N)
  if (cfg.variant != ModelVariant::no_tde) {
    tde = temporal_dependency_extractor(transpose(hp, {1, 0, 2}), params, cfg);
  } else {
    auto flat = reshape(hp, {static_cast<std::size_t>(cfg.past_len), Cp * N});
    auto mapped = add(matmul(params.at("tde_map.weight"), flat),
                      reshape(params.at("tde_map.bias"), {F, 1}));
    tde = reshape(mapped, {F, Cp, N});
  }

  // per-step feature matrices (N, C'), consumed by encoder and decoder alike
  std::vector<Tensor<T>> steps;
  steps.reserve(F);
  for (std::size_t t = 0; t < F; ++t)
    steps.push_back(transpose(reshape(slice(tde, 0, t, 1), {Cp, N})));

  const Tensor<T>& head_w = params.at("head.weight");
  const Tensor<T>& head_b = params.at("head.bias");
  std::vector<Tensor<T>> outputs;
  outputs.reserve(F);
  auto apply_head = [&](const Tensor<T>& feature) {
    Tensor<T> dropped = (training && cfg.dropout > 0.0)
                            ? dropout(feature, cfg.dropout, true, *dropout_rng)
                            : feature;
    return add(matmul(dropped, head_w), head_b);  // (N,5)
  };

  if (cfg.variant != ModelVariant::no_gru) {
    GruParams<T> enc = gru_params(params, "enc");
    GruParams<T> dec = gru_params(params, "dec");
    Tensor<T> h = Tensor<T>::zeros({N, static_cast<std::size_t>(cfg.gru_hidden)});
    for (std::size_t t = 0; t < F; ++t) h = gru_cell(steps[t], h, enc);
    for (std::size_t t = 0; t < F; ++t) {
      h = gru_cell(steps[t], h, dec);
      outputs.push_back(apply_head(h));
    }
  } else {
    for (std::size_t t = 0; t < F; ++t) outputs.push_back(apply_head(steps[t]));
  }

  Tensor<T> raw = stack(outputs);  // (F,N,5)
  out.mu_x = reshape(slice(raw, 2, 0, 1), {F, N});
  out.mu_y = reshape(slice(raw, 2, 1, 1), {F, N});
  if (cfg.residual_head) {
    int last = seg.past_len - 1;
    std::vector<T> lx(N), ly(N);
    for (std::size_t k = 0; k < N; ++k) {
      lx[k] = static_cast<T>(seg.past_at(0, last, out.order[k]));
      ly[k] = static_cast<T>(seg.past_at(1, last, out.order[k]));
    }
    T inv = static_cast<T>(1.0 / cfg.mu_scale);
    out.mu_x = add(mul(out.mu_x, Tensor<T>::scalar(inv)), Tensor<T>({1, N}, std::move(lx)));
    out.mu_y = add(mul(out.mu_y, Tensor<T>::scalar(inv)), Tensor<T>({1, N}, std::move(ly)));
  }
  out.sigma_x = exp(reshape(slice(raw, 2, 2, 1), {F, N}));
  out.sigma_y = exp(reshape(slice(raw, 2, 3, 1), {F, N}));
  out.rho = gstcn::tanh(reshape(slice(raw, 2, 4, 1), {F, N}));
  return out;
}

template <typename T>
BiGaussianField to_field(const GaussianHead<T>& head) {
  BiGaussianField f;
  f.future_len = head.future_len;
  f.n_vehicles = head.n_vehicles;
  std::size_t total = static_cast<std::size_t>(head.future_len) * head.n_vehicles;
  f.mu_x.resize(total);
  f.mu_y.resize(total);
  f.sigma_x.resize(total);
  f.sigma_y.resize(total);
  f.rho.resize(total);
  for (int t = 0; t < head.future_len; ++t)
    for (std::size_t k = 0; k < head.n_vehicles; ++k) {
      std::size_t src = static_cast<std::size_t>(t) * head.n_vehicles + k;
      std::size_t dst = static_cast<std::size_t>(t) * head.n_vehicles + head.order[k];
      f.mu_x[dst] = static_cast<double>(head.mu_x.values()[src]);
      f.mu_y[dst] = static_cast<double>(head.mu_y.values()[src]);
      f.sigma_x[dst] = static_cast<double>(head.sigma_x.values()[src]);
      f.sigma_y[dst] = static_cast<double>(head.sigma_y.values()[src]);
      f.rho[dst] = static_cast<double>(head.rho.values()[src]);
    }
  return f;
}

template <typename T>
BiGaussianField predict_field(const Parameters<T>& params, const ModelConfig& cfg,
                              const SceneSegment& seg) {
  return to_field(forward(params, cfg, seg, false));
}

// One trajectory draw per (step, vehicle) from the bivariate normal via its
// Cholesky factor; layout (2,F,N) matching SceneSegment::future.
inline std::vector<double> sample_trajectory(const BiGaussianField& f, std::uint64_t seed) {
  std::size_t F = static_cast<std::size_t>(f.future_len);
  std::size_t N = f.n_vehicles;
  std::vector<double> out(2 * F * N);
  Rng rng(derive_seed(seed, {0x5a3dull}));
  for (std::size_t t = 0; t < F; ++t)
    for (std::size_t n = 0; n < N; ++n) {
      std::size_t i = t * N + n;
      double z1 = rng.normal();
      double z2 = rng.normal();
      double rho = f.rho[i];
      out[0 * F * N + i] = f.mu_x[i] + f.sigma_x[i] * z1;
      out[1 * F * N + i] = f.mu_y[i] + f.sigma_y[i] * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2);
    }
  return out;
}

}  // namespace gstcn
