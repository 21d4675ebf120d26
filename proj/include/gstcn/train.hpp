#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gstcn/dataset.hpp"
#include "gstcn/loss.hpp"
#include "gstcn/model.hpp"
#include "gstcn/rng.hpp"

namespace gstcn {

struct TrainConfig {
  std::size_t batch_size = 128;
  int epochs = 250;
  double lr0 = 0.1;
  double lr_decay = 0.1;
  int decay_every = 80;
  std::uint64_t seed = 0;
  double grad_clip = 0.0;      // L2 norm cap; 0 disables
  bool normalize_loss = true;  // divide batch loss by total vehicle-steps
  int threads = 0;             // 0: ST_GRAPH_THREADS env or 1
};

struct EpochStats {
  int epoch = 0;
  double train_nll = 0.0;
  double val_nll = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  bool diverged = false;
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();
};

inline double lr_schedule(int epoch, const TrainConfig& cfg) {
  int decays = cfg.decay_every > 0 ? epoch / cfg.decay_every : 0;
  return cfg.lr0 * std::pow(cfg.lr_decay, static_cast<double>(decays));
}

// p <- p - lr * g for every parameter; plain SGD, no momentum.
template <typename T>
void sgd_step(Parameters<T>& params, const std::vector<std::vector<double>>& grads, double lr) {
  if (grads.size() != params.items.size())
    throw std::invalid_argument("sgd_step: gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& vals = params.items[i].second.mutable_values();
    const auto& g = grads[i];
    if (g.size() != vals.size()) throw std::invalid_argument("sgd_step: gradient size mismatch");
    for (std::size_t k = 0; k < vals.size(); ++k)
      vals[k] = static_cast<T>(static_cast<double>(vals[k]) - lr * g[k]);
  }
}

inline int resolve_threads(int requested) {
  if (requested > 0) return std::min(requested, 64);
  if (const char* env = std::getenv("ST_GRAPH_THREADS")) {
    int t = std::atoi(env);
    if (t > 0) return std::min(t, 64);
  }
  return 1;
}

// Mean NLL per vehicle-step over a set of scenes, evaluation mode.
template <typename T>
double evaluate_nll(const Parameters<T>& params, const ModelConfig& cfg,
                    const std::vector<SceneSegment>& scenes) {
  double total = 0.0;
  double steps = 0.0;
  for (const auto& seg : scenes) {
    autograd::NoGrad guard;
    auto head = forward(params, cfg, seg, false);
    total += static_cast<double>(nll_loss(head, seg).item());
    steps += static_cast<double>(seg.n_vehicles) * cfg.future_len;
  }
  return steps > 0 ? total / steps : std::numeric_limits<double>::quiet_NaN();
}

namespace detail {

// Loss and gradients of one scene. Gradients are read from a private clone of
// the parameters so scenes can run concurrently and reduce in a fixed order.
template <typename T>
struct SceneGrads {
  double nll = 0.0;
  std::vector<std::vector<T>> grads;
  bool valid = false;
};

template <typename T>
SceneGrads<T> scene_backward(const Parameters<T>& shared, const ModelConfig& cfg,
                             const SceneSegment& seg, std::uint64_t dropout_seed) {
  SceneGrads<T> out;
  Parameters<T> local = shared.clone();
  local.set_requires_grad(true);
  Rng drng(dropout_seed);
  auto head = forward(local, cfg, seg, true, &drng);
  Tensor<T> loss = nll_loss(head, seg);  // throws on non-finite cells
  out.nll = static_cast<double>(loss.item());
  if (!std::isfinite(out.nll)) return out;
  local.zero_grad();
  backward(loss);
  out.grads.reserve(local.items.size());
  for (auto& [name, t] : local.items) out.grads.push_back(t.grad());
  out.valid = true;
  return out;
}

}  // namespace detail

// Negative log-likelihood training with the step-decayed SGD schedule.
// Deterministic given the seed: shuffling, init and per-scene dropout streams
// are all derived from it, and gradient reduction follows scene order
// regardless of thread count. Keeps the best-validation parameters; on
// divergence returns the last good checkpoint with the report flagged.
template <typename T>
std::pair<Parameters<T>, TrainReport> fit(const ModelConfig& cfg, const TrainConfig& tcfg,
                                          const DatasetSplit& split) {
  if (split.train.empty()) throw std::invalid_argument("fit: empty train split");
  if (tcfg.epochs < 1) throw std::invalid_argument("fit: epochs must be >= 1");

  Parameters<T> params = init_parameters<T>(cfg, tcfg.seed);
  TrainReport report;
  Parameters<T> best = params.clone();
  int threads = resolve_threads(tcfg.threads);

  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<std::vector<double>> batch_grads(params.items.size());
  for (std::size_t i = 0; i < params.items.size(); ++i)
    batch_grads[i].resize(params.items[i].second.size());

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    auto tick = std::chrono::steady_clock::now();
    double lr = lr_schedule(epoch, tcfg);
    Rng shuffle_rng(derive_seed(tcfg.seed, {0x5F0Full, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);

    double epoch_nll = 0.0;
    double epoch_steps = 0.0;
    bool epoch_ok = true;

    for (std::size_t start = 0; start < order.size() && epoch_ok;
         start += tcfg.batch_size) {
      std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      std::size_t count = end - start;
      std::vector<detail::SceneGrads<T>> scene_grads(count);

      auto run_scene = [&](std::size_t k) {
        std::size_t scene_idx = order[start + k];
        const SceneSegment& seg = split.train[scene_idx];
        std::uint64_t dseed = derive_seed(
            tcfg.seed, {0xD120ull, static_cast<std::uint64_t>(epoch), scene_idx});
        try {
          scene_grads[k] = detail::scene_backward(params, cfg, seg, dseed);
        } catch (const std::runtime_error&) {
          scene_grads[k].valid = false;  // divergence; resolved below
        }
      };
      if (threads <= 1 || count <= 1) {
        for (std::size_t k = 0; k < count; ++k) run_scene(k);
      } else {
        std::vector<std::thread> pool;
        std::size_t workers = std::min<std::size_t>(threads, count);
        for (std::size_t w = 0; w < workers; ++w)
          pool.emplace_back([&, w]() {
            for (std::size_t k = w; k < count; k += workers) run_scene(k);
          });
        for (auto& th : pool) th.join();
      }

      double batch_nll = 0.0;
      double batch_steps = 0.0;
      for (auto& g : batch_grads) std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t k = 0; k < count && epoch_ok; ++k) {
        if (!scene_grads[k].valid) {
          epoch_ok = false;
          break;
        }
        batch_nll += scene_grads[k].nll;
        batch_steps += static_cast<double>(split.train[order[start + k]].n_vehicles) *
                       cfg.future_len;
        for (std::size_t i = 0; i < batch_grads.size(); ++i) {
          const auto& src = scene_grads[k].grads[i];
          auto& dst = batch_grads[i];
          for (std::size_t q = 0; q < dst.size(); ++q) dst[q] += static_cast<double>(src[q]);
        }
      }
      if (!epoch_ok) break;

      double scale = tcfg.normalize_loss && batch_steps > 0 ? 1.0 / batch_steps : 1.0;
      if (scale != 1.0)
        for (auto& g : batch_grads)
          for (double& x : g) x *= scale;
      if (tcfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& g : batch_grads)
          for (double x : g) sq += x * x;
        double norm = std::sqrt(sq);
        if (norm > tcfg.grad_clip) {
          double f = tcfg.grad_clip / norm;
          for (auto& g : batch_grads)
            for (double& x : g) x *= f;
        }
      }
      sgd_step(params, batch_grads, lr);
      epoch_nll += batch_nll;
      epoch_steps += batch_steps;
    }

    if (!epoch_ok) {
      report.diverged = true;
      break;
    }

    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.train_nll = epoch_steps > 0 ? epoch_nll / epoch_steps : 0.0;
    st.val_nll = split.val.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : evaluate_nll(params, cfg, split.val);
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - tick).count();
    report.epochs.push_back(st);
    if (!std::isfinite(st.train_nll)) {
      report.diverged = true;
      break;
    }

    double score = split.val.empty() ? st.train_nll : st.val_nll;
    if (score < report.best_val) {
      report.best_val = score;
      report.best_epoch = epoch;
      best = params.clone();
    }
  }

  if (report.best_epoch < 0) return {std::move(params), std::move(report)};
  return {std::move(best), std::move(report)};
}

inline void write_train_report_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,train_nll,val_nll,lr,seconds\n";
  char buf[200];
  for (const auto& e : report.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.3f\n", e.epoch, e.train_nll, e.val_nll,
                  e.lr, e.seconds);
    out << buf;
  }
}

}  // namespace gstcn
