#pragma once

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "graph.hpp"

namespace mecd {

struct TrainConfig {
  int epochs = 20;
  double learning_rate = 16e-5;
  int warmup_epochs = 3;
  uint64_t seed = 2023;
  std::vector<uint64_t> seeds = {2023, 2024, 2025};  // multi-seed protocol
  int batch_size = 4;
  SimilarityGate similarity_gate = SimilarityGate::NonCausal;
  double weight_decay = 0.01;
  int warm_start_epochs = 0;  // optional caption/reconstruction-only phase

  void validate() const {
    if (epochs <= 0 || batch_size <= 0) fail(Status::Config, "epochs and batch_size must be positive");
    if (warmup_epochs < 0 || warmup_epochs >= epochs + warm_start_epochs)
      fail(Status::Config, "warmup_epochs must be smaller than the epoch count");
    if (learning_rate <= 0) fail(Status::Config, "learning_rate must be positive");
  }
};

struct EpochStats {
  int epoch = 0;
  double mean_total = 0, l_c = 0, l_r = 0, l_v = 0, l_s = 0;
  double holdout_accuracy = 0;
};

struct LossBreakdown {
  double total = 0, l_c = 0, l_r = 0, l_v = 0, l_s = 0;
  double gate = 0;  // 1 when L_S participates in the total
};

// ---- prediction --------------------------------------------------------------

// Relation decisions for a chunk of samples; ties resolve to non-causal.
template <typename S>
std::vector<std::vector<int>> predict_relations_batch(Vgcm<S>& model,
                                                      const std::vector<const PreparedVideo*>& samples,
                                                      const CausalFlags& causal,
                                                      int chunk_size = 16) {
  std::vector<std::vector<int>> out(samples.size());
  for (size_t at = 0; at < samples.size(); at += static_cast<size_t>(chunk_size)) {
    std::vector<const PreparedVideo*> chunk(
        samples.begin() + static_cast<long>(at),
        samples.begin() + static_cast<long>(std::min(samples.size(), at + static_cast<size_t>(chunk_size))));
    Tape<S> tape;
    Forward<S> fw(model, tape);
    BatchOptions opt;
    opt.causal = causal;
    auto g = build_streams(fw, chunk, opt);
    const Mat<S>& logits = tape.val(g.rel_logits);
    for (size_t i = 0; i < g.decisions.size(); ++i) {
      const auto& dec = g.decisions[i];
      auto& row = out[at + static_cast<size_t>(dec.sample)];
      if (row.empty()) row.resize(static_cast<size_t>(chunk[static_cast<size_t>(dec.sample)]->n_events() - 1), 0);
      row[static_cast<size_t>(dec.k - 1)] =
          logits(static_cast<Eigen::Index>(i), 1) > logits(static_cast<Eigen::Index>(i), 0) ? 1 : 0;
    }
  }
  return out;
}

template <typename S>
std::vector<int> predict_relations(Vgcm<S>& model, const PreparedVideo& sample,
                                   const CausalFlags& causal) {
  return predict_relations_batch<S>(model, {&sample}, causal)[0];
}

// ---- loss ---------------------------------------------------------------------

// Eq.-style four-term loss for a single (sample, k) pair, evaluation-mode
// forward (no dropout).
template <typename S>
LossBreakdown compute_loss(Vgcm<S>& model, const PreparedVideo& sample, int k,
                           const LossWeights& weights, SimilarityGate gate,
                           const CausalFlags& causal) {
  weights.validate();
  Tape<S> tape;
  Forward<S> fw(model, tape);
  BatchOptions opt;
  opt.causal = causal;
  opt.build_losses = true;
  opt.weights = weights;
  opt.gate = gate;
  opt.only_k = k;
  auto g = build_streams(fw, {&sample}, opt);
  LossBreakdown out;
  out.total = static_cast<double>(tape.val(g.total)(0, 0));
  out.l_c = static_cast<double>(tape.val(g.l_c)(0, 0));
  out.l_r = static_cast<double>(tape.val(g.l_r)(0, 0));
  out.l_v = static_cast<double>(tape.val(g.l_v)(0, 0));
  out.l_s = static_cast<double>(tape.val(g.l_s)(0, 0));
  out.gate = static_cast<double>(g.gate_mask[0]);
  return out;
}

// ---- training -------------------------------------------------------------------

struct MicroAccuracy {
  int64_t correct = 0, total = 0;
  double value() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

// Per-step learning rate: linear ramp to base over warmup_steps (midpoint
// rule, so the mean rate over the first third of warmup is base/6 exactly),
// constant afterwards.
inline double warmup_lr(int64_t step, int64_t warmup_steps, double base) {
  if (step >= warmup_steps) return base;
  return base * (static_cast<double>(step) + 0.5) / static_cast<double>(warmup_steps);
}

template <typename S>
MicroAccuracy holdout_accuracy(Vgcm<S>& model, const std::vector<PreparedVideo>& holdout,
                               const CausalFlags& causal) {
  MicroAccuracy acc;
  if (holdout.empty()) return acc;
  std::vector<const PreparedVideo*> ptrs;
  ptrs.reserve(holdout.size());
  for (const auto& s : holdout) ptrs.push_back(&s);
  auto preds = predict_relations_batch(model, ptrs, causal);
  for (size_t i = 0; i < holdout.size(); ++i)
    for (size_t k = 0; k < preds[i].size(); ++k) {
      acc.correct += preds[i][k] == holdout[i].relation[k];
      ++acc.total;
    }
  return acc;
}

// Deterministic training loop: fixed per-epoch shuffles, per-step linear
// warmup to learning_rate over warmup_epochs, AdamW updates. One step covers
// a batch of samples; every premise k of a sample contributes to its loss.
template <typename S>
std::vector<EpochStats> train_model(Vgcm<S>& model, const std::vector<PreparedVideo>& train,
                                    const std::vector<PreparedVideo>& holdout,
                                    const TrainConfig& cfg, const LossWeights& weights,
                                    const CausalFlags& causal) {
  cfg.validate();
  weights.validate();
  if (train.empty()) fail(Status::Empty, "no training samples");

  const int steps_per_epoch =
      static_cast<int>((train.size() + static_cast<size_t>(cfg.batch_size) - 1) /
                       static_cast<size_t>(cfg.batch_size));
  const int64_t warmup_steps = static_cast<int64_t>(cfg.warmup_epochs) * steps_per_epoch;
  const int total_epochs = cfg.warm_start_epochs + cfg.epochs;

  AdamW<S> adam(0.9, 0.999, 1e-8, cfg.weight_decay);
  std::vector<EpochStats> stats;
  int64_t global_step = 0;

  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    const bool warm_start = epoch < cfg.warm_start_epochs;
    LossWeights w = weights;
    if (warm_start) {
      w.lambda_r = 0.0;
      w.lambda_s = 0.0;
    }
    Rng shuffle_rng(Rng::derive(cfg.seed, 0x5348 + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double sum_total = 0, sum_c = 0, sum_r = 0, sum_v = 0, sum_s = 0;
    int64_t n_samples = 0, n_decisions = 0;

    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      std::vector<const PreparedVideo*> batch;
      for (size_t j = at; j < std::min(order.size(), at + static_cast<size_t>(cfg.batch_size)); ++j)
        batch.push_back(&train[order[j]]);

      const double lr = warmup_lr(global_step, warmup_steps, cfg.learning_rate);

      Rng dropout_rng(Rng::derive(cfg.seed ^ 0x64726f70ULL, static_cast<uint64_t>(global_step)));
      model.params().zero_grad();
      Tape<S> tape;
      Forward<S> fw(model, tape, /*train_mode=*/true, &dropout_rng);
      BatchOptions opt;
      opt.causal = causal;
      opt.build_losses = true;
      opt.weights = w;
      opt.gate = cfg.similarity_gate;
      auto g = build_streams(fw, batch, opt);
      tape.backward(g.total);
      adam.step(model.params(), lr);
      ++global_step;

      const auto b = static_cast<double>(batch.size());
      sum_total += static_cast<double>(tape.val(g.total)(0, 0)) * b;
      for (Eigen::Index i = 0; i < tape.val(g.l_c).rows(); ++i) {
        sum_c += static_cast<double>(tape.val(g.l_c)(i, 0));
        sum_v += static_cast<double>(tape.val(g.l_v)(i, 0));
      }
      for (Eigen::Index i = 0; i < tape.val(g.l_r).rows(); ++i) {
        sum_r += static_cast<double>(tape.val(g.l_r)(i, 0));
        sum_s += static_cast<double>(tape.val(g.l_s)(i, 0));
      }
      n_samples += static_cast<int64_t>(batch.size());
      n_decisions += static_cast<int64_t>(g.decisions.size());
    }

    EpochStats e;
    e.epoch = epoch + 1;
    e.mean_total = sum_total / static_cast<double>(n_samples);
    e.l_c = sum_c / static_cast<double>(n_samples);
    e.l_v = sum_v / static_cast<double>(n_samples);
    e.l_r = sum_r / static_cast<double>(n_decisions);
    e.l_s = sum_s / static_cast<double>(n_decisions);
    e.holdout_accuracy = holdout_accuracy(model, holdout, causal).value();
    stats.push_back(e);
  }
  return stats;
}

// Tab-separated per-epoch metrics block, one line per epoch.
inline std::string format_metrics_log(const std::vector<EpochStats>& stats) {
  std::string out = "epoch\tmean_total_loss\tL_C\tL_R\tL_V\tL_S\tholdout_accuracy\n";
  char buf[256];
  for (const auto& e : stats) {
    std::snprintf(buf, sizeof(buf), "%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", e.epoch,
                  e.mean_total, e.l_c, e.l_r, e.l_v, e.l_s, e.holdout_accuracy);
    out += buf;
  }
  return out;
}

// ---- gradient check ---------------------------------------------------------

// Central finite differences of the full loss (corrections enabled) against
// tape gradients over a random subset of parameter coordinates. Relative
// error uses max(1, |a| + |n|) as the denominator.
template <typename S>
double gradient_check(Vgcm<S>& model, const PreparedVideo& sample, int k, double epsilon,
                      int coordinates = 200, uint64_t seed = 12345,
                      std::vector<std::string>* warnings = nullptr) {
  static_assert(std::is_same_v<S, double>, "gradient_check requires a double-precision model");
  if (epsilon < 1e-7 || epsilon > 1e-4) {
    double clamped = std::clamp(epsilon, 1e-7, 1e-4);
    if (warnings)
      warnings->push_back("epsilon " + std::to_string(epsilon) + " clamped to " +
                          std::to_string(clamped));
    epsilon = clamped;
  }
  LossWeights weights;
  CausalFlags causal;  // both corrections on
  const SimilarityGate gate = SimilarityGate::NonCausal;

  auto loss_value = [&]() {
    return compute_loss(model, sample, k, weights, gate, causal).total;
  };

  model.params().zero_grad();
  {
    Tape<S> tape;
    Forward<S> fw(model, tape);
    BatchOptions opt;
    opt.causal = causal;
    opt.build_losses = true;
    opt.weights = weights;
    opt.gate = gate;
    opt.only_k = k;
    auto g = build_streams(fw, {&sample}, opt);
    tape.backward(g.total);
  }

  struct Coord {
    size_t entry;
    Eigen::Index flat;
  };
  std::vector<Coord> coords;
  size_t total_scalars = model.params().scalar_count();
  Rng rng(Rng::derive(seed, 0x67726164));
  const size_t want = std::min(static_cast<size_t>(coordinates), total_scalars);
  while (coords.size() < want) {
    size_t flat = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(total_scalars) - 1));
    size_t entry = 0;
    for (; entry < model.params().entries().size(); ++entry) {
      size_t sz = static_cast<size_t>(model.params().entries()[entry].w.size());
      if (flat < sz) break;
      flat -= sz;
    }
    coords.push_back({entry, static_cast<Eigen::Index>(flat)});
  }

  double max_rel = 0.0;
  for (const auto& c : coords) {
    auto& e = model.params().entries()[c.entry];
    const double analytic = e.g.data()[c.flat];
    const double orig = e.w.data()[c.flat];
    e.w.data()[c.flat] = orig + epsilon;
    double up = loss_value();
    e.w.data()[c.flat] = orig - epsilon;
    double down = loss_value();
    e.w.data()[c.flat] = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double rel = std::abs(analytic - numeric) /
                       std::max(1.0, std::abs(analytic) + std::abs(numeric));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace mecd
