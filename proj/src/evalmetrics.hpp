#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "annotations.hpp"
#include "rng.hpp"
#include "status.hpp"

namespace mecd {

// Upper-triangular binary relation matrix over the ordered event pairs of one
// video: edge(i, j) for 1 <= i < j <= n_events. Causes precede effects, so
// there are no self or backward edges.
class CausalDiagram {
 public:
  CausalDiagram() = default;
  explicit CausalDiagram(int n_events)
      : n_(n_events), bits_(static_cast<size_t>(n_events) * (n_events - 1) / 2, 0) {}

  int n_events() const { return n_; }
  int pair_count() const { return n_ * (n_ - 1) / 2; }

  int edge(int i, int j) const { return bits_[index(i, j)]; }
  void set_edge(int i, int j, int v) { bits_[index(i, j)] = static_cast<uint8_t>(v != 0); }

  // Row i (1-based) lists edges to j = i+1 .. n; n-1 rows total.
  std::vector<std::vector<int>> rows() const;
  static CausalDiagram from_rows(const std::vector<std::vector<int>>& rows);

  bool operator==(const CausalDiagram& o) const = default;

 private:
  size_t index(int i, int j) const {
    if (!(1 <= i && i < j && j <= n_)) fail(Status::Index, "diagram pair out of range");
    const size_t oi = static_cast<size_t>(i - 1) * static_cast<size_t>(2 * n_ - i) / 2;
    return oi + static_cast<size_t>(j - i - 1);
  }

  int n_ = 0;
  std::vector<uint8_t> bits_;
};

// Structural Hamming distance: number of ordered pairs on which the two
// diagrams disagree.
int shd(const CausalDiagram& pred, const CausalDiagram& gt);

struct MicroCounts {
  int64_t correct = 0;
  int64_t total = 0;
  double value() const {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
};

// Micro-averaged accuracy over all (sample, k) decisions.
MicroCounts accuracy_counts(const std::vector<std::vector<int>>& preds,
                            const std::vector<std::vector<int>>& gts);
double accuracy(const std::vector<std::vector<int>>& preds,
                const std::vector<std::vector<int>>& gts);

enum class BaselineMode { AllCausal, AllNonCausal, Random };

// Constant or Bernoulli(p) relation vector for a video with n_premises
// premise events; Random consumes the rng.
std::vector<int> baseline_predict(BaselineMode mode, int n_premises, double p, Rng& rng);
CausalDiagram baseline_diagram(BaselineMode mode, int n_events, double p, Rng& rng);

// ---- dataset perturbations ---------------------------------------------------

enum class PerturbMode { FlipLabels, MaskWords, MaskFrames };

struct PerturbedDataset {
  std::vector<VideoSample> samples;
  std::map<std::string, FeatureMatrix> features;
  std::vector<std::string> warnings;
};

// flip_labels(ratio): floor(ratio*|videos|) videos get exactly one uniformly
// chosen relation entry flipped. mask_words(n): n random caption words per
// event replaced by "<mask>". mask_frames(n): n random frame rows per event
// zeroed. Counts exceeding an event's length clamp with a warning. Inputs are
// copied, never modified.
PerturbedDataset perturb_dataset(const std::vector<VideoSample>& samples,
                                 const std::map<std::string, FeatureMatrix>& features,
                                 PerturbMode mode, double param, uint64_t seed);

}  // namespace mecd
