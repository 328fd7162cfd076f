#pragma once

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "annotations.hpp"
#include "evalmetrics.hpp"

namespace mecd {

struct SynthConfig {
  int num_videos = 1000;
  int events_min = 5;
  int events_max = 5;
  int feature_dim = 32;
  int frames_per_event = 8;
  int vocab_size = 64;
  double causal_rate = 0.45;   // marginal probability that a premise is causal
  double bridge_rate = 0.5;    // fraction of videos hosting an a->b->result chain
  double illusory_rate = 0.5;  // chance that a non-causal premise gets an illusory trait
  double noise_sigma = 0.1;
  uint64_t seed = 7;
  double train_fraction = 0.8;

  void validate() const;
};

enum class IllusoryKind { Existence, Temporal };

struct GeneratedVideo {
  VideoSample sample;
  FeatureMatrix features;   // whole-video frames, cut by timestamps
  CausalDiagram diagram;    // full ground truth over all ordered pairs
  // structural metadata for audits
  std::optional<std::pair<int, int>> bridge;          // 1-based premise pair (a, b)
  std::vector<std::pair<int, IllusoryKind>> illusory; // 1-based premise slots
  std::vector<int> direct_causes;                     // 1-based slots mixed into the result
};

struct SynthDataset {
  SynthConfig config;
  std::vector<GeneratedVideo> videos;  // first train_count are the train split
  size_t train_count = 0;

  std::vector<const GeneratedVideo*> split(bool train) const {
    std::vector<const GeneratedVideo*> out;
    for (size_t i = 0; i < videos.size(); ++i)
      if ((i < train_count) == train) out.push_back(&videos[i]);
    return out;
  }
};

// Deterministic generator: same config + seed give byte-identical outputs.
// Causal structure: the result event's feature mean is a normalized sum of
// its direct causes' latent vectors plus Gaussian noise. Bridge videos route
// one cause's latent through its successor; illusory premises share object
// words with the result caption or sit temporally adjacent to it.
SynthDataset generate_dataset(const SynthConfig& config);

// Writes annotations_{train,test}.json, diagrams_{train,test}.json,
// features/<id>.mecdfeat, vocab.txt and synth_config.txt under out_dir.
void write_synth_dataset(const SynthDataset& data, const std::filesystem::path& out_dir);

}  // namespace mecd
