#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "annotations.hpp"
#include "evalmetrics.hpp"

namespace mecd {

// A dataset directory:
//   annotations_train.json / annotations_test.json
//   features/<video_id>.mecdfeat
//   diagrams_train.json / diagrams_test.json   (optional ground truth)
//   vocab.txt                                  (optional)
struct LoadedSplit {
  std::vector<VideoSample> samples;
  std::map<std::string, FeatureMatrix> features;
  std::map<std::string, CausalDiagram> diagrams;  // empty when absent
  bool has_vocab_file = false;
  Vocabulary vocab;  // from vocab.txt when present, otherwise empty
  std::vector<std::string> warnings;
};

LoadedSplit load_split(const std::filesystem::path& dir, const std::string& split);

// vocab.txt when the directory ships one, otherwise built from this split's
// captions plus auxiliary texts (annotation-provided or fallback).
Vocabulary resolve_vocabulary(const LoadedSplit& split, int max_size);

std::vector<PreparedVideo> prepare_split(const LoadedSplit& split, const Vocabulary& vocab,
                                         int max_caption_len);

// First j events as a standalone sample with event j as the new result.
// Relation labels are cleared (unknown for truncations); chains of thought
// are re-derived against the new result sentence.
PreparedVideo truncate_prepared(const PreparedVideo& p, int j, const Vocabulary& vocab,
                                int max_caption_len);

// Writes a split back out in the directory layout above (used by perturb).
void write_split(const std::filesystem::path& dir, const std::string& split,
                 const std::vector<VideoSample>& samples,
                 const std::map<std::string, FeatureMatrix>& features,
                 const std::map<std::string, CausalDiagram>& diagrams);

}  // namespace mecd
