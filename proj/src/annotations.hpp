#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "status.hpp"

namespace mecd {

using FeatureMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One annotated video: N chronologically ordered events, a binary relation
// vector over the N-1 premise events (1 = causal with the last event), and
// optional per-premise auxiliary texts.
struct VideoSample {
  std::string video_id;
  double duration = 0.0;
  std::vector<std::pair<double, double>> timestamps;
  std::vector<std::string> sentences;
  std::vector<int> relation;
  std::vector<std::string> cot;        // empty, or N-1 entries
  std::vector<std::string> existence;  // empty, or N-1 entries

  int n_events() const { return static_cast<int>(sentences.size()); }
};

// Hard-invariant check; throws Schema/Length/Range. Soft dataset-statistics
// checks (N outside [4,11], fewer than 2 causal premises) go to `warnings`
// when given.
void validate_sample(const VideoSample& s, std::vector<std::string>* warnings = nullptr);

std::vector<VideoSample> parse_dataset(const std::filesystem::path& path,
                                       std::vector<std::string>* warnings = nullptr);
void write_dataset(const std::filesystem::path& path, const std::vector<VideoSample>& samples);
std::string dataset_to_json(const std::vector<VideoSample>& samples);
std::vector<VideoSample> dataset_from_json(const std::string& text,
                                           std::vector<std::string>* warnings = nullptr);

// MECDFEAT container: "MECDFEAT" + u32le T + u32le D + T*D f32le, row-major.
FeatureMatrix load_features(const std::filesystem::path& path);
void save_features(const std::filesystem::path& path, const FeatureMatrix& m);

// Frame i of T lives at time i*duration/T and belongs to the earliest event
// whose [start, end) interval contains it; frames outside every interval are
// dropped. Events may legally end up with zero frames.
std::vector<FeatureMatrix> assign_frames(const FeatureMatrix& features,
                                         const std::vector<std::pair<double, double>>& timestamps,
                                         double duration);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMask = 2;
  static constexpr int kBos = 3;
  static constexpr int kEos = 4;
  static constexpr int kNumReserved = 5;

  Vocabulary() = default;

  // Word-frequency order over whitespace-split lowercased words, ties broken
  // lexicographically; total size (reserved ids included) capped at max_size.
  static Vocabulary build(const std::vector<std::string>& texts, int max_size = 8192);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  static Vocabulary from_tokens(std::vector<std::string> tokens);
  const std::vector<std::string>& tokens() const { return tokens_; }

  int size() const { return kNumReserved + static_cast<int>(tokens_.size()); }
  int id(const std::string& word) const;
  const std::string& word(int id) const;

 private:
  std::vector<std::string> tokens_;  // id = kNumReserved + index
  std::unordered_map<std::string, int> index_;
  void rebuild_index();
};

// Lowercase, whitespace-split, map through the vocabulary (reserved names
// like "<mask>" resolve to their reserved ids), truncate to max_len, then
// pad with kPad to exactly max_len.
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab, int max_len);

struct Event {
  FeatureMatrix video_feature;      // [frames x D_v]
  std::vector<int> caption_tokens;  // exactly max_caption_len ids
};

// A sample with features cut per event and captions tokenized; the form the
// model consumes. Annotation fields are copied so a PreparedVideo is
// self-contained.
struct PreparedVideo {
  std::string video_id;
  std::vector<Event> events;
  std::vector<int> relation;
  std::vector<std::string> sentences;
  std::vector<std::string> cot;
  std::vector<std::string> existence;
  // Tokenized auxiliary texts per premise (annotation or fallback), N-1 rows.
  std::vector<std::vector<int>> cot_tokens;
  std::vector<std::vector<int>> existence_tokens;
  int n_events() const { return static_cast<int>(events.size()); }
};

PreparedVideo prepare_video(const VideoSample& sample, const FeatureMatrix& features,
                            const Vocabulary& vocab, int max_caption_len);

// View of `base` with premise event k (1-based) replaced by a masked event:
// all-zero visual features of the original shape and <mask> tokens for the
// caption. The base is never modified.
struct MaskedView {
  const PreparedVideo* base = nullptr;
  int masked_index = 0;  // 1-based premise index
  Event masked_event;

  const Event& event(int i) const {  // i is 0-based
    return i == masked_index - 1 ? masked_event : base->events[static_cast<size_t>(i)];
  }
};

MaskedView mask_event(const PreparedVideo& sample, int k);

enum class AuxKind { Cot, Existence };

// Annotation text when present, otherwise the rule-based fallback:
//   existence: "There are objects X, Y." over the caption's noun-like words
//   cot:       "Because <sentence_{k-1}> therefore <sentence_N>" (k=1 uses
//              sentence_1)
std::string auxiliary_text(const VideoSample& sample, int k, AuxKind kind);
std::string auxiliary_text(const PreparedVideo& sample, int k, AuxKind kind);

// Noun-like words of a caption: words that follow a determiner or possessive,
// lowercased and stripped of punctuation; falls back to all non-stopwords
// when the caption has no determiners.
std::vector<std::string> extract_objects(const std::string& caption);

}  // namespace mecd
