#include "evalmetrics.hpp"

#include <algorithm>
#include <sstream>

namespace mecd {

std::vector<std::vector<int>> CausalDiagram::rows() const {
  std::vector<std::vector<int>> out;
  for (int i = 1; i < n_; ++i) {
    std::vector<int> row;
    for (int j = i + 1; j <= n_; ++j) row.push_back(edge(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

CausalDiagram CausalDiagram::from_rows(const std::vector<std::vector<int>>& rows) {
  const int n = static_cast<int>(rows.size()) + 1;
  CausalDiagram d(n);
  for (int i = 1; i < n; ++i) {
    if (static_cast<int>(rows[static_cast<size_t>(i - 1)].size()) != n - i)
      fail(Status::Size, "diagram row " + std::to_string(i) + " has wrong length");
    for (int j = i + 1; j <= n; ++j)
      d.set_edge(i, j, rows[static_cast<size_t>(i - 1)][static_cast<size_t>(j - i - 1)]);
  }
  return d;
}

int shd(const CausalDiagram& pred, const CausalDiagram& gt) {
  if (pred.n_events() != gt.n_events())
    fail(Status::Size, "shd: diagrams have different event counts");
  int count = 0;
  for (int i = 1; i < pred.n_events(); ++i)
    for (int j = i + 1; j <= pred.n_events(); ++j) count += pred.edge(i, j) != gt.edge(i, j);
  return count;
}

MicroCounts accuracy_counts(const std::vector<std::vector<int>>& preds,
                            const std::vector<std::vector<int>>& gts) {
  if (preds.size() != gts.size()) fail(Status::Size, "accuracy: sample count mismatch");
  MicroCounts c;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].size() != gts[i].size())
      fail(Status::Size, "accuracy: relation length mismatch at sample " + std::to_string(i));
    for (size_t k = 0; k < preds[i].size(); ++k) {
      c.correct += preds[i][k] == gts[i][k];
      ++c.total;
    }
  }
  return c;
}

double accuracy(const std::vector<std::vector<int>>& preds,
                const std::vector<std::vector<int>>& gts) {
  return accuracy_counts(preds, gts).value();
}

std::vector<int> baseline_predict(BaselineMode mode, int n_premises, double p, Rng& rng) {
  std::vector<int> out(static_cast<size_t>(n_premises), 0);
  switch (mode) {
    case BaselineMode::AllCausal:
      std::fill(out.begin(), out.end(), 1);
      break;
    case BaselineMode::AllNonCausal:
      break;
    case BaselineMode::Random:
      for (auto& v : out) v = rng.bernoulli(p) ? 1 : 0;
      break;
  }
  return out;
}

CausalDiagram baseline_diagram(BaselineMode mode, int n_events, double p, Rng& rng) {
  CausalDiagram d(n_events);
  for (int i = 1; i < n_events; ++i)
    for (int j = i + 1; j <= n_events; ++j) {
      int v = mode == BaselineMode::AllCausal          ? 1
              : mode == BaselineMode::AllNonCausal ? 0
                                                       : (rng.bernoulli(p) ? 1 : 0);
      d.set_edge(i, j, v);
    }
  return d;
}

namespace {

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += " ";
    out += words[i];
  }
  return out;
}

}  // namespace

PerturbedDataset perturb_dataset(const std::vector<VideoSample>& samples,
                                 const std::map<std::string, FeatureMatrix>& features,
                                 PerturbMode mode, double param, uint64_t seed) {
  PerturbedDataset out;
  out.samples = samples;
  out.features = features;
  Rng rng(Rng::derive(seed, 0x70657274));

  if (mode == PerturbMode::FlipLabels) {
    if (param < 0.0 || param > 1.0) fail(Status::Param, "flip_labels ratio must be in [0, 1]");
    const size_t m = static_cast<size_t>(param * static_cast<double>(samples.size()));
    auto chosen = rng.sample_without_replacement(samples.size(), m);
    for (size_t vi : chosen) {
      auto& rel = out.samples[vi].relation;
      size_t k = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(rel.size()) - 1));
      rel[k] = 1 - rel[k];
    }
    return out;
  }

  const int n_per_event = static_cast<int>(param);
  if (n_per_event < 0) fail(Status::Param, "mask count must be non-negative");

  for (size_t vi = 0; vi < out.samples.size(); ++vi) {
    VideoSample& s = out.samples[vi];
    Rng vrng(Rng::derive(seed ^ 0x6d61736bULL, vi));
    if (mode == PerturbMode::MaskWords) {
      for (auto& sentence : s.sentences) {
        auto words = words_of(sentence);
        int n = n_per_event;
        if (n > static_cast<int>(words.size())) {
          out.warnings.push_back(s.video_id + ": mask_words count " + std::to_string(n) +
                                 " exceeds caption length " + std::to_string(words.size()) +
                                 ", clamped");
          n = static_cast<int>(words.size());
        }
        auto idx = vrng.sample_without_replacement(words.size(), static_cast<size_t>(n));
        for (size_t w : idx) words[w] = "<mask>";
        sentence = join_words(words);
      }
    } else {  // MaskFrames
      auto it = out.features.find(s.video_id);
      if (it == out.features.end()) continue;
      FeatureMatrix& f = it->second;
      const Eigen::Index t = f.rows();
      // Same frame-to-event assignment as assign_frames (earliest event wins).
      std::vector<std::vector<Eigen::Index>> per_event(s.timestamps.size());
      for (Eigen::Index r = 0; r < t; ++r) {
        double time = static_cast<double>(r) * s.duration / static_cast<double>(t);
        for (size_t e = 0; e < s.timestamps.size(); ++e) {
          if (time >= s.timestamps[e].first && time < s.timestamps[e].second) {
            per_event[e].push_back(r);
            break;
          }
        }
      }
      for (const auto& rows : per_event) {
        int n = n_per_event;
        if (n > static_cast<int>(rows.size())) {
          out.warnings.push_back(s.video_id + ": mask_frames count " + std::to_string(n) +
                                 " exceeds event frame count " + std::to_string(rows.size()) +
                                 ", clamped");
          n = static_cast<int>(rows.size());
        }
        auto idx = vrng.sample_without_replacement(rows.size(), static_cast<size_t>(n));
        for (size_t r : idx) f.row(rows[r]).setZero();
      }
    }
  }
  return out;
}

}  // namespace mecd
