#include "dataset.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mecd {

LoadedSplit load_split(const std::filesystem::path& dir, const std::string& split) {
  namespace fs = std::filesystem;
  LoadedSplit out;
  const fs::path ann = dir / ("annotations_" + split + ".json");
  if (!fs::exists(ann)) fail(Status::Io, "missing " + ann.string());
  out.samples = parse_dataset(ann, &out.warnings);

  for (const auto& s : out.samples) {
    const fs::path f = dir / "features" / (s.video_id + ".mecdfeat");
    if (!fs::exists(f)) fail(Status::Io, "missing feature file " + f.string());
    out.features.emplace(s.video_id, load_features(f));
  }

  const fs::path diag = dir / ("diagrams_" + split + ".json");
  if (fs::exists(diag)) {
    std::ifstream in(diag);
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(buf.str());
    } catch (const std::exception& e) {
      fail(Status::Schema, diag.string() + ": " + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      std::vector<std::vector<int>> rows;
      for (const auto& row : it.value()) rows.push_back(row.get<std::vector<int>>());
      out.diagrams.emplace(it.key(), CausalDiagram::from_rows(rows));
    }
  }

  const fs::path vocab = dir / "vocab.txt";
  if (fs::exists(vocab)) {
    out.has_vocab_file = true;
    out.vocab = Vocabulary::load(vocab);
  }
  return out;
}

Vocabulary resolve_vocabulary(const LoadedSplit& split, int max_size) {
  if (split.has_vocab_file) return split.vocab;
  std::vector<std::string> texts;
  for (const auto& s : split.samples) {
    texts.insert(texts.end(), s.sentences.begin(), s.sentences.end());
    for (int k = 1; k <= s.n_events() - 1; ++k) {
      texts.push_back(auxiliary_text(s, k, AuxKind::Cot));
      texts.push_back(auxiliary_text(s, k, AuxKind::Existence));
    }
  }
  return Vocabulary::build(texts, max_size);
}

std::vector<PreparedVideo> prepare_split(const LoadedSplit& split, const Vocabulary& vocab,
                                         int max_caption_len) {
  std::vector<PreparedVideo> out;
  out.reserve(split.samples.size());
  int feature_dim = -1;
  for (const auto& s : split.samples) {
    const auto& f = split.features.at(s.video_id);
    if (feature_dim < 0) feature_dim = static_cast<int>(f.cols());
    if (static_cast<int>(f.cols()) != feature_dim)
      fail(Status::Dim, s.video_id + ": feature width differs from the rest of the dataset");
    out.push_back(prepare_video(s, f, vocab, max_caption_len));
  }
  return out;
}

PreparedVideo truncate_prepared(const PreparedVideo& p, int j, const Vocabulary& vocab,
                                int max_caption_len) {
  if (j < 2 || j > p.n_events()) fail(Status::Index, "truncation length must be in [2, N]");
  PreparedVideo t;
  t.video_id = p.video_id + ":" + std::to_string(j);
  t.events.assign(p.events.begin(), p.events.begin() + j);
  t.sentences.assign(p.sentences.begin(), p.sentences.begin() + j);
  t.relation.assign(static_cast<size_t>(j - 1), 0);
  if (!p.existence.empty())
    t.existence.assign(p.existence.begin(), p.existence.begin() + (j - 1));
  // Chains of thought narrate a path to the result event, which truncation
  // replaces; re-derive them from the fallback template.
  VideoSample shim;
  shim.sentences = t.sentences;
  shim.existence = t.existence;
  for (int k = 1; k <= j - 1; ++k) {
    t.cot.push_back(auxiliary_text(shim, k, AuxKind::Cot));
    t.cot_tokens.push_back(tokenize(t.cot.back(), vocab, max_caption_len));
    t.existence_tokens.push_back(
        tokenize(auxiliary_text(shim, k, AuxKind::Existence), vocab, max_caption_len));
  }
  return t;
}

void write_split(const std::filesystem::path& dir, const std::string& split,
                 const std::vector<VideoSample>& samples,
                 const std::map<std::string, FeatureMatrix>& features,
                 const std::map<std::string, CausalDiagram>& diagrams) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "features", ec);
  if (ec) fail(Status::Io, "cannot create " + (dir / "features").string());
  write_dataset(dir / ("annotations_" + split + ".json"), samples);
  for (const auto& s : samples) {
    auto it = features.find(s.video_id);
    if (it == features.end()) fail(Status::Io, "no features for " + s.video_id);
    save_features(dir / "features" / (s.video_id + ".mecdfeat"), it->second);
  }
  if (!diagrams.empty()) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& s : samples) {
      auto it = diagrams.find(s.video_id);
      if (it != diagrams.end()) j[s.video_id] = it->second.rows();
    }
    std::ofstream out(dir / ("diagrams_" + split + ".json"), std::ios::binary);
    if (!out) fail(Status::Io, "cannot write diagrams file");
    out << j.dump(2) << "\n";
  }
}

}  // namespace mecd
