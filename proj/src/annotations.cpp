#include "annotations.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mecd {

using ordered_json = nlohmann::ordered_json;

const char* status_name(Status s) {
  switch (s) {
    case Status::Ok: return "OK";
    case Status::Schema: return "E_SCHEMA";
    case Status::Length: return "E_LENGTH";
    case Status::Range: return "E_RANGE";
    case Status::Magic: return "E_MAGIC";
    case Status::Truncated: return "E_TRUNCATED";
    case Status::Index: return "E_INDEX";
    case Status::Config: return "E_CONFIG";
    case Status::Dim: return "E_DIM";
    case Status::Shape: return "E_SHAPE";
    case Status::Size: return "E_SIZE";
    case Status::Param: return "E_PARAM";
    case Status::Empty: return "E_EMPTY";
    case Status::Io: return "E_IO";
    case Status::Usage: return "E_USAGE";
    case Status::Internal: return "E_INTERNAL";
  }
  return "E_INTERNAL";
}

void validate_sample(const VideoSample& s, std::vector<std::string>* warnings) {
  const size_t n = s.sentences.size();
  if (n < 2) fail(Status::Length, s.video_id + ": a video needs at least 2 events");
  if (s.timestamps.size() != n)
    fail(Status::Length, s.video_id + ": timestamps/sentences length mismatch");
  if (s.relation.size() != n - 1)
    fail(Status::Length, s.video_id + ": relation length must be N-1");
  if (!(s.duration > 0.0)) fail(Status::Range, s.video_id + ": duration must be positive");
  for (int r : s.relation)
    if (r != 0 && r != 1) fail(Status::Schema, s.video_id + ": relation entries must be 0 or 1");
  double prev_start = -1.0;
  for (const auto& [start, end] : s.timestamps) {
    if (!(0.0 <= start && start < end && end <= s.duration))
      fail(Status::Range, s.video_id + ": timestamp outside [0, duration] or start >= end");
    if (start < prev_start)
      fail(Status::Range, s.video_id + ": timestamp starts must be non-decreasing");
    prev_start = start;
  }
  if (!s.cot.empty() && s.cot.size() != n - 1)
    fail(Status::Length, s.video_id + ": cot must have N-1 entries when present");
  if (!s.existence.empty() && s.existence.size() != n - 1)
    fail(Status::Length, s.video_id + ": existence must have N-1 entries when present");

  if (warnings) {
    if (n < 4 || n > 11)
      warnings->push_back(s.video_id + ": event count " + std::to_string(n) +
                          " outside the usual [4, 11]");
    int positives = 0;
    for (int r : s.relation) positives += r;
    if (positives < 2)
      warnings->push_back(s.video_id + ": fewer than 2 causal premise events");
  }
}

namespace {

VideoSample sample_from_json(const std::string& video_id, const ordered_json& j) {
  VideoSample s;
  s.video_id = video_id;
  if (!j.is_object()) fail(Status::Schema, video_id + ": annotation must be an object");
  for (const char* key : {"duration", "timestamps", "sentences", "relation"})
    if (!j.contains(key)) fail(Status::Schema, video_id + ": missing key \"" + key + "\"");
  if (!j["duration"].is_number()) fail(Status::Schema, video_id + ": duration must be a number");
  s.duration = j["duration"].get<double>();

  if (!j["timestamps"].is_array()) fail(Status::Schema, video_id + ": timestamps must be an array");
  for (const auto& t : j["timestamps"]) {
    if (!t.is_array() || t.size() != 2 || !t[0].is_number() || !t[1].is_number())
      fail(Status::Schema, video_id + ": each timestamp must be a [start, end] number pair");
    s.timestamps.emplace_back(t[0].get<double>(), t[1].get<double>());
  }
  if (!j["sentences"].is_array()) fail(Status::Schema, video_id + ": sentences must be an array");
  for (const auto& t : j["sentences"]) {
    if (!t.is_string()) fail(Status::Schema, video_id + ": sentences must be strings");
    s.sentences.push_back(t.get<std::string>());
  }
  if (!j["relation"].is_array()) fail(Status::Schema, video_id + ": relation must be an array");
  for (const auto& t : j["relation"]) {
    if (!t.is_number_integer()) fail(Status::Schema, video_id + ": relation entries must be integers");
    s.relation.push_back(t.get<int>());
  }
  for (const char* key : {"cot", "existence"}) {
    if (!j.contains(key)) continue;
    if (!j[key].is_array()) fail(Status::Schema, video_id + std::string(": ") + key + " must be an array");
    auto& dst = std::strcmp(key, "cot") == 0 ? s.cot : s.existence;
    for (const auto& t : j[key]) {
      if (!t.is_string()) fail(Status::Schema, video_id + std::string(": ") + key + " entries must be strings");
      dst.push_back(t.get<std::string>());
    }
  }
  return s;
}

}  // namespace

std::vector<VideoSample> dataset_from_json(const std::string& text,
                                           std::vector<std::string>* warnings) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    fail(Status::Schema, std::string("annotation file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(Status::Schema, "annotation file top level must be an object");
  std::vector<VideoSample> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    VideoSample s = sample_from_json(it.key(), it.value());
    validate_sample(s, warnings);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<VideoSample> parse_dataset(const std::filesystem::path& path,
                                       std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) fail(Status::Io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return dataset_from_json(buf.str(), warnings);
}

std::string dataset_to_json(const std::vector<VideoSample>& samples) {
  ordered_json j = ordered_json::object();
  for (const auto& s : samples) {
    ordered_json v;
    v["duration"] = s.duration;
    v["timestamps"] = ordered_json::array();
    for (const auto& [a, b] : s.timestamps) v["timestamps"].push_back({a, b});
    v["sentences"] = s.sentences;
    v["relation"] = s.relation;
    if (!s.cot.empty()) v["cot"] = s.cot;
    if (!s.existence.empty()) v["existence"] = s.existence;
    j[s.video_id] = std::move(v);
  }
  return j.dump(2);
}

void write_dataset(const std::filesystem::path& path, const std::vector<VideoSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Status::Io, "cannot write " + path.string());
  out << dataset_to_json(samples) << "\n";
}

namespace {
constexpr char kFeatMagic[8] = {'M', 'E', 'C', 'D', 'F', 'E', 'A', 'T'};

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
}  // namespace

FeatureMatrix load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Status::Io, "cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kFeatMagic, 8) != 0)
    fail(Status::Magic, path.string() + ": bad magic bytes");
  uint32_t t = get_u32(in);
  uint32_t d = get_u32(in);
  if (!in) fail(Status::Truncated, path.string() + ": truncated header");
  FeatureMatrix m(t, d);
  static_assert(sizeof(float) == 4);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(4ull * t * d));
  if (in.gcount() != static_cast<std::streamsize>(4ull * t * d))
    fail(Status::Truncated, path.string() + ": payload shorter than T*D values");
  return m;
}

void save_features(const std::filesystem::path& path, const FeatureMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Status::Io, "cannot write " + path.string());
  out.write(kFeatMagic, 8);
  put_u32(out, static_cast<uint32_t>(m.rows()));
  put_u32(out, static_cast<uint32_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(4ull * static_cast<size_t>(m.rows()) *
                                         static_cast<size_t>(m.cols())));
}

std::vector<FeatureMatrix> assign_frames(const FeatureMatrix& features,
                                         const std::vector<std::pair<double, double>>& timestamps,
                                         double duration) {
  const Eigen::Index t = features.rows();
  const Eigen::Index d = features.cols();
  std::vector<std::vector<Eigen::Index>> rows(timestamps.size());
  for (Eigen::Index i = 0; i < t; ++i) {
    double time = static_cast<double>(i) * duration / static_cast<double>(t);
    for (size_t e = 0; e < timestamps.size(); ++e) {
      if (time >= timestamps[e].first && time < timestamps[e].second) {
        rows[e].push_back(i);
        break;  // earliest containing event wins
      }
    }
  }
  std::vector<FeatureMatrix> out;
  out.reserve(timestamps.size());
  for (const auto& idx : rows) {
    FeatureMatrix m(static_cast<Eigen::Index>(idx.size()), d);
    for (size_t r = 0; r < idx.size(); ++r) m.row(static_cast<Eigen::Index>(r)) = features.row(idx[r]);
    out.push_back(std::move(m));
  }
  return out;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(lower(w));
  return words;
}

std::string strip_punct(const std::string& w) {
  size_t a = 0, b = w.size();
  while (a < b && std::ispunct(static_cast<unsigned char>(w[a]))) ++a;
  while (b > a && std::ispunct(static_cast<unsigned char>(w[b - 1]))) --b;
  return w.substr(a, b - a);
}

const std::set<std::string>& determiners() {
  static const std::set<std::string> d = {
      "the", "a",   "an",  "this", "that",  "these", "those", "his", "her",
      "its", "their", "my", "our",  "your",  "some",  "any",   "each", "every",
      "another", "one", "two", "three", "four", "five"};
  return d;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> s = {
      "the", "a",  "an",  "and", "or",  "but", "of",  "to",   "in",   "on",  "at",
      "by",  "is", "are", "was", "were", "be",  "been", "being", "with", "for",
      "from", "as", "it",  "its", "he",  "she", "they", "we",   "you",  "i",
      "his", "her", "their", "then", "there", "here", "up", "down", "out",
      "into", "over", "under", "again", "while", "when", "where", "who",
      "that", "this", "these", "those", "not", "no", "do", "does", "did"};
  return s;
}

}  // namespace

std::vector<std::string> extract_objects(const std::string& caption) {
  const auto words = split_words(caption);
  std::vector<std::string> objects;
  std::set<std::string> seen;
  auto push = [&](const std::string& raw) {
    std::string w = strip_punct(raw);
    if (w.empty() || stopwords().count(w)) return;
    if (seen.insert(w).second) objects.push_back(w);
  };
  for (size_t i = 1; i < words.size(); ++i)
    if (determiners().count(strip_punct(words[i - 1]))) push(words[i]);
  if (objects.empty())
    for (const auto& w : words) push(w);
  return objects;
}

namespace {

std::string existence_fallback(const std::string& caption) {
  const auto objects = extract_objects(caption);
  if (objects.empty()) return "There are objects.";
  std::string out = "There are objects ";
  for (size_t i = 0; i < objects.size(); ++i) {
    if (i) out += ", ";
    out += objects[i];
  }
  out += ".";
  return out;
}

std::string aux_text_impl(int n, int k, AuxKind kind, const std::vector<std::string>& sentences,
                          const std::vector<std::string>& cot,
                          const std::vector<std::string>& existence) {
  if (k < 1 || k > n - 1) fail(Status::Index, "auxiliary_text: k must be in [1, N-1]");
  const auto& provided = kind == AuxKind::Cot ? cot : existence;
  if (!provided.empty() && !provided[static_cast<size_t>(k - 1)].empty())
    return provided[static_cast<size_t>(k - 1)];
  if (kind == AuxKind::Existence)
    return existence_fallback(sentences[static_cast<size_t>(k - 1)]);
  const int prev = k == 1 ? 1 : k - 1;  // 1-based sentence index
  return "Because " + sentences[static_cast<size_t>(prev - 1)] + " therefore " +
         sentences[static_cast<size_t>(n - 1)];
}

}  // namespace

std::string auxiliary_text(const VideoSample& sample, int k, AuxKind kind) {
  return aux_text_impl(sample.n_events(), k, kind, sample.sentences, sample.cot, sample.existence);
}

std::string auxiliary_text(const PreparedVideo& sample, int k, AuxKind kind) {
  return aux_text_impl(sample.n_events(), k, kind, sample.sentences, sample.cot, sample.existence);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, int max_size) {
  std::map<std::string, int64_t> counts;
  for (const auto& t : texts)
    for (const auto& w : split_words(t)) ++counts[w];
  std::vector<std::pair<std::string, int64_t>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  const size_t cap = max_size > kNumReserved ? static_cast<size_t>(max_size - kNumReserved) : 0;
  for (const auto& [w, c] : sorted) {
    if (v.tokens_.size() >= cap) break;
    v.tokens_.push_back(w);
  }
  v.rebuild_index();
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.rebuild_index();
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Status::Io, "cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Status::Io, "cannot write " + path.string());
  for (const auto& t : tokens_) out << t << "\n";
}

void Vocabulary::rebuild_index() {
  index_.clear();
  for (size_t i = 0; i < tokens_.size(); ++i)
    index_.emplace(tokens_[i], kNumReserved + static_cast<int>(i));
  index_.emplace("<pad>", kPad);
  index_.emplace("<unk>", kUnk);
  index_.emplace("<mask>", kMask);
  index_.emplace("<bos>", kBos);
  index_.emplace("<eos>", kEos);
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(int id) const {
  static const std::string reserved[kNumReserved] = {"<pad>", "<unk>", "<mask>", "<bos>", "<eos>"};
  if (id < kNumReserved) return reserved[id];
  return tokens_[static_cast<size_t>(id - kNumReserved)];
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab, int max_len) {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(max_len));
  for (const auto& w : split_words(text)) {
    if (static_cast<int>(out.size()) >= max_len) break;
    out.push_back(vocab.id(w));
  }
  out.resize(static_cast<size_t>(max_len), Vocabulary::kPad);
  return out;
}

PreparedVideo prepare_video(const VideoSample& sample, const FeatureMatrix& features,
                            const Vocabulary& vocab, int max_caption_len) {
  PreparedVideo p;
  p.video_id = sample.video_id;
  p.relation = sample.relation;
  p.sentences = sample.sentences;
  p.cot = sample.cot;
  p.existence = sample.existence;
  auto per_event = assign_frames(features, sample.timestamps, sample.duration);
  for (int i = 0; i < sample.n_events(); ++i) {
    Event e;
    e.video_feature = std::move(per_event[static_cast<size_t>(i)]);
    e.caption_tokens = tokenize(sample.sentences[static_cast<size_t>(i)], vocab, max_caption_len);
    p.events.push_back(std::move(e));
  }
  for (int k = 1; k <= sample.n_events() - 1; ++k) {
    p.cot_tokens.push_back(tokenize(auxiliary_text(sample, k, AuxKind::Cot), vocab, max_caption_len));
    p.existence_tokens.push_back(
        tokenize(auxiliary_text(sample, k, AuxKind::Existence), vocab, max_caption_len));
  }
  return p;
}

MaskedView mask_event(const PreparedVideo& sample, int k) {
  const int n = sample.n_events();
  if (k < 1 || k > n - 1)
    fail(Status::Index, "mask_event: k must be a premise index in [1, N-1], got " +
                            std::to_string(k));
  MaskedView view;
  view.base = &sample;
  view.masked_index = k;
  const Event& orig = sample.events[static_cast<size_t>(k - 1)];
  view.masked_event.video_feature = FeatureMatrix::Zero(orig.video_feature.rows(), orig.video_feature.cols());
  view.masked_event.caption_tokens.assign(orig.caption_tokens.size(), Vocabulary::kMask);
  return view;
}

}  // namespace mecd
