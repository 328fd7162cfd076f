#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "annotations.hpp"
#include "rng.hpp"

using namespace mecd;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  fs::path p = fs::temp_directory_path() / name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p;
}

const char* kValidJson = R"({
  "vid1": {
    "duration": 40.0,
    "timestamps": [[0, 10], [10, 20], [20, 30], [30, 40]],
    "sentences": ["a man walks in", "he picks up a ball", "he throws the ball", "the ball hits a window"],
    "relation": [1, 0, 1]
  }
})";

VideoSample make_sample(int n) {
  VideoSample s;
  s.video_id = "s";
  s.duration = 10.0 * n;
  for (int i = 0; i < n; ++i) {
    s.timestamps.emplace_back(10.0 * i, 10.0 * (i + 1));
    s.sentences.push_back("the thing happens " + std::to_string(i));
  }
  s.relation.assign(static_cast<size_t>(n - 1), 0);
  return s;
}

}  // namespace

TEST_CASE("parse_dataset accepts a valid file and keeps key order") {
  auto p = temp_file("ann_ok.json", kValidJson);
  auto samples = parse_dataset(p);
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].video_id == "vid1");
  CHECK(samples[0].n_events() == 4);
  CHECK(samples[0].relation == std::vector<int>{1, 0, 1});
}

TEST_CASE("parse_dataset error taxonomy") {
  SUBCASE("missing relation is E_SCHEMA") {
    auto p = temp_file("ann_noschema.json", R"({"v": {
      "duration": 10.0, "timestamps": [[0,5],[5,10]], "sentences": ["a", "b"]}})");
    try {
      parse_dataset(p);
      FAIL("expected E_SCHEMA");
    } catch (const MecdError& e) {
      CHECK(e.status() == Status::Schema);
    }
  }
  SUBCASE("relation length mismatch is E_LENGTH") {
    auto p = temp_file("ann_len.json", R"({"v": {
      "duration": 50.0,
      "timestamps": [[0,10],[10,20],[20,30],[30,40],[40,50]],
      "sentences": ["a","b","c","d","e"],
      "relation": [1,0,1]}})");
    try {
      parse_dataset(p);
      FAIL("expected E_LENGTH");
    } catch (const MecdError& e) {
      CHECK(e.status() == Status::Length);
    }
  }
  SUBCASE("timestamp outside duration is E_RANGE") {
    auto p = temp_file("ann_range.json", R"({"v": {
      "duration": 10.0, "timestamps": [[0,5],[5,15]], "sentences": ["a","b"],
      "relation": [1]}})");
    try {
      parse_dataset(p);
      FAIL("expected E_RANGE");
    } catch (const MecdError& e) {
      CHECK(e.status() == Status::Range);
    }
  }
}

TEST_CASE("validation warnings for unusual but legal samples") {
  VideoSample s = make_sample(3);  // below the usual [4, 11]
  std::vector<std::string> warnings;
  validate_sample(s, &warnings);
  REQUIRE(warnings.size() == 2);  // event count + fewer than 2 causal premises
}

TEST_CASE("dataset round-trips through serialization") {
  auto p = temp_file("ann_rt.json", kValidJson);
  auto samples = parse_dataset(p);
  samples[0].cot = {"c1", "c2", "c3"};
  samples[0].existence = {"e1", "e2", "e3"};
  auto q = fs::temp_directory_path() / "ann_rt2.json";
  write_dataset(q, samples);
  auto again = parse_dataset(q);
  REQUIRE(again.size() == samples.size());
  CHECK(again[0].video_id == samples[0].video_id);
  CHECK(again[0].duration == samples[0].duration);
  CHECK(again[0].timestamps == samples[0].timestamps);
  CHECK(again[0].sentences == samples[0].sentences);
  CHECK(again[0].relation == samples[0].relation);
  CHECK(again[0].cot == samples[0].cot);
  CHECK(again[0].existence == samples[0].existence);
}

TEST_CASE("feature files: header, payload, bit-exact round trip") {
  fs::path p = fs::temp_directory_path() / "f.mecdfeat";
  SUBCASE("row-major load") {
    FeatureMatrix m(3, 2);
    m << 1.f, 2.f, 3.f, 4.f, 5.f, 6.f;
    save_features(p, m);
    FeatureMatrix r = load_features(p);
    REQUIRE(r.rows() == 3);
    REQUIRE(r.cols() == 2);
    CHECK(r(0, 1) == 2.f);
    CHECK(r(2, 0) == 5.f);
    CHECK(std::memcmp(r.data(), m.data(), sizeof(float) * 6) == 0);
  }
  SUBCASE("bad magic is E_MAGIC") {
    temp_file("f.mecdfeat", "NOTMECD!\x03\x00\x00\x00\x02\x00\x00\x00");
    try {
      load_features(p);
      FAIL("expected E_MAGIC");
    } catch (const MecdError& e) {
      CHECK(e.status() == Status::Magic);
    }
  }
  SUBCASE("short payload is E_TRUNCATED") {
    std::string content("MECDFEAT", 8);
    const char t[4] = {3, 0, 0, 0}, d[4] = {2, 0, 0, 0};
    content.append(t, 4);
    content.append(d, 4);
    content.append(5 * 4, '\0');  // five of six values
    temp_file("f.mecdfeat", content);
    try {
      load_features(p);
      FAIL("expected E_TRUNCATED");
    } catch (const MecdError& e) {
      CHECK(e.status() == Status::Truncated);
    }
  }
}

TEST_CASE("assign_frames follows the frame-time model") {
  FeatureMatrix f(20, 3);
  for (int i = 0; i < 20; ++i)
    for (int c = 0; c < 3; ++c) f(i, c) = static_cast<float>(i);

  SUBCASE("exact partition") {
    auto ev = assign_frames(f, {{0, 10}, {10, 20}}, 20.0);
    REQUIRE(ev.size() == 2);
    CHECK(ev[0].rows() == 10);
    CHECK(ev[1].rows() == 10);
    CHECK(ev[0](0, 0) == 0.f);
    CHECK(ev[1](0, 0) == 10.f);
    CHECK(ev[1](9, 0) == 19.f);
  }
  SUBCASE("overlap goes to the earliest event") {
    auto ev = assign_frames(f, {{0, 15}, {10, 20}}, 20.0);
    CHECK(ev[0].rows() == 15);  // frames 0..14
    CHECK(ev[1].rows() == 5);   // frames 15..19
    CHECK(ev[1](0, 0) == 15.f);
  }
  SUBCASE("frames outside every interval are dropped") {
    auto ev = assign_frames(f, {{5, 10}}, 20.0);
    REQUIRE(ev.size() == 1);
    CHECK(ev[0].rows() == 5);
    CHECK(ev[0](0, 0) == 5.f);
    CHECK(ev[0](4, 0) == 9.f);
  }
  SUBCASE("an event may receive zero frames") {
    auto ev = assign_frames(f, {{0.2, 0.9}, {1, 20}}, 20.0);
    CHECK(ev[0].rows() == 0);
    CHECK(ev[0].cols() == 3);
  }
  SUBCASE("property: no frame is assigned twice") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
      double duration = 30.0;
      std::vector<std::pair<double, double>> ts;
      double start = 0;
      for (int e = 0; e < 4; ++e) {
        double s0 = start + rng.uniform() * 3.0;
        double e0 = s0 + 0.5 + rng.uniform() * 8.0;
        if (s0 >= duration) break;
        ts.emplace_back(s0, std::min(e0, duration));
        start = s0;  // starts non-decreasing, overlaps allowed
      }
      FeatureMatrix g(30, 1);
      for (int i = 0; i < 30; ++i) g(i, 0) = static_cast<float>(i);
      auto ev = assign_frames(g, ts, duration);
      std::vector<int> seen(30, 0);
      for (const auto& m : ev)
        for (Eigen::Index r = 0; r < m.rows(); ++r) seen[static_cast<size_t>(m(r, 0))]++;
      for (int c : seen) CHECK(c <= 1);
    }
  }
}

TEST_CASE("vocabulary build order and reserved ids") {
  auto v = Vocabulary::build({"b a a", "c b a"}, 100);
  // counts: a=3 b=2 c=1
  CHECK(v.id("a") == 5);
  CHECK(v.id("b") == 6);
  CHECK(v.id("c") == 7);
  CHECK(v.id("zzz") == Vocabulary::kUnk);
  CHECK(v.id("<mask>") == Vocabulary::kMask);
  CHECK(v.id("<pad>") == Vocabulary::kPad);

  SUBCASE("frequency ties break lexicographically") {
    auto w = Vocabulary::build({"beta alpha"}, 100);
    CHECK(w.id("alpha") == 5);
    CHECK(w.id("beta") == 6);
  }
  SUBCASE("size cap counts reserved ids") {
    auto w = Vocabulary::build({"a a a b b c d e f"}, 7);
    CHECK(w.size() == 7);  // 5 reserved + 2 tokens
    CHECK(w.id("a") == 5);
    CHECK(w.id("b") == 6);
    CHECK(w.id("c") == Vocabulary::kUnk);
  }
  SUBCASE("file round trip") {
    fs::path p = fs::temp_directory_path() / "vocab_rt.txt";
    v.save(p);
    auto w = Vocabulary::load(p);
    CHECK(w.tokens() == v.tokens());
  }
}

TEST_CASE("tokenize: lowercase, truncation, padding") {
  auto v = Vocabulary::build({"a dog runs"}, 100);
  SUBCASE("empty input is all padding") {
    auto t = tokenize("", v, 50);
    REQUIRE(t.size() == 50);
    for (int id : t) CHECK(id == Vocabulary::kPad);
  }
  SUBCASE("long captions truncate to max_len") {
    std::string text;
    for (int i = 0; i < 60; ++i) text += "dog ";
    auto t = tokenize(text, v, 50);
    REQUIRE(t.size() == 50);
    for (int id : t) CHECK(id == v.id("dog"));
  }
  SUBCASE("known words plus padding") {
    auto t = tokenize("A dog runs", v, 50);
    REQUIRE(t.size() == 50);
    CHECK(t[0] == v.id("a"));
    CHECK(t[1] == v.id("dog"));
    CHECK(t[2] == v.id("runs"));
    for (size_t i = 3; i < 50; ++i) CHECK(t[i] == Vocabulary::kPad);
  }
  SUBCASE("property: output length is always max_len") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
      std::string text;
      int words = static_cast<int>(rng.uniform_int(0, 80));
      for (int i = 0; i < words; ++i) text += "w" + std::to_string(rng.uniform_int(0, 9)) + " ";
      CHECK(tokenize(text, v, 17).size() == 17);
    }
  }
}

namespace {

PreparedVideo prepared_fixture(int n, const Vocabulary& vocab) {
  VideoSample s = make_sample(n);
  FeatureMatrix f(10 * n, 4);
  Rng rng(3);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = static_cast<float>(rng.normal());
  return prepare_video(s, f, vocab, 50);
}

}  // namespace

TEST_CASE("mask_event semantics") {
  auto vocab = Vocabulary::build({"the thing happens 0 1 2 3 4"}, 100);
  PreparedVideo pv = prepared_fixture(5, vocab);

  SUBCASE("masked slot is zero features and mask tokens, others untouched") {
    MaskedView mv = mask_event(pv, 2);
    CHECK(mv.masked_event.video_feature.isZero(0.0f));
    CHECK(mv.masked_event.video_feature.rows() == pv.events[1].video_feature.rows());
    for (int id : mv.masked_event.caption_tokens) CHECK(id == Vocabulary::kMask);
    for (int i = 0; i < 5; ++i) {
      if (i == 1) continue;
      CHECK(&mv.event(i) == &pv.events[static_cast<size_t>(i)]);
    }
    double before = 0;
    for (int i = 0; i < 5; ++i)
      if (i != 1) before += pv.events[static_cast<size_t>(i)].video_feature.cwiseAbs().sum();
    double after = 0;
    for (int i = 0; i < 5; ++i)
      if (i != 1) after += mv.event(i).video_feature.cwiseAbs().sum();
    CHECK(before == after);
  }
  SUBCASE("result event can never be masked") {
    try {
      mask_event(pv, 5);
      FAIL("expected E_INDEX");
    } catch (const MecdError& e) {
      CHECK(e.status() == Status::Index);
    }
    CHECK_THROWS_AS(mask_event(pv, 0), MecdError);
    CHECK_THROWS_AS(mask_event(pv, 6), MecdError);
  }
  SUBCASE("masking is idempotent") {
    MaskedView once = mask_event(pv, 3);
    PreparedVideo copy = pv;
    copy.events[2] = once.masked_event;
    MaskedView twice = mask_event(copy, 3);
    CHECK(twice.masked_event.video_feature == once.masked_event.video_feature);
    CHECK(twice.masked_event.caption_tokens == once.masked_event.caption_tokens);
  }
}

TEST_CASE("auxiliary_text: pass-through and fallbacks") {
  VideoSample s = make_sample(4);
  s.sentences = {"the dog enters the room", "the dog sees a ball", "the dog grabs the ball",
                 "the dog runs towards the camera"};

  SUBCASE("provided existence is returned verbatim") {
    s.existence = {"There are a knife and a towel.", "", ""};
    CHECK(auxiliary_text(s, 1, AuxKind::Existence) == "There are a knife and a towel.");
  }
  SUBCASE("existence fallback extracts noun-like words") {
    CHECK(auxiliary_text(s, 1, AuxKind::Existence) == "There are objects dog, room.");
    CHECK(auxiliary_text(s, 2, AuxKind::Existence) == "There are objects dog, ball.");
  }
  SUBCASE("cot fallback uses the predecessor template") {
    CHECK(auxiliary_text(s, 3, AuxKind::Cot) ==
          "Because the dog sees a ball therefore the dog runs towards the camera");
    // k = 1 uses sentence_1
    CHECK(auxiliary_text(s, 1, AuxKind::Cot) ==
          "Because the dog enters the room therefore the dog runs towards the camera");
  }
  SUBCASE("out-of-range premise index") {
    CHECK_THROWS_AS(auxiliary_text(s, 4, AuxKind::Cot), MecdError);
    CHECK_THROWS_AS(auxiliary_text(s, 0, AuxKind::Existence), MecdError);
  }
}

TEST_CASE("prepare_video tokenizes auxiliary texts for every premise") {
  auto vocab = Vocabulary::build({"the thing happens"}, 100);
  PreparedVideo pv = prepared_fixture(5, vocab);
  CHECK(pv.cot_tokens.size() == 4);
  CHECK(pv.existence_tokens.size() == 4);
  for (const auto& row : pv.cot_tokens) CHECK(row.size() == 50);
}
