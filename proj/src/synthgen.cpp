#include "synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace mecd {

void SynthConfig::validate() const {
  if (num_videos < 1) fail(Status::Config, "num_videos must be positive");
  if (events_min < 3) fail(Status::Config, "events_min must be at least 3");
  if (events_max < events_min || events_max > 14)
    fail(Status::Config, "events_max must be in [events_min, 14]");
  if (feature_dim < 1 || frames_per_event < 1)
    fail(Status::Config, "feature_dim and frames_per_event must be positive");
  if (causal_rate < 0.0 || causal_rate > 1.0) fail(Status::Config, "causal_rate must be in [0, 1]");
  if (bridge_rate < 0.0 || bridge_rate > 1.0) fail(Status::Config, "bridge_rate must be in [0, 1]");
  if (illusory_rate < 0.0 || illusory_rate > 1.0)
    fail(Status::Config, "illusory_rate must be in [0, 1]");
  if (noise_sigma < 0.0) fail(Status::Config, "noise_sigma must be non-negative");
  if (train_fraction <= 0.0 || train_fraction > 1.0)
    fail(Status::Config, "train_fraction must be in (0, 1]");
  if (causal_rate >= 1.0 && illusory_rate > 0.0)
    fail(Status::Config, "illusory premises need non-causal events; causal_rate=1 leaves none");
  if (causal_rate <= 0.0 && bridge_rate > 0.0)
    fail(Status::Config, "bridge chains need causal events; causal_rate=0 leaves none");
  if (vocab_size < 24) fail(Status::Config, "vocab_size too small for the caption templates");
}

namespace {

struct TokenPools {
  std::vector<std::string> objects, actions;
};

TokenPools make_pools(const SynthConfig& cfg) {
  // 5 reserved ids + 14 function words leave this many content words.
  const int avail = cfg.vocab_size - 5 - 14;
  int n_obj = std::min(32, std::max(2, 2 * avail / 3));
  int n_act = std::min(16, avail - n_obj);
  if (n_act < 1) fail(Status::Config, "vocab_size too small for the caption templates");
  TokenPools p;
  char buf[16];
  for (int i = 0; i < n_obj; ++i) {
    std::snprintf(buf, sizeof(buf), "obj%02d", i);
    p.objects.push_back(buf);
  }
  for (int i = 0; i < n_act; ++i) {
    std::snprintf(buf, sizeof(buf), "act%02d", i);
    p.actions.push_back(buf);
  }
  return p;
}

struct Skeleton {
  int n_events = 0;
  std::vector<int> relation;
  int positives() const {
    int c = 0;
    for (int r : relation) c += r;
    return c;
  }
  bool has_positive_pair() const { return positives() >= 2; }
};

// Weighted slot choice: later premises carry more causal mass, mirroring the
// tendency of causes to sit near the result event. The total count is the
// plain Bernoulli draw, so the marginal causal rate stays at causal_rate.
std::vector<int> place_positives(int k_slots, int count, Rng& rng) {
  std::vector<int> rel(static_cast<size_t>(k_slots), 0);
  std::vector<double> w(static_cast<size_t>(k_slots));
  for (int i = 0; i < k_slots; ++i) w[static_cast<size_t>(i)] = 1.0 + i;
  for (int c = 0; c < count; ++c) {
    double total = 0;
    for (int i = 0; i < k_slots; ++i)
      if (!rel[static_cast<size_t>(i)]) total += w[static_cast<size_t>(i)];
    double pick = rng.uniform() * total;
    for (int i = 0; i < k_slots; ++i) {
      if (rel[static_cast<size_t>(i)]) continue;
      pick -= w[static_cast<size_t>(i)];
      if (pick <= 0) {
        rel[static_cast<size_t>(i)] = 1;
        break;
      }
    }
  }
  return rel;
}

}  // namespace

SynthDataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const TokenPools pools = make_pools(cfg);
  const int n_videos = cfg.num_videos;

  // Pass 1: event counts and relation vectors, one derived stream per video.
  std::vector<Skeleton> skel(static_cast<size_t>(n_videos));
  for (int vi = 0; vi < n_videos; ++vi) {
    Rng rng(Rng::derive(cfg.seed, static_cast<uint64_t>(vi)));
    Skeleton& s = skel[static_cast<size_t>(vi)];
    s.n_events = static_cast<int>(rng.uniform_int(cfg.events_min, cfg.events_max));
    const int k_slots = s.n_events - 1;
    int count = 0;
    for (int i = 0; i < k_slots; ++i) count += rng.bernoulli(cfg.causal_rate);
    s.relation = place_positives(k_slots, count, rng);
  }

  // Pass 2: bridge hosts. Videos whose drawn labels already contain two
  // causal premises are preferred, which keeps the marginal rate intact;
  // labels are upgraded only when bridge_rate demands more hosts than chance
  // provides.
  std::vector<uint8_t> hosts(static_cast<size_t>(n_videos), 0);
  {
    const auto target = static_cast<size_t>(std::llround(cfg.bridge_rate * n_videos));
    std::vector<size_t> eligible, rest;
    for (int vi = 0; vi < n_videos; ++vi)
      (skel[static_cast<size_t>(vi)].has_positive_pair() ? eligible : rest)
          .push_back(static_cast<size_t>(vi));
    Rng grng(Rng::derive(cfg.seed ^ 0x686f7374ULL, 0));
    if (target <= eligible.size()) {
      for (size_t j : grng.sample_without_replacement(eligible.size(), target))
        hosts[eligible[j]] = 1;
    } else {
      for (size_t v : eligible) hosts[v] = 1;
      for (size_t j : grng.sample_without_replacement(rest.size(), target - eligible.size())) {
        const size_t vi = rest[j];
        hosts[vi] = 1;
        Skeleton& s = skel[vi];
        Rng frng(Rng::derive(cfg.seed ^ 0x666f7263ULL, vi));
        while (s.positives() < 2) {
          auto slot = static_cast<size_t>(
              frng.uniform_int(0, static_cast<int64_t>(s.relation.size()) - 1));
          s.relation[slot] = 1;
        }
      }
    }
  }

  SynthDataset data;
  data.config = cfg;
  data.train_count = static_cast<size_t>(std::llround(cfg.train_fraction * n_videos));

  const int frames = cfg.frames_per_event;
  const int dv = cfg.feature_dim;
  const double sigma = cfg.noise_sigma;

  for (int vi = 0; vi < n_videos; ++vi) {
    const Skeleton& s = skel[static_cast<size_t>(vi)];
    const int n = s.n_events;
    const int k_slots = n - 1;
    GeneratedVideo gv;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "v%05d", vi);
    gv.sample.video_id = idbuf;
    gv.sample.relation = s.relation;

    // Bridge pair: adjacent positive pair when one exists, otherwise any
    // positive pair. Stored 1-based.
    if (hosts[static_cast<size_t>(vi)]) {
      Rng brng(Rng::derive(cfg.seed ^ 0x62726467ULL, static_cast<uint64_t>(vi)));
      std::vector<std::pair<int, int>> adjacent, any;
      for (int i = 0; i < k_slots; ++i)
        for (int j = i + 1; j < k_slots; ++j)
          if (s.relation[static_cast<size_t>(i)] && s.relation[static_cast<size_t>(j)]) {
            any.emplace_back(i, j);
            if (j == i + 1) adjacent.emplace_back(i, j);
          }
      const auto& pool = adjacent.empty() ? any : adjacent;
      auto pick =
          pool[static_cast<size_t>(brng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))];
      gv.bridge = {pick.first + 1, pick.second + 1};
    }

    // Illusory traits on non-causal premises: the slot adjacent to the result
    // realises the temporal illusion, any other slot the existence illusion.
    {
      Rng irng(Rng::derive(cfg.seed ^ 0x696c6c75ULL, static_cast<uint64_t>(vi)));
      for (int i = 0; i < k_slots; ++i) {
        if (s.relation[static_cast<size_t>(i)]) continue;
        if (!irng.bernoulli(cfg.illusory_rate)) continue;
        gv.illusory.emplace_back(i + 1, i == k_slots - 1 ? IllusoryKind::Temporal
                                                         : IllusoryKind::Existence);
      }
    }

    // Latent cause vectors; a bridge routes the source latent through its
    // successor so the source reaches the result only indirectly.
    Rng frng(Rng::derive(cfg.seed ^ 0x66656174ULL, static_cast<uint64_t>(vi)));
    std::vector<Eigen::VectorXd> z(static_cast<size_t>(k_slots));
    for (int i = 0; i < k_slots; ++i) {
      z[static_cast<size_t>(i)].resize(dv);
      for (int c = 0; c < dv; ++c) z[static_cast<size_t>(i)](c) = frng.normal();
    }
    if (gv.bridge) {
      const int a = gv.bridge->first - 1, b = gv.bridge->second - 1;
      z[static_cast<size_t>(b)] =
          (z[static_cast<size_t>(b)] + z[static_cast<size_t>(a)]) / std::sqrt(2.0);
    }
    for (int i = 0; i < k_slots; ++i)
      if (s.relation[static_cast<size_t>(i)] && !(gv.bridge && gv.bridge->first - 1 == i))
        gv.direct_causes.push_back(i + 1);
    Eigen::VectorXd result_mean = Eigen::VectorXd::Zero(dv);
    for (int slot : gv.direct_causes) result_mean += z[static_cast<size_t>(slot - 1)];
    if (!gv.direct_causes.empty())
      result_mean /= std::sqrt(static_cast<double>(gv.direct_causes.size()));
    for (int c = 0; c < dv; ++c) result_mean(c) += sigma * frng.normal();

    // Timestamps: one-second frames with a one-second gap between events; a
    // temporal-illusory last premise abuts the result instead.
    const int span = frames + 1;
    const int total_frames = n * span;
    gv.sample.duration = total_frames;
    for (int i = 0; i < n; ++i) {
      double start = static_cast<double>(i * span);
      gv.sample.timestamps.emplace_back(start, start + frames);
    }
    for (const auto& [slot, kind] : gv.illusory)
      if (kind == IllusoryKind::Temporal)
        gv.sample.timestamps[static_cast<size_t>(slot - 1)].second =
            static_cast<double>(slot * span);

    gv.features.resize(total_frames, dv);
    for (int r = 0; r < total_frames; ++r) {
      int owner = -1;
      for (int e = 0; e < n; ++e) {
        if (r >= gv.sample.timestamps[static_cast<size_t>(e)].first &&
            r < gv.sample.timestamps[static_cast<size_t>(e)].second) {
          owner = e;
          break;
        }
      }
      for (int c = 0; c < dv; ++c) {
        double base = 0.0;
        if (owner >= 0 && owner < k_slots) base = z[static_cast<size_t>(owner)](c);
        else if (owner == k_slots) base = result_mean(c);
        gv.features(r, c) = static_cast<float>(base + sigma * frng.normal());
      }
    }

    // Captions: two objects and one action per event; the result caption
    // names the first object of each direct cause plus any illusory-existence
    // objects, so object overlap alone cannot separate causes from illusions.
    Rng crng(Rng::derive(cfg.seed ^ 0x63617074ULL, static_cast<uint64_t>(vi)));
    std::vector<std::array<int, 2>> obj(static_cast<size_t>(n));
    std::vector<int> act(static_cast<size_t>(n));
    const auto n_obj = static_cast<int64_t>(pools.objects.size());
    const auto n_act = static_cast<int64_t>(pools.actions.size());
    for (int i = 0; i < n; ++i) {
      int o1 = static_cast<int>(crng.uniform_int(0, n_obj - 1));
      int o2 = static_cast<int>(crng.uniform_int(0, n_obj - 2));
      if (o2 >= o1) ++o2;
      obj[static_cast<size_t>(i)] = {o1, o2};
      act[static_cast<size_t>(i)] = static_cast<int>(crng.uniform_int(0, n_act - 1));
    }
    for (int i = 0; i < k_slots; ++i) {
      const auto& o = obj[static_cast<size_t>(i)];
      gv.sample.sentences.push_back(
          "the " + pools.objects[static_cast<size_t>(o[0])] + " " +
          pools.actions[static_cast<size_t>(act[static_cast<size_t>(i)])] + " the " +
          pools.objects[static_cast<size_t>(o[1])]);
    }
    {
      std::vector<int> result_objs;
      auto push_obj = [&](int slot) {
        int o = obj[static_cast<size_t>(slot - 1)][0];
        if (std::find(result_objs.begin(), result_objs.end(), o) == result_objs.end())
          result_objs.push_back(o);
      };
      for (int slot : gv.direct_causes) push_obj(slot);
      for (const auto& [slot, kind] : gv.illusory)
        if (kind == IllusoryKind::Existence) push_obj(slot);
      std::string caption =
          "the " + pools.actions[static_cast<size_t>(act[static_cast<size_t>(n - 1)])] + " uses";
      if (result_objs.empty()) {
        caption += " nothing";
      } else {
        for (size_t i = 0; i < result_objs.size(); ++i)
          caption += std::string(i ? " and the " : " the ") +
                     pools.objects[static_cast<size_t>(result_objs[i])];
      }
      gv.sample.sentences.push_back(caption);
    }

    // Auxiliary texts. The chain of thought for premise k narrates whether
    // e_{k-1} leads to the result; existence lines recap the objects only.
    const std::string result_act =
        pools.actions[static_cast<size_t>(act[static_cast<size_t>(n - 1)])];
    for (int k = 1; k <= k_slots; ++k) {
      const int src = (k == 1 ? 1 : k - 1) - 1;  // 0-based premise
      const std::string& so = pools.objects[static_cast<size_t>(obj[static_cast<size_t>(src)][0])];
      const std::string& sa = pools.actions[static_cast<size_t>(act[static_cast<size_t>(src)])];
      if (s.relation[static_cast<size_t>(src)])
        gv.sample.cot.push_back("because the " + so + " " + sa + " it leads to the " + result_act);
      else
        gv.sample.cot.push_back("the " + so + " " + sa + " does not lead to the " + result_act);
      const auto& o = obj[static_cast<size_t>(k - 1)];
      gv.sample.existence.push_back("There are objects " +
                                    pools.objects[static_cast<size_t>(o[0])] + " and " +
                                    pools.objects[static_cast<size_t>(o[1])]);
    }

    // Ground-truth diagram: column N mirrors the relation vector; premise
    // pairs carry only the bridge edge.
    gv.diagram = CausalDiagram(n);
    for (int k = 1; k <= k_slots; ++k)
      gv.diagram.set_edge(k, n, s.relation[static_cast<size_t>(k - 1)]);
    if (gv.bridge) gv.diagram.set_edge(gv.bridge->first, gv.bridge->second, 1);

    data.videos.push_back(std::move(gv));
  }
  return data;
}

void write_synth_dataset(const SynthDataset& data, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "features", ec);
  if (ec) fail(Status::Io, "cannot create " + (out_dir / "features").string());

  auto write_split = [&](bool train) {
    std::vector<VideoSample> anns;
    nlohmann::ordered_json diagrams = nlohmann::ordered_json::object();
    for (size_t i = 0; i < data.videos.size(); ++i) {
      if ((i < data.train_count) != train) continue;
      const auto& gv = data.videos[i];
      anns.push_back(gv.sample);
      diagrams[gv.sample.video_id] = gv.diagram.rows();
    }
    const char* split = train ? "train" : "test";
    write_dataset(out_dir / ("annotations_" + std::string(split) + ".json"), anns);
    std::ofstream d(out_dir / ("diagrams_" + std::string(split) + ".json"), std::ios::binary);
    if (!d) fail(Status::Io, "cannot write diagrams file");
    d << diagrams.dump(2) << "\n";
  };
  write_split(true);
  write_split(false);

  for (const auto& gv : data.videos)
    save_features(out_dir / "features" / (gv.sample.video_id + ".mecdfeat"), gv.features);

  // Vocabulary from the training split's captions and auxiliary texts.
  std::vector<std::string> texts;
  for (size_t i = 0; i < data.train_count && i < data.videos.size(); ++i) {
    const auto& s = data.videos[i].sample;
    texts.insert(texts.end(), s.sentences.begin(), s.sentences.end());
    texts.insert(texts.end(), s.cot.begin(), s.cot.end());
    texts.insert(texts.end(), s.existence.begin(), s.existence.end());
  }
  Vocabulary::build(texts, data.config.vocab_size).save(out_dir / "vocab.txt");

  const SynthConfig& c = data.config;
  std::ofstream cfg(out_dir / "synth_config.txt", std::ios::binary);
  if (!cfg) fail(Status::Io, "cannot write synth_config.txt");
  cfg << "synth.num_videos = " << c.num_videos << "\n"
      << "synth.events_min = " << c.events_min << "\n"
      << "synth.events_max = " << c.events_max << "\n"
      << "synth.feature_dim = " << c.feature_dim << "\n"
      << "synth.frames_per_event = " << c.frames_per_event << "\n"
      << "synth.vocab_size = " << c.vocab_size << "\n"
      << "synth.causal_rate = " << c.causal_rate << "\n"
      << "synth.bridge_rate = " << c.bridge_rate << "\n"
      << "synth.illusory_rate = " << c.illusory_rate << "\n"
      << "synth.noise_sigma = " << c.noise_sigma << "\n"
      << "synth.seed = " << c.seed << "\n"
      << "synth.train_fraction = " << c.train_fraction << "\n";
}

}  // namespace mecd
