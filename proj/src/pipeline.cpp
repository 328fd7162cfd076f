#include "pipeline.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace mecd {

using ordered_json = nlohmann::ordered_json;

SynthConfig synth_config_from(const RunConfig& cfg) {
  SynthConfig s;
  s.num_videos = cfg.get_int("synth.num_videos");
  s.events_min = cfg.get_int("synth.events_min");
  s.events_max = cfg.get_int("synth.events_max");
  s.feature_dim = cfg.get_int("synth.feature_dim");
  s.frames_per_event = cfg.get_int("synth.frames_per_event");
  s.vocab_size = cfg.get_int("synth.vocab_size");
  s.causal_rate = cfg.get_double("synth.causal_rate");
  s.bridge_rate = cfg.get_double("synth.bridge_rate");
  s.illusory_rate = cfg.get_double("synth.illusory_rate");
  s.noise_sigma = cfg.get_double("synth.noise_sigma");
  s.seed = cfg.get_u64("synth.seed");
  s.train_fraction = cfg.get_double("synth.train_fraction");
  return s;
}

ModelConfig model_config_from(const RunConfig& cfg) {
  ModelConfig m;
  m.d_model = cfg.get_int("model.d_model");
  m.encoder_layers = cfg.get_int("model.encoder_layers");
  m.decoder_layers = cfg.get_int("model.decoder_layers");
  m.attention_heads = cfg.get_int("model.attention_heads");
  m.ffn_dim = cfg.get_int("model.ffn_dim");
  m.dropout = cfg.get_double("model.dropout");
  m.max_caption_len = cfg.get_int("model.max_caption_len");
  m.max_events = cfg.get_int("model.max_events");
  return m;
}

TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.get_int("train.epochs");
  t.learning_rate = cfg.get_double("train.learning_rate");
  t.warmup_epochs = cfg.get_int("train.warmup_epochs");
  t.seed = cfg.get_u64("train.seed");
  t.seeds = cfg.get_u64_list("train.seeds");
  t.batch_size = cfg.get_int("train.batch_size");
  const std::string& gate = cfg.get("train.similarity_gate");
  if (gate == "noncausal") t.similarity_gate = SimilarityGate::NonCausal;
  else if (gate == "causal") t.similarity_gate = SimilarityGate::Causal;
  else fail(Status::Usage, "train.similarity_gate expects causal|noncausal");
  t.weight_decay = cfg.get_double("train.weight_decay");
  t.warm_start_epochs = cfg.get_int("train.warm_start_epochs");
  return t;
}

LossWeights loss_weights_from(const RunConfig& cfg) {
  LossWeights w;
  w.lambda_c = cfg.get_double("loss.lambda_C");
  w.lambda_r = cfg.get_double("loss.lambda_R");
  w.lambda_v = cfg.get_double("loss.lambda_V");
  w.lambda_s = cfg.get_double("loss.lambda_S");
  return w;
}

CausalFlags causal_flags_from(const RunConfig& cfg) {
  CausalFlags f;
  f.front_door = cfg.get_bool("causal.front_door");
  f.counterfactual = cfg.get_bool("causal.counterfactual");
  return f;
}

namespace {

void echo_config(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(Status::Io, "cannot create " + out_dir.string());
  cfg.write_file(out_dir / "config.effective");
}

ordered_json model_config_json(const ModelConfig& m) {
  ordered_json j;
  j["d_model"] = m.d_model;
  j["encoder_layers"] = m.encoder_layers;
  j["decoder_layers"] = m.decoder_layers;
  j["attention_heads"] = m.attention_heads;
  j["ffn_dim"] = m.ffn_dim;
  j["dropout"] = m.dropout;
  j["max_caption_len"] = m.max_caption_len;
  j["max_events"] = m.max_events;
  j["vocab_size"] = m.vocab_size;
  j["feature_dim"] = m.feature_dim;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.d_model = j.at("d_model").get<int>();
  m.encoder_layers = j.at("encoder_layers").get<int>();
  m.decoder_layers = j.at("decoder_layers").get<int>();
  m.attention_heads = j.at("attention_heads").get<int>();
  m.ffn_dim = j.at("ffn_dim").get<int>();
  m.dropout = j.at("dropout").get<double>();
  m.max_caption_len = j.at("max_caption_len").get<int>();
  m.max_events = j.at("max_events").get<int>();
  m.vocab_size = j.at("vocab_size").get<int>();
  m.feature_dim = j.at("feature_dim").get<int>();
  return m;
}

}  // namespace

void save_trained(const std::filesystem::path& path, const TrainedModel& tm) {
  ordered_json meta;
  meta["format"] = "vgcm";
  meta["model"] = model_config_json(tm.model_config);
  meta["vocab"] = tm.vocab.tokens();
  meta["causal"]["front_door"] = tm.causal.front_door;
  meta["causal"]["counterfactual"] = tm.causal.counterfactual;
  meta["similarity_gate"] = tm.gate == SimilarityGate::NonCausal ? "noncausal" : "causal";
  meta["train_seed"] = tm.train_seed;
  save_checkpoint(path, tm.net->params(), meta.dump());
}

TrainedModel load_trained(const std::filesystem::path& path) {
  RawCheckpoint raw = load_checkpoint_raw(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(raw.meta_json);
  } catch (const std::exception& e) {
    fail(Status::Schema, path.string() + ": bad checkpoint metadata: " + e.what());
  }
  TrainedModel tm;
  tm.model_config = model_config_from_json(meta.at("model"));
  tm.vocab = Vocabulary::from_tokens(meta.at("vocab").get<std::vector<std::string>>());
  tm.causal.front_door = meta.at("causal").at("front_door").get<bool>();
  tm.causal.counterfactual = meta.at("causal").at("counterfactual").get<bool>();
  tm.gate = meta.at("similarity_gate").get<std::string>() == "causal" ? SimilarityGate::Causal
                                                                      : SimilarityGate::NonCausal;
  tm.train_seed = meta.at("train_seed").get<uint64_t>();
  tm.net = std::make_unique<Vgcm<float>>(tm.model_config, tm.train_seed);
  restore_params(tm.net->params(), raw);
  return tm;
}

void run_synth(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  SynthDataset data = generate_dataset(synth_config_from(cfg));
  write_synth_dataset(data, out_dir);
  echo_config(cfg, out_dir);
}

void run_train(const RunConfig& cfg, const std::filesystem::path& data_dir,
               const std::filesystem::path& out_dir) {
  LoadedSplit train = load_split(data_dir, "train");
  LoadedSplit test = load_split(data_dir, "test");
  for (const auto& w : train.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

  Vocabulary vocab = resolve_vocabulary(train, cfg.get_int("model.vocab_size"));
  ModelConfig mc = model_config_from(cfg);
  mc.vocab_size = vocab.size();
  auto prepared_train = prepare_split(train, vocab, mc.max_caption_len);
  auto prepared_test = prepare_split(test, vocab, mc.max_caption_len);
  if (prepared_train.empty()) fail(Status::Empty, "no training samples");
  mc.feature_dim = static_cast<int>(prepared_train[0].events[0].video_feature.cols());

  TrainConfig tc = train_config_from(cfg);
  LossWeights lw = loss_weights_from(cfg);
  CausalFlags flags = causal_flags_from(cfg);

  TrainedModel tm;
  tm.model_config = mc;
  tm.vocab = vocab;
  tm.causal = flags;
  tm.gate = tc.similarity_gate;
  tm.train_seed = tc.seed;
  tm.net = std::make_unique<Vgcm<float>>(mc, tc.seed);

  auto stats = train_model(*tm.net, prepared_train, prepared_test, tc, lw, flags);

  echo_config(cfg, out_dir);
  save_trained(out_dir / "checkpoint.vgcm", tm);
  std::ofstream log(out_dir / "metrics.tsv", std::ios::binary);
  if (!log) fail(Status::Io, "cannot write metrics.tsv");
  log << format_metrics_log(stats);
}

namespace {

// Shared by eval and baseline reports.
void write_report(const std::filesystem::path& out_dir, const std::vector<VideoSample>& samples,
                  const std::vector<std::vector<int>>& preds,
                  const std::vector<int>& per_video_shd, bool have_shd) {
  std::vector<std::vector<int>> gts;
  gts.reserve(samples.size());
  for (const auto& s : samples) gts.push_back(s.relation);
  MicroCounts acc = accuracy_counts(preds, gts);

  ordered_json report;
  report["accuracy"] = acc.value();
  if (have_shd) {
    double total = 0;
    for (int v : per_video_shd) total += v;
    report["ave_shd"] = per_video_shd.empty() ? 0.0 : total / static_cast<double>(per_video_shd.size());
  } else {
    report["ave_shd"] = nullptr;
  }
  report["decisions"] = acc.total;
  report["per_video"] = ordered_json::array();
  for (size_t i = 0; i < samples.size(); ++i) {
    ordered_json v;
    v["video_id"] = samples[i].video_id;
    v["prediction"] = preds[i];
    v["relation"] = samples[i].relation;
    if (have_shd) v["shd"] = per_video_shd[i];
    else v["shd"] = nullptr;
    report["per_video"].push_back(std::move(v));
  }
  std::ofstream out(out_dir / "report.json", std::ios::binary);
  if (!out) fail(Status::Io, "cannot write report.json");
  out << report.dump(2) << "\n";
}

}  // namespace

void run_eval(const RunConfig& cfg, const std::filesystem::path& data_dir,
              const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir) {
  TrainedModel tm = load_trained(checkpoint);
  LoadedSplit split = load_split(data_dir, cfg.get("eval.split"));
  auto prepared = prepare_split(split, tm.vocab, tm.model_config.max_caption_len);

  std::vector<const PreparedVideo*> ptrs;
  for (const auto& p : prepared) ptrs.push_back(&p);
  auto preds = predict_relations_batch(*tm.net, ptrs, tm.causal);

  const bool have_shd = !split.diagrams.empty();
  std::vector<int> per_video_shd;
  if (have_shd) {
    for (const auto& p : prepared) {
      CausalDiagram pred = build_diagram(*tm.net, p, tm.vocab, tm.causal);
      per_video_shd.push_back(shd(pred, split.diagrams.at(p.video_id)));
    }
  }
  echo_config(cfg, out_dir);
  write_report(out_dir, split.samples, preds, per_video_shd, have_shd);
}

void run_diagram(const RunConfig& cfg, const std::filesystem::path& data_dir,
                 const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir) {
  TrainedModel tm = load_trained(checkpoint);
  LoadedSplit split = load_split(data_dir, cfg.get("eval.split"));
  auto prepared = prepare_split(split, tm.vocab, tm.model_config.max_caption_len);

  echo_config(cfg, out_dir);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "dot", ec);
  if (ec) fail(Status::Io, "cannot create " + (out_dir / "dot").string());

  ordered_json all = ordered_json::object();
  for (const auto& p : prepared) {
    CausalDiagram d = build_diagram(*tm.net, p, tm.vocab, tm.causal);
    all[p.video_id] = d.rows();
    std::ofstream dot(out_dir / "dot" / (p.video_id + ".dot"), std::ios::binary);
    if (!dot) fail(Status::Io, "cannot write dot file for " + p.video_id);
    dot << "digraph \"" << p.video_id << "\" {\n";
    for (int i = 1; i <= d.n_events(); ++i) dot << "  e" << i << ";\n";
    for (int i = 1; i < d.n_events(); ++i)
      for (int j = i + 1; j <= d.n_events(); ++j)
        if (d.edge(i, j)) dot << "  e" << i << " -> e" << j << ";\n";
    dot << "}\n";
  }
  std::ofstream js(out_dir / "diagrams.json", std::ios::binary);
  if (!js) fail(Status::Io, "cannot write diagrams.json");
  js << all.dump(2) << "\n";
}

void run_baseline(const RunConfig& cfg, const std::filesystem::path& data_dir,
                  const std::filesystem::path& out_dir) {
  const std::string& mode_s = cfg.get("baseline.mode");
  BaselineMode mode;
  if (mode_s == "all_causal") mode = BaselineMode::AllCausal;
  else if (mode_s == "all_noncausal") mode = BaselineMode::AllNonCausal;
  else if (mode_s == "random") mode = BaselineMode::Random;
  else fail(Status::Usage, "baseline.mode expects all_causal|all_noncausal|random");
  const double p = cfg.get_double("baseline.p");

  LoadedSplit split = load_split(data_dir, cfg.get("eval.split"));
  Rng rng(cfg.get_u64("baseline.seed"));
  std::vector<std::vector<int>> preds;
  const bool have_shd = !split.diagrams.empty();
  std::vector<int> per_video_shd;
  for (const auto& s : split.samples) {
    preds.push_back(baseline_predict(mode, s.n_events() - 1, p, rng));
    if (have_shd) {
      CausalDiagram d = baseline_diagram(mode, s.n_events(), p, rng);
      per_video_shd.push_back(shd(d, split.diagrams.at(s.video_id)));
    }
  }
  echo_config(cfg, out_dir);
  write_report(out_dir, split.samples, preds, per_video_shd, have_shd);
}

void run_perturb(const RunConfig& cfg, const std::filesystem::path& data_dir,
                 const std::filesystem::path& out_dir) {
  const std::string& mode_s = cfg.get("perturb.mode");
  PerturbMode mode;
  if (mode_s == "flip_labels") mode = PerturbMode::FlipLabels;
  else if (mode_s == "mask_words") mode = PerturbMode::MaskWords;
  else if (mode_s == "mask_frames") mode = PerturbMode::MaskFrames;
  else fail(Status::Usage, "perturb.mode expects flip_labels|mask_words|mask_frames");
  const double param = cfg.get_double("perturb.param");
  const uint64_t seed = cfg.get_u64("perturb.seed");
  const std::string& target = cfg.get("perturb.split");

  echo_config(cfg, out_dir);
  for (const std::string split : {"train", "test"}) {
    if (!std::filesystem::exists(data_dir / ("annotations_" + split + ".json"))) continue;
    LoadedSplit s = load_split(data_dir, split);
    if (split == target || target == "both") {
      PerturbedDataset pd = perturb_dataset(s.samples, s.features, mode, param, seed);
      for (const auto& w : pd.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      write_split(out_dir, split, pd.samples, pd.features, s.diagrams);
    } else {
      write_split(out_dir, split, s.samples, s.features, s.diagrams);
    }
  }
  if (std::filesystem::exists(data_dir / "vocab.txt"))
    std::filesystem::copy_file(data_dir / "vocab.txt", out_dir / "vocab.txt",
                               std::filesystem::copy_options::overwrite_existing);
}

double run_gradcheck(const RunConfig& cfg) {
  // A small synthetic sample drives the check; the model dimensions come from
  // the active configuration.
  SynthConfig sc = synth_config_from(cfg);
  sc.num_videos = 2;
  sc.train_fraction = 1.0;
  sc.feature_dim = std::min(sc.feature_dim, 8);
  sc.frames_per_event = std::min(sc.frames_per_event, 4);
  SynthDataset data = generate_dataset(sc);

  std::vector<std::string> texts;
  for (const auto& gv : data.videos) {
    const auto& s = gv.sample;
    texts.insert(texts.end(), s.sentences.begin(), s.sentences.end());
    texts.insert(texts.end(), s.cot.begin(), s.cot.end());
    texts.insert(texts.end(), s.existence.begin(), s.existence.end());
  }
  Vocabulary vocab = Vocabulary::build(texts, sc.vocab_size);

  ModelConfig mc = model_config_from(cfg);
  mc.dropout = 0.0;
  mc.vocab_size = vocab.size();
  mc.feature_dim = sc.feature_dim;
  Vgcm<double> model(mc, cfg.get_u64("train.seed"));

  PreparedVideo pv = prepare_video(data.videos[0].sample, data.videos[0].features, vocab,
                                   mc.max_caption_len);
  const int k = std::min(2, pv.n_events() - 1);
  std::vector<std::string> warnings;
  double err = gradient_check(model, pv, k, cfg.get_double("gradcheck.epsilon"),
                              cfg.get_int("gradcheck.coordinates"), cfg.get_u64("train.seed"),
                              &warnings);
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return err;
}

}  // namespace mecd
