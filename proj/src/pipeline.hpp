#pragma once

#include <filesystem>
#include <memory>

#include "dataset.hpp"
#include "runconfig.hpp"
#include "synthgen.hpp"
#include "training.hpp"

namespace mecd {

SynthConfig synth_config_from(const RunConfig& cfg);
ModelConfig model_config_from(const RunConfig& cfg);  // vocab/feature dims unset
TrainConfig train_config_from(const RunConfig& cfg);
LossWeights loss_weights_from(const RunConfig& cfg);
CausalFlags causal_flags_from(const RunConfig& cfg);

// A trained checkpoint bundle: network, vocabulary and the inference-time
// correction flags it was trained with.
struct TrainedModel {
  ModelConfig model_config;
  Vocabulary vocab;
  CausalFlags causal;
  SimilarityGate gate = SimilarityGate::NonCausal;
  uint64_t train_seed = 0;
  std::unique_ptr<Vgcm<float>> net;
};

void save_trained(const std::filesystem::path& path, const TrainedModel& tm);
TrainedModel load_trained(const std::filesystem::path& path);

// Complete causal diagram by truncation: column j comes from relation
// predictions on the first j events with event j as the result; j = N is the
// full sample itself.
template <typename S>
CausalDiagram build_diagram(Vgcm<S>& model, const PreparedVideo& sample, const Vocabulary& vocab,
                            const CausalFlags& causal) {
  const int n = sample.n_events();
  CausalDiagram d(n);
  for (int j = 2; j <= n; ++j) {
    std::vector<int> col;
    if (j == n) {
      col = predict_relations(model, sample, causal);
    } else {
      PreparedVideo t = truncate_prepared(sample, j, vocab, model.config().max_caption_len);
      col = predict_relations(model, t, causal);
    }
    for (int i = 1; i < j; ++i) d.set_edge(i, j, col[static_cast<size_t>(i - 1)]);
  }
  return d;
}

// Subcommand bodies shared by the C API; every run echoes its effective
// configuration into out_dir/config.effective.
void run_synth(const RunConfig& cfg, const std::filesystem::path& out_dir);
void run_train(const RunConfig& cfg, const std::filesystem::path& data_dir,
               const std::filesystem::path& out_dir);
void run_eval(const RunConfig& cfg, const std::filesystem::path& data_dir,
              const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir);
void run_diagram(const RunConfig& cfg, const std::filesystem::path& data_dir,
                 const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir);
void run_baseline(const RunConfig& cfg, const std::filesystem::path& data_dir,
                  const std::filesystem::path& out_dir);
void run_perturb(const RunConfig& cfg, const std::filesystem::path& data_dir,
                 const std::filesystem::path& out_dir);
double run_gradcheck(const RunConfig& cfg);

}  // namespace mecd
