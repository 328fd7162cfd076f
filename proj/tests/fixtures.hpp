// Shared builders for model-level tests.
#pragma once

#include <string>
#include <vector>

#include "annotations.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace fixtures {

inline mecd::Vocabulary small_vocab() {
  std::vector<std::string> words;
  for (int i = 0; i < 40; ++i) words.push_back("w" + std::to_string(i));
  return mecd::Vocabulary::from_tokens(words);
}

inline mecd::ModelConfig tiny_config(const mecd::Vocabulary& vocab, int d_model = 8,
                                     int heads = 2, int feature_dim = 4) {
  mecd::ModelConfig mc;
  mc.d_model = d_model;
  mc.attention_heads = heads;
  mc.encoder_layers = 2;
  mc.decoder_layers = 2;
  mc.ffn_dim = 2 * d_model;
  mc.vocab_size = vocab.size();
  mc.feature_dim = feature_dim;
  mc.max_caption_len = 12;
  mc.max_events = 8;
  mc.dropout = 0.0;
  return mc;
}

inline std::string random_text(mecd::Rng& rng, int words) {
  std::string t;
  for (int i = 0; i < words; ++i) t += "w" + std::to_string(rng.uniform_int(0, 39)) + " ";
  return t;
}

inline mecd::PreparedVideo random_video(const mecd::Vocabulary& vocab,
                                        const mecd::ModelConfig& mc, int n_events,
                                        uint64_t seed, int frames = 3) {
  mecd::Rng rng(seed);
  mecd::PreparedVideo pv;
  pv.video_id = "fixture" + std::to_string(seed);
  for (int i = 0; i < n_events; ++i) {
    mecd::Event e;
    e.video_feature.resize(frames, mc.feature_dim);
    for (Eigen::Index j = 0; j < e.video_feature.size(); ++j)
      e.video_feature.data()[j] = static_cast<float>(rng.normal());
    e.caption_tokens = mecd::tokenize(random_text(rng, 5), vocab, mc.max_caption_len);
    pv.events.push_back(std::move(e));
    pv.sentences.push_back("sentence " + std::to_string(i));
  }
  for (int k = 0; k + 1 < n_events; ++k) {
    pv.relation.push_back(rng.bernoulli(0.5) ? 1 : 0);
    pv.cot_tokens.push_back(mecd::tokenize(random_text(rng, 6), vocab, mc.max_caption_len));
    pv.existence_tokens.push_back(mecd::tokenize(random_text(rng, 3), vocab, mc.max_caption_len));
  }
  return pv;
}

}  // namespace fixtures
