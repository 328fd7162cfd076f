#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "annotations.hpp"
#include "params.hpp"
#include "rng.hpp"
#include "status.hpp"
#include "tape.hpp"

namespace mecd {

struct ModelConfig {
  int d_model = 64;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int attention_heads = 4;
  int ffn_dim = 128;
  int vocab_size = 0;  // filled from the vocabulary
  int max_caption_len = 50;
  int max_events = 16;
  double dropout = 0.1;
  int feature_dim = 0;  // D_v, filled from the dataset

  void validate() const {
    if (d_model <= 0 || attention_heads <= 0 || d_model % attention_heads != 0)
      fail(Status::Config, "d_model must be a positive multiple of attention_heads");
    if (vocab_size <= 0 || feature_dim <= 0)
      fail(Status::Config, "vocab_size and feature_dim must be set before building the model");
    if (encoder_layers < 1 || decoder_layers < 1 || ffn_dim < 1 || max_caption_len < 1 ||
        max_events < 2)
      fail(Status::Config, "model dimensions must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail(Status::Config, "dropout must be in [0, 1)");
  }
};

// Video Granger Causality Model: event-level two-stream transformer with a
// result-query slot. Holds configuration plus named parameters; all forward
// passes go through the Forward builder below.
template <typename S>
class Vgcm {
 public:
  Vgcm(ModelConfig cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(Rng::derive(init_seed, 0x7061726d));
    auto normal_init = [&](Mat<S>& w, double sd) {
      for (Eigen::Index i = 0; i < w.size(); ++i)
        w.data()[i] = static_cast<S>(rng.normal() * sd);
    };
    auto xavier_init = [&](Mat<S>& w) {
      double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      for (Eigen::Index i = 0; i < w.size(); ++i)
        w.data()[i] = static_cast<S>((rng.uniform() * 2.0 - 1.0) * a);
    };
    const int d = cfg_.d_model;
    normal_init(store_.add("embed.tok", cfg_.vocab_size, d, false), 0.02);
    normal_init(store_.add("embed.pos", cfg_.max_events + 1, d, false), 0.02);
    normal_init(store_.add("embed.query", 1, d, false), 0.02);
    xavier_init(store_.add("event.proj.w", cfg_.feature_dim + d, d, true));
    store_.add("event.proj.b", 1, d, false);
    auto add_attn = [&](const std::string& p) {
      for (const char* m : {"wq", "wk", "wv", "wo"}) xavier_init(store_.add(p + "." + m, d, d, true));
      for (const char* m : {"bq", "bk", "bv", "bo"}) store_.add(p + "." + m, 1, d, false);
    };
    auto add_ln = [&](const std::string& p) {
      store_.add(p + ".g", 1, d, false).setOnes();
      store_.add(p + ".b", 1, d, false);
    };
    auto add_block = [&](const std::string& p) {
      add_ln(p + ".ln1");
      add_attn(p + ".attn");
      add_ln(p + ".ln2");
      xavier_init(store_.add(p + ".ffn.w1", d, cfg_.ffn_dim, true));
      store_.add(p + ".ffn.b1", 1, cfg_.ffn_dim, false);
      xavier_init(store_.add(p + ".ffn.w2", cfg_.ffn_dim, d, true));
      store_.add(p + ".ffn.b2", 1, d, false);
    };
    for (int i = 0; i < cfg_.encoder_layers; ++i) add_block("enc." + std::to_string(i));
    add_ln("enc.final");
    for (int i = 0; i < cfg_.decoder_layers; ++i) add_block("dec." + std::to_string(i));
    add_ln("dec.final");
    add_attn("rel.cross");
    add_attn("rel.self");
    xavier_init(store_.add("rel.gr.w", 2 * d + 1, 2, true));
    store_.add("rel.gr.b", 1, 2, false);
    xavier_init(store_.add("fd.gdo.w", 3 * d, d, true));
    store_.add("fd.gdo.b", 1, d, false);
    normal_init(store_.add("cap.pos", cfg_.max_caption_len, d, false), 0.02);
    xavier_init(store_.add("cap.w", d, cfg_.vocab_size, true));
    store_.add("cap.b", 1, cfg_.vocab_size, false);
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterStore<S>& params() { return store_; }
  const ParameterStore<S>& params() const { return store_; }

 private:
  ModelConfig cfg_;
  ParameterStore<S> store_;
};

// One forward pass under construction: caches parameter leaves per tape and
// provides the model's building blocks. In train mode, dropout masks are
// drawn from the supplied RNG; in eval mode passes are deterministic.
template <typename S>
class Forward {
 public:
  Forward(Vgcm<S>& model, Tape<S>& tape, bool train_mode = false, Rng* dropout_rng = nullptr)
      : model_(model), tape_(tape), train_(train_mode), rng_(dropout_rng) {}

  Tape<S>& tape() { return tape_; }
  const ModelConfig& config() const { return model_.config(); }

  Value param(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    auto& e = model_.params().at(name);
    Value v = tape_.leaf(&e.w, &e.g);
    leaves_.emplace(name, v);
    return v;
  }

  // ---- event encoding ------------------------------------------------------

  // Embeds a list of events into [n x d]: mean-pooled frame features and
  // mean-pooled caption embeddings, concatenated then projected. Events with
  // zero frames contribute a zero visual token.
  Value encode_events(const std::vector<const Event*>& events) {
    const int dv = config().feature_dim;
    Mat<S> vis = Mat<S>::Zero(static_cast<Eigen::Index>(events.size()), dv);
    auto ids = std::make_shared<std::vector<std::vector<int>>>();
    ids->reserve(events.size());
    for (size_t i = 0; i < events.size(); ++i) {
      const Event& e = *events[i];
      if (e.video_feature.cols() != dv)
        fail(Status::Dim, "event feature width " + std::to_string(e.video_feature.cols()) +
                              " does not match model feature_dim " + std::to_string(dv));
      if (e.video_feature.rows() > 0)
        vis.row(static_cast<Eigen::Index>(i)) =
            e.video_feature.colwise().mean().template cast<S>();
      ids->push_back(e.caption_tokens);
    }
    Value cap = tape_.embed_mean(param("embed.tok"), ids);
    Value x = tape_.concat_cols({tape_.input(std::move(vis)), cap});
    return tape_.add_row(tape_.matmul(x, param("event.proj.w")), param("event.proj.b"));
  }

  // Mean-pooled caption-encoder embedding of pre-tokenized texts -> [n x d].
  Value encode_texts(std::vector<std::vector<int>> token_rows) {
    auto ids = std::make_shared<std::vector<std::vector<int>>>(std::move(token_rows));
    return tape_.embed_mean(param("embed.tok"), ids);
  }

  // ---- transformer stacks --------------------------------------------------

  // Packs sequences given as row-selections over `rows` (a [R x d] value),
  // appending the shared result-query token to each and adding positional
  // embeddings. Returns the packed [sum(L_s+1) x d] value and its segments.
  struct Packed {
    Value x;
    Segments segments;
    std::vector<int> query_rows;  // packed row index of each sequence's query slot
  };

  Packed pack_with_query(Value rows, const std::vector<std::vector<int>>& row_sets) {
    const int query_row = static_cast<int>(tape_.val(rows).rows());
    Value with_q = tape_.concat_rows({rows, param("embed.query")});
    std::vector<int> sel, pos;
    Segments segs{0};
    Packed p;
    for (const auto& set : row_sets) {
      if (static_cast<int>(set.size()) + 1 > config().max_events + 1)
        fail(Status::Config, "sequence longer than model max_events");
      for (size_t i = 0; i < set.size(); ++i) {
        sel.push_back(set[i]);
        pos.push_back(static_cast<int>(i));
      }
      sel.push_back(query_row);
      pos.push_back(static_cast<int>(set.size()));
      p.query_rows.push_back(static_cast<int>(sel.size()) - 1);
      segs.push_back(static_cast<int>(sel.size()));
    }
    Value x = tape_.select_rows(with_q, sel);
    Value pe = tape_.select_rows(param("embed.pos"), pos);
    p.x = tape_.add(x, pe);
    p.segments = std::move(segs);
    return p;
  }

  // Pre-LN residual block stack; `prefix` is "enc" or "dec".
  Value stack(const std::string& prefix, int layers, Value x, const Segments& segs) {
    for (int l = 0; l < layers; ++l) {
      const std::string p = prefix + "." + std::to_string(l);
      Value a = tape_.layer_norm(x, param(p + ".ln1.g"), param(p + ".ln1.b"));
      Value att = mha(p + ".attn", a, a, segs, segs);
      x = tape_.add(x, maybe_dropout(att));
      Value f = tape_.layer_norm(x, param(p + ".ln2.g"), param(p + ".ln2.b"));
      Value h = tape_.gelu(tape_.add_row(tape_.matmul(f, param(p + ".ffn.w1")), param(p + ".ffn.b1")));
      Value h2 = tape_.add_row(tape_.matmul(h, param(p + ".ffn.w2")), param(p + ".ffn.b2"));
      x = tape_.add(x, maybe_dropout(h2));
    }
    return tape_.layer_norm(x, param(prefix + ".final.g"), param(prefix + ".final.b"));
  }

  Value encode(Value x, const Segments& segs) {
    return stack("enc", config().encoder_layers, x, segs);
  }
  Value decode(Value x, const Segments& segs) {
    return stack("dec", config().decoder_layers, x, segs);
  }

  // Full attention module (projections + multi-head attention + output
  // projection) under the given parameter prefix; shared by the relation head
  // and the front-door path.
  Value mha(const std::string& p, Value q_in, Value kv_in, const Segments& q_segs,
            const Segments& kv_segs) {
    Value q = tape_.add_row(tape_.matmul(q_in, param(p + ".wq")), param(p + ".bq"));
    Value k = tape_.add_row(tape_.matmul(kv_in, param(p + ".wk")), param(p + ".bk"));
    Value v = tape_.add_row(tape_.matmul(kv_in, param(p + ".wv")), param(p + ".bv"));
    Value att = tape_.attention(q, k, v, q_segs, kv_segs, config().attention_heads);
    return tape_.add_row(tape_.matmul(att, param(p + ".wo")), param(p + ".bo"));
  }

  // ---- heads ---------------------------------------------------------------

  // Relation head over per-decision rows: o_m (masked-path output, refined or
  // not), o_p, o_n, each [n x d]. Returns [n x 2] logits.
  Value relation_head(Value o_m, Value o_p, Value o_n) {
    const int n = static_cast<int>(tape_.val(o_m).rows());
    Value mq = tape_.concat_rows({o_m, o_n});
    Value kv = tape_.concat_rows({o_p, o_n});
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(2 * n));
    Segments segs{0};
    for (int i = 0; i < n; ++i) {
      idx.push_back(i);
      idx.push_back(n + i);
      segs.push_back(2 * (i + 1));
    }
    Value q_seq = tape_.select_rows(mq, idx);
    Value kv_seq = tape_.select_rows(kv, idx);
    Value cross = mha("rel.cross", q_seq, kv_seq, segs, segs);
    Value self = mha("rel.self", q_seq, q_seq, segs, segs);
    Value pool_c = tape_.segment_mean(cross, segs);
    Value pool_i = tape_.segment_mean(self, segs);
    Value cos = tape_.cosine_rows(o_p, o_m);
    Value feat = tape_.concat_cols({pool_c, pool_i, cos});
    return tape_.add_row(tape_.matmul(feat, param("rel.gr.w")), param("rel.gr.b"));
  }

  // Caption head: broadcasts each o_p row to max_caption_len positions with
  // learned positional embeddings -> [n*max_caption_len x vocab] logits.
  Value caption_head(Value o_p) {
    const int n = static_cast<int>(tape_.val(o_p).rows());
    const int t = config().max_caption_len;
    std::vector<int> rep, pos;
    rep.reserve(static_cast<size_t>(n * t));
    pos.reserve(static_cast<size_t>(n * t));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < t; ++j) {
        rep.push_back(i);
        pos.push_back(j);
      }
    Value x = tape_.add(tape_.select_rows(o_p, rep), tape_.select_rows(param("cap.pos"), pos));
    return tape_.add_row(tape_.matmul(x, param("cap.w")), param("cap.b"));
  }

  // Shared decoder over [event(s), query]: the result-slot output predicts
  // the result event from the given event(s) alone. emb is [n x d]; row sets
  // select which embeddings form each sequence.
  Value pairwise_predict(Value emb, const std::vector<std::vector<int>>& row_sets) {
    Packed p = pack_with_query(emb, row_sets);
    Value f = encode(p.x, p.segments);
    Value o = decode(f, p.segments);
    return tape_.select_rows(o, p.query_rows);
  }

  // Decoder applied to single free tokens (no positions): [n x d] -> [n x d].
  Value decode_single(Value x) {
    const int n = static_cast<int>(tape_.val(x).rows());
    Segments segs(static_cast<size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) segs[static_cast<size_t>(i)] = i;
    return decode(x, segs);
  }

 private:
  Value maybe_dropout(Value v) {
    const double p = config().dropout;
    if (!train_ || p <= 0.0 || rng_ == nullptr) return v;
    const Mat<S>& shape = tape_.val(v);
    auto mask = std::make_shared<Mat<S>>(shape.rows(), shape.cols());
    const S keep = S(1) - S(p);
    for (Eigen::Index i = 0; i < mask->size(); ++i)
      mask->data()[i] = rng_->uniform() < p ? S(0) : S(1) / keep;
    return tape_.dropout(v, mask);
  }

  Vgcm<S>& model_;
  Tape<S>& tape_;
  bool train_;
  Rng* rng_;
  std::unordered_map<std::string, Value> leaves_;
};

}  // namespace mecd
