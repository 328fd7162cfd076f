#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "annotations.hpp"
#include "model.hpp"

namespace mecd {

struct LossWeights {
  double lambda_c = 1.0;
  double lambda_r = 4.0;
  double lambda_v = 0.25;
  double lambda_s = 0.05;

  void validate() const {
    if (lambda_c < 0 || lambda_r < 0 || lambda_v < 0 || lambda_s < 0)
      fail(Status::Config, "loss weights must be non-negative");
  }
};

enum class SimilarityGate { Causal, NonCausal };

struct CausalFlags {
  bool front_door = true;
  bool counterfactual = true;
  bool any() const { return front_door || counterfactual; }
};

struct BatchOptions {
  CausalFlags causal;
  bool build_losses = false;
  LossWeights weights;
  SimilarityGate gate = SimilarityGate::NonCausal;
  std::optional<int> only_k;          // restrict to one premise index (1-based)
  bool identical_paths_check = false; // test hook: masked path gets unmasked events
};

// One forward pass over a batch of samples: premise/masked/result streams,
// causal corrections, relation and caption heads, and (optionally) the loss.
// All per-sequence work is packed through a single encoder and decoder call.
template <typename S>
struct BatchGraph {
  struct Decision {
    int sample;  // index into the batch
    int k;       // 1-based premise index
    int target;  // r_k
  };
  std::vector<Decision> decisions;

  Value o_p, f_p_n, o_n, f_n;  // [B x d], per sample
  Value o_m;                   // [n x d], per decision (raw masked-path output)
  Value o_ref;                 // [n x d], refined (== o_m when corrections off)
  Value f_c, f_r;              // [n x d], corrections (zero rows at boundaries)
  Value o_p_dec, o_n_dec;      // [n x d], per-decision views of o_p / o_n
  Value rel_logits;            // [n x 2]
  Value caption_logits;        // [B*T x V], only when build_losses
  Value l_c, l_v;              // [B x 1], only when build_losses
  Value l_r, l_s;              // [n x 1], only when build_losses
  Value total;                 // [1 x 1], only when build_losses
  std::vector<S> gate_mask;    // per decision, 1 when L_S is active
};

template <typename S>
BatchGraph<S> build_streams(Forward<S>& fw, const std::vector<const PreparedVideo*>& batch,
                            const BatchOptions& opt) {
  Tape<S>& tape = fw.tape();
  const int d = fw.config().d_model;
  BatchGraph<S> g;

  // Decision list.
  for (size_t b = 0; b < batch.size(); ++b) {
    const PreparedVideo& s = *batch[b];
    const int n = s.n_events();
    if (n < 2) fail(Status::Length, s.video_id + ": need at least 2 events");
    if (opt.only_k && (*opt.only_k < 1 || *opt.only_k > n - 1))
      fail(Status::Index, "premise index out of range");
    for (int k = 1; k <= n - 1; ++k) {
      if (opt.only_k && *opt.only_k != k) continue;
      g.decisions.push_back({static_cast<int>(b), k, s.relation[static_cast<size_t>(k - 1)]});
    }
  }
  const int n_dec = static_cast<int>(g.decisions.size());

  // ---- embed every event instance once ------------------------------------
  std::vector<const Event*> refs;
  std::vector<int> prem_base(batch.size()), result_row(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    prem_base[b] = static_cast<int>(refs.size());
    const PreparedVideo& s = *batch[b];
    for (int i = 0; i + 1 < s.n_events(); ++i) refs.push_back(&s.events[static_cast<size_t>(i)]);
  }
  for (size_t b = 0; b < batch.size(); ++b) {
    result_row[b] = static_cast<int>(refs.size());
    refs.push_back(&batch[b]->events.back());
  }
  // Shared masked event: zero visual token, <mask> caption. One embedding
  // row serves every masked slot in the batch.
  Event masked_event;
  masked_event.video_feature = FeatureMatrix(0, fw.config().feature_dim);
  masked_event.caption_tokens.assign(static_cast<size_t>(fw.config().max_caption_len),
                                     Vocabulary::kMask);
  const int masked_row = static_cast<int>(refs.size());
  refs.push_back(&masked_event);

  // Existence-only counterfactual events e_k^0, one per counterfactual-
  // eligible decision (zero visual token, existence caption).
  std::deque<Event> exist_events;
  std::vector<int> exist_row(g.decisions.size(), -1);
  std::vector<int> cf_list, fd_list;  // indices into g.decisions
  for (int i = 0; i < n_dec; ++i) {
    const auto& dec = g.decisions[static_cast<size_t>(i)];
    const PreparedVideo& s = *batch[static_cast<size_t>(dec.sample)];
    if (opt.causal.front_door && dec.k > 1) fd_list.push_back(i);
    if (opt.causal.counterfactual && dec.k + 1 < s.n_events()) {
      cf_list.push_back(i);
      Event e;
      e.video_feature = FeatureMatrix(0, fw.config().feature_dim);
      e.caption_tokens = s.existence_tokens[static_cast<size_t>(dec.k - 1)];
      exist_events.push_back(std::move(e));
      exist_row[static_cast<size_t>(i)] = static_cast<int>(refs.size());
      refs.push_back(&exist_events.back());
    }
  }
  Value emb = fw.encode_events(refs);

  // ---- all full-stack sequences in one pack --------------------------------
  std::vector<std::vector<int>> row_sets;
  auto premise_rows = [&](int b) {
    const PreparedVideo& s = *batch[static_cast<size_t>(b)];
    std::vector<int> rows(static_cast<size_t>(s.n_events() - 1));
    for (int i = 0; i + 1 < s.n_events(); ++i) rows[static_cast<size_t>(i)] = prem_base[static_cast<size_t>(b)] + i;
    return rows;
  };
  for (size_t b = 0; b < batch.size(); ++b) row_sets.push_back(premise_rows(static_cast<int>(b)));
  for (const auto& dec : g.decisions) {
    auto rows = premise_rows(dec.sample);
    if (!opt.identical_paths_check) rows[static_cast<size_t>(dec.k - 1)] = masked_row;
    row_sets.push_back(std::move(rows));
  }
  for (size_t b = 0; b < batch.size(); ++b) row_sets.push_back({result_row[b]});
  for (int i : fd_list) {
    const auto& dec = g.decisions[static_cast<size_t>(i)];
    row_sets.push_back({prem_base[static_cast<size_t>(dec.sample)] + dec.k - 1});  // e_k
  }
  for (int i : cf_list) {
    const auto& dec = g.decisions[static_cast<size_t>(i)];
    row_sets.push_back({prem_base[static_cast<size_t>(dec.sample)] + dec.k});  // e_{k+1}
  }

  auto packed = fw.pack_with_query(emb, row_sets);
  Value f_all = fw.encode(packed.x, packed.segments);
  Value o_all = fw.decode(f_all, packed.segments);

  const int n_b = static_cast<int>(batch.size());
  auto query_slice = [&](int first_seq, int count) {
    std::vector<int> rows(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i)
      rows[static_cast<size_t>(i)] = packed.query_rows[static_cast<size_t>(first_seq + i)];
    return rows;
  };
  g.o_p = tape.select_rows(o_all, query_slice(0, n_b));
  g.f_p_n = tape.select_rows(f_all, query_slice(0, n_b));
  g.o_m = tape.select_rows(o_all, query_slice(n_b, n_dec));
  g.o_n = tape.select_rows(o_all, query_slice(n_b + n_dec, n_b));
  {
    // Encoded feature of the true result event: the event slot (position 0)
    // of each result sequence.
    std::vector<int> rows(static_cast<size_t>(n_b));
    for (int b = 0; b < n_b; ++b)
      rows[static_cast<size_t>(b)] = packed.query_rows[static_cast<size_t>(n_b + n_dec + b)] - 1;
    g.f_n = tape.select_rows(f_all, rows);
  }
  Value pair_k, pair_next;  // pairwise result predictions P(e_N|e_k), P(e_N|e_{k+1})
  if (!fd_list.empty())
    pair_k = tape.select_rows(o_all, query_slice(2 * n_b + n_dec, static_cast<int>(fd_list.size())));
  if (!cf_list.empty())
    pair_next = tape.select_rows(
        o_all, query_slice(2 * n_b + n_dec + static_cast<int>(fd_list.size()),
                           static_cast<int>(cf_list.size())));

  // Per-decision views of sample-level outputs.
  {
    std::vector<int> ds(static_cast<size_t>(n_dec));
    for (int i = 0; i < n_dec; ++i) ds[static_cast<size_t>(i)] = g.decisions[static_cast<size_t>(i)].sample;
    g.o_p_dec = tape.select_rows(g.o_p, ds);
    g.o_n_dec = tape.select_rows(g.o_n, ds);
  }

  // ---- causal corrections ---------------------------------------------------
  auto expand_rows = [&](Value present, const std::vector<int>& list) {
    // Scatter an [m x d] value to [n_dec x d], zero rows elsewhere.
    Value zero = tape.input(Mat<S>::Zero(1, d));
    Value cat = tape.concat_rows({present, zero});
    std::vector<int> idx(static_cast<size_t>(n_dec), static_cast<int>(tape.val(present).rows()));
    for (size_t j = 0; j < list.size(); ++j) idx[static_cast<size_t>(list[j])] = static_cast<int>(j);
    return tape.select_rows(cat, idx);
  };
  auto unit_segments = [](int m) {
    Segments s(static_cast<size_t>(m) + 1);
    for (int i = 0; i <= m; ++i) s[static_cast<size_t>(i)] = i;
    return s;
  };

  if (opt.causal.any()) {
    Value f_c_full = tape.input(Mat<S>::Zero(n_dec, d));
    Value f_r_full = tape.input(Mat<S>::Zero(n_dec, d));

    if (!fd_list.empty()) {
      const int m = static_cast<int>(fd_list.size());
      std::vector<int> k_rows(static_cast<size_t>(m)), next_rows(static_cast<size_t>(m));
      std::vector<std::vector<int>> cot_rows(static_cast<size_t>(m));
      for (int j = 0; j < m; ++j) {
        const auto& dec = g.decisions[static_cast<size_t>(fd_list[static_cast<size_t>(j)])];
        const PreparedVideo& s = *batch[static_cast<size_t>(dec.sample)];
        k_rows[static_cast<size_t>(j)] = prem_base[static_cast<size_t>(dec.sample)] + dec.k - 1;
        // Subsequent context: e_{k+1}; the result event itself when k+1 = N.
        next_rows[static_cast<size_t>(j)] = dec.k + 1 < s.n_events()
                                                ? prem_base[static_cast<size_t>(dec.sample)] + dec.k
                                                : result_row[static_cast<size_t>(dec.sample)];
        cot_rows[static_cast<size_t>(j)] = s.cot_tokens[static_cast<size_t>(dec.k - 1)];
      }
      Value emb_k = tape.select_rows(emb, k_rows);
      Value emb_next = tape.select_rows(emb, next_rows);
      Segments seg = unit_segments(m);
      Value phi_c = fw.mha("rel.cross", emb_k, emb_next, seg, seg);
      Value phi_i = fw.mha("rel.self", emb_k, emb_k, seg, seg);
      Value cot_pooled = fw.encode_texts(std::move(cot_rows));
      Value do_k = tape.add_row(
          tape.matmul(tape.concat_cols({phi_c, phi_i, cot_pooled}), fw.param("fd.gdo.w")),
          fw.param("fd.gdo.b"));
      f_c_full = expand_rows(tape.sub(pair_k, do_k), fd_list);
    }

    if (!cf_list.empty()) {
      const int m = static_cast<int>(cf_list.size());
      std::vector<int> k_rows(static_cast<size_t>(m)), next_rows(static_cast<size_t>(m)),
          k0_rows(static_cast<size_t>(m));
      for (int j = 0; j < m; ++j) {
        const int di = cf_list[static_cast<size_t>(j)];
        const auto& dec = g.decisions[static_cast<size_t>(di)];
        k_rows[static_cast<size_t>(j)] = prem_base[static_cast<size_t>(dec.sample)] + dec.k - 1;
        next_rows[static_cast<size_t>(j)] = prem_base[static_cast<size_t>(dec.sample)] + dec.k;
        k0_rows[static_cast<size_t>(j)] = exist_row[static_cast<size_t>(di)];
      }
      Value emb_k = tape.select_rows(emb, k_rows);
      Value emb_next = tape.select_rows(emb, next_rows);
      Value emb_k0 = tape.select_rows(emb, k0_rows);
      const S inv_sqrt_d = S(1) / std::sqrt(static_cast<S>(d));
      // [P(e_{k+1}|e_k) - P(e_{k+1}|e_k^0)] realised as a logistic
      // compatibility gate; the factual and counterfactual cause compete.
      Value s_gate = tape.sub(tape.sigmoid(tape.scale(tape.rows_dot(emb_next, emb_k), inv_sqrt_d)),
                              tape.sigmoid(tape.scale(tape.rows_dot(emb_next, emb_k0), inv_sqrt_d)));
      Value f_r_present = tape.row_scale(pair_next, tape.affine(s_gate, S(-1), S(1)));
      f_r_full = expand_rows(f_r_present, cf_list);
    }

    g.f_c = f_c_full;
    g.f_r = f_r_full;
    // O'_m = O_m - Dec(F_C) + Dec(F_R); one decoder call covers both terms.
    Value both = fw.decode_single(tape.concat_rows({f_c_full, f_r_full}));
    Value dec_fc = tape.slice_rows(both, 0, n_dec);
    Value dec_fr = tape.slice_rows(both, n_dec, n_dec);
    g.o_ref = tape.add(tape.sub(g.o_m, dec_fc), dec_fr);
  } else {
    g.o_ref = g.o_m;
  }

  g.rel_logits = fw.relation_head(g.o_ref, g.o_p_dec, g.o_n_dec);

  // ---- losses ---------------------------------------------------------------
  if (opt.build_losses) {
    const int t_len = fw.config().max_caption_len;
    g.caption_logits = fw.caption_head(g.o_p);
    auto cap_targets = std::make_shared<std::vector<int>>();
    auto cap_active = std::make_shared<std::vector<uint8_t>>();
    Mat<S> cap_w(n_b * t_len, 1);
    Segments cap_segs{0};
    for (int b = 0; b < n_b; ++b) {
      const auto& tokens = batch[static_cast<size_t>(b)]->events.back().caption_tokens;
      int active_count = 0;
      for (int tok : tokens) active_count += tok != Vocabulary::kPad;
      for (int j = 0; j < t_len; ++j) {
        int tok = tokens[static_cast<size_t>(j)];
        cap_targets->push_back(tok);
        cap_active->push_back(tok != Vocabulary::kPad);
        cap_w(b * t_len + j, 0) =
            tok != Vocabulary::kPad ? S(1) / static_cast<S>(active_count) : S(0);
      }
      cap_segs.push_back((b + 1) * t_len);
    }
    Value cap_losses = tape.ce_rows(g.caption_logits, cap_targets, cap_active);
    g.l_c = tape.segment_sum(tape.hadamard(cap_losses, tape.input(std::move(cap_w))), cap_segs);
    g.l_v = tape.mse_rows(g.f_p_n, g.f_n);

    auto rel_targets = std::make_shared<std::vector<int>>();
    for (const auto& dec : g.decisions) rel_targets->push_back(dec.target);
    g.l_r = tape.ce_rows(g.rel_logits, rel_targets);
    g.l_s = tape.mse_rows(g.o_ref, g.o_p_dec);

    g.gate_mask.resize(static_cast<size_t>(n_dec));
    for (int i = 0; i < n_dec; ++i) {
      const int r = g.decisions[static_cast<size_t>(i)].target;
      g.gate_mask[static_cast<size_t>(i)] =
          (opt.gate == SimilarityGate::NonCausal ? r == 0 : r == 1) ? S(1) : S(0);
    }

    // total = mean over samples of
    //   lambda_C*L_C + lambda_V*L_V + mean_k(lambda_R*L_R + lambda_S*gate*L_S)
    std::vector<int> per_sample_k(static_cast<size_t>(n_b), 0);
    for (const auto& dec : g.decisions) ++per_sample_k[static_cast<size_t>(dec.sample)];
    auto sample_w = std::make_shared<std::vector<S>>(static_cast<size_t>(n_b));
    for (int b = 0; b < n_b; ++b) (*sample_w)[static_cast<size_t>(b)] = S(1) / static_cast<S>(n_b);
    auto r_w = std::make_shared<std::vector<S>>(static_cast<size_t>(n_dec));
    auto s_w = std::make_shared<std::vector<S>>(static_cast<size_t>(n_dec));
    for (int i = 0; i < n_dec; ++i) {
      const auto& dec = g.decisions[static_cast<size_t>(i)];
      const S base = S(1) / (static_cast<S>(n_b) *
                             static_cast<S>(per_sample_k[static_cast<size_t>(dec.sample)]));
      (*r_w)[static_cast<size_t>(i)] = S(opt.weights.lambda_r) * base;
      (*s_w)[static_cast<size_t>(i)] =
          S(opt.weights.lambda_s) * g.gate_mask[static_cast<size_t>(i)] * base;
    }
    Value total = tape.weighted_mean(g.l_r, r_w);
    total = tape.add(total, tape.weighted_mean(g.l_s, s_w));
    auto c_w = std::make_shared<std::vector<S>>(static_cast<size_t>(n_b),
                                                S(opt.weights.lambda_c) / static_cast<S>(n_b));
    auto v_w = std::make_shared<std::vector<S>>(static_cast<size_t>(n_b),
                                                S(opt.weights.lambda_v) / static_cast<S>(n_b));
    total = tape.add(total, tape.weighted_mean(g.l_c, c_w));
    total = tape.add(total, tape.weighted_mean(g.l_v, v_w));
    g.total = total;
  }

  return g;
}

// Plain-matrix stream outputs for a single (sample, k): the spec-facing view
// of one Event Causality Test pass.
template <typename S>
struct StreamOutputs {
  Mat<S> o_p, o_m_k, o_n, f_p_n, f_n;  // [1 x d] each
};

template <typename S>
StreamOutputs<S> forward_streams(Vgcm<S>& model, const PreparedVideo& sample, int k) {
  const int n = sample.n_events();
  if (k < 1 || k > n - 1) fail(Status::Index, "forward_streams: k must be in [1, N-1]");
  Tape<S> tape;
  Forward<S> fw(model, tape);
  BatchOptions opt;
  opt.causal = CausalFlags{false, false};
  opt.only_k = k;
  auto g = build_streams(fw, {&sample}, opt);
  StreamOutputs<S> out;
  out.o_p = tape.val(g.o_p);
  out.o_m_k = tape.val(g.o_m);
  out.o_n = tape.val(g.o_n);
  out.f_p_n = tape.val(g.f_p_n);
  out.f_n = tape.val(g.f_n);
  return out;
}

}  // namespace mecd
