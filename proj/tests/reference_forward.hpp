// Tape-free re-implementation of the VGCM forward pass in plain Eigen,
// reading parameters from a model's store by name. Used as an independent
// oracle against the graph-built path.
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "graph.hpp"
#include "model.hpp"

namespace refimpl {

using Mat = Eigen::MatrixXd;
using mecd::Event;
using mecd::PreparedVideo;
using mecd::Vgcm;
using mecd::Vocabulary;

inline const Mat param(const Vgcm<double>& m, const std::string& name) {
  return m.params().at(name).w;
}

inline Mat layer_norm(const Mat& x, const Mat& gain, const Mat& bias, double eps = 1e-5) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mu = x.row(r).mean();
    double var = (x.row(r).array() - mu).square().mean();
    out.row(r) =
        (((x.row(r).array() - mu) / std::sqrt(var + eps)) * gain.row(0).array()).matrix() +
        bias.row(0);
  }
  return out;
}

inline Mat gelu(const Mat& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); });
}

inline Mat softmax_rows(Mat s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    double m = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - m).exp();
    s.row(r) /= s.row(r).sum();
  }
  return s;
}

// Full attention module (projections + heads + output projection) under a
// parameter prefix, on one query/key-value sequence pair.
inline Mat mha(const Vgcm<double>& m, const std::string& p, const Mat& q_in, const Mat& kv_in,
               int heads) {
  Mat q = (q_in * param(m, p + ".wq")).rowwise() + param(m, p + ".bq").row(0);
  Mat k = (kv_in * param(m, p + ".wk")).rowwise() + param(m, p + ".bk").row(0);
  Mat v = (kv_in * param(m, p + ".wv")).rowwise() + param(m, p + ".bv").row(0);
  const Eigen::Index dh = q.cols() / heads;
  Mat att(q.rows(), q.cols());
  for (int h = 0; h < heads; ++h) {
    Mat qh = q.middleCols(h * dh, dh);
    Mat kh = k.middleCols(h * dh, dh);
    Mat vh = v.middleCols(h * dh, dh);
    Mat probs = softmax_rows(qh * kh.transpose() / std::sqrt(static_cast<double>(dh)));
    att.middleCols(h * dh, dh) = probs * vh;
  }
  return (att * param(m, p + ".wo")).rowwise() + param(m, p + ".bo").row(0);
}

inline Mat stack(const Vgcm<double>& m, const std::string& prefix, int layers, Mat x, int heads) {
  for (int l = 0; l < layers; ++l) {
    const std::string p = prefix + "." + std::to_string(l);
    Mat a = layer_norm(x, param(m, p + ".ln1.g"), param(m, p + ".ln1.b"));
    x += mha(m, p + ".attn", a, a, heads);
    Mat f = layer_norm(x, param(m, p + ".ln2.g"), param(m, p + ".ln2.b"));
    Mat h = gelu(((f * param(m, p + ".ffn.w1")).rowwise() + param(m, p + ".ffn.b1").row(0)));
    x += (h * param(m, p + ".ffn.w2")).rowwise() + param(m, p + ".ffn.b2").row(0);
  }
  return layer_norm(x, param(m, prefix + ".final.g"), param(m, prefix + ".final.b"));
}

inline Mat encode_event(const Vgcm<double>& m, const Event& e) {
  const auto& cfg = m.config();
  Mat x(1, cfg.feature_dim + cfg.d_model);
  x.setZero();
  if (e.video_feature.rows() > 0)
    x.block(0, 0, 1, cfg.feature_dim) = e.video_feature.colwise().mean().cast<double>();
  const Mat& tok = param(m, "embed.tok");
  Mat cap = Mat::Zero(1, cfg.d_model);
  for (int id : e.caption_tokens) cap += tok.row(id);
  if (!e.caption_tokens.empty()) cap /= static_cast<double>(e.caption_tokens.size());
  x.block(0, cfg.feature_dim, 1, cfg.d_model) = cap;
  return (x * param(m, "event.proj.w")).rowwise() + param(m, "event.proj.b").row(0);
}

inline Mat embed_text(const Vgcm<double>& m, const std::vector<int>& tokens) {
  const Mat& tok = param(m, "embed.tok");
  Mat out = Mat::Zero(1, m.config().d_model);
  for (int id : tokens) out += tok.row(id);
  if (!tokens.empty()) out /= static_cast<double>(tokens.size());
  return out;
}

struct SeqResult {
  Mat f;  // encoder output, rows = events + query
  Mat o;  // decoder output
};

// [event embeddings..., query] + positions -> encoder -> decoder.
inline SeqResult run_sequence(const Vgcm<double>& m, const std::vector<Mat>& embs) {
  const auto& cfg = m.config();
  Mat x(static_cast<Eigen::Index>(embs.size()) + 1, cfg.d_model);
  for (size_t i = 0; i < embs.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = embs[i].row(0) + param(m, "embed.pos").row(static_cast<Eigen::Index>(i));
  x.row(static_cast<Eigen::Index>(embs.size())) =
      param(m, "embed.query").row(0) + param(m, "embed.pos").row(static_cast<Eigen::Index>(embs.size()));
  SeqResult r;
  r.f = stack(m, "enc", cfg.encoder_layers, x, cfg.attention_heads);
  r.o = stack(m, "dec", cfg.decoder_layers, r.f, cfg.attention_heads);
  return r;
}

inline Mat decode_single(const Vgcm<double>& m, const Mat& token) {
  return stack(m, "dec", m.config().decoder_layers, token, m.config().attention_heads);
}

struct Streams {
  Mat o_p, o_m, o_n, f_p_n, f_n;
  std::vector<Mat> prem;  // event embeddings of the premises
  Mat emb_result;
};

inline Streams streams(const Vgcm<double>& m, const PreparedVideo& pv, int k) {
  const int n = pv.n_events();
  Streams s;
  for (int i = 0; i + 1 < n; ++i) s.prem.push_back(encode_event(m, pv.events[static_cast<size_t>(i)]));
  s.emb_result = encode_event(m, pv.events.back());

  auto pr = run_sequence(m, s.prem);
  s.o_p = pr.o.row(pr.o.rows() - 1);
  s.f_p_n = pr.f.row(pr.f.rows() - 1);

  Event masked;
  masked.video_feature = mecd::FeatureMatrix(0, m.config().feature_dim);
  masked.caption_tokens.assign(static_cast<size_t>(m.config().max_caption_len), Vocabulary::kMask);
  auto me = s.prem;
  me[static_cast<size_t>(k - 1)] = encode_event(m, masked);
  auto mr = run_sequence(m, me);
  s.o_m = mr.o.row(mr.o.rows() - 1);

  auto rr = run_sequence(m, {s.emb_result});
  s.o_n = rr.o.row(rr.o.rows() - 1);
  s.f_n = rr.f.row(0);
  return s;
}

inline Mat pairwise(const Vgcm<double>& m, const Mat& emb) {
  auto r = run_sequence(m, {emb});
  return r.o.row(r.o.rows() - 1);
}

// Eq.-style corrections for one (sample, k).
inline Mat front_door(const Vgcm<double>& m, const PreparedVideo& pv, const Streams& s, int k) {
  const int n = pv.n_events();
  const int d = m.config().d_model;
  if (k == 1) return Mat::Zero(1, d);
  Mat emb_k = s.prem[static_cast<size_t>(k - 1)];
  Mat emb_next = k + 1 < n ? s.prem[static_cast<size_t>(k)] : s.emb_result;
  Mat p_k = pairwise(m, emb_k);
  Mat phi_c = mha(m, "rel.cross", emb_k, emb_next, m.config().attention_heads);
  Mat phi_i = mha(m, "rel.self", emb_k, emb_k, m.config().attention_heads);
  Mat cot = embed_text(m, pv.cot_tokens[static_cast<size_t>(k - 1)]);
  Mat cat(1, 3 * d);
  cat << phi_c, phi_i, cot;
  Mat do_k = (cat * param(m, "fd.gdo.w")).rowwise() + param(m, "fd.gdo.b").row(0);
  return p_k - do_k;
}

inline Mat counterfactual(const Vgcm<double>& m, const PreparedVideo& pv, const Streams& s,
                          int k) {
  const int n = pv.n_events();
  const int d = m.config().d_model;
  if (k + 1 >= n) return Mat::Zero(1, d);
  Mat emb_k = s.prem[static_cast<size_t>(k - 1)];
  Mat emb_next = s.prem[static_cast<size_t>(k)];
  Event e0;
  e0.video_feature = mecd::FeatureMatrix(0, m.config().feature_dim);
  e0.caption_tokens = pv.existence_tokens[static_cast<size_t>(k - 1)];
  Mat emb_k0 = encode_event(m, e0);
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  double gate = sig(emb_next.row(0).dot(emb_k.row(0)) * inv) -
                sig(emb_next.row(0).dot(emb_k0.row(0)) * inv);
  Mat p_next = pairwise(m, emb_next);
  return p_next * (1.0 - gate);
}

inline Mat refine(const Vgcm<double>& m, const Mat& o_m, const Mat& f_c, const Mat& f_r) {
  return o_m - decode_single(m, f_c) + decode_single(m, f_r);
}

inline Mat relation_head(const Vgcm<double>& m, const Mat& o_m, const Mat& o_p, const Mat& o_n) {
  const int d = m.config().d_model;
  Mat q(2, d), kv(2, d);
  q << o_m, o_n;
  kv << o_p, o_n;
  Mat cross = mha(m, "rel.cross", q, kv, m.config().attention_heads);
  Mat self = mha(m, "rel.self", q, q, m.config().attention_heads);
  Mat feat(1, 2 * d + 1);
  feat.block(0, 0, 1, d) = cross.colwise().mean();
  feat.block(0, d, 1, d) = self.colwise().mean();
  feat(0, 2 * d) =
      o_p.row(0).dot(o_m.row(0)) / (o_p.row(0).norm() * o_m.row(0).norm() + 1e-12);
  return (feat * param(m, "rel.gr.w")).rowwise() + param(m, "rel.gr.b").row(0);
}

inline Mat caption_logits(const Vgcm<double>& m, const Mat& o_p) {
  const int t = m.config().max_caption_len;
  Mat x(t, m.config().d_model);
  for (int i = 0; i < t; ++i) x.row(i) = o_p.row(0) + param(m, "cap.pos").row(i);
  return (x * param(m, "cap.w")).rowwise() + param(m, "cap.b").row(0);
}

struct RefLoss {
  double l_c = 0, l_r = 0, l_v = 0, l_s = 0, total = 0;
  int gate = 0;
};

inline RefLoss loss(const Vgcm<double>& m, const PreparedVideo& pv, int k,
                    const mecd::LossWeights& w, mecd::SimilarityGate gate,
                    const mecd::CausalFlags& causal) {
  Streams s = streams(m, pv, k);
  Mat o_ref = s.o_m;
  if (causal.front_door || causal.counterfactual) {
    Mat f_c = causal.front_door ? front_door(m, pv, s, k) : Mat::Zero(1, m.config().d_model);
    Mat f_r =
        causal.counterfactual ? counterfactual(m, pv, s, k) : Mat::Zero(1, m.config().d_model);
    o_ref = refine(m, s.o_m, f_c, f_r);
  }
  RefLoss out;

  Mat cl = caption_logits(m, s.o_p);
  const auto& target = pv.events.back().caption_tokens;
  int active = 0;
  for (int i = 0; i < m.config().max_caption_len; ++i) {
    int tok = target[static_cast<size_t>(i)];
    if (tok == Vocabulary::kPad) continue;
    ++active;
    double mx = cl.row(i).maxCoeff();
    double lse = std::log((cl.row(i).array() - mx).exp().sum()) + mx;
    out.l_c += lse - cl(i, tok);
  }
  if (active > 0) out.l_c /= active;

  Mat logits = relation_head(m, o_ref, s.o_p, s.o_n);
  {
    double mx = logits.row(0).maxCoeff();
    double lse = std::log((logits.row(0).array() - mx).exp().sum()) + mx;
    out.l_r = lse - logits(0, pv.relation[static_cast<size_t>(k - 1)]);
  }

  out.l_v = (s.f_p_n - s.f_n).array().square().mean();
  out.l_s = (o_ref - s.o_p).array().square().mean();
  const int r = pv.relation[static_cast<size_t>(k - 1)];
  out.gate = (gate == mecd::SimilarityGate::NonCausal ? r == 0 : r == 1) ? 1 : 0;
  out.total = w.lambda_c * out.l_c + w.lambda_r * out.l_r + w.lambda_v * out.l_v +
              w.lambda_s * out.gate * out.l_s;
  return out;
}

}  // namespace refimpl
