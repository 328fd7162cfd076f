#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "fixtures.hpp"
#include "graph.hpp"
#include "reference_forward.hpp"

using namespace mecd;

namespace {

const Vocabulary kVocab = fixtures::small_vocab();

template <typename S>
Mat<S> encode_one(Vgcm<S>& model, const Event& e) {
  Tape<S> tape;
  Forward<S> fw(model, tape);
  return tape.val(fw.encode_events({&e}));
}

}  // namespace

TEST_CASE("encode_event basics") {
  auto mc = fixtures::tiny_config(kVocab);
  Vgcm<double> model(mc, 11);

  SUBCASE("masked events share one embedding regardless of original shape") {
    Event a, b;
    a.video_feature = FeatureMatrix::Zero(7, mc.feature_dim);
    b.video_feature = FeatureMatrix::Zero(2, mc.feature_dim);
    a.caption_tokens.assign(static_cast<size_t>(mc.max_caption_len), Vocabulary::kMask);
    b.caption_tokens = a.caption_tokens;
    auto ea = encode_one(model, a);
    auto eb = encode_one(model, b);
    CHECK(std::memcmp(ea.data(), eb.data(), sizeof(double) * static_cast<size_t>(ea.size())) == 0);
  }
  SUBCASE("zero frames means a zero visual token") {
    Event frameless;
    frameless.video_feature = FeatureMatrix(0, mc.feature_dim);
    frameless.caption_tokens = tokenize("w1 w2", kVocab, mc.max_caption_len);
    Event zeroed;
    zeroed.video_feature = FeatureMatrix::Zero(5, mc.feature_dim);
    zeroed.caption_tokens = frameless.caption_tokens;
    auto e1 = encode_one(model, frameless);
    auto e2 = encode_one(model, zeroed);
    CHECK((e1 - e2).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("evaluation passes are bit-identical") {
    Event e;
    Rng rng(5);
    e.video_feature.resize(4, mc.feature_dim);
    for (Eigen::Index i = 0; i < e.video_feature.size(); ++i)
      e.video_feature.data()[i] = static_cast<float>(rng.normal());
    e.caption_tokens = tokenize("w3 w4 w5", kVocab, mc.max_caption_len);
    auto e1 = encode_one(model, e);
    auto e2 = encode_one(model, e);
    CHECK(std::memcmp(e1.data(), e2.data(), sizeof(double) * static_cast<size_t>(e1.size())) == 0);
  }
  SUBCASE("wrong feature width is E_DIM") {
    Event e;
    e.video_feature = FeatureMatrix::Zero(3, mc.feature_dim + 1);
    e.caption_tokens = tokenize("w1", kVocab, mc.max_caption_len);
    Tape<double> tape;
    Forward<double> fw(model, tape);
    CHECK_THROWS_AS(fw.encode_events({&e}), MecdError);
  }
}

TEST_CASE("forward_streams agrees with the tape-free reference") {
  auto mc = fixtures::tiny_config(kVocab, 8, 2);
  Vgcm<double> model(mc, 21);
  auto pv = fixtures::random_video(kVocab, mc, 5, 77);
  for (int k = 1; k <= 4; ++k) {
    auto got = forward_streams(model, pv, k);
    auto want = refimpl::streams(model, pv, k);
    CHECK((got.o_p - want.o_p).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((got.o_m_k - want.o_m).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((got.o_n - want.o_n).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((got.f_p_n - want.f_p_n).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((got.f_n - want.f_n).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("weight sharing: identical path inputs give bit-identical outputs") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    auto mc = fixtures::tiny_config(kVocab, 8, 2);
    Vgcm<double> model(mc, 100 + seed);
    auto pv = fixtures::random_video(kVocab, mc, 4, 200 + seed);
    Tape<double> tape;
    Forward<double> fw(model, tape);
    BatchOptions opt;
    opt.causal = CausalFlags{false, false};
    opt.identical_paths_check = true;  // masked path receives the unmasked events
    auto g = build_streams(fw, {&pv}, opt);
    const auto& o_p = tape.val(g.o_p);
    const auto& o_m = tape.val(g.o_m);
    for (Eigen::Index i = 0; i < o_m.rows(); ++i)
      CHECK(std::memcmp(o_p.row(0).data(), o_m.row(i).data(),
                        sizeof(double) * static_cast<size_t>(o_p.cols())) == 0);
  }
}

TEST_CASE("O_p never depends on the result event") {
  auto mc = fixtures::tiny_config(kVocab);
  Vgcm<double> model(mc, 31);
  auto pv = fixtures::random_video(kVocab, mc, 5, 41);
  auto base = forward_streams(model, pv, 2);

  PreparedVideo changed = pv;
  changed.events.back().video_feature.setConstant(3.5f);
  changed.events.back().caption_tokens = tokenize("w9 w9 w9", kVocab, mc.max_caption_len);
  auto alt = forward_streams(model, changed, 2);

  CHECK(std::memcmp(base.o_p.data(), alt.o_p.data(),
                    sizeof(double) * static_cast<size_t>(base.o_p.size())) == 0);
  CHECK(std::memcmp(base.o_m_k.data(), alt.o_m_k.data(),
                    sizeof(double) * static_cast<size_t>(base.o_m_k.size())) == 0);
  CHECK(std::memcmp(base.f_p_n.data(), alt.f_p_n.data(),
                    sizeof(double) * static_cast<size_t>(base.f_p_n.size())) == 0);
  // while the result-path outputs do change
  CHECK((base.o_n - alt.o_n).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("positional embeddings make premise order matter") {
  auto mc = fixtures::tiny_config(kVocab);
  Vgcm<double> model(mc, 51);
  auto pv = fixtures::random_video(kVocab, mc, 5, 61);
  PreparedVideo swapped = pv;
  std::swap(swapped.events[0], swapped.events[2]);
  auto a = forward_streams(model, pv, 2);
  auto b = forward_streams(model, swapped, 2);
  CHECK((a.o_p - b.o_p).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("relation head") {
  auto mc = fixtures::tiny_config(kVocab, 8, 2);
  Vgcm<double> model(mc, 71);

  SUBCASE("two logits per decision and agreement with the reference") {
    Rng rng(9);
    Mat<double> om(1, 8), op(1, 8), on(1, 8);
    for (int c = 0; c < 8; ++c) {
      om(0, c) = rng.normal();
      op(0, c) = rng.normal();
      on(0, c) = rng.normal();
    }
    Tape<double> tape;
    Forward<double> fw(model, tape);
    Value logits = fw.relation_head(tape.input(om), tape.input(op), tape.input(on));
    CHECK(tape.val(logits).rows() == 1);
    CHECK(tape.val(logits).cols() == 2);
    auto want = refimpl::relation_head(model, om, op, on);
    CHECK((tape.val(logits) - want).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("equal masked and premise outputs give cosine feature exactly 1") {
    // With o_m == o_p the appended similarity feature is cos(x, x) = 1; check
    // via the cosine op directly.
    Mat<double> x(1, 8);
    for (int c = 0; c < 8; ++c) x(0, c) = 0.3 * (c + 1);
    Tape<double> tape;
    Value c = tape.cosine_rows(tape.input(x), tape.input(x));
    CHECK(tape.val(c)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("hand-computed tiny case, d_model = 2, one head") {
    auto mc2 = fixtures::tiny_config(kVocab, 2, 1);
    Vgcm<double> m2(mc2, 3);
    // Overwrite the relation-head parameters with fixed small integers.
    auto set = [&](const std::string& name, std::initializer_list<double> vals) {
      auto& w = m2.params().at(name).w;
      auto it = vals.begin();
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = *it++;
    };
    for (const char* mod : {"rel.cross", "rel.self"}) {
      set(std::string(mod) + ".wq", {1, 0, 0, 1});
      set(std::string(mod) + ".wk", {0, 1, 1, 0});
      set(std::string(mod) + ".wv", {1, 1, 0, 1});
      set(std::string(mod) + ".wo", {1, 0, 1, 1});
      set(std::string(mod) + ".bq", {0.1, -0.1});
      set(std::string(mod) + ".bk", {0, 0.2});
      set(std::string(mod) + ".bv", {-0.2, 0});
      set(std::string(mod) + ".bo", {0.05, 0.05});
    }
    set("rel.gr.w", {1, -1, 0.5, 0.5, -0.5, 1, 2, 0, 0.25, -0.25});
    set("rel.gr.b", {0.01, -0.01});

    Mat<double> om(1, 2), op(1, 2), on(1, 2);
    om << 0.4, -0.3;
    op << -0.1, 0.8;
    on << 0.7, 0.2;

    // Independent recomputation with explicit 2x2 matrices.
    auto attn1 = [&](const char* mod, const Eigen::Matrix2d& qin, const Eigen::Matrix2d& kvin) {
      const std::string p(mod);
      auto W = [&](const char* n) {
        return Eigen::Matrix2d(m2.params().at(p + "." + n).w);
      };
      auto B = [&](const char* n) {
        return Eigen::RowVector2d(m2.params().at(p + "." + n).w.row(0));
      };
      Eigen::Matrix2d q = (qin * W("wq")).rowwise() + B("bq");
      Eigen::Matrix2d k = (kvin * W("wk")).rowwise() + B("bk");
      Eigen::Matrix2d v = (kvin * W("wv")).rowwise() + B("bv");
      Eigen::Matrix2d scores = q * k.transpose() / std::sqrt(2.0);
      for (int r = 0; r < 2; ++r) {
        double mx = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - mx).exp();
        scores.row(r) /= scores.row(r).sum();
      }
      Eigen::Matrix2d att = scores * v;
      return Eigen::Matrix2d(((att * W("wo")).rowwise() + B("bo")));
    };
    Eigen::Matrix2d qin, kvin;
    qin << om(0, 0), om(0, 1), on(0, 0), on(0, 1);
    kvin << op(0, 0), op(0, 1), on(0, 0), on(0, 1);
    Eigen::Matrix2d cross = attn1("rel.cross", qin, kvin);
    Eigen::Matrix2d self = attn1("rel.self", qin, qin);
    Eigen::RowVector2d pool_c = cross.colwise().mean();
    Eigen::RowVector2d pool_i = self.colwise().mean();
    double cos = (om(0, 0) * op(0, 0) + om(0, 1) * op(0, 1)) /
                 (std::hypot(om(0, 0), om(0, 1)) * std::hypot(op(0, 0), op(0, 1)) + 1e-12);
    Eigen::Matrix<double, 1, 5> feat;
    feat << pool_c(0), pool_c(1), pool_i(0), pool_i(1), cos;
    Eigen::Matrix<double, 5, 2> grw(m2.params().at("rel.gr.w").w);
    Eigen::RowVector2d expect = feat * grw + Eigen::RowVector2d(m2.params().at("rel.gr.b").w.row(0));

    Tape<double> tape;
    Forward<double> fw(m2, tape);
    Value logits = fw.relation_head(tape.input(om), tape.input(op), tape.input(on));
    CHECK(tape.val(logits)(0, 0) == doctest::Approx(expect(0)).epsilon(1e-12));
    CHECK(tape.val(logits)(0, 1) == doctest::Approx(expect(1)).epsilon(1e-12));
  }
}

TEST_CASE("caption head") {
  auto mc = fixtures::tiny_config(kVocab);
  Vgcm<double> model(mc, 81);
  Tape<double> tape;
  Forward<double> fw(model, tape);
  Mat<double> op = Mat<double>::Constant(1, mc.d_model, 0.25);
  Value logits = fw.caption_head(tape.input(op));
  SUBCASE("shape is [max_caption_len x vocab]") {
    CHECK(tape.val(logits).rows() == mc.max_caption_len);
    CHECK(tape.val(logits).cols() == mc.vocab_size);
  }
  SUBCASE("greedy decode of one-hot PAD logits is an empty caption") {
    Mat<double> fake = Mat<double>::Zero(mc.max_caption_len, mc.vocab_size);
    fake.col(Vocabulary::kPad).setConstant(5.0);
    std::vector<int> decoded;
    for (Eigen::Index r = 0; r < fake.rows(); ++r) {
      Eigen::Index best;
      fake.row(r).maxCoeff(&best);
      if (static_cast<int>(best) != Vocabulary::kPad) decoded.push_back(static_cast<int>(best));
    }
    CHECK(decoded.empty());
  }
  SUBCASE("agrees with the reference") {
    auto want = refimpl::caption_logits(model, op);
    CHECK((tape.val(logits) - want).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("pairwise prediction") {
  auto mc = fixtures::tiny_config(kVocab);
  Vgcm<double> model(mc, 91);
  auto pv = fixtures::random_video(kVocab, mc, 4, 93);

  SUBCASE("feeding the true result event alone reproduces O_N") {
    Tape<double> tape;
    Forward<double> fw(model, tape);
    Value emb = fw.encode_events({&pv.events.back()});
    Value out = fw.pairwise_predict(emb, {{0}});
    auto want = refimpl::streams(model, pv, 1).o_n;
    CHECK((tape.val(out) - want).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("repeated evaluation is bit-identical") {
    auto run = [&]() {
      Tape<double> tape;
      Forward<double> fw(model, tape);
      Value emb = fw.encode_events({&pv.events[0]});
      return Mat<double>(tape.val(fw.pairwise_predict(emb, {{0}})));
    };
    auto a = run();
    auto b = run();
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<size_t>(a.size())) == 0);
  }
  SUBCASE("all masked events share one pairwise prediction") {
    Event m1, m2;
    m1.video_feature = FeatureMatrix::Zero(3, mc.feature_dim);
    m2.video_feature = FeatureMatrix::Zero(9, mc.feature_dim);
    m1.caption_tokens.assign(static_cast<size_t>(mc.max_caption_len), Vocabulary::kMask);
    m2.caption_tokens = m1.caption_tokens;
    Tape<double> tape;
    Forward<double> fw(model, tape);
    Value emb = fw.encode_events({&m1, &m2});
    Value out = fw.pairwise_predict(emb, {{0}, {1}});
    const auto& v = tape.val(out);
    CHECK((v.row(0) - v.row(1)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("finite outputs for bounded inputs") {
  auto mc = fixtures::tiny_config(kVocab);
  Vgcm<double> model(mc, 101);
  Rng rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    PreparedVideo pv = fixtures::random_video(kVocab, mc, 4, 300 + trial);
    const double scale = trial < 5 ? 1.0 : 1e3;  // up to norm ~1e3 features
    for (auto& e : pv.events)
      e.video_feature *= static_cast<float>(scale / std::max(1.0, rng.uniform() * 2));
    for (int k = 1; k <= 3; ++k) {
      auto so = forward_streams(model, pv, k);
      CHECK(so.o_p.allFinite());
      CHECK(so.o_m_k.allFinite());
      CHECK(so.o_n.allFinite());
      CHECK(so.f_p_n.allFinite());
      CHECK(so.f_n.allFinite());
      Tape<double> tape;
      Forward<double> fw(model, tape);
      Value logits = fw.relation_head(tape.input(so.o_m_k), tape.input(so.o_p), tape.input(so.o_n));
      CHECK(tape.val(logits).allFinite());
      Value cap = fw.caption_head(tape.input(so.o_p));
      CHECK(tape.val(cap).allFinite());
    }
  }
}
