#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "status.hpp"

namespace mecd {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Segment offsets for a batch of variable-length token sequences packed into
// one row-major matrix: sequence s owns rows [offsets[s], offsets[s+1]).
using Segments = std::vector<int>;

inline int seg_count(const Segments& o) { return static_cast<int>(o.size()) - 1; }
inline int seg_len(const Segments& o, int s) { return o[s + 1] - o[s]; }

struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over row-major Eigen matrices. One tape per forward pass;
// nodes refer to earlier nodes only, so backward is a reverse sweep.
template <typename S>
class Tape {
 public:
  Tape() { nodes_.reserve(512); }

  // ---- graph construction -------------------------------------------------

  Value input(Mat<S> v) {
    Node n;
    n.val = std::move(v);
    n.requires_grad = false;
    return push(std::move(n));
  }

  // Parameter leaf: value lives in the store; gradients accumulate into *g.
  Value leaf(const Mat<S>* v, Mat<S>* g) {
    Node n;
    n.leaf_val = v;
    n.leaf_grad = g;
    n.requires_grad = true;
    return push(std::move(n));
  }

  Value matmul(Value a, Value b) {
    Mat<S> out = val(a) * val(b);
    return make(std::move(out), {a, b}, [this, a, b](const Mat<S>& g) {
      if (needs(a)) grad(a).noalias() += g * val(b).transpose();
      if (needs(b)) grad(b).noalias() += val(a).transpose() * g;
    });
  }

  Value add(Value a, Value b) {
    Mat<S> out = val(a) + val(b);
    return make(std::move(out), {a, b}, [this, a, b](const Mat<S>& g) {
      if (needs(a)) grad(a) += g;
      if (needs(b)) grad(b) += g;
    });
  }

  Value sub(Value a, Value b) {
    Mat<S> out = val(a) - val(b);
    return make(std::move(out), {a, b}, [this, a, b](const Mat<S>& g) {
      if (needs(a)) grad(a) += g;
      if (needs(b)) grad(b) -= g;
    });
  }

  // a + bias, bias is [1 x d] broadcast over rows of a.
  Value add_row(Value a, Value bias) {
    Mat<S> out = val(a).rowwise() + val(bias).row(0);
    return make(std::move(out), {a, bias}, [this, a, bias](const Mat<S>& g) {
      if (needs(a)) grad(a) += g;
      if (needs(bias)) grad(bias) += g.colwise().sum();
    });
  }

  Value scale(Value a, S c) {
    Mat<S> out = val(a) * c;
    return make(std::move(out), {a}, [this, a, c](const Mat<S>& g) {
      if (needs(a)) grad(a) += g * c;
    });
  }

  // Elementwise alpha*x + beta.
  Value affine(Value a, S alpha, S beta) {
    Mat<S> out = (val(a).array() * alpha + beta).matrix();
    return make(std::move(out), {a}, [this, a, alpha](const Mat<S>& g) {
      if (needs(a)) grad(a) += g * alpha;
    });
  }

  Value hadamard(Value a, Value b) {
    Mat<S> out = val(a).cwiseProduct(val(b));
    return make(std::move(out), {a, b}, [this, a, b](const Mat<S>& g) {
      if (needs(a)) grad(a) += g.cwiseProduct(val(b));
      if (needs(b)) grad(b) += g.cwiseProduct(val(a));
    });
  }

  // Rows of a scaled by the per-row scalar in col [n x 1].
  Value row_scale(Value a, Value col) {
    Mat<S> out = (val(a).array().colwise() * val(col).col(0).array()).matrix();
    return make(std::move(out), {a, col}, [this, a, col](const Mat<S>& g) {
      if (needs(a)) grad(a) += (g.array().colwise() * val(col).col(0).array()).matrix();
      if (needs(col)) grad(col).col(0) += g.cwiseProduct(val(a)).rowwise().sum();
    });
  }

  Value concat_cols(std::vector<Value> parts) {
    Eigen::Index rows = val(parts[0]).rows(), cols = 0;
    for (Value p : parts) cols += val(p).cols();
    Mat<S> out(rows, cols);
    Eigen::Index at = 0;
    for (Value p : parts) {
      out.middleCols(at, val(p).cols()) = val(p);
      at += val(p).cols();
    }
    return make(std::move(out), parts, [this, parts](const Mat<S>& g) {
      Eigen::Index at = 0;
      for (Value p : parts) {
        if (needs(p)) grad(p) += g.middleCols(at, val(p).cols());
        at += val(p).cols();
      }
    });
  }

  Value concat_rows(std::vector<Value> parts) {
    Eigen::Index cols = val(parts[0]).cols(), rows = 0;
    for (Value p : parts) rows += val(p).rows();
    Mat<S> out(rows, cols);
    Eigen::Index at = 0;
    for (Value p : parts) {
      out.middleRows(at, val(p).rows()) = val(p);
      at += val(p).rows();
    }
    return make(std::move(out), parts, [this, parts](const Mat<S>& g) {
      Eigen::Index at = 0;
      for (Value p : parts) {
        if (needs(p)) grad(p) += g.middleRows(at, val(p).rows());
        at += val(p).rows();
      }
    });
  }

  Value slice_rows(Value a, int start, int len) {
    Mat<S> out = val(a).middleRows(start, len);
    return make(std::move(out), {a}, [this, a, start, len](const Mat<S>& g) {
      if (needs(a)) grad(a).middleRows(start, len) += g;
    });
  }

  // Gather arbitrary rows; backward scatter-adds (indices may repeat).
  Value select_rows(Value a, std::vector<int> rows) {
    Mat<S> out(static_cast<Eigen::Index>(rows.size()), val(a).cols());
    for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = val(a).row(rows[i]);
    auto idx = std::make_shared<std::vector<int>>(std::move(rows));
    return make(std::move(out), {a}, [this, a, idx](const Mat<S>& g) {
      if (!needs(a)) return;
      for (size_t i = 0; i < idx->size(); ++i)
        grad(a).row((*idx)[i]) += g.row(static_cast<Eigen::Index>(i));
    });
  }

  // Mean of the token-embedding rows per id sequence: out[r] = mean_t E[ids[r][t]].
  Value embed_mean(Value table, std::shared_ptr<const std::vector<std::vector<int>>> ids) {
    const Mat<S>& e = val(table);
    Mat<S> out = Mat<S>::Zero(static_cast<Eigen::Index>(ids->size()), e.cols());
    for (size_t r = 0; r < ids->size(); ++r) {
      const auto& seq = (*ids)[r];
      for (int id : seq) out.row(static_cast<Eigen::Index>(r)) += e.row(id);
      if (!seq.empty()) out.row(static_cast<Eigen::Index>(r)) /= static_cast<S>(seq.size());
    }
    return make(std::move(out), {table}, [this, table, ids](const Mat<S>& g) {
      if (!needs(table)) return;
      Mat<S>& ge = grad(table);
      for (size_t r = 0; r < ids->size(); ++r) {
        const auto& seq = (*ids)[r];
        if (seq.empty()) continue;
        const S inv = S(1) / static_cast<S>(seq.size());
        for (int id : seq) ge.row(id) += g.row(static_cast<Eigen::Index>(r)) * inv;
      }
    });
  }

  // Row-wise layer norm with learned gain/bias (both [1 x d]).
  Value layer_norm(Value x, Value gain, Value bias, S eps = S(1e-5)) {
    const Mat<S>& v = val(x);
    const Eigen::Index n = v.rows(), d = v.cols();
    Mat<S> xhat(n, d);
    Mat<S> inv_sd(n, 1);
    Mat<S> out(n, d);
    for (Eigen::Index r = 0; r < n; ++r) {
      S mu = v.row(r).mean();
      S var = (v.row(r).array() - mu).square().mean();
      S is = S(1) / std::sqrt(var + eps);
      inv_sd(r, 0) = is;
      xhat.row(r) = ((v.row(r).array() - mu) * is).matrix();
      out.row(r) = xhat.row(r).cwiseProduct(val(gain).row(0)) + val(bias).row(0);
    }
    auto cache = std::make_shared<std::pair<Mat<S>, Mat<S>>>(std::move(xhat), std::move(inv_sd));
    return make(std::move(out), {x, gain, bias},
                [this, x, gain, bias, cache](const Mat<S>& g) {
                  const Mat<S>& xh = cache->first;
                  const Mat<S>& is = cache->second;
                  if (needs(gain)) grad(gain) += g.cwiseProduct(xh).colwise().sum();
                  if (needs(bias)) grad(bias) += g.colwise().sum();
                  if (!needs(x)) return;
                  const Eigen::Index d = xh.cols();
                  Mat<S>& gx = grad(x);
                  for (Eigen::Index r = 0; r < xh.rows(); ++r) {
                    auto gy = (g.row(r).array() * val(gain).row(0).array()).eval();
                    S m1 = gy.mean();
                    S m2 = (gy * xh.row(r).array()).mean();
                    gx.row(r) += ((gy - m1 - xh.row(r).array() * m2) * is(r, 0)).matrix();
                    (void)d;
                  }
                });
  }

  // Exact (erf-based) GELU.
  Value gelu(Value a) {
    static const S inv_sqrt2 = S(1) / std::sqrt(S(2));
    static const S inv_sqrt2pi = S(1) / std::sqrt(S(2) * S(M_PI));
    Mat<S> out = val(a).unaryExpr([](S x) {
      return S(0.5) * x * (S(1) + std::erf(x * inv_sqrt2));
    });
    return make(std::move(out), {a}, [this, a](const Mat<S>& g) {
      if (!needs(a)) return;
      grad(a) += g.cwiseProduct(val(a).unaryExpr([](S x) {
        S cdf = S(0.5) * (S(1) + std::erf(x * inv_sqrt2));
        S pdf = inv_sqrt2pi * std::exp(S(-0.5) * x * x);
        return cdf + x * pdf;
      }));
    });
  }

  Value sigmoid(Value a) {
    auto cached = std::make_shared<Mat<S>>(
        val(a).unaryExpr([](S x) { return S(1) / (S(1) + std::exp(-x)); }));
    return make(Mat<S>(*cached), {a}, [this, a, cached](const Mat<S>& g) {
      if (needs(a))
        grad(a) += g.cwiseProduct((cached->array() * (S(1) - cached->array())).matrix());
    });
  }

  // Per-row dot product of equally shaped a and b -> [n x 1].
  Value rows_dot(Value a, Value b) {
    Mat<S> out = val(a).cwiseProduct(val(b)).rowwise().sum();
    return make(std::move(out), {a, b}, [this, a, b](const Mat<S>& g) {
      if (needs(a)) grad(a) += (val(b).array().colwise() * g.col(0).array()).matrix();
      if (needs(b)) grad(b) += (val(a).array().colwise() * g.col(0).array()).matrix();
    });
  }

  // Per-row cosine similarity -> [n x 1]; eps guards zero rows.
  Value cosine_rows(Value a, Value b, S eps = S(1e-12)) {
    const Mat<S>&va = val(a), &vb = val(b);
    const Eigen::Index n = va.rows();
    Mat<S> out(n, 1);
    for (Eigen::Index r = 0; r < n; ++r) {
      S na = va.row(r).norm(), nb = vb.row(r).norm();
      out(r, 0) = va.row(r).dot(vb.row(r)) / (na * nb + eps);
    }
    return make(std::move(out), {a, b}, [this, a, b, eps](const Mat<S>& g) {
      const Mat<S>&va = val(a), &vb = val(b);
      for (Eigen::Index r = 0; r < va.rows(); ++r) {
        S na = va.row(r).norm(), nb = vb.row(r).norm();
        S den = na * nb + eps;
        S dot = va.row(r).dot(vb.row(r));
        S c = dot / den;
        S gr = g(r, 0);
        if (needs(a))
          grad(a).row(r) += gr * (vb.row(r) / den - c * nb / den * (na > S(0) ? (va.row(r) / na).eval() : va.row(r).eval()));
        if (needs(b))
          grad(b).row(r) += gr * (va.row(r) / den - c * na / den * (nb > S(0) ? (vb.row(r) / nb).eval() : vb.row(r).eval()));
      }
    });
  }

  // Multi-head scaled dot-product attention over matched segment pairs.
  // q: [Rq x d], k/v: [Rk x d]; q_off and kv_off have the same segment count.
  Value attention(Value q, Value k, Value v, Segments q_off, Segments kv_off, int heads) {
    const Mat<S>&vq = val(q), &vk = val(k), &vv = val(v);
    const Eigen::Index d = vq.cols();
    const Eigen::Index dh = d / heads;
    const S inv = S(1) / std::sqrt(static_cast<S>(dh));
    Mat<S> out = Mat<S>::Zero(vq.rows(), d);
    auto probs = std::make_shared<std::vector<Mat<S>>>();
    probs->reserve(static_cast<size_t>(seg_count(q_off)) * static_cast<size_t>(heads));
    for (int s = 0; s < seg_count(q_off); ++s) {
      const int qa = q_off[s], ql = seg_len(q_off, s);
      const int ka = kv_off[s], kl = seg_len(kv_off, s);
      for (int h = 0; h < heads; ++h) {
        auto qh = vq.block(qa, h * dh, ql, dh);
        auto kh = vk.block(ka, h * dh, kl, dh);
        auto vh = vv.block(ka, h * dh, kl, dh);
        Mat<S> scores = qh * kh.transpose() * inv;
        for (Eigen::Index r = 0; r < scores.rows(); ++r) {
          S m = scores.row(r).maxCoeff();
          scores.row(r) = (scores.row(r).array() - m).exp();
          scores.row(r) /= scores.row(r).sum();
        }
        out.block(qa, h * dh, ql, dh).noalias() = scores * vh;
        probs->push_back(std::move(scores));
      }
    }
    auto qo = std::make_shared<Segments>(std::move(q_off));
    auto ko = std::make_shared<Segments>(std::move(kv_off));
    return make(std::move(out), {q, k, v},
                [this, q, k, v, qo, ko, heads, inv, probs](const Mat<S>& g) {
                  const Mat<S>&vq = val(q), &vk = val(k), &vv = val(v);
                  const Eigen::Index d = vq.cols();
                  const Eigen::Index dh = d / heads;
                  size_t pi = 0;
                  for (int s = 0; s < seg_count(*qo); ++s) {
                    const int qa = (*qo)[s], ql = seg_len(*qo, s);
                    const int ka = (*ko)[s], kl = seg_len(*ko, s);
                    for (int h = 0; h < heads; ++h, ++pi) {
                      const Mat<S>& p = (*probs)[pi];
                      auto qh = vq.block(qa, h * dh, ql, dh);
                      auto kh = vk.block(ka, h * dh, kl, dh);
                      auto vh = vv.block(ka, h * dh, kl, dh);
                      auto go = g.block(qa, h * dh, ql, dh);
                      if (needs(v)) grad(v).block(ka, h * dh, kl, dh).noalias() += p.transpose() * go;
                      Mat<S> dp = go * vh.transpose();
                      Mat<S> ds(ql, kl);
                      for (Eigen::Index r = 0; r < ql; ++r) {
                        S dot = dp.row(r).dot(p.row(r));
                        ds.row(r) = (p.row(r).array() * (dp.row(r).array() - dot)).matrix();
                      }
                      ds *= inv;
                      if (needs(q)) grad(q).block(qa, h * dh, ql, dh).noalias() += ds * kh;
                      if (needs(k)) grad(k).block(ka, h * dh, kl, dh).noalias() += ds.transpose() * qh;
                    }
                  }
                });
  }

  // Per-segment mean over rows -> [n_seg x d]. Empty segments yield zeros.
  Value segment_mean(Value a, Segments off) {
    const Mat<S>& v = val(a);
    Mat<S> out = Mat<S>::Zero(seg_count(off), v.cols());
    for (int s = 0; s < seg_count(off); ++s) {
      int l = seg_len(off, s);
      if (l > 0) out.row(s) = v.middleRows(off[s], l).colwise().mean();
    }
    auto o = std::make_shared<Segments>(std::move(off));
    return make(std::move(out), {a}, [this, a, o](const Mat<S>& g) {
      if (!needs(a)) return;
      for (int s = 0; s < seg_count(*o); ++s) {
        int l = seg_len(*o, s);
        if (l > 0)
          grad(a).middleRows((*o)[s], l).rowwise() += (g.row(s) / static_cast<S>(l)).eval();
      }
    });
  }

  // Per-segment sum over rows -> [n_seg x d].
  Value segment_sum(Value a, Segments off) {
    const Mat<S>& v = val(a);
    Mat<S> out = Mat<S>::Zero(seg_count(off), v.cols());
    for (int s = 0; s < seg_count(off); ++s) {
      int l = seg_len(off, s);
      if (l > 0) out.row(s) = v.middleRows(off[s], l).colwise().sum();
    }
    auto o = std::make_shared<Segments>(std::move(off));
    return make(std::move(out), {a}, [this, a, o](const Mat<S>& g) {
      if (!needs(a)) return;
      for (int s = 0; s < seg_count(*o); ++s) {
        int l = seg_len(*o, s);
        if (l > 0) grad(a).middleRows((*o)[s], l).rowwise() += g.row(s);
      }
    });
  }

  // Per-row softmax cross-entropy vs target class ids -> [n x 1] losses.
  // Rows with active[r] == 0 contribute exactly zero loss and gradient.
  Value ce_rows(Value logits, std::shared_ptr<const std::vector<int>> targets,
                std::shared_ptr<const std::vector<uint8_t>> active = nullptr) {
    const Mat<S>& v = val(logits);
    const Eigen::Index n = v.rows();
    Mat<S> out(n, 1);
    auto soft = std::make_shared<Mat<S>>(n, v.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
      if (active && !(*active)[static_cast<size_t>(r)]) {
        out(r, 0) = S(0);
        soft->row(r).setZero();
        continue;
      }
      S m = v.row(r).maxCoeff();
      auto ex = (v.row(r).array() - m).exp().eval();
      S z = ex.sum();
      soft->row(r) = ex / z;
      out(r, 0) = std::log(z) + m - v(r, (*targets)[static_cast<size_t>(r)]);
    }
    return make(std::move(out), {logits}, [this, logits, targets, active, soft](const Mat<S>& g) {
      if (!needs(logits)) return;
      Mat<S>& gl = grad(logits);
      for (Eigen::Index r = 0; r < soft->rows(); ++r) {
        if (active && !(*active)[static_cast<size_t>(r)]) continue;
        gl.row(r) += g(r, 0) * soft->row(r);
        gl(r, (*targets)[static_cast<size_t>(r)]) -= g(r, 0);
      }
    });
  }

  // Per-row mean squared error between equally shaped a and b -> [n x 1].
  Value mse_rows(Value a, Value b) {
    const Mat<S> diff = val(a) - val(b);
    Mat<S> out = diff.array().square().matrix().rowwise().mean();
    const S invd = S(1) / static_cast<S>(val(a).cols());
    auto d = std::make_shared<Mat<S>>(diff);
    return make(std::move(out), {a, b}, [this, a, b, d, invd](const Mat<S>& g) {
      Mat<S> base = ((d->array().colwise() * g.col(0).array()) * (S(2) * invd)).matrix();
      if (needs(a)) grad(a) += base;
      if (needs(b)) grad(b) -= base;
    });
  }

  // Weighted mean of selected rows of a column vector -> [1 x 1].
  Value weighted_mean(Value col, std::shared_ptr<const std::vector<S>> weights) {
    const Mat<S>& v = val(col);
    S acc = S(0);
    for (Eigen::Index r = 0; r < v.rows(); ++r) acc += (*weights)[static_cast<size_t>(r)] * v(r, 0);
    Mat<S> out(1, 1);
    out(0, 0) = acc;
    return make(std::move(out), {col}, [this, col, weights](const Mat<S>& g) {
      if (!needs(col)) return;
      for (Eigen::Index r = 0; r < grad(col).rows(); ++r)
        grad(col)(r, 0) += g(0, 0) * (*weights)[static_cast<size_t>(r)];
    });
  }

  // Inverted dropout; mask is drawn by the caller so the tape stays RNG-free.
  Value dropout(Value a, std::shared_ptr<const Mat<S>> mask) {
    Mat<S> out = val(a).cwiseProduct(*mask);
    return make(std::move(out), {a}, [this, a, mask](const Mat<S>& g) {
      if (needs(a)) grad(a) += g.cwiseProduct(*mask);
    });
  }

  // ---- access & backward --------------------------------------------------

  const Mat<S>& val(Value v) const {
    const Node& n = nodes_[static_cast<size_t>(v.idx)];
    return n.leaf_val ? *n.leaf_val : n.val;
  }

  bool needs(Value v) const { return nodes_[static_cast<size_t>(v.idx)].requires_grad; }

  // Gradient buffer of a node (allocated on first touch).
  Mat<S>& grad(Value v) {
    Node& n = nodes_[static_cast<size_t>(v.idx)];
    Mat<S>& g = n.leaf_grad ? *n.leaf_grad : n.grad;
    const Mat<S>& value = n.leaf_val ? *n.leaf_val : n.val;
    if (g.rows() != value.rows() || g.cols() != value.cols())
      g = Mat<S>::Zero(value.rows(), value.cols());
    return g;
  }

  // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse. The root must
  // be a [1 x 1] scalar.
  void backward(Value root) {
    if (val(root).size() != 1) fail(Status::Internal, "backward root must be scalar");
    grad(root)(0, 0) += S(1);
    for (int i = root.idx; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.requires_grad || !n.backward) continue;
      Mat<S>& g = n.leaf_grad ? *n.leaf_grad : n.grad;
      if (g.size() == 0) continue;  // not on any path to the root
      n.backward(g);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat<S> val;
    Mat<S> grad;
    const Mat<S>* leaf_val = nullptr;
    Mat<S>* leaf_grad = nullptr;
    bool requires_grad = false;
    std::function<void(const Mat<S>&)> backward;
  };

  Value push(Node n) {
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
  }

  Value make(Mat<S> out, const std::vector<Value>& inputs,
             std::function<void(const Mat<S>&)> bw) {
    Node n;
    n.val = std::move(out);
    for (Value in : inputs)
      if (nodes_[static_cast<size_t>(in.idx)].requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.backward = std::move(bw);
    return push(std::move(n));
  }

  std::vector<Node> nodes_;
};

}  // namespace mecd
