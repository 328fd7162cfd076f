#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "rng.hpp"
#include "status.hpp"
#include "tape.hpp"

namespace mecd {

template <typename S>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Mat<S> w;
    Mat<S> g;
    bool decay = false;  // weight decay applies (weight matrices only)
  };

  Mat<S>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, bool decay) {
    if (index_.count(name)) fail(Status::Internal, "duplicate parameter " + name);
    index_[name] = static_cast<int>(entries_.size());
    entries_.push_back(Entry{name, Mat<S>::Zero(rows, cols), Mat<S>::Zero(rows, cols), decay});
    return entries_.back().w;
  }

  Entry& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) fail(Status::Internal, "unknown parameter " + name);
    return entries_[static_cast<size_t>(it->second)];
  }
  const Entry& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail(Status::Internal, "unknown parameter " + name);
    return entries_[static_cast<size_t>(it->second)];
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grad() {
    for (auto& e : entries_) e.g.setZero();
  }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& e : entries_) n += static_cast<size_t>(e.w.size());
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Adam with decoupled weight decay; decay is skipped for biases, gains and
// embeddings (entries flagged decay=false).
template <typename S>
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.01)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void step(ParameterStore<S>& params, double lr) {
    if (m_.empty()) {
      for (const auto& e : params.entries()) {
        m_.push_back(Mat<S>::Zero(e.w.rows(), e.w.cols()));
        v_.push_back(Mat<S>::Zero(e.w.rows(), e.w.cols()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params.entries().size(); ++i) {
      auto& e = params.entries()[i];
      m_[i] = (m_[i].array() * S(beta1_) + e.g.array() * S(1.0 - beta1_)).matrix();
      v_[i] = (v_[i].array() * S(beta2_) + e.g.array().square() * S(1.0 - beta2_)).matrix();
      auto mhat = (m_[i].array() / S(bc1));
      auto vhat = (v_[i].array() / S(bc2));
      e.w.array() -= S(lr) * (mhat / (vhat.sqrt() + S(eps_)));
      if (e.decay && weight_decay_ > 0.0) e.w.array() -= S(lr * weight_decay_) * e.w.array();
    }
  }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  int64_t t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

// ---- checkpoint container --------------------------------------------------
// "VGCMCKPT" | u32 version | u32 scalar_size | u64 meta_len | meta JSON |
// u64 n_entries | { u32 name_len | name | u32 rows | u32 cols | payload }*
// Raw little-endian scalars; save -> load -> save is byte-stable.

namespace detail {
inline void put_u32le(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
inline uint32_t get_u32le(std::istream& in) {
  unsigned char b[4] = {0, 0, 0, 0};
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
inline void put_u64le(std::ostream& out, uint64_t v) {
  put_u32le(out, static_cast<uint32_t>(v));
  put_u32le(out, static_cast<uint32_t>(v >> 32));
}
inline uint64_t get_u64le(std::istream& in) {
  uint64_t lo = get_u32le(in);
  uint64_t hi = get_u32le(in);
  return lo | (hi << 32);
}
}  // namespace detail

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<S>& params,
                     const std::string& meta_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Status::Io, "cannot write " + path.string());
  out.write("VGCMCKPT", 8);
  detail::put_u32le(out, 1);
  detail::put_u32le(out, sizeof(S));
  detail::put_u64le(out, meta_json.size());
  out.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
  detail::put_u64le(out, params.entries().size());
  for (const auto& e : params.entries()) {
    detail::put_u32le(out, static_cast<uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::put_u32le(out, static_cast<uint32_t>(e.w.rows()));
    detail::put_u32le(out, static_cast<uint32_t>(e.w.cols()));
    out.write(reinterpret_cast<const char*>(e.w.data()),
              static_cast<std::streamsize>(sizeof(S) * static_cast<size_t>(e.w.size())));
  }
}

struct RawCheckpoint {
  std::string meta_json;
  uint32_t scalar_size = 0;
  struct Array {
    std::string name;
    uint32_t rows = 0, cols = 0;
    std::vector<char> bytes;
  };
  std::vector<Array> arrays;
};

inline RawCheckpoint load_checkpoint_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Status::Io, "cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::string(magic, 8) != "VGCMCKPT")
    fail(Status::Magic, path.string() + ": not a checkpoint file");
  uint32_t version = detail::get_u32le(in);
  if (version != 1) fail(Status::Schema, path.string() + ": unsupported checkpoint version");
  RawCheckpoint ck;
  ck.scalar_size = detail::get_u32le(in);
  uint64_t meta_len = detail::get_u64le(in);
  ck.meta_json.resize(meta_len);
  in.read(ck.meta_json.data(), static_cast<std::streamsize>(meta_len));
  uint64_t n = detail::get_u64le(in);
  for (uint64_t i = 0; i < n; ++i) {
    RawCheckpoint::Array a;
    uint32_t name_len = detail::get_u32le(in);
    a.name.resize(name_len);
    in.read(a.name.data(), name_len);
    a.rows = detail::get_u32le(in);
    a.cols = detail::get_u32le(in);
    a.bytes.resize(static_cast<size_t>(ck.scalar_size) * a.rows * a.cols);
    in.read(a.bytes.data(), static_cast<std::streamsize>(a.bytes.size()));
    if (!in) fail(Status::Truncated, path.string() + ": truncated checkpoint");
    ck.arrays.push_back(std::move(a));
  }
  return ck;
}

// Copies raw arrays into an existing store (shapes must match the model that
// created the store). Converts between f32/f64 payloads when needed.
template <typename S>
void restore_params(ParameterStore<S>& params, const RawCheckpoint& ck) {
  for (const auto& a : ck.arrays) {
    auto& e = params.at(a.name);
    if (e.w.rows() != static_cast<Eigen::Index>(a.rows) ||
        e.w.cols() != static_cast<Eigen::Index>(a.cols))
      fail(Status::Shape, "checkpoint array " + a.name + " has unexpected shape");
    if (ck.scalar_size == sizeof(S)) {
      std::memcpy(e.w.data(), a.bytes.data(), a.bytes.size());
    } else if (ck.scalar_size == 4) {
      const float* src = reinterpret_cast<const float*>(a.bytes.data());
      for (Eigen::Index i = 0; i < e.w.size(); ++i) e.w.data()[i] = static_cast<S>(src[i]);
    } else if (ck.scalar_size == 8) {
      const double* src = reinterpret_cast<const double*>(a.bytes.data());
      for (Eigen::Index i = 0; i < e.w.size(); ++i) e.w.data()[i] = static_cast<S>(src[i]);
    } else {
      fail(Status::Schema, "unsupported checkpoint scalar size");
    }
  }
}

}  // namespace mecd
