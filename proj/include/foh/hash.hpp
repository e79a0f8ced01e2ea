#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cassert>
#include <cstdint>
#include <iostream>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "data.hpp"
#include "params.hpp"
#include "util.hpp"

namespace foh {

/// Sign with the tie at zero mapped to +1.
inline int sgn(double x) { return x >= 0.0 ? 1 : -1; }

/// Bit-packed binary codes. Bit i of a code lives in word i/64 at position
/// i%64; a stored 1 means +1 and a stored 0 means -1. Padding bits past k are
/// always zero so that whole-word XOR distances are exact.
class CodeMatrix {
 public:
  CodeMatrix() = default;
  CodeMatrix(std::size_t k, std::size_t n) : k_(k), n_(n), words_((k + 63) / 64), data_(n * words_, 0) {
    if (k == 0) throw std::invalid_argument("code length must be >= 1");
  }

  std::size_t bits() const { return k_; }
  std::size_t size() const { return n_; }
  std::size_t words_per_code() const { return words_; }
  const std::vector<std::uint64_t>& words() const { return data_; }

  std::span<const std::uint64_t> code(std::size_t j) const { return {data_.data() + j * words_, words_}; }
  std::span<std::uint64_t> code(std::size_t j) { return {data_.data() + j * words_, words_}; }

  int value(std::size_t j, std::size_t bit) const {
    return ((data_[j * words_ + bit / 64] >> (bit % 64)) & 1u) ? 1 : -1;
  }
  void set(std::size_t j, std::size_t bit, int sign) {
    auto& w = data_[j * words_ + bit / 64];
    const std::uint64_t mask = std::uint64_t{1} << (bit % 64);
    w = sign > 0 ? (w | mask) : (w & ~mask);
  }

  void push_back(std::span<const std::uint64_t> code) {
    if (code.size() != words_) throw std::invalid_argument("code width mismatch");
    data_.insert(data_.end(), code.begin(), code.end());
    ++n_;
  }
  void append(const CodeMatrix& other) {
    if (other.k_ != k_) throw std::invalid_argument("code length mismatch");
    data_.insert(data_.end(), other.data_.begin(), other.data_.end());
    n_ += other.n_;
  }

  bool canonical() const {
    if (k_ % 64 == 0) return true;
    const std::uint64_t pad = ~std::uint64_t{0} << (k_ % 64);
    for (std::size_t j = 0; j < n_; ++j)
      if (data_[j * words_ + words_ - 1] & pad) return false;
    return true;
  }

  /// k x n matrix of +-1 values.
  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd out(k_, n_);
    for (std::size_t j = 0; j < n_; ++j)
      for (std::size_t i = 0; i < k_; ++i) out(i, j) = value(j, i);
    return out;
  }

  /// Packs sgn of each entry of a k x n real matrix.
  static CodeMatrix from_signs(const Eigen::MatrixXd& m) {
    CodeMatrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) out.set(j, i, sgn(m(i, j)));
    return out;
  }

  friend bool operator==(const CodeMatrix&, const CodeMatrix&) = default;

 private:
  std::size_t k_ = 1;
  std::size_t n_ = 0;
  std::size_t words_ = 1;
  std::vector<std::uint64_t> data_;
};

/// Number of differing bits.
inline std::size_t hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) throw std::invalid_argument("code length mismatch");
  std::size_t d = 0;
  for (std::size_t w = 0; w < a.size(); ++w) d += static_cast<std::size_t>(std::popcount(a[w] ^ b[w]));
  return d;
}

/// Learned state: projection W (d x k), label projector P (k x c), and the
/// running feature mean subtracted before projection.
struct HashModel {
  Eigen::MatrixXd W;
  Eigen::MatrixXd P;
  Eigen::VectorXd center;
  std::uint64_t seen = 0;  // samples folded into `center`
  HyperParams hyper;

  std::size_t dim() const { return static_cast<std::size_t>(W.rows()); }
  std::size_t bits() const { return static_cast<std::size_t>(W.cols()); }
  std::size_t categories() const { return static_cast<std::size_t>(P.cols()); }

  static HashModel zeros(std::size_t d, std::size_t k, std::size_t c, HyperParams hyper = {}) {
    if (k == 0) throw std::invalid_argument("code length must be >= 1");
    return {Eigen::MatrixXd::Zero(d, k), Eigen::MatrixXd::Zero(k, c), Eigen::VectorXd::Zero(d), 0,
            hyper};
  }

  /// Folds a batch into the running mean.
  void update_center(const FeatureMatrix& x) {
    if (x.size() == 0) return;
    if (x.dim() != dim()) throw std::invalid_argument("dimension mismatch");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
    for (std::size_t j = 0; j < x.size(); ++j) {
      const auto s = x.sample(j);
      for (std::size_t i = 0; i < s.size(); ++i) sum[i] += s[i];
    }
    const double total = static_cast<double>(seen + x.size());
    center = center * (static_cast<double>(seen) / total) + sum / total;
    seen += x.size();
  }

  /// Zero-column check; true when every bit's projection is informative.
  bool all_columns_nonzero() const {
    for (Eigen::Index b = 0; b < W.cols(); ++b)
      if (W.col(b).squaredNorm() == 0.0) return false;
    return true;
  }

  bool all_finite() const { return W.allFinite() && P.allFinite() && center.allFinite(); }
};

/// Row-major copy of W so one sample's k projections accumulate over the
/// input dimensions in a fixed order. A sample's code therefore never depends
/// on which other samples are encoded alongside it.
class Encoder {
 public:
  explicit Encoder(const HashModel& m)
      : d_(m.dim()), k_(m.bits()), weights_(d_ * k_), center_(m.center.data(), m.center.data() + d_) {
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t b = 0; b < k_; ++b) weights_[i * k_ + b] = m.W(i, b);
    acc_.resize(k_);
  }

  std::size_t dim() const { return d_; }
  std::size_t bits() const { return k_; }

  void encode_into(std::span<const float> x, std::span<std::uint64_t> code) {
    if (x.size() != d_) throw std::invalid_argument("dimension mismatch");
    std::fill(acc_.begin(), acc_.end(), 0.0);
    for (std::size_t i = 0; i < d_; ++i) {
      const double xi = static_cast<double>(x[i]) - center_[i];
      const double* w = weights_.data() + i * k_;
      for (std::size_t b = 0; b < k_; ++b) acc_[b] += w[b] * xi;
    }
    std::fill(code.begin(), code.end(), 0);
    for (std::size_t b = 0; b < k_; ++b)
      if (acc_[b] >= 0.0) code[b / 64] |= std::uint64_t{1} << (b % 64);
  }

 private:
  std::size_t d_, k_;
  std::vector<double> weights_;
  std::vector<double> center_;
  std::vector<double> acc_;
};

/// code_j = sgn(W^T (x_j - center)).
inline CodeMatrix encode(const HashModel& model, const FeatureMatrix& x) {
  if (x.dim() != model.dim()) throw std::invalid_argument("dimension mismatch");
  Encoder enc(model);
  CodeMatrix out(model.bits(), x.size());
  for (std::size_t j = 0; j < x.size(); ++j) enc.encode_into(x.sample(j), out.code(j));
  assert(out.canonical());
  return out;
}

/// Encodes only the listed rows of `x`.
inline CodeMatrix encode_rows(const HashModel& model, const FeatureMatrix& x,
                              std::span<const std::uint64_t> rows) {
  if (x.dim() != model.dim()) throw std::invalid_argument("dimension mismatch");
  Encoder enc(model);
  CodeMatrix out(model.bits(), rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) enc.encode_into(x.sample(rows[j]), out.code(j));
  return out;
}

inline CodeMatrix encode_one(const HashModel& model, std::span<const float> x) {
  Encoder enc(model);
  CodeMatrix out(model.bits(), 1);
  enc.encode_into(x, out.code(0));
  return out;
}

/// Indices of the `alpha` codes in `db` nearest to `query`, ascending by
/// Hamming distance. Ties go to the smaller tie key, which defaults to the
/// index into `db`.
inline std::vector<std::size_t> select_nearest(std::span<const std::uint64_t> query, const CodeMatrix& db,
                                               std::size_t alpha,
                                               std::span<const std::uint64_t> tie_keys = {}) {
  if (alpha > db.size()) throw std::invalid_argument("alpha exceeds database size");
  if (query.size() != db.words_per_code()) throw std::invalid_argument("code length mismatch");
  if (!tie_keys.empty() && tie_keys.size() != db.size()) throw std::invalid_argument("tie key count mismatch");
  const std::size_t n = db.size();
  const std::size_t k = db.bits();
  std::vector<std::uint32_t> dist(n);
  std::vector<std::size_t> hist(k + 2, 0);
  for (std::size_t j = 0; j < n; ++j) {
    dist[j] = static_cast<std::uint32_t>(hamming(query, db.code(j)));
    ++hist[dist[j] + 1];
  }
  if (alpha == 0) return {};
  // hist[t] becomes the number of codes strictly closer than t.
  for (std::size_t t = 1; t < hist.size(); ++t) hist[t] += hist[t - 1];
  std::size_t cutoff = 0;
  while (hist[cutoff + 1] < alpha) ++cutoff;

  std::vector<std::size_t> out;
  if (tie_keys.empty()) {
    // Stable counting sort over distances <= cutoff.
    const std::size_t kept = hist[cutoff + 1];
    out.resize(kept);
    std::vector<std::size_t> next(hist.begin(), hist.begin() + static_cast<std::ptrdiff_t>(cutoff + 1));
    for (std::size_t j = 0; j < n; ++j)
      if (dist[j] <= cutoff) out[next[dist[j]]++] = j;
  } else {
    for (std::size_t j = 0; j < n; ++j)
      if (dist[j] <= cutoff) out.push_back(j);
    std::sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
      if (dist[a] != dist[b]) return dist[a] < dist[b];
      if (tie_keys[a] != tie_keys[b]) return tie_keys[a] < tie_keys[b];
      return a < b;
    });
  }
  out.resize(alpha);
  return out;
}

/// alpha x n_a index matrix, column-major: column j lists the alpha nearest
/// codes of `b` to code j of `a`.
struct IndexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> data;

  std::span<const std::size_t> column(std::size_t j) const { return {data.data() + j * rows, rows}; }
};

/// Top-alpha selection between two code sets.
inline IndexMatrix top_alpha(const CodeMatrix& a, const CodeMatrix& b, std::size_t alpha,
                             unsigned threads = 1) {
  if (a.bits() != b.bits()) throw std::invalid_argument("code length mismatch");
  if (alpha > b.size()) throw std::invalid_argument("alpha exceeds database size");
  IndexMatrix out{alpha, a.size(), std::vector<std::size_t>(alpha * a.size())};
  parallel_for(a.size(), threads, [&](std::size_t j) {
    const auto col = select_nearest(a.code(j), b, alpha);
    std::copy(col.begin(), col.end(), out.data.begin() + static_cast<std::ptrdiff_t>(j * alpha));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Code file "FOHC": magic, u32 version, u32 k, u64 n, n*ceil(k/64) u64 words.

inline void write_codes(std::ostream& os, const CodeMatrix& codes) {
  io::put_magic(os, "FOHC");
  io::put_u32(os, 1);
  io::put_u32(os, static_cast<std::uint32_t>(codes.bits()));
  io::put_u64(os, codes.size());
  for (auto w : codes.words()) io::put_u64(os, w);
}

inline CodeMatrix read_codes(std::istream& is) {
  io::expect_magic(is, "FOHC");
  io::expect_version(is, "code file");
  const auto k = io::get_u32(is, "code header");
  const auto n = io::get_u64(is, "code header");
  if (k == 0) throw std::runtime_error("malformed header: k = 0");
  CodeMatrix out(k, n);
  for (std::uint64_t j = 0; j < n; ++j)
    for (auto& w : out.code(j)) w = io::get_u64(is, "code block");
  if (!out.canonical()) throw std::runtime_error("code file has nonzero padding bits");
  return out;
}

inline void save_codes(const std::string& path, const CodeMatrix& codes) {
  auto os = io::open_out(path);
  write_codes(os, codes);
}

inline CodeMatrix load_codes(const std::string& path) {
  auto is = io::open_in(path);
  return read_codes(is);
}

// ---------------------------------------------------------------------------
// Model file "FOHM": magic, u32 version, u32 d, u32 k, u32 c, W (d*k f64,
// column-major), P (k*c f64, column-major), center (d f64), then key=value
// lines to end of file. `seen` is carried in the key=value block.

inline void write_model(std::ostream& os, const HashModel& m) {
  io::put_magic(os, "FOHM");
  io::put_u32(os, 1);
  io::put_u32(os, static_cast<std::uint32_t>(m.dim()));
  io::put_u32(os, static_cast<std::uint32_t>(m.bits()));
  io::put_u32(os, static_cast<std::uint32_t>(m.categories()));
  for (Eigen::Index i = 0; i < m.W.size(); ++i) io::put_f64(os, m.W.data()[i]);
  for (Eigen::Index i = 0; i < m.P.size(); ++i) io::put_f64(os, m.P.data()[i]);
  for (Eigen::Index i = 0; i < m.center.size(); ++i) io::put_f64(os, m.center[i]);
  auto kv = m.hyper.to_map();
  kv["center_seen"] = std::to_string(m.seen);
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
}

inline HashModel read_model(std::istream& is) {
  io::expect_magic(is, "FOHM");
  io::expect_version(is, "model file");
  const auto d = io::get_u32(is, "model header");
  const auto k = io::get_u32(is, "model header");
  const auto c = io::get_u32(is, "model header");
  if (d == 0 || k == 0) throw std::runtime_error("malformed header: zero dimension");
  HashModel m = HashModel::zeros(d, k, c);
  for (Eigen::Index i = 0; i < m.W.size(); ++i) m.W.data()[i] = io::get_f64(is, "model W");
  for (Eigen::Index i = 0; i < m.P.size(); ++i) m.P.data()[i] = io::get_f64(is, "model P");
  for (Eigen::Index i = 0; i < m.center.size(); ++i) m.center[i] = io::get_f64(is, "model center");
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed hyperparameter line: " + line);
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    if (key == "center_seen") m.seen = std::stoull(value);
    else if (!m.hyper.set(key, value)) throw std::runtime_error("unknown hyperparameter in model: " + key);
  }
  if (!m.all_finite()) throw std::runtime_error("model contains non-finite values");
  return m;
}

inline void save_model(const std::string& path, const HashModel& m) {
  auto os = io::open_out(path);
  write_model(os, m);
}

inline HashModel load_model(const std::string& path) {
  auto is = io::open_in(path);
  return read_model(is);
}

/// Standard-normal W (seeded), zero P and center.
inline HashModel gaussian_model(std::size_t d, std::size_t k, std::size_t c, std::uint64_t seed,
                                HyperParams hyper = {}) {
  HashModel m = HashModel::zeros(d, k, c, hyper);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index b = 0; b < m.W.cols(); ++b)
    for (Eigen::Index i = 0; i < m.W.rows(); ++i) m.W(i, b) = normal(gen);
  return m;
}

}  // namespace foh
