#pragma once

// Deliberately naive reference implementations used as test oracles. Nothing
// here shares code with the library beyond the plain data containers.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include <foh/data.hpp>
#include <foh/hash.hpp>
#include <foh/params.hpp>

namespace oracle {

using Bits = std::vector<int>;  // +-1 per bit

inline Bits unpacked(const foh::CodeMatrix& c, std::size_t j) {
  Bits b(c.bits());
  for (std::size_t i = 0; i < c.bits(); ++i) {
    const std::uint64_t word = c.words()[j * c.words_per_code() + i / 64];
    b[i] = ((word >> (i % 64)) & 1u) ? 1 : -1;
  }
  return b;
}

/// sgn(W^T (x - center)) one bit at a time, accumulating in input order.
inline Bits encode(const foh::HashModel& m, std::span<const float> x) {
  Bits b(m.bits());
  for (std::size_t bit = 0; bit < m.bits(); ++bit) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.dim(); ++i) acc += m.W(i, bit) * (static_cast<double>(x[i]) - m.center[i]);
    b[bit] = acc >= 0.0 ? 1 : -1;
  }
  return b;
}

inline int hamming(const Bits& a, const Bits& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

/// Full sort by (distance, index), truncated to alpha.
inline std::vector<std::size_t> nearest(const Bits& q, const std::vector<Bits>& db, std::size_t alpha) {
  std::vector<std::size_t> idx(db.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const int da = hamming(q, db[a]), dbb = hamming(q, db[b]);
    return da != dbb ? da < dbb : a < b;
  });
  idx.resize(alpha);
  return idx;
}

/// Same with explicit tie keys (ids).
inline std::vector<std::uint64_t> nearest_ids(const Bits& q, const std::vector<Bits>& db,
                                              const std::vector<std::uint64_t>& ids, std::size_t alpha) {
  std::vector<std::size_t> idx(db.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const int da = hamming(q, db[a]), dbb = hamming(q, db[b]);
    return da != dbb ? da < dbb : ids[a] < ids[b];
  });
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < std::min(alpha, idx.size()); ++i) out.push_back(ids[idx[i]]);
  return out;
}

/// Graded label-set overlap with std::set arithmetic.
inline double similarity(const std::set<int>& a, const std::set<int>& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::vector<int> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  const double n = static_cast<double>(common.size());
  return (n / static_cast<double>(a.size()) + n / static_cast<double>(b.size())) / 2.0;
}

inline std::set<int> label_set(const foh::LabelMatrix& l, std::size_t j) {
  std::set<int> s;
  for (std::size_t c = 0; c < l.categories(); ++c)
    if (l.test(j, c)) s.insert(static_cast<int>(c));
  return s;
}

inline foh::LabelMatrix labels(std::size_t c, const std::vector<std::set<int>>& sets) {
  foh::LabelMatrix l(c, sets.size());
  for (std::size_t j = 0; j < sets.size(); ++j)
    for (int x : sets[j]) l.set(j, static_cast<std::size_t>(x));
  return l;
}

/// Balanced target entry for the graded rule, written out longhand.
inline double target_multi(const std::set<int>& a, const std::set<int>& b, double eta_s, double eta_d) {
  const double mapped = 2.0 * similarity(a, b) - 1.0;
  return mapped > 0 ? eta_s * mapped : eta_d * mapped;
}

/// The stage objective with explicit loops over every entry.
inline double objective(const Eigen::MatrixXd& bs, const Eigen::MatrixXd& be, const Eigen::MatrixXd& w,
                        const Eigen::MatrixXd& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& ls,
                        const Eigen::MatrixXd& le, const Eigen::MatrixXd& s, const foh::HyperParams& h) {
  const Eigen::Index k = bs.rows(), n = bs.cols(), m = be.cols(), d = x.rows(), c = ls.rows();
  double sim = 0, quant = 0, lab_s = 0, lab_e = 0, wr = 0, pr = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      double dot = 0;
      for (Eigen::Index b = 0; b < k; ++b) dot += bs(b, i) * be(b, j);
      const double r = dot - static_cast<double>(k) * s(i, j);
      sim += r * r;
    }
  for (Eigen::Index b = 0; b < k; ++b)
    for (Eigen::Index i = 0; i < n; ++i) {
      double proj = 0;
      for (Eigen::Index t = 0; t < d; ++t) proj += w(t, b) * x(t, i);
      quant += (proj - bs(b, i)) * (proj - bs(b, i));
      double pl = 0;
      for (Eigen::Index t = 0; t < c; ++t) pl += p(b, t) * ls(t, i);
      lab_s += (bs(b, i) - pl) * (bs(b, i) - pl);
    }
  for (Eigen::Index b = 0; b < k; ++b)
    for (Eigen::Index j = 0; j < m; ++j) {
      double pl = 0;
      for (Eigen::Index t = 0; t < c; ++t) pl += p(b, t) * le(t, j);
      lab_e += (be(b, j) - pl) * (be(b, j) - pl);
    }
  for (Eigen::Index i = 0; i < w.size(); ++i) wr += w.data()[i] * w.data()[i];
  for (Eigen::Index i = 0; i < p.size(); ++i) pr += p.data()[i] * p.data()[i];
  const double theta = h.label_projection ? h.theta : 0.0;
  const double mu = h.label_projection ? h.mu : 0.0;
  return sim + h.sigma * quant + theta * lab_s + mu * lab_e + h.lambda * wr + h.tau * pr;
}

/// Every +-1 matrix of the given shape, in lexicographic bit order.
inline std::vector<Eigen::MatrixXd> all_sign_matrices(Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index cells = rows * cols;
  std::vector<Eigen::MatrixXd> out;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << cells); ++mask) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index t = 0; t < cells; ++t) m.data()[t] = ((mask >> t) & 1u) ? 1.0 : -1.0;
    out.push_back(std::move(m));
  }
  return out;
}

inline Eigen::MatrixXd random_signs(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen) {
  std::bernoulli_distribution coin(0.5);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index t = 0; t < m.size(); ++t) m.data()[t] = coin(gen) ? 1.0 : -1.0;
  return m;
}

inline Eigen::MatrixXd random_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index t = 0; t < m.size(); ++t) m.data()[t] = nd(gen);
  return m;
}

/// Random label matrix with every sample carrying 1..c labels.
inline foh::LabelMatrix random_labels(std::size_t c, std::size_t n, std::mt19937_64& gen) {
  foh::LabelMatrix l(c, n);
  std::uniform_int_distribution<std::size_t> pick(0, c - 1);
  std::bernoulli_distribution coin(0.4);
  for (std::size_t j = 0; j < n; ++j) {
    l.set(j, pick(gen));
    for (std::size_t t = 0; t < c; ++t)
      if (coin(gen)) l.set(j, t);
  }
  return l;
}

/// Central finite-difference gradient of f at x.
template <class F>
Eigen::MatrixXd numeric_gradient(F f, Eigen::MatrixXd x, double h = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.size(); ++t) {
    const double orig = x.data()[t];
    x.data()[t] = orig + h;
    const double up = f(x);
    x.data()[t] = orig - h;
    const double down = f(x);
    x.data()[t] = orig;
    g.data()[t] = (up - down) / (2 * h);
  }
  return g;
}

/// Precision at each relevant rank, averaged over |relevant|.
inline double average_precision(const std::vector<std::uint64_t>& ranked, const std::set<std::uint64_t>& rel) {
  if (rel.empty()) return 0.0;
  double sum = 0;
  int hits = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r)
    if (rel.count(ranked[r])) sum += static_cast<double>(++hits) / static_cast<double>(r + 1);
  return sum / static_cast<double>(rel.size());
}

}  // namespace oracle
