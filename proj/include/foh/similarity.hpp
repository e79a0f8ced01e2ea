#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "data.hpp"
#include "params.hpp"

namespace foh {

enum class SimilarityMode {
  single,  // one label per sample, +1 same / -1 different
  multi,   // graded overlap in [0,1], mapped to 2s-1
  binary,  // +1 when any label is shared, -1 otherwise
};

inline std::size_t popcount(std::span<const std::uint64_t> bits) {
  std::size_t n = 0;
  for (auto w : bits) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

inline std::size_t intersection_count(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) throw std::invalid_argument("category count mismatch");
  std::size_t n = 0;
  for (std::size_t w = 0; w < a.size(); ++w) n += static_cast<std::size_t>(std::popcount(a[w] & b[w]));
  return n;
}

/// Average of the two one-sided overlap ratios |a & b| / |a| and |a & b| / |b|.
/// Zero when either set is empty.
inline double pair_similarity_multilabel(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  const std::size_t na = popcount(a);
  const std::size_t nb = popcount(b);
  if (na == 0 || nb == 0) return 0.0;
  const double common = static_cast<double>(intersection_count(a, b));
  return 0.5 * (common / static_cast<double>(na) + common / static_cast<double>(nb));
}

inline int pair_similarity_single(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (popcount(a) != 1 || popcount(b) != 1) throw std::invalid_argument("not single-label");
  return intersection_count(a, b) == 1 ? 1 : -1;
}

inline int pair_similarity_binary(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  return intersection_count(a, b) > 0 ? 1 : -1;
}

/// Signed similarity before balancing, in [-1, 1].
inline double signed_similarity(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                                SimilarityMode mode) {
  switch (mode) {
    case SimilarityMode::single: return pair_similarity_single(a, b);
    case SimilarityMode::binary: return pair_similarity_binary(a, b);
    case SimilarityMode::multi: return 2.0 * pair_similarity_multilabel(a, b) - 1.0;
  }
  return 0.0;
}

/// Scales positive (similar) entries by eta_s and the rest by eta_d.
inline double balance(double signed_value, const HyperParams& hyper) {
  return signed_value > 0.0 ? hyper.eta_s * signed_value : hyper.eta_d * signed_value;
}

/// Balanced pairwise target between stream rows and existing columns.
///
/// Samples with identical label sets produce identical rows (or columns), so
/// the matrix is held as row groups x column groups plus a group index per
/// row and column. Products with code matrices then cost O(k (n + m) + k G_r G_c)
/// instead of O(k n m).
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  SimilarityMatrix(std::vector<std::uint32_t> row_group, std::vector<std::uint32_t> col_group,
                   Eigen::MatrixXd kernel, SimilarityMode mode)
      : row_group_(std::move(row_group)), col_group_(std::move(col_group)), kernel_(std::move(kernel)),
        mode_(mode) {
    row_count_.assign(static_cast<std::size_t>(kernel_.rows()), 0);
    col_count_.assign(static_cast<std::size_t>(kernel_.cols()), 0);
    for (auto g : row_group_) ++row_count_.at(g);
    for (auto g : col_group_) ++col_count_.at(g);
  }

  std::size_t rows() const { return row_group_.size(); }
  std::size_t cols() const { return col_group_.size(); }
  SimilarityMode mode() const { return mode_; }
  const Eigen::MatrixXd& kernel() const { return kernel_; }

  double operator()(std::size_t i, std::size_t j) const { return kernel_(row_group_[i], col_group_[j]); }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd out(rows(), cols());
    for (std::size_t j = 0; j < cols(); ++j)
      for (std::size_t i = 0; i < rows(); ++i) out(i, j) = (*this)(i, j);
    return out;
  }

  /// codes (k x rows) times this matrix -> k x cols.
  Eigen::MatrixXd left_multiply(const Eigen::MatrixXd& codes) const {
    if (static_cast<std::size_t>(codes.cols()) != rows()) throw std::invalid_argument("dimension mismatch");
    Eigen::MatrixXd grouped = Eigen::MatrixXd::Zero(codes.rows(), kernel_.rows());
    for (std::size_t i = 0; i < rows(); ++i) grouped.col(row_group_[i]) += codes.col(i);
    const Eigen::MatrixXd per_group = grouped * kernel_;
    Eigen::MatrixXd out(codes.rows(), cols());
    for (std::size_t j = 0; j < cols(); ++j) out.col(j) = per_group.col(col_group_[j]);
    return out;
  }

  /// codes (k x cols) times the transpose of this matrix -> k x rows.
  Eigen::MatrixXd right_multiply_transpose(const Eigen::MatrixXd& codes) const {
    if (static_cast<std::size_t>(codes.cols()) != cols()) throw std::invalid_argument("dimension mismatch");
    Eigen::MatrixXd grouped = Eigen::MatrixXd::Zero(codes.rows(), kernel_.cols());
    for (std::size_t j = 0; j < cols(); ++j) grouped.col(col_group_[j]) += codes.col(j);
    const Eigen::MatrixXd per_group = grouped * kernel_.transpose();
    Eigen::MatrixXd out(codes.rows(), rows());
    for (std::size_t i = 0; i < rows(); ++i) out.col(i) = per_group.col(row_group_[i]);
    return out;
  }

  double squared_norm() const {
    double s = 0.0;
    for (Eigen::Index h = 0; h < kernel_.cols(); ++h)
      for (Eigen::Index g = 0; g < kernel_.rows(); ++g)
        s += static_cast<double>(row_count_[g]) * static_cast<double>(col_count_[h]) * kernel_(g, h) * kernel_(g, h);
    return s;
  }

  /// Restriction to a subset of columns.
  SimilarityMatrix select_columns(std::span<const std::size_t> cols) const {
    std::vector<std::uint32_t> cg;
    cg.reserve(cols.size());
    for (auto j : cols) cg.push_back(col_group_.at(j));
    return {row_group_, std::move(cg), kernel_, mode_};
  }

 private:
  std::vector<std::uint32_t> row_group_;
  std::vector<std::uint32_t> col_group_;
  std::vector<std::size_t> row_count_;
  std::vector<std::size_t> col_count_;
  Eigen::MatrixXd kernel_;
  SimilarityMode mode_ = SimilarityMode::multi;
};

namespace detail {

// Group index per sample, first-appearance order; returns group representatives.
inline std::vector<std::size_t> group_label_sets(const LabelMatrix& l, std::vector<std::uint32_t>& group) {
  std::map<std::vector<std::uint64_t>, std::uint32_t> seen;
  std::vector<std::size_t> reps;
  group.resize(l.size());
  for (std::size_t j = 0; j < l.size(); ++j) {
    const auto row = l.row(j);
    std::vector<std::uint64_t> key(row.begin(), row.end());
    auto [it, inserted] = seen.emplace(std::move(key), static_cast<std::uint32_t>(reps.size()));
    if (inserted) reps.push_back(j);
    group[j] = it->second;
  }
  return reps;
}

}  // namespace detail

/// Pairwise target between stream labels (rows) and existing labels (columns),
/// balanced by eta_s / eta_d.
inline SimilarityMatrix build_balanced_target(const LabelMatrix& stream, const LabelMatrix& existing,
                                              const HyperParams& hyper, SimilarityMode mode) {
  if (stream.categories() != existing.categories()) throw std::invalid_argument("category count mismatch");
  std::vector<std::uint32_t> rg, cg;
  const auto row_reps = detail::group_label_sets(stream, rg);
  const auto col_reps = detail::group_label_sets(existing, cg);
  Eigen::MatrixXd kernel(static_cast<Eigen::Index>(row_reps.size()), static_cast<Eigen::Index>(col_reps.size()));
  for (std::size_t h = 0; h < col_reps.size(); ++h) {
    for (std::size_t g = 0; g < row_reps.size(); ++g) {
      const auto a = stream.row(row_reps[g]);
      const auto b = existing.row(col_reps[h]);
      kernel(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(h)) =
          balance(signed_similarity(a, b, mode), hyper);
    }
  }
  return {std::move(rg), std::move(cg), std::move(kernel), mode};
}

/// Single-label data gets the +-1 rule; anything else the graded rule.
inline SimilarityMode detect_mode(const LabelMatrix& labels) {
  for (std::size_t j = 0; j < labels.size(); ++j)
    if (labels.count(j) != 1) return SimilarityMode::multi;
  return SimilarityMode::single;
}

}  // namespace foh
