#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "data.hpp"
#include "hash.hpp"
#include "params.hpp"
#include "similarity.hpp"

namespace foh {

// The four alternating steps work on dense +-1 matrices (k x n as doubles);
// codes are packed again only when a stage finishes.

/// Loss weights actually used: label projection off zeroes theta and mu.
inline HyperParams effective_weights(HyperParams h) {
  if (!h.label_projection) h.theta = h.mu = 0.0;
  return h;
}

/// Per-term breakdown of the stage objective.
struct ObjectiveTerms {
  double similarity = 0, quantization = 0, stream_labels = 0, existing_labels = 0, w_reg = 0, p_reg = 0;
  double total() const { return similarity + quantization + stream_labels + existing_labels + w_reg + p_reg; }
};

/// ||Bs^T Be - k S||^2 + sigma ||W^T X - Bs||^2 + theta ||Bs - P Ls||^2
///   + mu ||Be - P Le||^2 + lambda ||W||^2 + tau ||P||^2
inline ObjectiveTerms objective_terms(const Eigen::MatrixXd& bs, const Eigen::MatrixXd& be,
                                      const Eigen::MatrixXd& w, const Eigen::MatrixXd& p,
                                      const Eigen::MatrixXd& x, const Eigen::MatrixXd& ls,
                                      const Eigen::MatrixXd& le, const SimilarityMatrix& s,
                                      const HyperParams& hyper) {
  const auto h = effective_weights(hyper);
  const double k = static_cast<double>(bs.rows());
  if (be.rows() != bs.rows() || w.cols() != bs.rows() || w.rows() != x.rows() || x.cols() != bs.cols() ||
      ls.cols() != bs.cols() || le.cols() != be.cols() || s.rows() != static_cast<std::size_t>(bs.cols()) ||
      s.cols() != static_cast<std::size_t>(be.cols()) || p.rows() != bs.rows() || p.cols() != ls.rows() ||
      le.rows() != ls.rows())
    throw std::invalid_argument("objective: dimension mismatch");
  ObjectiveTerms t;
  if (be.cols() > 0) {
    // ||Bs^T Be||^2 = <Bs Bs^T, Be Be^T>; the cross term goes through the factored S.
    const Eigen::MatrixXd gs = bs * bs.transpose();
    const Eigen::MatrixXd ge = be * be.transpose();
    const double inner = gs.cwiseProduct(ge).sum();
    const double cross = be.cwiseProduct(s.left_multiply(bs)).sum();
    t.similarity = inner - 2.0 * k * cross + k * k * s.squared_norm();
  }
  t.quantization = h.sigma * (w.transpose() * x - bs).squaredNorm();
  t.stream_labels = h.theta * (bs - p * ls).squaredNorm();
  if (be.cols() > 0) t.existing_labels = h.mu * (be - p * le).squaredNorm();
  t.w_reg = h.lambda * w.squaredNorm();
  t.p_reg = h.tau * p.squaredNorm();
  return t;
}

inline double objective(const Eigen::MatrixXd& bs, const Eigen::MatrixXd& be, const Eigen::MatrixXd& w,
                        const Eigen::MatrixXd& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& ls,
                        const Eigen::MatrixXd& le, const SimilarityMatrix& s, const HyperParams& hyper) {
  return objective_terms(bs, be, w, p, x, ls, le, s, hyper).total();
}

/// Ridge minimizer of sigma ||W^T X - Bs||^2 + lambda ||W||^2:
/// W = (sigma X X^T + lambda I)^-1 sigma X Bs^T.
inline Eigen::MatrixXd w_step(const Eigen::MatrixXd& x, const Eigen::MatrixXd& bs, const HyperParams& hyper) {
  if (x.cols() != bs.cols()) throw std::invalid_argument("w_step: dimension mismatch");
  if (x.cols() < 1) throw std::invalid_argument("w_step: empty batch");
  const Eigen::Index d = x.rows();
  Eigen::MatrixXd a = hyper.sigma * (x * x.transpose());
  a.diagonal().array() += hyper.lambda;
  const Eigen::MatrixXd rhs = hyper.sigma * (x * bs.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success || d == 0) throw std::runtime_error("w_step: solver failure (system not positive definite)");
  Eigen::MatrixXd w = llt.solve(rhs);
  if (!w.allFinite()) throw std::runtime_error("w_step: solver failure (non-finite solution)");
  return w;
}

/// Minimizer of theta ||Bs - P Ls||^2 + mu ||Be - P Le||^2 + tau ||P||^2:
/// P = (mu Be Le^T + theta Bs Ls^T)(theta Ls Ls^T + mu Le Le^T + tau I)^-1.
inline Eigen::MatrixXd p_step(const Eigen::MatrixXd& bs, const Eigen::MatrixXd& be, const Eigen::MatrixXd& ls,
                              const Eigen::MatrixXd& le, const HyperParams& hyper) {
  if (ls.cols() != bs.cols() || le.cols() != be.cols() || ls.rows() != le.rows())
    throw std::invalid_argument("p_step: dimension mismatch");
  const auto h = effective_weights(hyper);
  const Eigen::Index c = ls.rows();
  if (c == 0) return Eigen::MatrixXd::Zero(bs.rows(), 0);
  Eigen::MatrixXd m = h.theta * (ls * ls.transpose());
  Eigen::MatrixXd rhs = h.theta * (bs * ls.transpose());
  if (be.cols() > 0) {
    m += h.mu * (le * le.transpose());
    rhs += h.mu * (be * le.transpose());
  }
  m.diagonal().array() += h.tau;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw std::runtime_error("p_step: solver failure (system not positive definite)");
  // P M = R with M symmetric  <=>  M P^T = R^T.
  Eigen::MatrixXd p = llt.solve(rhs.transpose()).transpose();
  if (!p.allFinite()) throw std::runtime_error("p_step: solver failure (non-finite solution)");
  return p;
}

/// Z = k Bs S + mu P Le (the printed variant subtracts the label term).
inline Eigen::MatrixXd be_auxiliary(const Eigen::MatrixXd& bs, const SimilarityMatrix& s, const Eigen::MatrixXd& p,
                                    const Eigen::MatrixXd& le, const HyperParams& hyper) {
  const auto h = effective_weights(hyper);
  const double k = static_cast<double>(bs.rows());
  Eigen::MatrixXd z = k * s.left_multiply(bs);
  const double sign = hyper.paper_sign_z ? -1.0 : 1.0;
  if (h.mu != 0.0) z += sign * h.mu * (p * le);
  return z;
}

/// One sweep of Be <- sgn(2Z - Bs Bs^T Be_old).
inline Eigen::MatrixXd be_step(const Eigen::MatrixXd& bs, const Eigen::MatrixXd& be_old, const SimilarityMatrix& s,
                               const Eigen::MatrixXd& p, const Eigen::MatrixXd& le, const HyperParams& hyper) {
  if (be_old.rows() != bs.rows() || s.rows() != static_cast<std::size_t>(bs.cols()) ||
      s.cols() != static_cast<std::size_t>(be_old.cols()) || le.cols() != be_old.cols())
    throw std::invalid_argument("be_step: dimension mismatch");
  const Eigen::MatrixXd z = be_auxiliary(bs, s, p, le, hyper);
  const Eigen::MatrixXd gram = bs * bs.transpose();
  const Eigen::MatrixXd arg = 2.0 * z - gram * be_old;
  return arg.unaryExpr([](double v) { return static_cast<double>(sgn(v)); });
}

/// G = k Be S^T + sigma W^T X + theta P Ls.
inline Eigen::MatrixXd bs_auxiliary(const Eigen::MatrixXd& be, const SimilarityMatrix& s, const Eigen::MatrixXd& w,
                                    const Eigen::MatrixXd& x, const Eigen::MatrixXd& p, const Eigen::MatrixXd& ls,
                                    const HyperParams& hyper) {
  const auto h = effective_weights(hyper);
  const double k = static_cast<double>(w.cols());
  Eigen::MatrixXd g = h.sigma * (w.transpose() * x);
  if (be.cols() > 0) g += k * s.right_multiply_transpose(be);
  if (h.theta != 0.0) g += h.theta * (p * ls);
  return g;
}

/// One discrete cyclic coordinate descent sweep over the bit rows of Bs, in
/// order 0..k-1, each row set to sgn(g_i - sum_{j != i} (be_i . be_j) bs_j).
inline Eigen::MatrixXd bs_step(const Eigen::MatrixXd& bs_old, const Eigen::MatrixXd& be, const SimilarityMatrix& s,
                               const Eigen::MatrixXd& w, const Eigen::MatrixXd& x, const Eigen::MatrixXd& p,
                               const Eigen::MatrixXd& ls, const HyperParams& hyper) {
  if (be.rows() != bs_old.rows() || w.cols() != bs_old.rows() || x.cols() != bs_old.cols() ||
      s.rows() != static_cast<std::size_t>(bs_old.cols()) || s.cols() != static_cast<std::size_t>(be.cols()))
    throw std::invalid_argument("bs_step: dimension mismatch");
  const Eigen::MatrixXd g = bs_auxiliary(be, s, w, x, p, ls, hyper);
  const Eigen::MatrixXd q = be * be.transpose();
  Eigen::MatrixXd bs = bs_old;
  const Eigen::Index k = bs.rows();
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::RowVectorXd coupling = Eigen::RowVectorXd::Zero(bs.cols());
    for (Eigen::Index j = 0; j < k; ++j)
      if (j != i && q(i, j) != 0.0) coupling += q(i, j) * bs.row(j);
    for (Eigen::Index col = 0; col < bs.cols(); ++col) bs(i, col) = sgn(g(i, col) - coupling(col));
  }
  return bs;
}

// ---------------------------------------------------------------------------

/// Codes learned so far: Bs for the latest batch, Be for everything before it.
struct TrainState {
  CodeMatrix bs;
  CodeMatrix be;
  std::vector<double> objective_trace;
  std::size_t stage = 0;
};

struct IterationLog {
  std::size_t stage;
  std::size_t iter;
  double objective;
  double secs;
};

inline Eigen::MatrixXd centered_features(const FeatureMatrix& x, const Eigen::VectorXd& center) {
  Eigen::MatrixXd out(x.dim(), x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const auto s = x.sample(j);
    for (std::size_t i = 0; i < s.size(); ++i) out(i, j) = static_cast<double>(s[i]) - center[i];
  }
  return out;
}

inline Eigen::MatrixXd label_columns(const LabelMatrix& l) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(l.categories(), l.size());
  for (std::size_t j = 0; j < l.size(); ++j)
    for (std::size_t c = 0; c < l.categories(); ++c)
      if (l.test(j, c)) out(c, j) = 1.0;
  return out;
}

inline LabelMatrix select_labels(const LabelMatrix& l, std::span<const std::size_t> cols) {
  LabelMatrix out(l.categories(), 0);
  for (auto j : cols) out.push_back(l.row(j));
  return out;
}

/// Runs one stream stage. On the first stage W is drawn standard normal from
/// hyper.seed; from the second stage on, the previous batch's codes are
/// appended to Be before optimizing. Each iteration runs W, P, Be, Bs steps
/// in that order and records the objective.
inline void train_stage(HashModel& model, TrainState& state, const FeatureMatrix& xs_raw, const LabelMatrix& ls_raw,
                        const LabelMatrix& le_raw, SimilarityMode mode,
                        const std::function<void(const IterationLog&)>& on_iter = {}) {
  const auto& hyper = model.hyper;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  if (xs_raw.size() != ls_raw.size()) throw std::invalid_argument("train_stage: sample count mismatch");
  if (xs_raw.size() == 0) throw std::invalid_argument("train_stage: empty batch");
  if (xs_raw.dim() != model.dim()) throw std::invalid_argument("train_stage: dimension mismatch");
  if (ls_raw.categories() != model.categories() || le_raw.categories() != model.categories())
    throw std::invalid_argument("train_stage: category count mismatch");
  const std::size_t k = model.bits();

  if (state.stage == 0) {
    model = gaussian_model(model.dim(), k, model.categories(), hyper.seed, hyper);
    state.be = CodeMatrix(k, 0);
  } else {
    state.be.append(state.bs);
  }
  if (state.be.size() != le_raw.size()) throw std::invalid_argument("train_stage: existing label count mismatch");
  const std::size_t stage = state.stage + 1;

  model.update_center(xs_raw);
  const Eigen::MatrixXd x = centered_features(xs_raw, model.center);
  const Eigen::MatrixXd ls = label_columns(ls_raw);
  Eigen::MatrixXd bs = (model.W.transpose() * x).unaryExpr([](double v) { return static_cast<double>(sgn(v)); });

  // Optional cap on the existing columns optimized this stage.
  std::vector<std::size_t> cols(state.be.size());
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  if (hyper.max_existing > 0 && cols.size() > hyper.max_existing) {
    std::mt19937_64 gen(hyper.seed ^ (0x9E3779B97F4A7C15ull * stage));
    std::shuffle(cols.begin(), cols.end(), gen);
    cols.resize(hyper.max_existing);
    std::sort(cols.begin(), cols.end());
  }
  const LabelMatrix le_sel = select_labels(le_raw, cols);
  const Eigen::MatrixXd le = label_columns(le_sel);
  Eigen::MatrixXd be(k, cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t b = 0; b < k; ++b) be(b, j) = state.be.value(cols[j], b);
  const SimilarityMatrix s = build_balanced_target(ls_raw, le_sel, hyper, mode);

  Eigen::MatrixXd& w = model.W;
  Eigen::MatrixXd& p = model.P;
  state.objective_trace.clear();
  double prev = objective(bs, be, w, p, x, ls, le, s, hyper);
  state.objective_trace.push_back(prev);
  if (on_iter) on_iter({stage, 0, prev, elapsed()});
  for (std::size_t it = 1; it <= hyper.max_alt_iters; ++it) {
    w = w_step(x, bs, hyper);
    if (hyper.label_projection) p = p_step(bs, be, ls, le, hyper);
    if (be.cols() > 0) {
      // The sign update minimizes a linearization, not the objective itself,
      // so it can overshoot; an update that raises the objective is dropped.
      Eigen::MatrixXd cand = be_step(bs, be, s, p, le, hyper);
      if (!hyper.monotone_be || objective(bs, cand, w, p, x, ls, le, s, hyper) <= objective(bs, be, w, p, x, ls, le, s, hyper))
        be = std::move(cand);
    }
    bs = bs_step(bs, be, s, w, x, p, ls, hyper);
    const double obj = objective(bs, be, w, p, x, ls, le, s, hyper);
    state.objective_trace.push_back(obj);
    if (on_iter) on_iter({stage, it, obj, elapsed()});
    const double change = std::abs(prev - obj) / std::max(std::abs(prev), 1e-300);
    prev = obj;
    if (change < hyper.tol) break;
  }

  state.bs = CodeMatrix::from_signs(bs);
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t b = 0; b < k; ++b) state.be.set(cols[j], b, static_cast<int>(be(b, j)));
  state.stage = stage;
  if (!model.all_finite()) throw std::runtime_error("train_stage: non-finite model");
}

}  // namespace foh
