#pragma once

// Small random problem instances shared by the unit and acceptance tests.

#include <Eigen/Dense>

#include <random>
#include <vector>

#include <foh/data.hpp>
#include <foh/similarity.hpp>
#include <foh/trainer.hpp>

#include "oracles.hpp"

namespace fixture {

struct Tiny {
  foh::HyperParams h;
  foh::LabelMatrix ls_l, le_l;
  foh::SimilarityMatrix s;
  Eigen::MatrixXd x, ls, le, bs, be, w, p;

  double objective() const { return foh::objective(bs, be, w, p, x, ls, le, s, h); }
  double objective_with(const Eigen::MatrixXd& bs2, const Eigen::MatrixXd& be2) const {
    return foh::objective(bs2, be2, w, p, x, ls, le, s, h);
  }
};

/// Random codes, features, labels and parameters of the given shape.
inline Tiny tiny(std::mt19937_64& gen, Eigen::Index d, Eigen::Index k, Eigen::Index n, Eigen::Index m,
                 std::size_t c = 3, foh::HyperParams h = {}) {
  auto ls_l = oracle::random_labels(c, static_cast<std::size_t>(n), gen);
  auto le_l = oracle::random_labels(c, static_cast<std::size_t>(m), gen);
  auto s = foh::build_balanced_target(ls_l, le_l, h, foh::SimilarityMode::multi);
  Tiny t{h, ls_l, le_l, s, {}, {}, {}, {}, {}, {}, {}};
  t.x = oracle::random_normal(d, n, gen);
  t.ls = foh::label_columns(ls_l);
  t.le = foh::label_columns(le_l);
  t.bs = oracle::random_signs(k, n, gen);
  t.be = oracle::random_signs(k, m, gen);
  t.w = oracle::random_normal(d, k, gen);
  t.p = oracle::random_normal(k, static_cast<Eigen::Index>(c), gen);
  return t;
}

/// Random stream of `stages` batches of `per_batch` samples.
struct TinyStream {
  std::vector<foh::FeatureMatrix> xs;
  std::vector<foh::LabelMatrix> ls;
};

inline TinyStream tiny_stream(std::mt19937_64& gen, std::size_t d, std::size_t per_batch, std::size_t stages,
                              std::size_t c = 3) {
  TinyStream st;
  std::normal_distribution<float> nd(0.0f, 1.0f);
  for (std::size_t b = 0; b < stages; ++b) {
    std::vector<float> v(d * per_batch);
    for (auto& f : v) f = nd(gen);
    st.xs.emplace_back(d, std::move(v));
    st.ls.push_back(oracle::random_labels(c, per_batch, gen));
  }
  return st;
}

/// Objective traces of every stage of a stream run.
inline std::vector<std::vector<double>> run_stream(const TinyStream& st, std::size_t k, const foh::HyperParams& h,
                                                   foh::HashModel* model_out = nullptr,
                                                   foh::TrainState* state_out = nullptr) {
  const std::size_t d = st.xs.front().dim(), c = st.ls.front().categories();
  foh::HashModel model = foh::HashModel::zeros(d, k, c, h);
  foh::TrainState state;
  foh::LabelMatrix existing(c, 0);
  std::vector<std::vector<double>> traces;
  for (std::size_t b = 0; b < st.xs.size(); ++b) {
    foh::train_stage(model, state, st.xs[b], st.ls[b], existing, foh::SimilarityMode::multi);
    traces.push_back(state.objective_trace);
    for (std::size_t j = 0; j < st.ls[b].size(); ++j) existing.push_back(st.ls[b].row(j));
  }
  if (model_out) *model_out = model;
  if (state_out) *state_out = state;
  return traces;
}

}  // namespace fixture
