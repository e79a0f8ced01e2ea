#pragma once

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "data.hpp"
#include "hash.hpp"
#include "query_pool.hpp"
#include "similarity.hpp"
#include "util.hpp"

namespace foh {

enum class RelevanceRule { share_any_label, same_single_label };

/// mAP denominator: all relevant items, or only the relevant items retrieved.
enum class MapMode { full, truncated };

/// Relevant database ids for one query, as a bitmask over the database.
class RelevanceSet {
 public:
  RelevanceSet() = default;
  explicit RelevanceSet(std::size_t universe) : universe_(universe), bits_((universe + 63) / 64, 0) {}

  static RelevanceSet from_ids(std::size_t universe, std::span<const std::uint64_t> ids) {
    RelevanceSet s(universe);
    for (auto id : ids) s.insert(id);
    return s;
  }

  void insert(std::uint64_t id) {
    if (id >= universe_) throw std::out_of_range("relevant id outside database");
    auto& w = bits_[id / 64];
    const std::uint64_t mask = std::uint64_t{1} << (id % 64);
    if (!(w & mask)) ++count_;
    w |= mask;
  }
  bool contains(std::uint64_t id) const { return id < universe_ && ((bits_[id / 64] >> (id % 64)) & 1u); }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::size_t universe() const { return universe_; }

  friend bool operator==(const RelevanceSet&, const RelevanceSet&) = default;

 private:
  std::size_t universe_ = 0;
  std::size_t count_ = 0;
  std::vector<std::uint64_t> bits_;
};

struct GroundTruth {
  RelevanceRule rule = RelevanceRule::share_any_label;
  std::vector<RelevanceSet> relevant;
};

/// Mean of precision-at-rank over the ranks holding relevant items. Empty
/// relevant sets give 0.
inline double average_precision(std::span<const std::uint64_t> ranked, const RelevanceSet& relevant,
                                MapMode mode = MapMode::full) {
  if (ranked.empty()) throw std::invalid_argument("ranked list is empty");
  if (relevant.empty()) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (relevant.contains(ranked[r])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  if (hits == 0) return 0.0;
  const double denom = mode == MapMode::full ? static_cast<double>(relevant.size()) : static_cast<double>(hits);
  return sum / denom;
}

/// (|top-k & relevant| / k, |top-k & relevant| / |relevant|).
inline std::pair<double, double> precision_recall_at_k(std::span<const std::uint64_t> ranked,
                                                       const RelevanceSet& relevant, std::size_t k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) hits += relevant.contains(ranked[r]);
  const double precision = static_cast<double>(hits) / static_cast<double>(k);
  const double recall = relevant.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(relevant.size());
  return {precision, recall};
}

/// (recall, precision) at each rank where recall changes.
inline std::vector<std::pair<double, double>> pr_curve(std::span<const std::uint64_t> ranked,
                                                       const RelevanceSet& relevant) {
  std::vector<std::pair<double, double>> out;
  if (relevant.empty()) return out;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (!relevant.contains(ranked[r])) continue;
    ++hits;
    out.emplace_back(static_cast<double>(hits) / static_cast<double>(relevant.size()),
                     static_cast<double>(hits) / static_cast<double>(r + 1));
  }
  return out;
}

inline bool is_relevant(std::span<const std::uint64_t> q, std::span<const std::uint64_t> b, RelevanceRule rule) {
  if (rule == RelevanceRule::share_any_label) return intersection_count(q, b) > 0;
  return pair_similarity_single(q, b) > 0;
}

/// Relevance of every base item to every query. When `queries_in_base` is set,
/// a base item with the query's own id is never relevant to it.
inline GroundTruth build_ground_truth(const Dataset& queries, const Dataset& base, RelevanceRule rule,
                                      bool queries_in_base = false, unsigned threads = 1) {
  if (queries.categories() != base.categories()) throw std::invalid_argument("label spaces differ");
  if (rule == RelevanceRule::same_single_label) {
    for (const Dataset* ds : {&queries, &base})
      for (std::size_t j = 0; j < ds->size(); ++j)
        if (ds->labels.count(j) != 1) throw std::invalid_argument("single-label rule applied to multi-label data");
  }
  GroundTruth gt{rule, std::vector<RelevanceSet>(queries.size())};
  parallel_for(queries.size(), threads, [&](std::size_t qi) {
    RelevanceSet set(base.size());
    const auto ql = queries.labels.row(qi);
    for (std::size_t j = 0; j < base.size(); ++j) {
      if (queries_in_base && base.ids[j] == queries.ids[qi]) continue;
      if (is_relevant(ql, base.labels.row(j), rule)) set.insert(j);
    }
    gt.relevant[qi] = std::move(set);
  });
  return gt;
}

/// Untrained accuracy floor: Gaussian W, zero P.
inline HashModel lsh_baseline(std::size_t d, std::size_t k, std::uint64_t seed, std::size_t c = 0) {
  return gaussian_model(d, k, c, seed);
}

// ---------------------------------------------------------------------------

struct Timing {
  double train_secs = 0;
  double update_secs = 0;
  double query_secs_total = 0;
  double encode_secs = 0;  // full mode: database re-encoding share
  double scan_secs = 0;    // full mode: distance + selection share
};

struct OpSummary {
  std::size_t queries = 0;
  double mean_candidates_encoded = 0;
  std::size_t max_candidates_encoded = 0;
  double mean_codes_compared = 0;
  std::size_t max_codes_compared = 0;
  std::size_t truncated_queries = 0;
  std::size_t bound_violations = 0;  // queries over the beta*v / u+beta*v bounds
};

struct MetricsReport {
  double map = 0;
  std::map<std::size_t, double> precision_at;
  std::map<std::size_t, double> recall_at;
  std::vector<std::pair<double, double>> pr_curve;
  std::size_t empty_relevance = 0;
  Timing timing;
  OpSummary ops;
};

struct EvalOptions {
  std::vector<std::size_t> at = {10, 100, 1000};
  MapMode map_mode = MapMode::full;
  unsigned threads = 1;
};

inline constexpr std::size_t kPrLevels = 11;

/// Accuracy of one ranked list per query. The PR curve is the 11-point
/// interpolated precision averaged over queries.
inline MetricsReport evaluate_rankings(const std::vector<std::vector<std::uint64_t>>& rankings,
                                       const GroundTruth& gt, const EvalOptions& opt = {}) {
  if (rankings.size() != gt.relevant.size()) throw std::invalid_argument("ranking/ground-truth count mismatch");
  const std::size_t nq = rankings.size();
  std::vector<double> ap(nq, 0.0);
  std::vector<std::vector<double>> prec(nq, std::vector<double>(opt.at.size())), rec = prec;
  std::vector<std::vector<double>> interp(nq, std::vector<double>(kPrLevels, 0.0));
  parallel_for(nq, opt.threads, [&](std::size_t q) {
    const auto& ranked = rankings[q];
    const auto& rel = gt.relevant[q];
    ap[q] = ranked.empty() ? 0.0 : average_precision(ranked, rel, opt.map_mode);
    for (std::size_t a = 0; a < opt.at.size(); ++a)
      std::tie(prec[q][a], rec[q][a]) = precision_recall_at_k(ranked, rel, opt.at[a]);
    const auto curve = pr_curve(ranked, rel);
    for (std::size_t l = 0; l < kPrLevels; ++l) {
      const double level = static_cast<double>(l) / static_cast<double>(kPrLevels - 1);
      double best = 0.0;
      for (const auto& [r, p] : curve)
        if (r + 1e-12 >= level) best = std::max(best, p);
      interp[q][l] = best;
    }
  });
  MetricsReport rep;
  if (nq == 0) return rep;
  for (std::size_t q = 0; q < nq; ++q) {
    rep.map += ap[q];
    rep.empty_relevance += gt.relevant[q].empty();
  }
  rep.map /= static_cast<double>(nq);
  for (std::size_t a = 0; a < opt.at.size(); ++a) {
    double ps = 0, rs = 0;
    for (std::size_t q = 0; q < nq; ++q) {
      ps += prec[q][a];
      rs += rec[q][a];
    }
    rep.precision_at[opt.at[a]] = ps / static_cast<double>(nq);
    rep.recall_at[opt.at[a]] = rs / static_cast<double>(nq);
  }
  for (std::size_t l = 0; l < kPrLevels; ++l) {
    double s = 0;
    for (std::size_t q = 0; q < nq; ++q) s += interp[q][l];
    rep.pr_curve.emplace_back(static_cast<double>(l) / static_cast<double>(kPrLevels - 1), s / static_cast<double>(nq));
  }
  return rep;
}

inline OpSummary summarize_ops(const std::vector<OpCounts>& ops, std::size_t u, std::size_t beta, std::size_t v) {
  OpSummary s;
  s.queries = ops.size();
  for (const auto& o : ops) {
    s.mean_candidates_encoded += static_cast<double>(o.candidates_encoded);
    s.mean_codes_compared += static_cast<double>(o.codes_compared);
    s.max_candidates_encoded = std::max(s.max_candidates_encoded, o.candidates_encoded);
    s.max_codes_compared = std::max(s.max_codes_compared, o.codes_compared);
    s.truncated_queries += o.truncated;
    if (beta > 0 && (o.candidates_encoded > beta * v || o.codes_compared > u + beta * v)) ++s.bound_violations;
  }
  if (!ops.empty()) {
    s.mean_candidates_encoded /= static_cast<double>(ops.size());
    s.mean_codes_compared /= static_cast<double>(ops.size());
  }
  return s;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r, bool with_timing = true) {
  nlohmann::ordered_json j;
  j["map"] = r.map;
  j["precision_at"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.precision_at) j["precision_at"][std::to_string(k)] = v;
  j["recall_at"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.recall_at) j["recall_at"][std::to_string(k)] = v;
  j["pr_curve"] = nlohmann::ordered_json::array();
  for (const auto& [rc, p] : r.pr_curve) j["pr_curve"].push_back({rc, p});
  j["empty_relevance_queries"] = r.empty_relevance;
  if (with_timing) {
    j["timing"] = {{"train_secs", r.timing.train_secs},
                   {"update_secs", r.timing.update_secs},
                   {"query_secs_total", r.timing.query_secs_total},
                   {"encode_secs", r.timing.encode_secs},
                   {"scan_secs", r.timing.scan_secs}};
  }
  j["op_counts"] = {{"queries", r.ops.queries},
                    {"mean_candidates_encoded", r.ops.mean_candidates_encoded},
                    {"max_candidates_encoded", r.ops.max_candidates_encoded},
                    {"mean_codes_compared", r.ops.mean_codes_compared},
                    {"max_codes_compared", r.ops.max_codes_compared},
                    {"truncated_queries", r.ops.truncated_queries},
                    {"bound_violations", r.ops.bound_violations}};
  return j;
}

/// Two-column recall,precision CSV.
inline std::string pr_curve_csv(const MetricsReport& r) {
  std::string out = "recall,precision\n";
  for (const auto& [rc, p] : r.pr_curve) out += std::to_string(rc) + "," + std::to_string(p) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

struct BenchOptions {
  std::size_t top_k = 100;
  std::size_t beta = 10;
  std::size_t repetitions = 3;  // timed passes after one warm-up pass
  EvalOptions eval;
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0.0;
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Runs every query through the pool path and the full re-encode path and
/// scores both against the same ground truth. Wall times are medians over
/// `repetitions` passes, after a discarded warm-up pass.
inline std::pair<MetricsReport, MetricsReport> bench_compare(const HashModel& model, const QueryPool& pool,
                                                             const Dataset& base, const Dataset& queries,
                                                             const GroundTruth& gt, const BenchOptions& opt) {
  const std::size_t nq = queries.size();
  const unsigned threads = opt.eval.threads;
  std::vector<std::vector<std::uint64_t>> pool_rank(nq), full_rank(nq);
  std::vector<OpCounts> pool_ops(nq), full_ops(nq);

  auto pool_pass = [&] {
    const auto t0 = std::chrono::steady_clock::now();
    parallel_for(nq, threads, [&](std::size_t q) {
      auto res = online_query(queries.features.sample(q), model, pool, base, opt.top_k, opt.beta);
      pool_rank[q] = std::move(res.ids);
      pool_ops[q] = res.ops;
    });
    return detail::seconds_since(t0);
  };
  std::vector<double> enc_times(nq), scan_times(nq);
  auto full_pass = [&] {
    const auto t0 = std::chrono::steady_clock::now();
    parallel_for(nq, threads, [&](std::size_t q) {
      const auto t1 = std::chrono::steady_clock::now();
      const CodeMatrix db = encode(model, base.features);
      const CodeMatrix qc = encode_one(model, queries.features.sample(q));
      enc_times[q] = detail::seconds_since(t1);
      const auto t2 = std::chrono::steady_clock::now();
      auto res = rank_database(qc.code(0), db, opt.top_k);
      for (auto& id : res.ids) id = base.ids[id];
      res.ops.candidates_encoded = db.size();
      scan_times[q] = detail::seconds_since(t2);
      full_rank[q] = std::move(res.ids);
      full_ops[q] = res.ops;
    });
    return detail::seconds_since(t0);
  };

  pool_pass();
  full_pass();
  std::vector<double> pool_t, full_t, enc_t, scan_t;
  for (std::size_t rep = 0; rep < opt.repetitions; ++rep) {
    pool_t.push_back(pool_pass());
    full_t.push_back(full_pass());
    double e = 0, s = 0;
    for (std::size_t q = 0; q < nq; ++q) {
      e += enc_times[q];
      s += scan_times[q];
    }
    enc_t.push_back(e);
    scan_t.push_back(s);
  }

  MetricsReport pool_rep = evaluate_rankings(pool_rank, gt, opt.eval);
  MetricsReport full_rep = evaluate_rankings(full_rank, gt, opt.eval);
  pool_rep.timing.query_secs_total = detail::median(pool_t);
  full_rep.timing.query_secs_total = detail::median(full_t);
  full_rep.timing.encode_secs = detail::median(enc_t);
  full_rep.timing.scan_secs = detail::median(scan_t);
  pool_rep.ops = summarize_ops(pool_ops, pool.u, opt.beta, pool.v);
  full_rep.ops = summarize_ops(full_ops, 0, 0, 0);
  return {pool_rep, full_rep};
}

}  // namespace foh
