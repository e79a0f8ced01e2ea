#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "data.hpp"
#include "hash.hpp"
#include "metrics.hpp"
#include "params.hpp"
#include "query_pool.hpp"
#include "similarity.hpp"
#include "trainer.hpp"

namespace foh {

struct StreamOptions {
  std::size_t bits = 32;
  std::size_t batch_size = 2000;
  std::uint64_t perm_seed = 1;
  std::optional<SimilarityMode> mode;  // detected from the labels when unset
  bool build_pool = true;
};

/// Everything a finished stream run leaves behind.
struct TrainedIndex {
  HashModel model;
  QueryPool pool;
  TrainState state;
  std::vector<std::uint64_t> stream_ids;  // ids in arrival order
  std::vector<IterationLog> log;
  SimilarityMode mode = SimilarityMode::multi;
  double train_secs = 0;
  double update_secs = 0;
  std::size_t refreshes = 0;

  /// Stored codes of all accumulated data, aligned with stream_ids.
  CodeMatrix accumulated_codes() const {
    CodeMatrix all = state.be;
    all.append(state.bs);
    return all;
  }
};

/// Stream loop: per batch, train the stage, then update the query pool
/// (initialize on the first batch, neighbor-preserving update afterwards) and
/// refresh centers every `refresh_every` batches.
inline TrainedIndex train_stream(const Dataset& base, const HyperParams& hyper, const StreamOptions& opt,
                                 const std::function<void(const IterationLog&)>& on_iter = {}) {
  hyper.validate();
  base.validate();
  TrainedIndex out;
  out.mode = opt.mode.value_or(detect_mode(base.labels));
  out.model = HashModel::zeros(base.dim(), opt.bits, base.categories(), hyper);
  LabelMatrix existing(base.categories(), 0);
  StreamBatcher batcher(base, opt.batch_size, opt.perm_seed);
  using clock = std::chrono::steady_clock;

  while (auto batch = batcher.next_batch()) {
    const auto t0 = clock::now();
    train_stage(out.model, out.state, batch->data.features, batch->data.labels, existing, out.mode,
                [&](const IterationLog& l) {
                  out.log.push_back(l);
                  if (on_iter) on_iter(l);
                });
    const auto t1 = clock::now();
    out.train_secs += std::chrono::duration<double>(t1 - t0).count();

    const auto& ids = batch->data.ids;
    if (opt.build_pool) {
      if (batch->stage == 1) {
        out.pool = init_pool(base, ids, out.model, hyper);
      } else {
        neighbor_update(out.pool, out.model, base, ids);
        if ((batch->stage - 1) % hyper.refresh_every == 0) {
          std::vector<std::uint64_t> all_ids = out.stream_ids;
          all_ids.insert(all_ids.end(), ids.begin(), ids.end());
          reservoir_refresh(out.pool, out.model, base, out.accumulated_codes(), all_ids, hyper.r);
          ++out.refreshes;
        }
      }
    }
    out.update_secs += std::chrono::duration<double>(clock::now() - t1).count();
    for (std::size_t j = 0; j < batch->data.size(); ++j) existing.push_back(batch->data.labels.row(j));
    out.stream_ids.insert(out.stream_ids.end(), ids.begin(), ids.end());
  }
  // The pool may have been initialized under an earlier model.
  if (opt.build_pool && !out.pool.centers.empty()) refresh_center_codes(out.pool, out.model, base);
  return out;
}

enum class QueryMode { pool, full };

/// Rankings for every query. Full mode encodes the database once with the
/// model and ranks it exactly (top_k == 0 ranks everything); pool mode goes
/// through the query pool.
inline std::vector<QueryResult> run_queries(const HashModel& model, const QueryPool* pool, const Dataset& base,
                                            const Dataset& queries, QueryMode mode, std::size_t top_k,
                                            std::size_t beta, unsigned threads = 1) {
  std::vector<QueryResult> out(queries.size());
  if (mode == QueryMode::full) {
    const CodeMatrix db = encode(model, base.features);
    const std::size_t k = top_k == 0 ? base.size() : top_k;
    parallel_for(queries.size(), threads, [&](std::size_t q) {
      const CodeMatrix qc = encode_one(model, queries.features.sample(q));
      out[q] = rank_database(qc.code(0), db, k);
      for (auto& id : out[q].ids) id = base.ids[id];
      out[q].ops.candidates_encoded = db.size();
    });
  } else {
    if (!pool) throw std::invalid_argument("pool mode requires a query pool");
    parallel_for(queries.size(), threads, [&](std::size_t q) {
      out[q] = online_query(queries.features.sample(q), model, *pool, base, top_k, beta);
    });
  }
  return out;
}

inline MetricsReport evaluate_queries(const std::vector<QueryResult>& results, const GroundTruth& gt,
                                      const EvalOptions& opt, std::size_t u = 0, std::size_t beta = 0,
                                      std::size_t v = 0) {
  std::vector<std::vector<std::uint64_t>> rankings;
  std::vector<OpCounts> ops;
  rankings.reserve(results.size());
  for (const auto& r : results) {
    rankings.push_back(r.ids);
    ops.push_back(r.ops);
  }
  auto rep = evaluate_rankings(rankings, gt, opt);
  rep.ops = summarize_ops(ops, u, beta, v);
  return rep;
}

}  // namespace foh
