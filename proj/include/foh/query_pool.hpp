#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "data.hpp"
#include "hash.hpp"
#include "params.hpp"

namespace foh {

/// Work done by one query, in encodings and code comparisons.
struct OpCounts {
  std::size_t centers_scanned = 0;
  std::size_t candidates_encoded = 0;
  std::size_t codes_compared = 0;
  bool truncated = false;  // fewer candidates than requested results
};

struct QueryResult {
  std::vector<std::uint64_t> ids;
  OpCounts ops;
};

/// u central points (global sample ids), each with up to v neighbor ids.
///
/// `reservoir` holds the Algorithm-R sample over every observed id; a center
/// whose slot differs from its reservoir entry is a pending replacement that
/// the next refresh may materialize. `center_codes` caches the centers' codes
/// under the latest model and is rebuilt by every update.
struct QueryPool {
  std::size_t u = 0;
  std::size_t v = 0;
  std::vector<std::uint64_t> centers;
  std::vector<std::vector<std::uint64_t>> neighbors;
  std::uint64_t seen_count = 0;
  std::uint64_t rng_state = 0;
  std::vector<std::uint64_t> reservoir;
  CodeMatrix center_codes;

  std::size_t pending_replacements() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < centers.size(); ++i) n += reservoir[i] != centers[i];
    return n;
  }
};

namespace detail {

inline void check_ids(std::span<const std::uint64_t> ids, const Dataset& base) {
  for (auto id : ids)
    if (id >= base.size()) throw std::out_of_range("sample id " + std::to_string(id) + " not in dataset");
}

// Ascending, duplicate-free copy.
inline std::vector<std::uint64_t> sorted_unique(std::vector<std::uint64_t> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

// Ids of the `alpha` nearest candidates to `query`; candidates must be sorted
// ascending by id so index ties equal id ties.
inline std::vector<std::uint64_t> nearest_ids(std::span<const std::uint64_t> query, const CodeMatrix& codes,
                                              std::span<const std::uint64_t> sorted_ids, std::size_t alpha) {
  const auto idx = select_nearest(query, codes, std::min(alpha, codes.size()));
  std::vector<std::uint64_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(sorted_ids[i]);
  return out;
}

}  // namespace detail

/// Algorithm R: the j-th observed id replaces a uniformly chosen slot with
/// probability u/j (the first u ids fill the slots).
inline void observe(QueryPool& pool, std::span<const std::uint64_t> ids) {
  std::mt19937_64 gen(pool.rng_state);
  for (auto id : ids) {
    ++pool.seen_count;
    if (pool.seen_count <= pool.u) {
      pool.reservoir[pool.seen_count - 1] = id;
      continue;
    }
    std::uniform_int_distribution<std::uint64_t> slot(0, pool.seen_count - 1);
    const auto x = slot(gen);
    if (x < pool.u) pool.reservoir[x] = id;
  }
  pool.rng_state = gen();
}

inline void refresh_center_codes(QueryPool& pool, const HashModel& model, const Dataset& base) {
  pool.center_codes = encode_rows(model, base.features, pool.centers);
}

/// Centers drawn uniformly without replacement from the first batch (via the
/// reservoir), each with its v nearest batch samples under `model`.
inline QueryPool init_pool(const Dataset& base, std::span<const std::uint64_t> first_batch, const HashModel& model,
                           const HyperParams& hyper) {
  if (first_batch.size() < hyper.u) throw std::invalid_argument("first batch smaller than u");
  if (first_batch.size() < hyper.v) throw std::invalid_argument("first batch smaller than v");
  detail::check_ids(first_batch, base);
  QueryPool pool;
  pool.u = hyper.u;
  pool.v = hyper.v;
  pool.rng_state = hyper.seed ^ 0xA0761D6478BD642Full;
  pool.reservoir.assign(pool.u, 0);
  observe(pool, first_batch);
  pool.centers = pool.reservoir;

  const auto ids = detail::sorted_unique({first_batch.begin(), first_batch.end()});
  const CodeMatrix codes = encode_rows(model, base.features, ids);
  refresh_center_codes(pool, model, base);
  pool.neighbors.resize(pool.u);
  for (std::size_t i = 0; i < pool.u; ++i)
    pool.neighbors[i] = detail::nearest_ids(pool.center_codes.code(i), codes, ids, pool.v);
  return pool;
}

/// Each center keeps the v nearest of (its current list + the new batch),
/// everything encoded with the latest model. The batch is also fed to the
/// reservoir.
inline void neighbor_update(QueryPool& pool, const HashModel& model, const Dataset& base,
                            std::span<const std::uint64_t> batch) {
  detail::check_ids(batch, base);
  observe(pool, batch);
  refresh_center_codes(pool, model, base);
  if (batch.empty()) return;

  std::vector<std::uint64_t> all(batch.begin(), batch.end());
  for (const auto& list : pool.neighbors) all.insert(all.end(), list.begin(), list.end());
  all = detail::sorted_unique(std::move(all));
  const CodeMatrix all_codes = encode_rows(model, base.features, all);
  auto code_of = [&](std::uint64_t id) {
    const auto pos = std::lower_bound(all.begin(), all.end(), id) - all.begin();
    return all_codes.code(static_cast<std::size_t>(pos));
  };

  const auto batch_sorted = detail::sorted_unique({batch.begin(), batch.end()});
  for (std::size_t i = 0; i < pool.u; ++i) {
    std::vector<std::uint64_t> cand = batch_sorted;
    cand.insert(cand.end(), pool.neighbors[i].begin(), pool.neighbors[i].end());
    cand = detail::sorted_unique(std::move(cand));
    CodeMatrix codes(model.bits(), 0);
    for (auto id : cand) codes.push_back(code_of(id));
    pool.neighbors[i] = detail::nearest_ids(pool.center_codes.code(i), codes, cand, pool.v);
  }
}

/// Materializes up to r pending reservoir replacements. Each new center's list
/// is rebuilt by a full scan over `codes` (the stored codes of all accumulated
/// data, with their global ids).
inline std::vector<std::size_t> reservoir_refresh(QueryPool& pool, const HashModel& model, const Dataset& base,
                                                  const CodeMatrix& codes, std::span<const std::uint64_t> code_ids,
                                                  std::size_t r) {
  if (r > pool.u) throw std::invalid_argument("r exceeds u");
  if (codes.size() != code_ids.size()) throw std::invalid_argument("code/id count mismatch");
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < pool.u; ++i)
    if (pool.reservoir[i] != pool.centers[i]) pending.push_back(i);
  if (pending.size() > r) {
    std::mt19937_64 gen(pool.rng_state);
    std::shuffle(pending.begin(), pending.end(), gen);
    pending.resize(r);
    std::sort(pending.begin(), pending.end());
    pool.rng_state = gen();
  }
  for (auto i : pending) {
    pool.centers[i] = pool.reservoir[i];
    const CodeMatrix center = encode_rows(model, base.features, std::span(&pool.centers[i], 1));
    const auto idx = select_nearest(center.code(0), codes, std::min(pool.v, codes.size()), code_ids);
    pool.neighbors[i].clear();
    for (auto j : idx) pool.neighbors[i].push_back(code_ids[j]);
  }
  refresh_center_codes(pool, model, base);
  return pending;
}

/// Routes the query to its beta nearest centers and ranks the union of their
/// neighbor lists, re-encoded under the latest model.
inline QueryResult online_query(std::span<const float> q, const HashModel& model, const QueryPool& pool,
                                const Dataset& base, std::size_t top_k, std::size_t beta) {
  if (beta < 1 || beta > pool.u) throw std::invalid_argument("beta must be in [1, u]");
  if (top_k > beta * pool.v) throw std::invalid_argument("K exceeds beta * v");
  if (pool.center_codes.size() != pool.centers.size())
    throw std::logic_error("pool center codes are stale; call refresh_center_codes");
  QueryResult res;
  const CodeMatrix qc = encode_one(model, q);
  const auto routed = select_nearest(qc.code(0), pool.center_codes, beta);
  res.ops.centers_scanned = pool.centers.size();

  std::vector<std::uint64_t> cand;
  for (auto c : routed) cand.insert(cand.end(), pool.neighbors[c].begin(), pool.neighbors[c].end());
  cand = detail::sorted_unique(std::move(cand));
  const CodeMatrix codes = encode_rows(model, base.features, cand);
  res.ops.candidates_encoded = cand.size();
  res.ops.codes_compared = pool.centers.size() + cand.size();
  res.ops.truncated = top_k > cand.size();
  res.ids = detail::nearest_ids(qc.code(0), codes, cand, top_k);
  return res;
}

/// Ranks precomputed database codes (ids are row indices of the database).
inline QueryResult rank_database(std::span<const std::uint64_t> query_code, const CodeMatrix& db,
                                 std::size_t top_k) {
  if (top_k > db.size()) throw std::invalid_argument("K exceeds database size");
  QueryResult res;
  const auto idx = select_nearest(query_code, db, top_k);
  res.ids.assign(idx.begin(), idx.end());
  res.ops.codes_compared = db.size();
  return res;
}

/// Baseline path: re-encode the whole database with the latest model, then
/// exact Hamming top-K.
inline QueryResult full_scan_query(std::span<const float> q, const HashModel& model, const Dataset& base,
                                   std::size_t top_k) {
  if (base.size() == 0) throw std::invalid_argument("empty database");
  if (top_k > base.size()) throw std::invalid_argument("K exceeds database size");
  const CodeMatrix db = encode(model, base.features);
  const CodeMatrix qc = encode_one(model, q);
  auto res = rank_database(qc.code(0), db, top_k);
  for (auto& id : res.ids) id = base.ids[id];
  res.ops.candidates_encoded = db.size();
  return res;
}

// ---------------------------------------------------------------------------
// Pool file "FOHP": magic, u32 version, u32 u, u32 v, u64 seen_count,
// u64 rng state, u center ids, u*v neighbor ids (row-major). Lists shorter
// than v are padded with 2^64-1. The reservoir is not stored: a loaded pool
// starts with no pending replacements.

inline constexpr std::uint64_t kNoNeighbor = std::numeric_limits<std::uint64_t>::max();

inline void write_pool(std::ostream& os, const QueryPool& pool) {
  io::put_magic(os, "FOHP");
  io::put_u32(os, 1);
  io::put_u32(os, static_cast<std::uint32_t>(pool.u));
  io::put_u32(os, static_cast<std::uint32_t>(pool.v));
  io::put_u64(os, pool.seen_count);
  io::put_u64(os, pool.rng_state);
  for (auto id : pool.centers) io::put_u64(os, id);
  for (const auto& list : pool.neighbors)
    for (std::size_t j = 0; j < pool.v; ++j) io::put_u64(os, j < list.size() ? list[j] : kNoNeighbor);
}

inline QueryPool read_pool(std::istream& is) {
  io::expect_magic(is, "FOHP");
  io::expect_version(is, "pool file");
  QueryPool pool;
  pool.u = io::get_u32(is, "pool header");
  pool.v = io::get_u32(is, "pool header");
  pool.seen_count = io::get_u64(is, "pool header");
  pool.rng_state = io::get_u64(is, "pool header");
  pool.centers.resize(pool.u);
  for (auto& id : pool.centers) id = io::get_u64(is, "pool centers");
  pool.neighbors.assign(pool.u, {});
  for (auto& list : pool.neighbors)
    for (std::size_t j = 0; j < pool.v; ++j) {
      const auto id = io::get_u64(is, "pool neighbors");
      if (id != kNoNeighbor) list.push_back(id);
    }
  pool.reservoir = pool.centers;
  return pool;
}

inline void save_pool(const std::string& path, const QueryPool& pool) {
  auto os = io::open_out(path);
  write_pool(os, pool);
}

inline QueryPool load_pool(const std::string& path) {
  auto is = io::open_in(path);
  return read_pool(is);
}

}  // namespace foh
