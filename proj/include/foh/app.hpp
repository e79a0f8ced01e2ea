#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "data.hpp"
#include "hash.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "query_pool.hpp"

// Subcommand implementations behind the foh command-line tool. Each command
// reads a resolved RunConfig, writes its artifacts under cfg.out, and throws on
// failure.
namespace foh::app {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::string hex;
  char buf[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(io::slurp(path)); }

inline std::string out_path(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out) / name).string(); }

inline void write_text(const std::string& path, const std::string& text) {
  auto os = io::open_out(path);
  os << text;
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Run manifest: config snapshot with provenance, the seed, and SHA-256 of
/// every input and deterministic output. Files whose content carries wall
/// times are listed by name only.
inline void write_manifest(const RunConfig& cfg, const std::string& command, const std::vector<std::string>& inputs,
                           const std::vector<std::string>& outputs, const std::vector<std::string>& timed_outputs = {}) {
  json m;
  m["command"] = command;
  m["seed"] = cfg.hyper.seed;
  m["config"] = json::object();
  m["provenance"] = json::object();
  for (const auto& k : config_keys()) {
    m["config"][k.name] = cfg.values.at(k.name);
    m["provenance"][k.name] = source_name(cfg.provenance.at(k.name));
  }
  m["inputs"] = json::object();
  for (const auto& p : inputs) m["inputs"][p] = sha256_file(p);
  m["outputs"] = json::object();
  for (const auto& p : outputs) m["outputs"][fs::path(p).filename().string()] = sha256_file(p);
  m["timed_outputs"] = json::array();
  for (const auto& p : timed_outputs) m["timed_outputs"].push_back(fs::path(p).filename().string());
  write_json(out_path(cfg, "manifest_" + command + ".json"), m);
}

// ---------------------------------------------------------------------------
// Inputs

inline std::string base_path(const RunConfig& cfg) {
  return cfg.data.empty() ? out_path(cfg, "base.fohd") : cfg.data;
}
inline std::string queries_path(const RunConfig& cfg) {
  return cfg.queries.empty() ? out_path(cfg, "queries.fohd") : cfg.queries;
}

inline Dataset load_input(const std::string& path, const std::string& labels, const char* what) {
  if (!fs::exists(path)) throw std::runtime_error(std::string("missing ") + what + ": " + path);
  Dataset ds = ingest(path, labels);
  ds.validate();
  return ds;
}

inline Dataset load_base(const RunConfig& cfg) { return load_input(base_path(cfg), cfg.labels, "base data"); }
inline Dataset load_queries(const RunConfig& cfg) {
  return load_input(queries_path(cfg), cfg.queries_labels, "query data");
}

inline std::vector<std::string> input_files(const RunConfig& cfg, bool with_queries) {
  std::vector<std::string> in{base_path(cfg)};
  if (!cfg.labels.empty()) in.push_back(cfg.labels);
  if (with_queries) {
    in.push_back(queries_path(cfg));
    if (!cfg.queries_labels.empty()) in.push_back(cfg.queries_labels);
  }
  return in;
}

inline HashModel load_trained_model(const RunConfig& cfg) {
  const auto p = out_path(cfg, "model.fohm");
  if (!fs::exists(p)) throw std::runtime_error("missing artifact " + p + " (run train first)");
  return load_model(p);
}

inline QueryPool load_trained_pool(const RunConfig& cfg, const HashModel& model, const Dataset& base) {
  const auto p = out_path(cfg, "pool.fohp");
  if (!fs::exists(p)) throw std::runtime_error("missing artifact " + p + " (run train without no_pool)");
  QueryPool pool = load_pool(p);
  for (std::size_t i = 0; i < pool.u; ++i) {
    detail::check_ids(pool.centers, base);
    detail::check_ids(pool.neighbors[i], base);
  }
  refresh_center_codes(pool, model, base);
  return pool;
}

// ---------------------------------------------------------------------------
// Shared building blocks (also used by the acceptance and sweep drivers)

/// Synthetic base and query sets: the last synth_queries samples are queries.
inline std::pair<Dataset, Dataset> synthesize(const RunConfig& cfg) {
  if (cfg.synth.samples <= cfg.synth_queries) throw std::invalid_argument("synth_samples must be >= 1");
  const Dataset all = gen_synthetic(cfg.synth);
  const std::size_t nb = all.size() - cfg.synth_queries;
  std::vector<std::size_t> bi(nb), qi(cfg.synth_queries);
  std::iota(bi.begin(), bi.end(), std::size_t{0});
  std::iota(qi.begin(), qi.end(), nb);
  Dataset base = all.subset(bi), queries = all.subset(qi);
  base.ids = dense_ids(base.size());
  queries.ids = dense_ids(queries.size());
  return {std::move(base), std::move(queries)};
}

/// Config adjusted for an ablation variant.
inline RunConfig variant_config(RunConfig cfg, Variant v) {
  switch (v) {
    case Variant::foh: break;
    case Variant::foh_q: cfg.no_pool = true; break;
    case Variant::foh_l: cfg.no_label_projection = true; break;
    case Variant::foh_s: cfg.binary_similarity = true; break;
  }
  return cfg;
}

inline std::size_t resolve_top_k(const RunConfig& cfg, QueryMode mode, const Dataset& base) {
  if (mode == QueryMode::full) return cfg.top_k == 0 ? base.size() : std::min(cfg.top_k, base.size());
  const auto& h = cfg.effective_hyper();
  return cfg.top_k == 0 ? h.beta * h.v : cfg.top_k;
}

inline TrainedIndex train_index(const RunConfig& cfg, const Dataset& base, std::ostream* log = nullptr,
                                std::ostream* jsonl = nullptr) {
  return train_stream(base, cfg.effective_hyper(), cfg.stream_options(), [&](const IterationLog& l) {
    if (log) *log << "stage=" << l.stage << " iter=" << l.iter << " objective=" << l.objective << " secs=" << l.secs << '\n';
    if (jsonl)
      *jsonl << json{{"stage", l.stage}, {"iter", l.iter}, {"objective", l.objective}, {"secs", l.secs}}.dump() << '\n';
  });
}

inline GroundTruth ground_truth(const RunConfig& cfg, const Dataset& queries, const Dataset& base, unsigned threads) {
  return build_ground_truth(queries, base, cfg.relevance, false, threads);
}

/// Answers every query in `mode` and scores the rankings.
inline MetricsReport score(const RunConfig& cfg, const HashModel& model, const QueryPool* pool, const Dataset& base,
                           const Dataset& queries, const GroundTruth& gt, QueryMode mode, unsigned threads,
                           std::vector<QueryResult>* results = nullptr) {
  const auto& h = cfg.effective_hyper();
  const auto t0 = std::chrono::steady_clock::now();
  auto res = run_queries(model, pool, base, queries, mode, resolve_top_k(cfg, mode, base), h.beta, threads);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MetricsReport rep = mode == QueryMode::pool
                          ? evaluate_queries(res, gt, cfg.eval_options(threads), h.u, h.beta, h.v)
                          : evaluate_queries(res, gt, cfg.eval_options(threads));
  rep.timing.query_secs_total = secs;
  if (results) *results = std::move(res);
  return rep;
}

/// Trains `variant` on the base set and scores it on the queries.
inline MetricsReport run_variant(const RunConfig& cfg, Variant variant, const Dataset& base, const Dataset& queries,
                                 const GroundTruth& gt, unsigned threads) {
  const RunConfig vc = variant_config(cfg, variant);
  const TrainedIndex idx = train_index(vc, base);
  const QueryMode mode = vc.effective_mode();
  MetricsReport rep = score(vc, idx.model, mode == QueryMode::pool ? &idx.pool : nullptr, base, queries, gt, mode, threads);
  rep.timing.train_secs = idx.train_secs;
  rep.timing.update_secs = idx.update_secs;
  return rep;
}

inline std::string format_results(const std::vector<QueryResult>& results, const Dataset& queries) {
  std::string out;
  for (std::size_t q = 0; q < results.size(); ++q) {
    out += std::to_string(queries.ids[q]) + '\t';
    for (std::size_t i = 0; i < results[q].ids.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(results[q].ids[i]);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

inline void cmd_synth(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  const auto [base, queries] = synthesize(cfg);
  const auto bp = out_path(cfg, "base.fohd"), qp = out_path(cfg, "queries.fohd");
  save_dataset(bp, base);
  save_dataset(qp, queries);
  write_manifest(cfg, "synth", {}, {bp, qp});
}

inline void cmd_ingest(const RunConfig& cfg) {
  if (cfg.data.empty()) throw std::invalid_argument("ingest requires data");
  fs::create_directories(cfg.out);
  std::vector<std::string> outputs{out_path(cfg, "base.fohd")};
  save_dataset(outputs[0], load_base(cfg));
  if (!cfg.queries.empty()) {
    outputs.push_back(out_path(cfg, "queries.fohd"));
    save_dataset(outputs[1], load_queries(cfg));
  }
  write_manifest(cfg, "ingest", input_files(cfg, !cfg.queries.empty()), outputs);
}

inline void cmd_train(const RunConfig& cfg, std::ostream& log) {
  const Dataset base = load_base(cfg);
  fs::create_directories(cfg.out);
  const auto log_path = out_path(cfg, "train_log.jsonl");
  auto jsonl = io::open_out(log_path);
  const TrainedIndex idx = train_index(cfg, base, &log, &jsonl);
  jsonl.close();

  // Stored codes in dataset order: row j holds the code of sample j.
  const CodeMatrix stream_codes = idx.accumulated_codes();
  CodeMatrix codes(stream_codes.bits(), base.size());
  for (std::size_t j = 0; j < idx.stream_ids.size(); ++j) {
    auto dst = codes.code(static_cast<std::size_t>(idx.stream_ids[j]));
    const auto src = stream_codes.code(j);
    std::copy(src.begin(), src.end(), dst.begin());
  }

  std::vector<std::string> outputs{out_path(cfg, "model.fohm"), out_path(cfg, "codes.fohc")};
  save_model(outputs[0], idx.model);
  save_codes(outputs[1], codes);
  if (!cfg.no_pool) {
    outputs.push_back(out_path(cfg, "pool.fohp"));
    save_pool(outputs.back(), idx.pool);
  } else {
    fs::remove(out_path(cfg, "pool.fohp"));
  }
  const auto timing_path = out_path(cfg, "train_timing.json");
  write_json(timing_path, json{{"train_secs", idx.train_secs}, {"update_secs", idx.update_secs}});
  if (!idx.model.all_columns_nonzero()) std::cerr << "warning: W has an all-zero column\n";
  write_manifest(cfg, "train", input_files(cfg, false), outputs, {log_path, timing_path});
}

inline std::vector<QueryResult> answer(const RunConfig& cfg, const Dataset& base, const Dataset& queries,
                                       unsigned threads, const HashModel& model) {
  const QueryMode mode = cfg.effective_mode();
  QueryPool pool;
  if (mode == QueryMode::pool) pool = load_trained_pool(cfg, model, base);
  return run_queries(model, mode == QueryMode::pool ? &pool : nullptr, base, queries, mode,
                     resolve_top_k(cfg, mode, base), cfg.effective_hyper().beta, threads);
}

inline void cmd_query(const RunConfig& cfg) {
  const unsigned threads = resolve_threads(cfg.threads);
  const Dataset base = load_base(cfg), queries = load_queries(cfg);
  const HashModel model = load_trained_model(cfg);
  const auto results = answer(cfg, base, queries, threads, model);
  const auto path = cfg.results.empty()
                        ? out_path(cfg, std::string("query_") + (cfg.effective_mode() == QueryMode::pool ? "pool" : "full") + ".tsv")
                        : cfg.results;
  write_text(path, format_results(results, queries));
  write_manifest(cfg, "query", input_files(cfg, true), {path});
}

inline void cmd_eval(const RunConfig& cfg) {
  const unsigned threads = resolve_threads(cfg.threads);
  const Dataset base = load_base(cfg), queries = load_queries(cfg);
  const HashModel model = load_trained_model(cfg);
  const QueryMode mode = cfg.effective_mode();
  QueryPool pool;
  if (mode == QueryMode::pool) pool = load_trained_pool(cfg, model, base);
  const GroundTruth gt = ground_truth(cfg, queries, base, threads);
  MetricsReport rep = score(cfg, model, mode == QueryMode::pool ? &pool : nullptr, base, queries, gt, mode, threads);
  if (const auto tp = out_path(cfg, "train_timing.json"); fs::exists(tp)) {
    const auto t = json::parse(io::slurp(tp));
    rep.timing.train_secs = t.at("train_secs").get<double>();
    rep.timing.update_secs = t.at("update_secs").get<double>();
  }
  const auto mp = out_path(cfg, "metrics.json"), pp = out_path(cfg, "pr.csv");
  write_json(mp, to_json(rep));
  write_text(pp, pr_curve_csv(rep));
  write_manifest(cfg, "eval", input_files(cfg, true), {pp}, {mp});
}

inline void cmd_bench(const RunConfig& cfg) {
  const unsigned threads = resolve_threads(cfg.threads);
  const Dataset base = load_base(cfg), queries = load_queries(cfg);
  const HashModel model = load_trained_model(cfg);
  const QueryPool pool = load_trained_pool(cfg, model, base);
  const GroundTruth gt = ground_truth(cfg, queries, base, threads);
  const auto& h = cfg.effective_hyper();
  BenchOptions opt;
  opt.top_k = std::min(resolve_top_k(cfg, QueryMode::pool, base), base.size());
  opt.beta = h.beta;
  opt.repetitions = cfg.repetitions;
  opt.eval = cfg.eval_options(threads);
  const auto [pool_rep, full_rep] = bench_compare(model, pool, base, queries, gt, opt);
  const double ratio = full_rep.timing.query_secs_total > 0
                           ? pool_rep.timing.query_secs_total / full_rep.timing.query_secs_total
                           : 0.0;
  const auto path = out_path(cfg, "bench.json");
  write_json(path, json{{"top_k", opt.top_k},
                        {"pool", to_json(pool_rep)},
                        {"full", to_json(full_rep)},
                        {"pool_over_full_time", ratio}});
  write_manifest(cfg, "bench", input_files(cfg, true), {}, {path});
}

inline void cmd_ablate(const RunConfig& cfg) {
  const unsigned threads = resolve_threads(cfg.threads);
  const Dataset base = load_base(cfg), queries = load_queries(cfg);
  const GroundTruth gt = ground_truth(cfg, queries, base, threads);
  json out = json::object();
  for (const auto v : cfg.variants) out[variant_name(v)] = to_json(run_variant(cfg, v, base, queries, gt, threads));
  fs::create_directories(cfg.out);
  const auto path = out_path(cfg, "ablation.json");
  write_json(path, out);
  write_manifest(cfg, "ablate", input_files(cfg, true), {}, {path});
}

inline constexpr std::size_t kMaxCadence = 5;

inline void cmd_sweep_refresh(const RunConfig& cfg) {
  const unsigned threads = resolve_threads(cfg.threads);
  const Dataset base = load_base(cfg), queries = load_queries(cfg);
  const GroundTruth gt = ground_truth(cfg, queries, base, threads);
  json out = json::object();
  for (std::size_t cadence = 1; cadence <= kMaxCadence; ++cadence) {
    RunConfig c = cfg;
    c.hyper.refresh_every = cadence;
    c.values["refresh_every"] = std::to_string(cadence);
    out[std::to_string(cadence)] = to_json(run_variant(c, Variant::foh, base, queries, gt, threads));
  }
  fs::create_directories(cfg.out);
  const auto path = out_path(cfg, "sweep_refresh.json");
  write_json(path, out);
  write_manifest(cfg, "sweep-refresh", input_files(cfg, true), {}, {path});
}

}  // namespace foh::app
