#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "data.hpp"
#include "metrics.hpp"
#include "params.hpp"
#include "pipeline.hpp"
#include "similarity.hpp"

namespace foh {

/// Where a resolved config value came from.
enum class Source { default_value, file, flag };

inline const char* source_name(Source s) {
  switch (s) {
    case Source::default_value: return "default";
    case Source::file: return "file";
    case Source::flag: return "flag";
  }
  return "?";
}

struct ConfigKey {
  const char* name;
  const char* fallback;
  const char* help;
  bool is_switch = false;  // set by a bare command-line flag
};

/// Every accepted key with its default. HyperParams keys come first.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"sigma", "0.8", "quantization loss weight"},
      {"theta", "1.2", "label projection weight, stream data"},
      {"mu", "0.5", "label projection weight, existing data"},
      {"lambda", "0.6", "ridge weight on W"},
      {"tau", "0.6", "ridge weight on P"},
      {"eta_s", "1.2", "weight of similar pairs in the target"},
      {"eta_d", "0.2", "weight of dissimilar pairs in the target"},
      {"u", "500", "number of central points"},
      {"v", "500", "neighbors kept per central point"},
      {"beta", "10", "central points a query is routed to"},
      {"r", "auto", "centers replaced per refresh (auto = ceil(0.1 u))"},
      {"refresh_every", "1", "refresh centers every this many batches"},
      {"max_alt_iters", "5", "alternating iterations per stage"},
      {"tol", "0.0001", "relative objective change that ends a stage"},
      {"max_existing", "0", "cap on existing codes optimized per stage (0 = all)"},
      {"label_projection", "true", "use the label projection terms"},
      {"paper_sign_z", "false", "subtract the label term in the Be auxiliary"},
      {"monotone_be", "true", "drop Be updates that raise the objective"},
      {"seed", "1", "training seed"},

      {"data", "", "base dataset (FOHD, or CSV features)"},
      {"labels", "", "label CSV for CSV base data"},
      {"queries", "", "query dataset (FOHD, or CSV features)"},
      {"queries_labels", "", "label CSV for CSV queries"},
      {"out", "run", "output directory"},
      {"results", "", "query result file (default <out>/query_<mode>.tsv)"},
      {"bits", "32", "code length k"},
      {"batch_size", "2000", "stream batch size"},
      {"perm_seed", "1", "stream order seed (0 keeps file order)"},
      {"top_k", "1000", "results per query (0 = everything reachable)"},
      {"eval_at", "10,100,1000", "cutoffs for precision@k and recall@k"},
      {"map_mode", "full", "mAP denominator: full | truncated"},
      {"relevance", "share_any_label", "share_any_label | same_single_label"},
      {"similarity", "auto", "auto | single | multi | binary"},
      {"mode", "pool", "query path: pool | full"},
      {"variant", "all", "ablation variant: foh | foh-q | foh-l | foh-s | all"},
      {"repetitions", "3", "timed passes in bench"},
      {"threads", "0", "worker threads (0 = FOH_THREADS or 1)"},
      {"no_pool", "false", "answer queries by full scan", true},
      {"no_label_projection", "false", "drop the label projection terms", true},
      {"binary_similarity", "false", "+-1 shared-label similarity on multi-label data", true},

      {"synth_clusters", "10", "synthetic: blobs / categories"},
      {"synth_dim", "32", "synthetic: feature dimension"},
      {"synth_samples", "20000", "synthetic: base samples"},
      {"synth_queries", "1000", "synthetic: query samples"},
      {"synth_labels_min", "1", "synthetic: fewest labels per sample"},
      {"synth_labels_max", "2", "synthetic: most labels per sample"},
      {"synth_std", "0.5", "synthetic: noise std in informative dims"},
      {"synth_pull", "0.3", "synthetic: pull toward extra labels' centroids"},
      {"synth_informative", "8", "synthetic: dims carrying centroids (0 = all)"},
      {"synth_nuisance", "4", "synthetic: noise std in the other dims"},
      {"synth_seed", "1", "synthetic: generator seed"},
  };
  return keys;
}

inline const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (name == k.name) return &k;
  return nullptr;
}

enum class Variant { foh, foh_q, foh_l, foh_s };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::foh: return "foh";
    case Variant::foh_q: return "foh-q";
    case Variant::foh_l: return "foh-l";
    case Variant::foh_s: return "foh-s";
  }
  return "?";
}

/// Fully resolved run configuration.
struct RunConfig {
  HyperParams hyper;
  std::string data, labels, queries, queries_labels, out, results;
  std::size_t bits = 32;
  std::size_t batch_size = 2000;
  std::uint64_t perm_seed = 1;
  std::size_t top_k = 1000;
  std::vector<std::size_t> eval_at;
  MapMode map_mode = MapMode::full;
  RelevanceRule relevance = RelevanceRule::share_any_label;
  std::optional<SimilarityMode> similarity;
  QueryMode mode = QueryMode::pool;
  std::vector<Variant> variants;
  std::size_t repetitions = 3;
  int threads = 0;
  bool no_pool = false;
  bool no_label_projection = false;
  bool binary_similarity = false;
  SyntheticSpec synth;
  std::size_t synth_queries = 1000;

  std::map<std::string, std::string> values;  // resolved text of every key
  std::map<std::string, Source> provenance;

  /// Similarity rule after the ablation switch.
  std::optional<SimilarityMode> effective_similarity() const {
    return binary_similarity ? std::optional(SimilarityMode::binary) : similarity;
  }
  /// Hyperparameters after the ablation switches.
  HyperParams effective_hyper() const {
    HyperParams h = hyper;
    if (no_label_projection) h.label_projection = false;
    return h;
  }
  QueryMode effective_mode() const { return no_pool ? QueryMode::full : mode; }
  StreamOptions stream_options() const {
    StreamOptions o;
    o.bits = bits;
    o.batch_size = batch_size;
    o.perm_seed = perm_seed;
    o.mode = effective_similarity();
    o.build_pool = !no_pool;
    return o;
  }
  EvalOptions eval_options(unsigned threads_resolved) const {
    return {eval_at, map_mode, threads_resolved};
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  std::uint64_t x = 0;
  try {
    if (v.empty() || v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw std::invalid_argument("unparsable value for " + key + ": '" + v + "'");
  return x;
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || !std::isfinite(x))
    throw std::invalid_argument("unparsable value for " + key + ": '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("unparsable value for " + key + ": '" + v + "'");
}

inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": expected key=value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

}  // namespace detail

/// Resolves the configuration: defaults, then the file (if any), then the
/// flag overrides in order. Unknown keys, unparsable values and constraint
/// violations throw.
inline RunConfig parse_config(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& flags = {}) {
  RunConfig cfg;
  for (const auto& k : config_keys()) {
    cfg.values[k.name] = k.fallback;
    cfg.provenance[k.name] = Source::default_value;
  }
  auto assign = [&](const std::string& key, const std::string& value, Source src) {
    if (!find_key(key)) throw std::invalid_argument("unknown config key: " + key);
    cfg.values[key] = value;
    cfg.provenance[key] = src;
  };
  if (!path.empty())
    for (const auto& [k, v] : detail::read_config_file(path)) assign(k, v, Source::file);
  for (const auto& [k, v] : flags) assign(k, v, Source::flag);

  const auto& val = cfg.values;
  using detail::parse_bool;
  using detail::parse_real;
  using detail::parse_uint;
  // Non-hyperparameter keys are ignored by HyperParams::set.
  for (const auto& [k, v] : val)
    if (!(k == "r" && v == "auto")) cfg.hyper.set(k, v);
  if (val.at("r") == "auto") {
    cfg.hyper.r = (cfg.hyper.u + 9) / 10;
    cfg.values["r"] = std::to_string(cfg.hyper.r);
  }

  cfg.data = val.at("data");
  cfg.labels = val.at("labels");
  cfg.queries = val.at("queries");
  cfg.queries_labels = val.at("queries_labels");
  cfg.out = val.at("out");
  cfg.results = val.at("results");
  cfg.bits = parse_uint("bits", val.at("bits"));
  if (cfg.bits < 1) throw std::invalid_argument("bits must be >= 1");
  cfg.batch_size = parse_uint("batch_size", val.at("batch_size"));
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  cfg.perm_seed = parse_uint("perm_seed", val.at("perm_seed"));
  cfg.top_k = parse_uint("top_k", val.at("top_k"));
  {
    std::stringstream ss(val.at("eval_at"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto k = parse_uint("eval_at", detail::trim(item));
      if (k < 1) throw std::invalid_argument("eval_at entries must be >= 1");
      cfg.eval_at.push_back(k);
    }
  }

  const auto& mm = val.at("map_mode");
  if (mm == "full") cfg.map_mode = MapMode::full;
  else if (mm == "truncated") cfg.map_mode = MapMode::truncated;
  else throw std::invalid_argument("unparsable value for map_mode: '" + mm + "'");

  const auto& rel = val.at("relevance");
  if (rel == "share_any_label") cfg.relevance = RelevanceRule::share_any_label;
  else if (rel == "same_single_label") cfg.relevance = RelevanceRule::same_single_label;
  else throw std::invalid_argument("unparsable value for relevance: '" + rel + "'");

  const auto& sim = val.at("similarity");
  if (sim == "single") cfg.similarity = SimilarityMode::single;
  else if (sim == "multi") cfg.similarity = SimilarityMode::multi;
  else if (sim == "binary") cfg.similarity = SimilarityMode::binary;
  else if (sim != "auto") throw std::invalid_argument("unparsable value for similarity: '" + sim + "'");

  const auto& mode = val.at("mode");
  if (mode == "pool") cfg.mode = QueryMode::pool;
  else if (mode == "full") cfg.mode = QueryMode::full;
  else throw std::invalid_argument("unparsable value for mode: '" + mode + "'");

  const auto& var = val.at("variant");
  if (var == "all") cfg.variants = {Variant::foh, Variant::foh_q, Variant::foh_l, Variant::foh_s};
  else if (var == "foh") cfg.variants = {Variant::foh};
  else if (var == "foh-q") cfg.variants = {Variant::foh_q};
  else if (var == "foh-l") cfg.variants = {Variant::foh_l};
  else if (var == "foh-s") cfg.variants = {Variant::foh_s};
  else throw std::invalid_argument("unparsable value for variant: '" + var + "'");

  cfg.repetitions = parse_uint("repetitions", val.at("repetitions"));
  if (cfg.repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  cfg.threads = static_cast<int>(parse_uint("threads", val.at("threads")));
  cfg.no_pool = parse_bool("no_pool", val.at("no_pool"));
  cfg.no_label_projection = parse_bool("no_label_projection", val.at("no_label_projection"));
  cfg.binary_similarity = parse_bool("binary_similarity", val.at("binary_similarity"));

  auto& s = cfg.synth;
  s.n_clusters = parse_uint("synth_clusters", val.at("synth_clusters"));
  s.dim = parse_uint("synth_dim", val.at("synth_dim"));
  cfg.synth_queries = parse_uint("synth_queries", val.at("synth_queries"));
  s.samples = parse_uint("synth_samples", val.at("synth_samples")) + cfg.synth_queries;
  s.labels_min = parse_uint("synth_labels_min", val.at("synth_labels_min"));
  s.labels_max = parse_uint("synth_labels_max", val.at("synth_labels_max"));
  s.cluster_std = parse_real("synth_std", val.at("synth_std"));
  s.extra_label_pull = parse_real("synth_pull", val.at("synth_pull"));
  s.informative_dims = parse_uint("synth_informative", val.at("synth_informative"));
  s.nuisance_std = parse_real("synth_nuisance", val.at("synth_nuisance"));
  s.seed = parse_uint("synth_seed", val.at("synth_seed"));

  cfg.hyper.validate();
  return cfg;
}

}  // namespace foh
