#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "util.hpp"

namespace foh {

/// Dense float features, one contiguous d-vector per sample.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t d, std::size_t n) : d_(d), n_(n), values_(d * n, 0.0f) {
    if (d == 0) throw std::invalid_argument("feature dimension must be >= 1");
  }
  FeatureMatrix(std::size_t d, std::vector<float> values) : d_(d), values_(std::move(values)) {
    if (d == 0) throw std::invalid_argument("feature dimension must be >= 1");
    if (values_.size() % d != 0) throw std::invalid_argument("feature buffer not a multiple of d");
    n_ = values_.size() / d;
  }

  std::size_t dim() const { return d_; }
  std::size_t size() const { return n_; }

  std::span<const float> sample(std::size_t j) const { return {values_.data() + j * d_, d_}; }
  std::span<float> sample(std::size_t j) { return {values_.data() + j * d_, d_}; }
  const std::vector<float>& values() const { return values_; }

  void push_back(std::span<const float> x) {
    if (x.size() != d_) throw std::invalid_argument("feature dimension mismatch");
    values_.insert(values_.end(), x.begin(), x.end());
    ++n_;
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t d_ = 1;
  std::size_t n_ = 0;
  std::vector<float> values_;
};

/// Binary multi-label assignments: one c-bit set per sample, packed in u64 words.
class LabelMatrix {
 public:
  LabelMatrix() = default;
  LabelMatrix(std::size_t c, std::size_t n)
      : c_(c), n_(n), words_((c + 63) / 64), bits_(n * ((c + 63) / 64), 0) {}

  std::size_t categories() const { return c_; }
  std::size_t size() const { return n_; }
  std::size_t words_per_sample() const { return words_; }

  std::span<const std::uint64_t> row(std::size_t j) const { return {bits_.data() + j * words_, words_}; }

  bool test(std::size_t j, std::size_t cat) const {
    return (bits_[j * words_ + cat / 64] >> (cat % 64)) & 1u;
  }
  void set(std::size_t j, std::size_t cat, bool on = true) {
    if (cat >= c_) throw std::out_of_range("label index out of range");
    auto& w = bits_[j * words_ + cat / 64];
    const std::uint64_t mask = std::uint64_t{1} << (cat % 64);
    w = on ? (w | mask) : (w & ~mask);
  }
  std::size_t count(std::size_t j) const {
    std::size_t total = 0;
    for (auto w : row(j)) total += static_cast<std::size_t>(std::popcount(w));
    return total;
  }

  void push_back(std::span<const std::uint64_t> labels) {
    if (labels.size() != words_) throw std::invalid_argument("label width mismatch");
    bits_.insert(bits_.end(), labels.begin(), labels.end());
    ++n_;
  }

  friend bool operator==(const LabelMatrix&, const LabelMatrix&) = default;

 private:
  std::size_t c_ = 0;
  std::size_t n_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> bits_;
};

/// Features, labels, and the global id of each sample.
struct Dataset {
  FeatureMatrix features;
  LabelMatrix labels;
  std::vector<std::uint64_t> ids;

  std::size_t size() const { return features.size(); }
  std::size_t dim() const { return features.dim(); }
  std::size_t categories() const { return labels.categories(); }

  /// Copy of the selected rows; global ids travel with the samples.
  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out{FeatureMatrix(dim(), 0), LabelMatrix(categories(), 0), {}};
    out.ids.reserve(rows.size());
    for (auto r : rows) {
      out.features.push_back(features.sample(r));
      out.labels.push_back(labels.row(r));
      out.ids.push_back(ids[r]);
    }
    return out;
  }

  void validate() const {
    if (labels.size() != features.size())
      throw std::invalid_argument("sample count mismatch: features have " +
                                  std::to_string(features.size()) + " samples, labels have " +
                                  std::to_string(labels.size()));
    if (ids.size() != features.size()) throw std::invalid_argument("id count mismatch");
    if (!features.all_finite()) throw std::invalid_argument("non-finite feature value");
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline std::vector<std::uint64_t> dense_ids(std::size_t n) {
  std::vector<std::uint64_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::uint64_t{0});
  return ids;
}

// ---------------------------------------------------------------------------
// Binary container "FOHD": magic, u32 version, u32 d, u32 c, u64 n,
// n*d f32 (sample-major), n label bitsets of ceil(c/8) bytes, LSB-first.

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  io::put_magic(os, "FOHD");
  io::put_u32(os, 1);
  io::put_u32(os, static_cast<std::uint32_t>(ds.dim()));
  io::put_u32(os, static_cast<std::uint32_t>(ds.categories()));
  io::put_u64(os, ds.size());
  for (float v : ds.features.values()) io::put_f32(os, v);
  const std::size_t nbytes = (ds.categories() + 7) / 8;
  for (std::size_t j = 0; j < ds.size(); ++j) {
    const auto row = ds.labels.row(j);
    for (std::size_t b = 0; b < nbytes; ++b) {
      const auto byte = static_cast<char>((row[b / 8] >> (8 * (b % 8))) & 0xFFu);
      os.put(byte);
    }
  }
}

inline Dataset read_dataset(std::istream& is) {
  io::expect_magic(is, "FOHD");
  io::expect_version(is, "dataset");
  const std::uint32_t d = io::get_u32(is, "dataset header");
  const std::uint32_t c = io::get_u32(is, "dataset header");
  const std::uint64_t n = io::get_u64(is, "dataset header");
  if (d == 0) throw std::runtime_error("malformed header: d = 0");
  std::vector<float> values(static_cast<std::size_t>(n) * d);
  for (auto& v : values) v = io::get_f32(is, "feature block");
  Dataset ds{FeatureMatrix(d, std::move(values)), LabelMatrix(c, 0), dense_ids(n)};
  if (ds.features.size() != n) throw std::runtime_error("malformed header: n");
  const std::size_t nbytes = (c + 7) / 8;
  std::vector<std::uint64_t> row(ds.labels.words_per_sample());
  std::vector<unsigned char> buf(nbytes);
  for (std::uint64_t j = 0; j < n; ++j) {
    io::read_exact(is, reinterpret_cast<char*>(buf.data()), nbytes, "label block");
    std::fill(row.begin(), row.end(), 0);
    for (std::size_t b = 0; b < nbytes; ++b)
      row[b / 8] |= static_cast<std::uint64_t>(buf[b]) << (8 * (b % 8));
    if (c % 64 != 0 && !row.empty() && (row.back() >> (c % 64)) != 0)
      throw std::runtime_error("label bit set beyond category count");
    ds.labels.push_back(row);
  }
  ds.validate();
  return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  auto os = io::open_out(path);
  write_dataset(os, ds);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline Dataset load_dataset(const std::string& path) {
  auto is = io::open_in(path);
  return read_dataset(is);
}

// ---------------------------------------------------------------------------
// CSV: one sample per line, comma separated.

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, std::string_view what, std::size_t line_no) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::invalid_argument("cannot parse " + std::string(what) + " '" + std::string(s) +
                                "' on line " + std::to_string(line_no));
  return v;
}

inline std::vector<std::vector<std::string_view>> csv_rows(const std::string& text,
                                                           std::vector<std::string>& storage) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    storage.push_back(line);
  }
  std::vector<std::vector<std::string_view>> rows;
  rows.reserve(storage.size());
  for (const auto& l : storage) rows.push_back(split_csv(l));
  return rows;
}

inline void parse_label_fields(std::span<const std::string_view> fields, std::size_t line_no,
                               std::vector<std::uint64_t>& row) {
  std::fill(row.begin(), row.end(), 0);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const int bit = parse_number<int>(fields[i], "label", line_no);
    if (bit != 0 && bit != 1)
      throw std::invalid_argument("label value must be 0 or 1 on line " + std::to_string(line_no));
    if (bit) row[i / 64] |= std::uint64_t{1} << (i % 64);
  }
}

}  // namespace detail

/// Separate feature and label CSV files (d floats per line; c 0/1 ints per line).
inline Dataset ingest_csv(const std::string& features_path, const std::string& labels_path) {
  std::vector<std::string> fstore, lstore;
  const auto frows = detail::csv_rows(io::slurp(features_path), fstore);
  const auto lrows = detail::csv_rows(io::slurp(labels_path), lstore);
  if (frows.size() != lrows.size())
    throw std::invalid_argument("sample count mismatch: " + std::to_string(frows.size()) +
                                " feature rows vs " + std::to_string(lrows.size()) + " label rows");
  if (frows.empty()) throw std::invalid_argument("empty feature file");
  const std::size_t d = frows.front().size();
  const std::size_t c = lrows.front().size();
  Dataset ds{FeatureMatrix(d, 0), LabelMatrix(c, 0), dense_ids(frows.size())};
  std::vector<float> x(d);
  std::vector<std::uint64_t> row((c + 63) / 64);
  for (std::size_t j = 0; j < frows.size(); ++j) {
    if (frows[j].size() != d)
      throw std::invalid_argument("dimension mismatch on feature line " + std::to_string(j + 1));
    if (lrows[j].size() != c)
      throw std::invalid_argument("category count mismatch on label line " + std::to_string(j + 1));
    for (std::size_t i = 0; i < d; ++i) x[i] = detail::parse_number<float>(frows[j][i], "feature", j + 1);
    detail::parse_label_fields(lrows[j], j + 1, row);
    ds.features.push_back(x);
    ds.labels.push_back(row);
  }
  ds.validate();
  return ds;
}

/// Single CSV file with d floats followed by c label ints on each line.
inline Dataset ingest_csv_combined(const std::string& path, std::size_t c) {
  std::vector<std::string> store;
  const auto rows = detail::csv_rows(io::slurp(path), store);
  if (rows.empty()) throw std::invalid_argument("empty csv file");
  if (rows.front().size() <= c) throw std::invalid_argument("csv row has no feature columns");
  const std::size_t d = rows.front().size() - c;
  Dataset ds{FeatureMatrix(d, 0), LabelMatrix(c, 0), dense_ids(rows.size())};
  std::vector<float> x(d);
  std::vector<std::uint64_t> row((c + 63) / 64);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j].size() != d + c)
      throw std::invalid_argument("dimension mismatch on line " + std::to_string(j + 1));
    for (std::size_t i = 0; i < d; ++i) x[i] = detail::parse_number<float>(rows[j][i], "feature", j + 1);
    detail::parse_label_fields(std::span(rows[j]).subspan(d), j + 1, row);
    ds.features.push_back(x);
    ds.labels.push_back(row);
  }
  ds.validate();
  return ds;
}

/// Loads a binary container when the file starts with the FOHD magic, otherwise
/// a feature CSV paired with a label CSV.
inline Dataset ingest(const std::string& features_path, const std::string& labels_path = {}) {
  {
    auto is = io::open_in(features_path);
    char magic[4] = {};
    is.read(magic, 4);
    if (is.gcount() == 4 && std::string_view(magic, 4) == "FOHD") {
      is.seekg(0);
      return read_dataset(is);
    }
  }
  if (labels_path.empty()) throw std::invalid_argument("csv features require a label file");
  return ingest_csv(features_path, labels_path);
}

inline void write_csv(const std::string& path, const Dataset& ds) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.precision(9);
  for (std::size_t j = 0; j < ds.size(); ++j) {
    const auto x = ds.features.sample(j);
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
    for (std::size_t cat = 0; cat < ds.categories(); ++cat) os << ',' << (ds.labels.test(j, cat) ? 1 : 0);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Stream batching.

/// One stream stage: the arriving batch and the number of samples seen before it.
struct Batch {
  Dataset data;
  std::size_t stage = 0;     // 1-based
  std::size_t existing = 0;  // samples in all earlier batches
};

class StreamBatcher {
 public:
  /// Splits `ds` into batches of `batch_size` in a seeded random order. With a
  /// zero seed the file order is kept.
  StreamBatcher(const Dataset& ds, std::size_t batch_size, std::uint64_t perm_seed)
      : ds_(&ds), batch_size_(batch_size), order_(ds.size()) {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (perm_seed != 0) {
      std::mt19937_64 gen(perm_seed);
      std::shuffle(order_.begin(), order_.end(), gen);
    }
    num_batches_ = (order_.size() + batch_size - 1) / batch_size;
    // A short tail is folded into the previous batch so the final block is
    // never smaller than half a batch (20,015 / 2,000 -> 9 blocks, last 2,015).
    if (num_batches_ > 1 && order_.size() % batch_size != 0 &&
        order_.size() % batch_size < batch_size / 2)
      --num_batches_;
  }

  std::size_t num_batches() const { return num_batches_; }
  std::size_t stage() const { return stage_; }
  std::size_t consumed() const { return cursor_; }
  const std::vector<std::size_t>& order() const { return order_; }

  std::optional<Batch> next_batch() {
    if (stage_ >= num_batches_) return std::nullopt;
    const std::size_t begin = cursor_;
    const std::size_t end = (stage_ + 1 == num_batches_) ? order_.size() : begin + batch_size_;
    Batch b{ds_->subset(std::span(order_).subspan(begin, end - begin)), stage_ + 1, begin};
    cursor_ = end;
    ++stage_;
    return b;
  }

 private:
  const Dataset* ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t num_batches_ = 0;
  std::size_t stage_ = 0;
  std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// Synthetic data.

struct SyntheticSpec {
  std::size_t n_clusters = 10;
  std::size_t dim = 32;
  std::size_t samples = 1000;
  std::size_t labels_min = 1;
  std::size_t labels_max = 1;
  double cluster_std = 1.0;
  // Fraction by which a sample's features move toward the centroids of its
  // extra labels. Zero keeps every sample on its own blob.
  double extra_label_pull = 0.0;
  // Centroids occupy the first `informative_dims` coordinates (0 = all); the
  // remaining coordinates carry zero-mean noise with std `nuisance_std`.
  std::size_t informative_dims = 0;
  double nuisance_std = 0.0;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  Dataset dataset;
  std::vector<std::size_t> primary;  // blob of each sample
  std::vector<std::vector<float>> centroids;
};

/// Gaussian blobs, one category per blob. Each sample carries its blob's
/// category plus extra categories drawn uniformly from the others.
inline SyntheticData gen_synthetic_full(const SyntheticSpec& spec) {
  const std::size_t c = spec.n_clusters;
  if (spec.n_clusters == 0) throw std::invalid_argument("n_clusters must be >= 1");
  if (spec.samples < spec.n_clusters) throw std::invalid_argument("samples must be >= n_clusters");
  if (spec.labels_min < 1 || spec.labels_min > spec.labels_max)
    throw std::invalid_argument("labels_per_sample range is empty");
  if (spec.labels_max > c) throw std::invalid_argument("labels_per_sample upper bound exceeds c");
  if (spec.informative_dims > spec.dim) throw std::invalid_argument("informative_dims exceeds dim");
  const std::size_t informative = spec.informative_dims == 0 ? spec.dim : spec.informative_dims;

  std::mt19937_64 gen(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SyntheticData out;
  out.centroids.assign(c, std::vector<float>(spec.dim));
  for (auto& cen : out.centroids)
    for (std::size_t i = 0; i < informative; ++i) cen[i] = static_cast<float>(normal(gen));

  out.dataset = Dataset{FeatureMatrix(spec.dim, 0), LabelMatrix(c, 0), dense_ids(spec.samples)};
  std::uniform_int_distribution<std::size_t> pick_cluster(0, c - 1);
  std::uniform_int_distribution<std::size_t> pick_count(spec.labels_min, spec.labels_max);
  std::vector<float> x(spec.dim);
  std::vector<std::size_t> others(c);
  std::vector<std::uint64_t> row((c + 63) / 64);
  out.primary.reserve(spec.samples);
  for (std::size_t j = 0; j < spec.samples; ++j) {
    // The first n_clusters samples cover every blob once.
    const std::size_t p = j < c ? j : pick_cluster(gen);
    const std::size_t nlab = pick_count(gen);
    std::fill(row.begin(), row.end(), 0);
    row[p / 64] |= std::uint64_t{1} << (p % 64);

    std::iota(others.begin(), others.end(), std::size_t{0});
    std::swap(others[p], others[c - 1]);
    std::vector<double> pull(spec.dim, 0.0);
    for (std::size_t e = 0; e + 1 < nlab; ++e) {
      std::uniform_int_distribution<std::size_t> pick(e, c - 2);
      std::swap(others[e], others[pick(gen)]);
      const std::size_t extra = others[e];
      row[extra / 64] |= std::uint64_t{1} << (extra % 64);
      for (std::size_t i = 0; i < spec.dim; ++i) pull[i] += out.centroids[extra][i];
    }
    const double extras = static_cast<double>(nlab - 1);
    for (std::size_t i = 0; i < spec.dim; ++i) {
      double base = out.centroids[p][i];
      if (extras > 0) base += spec.extra_label_pull * (pull[i] / extras - base);
      const double noise = i < informative ? spec.cluster_std : spec.nuisance_std;
      x[i] = static_cast<float>(base + noise * normal(gen));
    }
    out.dataset.features.push_back(x);
    out.dataset.labels.push_back(row);
    out.primary.push_back(p);
  }
  return out;
}

inline Dataset gen_synthetic(const SyntheticSpec& spec) { return gen_synthetic_full(spec).dataset; }

}  // namespace foh
