#pragma once

// Data sources: in-memory columnar datasets, the ground-truth synthetic CTR
// generator, Criteo-style TSV ingestion, negative down-sampling and day splits.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lpfs/errors.hpp"
#include "lpfs/metrics.hpp"

namespace lpfs {

// A contiguous run of samples. ids are row-major (size() x n_fields),
// continuous is row-major (size() x continuous_dim).
struct Minibatch {
  std::span<const double> labels;
  std::span<const std::uint32_t> categorical_ids;
  std::span<const double> continuous;
  std::size_t n_fields = 0;
  std::size_t continuous_dim = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::uint32_t id(std::size_t row, std::size_t field) const {
    return categorical_ids[row * n_fields + field];
  }
  double cont(std::size_t row, std::size_t j) const { return continuous[row * continuous_dim + j]; }
};

struct Dataset {
  std::size_t n_fields = 0;
  std::size_t continuous_dim = 0;
  std::vector<double> labels;
  std::vector<std::uint32_t> ids;
  std::vector<double> continuous;
  std::vector<int> days;  // empty when the source has no day tags

  Dataset() = default;
  Dataset(std::size_t fields, std::size_t cont) : n_fields(fields), continuous_dim(cont) {}

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }

  void reserve(std::size_t n) {
    labels.reserve(n);
    ids.reserve(n * n_fields);
    continuous.reserve(n * continuous_dim);
  }

  void push_back(double label, std::span<const std::uint32_t> row_ids,
                 std::span<const double> row_cont, std::optional<int> day = std::nullopt) {
    if (row_ids.size() != n_fields || row_cont.size() != continuous_dim)
      throw ContractViolation("Dataset::push_back: row width mismatch");
    if (!labels.empty() && day.has_value() == days.empty())
      throw ContractViolation("Dataset::push_back: day tags must be given for all rows or none");
    labels.push_back(label);
    ids.insert(ids.end(), row_ids.begin(), row_ids.end());
    continuous.insert(continuous.end(), row_cont.begin(), row_cont.end());
    if (day) days.push_back(*day);
  }

  // Appends row i of other.
  void push_row(const Dataset& other, std::size_t i) {
    std::optional<int> day;
    if (!other.days.empty()) day = other.days[i];
    push_back(other.labels[i],
              std::span(other.ids).subspan(i * other.n_fields, other.n_fields),
              std::span(other.continuous).subspan(i * other.continuous_dim, other.continuous_dim),
              day);
  }

  void append(const Dataset& other) {
    if (other.n_fields != n_fields || other.continuous_dim != continuous_dim)
      throw ContractViolation("Dataset::append: layout mismatch");
    if (other.empty()) return;
    if (!empty() && other.days.empty() != days.empty())
      throw ContractViolation("Dataset::append: day tags must be given for all rows or none");
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    ids.insert(ids.end(), other.ids.begin(), other.ids.end());
    continuous.insert(continuous.end(), other.continuous.begin(), other.continuous.end());
    days.insert(days.end(), other.days.begin(), other.days.end());
  }

  Minibatch batch(std::size_t begin, std::size_t count) const {
    if (begin > size() || count > size() - begin)
      throw ContractViolation("Dataset::batch: range out of bounds");
    Minibatch b;
    b.labels = std::span(labels).subspan(begin, count);
    b.categorical_ids = std::span(ids).subspan(begin * n_fields, count * n_fields);
    b.continuous = std::span(continuous).subspan(begin * continuous_dim, count * continuous_dim);
    b.n_fields = n_fields;
    b.continuous_dim = continuous_dim;
    return b;
  }

  Minibatch all() const { return batch(0, size()); }
};

// Walks a dataset in order, batch by batch, wrapping around at the end. The
// final batch of a pass may be short.
class BatchCursor {
 public:
  BatchCursor(const Dataset& data, std::size_t batch_size) : data_(&data), batch_size_(batch_size) {
    if (data.empty()) throw DataError("cannot iterate an empty dataset");
    if (batch_size == 0) throw ContractViolation("batch size must be positive");
  }

  Minibatch next() {
    if (pos_ >= data_->size()) pos_ = 0;
    const std::size_t count = std::min(batch_size_, data_->size() - pos_);
    Minibatch b = data_->batch(pos_, count);
    pos_ += count;
    return b;
  }

 private:
  const Dataset* data_;
  std::size_t batch_size_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Synthetic generator

struct SyntheticSpec {
  std::size_t n_fields = 30;
  std::size_t n_informative = 10;
  std::vector<std::size_t> cardinality = std::vector<std::size_t>(30, 100);
  std::size_t n_continuous = 0;
  double weight_scale = 2.0;
  double label_noise = 0.05;
  std::uint64_t seed = 1;

  std::size_t field_cardinality(std::size_t f) const {
    return cardinality.size() == 1 ? cardinality[0] : cardinality.at(f);
  }

  void validate() const {
    if (n_fields == 0) throw ContractViolation("synthetic spec needs at least one field");
    if (n_informative > n_fields)
      throw ContractViolation("synthetic spec: n_informative exceeds n_fields");
    if (cardinality.size() != 1 && cardinality.size() != n_fields)
      throw ContractViolation("synthetic spec: cardinality list must have 1 or n_fields entries");
    for (std::size_t c : cardinality) {
      if (c == 0) throw ContractViolation("synthetic spec: cardinality must be positive");
    }
    if (!(weight_scale > 0.0)) throw ContractViolation("synthetic spec: weight_scale must be positive");
    if (!(label_noise >= 0.0 && label_noise < 0.5))
      throw ContractViolation("synthetic spec: label_noise must lie in [0, 0.5)");
  }
};

// The recorded label law: informative field indices and per-category weights.
struct GroundTruth {
  std::vector<std::size_t> informative;       // sorted field indices
  std::vector<std::vector<double>> weights;   // weights[k][category] for informative[k]
  double weight_scale = 1.0;
  double label_noise = 0.0;

  bool is_informative(std::size_t field) const {
    return std::binary_search(informative.begin(), informative.end(), field);
  }

  // Bayes log-odds before label noise.
  double logit(std::span<const std::uint32_t> row_ids) const {
    double z = 0.0;
    for (std::size_t k = 0; k < informative.size(); ++k) z += weights[k][row_ids[informative[k]]];
    return z;
  }

  // P(label = 1 | row) including the noise flip.
  double click_probability(std::span<const std::uint32_t> row_ids) const {
    const double p = sigmoid(logit(row_ids));
    return label_noise + (1.0 - 2.0 * label_noise) * p;
  }
};

// Draws the informative subset and its weights. Weights are N(0,1) scaled by
// weight_scale / sqrt(n_informative), so the full logit has standard
// deviation close to weight_scale.
inline GroundTruth make_ground_truth(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> fields(spec.n_fields);
  std::iota(fields.begin(), fields.end(), std::size_t{0});
  std::shuffle(fields.begin(), fields.end(), rng);
  GroundTruth truth;
  truth.informative.assign(fields.begin(), fields.begin() + static_cast<std::ptrdiff_t>(spec.n_informative));
  std::sort(truth.informative.begin(), truth.informative.end());
  truth.weight_scale = spec.weight_scale;
  truth.label_noise = spec.label_noise;
  const double per_field =
      spec.weight_scale / std::sqrt(static_cast<double>(std::max<std::size_t>(1, spec.n_informative)));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t f : truth.informative) {
    std::vector<double> w(spec.field_cardinality(f));
    for (double& v : w) v = per_field * normal(rng);
    truth.weights.push_back(std::move(w));
  }
  return truth;
}

// Generates n samples under `truth`. stream_seed selects the sample stream so
// that train and eval splits share one label law. The first min(2, n_cont)
// continuous dims carry the scaled Bayes logit plus unit noise; the rest are
// pure noise.
inline Dataset synth_generate(const SyntheticSpec& spec, const GroundTruth& truth, std::size_t n,
                              std::uint64_t stream_seed) {
  spec.validate();
  Dataset data(spec.n_fields, spec.n_continuous);
  data.reserve(n);
  std::mt19937_64 rng(stream_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::uint32_t> row(spec.n_fields);
  std::vector<double> cont(spec.n_continuous);
  const std::size_t correlated = std::min<std::size_t>(2, spec.n_continuous);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < spec.n_fields; ++f) {
      std::uniform_int_distribution<std::uint32_t> pick(
          0, static_cast<std::uint32_t>(spec.field_cardinality(f) - 1));
      row[f] = pick(rng);
    }
    const double z = truth.logit(row);
    double label = unit(rng) < sigmoid(z) ? 1.0 : 0.0;
    if (unit(rng) < spec.label_noise) label = 1.0 - label;
    for (std::size_t j = 0; j < spec.n_continuous; ++j) {
      cont[j] = (j < correlated ? z / spec.weight_scale : 0.0) + normal(rng);
    }
    data.push_back(label, row, cont);
  }
  return data;
}

// Sidecar ground-truth file: header line, then one line per informative field
// "field<TAB>w_0<TAB>w_1...". Doubles use %.17g round-trip precision.
inline void write_ground_truth(std::ostream& out, const GroundTruth& truth) {
  out << "# informative_fields=" << truth.informative.size() << " weight_scale=";
  out.precision(17);
  out << truth.weight_scale << " label_noise=" << truth.label_noise << "\n";
  for (std::size_t k = 0; k < truth.informative.size(); ++k) {
    out << truth.informative[k];
    for (double w : truth.weights[k]) out << '\t' << w;
    out << '\n';
  }
}

inline GroundTruth read_ground_truth(std::istream& in) {
  GroundTruth truth;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# informative_fields=", 0) != 0)
    throw ParseError(1, "missing ground-truth header");
  {
    std::istringstream header(line);
    std::string tok;
    while (header >> tok) {
      if (tok.rfind("weight_scale=", 0) == 0) truth.weight_scale = std::stod(tok.substr(13));
      if (tok.rfind("label_noise=", 0) == 0) truth.label_noise = std::stod(tok.substr(12));
    }
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t field = 0;
    if (!(row >> field)) throw ParseError(line_no, "bad field index");
    std::vector<double> w;
    double v = 0.0;
    while (row >> v) w.push_back(v);
    truth.informative.push_back(field);
    truth.weights.push_back(std::move(w));
  }
  return truth;
}

// ---------------------------------------------------------------------------
// TSV ingestion

// Stable categorical hash: multiply-shift of the 32-bit token followed by a
// range reduction into [1, cardinality-1]. Id 0 is reserved for "missing".
// Changing any constant here invalidates every persisted model.
inline constexpr std::uint64_t kHashMultiplier = 0x9E3779B97F4A7C15ull;

inline std::uint32_t hash_token(std::uint32_t token, std::size_t cardinality) {
  if (cardinality < 2) throw ContractViolation("hashed cardinality must be at least 2");
  const std::uint64_t mixed = static_cast<std::uint64_t>(token) * kHashMultiplier;
  const auto top = static_cast<std::uint32_t>(mixed >> 32);
  const std::uint64_t reduced =
      (static_cast<std::uint64_t>(top) * static_cast<std::uint64_t>(cardinality - 1)) >> 32;
  return static_cast<std::uint32_t>(reduced + 1);
}

enum class TokenMapping : std::uint8_t {
  kHash,      // Criteo: hash the hex token into the field cardinality
  kIdentity,  // persisted synthetic data: the hex token is the id itself
};

struct TsvFormat {
  std::size_t n_numeric = 13;
  std::size_t n_categorical = 26;
  bool log_transform = true;                 // numeric v -> log(1 + max(0, v))
  TokenMapping mapping = TokenMapping::kHash;
  std::size_t hash_cardinality = 100000;     // includes the reserved id 0

  static TsvFormat criteo(std::size_t cardinality = 100000) {
    TsvFormat f;
    f.hash_cardinality = cardinality;
    return f;
  }
};

struct CriteoRecord {
  double label = 0.0;
  std::vector<double> numeric;       // transformed; missing -> 0
  std::vector<std::uint32_t> ids;    // missing -> 0
};

namespace detail {

inline std::optional<std::uint32_t> parse_hex32(std::string_view tok) {
  if (tok.empty() || tok.size() > 8) return std::nullopt;
  std::uint32_t value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value, 16);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
  return value;
}

inline std::optional<double> parse_number(std::string_view tok) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(value))
    return std::nullopt;
  return value;
}

}  // namespace detail

// Parses one tab-separated record: label, n_numeric numbers, n_categorical
// hex tokens. Empty fields are missing values.
inline CriteoRecord parse_tsv_record(std::string_view line, const TsvFormat& format,
                                     std::size_t line_no = 0) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  const std::size_t expected = 1 + format.n_numeric + format.n_categorical;
  if (cols.size() != expected) {
    throw ParseError(line_no, "expected " + std::to_string(expected) + " tab-separated fields, got " +
                                  std::to_string(cols.size()));
  }
  CriteoRecord rec;
  if (cols[0] == "0") {
    rec.label = 0.0;
  } else if (cols[0] == "1") {
    rec.label = 1.0;
  } else {
    throw ParseError(line_no, "label must be 0 or 1");
  }
  rec.numeric.resize(format.n_numeric, 0.0);
  for (std::size_t j = 0; j < format.n_numeric; ++j) {
    const std::string_view tok = cols[1 + j];
    if (tok.empty()) continue;
    const auto v = detail::parse_number(tok);
    if (!v) throw ParseError(line_no, "numeric feature " + std::to_string(j) + " is not a number");
    rec.numeric[j] = format.log_transform ? std::log1p(std::max(0.0, *v)) : *v;
  }
  rec.ids.resize(format.n_categorical, 0);
  for (std::size_t j = 0; j < format.n_categorical; ++j) {
    const std::string_view tok = cols[1 + format.n_numeric + j];
    if (tok.empty()) continue;
    const auto v = detail::parse_hex32(tok);
    if (!v) throw ParseError(line_no, "categorical feature " + std::to_string(j) + " is not a hex token");
    rec.ids[j] = format.mapping == TokenMapping::kHash ? hash_token(*v, format.hash_cardinality) : *v;
  }
  return rec;
}

inline CriteoRecord criteo_parse(std::string_view line, std::size_t line_no = 0,
                                 std::size_t cardinality = 100000) {
  return parse_tsv_record(line, TsvFormat::criteo(cardinality), line_no);
}

// Reads a TSV stream (at most max_rows records when nonzero); every record is
// tagged with `day` when given.
inline Dataset read_tsv(std::istream& in, const TsvFormat& format, std::optional<int> day = std::nullopt,
                        std::size_t max_rows = 0) {
  Dataset data(format.n_categorical, format.n_numeric);
  std::string line;
  std::size_t line_no = 0;
  while ((max_rows == 0 || data.size() < max_rows) && std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const CriteoRecord rec = parse_tsv_record(line, format, line_no);
    data.push_back(rec.label, rec.ids, rec.numeric, day);
  }
  return data;
}

inline Dataset read_tsv_file(const std::string& path, const TsvFormat& format,
                             std::optional<int> day = std::nullopt, std::size_t max_rows = 0) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  try {
    return read_tsv(in, format, day, max_rows);
  } catch (const ParseError& e) {
    throw DataError(path + ": " + e.what());
  }
}

// Writes a dataset in the TSV shape read by `kIdentity` formats: numbers
// in round-trip precision and ids as lowercase hex.
inline void write_tsv(std::ostream& out, const Dataset& data) {
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << (data.labels[i] > 0.5 ? '1' : '0');
    for (std::size_t j = 0; j < data.continuous_dim; ++j) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, data.continuous[i * data.continuous_dim + j]);
      out << '\t' << std::string_view(buf, static_cast<std::size_t>(p - buf));
    }
    for (std::size_t f = 0; f < data.n_fields; ++f) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, data.ids[i * data.n_fields + f], 16);
      out << '\t' << std::string_view(buf, static_cast<std::size_t>(p - buf));
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Sampling and splitting

// Positives always pass; each negative passes with probability keep_rate.
inline Dataset downsample_negatives(const Dataset& data, double keep_rate, std::uint64_t seed) {
  if (!(keep_rate > 0.0 && keep_rate <= 1.0))
    throw ContractViolation("keep_rate must lie in (0, 1]");
  Dataset out(data.n_fields, data.continuous_dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool positive = data.labels[i] > 0.5;
    // one draw per negative keeps the decision sequence independent of positives
    if (positive || keep_rate == 1.0 || unit(rng) < keep_rate) out.push_row(data, i);
  }
  return out;
}

// Inclusive range of day tags; first > last denotes an empty range.
struct DayRange {
  int first = 0;
  int last = -1;

  bool empty() const noexcept { return first > last; }
  bool contains(int day) const noexcept { return day >= first && day <= last; }
  bool overlaps(const DayRange& o) const noexcept {
    return !empty() && !o.empty() && first <= o.last && o.first <= last;
  }
};

// "a-b", "a", or "" (empty).
inline DayRange parse_day_range(std::string_view text) {
  if (text.empty()) return DayRange{};
  const auto dash = text.find('-');
  auto to_int = [&](std::string_view t) {
    int v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size())
      throw UsageError("bad day range '" + std::string(text) + "'");
    return v;
  };
  if (dash == std::string_view::npos) {
    const int d = to_int(text);
    return DayRange{d, d};
  }
  return DayRange{to_int(text.substr(0, dash)), to_int(text.substr(dash + 1))};
}

inline std::string to_string(const DayRange& r) {
  if (r.empty()) return "";
  if (r.first == r.last) return std::to_string(r.first);
  return std::to_string(r.first) + "-" + std::to_string(r.last);
}

struct DaySplits {
  Dataset pretrain;
  Dataset select;
  Dataset eval;
};

// Partitions by day tag preserving input order inside each split. Records
// outside all three ranges are dropped.
inline DaySplits day_split(const Dataset& data, const DayRange& pretrain_days,
                           const DayRange& select_days, const DayRange& eval_days) {
  if (pretrain_days.overlaps(select_days) || pretrain_days.overlaps(eval_days) ||
      select_days.overlaps(eval_days))
    throw ContractViolation("day ranges overlap");
  if (data.days.size() != data.size() && !data.empty())
    throw ContractViolation("day_split needs a day tag on every record");
  DaySplits out{Dataset(data.n_fields, data.continuous_dim), Dataset(data.n_fields, data.continuous_dim),
                Dataset(data.n_fields, data.continuous_dim)};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int d = data.days[i];
    if (pretrain_days.contains(d)) {
      out.pretrain.push_row(data, i);
    } else if (select_days.contains(d)) {
      out.select.push_row(data, i);
    } else if (eval_days.contains(d)) {
      out.eval.push_row(data, i);
    }
  }
  return out;
}

}  // namespace lpfs
