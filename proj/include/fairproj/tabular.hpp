#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "fairproj/csv.hpp"
#include "fairproj/error.hpp"
#include "fairproj/log.hpp"
#include "fairproj/rng.hpp"

namespace fairproj {

enum class Role { Feature, Protected, Outcome };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::Feature: return "feature";
    case Role::Protected: return "protected";
    case Role::Outcome: return "outcome";
  }
  return "?";
}

inline Role role_from_string(const std::string& s) {
  if (s == "feature") return Role::Feature;
  if (s == "protected") return Role::Protected;
  if (s == "outcome") return Role::Outcome;
  throw DataError("unknown column role '" + s + "' (expected feature, protected or outcome)");
}

struct ColumnRole {
  Role role = Role::Feature;
  bool categorical = false;
  friend bool operator==(const ColumnRole&, const ColumnRole&) = default;
};

/// Column name -> role assignment, as read from a schema file:
///   { "age": {"role": "feature"}, "sex": {"role": "protected", "categorical": true}, ... }
struct Schema {
  std::unordered_map<std::string, ColumnRole> columns;

  static Schema from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DataError("schema must be a JSON object keyed by column name");
    Schema s;
    for (const auto& [name, spec] : j.items()) {
      if (!spec.is_object() || !spec.contains("role") || !spec["role"].is_string()) {
        throw DataError("schema entry '" + name + "' needs a string 'role'");
      }
      ColumnRole cr;
      cr.role = role_from_string(spec["role"].get<std::string>());
      if (spec.contains("categorical")) {
        if (!spec["categorical"].is_boolean()) {
          throw DataError("schema entry '" + name + "': 'categorical' must be boolean");
        }
        cr.categorical = spec["categorical"].get<bool>();
      }
      s.columns.emplace(name, cr);
    }
    return s;
  }

  static Schema load(const std::string& path) {
    try {
      return from_json(nlohmann::json::parse(csv::read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("schema '" + path + "': " + e.what());
    }
  }
};

struct CenteringStats;

/// Column-labelled numeric table with role tags.
///
/// Categorical columns read from text stay symbolic until encode_categorical
/// replaces them with dummies; their slot in values() holds zeros. Centering
/// metadata records the shift and scale applied to each column so the same
/// transform can be replayed on other rows.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd values, std::vector<std::string> names, std::vector<ColumnRole> roles,
          std::vector<std::vector<std::string>> symbols = {})
      : values_(std::move(values)),
        names_(std::move(names)),
        roles_(std::move(roles)),
        symbols_(std::move(symbols)) {
    const auto m = static_cast<std::size_t>(values_.cols());
    if (symbols_.empty()) symbols_.resize(m);
    means_.assign(m, 0.0);
    scales_.assign(m, 1.0);
    validate();
  }

  std::size_t rows() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(values_.cols()); }

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<ColumnRole>& roles() const noexcept { return roles_; }
  const std::string& name(std::size_t j) const { return names_.at(j); }
  const ColumnRole& role(std::size_t j) const { return roles_.at(j); }

  bool is_symbolic(std::size_t j) const { return !symbols_.at(j).empty(); }
  const std::vector<std::string>& symbols(std::size_t j) const { return symbols_.at(j); }
  bool has_symbolic() const {
    return std::any_of(symbols_.begin(), symbols_.end(), [](const auto& s) { return !s.empty(); });
  }

  const std::vector<double>& column_means() const noexcept { return means_; }
  const std::vector<double>& column_scales() const noexcept { return scales_; }
  bool is_centered() const noexcept { return centered_; }
  bool is_standardized() const noexcept { return standardized_; }

  std::optional<std::size_t> find(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names_.begin());
  }

  std::size_t index_of(const std::string& name) const {
    if (auto j = find(name)) return *j;
    throw DataError("no column named '" + name + "'");
  }

  std::vector<std::size_t> columns_with(Role r) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < cols(); ++j)
      if (roles_[j].role == r) out.push_back(j);
    return out;
  }

  std::vector<std::string> labels(Role r) const {
    std::vector<std::string> out;
    for (auto j : columns_with(r)) out.push_back(names_[j]);
    return out;
  }

  Eigen::MatrixXd matrix_of(std::span<const std::size_t> columns) const {
    Eigen::MatrixXd out(values_.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k) {
      require_numeric(columns[k]);
      out.col(static_cast<Eigen::Index>(k)) = values_.col(static_cast<Eigen::Index>(columns[k]));
    }
    return out;
  }

  Eigen::MatrixXd feature_matrix() const { return matrix_of(columns_with(Role::Feature)); }
  Eigen::MatrixXd protected_matrix() const { return matrix_of(columns_with(Role::Protected)); }
  Eigen::VectorXd outcome() const {
    const auto j = columns_with(Role::Outcome).front();
    require_numeric(j);
    return values_.col(static_cast<Eigen::Index>(j));
  }
  std::size_t outcome_index() const { return columns_with(Role::Outcome).front(); }

  /// Subset of rows, metadata preserved.
  Dataset select_rows(std::span<const std::size_t> rows) const {
    Eigen::MatrixXd v(static_cast<Eigen::Index>(rows.size()), values_.cols());
    std::vector<std::vector<std::string>> sym(cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] >= this->rows()) throw DataError("row index out of range");
      v.row(static_cast<Eigen::Index>(r)) = values_.row(static_cast<Eigen::Index>(rows[r]));
    }
    for (std::size_t j = 0; j < cols(); ++j) {
      if (symbols_[j].empty()) continue;
      sym[j].reserve(rows.size());
      for (auto r : rows) sym[j].push_back(symbols_[j][r]);
    }
    Dataset out(std::move(v), names_, roles_, std::move(sym));
    out.copy_metadata_from(*this);
    return out;
  }

 private:
  friend Dataset apply_centering(const Dataset&, const CenteringStats&);

  void copy_metadata_from(const Dataset& other) {
    means_ = other.means_;
    scales_ = other.scales_;
    centered_ = other.centered_;
    standardized_ = other.standardized_;
  }

  void require_numeric(std::size_t j) const {
    if (j >= cols()) throw DataError("column index out of range");
    if (is_symbolic(j)) {
      throw DataError("column '" + names_[j] + "' is still categorical; encode it first");
    }
  }

  void validate() const {
    const auto m = cols();
    if (names_.size() != m || roles_.size() != m || symbols_.size() != m) {
      throw DataError("dataset column metadata does not match matrix width");
    }
    if (rows() < 2) throw DataError("dataset needs at least 2 rows");
    if (m < 2) throw DataError("dataset needs at least 2 columns");
    std::unordered_set<std::string> seen;
    for (const auto& n : names_)
      if (!seen.insert(n).second) throw DuplicateHeaderError(n);
    std::size_t outcomes = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (roles_[j].role == Role::Outcome) ++outcomes;
      if (!symbols_[j].empty()) {
        if (symbols_[j].size() != rows()) throw DataError("symbol column length mismatch");
        if (!roles_[j].categorical) {
          throw DataError("column '" + names_[j] + "' has symbolic values but is not categorical");
        }
        continue;
      }
      for (Eigen::Index i = 0; i < values_.rows(); ++i) {
        const double v = values_(i, static_cast<Eigen::Index>(j));
        if (!std::isfinite(v)) {
          throw NonFiniteCellError(static_cast<std::size_t>(i) + 1, names_[j], csv::format_double(v));
        }
      }
    }
    if (outcomes != 1) {
      throw DataError("dataset needs exactly one outcome column, found " + std::to_string(outcomes));
    }
  }

  Eigen::MatrixXd values_;
  std::vector<std::string> names_;
  std::vector<ColumnRole> roles_;
  std::vector<std::vector<std::string>> symbols_;
  std::vector<double> means_;
  std::vector<double> scales_;
  bool centered_ = false;
  bool standardized_ = false;
};

// ---------------------------------------------------------------------------
// Loading and writing

/// Builds a dataset from CSV text. Only the columns named in the schema are
/// kept, in header order; other header columns are ignored.
inline Dataset parse_csv_dataset(std::string_view text, const Schema& schema) {
  auto records = csv::parse(text);
  if (records.empty()) throw DataError("CSV has no header row");
  const auto& header = records.front();
  {
    std::unordered_set<std::string> seen;
    for (const auto& h : header)
      if (!seen.insert(h).second) throw DuplicateHeaderError(h);
  }
  for (const auto& [name, role] : schema.columns) {
    if (std::find(header.begin(), header.end(), name) == header.end()) {
      throw MissingColumnError(name);
    }
  }

  std::vector<std::size_t> source;
  std::vector<std::string> names;
  std::vector<ColumnRole> roles;
  for (std::size_t h = 0; h < header.size(); ++h) {
    auto it = schema.columns.find(header[h]);
    if (it == schema.columns.end()) continue;
    source.push_back(h);
    names.push_back(header[h]);
    roles.push_back(it->second);
  }

  const std::size_t n = records.size() - 1;
  const std::size_t m = names.size();
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                 static_cast<Eigen::Index>(m));
  std::vector<std::vector<std::string>> symbols(m);
  for (std::size_t j = 0; j < m; ++j)
    if (roles[j].categorical) symbols[j].reserve(n);

  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != header.size()) throw RaggedRowError(r, rec.size(), header.size());
    for (std::size_t j = 0; j < m; ++j) {
      const auto& cell = rec[source[j]];
      if (roles[j].categorical) {
        if (cell.empty()) throw CsvError("missing value at row " + std::to_string(r) +
                                             ", column '" + names[j] + "'",
                                         {r, names[j]});
        symbols[j].push_back(cell);
        continue;
      }
      double v = 0.0;
      switch (csv::parse_double(cell, v)) {
        case csv::ParseStatus::Ok: break;
        case csv::ParseStatus::NotFinite: throw NonFiniteCellError(r, names[j], cell);
        case csv::ParseStatus::NotNumeric:
          if (cell.empty()) {
            throw CsvError("missing value at row " + std::to_string(r) + ", column '" +
                               names[j] + "'",
                           {r, names[j]});
          }
          throw NonNumericCellError(r, names[j], cell);
      }
      values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return Dataset(std::move(values), std::move(names), std::move(roles), std::move(symbols));
}

inline Dataset load_csv(const std::string& path, const Schema& schema) {
  return parse_csv_dataset(csv::read_file(path), schema);
}

/// Writes values as shortest round-trip decimals, so reading the file back
/// reproduces every double bit for bit.
inline void write_csv(const Dataset& d, std::ostream& os) {
  csv::write_record(os, d.names());
  csv::Record rec(d.cols());
  for (std::size_t i = 0; i < d.rows(); ++i) {
    for (std::size_t j = 0; j < d.cols(); ++j) {
      rec[j] = d.is_symbolic(j) ? d.symbols(j)[i]
                                : csv::format_double(d.values()(static_cast<Eigen::Index>(i),
                                                                static_cast<Eigen::Index>(j)));
    }
    csv::write_record(os, rec);
  }
}

inline void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_csv(d, out);
}

inline nlohmann::ordered_json schema_json(const Dataset& d) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < d.cols(); ++c) {
    j[d.name(c)] = {{"role", to_string(d.role(c).role)}, {"categorical", d.role(c).categorical}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Categorical encoding

/// Replaces a categorical column with k-1 dummies. Levels are taken in order
/// of first appearance; the last level is the all-zero reference. A column
/// whose levels are exactly the numbers {0, 1} is already a dummy and is kept
/// as a single 0/1 column.
inline Dataset encode_categorical(const Dataset& d, const std::string& column) {
  if (d.is_centered()) throw DataError("encode categorical columns before centering");
  const auto c = d.index_of(column);
  if (!d.role(c).categorical) throw DataError("column '" + column + "' is not categorical");

  std::vector<std::string> cells;
  if (d.is_symbolic(c)) {
    cells = d.symbols(c);
  } else {
    cells.reserve(d.rows());
    for (Eigen::Index i = 0; i < d.values().rows(); ++i)
      cells.push_back(csv::format_double(d.values()(i, static_cast<Eigen::Index>(c))));
  }

  std::vector<std::string> levels;
  std::unordered_map<std::string, std::size_t> level_index;
  std::vector<std::size_t> codes(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto [it, inserted] = level_index.emplace(cells[i], levels.size());
    if (inserted) levels.push_back(cells[i]);
    codes[i] = it->second;
  }
  const auto k = levels.size();
  if (k < 2) throw DataError("categorical column '" + column + "' has a single level");
  if (k > d.rows()) throw DataError("categorical column '" + column + "' has more levels than rows");

  const auto n = static_cast<Eigen::Index>(d.rows());
  std::vector<Eigen::VectorXd> dummies;
  std::vector<std::string> dummy_names;

  bool zero_one = k == 2;
  std::vector<double> numeric_levels(k);
  for (std::size_t l = 0; zero_one && l < k; ++l) {
    zero_one = csv::parse_double(levels[l], numeric_levels[l]) == csv::ParseStatus::Ok &&
               (numeric_levels[l] == 0.0 || numeric_levels[l] == 1.0);
  }
  if (zero_one) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = numeric_levels[codes[static_cast<std::size_t>(i)]];
    dummies.push_back(std::move(v));
    dummy_names.push_back(column);
  } else {
    for (std::size_t l = 0; l + 1 < k; ++l) {
      Eigen::VectorXd v(n);
      for (Eigen::Index i = 0; i < n; ++i)
        v(i) = codes[static_cast<std::size_t>(i)] == l ? 1.0 : 0.0;
      dummies.push_back(std::move(v));
      dummy_names.push_back(column + "=" + levels[l]);
    }
  }

  const auto m_new = d.cols() - 1 + dummies.size();
  Eigen::MatrixXd values(n, static_cast<Eigen::Index>(m_new));
  std::vector<std::string> names;
  std::vector<ColumnRole> roles;
  std::vector<std::vector<std::string>> symbols;
  Eigen::Index out = 0;
  for (std::size_t j = 0; j < d.cols(); ++j) {
    if (j == c) {
      for (std::size_t l = 0; l < dummies.size(); ++l) {
        values.col(out++) = dummies[l];
        names.push_back(dummy_names[l]);
        roles.push_back({d.role(c).role, false});
        symbols.emplace_back();
      }
      continue;
    }
    values.col(out++) = d.values().col(static_cast<Eigen::Index>(j));
    names.push_back(d.name(j));
    roles.push_back(d.role(j));
    symbols.push_back(d.symbols(j));
  }
  for (const auto& nm : names) {
    if (std::count(names.begin(), names.end(), nm) > 1) {
      throw DataError("dummy column name '" + nm + "' collides with an existing column");
    }
  }
  return Dataset(std::move(values), std::move(names), std::move(roles), std::move(symbols));
}

/// Encodes every categorical column (symbolic or numeric-flagged).
inline Dataset encode_all_categorical(Dataset d) {
  for (;;) {
    std::optional<std::string> next;
    for (std::size_t j = 0; j < d.cols(); ++j) {
      if (d.role(j).categorical) {
        next = d.name(j);
        break;
      }
    }
    if (!next) return d;
    d = encode_categorical(d, *next);
  }
}

// ---------------------------------------------------------------------------
// Centering

struct CenterOptions {
  bool standardize = false;    ///< also scale to unit (population) variance
  bool center_outcome = true;  ///< the outcome column is shifted too
};

/// Shift/scale learned on one set of rows, replayable on others.
struct CenteringStats {
  std::vector<std::string> kept;     ///< column names surviving, in order
  std::vector<double> shifts;        ///< subtracted from each kept column
  std::vector<double> scales;        ///< then divided by this
  std::vector<std::string> dropped;  ///< constant columns removed
  CenterOptions options;
};

inline CenteringStats fit_centering(const Dataset& d, CenterOptions opts = {}) {
  if (d.has_symbolic()) throw DataError("center() needs a fully numeric dataset; encode categoricals");
  CenteringStats s;
  s.options = opts;
  const auto& v = d.values();
  const double n = static_cast<double>(d.rows());
  for (std::size_t j = 0; j < d.cols(); ++j) {
    const auto col = v.col(static_cast<Eigen::Index>(j));
    const bool is_outcome = d.role(j).role == Role::Outcome;
    // Constant protected columns stay: they center to zero and the basis
    // drops them (or fails with rank 0 if nothing else is left).
    if (col.maxCoeff() == col.minCoeff() && d.role(j).role == Role::Feature) {
      log::warn("dropping constant column '" + d.name(j) + "'");
      s.dropped.push_back(d.name(j));
      continue;
    }
    double shift = 0.0;
    double scale = 1.0;
    const bool shift_this = !d.is_centered() && (!is_outcome || opts.center_outcome);
    if (shift_this) {
      // Two passes: the correction term absorbs the rounding error of the
      // first mean so the centered column sums to ~0 at machine precision.
      shift = col.sum() / n;
      shift += (col.array() - shift).sum() / n;
    }
    if (opts.standardize && (!is_outcome || opts.center_outcome)) {
      const double sd = std::sqrt((col.array() - shift).square().sum() / n);
      if (sd > 0.0) scale = sd;
    }
    s.kept.push_back(d.name(j));
    s.shifts.push_back(shift);
    s.scales.push_back(scale);
  }
  return s;
}

inline Dataset apply_centering(const Dataset& d, const CenteringStats& s) {
  const auto n = static_cast<Eigen::Index>(d.rows());
  Eigen::MatrixXd values(n, static_cast<Eigen::Index>(s.kept.size()));
  std::vector<std::string> names;
  std::vector<ColumnRole> roles;
  std::vector<double> means, scales;
  for (std::size_t k = 0; k < s.kept.size(); ++k) {
    const auto j = d.index_of(s.kept[k]);
    if (d.is_symbolic(j)) throw DataError("column '" + s.kept[k] + "' is still categorical");
    auto col = values.col(static_cast<Eigen::Index>(k));
    col = d.values().col(static_cast<Eigen::Index>(j));
    if (s.shifts[k] != 0.0) col.array() -= s.shifts[k];
    if (s.scales[k] != 1.0) col.array() /= s.scales[k];
    names.push_back(s.kept[k]);
    roles.push_back(d.role(j));
    // Record the shift relative to the original data, not the current values.
    means.push_back(d.is_centered() ? d.column_means()[j] : s.shifts[k]);
    scales.push_back(d.column_scales()[j] * s.scales[k]);
  }
  Dataset out(std::move(values), std::move(names), std::move(roles));
  out.means_ = std::move(means);
  out.scales_ = std::move(scales);
  out.centered_ = true;
  out.standardized_ = d.is_standardized() || s.options.standardize;
  return out;
}

/// Centers every column (means recorded in column_means()). Already-centered
/// datasets are returned untouched unless standardization is newly requested.
inline Dataset center(const Dataset& d, CenterOptions opts = {}) {
  if (d.is_centered() && (!opts.standardize || d.is_standardized())) return d;
  return apply_centering(d, fit_centering(d, opts));
}

inline Dataset standardize(const Dataset& d, bool include_outcome = true) {
  return center(d, {.standardize = true, .center_outcome = include_outcome});
}

// ---------------------------------------------------------------------------
// Splits

/// A fixed test share, then k-fold rotation of validation over the rest.
struct HoldoutCV {
  double test_frac = 0.2;
  int folds = 5;
};

/// Independent shuffled train/validation/test partitions.
struct RandomSplits {
  double train_frac = 0.5;
  double val_frac = 0.2;
  double test_frac = 0.3;
  int repeats = 5;
};

struct SplitPlan {
  std::variant<HoldoutCV, RandomSplits> scheme = HoldoutCV{};
  std::uint64_t seed = 0;
};

struct Split {
  std::string id;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

namespace detail {
inline std::vector<std::size_t> sorted_slice(const std::vector<std::size_t>& v, std::size_t lo,
                                             std::size_t hi) {
  std::vector<std::size_t> out(v.begin() + static_cast<std::ptrdiff_t>(lo),
                               v.begin() + static_cast<std::ptrdiff_t>(hi));
  std::sort(out.begin(), out.end());
  return out;
}
inline void check_fraction(double f, const char* what) {
  if (!(f > 0.0 && f < 1.0)) throw DataError(std::string(what) + " must lie in (0, 1)");
}
}  // namespace detail

inline std::vector<Split> make_splits(std::size_t n, const SplitPlan& plan) {
  std::vector<Split> out;
  auto require_nonempty = [](const Split& s) {
    if (s.train.empty() || s.validation.empty() || s.test.empty()) {
      throw DataError("split '" + s.id + "' has an empty partition; dataset too small");
    }
  };

  if (const auto* h = std::get_if<HoldoutCV>(&plan.scheme)) {
    detail::check_fraction(h->test_frac, "test_frac");
    if (h->folds < 2) throw DataError("HoldoutCV needs at least 2 folds");
    const auto perm = shuffled_indices(n, plan.seed);
    const auto n_test = static_cast<std::size_t>(std::llround(h->test_frac * static_cast<double>(n)));
    const std::size_t rest = n - std::min(n_test, n);
    const auto folds = static_cast<std::size_t>(h->folds);
    const auto test = detail::sorted_slice(perm, 0, std::min(n_test, n));
    for (std::size_t f = 0; f < folds; ++f) {
      const std::size_t lo = n_test + f * rest / folds;
      const std::size_t hi = n_test + (f + 1) * rest / folds;
      Split s;
      s.id = "fold" + std::to_string(f);
      s.test = test;
      s.validation = detail::sorted_slice(perm, lo, hi);
      std::vector<std::size_t> train;
      train.reserve(rest);
      for (std::size_t i = n_test; i < n; ++i)
        if (i < lo || i >= hi) train.push_back(perm[i]);
      std::sort(train.begin(), train.end());
      s.train = std::move(train);
      require_nonempty(s);
      out.push_back(std::move(s));
    }
    return out;
  }

  const auto& r = std::get<RandomSplits>(plan.scheme);
  detail::check_fraction(r.train_frac, "train_frac");
  detail::check_fraction(r.val_frac, "val_frac");
  detail::check_fraction(r.test_frac, "test_frac");
  if (std::abs(r.train_frac + r.val_frac + r.test_frac - 1.0) > 1e-9) {
    throw DataError("RandomSplits fractions must sum to 1");
  }
  if (r.repeats < 1) throw DataError("RandomSplits needs at least 1 repeat");
  for (int k = 0; k < r.repeats; ++k) {
    const auto perm = shuffled_indices(n, plan.seed, static_cast<std::uint64_t>(k));
    const auto n_train = static_cast<std::size_t>(std::llround(r.train_frac * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(r.val_frac * static_cast<double>(n)));
    Split s;
    s.id = "repeat" + std::to_string(k);
    if (n_train + n_val >= n) {
      throw DataError("split '" + s.id + "' has an empty test partition; dataset too small");
    }
    s.train = detail::sorted_slice(perm, 0, n_train);
    s.validation = detail::sorted_slice(perm, n_train, n_train + n_val);
    s.test = detail::sorted_slice(perm, n_train + n_val, n);
    require_nonempty(s);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<Split> make_splits(const Dataset& d, const SplitPlan& plan) {
  return make_splits(d.rows(), plan);
}

inline nlohmann::ordered_json to_json(const SplitPlan& p) {
  nlohmann::ordered_json j;
  if (const auto* h = std::get_if<HoldoutCV>(&p.scheme)) {
    j = {{"scheme", "holdout_cv"}, {"test_frac", h->test_frac}, {"folds", h->folds}};
  } else {
    const auto& r = std::get<RandomSplits>(p.scheme);
    j = {{"scheme", "random_splits"}, {"train_frac", r.train_frac}, {"val_frac", r.val_frac},
         {"test_frac", r.test_frac}, {"repeats", r.repeats}};
  }
  j["seed"] = p.seed;
  return j;
}

inline SplitPlan split_plan_from_json(const nlohmann::json& j) {
  SplitPlan p;
  const auto scheme = j.value("scheme", std::string("holdout_cv"));
  if (scheme == "holdout_cv") {
    HoldoutCV h;
    h.test_frac = j.value("test_frac", h.test_frac);
    h.folds = j.value("folds", h.folds);
    p.scheme = h;
  } else if (scheme == "random_splits") {
    RandomSplits r;
    r.train_frac = j.value("train_frac", r.train_frac);
    r.val_frac = j.value("val_frac", r.val_frac);
    r.test_frac = j.value("test_frac", r.test_frac);
    r.repeats = j.value("repeats", r.repeats);
    p.scheme = r;
  } else {
    throw DataError("unknown split scheme '" + scheme + "'");
  }
  p.seed = j.value("seed", std::uint64_t{0});
  return p;
}

/// Audit manifest: one object per split with its row indices.
inline nlohmann::ordered_json to_json(const std::vector<Split>& splits) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : splits) {
    arr.push_back({{"id", s.id}, {"train", s.train}, {"validation", s.validation}, {"test", s.test}});
  }
  return arr;
}

}  // namespace fairproj
