#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fairproj/csv.hpp"
#include "fairproj/error.hpp"
#include "fairproj/log.hpp"
#include "fairproj/metrics.hpp"
#include "fairproj/models.hpp"
#include "fairproj/projection.hpp"
#include "fairproj/rng.hpp"
#include "fairproj/synth.hpp"
#include "fairproj/tabular.hpp"
#include "fairproj/version.hpp"

namespace fairproj {

/// A built-in model, or predictions produced elsewhere and read from a CSV
/// with columns `row_index,yhat_real` (row_index is the 0-based data row).
struct ModelSpec {
  std::string id;
  std::optional<ModelKind> kind;
  std::string predictions_path;

  bool external() const noexcept { return !kind.has_value(); }
};

inline ModelSpec builtin_model(ModelKind k) { return {to_string(k), k, {}}; }

struct SweepSpec {
  std::string dataset_path;
  std::string schema_path;
  std::optional<SynthConfig> synth;  ///< generate instead of loading a file
  std::vector<double> lambdas{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<ModelSpec> models{builtin_model(ModelKind::Logistic)};
  SplitPlan split_plan;
  bool standardize = true;
  std::string output_dir = "sweep_out";
  std::string protected_column;  ///< empty: first protected column
  int acc_p_folds = 5;
  int acc_p_bins = 10;
  /// Slope damping for logistic fits. The default only guards against
  /// divergence; rare categorical levels that separate the training labels
  /// can need a real penalty (see README).
  double logistic_l2 = LogisticOptions{}.l2;
  unsigned threads = 1;
};

inline void validate(const SweepSpec& s) {
  if (s.lambdas.empty()) throw DataError("sweep needs at least one lambda");
  for (std::size_t i = 0; i < s.lambdas.size(); ++i) {
    const double l = s.lambdas[i];
    if (!(l >= 0.0 && l <= 1.0)) throw DataError("lambda " + csv::format_double(l) + " is outside [0, 1]");
    if (i > 0 && !(l > s.lambdas[i - 1])) throw DataError("lambdas must be strictly increasing");
  }
  if (s.models.empty()) throw DataError("sweep needs at least one model");
  for (std::size_t i = 0; i < s.models.size(); ++i) {
    if (s.models[i].id.empty()) throw DataError("model id must not be empty");
    if (s.models[i].external() && s.models[i].predictions_path.empty()) {
      throw DataError("external model '" + s.models[i].id + "' has no predictions path");
    }
    for (std::size_t k = 0; k < i; ++k)
      if (s.models[k].id == s.models[i].id) throw DataError("duplicate model id '" + s.models[i].id + "'");
  }
  if (s.acc_p_folds < 2) throw DataError("acc_p folds must be at least 2");
  if (s.acc_p_bins < 1) throw DataError("acc_p bins must be at least 1");
  if (!(s.logistic_l2 >= 0.0) || !std::isfinite(s.logistic_l2)) throw DataError("logistic l2 must be >= 0");
  if (s.synth) validate(*s.synth);
}

/// Relative paths inside the config are resolved against `base_dir`.
inline SweepSpec sweep_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  SweepSpec s;
  auto resolve = [&](const std::string& p) {
    if (p.empty()) return p;
    const std::filesystem::path path(p);
    return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).string();
  };
  try {
    if (!j.is_object()) throw DataError("sweep config must be a JSON object");
    if (j.contains("synth")) {
      s.synth = synth_config_from_json(j.at("synth"));
    } else {
      s.dataset_path = resolve(j.at("dataset").get<std::string>());
      s.schema_path = resolve(j.at("schema").get<std::string>());
    }
    if (j.contains("lambdas")) s.lambdas = j.at("lambdas").get<std::vector<double>>();
    if (j.contains("models")) {
      s.models.clear();
      for (const auto& m : j.at("models")) {
        if (m.is_string()) {
          s.models.push_back(builtin_model(model_kind_from_string(m.get<std::string>())));
        } else if (m.contains("predictions")) {
          s.models.push_back({m.value("name", std::string("external")), std::nullopt,
                              resolve(m.at("predictions").get<std::string>())});
        } else {
          auto spec = builtin_model(model_kind_from_string(m.at("kind").get<std::string>()));
          spec.id = m.value("name", spec.id);
          s.models.push_back(spec);
        }
      }
    }
    if (j.contains("split_plan")) s.split_plan = split_plan_from_json(j.at("split_plan"));
    if (j.contains("seed")) s.split_plan.seed = j.at("seed").get<std::uint64_t>();
    s.standardize = j.value("standardize", s.standardize);
    s.output_dir = resolve(j.value("output_dir", s.output_dir));
    s.protected_column = j.value("protected_column", s.protected_column);
    if (j.contains("acc_p")) {
      s.acc_p_folds = j.at("acc_p").value("folds", s.acc_p_folds);
      s.acc_p_bins = j.at("acc_p").value("bins", s.acc_p_bins);
    }
    if (j.contains("logistic")) s.logistic_l2 = j.at("logistic").value("l2", s.logistic_l2);
    s.threads = j.value("threads", s.threads);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("sweep config: ") + e.what());
  }
  validate(s);
  return s;
}

inline SweepSpec load_sweep_spec(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(csv::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse '" + path + "': " + e.what());
  }
  return sweep_spec_from_json(j, std::filesystem::path(path).parent_path());
}

inline nlohmann::ordered_json to_json(const SweepSpec& s) {
  nlohmann::ordered_json j;
  if (s.synth) {
    j["synth"] = to_json(*s.synth);
  } else {
    j["dataset"] = s.dataset_path;
    j["schema"] = s.schema_path;
  }
  j["lambdas"] = s.lambdas;
  auto models = nlohmann::ordered_json::array();
  for (const auto& m : s.models) {
    if (m.external()) {
      models.push_back({{"name", m.id}, {"predictions", m.predictions_path}});
    } else {
      models.push_back({{"name", m.id}, {"kind", to_string(*m.kind)}});
    }
  }
  j["models"] = models;
  j["split_plan"] = to_json(s.split_plan);
  j["standardize"] = s.standardize;
  j["output_dir"] = s.output_dir;
  j["protected_column"] = s.protected_column;
  j["acc_p"] = {{"folds", s.acc_p_folds}, {"bins", s.acc_p_bins}};
  j["logistic"] = {{"l2", s.logistic_l2}};
  return j;
}

/// Hash of everything that affects results (output_dir and threads do not).
inline std::uint64_t config_hash(const SweepSpec& s) {
  auto j = to_json(s);
  j.erase("output_dir");
  return fnv1a64(j.dump());
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

/// Hash of the numeric content and column metadata of a dataset.
inline std::uint64_t dataset_hash(const Dataset& d) {
  std::ostringstream os;
  write_csv(d, os);
  os << schema_json(d).dump();
  return fnv1a64(os.str());
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepRow {
  MetricsReport report;
  std::size_t model_index = 0;
  std::size_t fold_index = 0;
  /// Largest |corr(prediction, protected)| on the training rows.
  double train_max_abs_corr = 0.0;
  std::optional<FittedModel> model;
};

struct PhaseTimings {
  double load_ms = 0.0;
  double center_ms = 0.0;
  double basis_ms = 0.0;
  double debias_ms = 0.0;
  double fit_ms = 0.0;
  double evaluate_ms = 0.0;
  double total_ms = 0.0;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::uint64_t dataset_hash = 0;
  std::uint64_t config_hash = 0;
  std::string version = kVersion;
  PhaseTimings timings;
};

struct SweepResult {
  SweepSpec spec;
  std::vector<SweepRow> rows;  ///< sorted by model (spec order), lambda, fold
  std::vector<Split> splits;
  Provenance provenance;
  std::size_t n_rows = 0;
  std::vector<std::string> feature_columns;
  std::vector<std::string> protected_columns;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

inline Eigen::VectorXd read_external_predictions(const std::string& path, std::size_t n) {
  const auto recs = csv::read(path);
  if (recs.empty()) throw DataError("'" + path + "' is empty");
  const auto& h = recs.front();
  const auto find = [&](const char* name) -> std::size_t {
    const auto it = std::find(h.begin(), h.end(), name);
    if (it == h.end()) throw MissingColumnError(name);
    return static_cast<std::size_t>(it - h.begin());
  };
  const auto ci = find("row_index");
  const auto cy = find("yhat_real");
  Eigen::VectorXd out = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n),
                                                  std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 1; r < recs.size(); ++r) {
    if (recs[r].size() != h.size()) throw RaggedRowError(r, recs[r].size(), h.size());
    double idx = 0.0, v = 0.0;
    if (csv::parse_double(recs[r][ci], idx) != csv::ParseStatus::Ok || idx < 0 ||
        idx != std::floor(idx) || idx >= static_cast<double>(n)) {
      throw CsvError("bad row_index '" + recs[r][ci] + "' at row " + std::to_string(r), {r, "row_index"});
    }
    const auto st = csv::parse_double(recs[r][cy], v);
    if (st == csv::ParseStatus::NotNumeric) throw NonNumericCellError(r, "yhat_real", recs[r][cy]);
    if (st == csv::ParseStatus::NotFinite) throw NonFiniteCellError(r, "yhat_real", recs[r][cy]);
    out(static_cast<Eigen::Index>(idx)) = v;
  }
  return out;
}

/// Runs `work(i)` for i in [0, count) on up to `threads` workers. Exceptions
/// are rethrown in index order after every worker has finished.
template <class F>
void parallel_for(std::size_t count, unsigned threads, F&& work) {
  std::vector<std::exception_ptr> errors(count);
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        work(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    loop();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(loop);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

[[noreturn]] inline void rethrow_with_context(const std::string& ctx) {
  try {
    throw;
  } catch (const NumericalError& e) {
    throw NumericalError(ctx + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(ctx + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ctx + ": " + e.what());
  }
}

struct FoldOutput {
  std::vector<SweepRow> rows;
  PhaseTimings timings;
};

inline FoldOutput run_fold(const Dataset& data, const SweepSpec& spec, const Split& split,
                           std::size_t fold_index, std::size_t designated,
                           const std::vector<std::optional<Eigen::VectorXd>>& external) {
  FoldOutput out;
  auto t0 = Clock::now();
  const Dataset train_raw = data.select_rows(split.train);
  const Dataset test_raw = data.select_rows(split.test);
  // Statistics come from training rows only and are replayed on test rows.
  const auto stats = fit_centering(train_raw, {.standardize = spec.standardize, .center_outcome = false});
  const Dataset train = apply_centering(train_raw, stats);
  const Dataset test = apply_centering(test_raw, stats);
  out.timings.center_ms = ms_since(t0);

  t0 = Clock::now();
  const auto basis = build_basis(train);
  out.timings.basis_ms = ms_since(t0);
  t0 = Clock::now();
  const auto view0 = debias(train, basis);
  out.timings.debias_ms = ms_since(t0);

  const Eigen::VectorXd y_train = train.outcome();
  const Eigen::VectorXd y_test = test.outcome();
  const Eigen::MatrixXd x_train = train.feature_matrix();
  const Eigen::MatrixXd p_train_raw = train_raw.protected_matrix();
  const Eigen::MatrixXd p_test_raw = test_raw.protected_matrix();
  const auto p_names = data.labels(Role::Protected);
  const auto f_names = train.labels(Role::Feature);
  const EvaluateOptions eval{spec.acc_p_folds, spec.acc_p_bins, spec.split_plan.seed};

  auto score = [&](const Eigen::VectorXd& yhat_test, std::size_t m, std::optional<double> lambda) {
    const auto te = Clock::now();
    SweepRow row;
    row.report = evaluate(yhat_test, y_test, p_test_raw, p_names, designated, eval);
    row.report.model_id = spec.models[m].id;
    row.report.split_id = split.id;
    row.report.lambda = lambda;
    row.model_index = m;
    row.fold_index = fold_index;
    out.timings.evaluate_ms += ms_since(te);
    return row;
  };

  for (std::size_t m = 0; m < spec.models.size(); ++m) {
    const auto& ms = spec.models[m];
    if (ms.external()) {
      const auto& all = *external[m];
      Eigen::VectorXd yhat(static_cast<Eigen::Index>(split.test.size()));
      for (std::size_t i = 0; i < split.test.size(); ++i) {
        const double v = all(static_cast<Eigen::Index>(split.test[i]));
        if (std::isnan(v)) {
          throw DataError("model '" + ms.id + "': no prediction for test row " + std::to_string(split.test[i]));
        }
        yhat(static_cast<Eigen::Index>(i)) = v;
      }
      try {
        out.rows.push_back(score(yhat, m, std::nullopt));
      } catch (...) {
        rethrow_with_context("model '" + ms.id + "', fold '" + split.id + "'");
      }
      continue;
    }
    for (const double lambda : spec.lambdas) {
      try {
        const auto tf = Clock::now();
        const Eigen::MatrixXd xl_train = blend(view0.values, x_train, lambda);
        FittedModel model;
        switch (*ms.kind) {
          case ModelKind::Linear: model = fit_linear(xl_train, f_names, y_train); break;
          case ModelKind::Logistic:
            model = fit_logistic(xl_train, f_names, y_train, {.l2 = spec.logistic_l2});
            break;
          case ModelKind::MajorityClass: model = fit_majority(y_train, f_names); break;
        }
        const Eigen::MatrixXd xl_test = project_rows(basis, view0, test, lambda);
        const auto yhat_test = predict(model, xl_test, f_names).values;
        const auto yhat_train = predict(model, xl_train, f_names).values;
        out.timings.fit_ms += ms_since(tf);
        auto row = score(yhat_test, m, lambda);
        for (Eigen::Index c = 0; c < p_train_raw.cols(); ++c)
          row.train_max_abs_corr =
              std::max(row.train_max_abs_corr, centered_abs_corr(yhat_train, p_train_raw.col(c)));
        row.model = std::move(model);
        out.rows.push_back(std::move(row));
      } catch (...) {
        rethrow_with_context("model '" + ms.id + "', lambda " + csv::format_double(lambda) + ", fold '" +
                             split.id + "'");
      }
    }
  }
  return out;
}

}  // namespace detail

/// Loads (or generates) the dataset named by the spec and encodes its
/// categorical columns.
inline Dataset load_sweep_dataset(const SweepSpec& spec) {
  if (spec.synth) return generate(*spec.synth);
  return encode_all_categorical(load_csv(spec.dataset_path, Schema::load(spec.schema_path)));
}

/// Runs the sweep over an already loaded, fully numeric, uncentered dataset.
inline SweepResult run_sweep(const Dataset& data, const SweepSpec& spec) {
  validate(spec);
  const auto t_start = detail::Clock::now();
  if (data.has_symbolic()) throw DataError("sweep needs categorical columns encoded first");
  if (data.is_centered()) throw DataError("sweep expects raw (uncentered) data");
  const auto p_names = data.labels(Role::Protected);
  if (p_names.empty()) throw DataError("dataset has no protected column");
  std::size_t designated = 0;
  if (!spec.protected_column.empty()) {
    const auto it = std::find(p_names.begin(), p_names.end(), spec.protected_column);
    if (it == p_names.end()) throw DataError("'" + spec.protected_column + "' is not a protected column");
    designated = static_cast<std::size_t>(it - p_names.begin());
  }

  SweepResult res;
  res.spec = spec;
  res.n_rows = data.rows();
  res.feature_columns = data.labels(Role::Feature);
  res.protected_columns = p_names;
  res.provenance.seed = spec.split_plan.seed;
  res.provenance.config_hash = config_hash(spec);
  res.provenance.dataset_hash = dataset_hash(data);
  res.splits = make_splits(data, spec.split_plan);

  std::vector<std::optional<Eigen::VectorXd>> external(spec.models.size());
  for (std::size_t m = 0; m < spec.models.size(); ++m)
    if (spec.models[m].external())
      external[m] = detail::read_external_predictions(spec.models[m].predictions_path, data.rows());

  std::vector<detail::FoldOutput> folds(res.splits.size());
  detail::parallel_for(res.splits.size(), spec.threads, [&](std::size_t f) {
    folds[f] = detail::run_fold(data, spec, res.splits[f], f, designated, external);
  });

  auto& t = res.provenance.timings;
  for (auto& f : folds) {
    t.center_ms += f.timings.center_ms;
    t.basis_ms += f.timings.basis_ms;
    t.debias_ms += f.timings.debias_ms;
    t.fit_ms += f.timings.fit_ms;
    t.evaluate_ms += f.timings.evaluate_ms;
    for (auto& r : f.rows) res.rows.push_back(std::move(r));
  }
  std::stable_sort(res.rows.begin(), res.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    const double la = a.report.lambda.value_or(-1.0);
    const double lb = b.report.lambda.value_or(-1.0);
    if (a.model_index != b.model_index) return a.model_index < b.model_index;
    if (la != lb) return la < lb;
    return a.fold_index < b.fold_index;
  });
  t.total_ms = detail::ms_since(t_start);
  return res;
}

inline SweepResult run_sweep(const SweepSpec& spec) {
  const auto t0 = detail::Clock::now();
  const Dataset data = load_sweep_dataset(spec);
  const double load_ms = detail::ms_since(t0);
  auto res = run_sweep(data, spec);
  res.provenance.timings.load_ms = load_ms;
  res.provenance.timings.total_ms += load_ms;
  return res;
}

// ---------------------------------------------------------------------------
// Output

struct CurvePoint {
  std::string model;
  std::optional<double> lambda;
  std::size_t folds = 0;
  std::map<std::string, std::pair<double, double>> stats;  ///< metric -> (mean, sample sd)
};

/// Mean and sample standard deviation over folds for every (model, lambda).
/// Points follow the row order of the result.
inline std::vector<CurvePoint> aggregate(const SweepResult& r) {
  static const char* kMetrics[] = {"acc_y", "abs_corr", "discrimination", "acc_p",
                                   "balance_neg", "balance_pos", "nll"};
  std::vector<CurvePoint> out;
  std::vector<std::vector<std::vector<double>>> samples;
  for (const auto& row : r.rows) {
    const auto& rep = row.report;
    if (out.empty() || out.back().model != rep.model_id || out.back().lambda != rep.lambda) {
      out.push_back({rep.model_id, rep.lambda, 0, {}});
      samples.emplace_back(std::size(kMetrics));
    }
    const double v[] = {rep.acc_y, rep.max_abs_corr, rep.discrimination, rep.acc_p,
                        rep.balance_neg, rep.balance_pos, rep.neg_log_likelihood};
    for (std::size_t k = 0; k < std::size(kMetrics); ++k) samples.back()[k].push_back(v[k]);
    ++out.back().folds;
  }
  for (std::size_t p = 0; p < out.size(); ++p) {
    for (std::size_t k = 0; k < std::size(kMetrics); ++k) {
      const auto& s = samples[p][k];
      double mean = 0.0;
      for (double x : s) mean += x;
      mean /= static_cast<double>(s.size());
      double ss = 0.0;
      for (double x : s) ss += (x - mean) * (x - mean);
      const double sd = s.size() > 1 ? std::sqrt(ss / static_cast<double>(s.size() - 1)) : 0.0;
      out[p].stats[kMetrics[k]] = {mean, sd};
    }
  }
  return out;
}

inline std::string lambda_field(const std::optional<double>& l) {
  return l ? csv::format_double(*l) : std::string();
}

inline nlohmann::ordered_json manifest_json(const SweepResult& r) {
  nlohmann::ordered_json j;
  j["version"] = r.provenance.version;
  j["seed"] = r.provenance.seed;
  j["dataset_hash"] = hex64(r.provenance.dataset_hash);
  j["config_hash"] = hex64(r.provenance.config_hash);
  j["config"] = to_json(r.spec);
  j["rows"] = r.n_rows;
  j["feature_columns"] = r.feature_columns;
  j["protected_columns"] = r.protected_columns;
  j["acc_p_method"] = kDiscriminatorNote;
  j["splits"] = to_json(r.splits);
  return j;
}

inline nlohmann::ordered_json timings_json(const SweepResult& r) {
  const auto& t = r.provenance.timings;
  return {{"load_ms", t.load_ms},       {"center_ms", t.center_ms}, {"basis_ms", t.basis_ms},
          {"debias_ms", t.debias_ms},   {"fit_ms", t.fit_ms},       {"evaluate_ms", t.evaluate_ms},
          {"total_ms", t.total_ms}};
}

/// Writes manifest.json, fairness_accuracy.csv, balance_calibration.csv,
/// metrics.csv, timings.json and reports/<model>_<lambda>_<fold>.json under
/// `dir`. Everything except timings.json is a pure function of the result
/// rows, so reruns produce identical bytes.
inline void emit_curves(const SweepResult& r, const std::string& dir) {
  namespace fs = std::filesystem;
  if (r.rows.empty()) throw DataError("nothing to emit: the sweep produced no rows");
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "reports", ec);
  if (ec) throw DataError("cannot create '" + dir + "': " + ec.message());

  auto open = [&](const std::string& name) {
    const auto path = (fs::path(dir) / name).string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write '" + path + "'");
    return os;
  };
  const auto fmt = csv::format_double;

  {
    auto os = open("manifest.json");
    os << manifest_json(r).dump(2) << '\n';
  }
  {
    auto os = open("timings.json");
    os << timings_json(r).dump(2) << '\n';
  }

  const auto points = aggregate(r);
  {
    auto os = open("fairness_accuracy.csv");
    os << "# one row per (model, lambda); mean and sample sd over folds of test-set metrics\n"
          "# lambda: fairness level (empty for external predictions); folds: number of folds\n"
          "# acc_y: accuracy of predictions thresholded at 0.5\n"
          "# abs_corr: max over protected columns of |pearson(yhat, p)|\n"
          "# discrimination: |P(yhat=1|p=1) - P(yhat=1|p=0)| for the designated protected column\n"
          "# acc_p: accuracy of the best discriminator predicting p from yhat\n";
    csv::write_record(os, {"lambda", "model", "folds", "acc_y_mean", "acc_y_sd", "abs_corr_mean", "abs_corr_sd",
                           "discrimination_mean", "discrimination_sd", "acc_p_mean", "acc_p_sd"});
    for (const auto& p : points) {
      csv::Record rec{lambda_field(p.lambda), p.model, std::to_string(p.folds)};
      for (const char* k : {"acc_y", "abs_corr", "discrimination", "acc_p"}) {
        rec.push_back(fmt(p.stats.at(k).first));
        rec.push_back(fmt(p.stats.at(k).second));
      }
      csv::write_record(os, rec);
    }
  }
  {
    auto os = open("balance_calibration.csv");
    os << "# one row per (model, lambda); mean and sample sd over folds of test-set metrics\n"
          "# balance_neg / balance_pos: |mean yhat difference between protected groups| among rows with y=0 / y=1\n"
          "# nll: mean negative Bernoulli log-likelihood, yhat clamped to [1e-12, 1-1e-12]\n";
    csv::write_record(os, {"lambda", "model", "folds", "balance_neg_mean", "balance_neg_sd", "balance_pos_mean",
                           "balance_pos_sd", "nll_mean", "nll_sd"});
    for (const auto& p : points) {
      csv::Record rec{lambda_field(p.lambda), p.model, std::to_string(p.folds)};
      for (const char* k : {"balance_neg", "balance_pos", "nll"}) {
        rec.push_back(fmt(p.stats.at(k).first));
        rec.push_back(fmt(p.stats.at(k).second));
      }
      csv::write_record(os, rec);
    }
  }
  {
    auto os = open("metrics.csv");
    std::vector<std::string> header{"model", "lambda", "split", "acc_y", "max_abs_corr", "train_max_abs_corr",
                                    "discrimination", "balance_neg", "balance_pos", "neg_log_likelihood",
                                    "acc_p", "acc_p_baseline"};
    for (const auto& p : r.protected_columns) header.push_back("corr_" + p);
    csv::write_record(os, header);
    for (const auto& row : r.rows) {
      const auto& m = row.report;
      csv::Record rec{m.model_id,
                      lambda_field(m.lambda),
                      m.split_id,
                      fmt(m.acc_y),
                      fmt(m.max_abs_corr),
                      row.model ? fmt(row.train_max_abs_corr) : std::string(),
                      fmt(m.discrimination),
                      fmt(m.balance_neg),
                      fmt(m.balance_pos),
                      fmt(m.neg_log_likelihood),
                      fmt(m.acc_p),
                      fmt(m.acc_p_baseline)};
      for (double c : m.pearson_corr_yp) rec.push_back(fmt(c));
      csv::write_record(os, rec);
    }
  }
  for (const auto& row : r.rows) {
    const auto& m = row.report;
    const std::string name = m.model_id + "_" + (m.lambda ? fmt(*m.lambda) : std::string("none")) + "_" +
                             m.split_id + ".json";
    auto j = to_json(m);
    if (row.model) {
      j["train_max_abs_corr"] = row.train_max_abs_corr;
      j["model"] = to_json(*row.model);
    }
    auto os = open("reports/" + name);
    os << j.dump(2) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Timing

struct TimingReport {
  std::size_t n = 0;
  std::size_t n_f = 0;
  std::size_t n_p = 0;
  int repeats = 0;
  double median_ms = 0.0;         ///< build_basis + debias
  double median_basis_ms = 0.0;
  double median_debias_ms = 0.0;
  std::vector<double> samples_ms;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Median wall-clock of basis construction plus debiasing over `repeats`
/// runs. A raw dataset is centered first (not timed).
inline TimingReport time_debias(const Dataset& d, int repeats, DebiasOptions opts = {}) {
  if (repeats < 1) throw DataError("repeats must be at least 1");
  const Dataset c = d.is_centered() ? d : center(d);
  const Eigen::MatrixXd f = c.feature_matrix();
  const Eigen::MatrixXd p = c.protected_matrix();
  const auto fl = c.labels(Role::Feature);
  const auto pl = c.labels(Role::Protected);
  TimingReport t;
  t.n = c.rows();
  t.n_f = static_cast<std::size_t>(f.cols());
  t.n_p = static_cast<std::size_t>(p.cols());
  t.repeats = repeats;
  std::vector<double> basis_ms, debias_ms;
  for (int k = 0; k < repeats; ++k) {
    auto t0 = detail::Clock::now();
    const auto b = build_basis(p, pl);
    const double tb = detail::ms_since(t0);
    t0 = detail::Clock::now();
    const auto v = debias(f, fl, b, opts);
    const double td = detail::ms_since(t0);
    if (v.values.size() == 0) throw NumericalError("empty debiased view");
    basis_ms.push_back(tb);
    debias_ms.push_back(td);
    t.samples_ms.push_back(tb + td);
  }
  t.median_ms = median(t.samples_ms);
  t.median_basis_ms = median(basis_ms);
  t.median_debias_ms = median(debias_ms);
  return t;
}

inline TimingReport time_debias(const std::string& dataset_path, const std::string& schema_path, int repeats,
                                DebiasOptions opts = {}) {
  return time_debias(encode_all_categorical(load_csv(dataset_path, Schema::load(schema_path))), repeats, opts);
}

inline nlohmann::ordered_json to_json(const TimingReport& t) {
  return {{"n", t.n},
          {"n_f", t.n_f},
          {"n_p", t.n_p},
          {"repeats", t.repeats},
          {"median_ms", t.median_ms},
          {"median_basis_ms", t.median_basis_ms},
          {"median_debias_ms", t.median_debias_ms}};
}

}  // namespace fairproj
