#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "fairproj/fairproj.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Globals {
  bool json = false;
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
};

void log_start(const std::string& cmd, std::uint64_t seed, std::uint64_t config_hash) {
  fairproj::log::info("fairproj " + std::string(fairproj::kVersion) + " " + cmd + " seed=" + std::to_string(seed) +
                      " config=" + fairproj::hex64(config_hash));
}

std::uint64_t hash_options(const ordered_json& j) { return fairproj::fnv1a64(j.dump()); }

void print_json(const Globals& g, const ordered_json& j) {
  if (g.json) std::cout << j.dump(2) << '\n';
}

fairproj::Dataset load_encoded(const std::string& input, const std::string& schema) {
  return fairproj::encode_all_categorical(fairproj::load_csv(input, fairproj::Schema::load(schema)));
}

std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw fairproj::DataError("cannot write '" + path + "'");
  os << text;
}

// ---------------------------------------------------------------------------

struct DebiasArgs {
  std::string input, schema, output, sidecar, suffix;
  double lambda = 0.0;
  bool standardize = false;
};

int cmd_debias(const DebiasArgs& a, const Globals& g) {
  const ordered_json opts = {{"cmd", "debias"}, {"input", a.input}, {"schema", a.schema}, {"lambda", a.lambda},
                             {"standardize", a.standardize}};
  log_start("debias", g.seed.value_or(0), hash_options(opts));
  if (!(a.lambda >= 0.0 && a.lambda <= 1.0)) throw fairproj::DataError("--lambda must lie in [0, 1]");
  const auto raw = load_encoded(a.input, a.schema);
  const auto d = fairproj::center(raw, {.standardize = a.standardize, .center_outcome = false});
  const auto t0 = std::chrono::steady_clock::now();
  const auto basis = fairproj::build_basis(d);
  const auto view0 = fairproj::debias(d, basis, {.threads = g.threads});
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  const auto view = fairproj::interpolate(view0, d, a.lambda, &basis);
  fairproj::write_view_csv(view, d, a.output, a.suffix);

  auto side = fairproj::sidecar_json(view, basis, ms);
  side["mean_feature_correlation"] = fairproj::mean_feature_correlation(view, d.feature_matrix());
  side["rows"] = d.rows();
  side["features"] = view.source_columns;
  side["protected_columns"] = basis.source_columns;
  side["standardized"] = a.standardize;
  side["version"] = fairproj::kVersion;
  side["config_hash"] = fairproj::hex64(hash_options(opts));
  const auto sidecar = a.sidecar.empty() ? sibling(a.output, ".json") : a.sidecar;
  write_text(sidecar, side.dump(2) + "\n");
  fairproj::log::info("wrote " + a.output + " and " + sidecar + " (basis rank " + std::to_string(basis.rank()) +
                      ", max residual corr " + fairproj::csv::format_double(view.max_residual_correlation()) + ")");
  print_json(g, side);
  return kOk;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string config, output_dir;
};

int cmd_sweep(const SweepArgs& a, const Globals& g, bool threads_given) {
  auto spec = fairproj::load_sweep_spec(a.config);
  if (g.seed) spec.split_plan.seed = *g.seed;
  if (threads_given) spec.threads = g.threads;
  if (!a.output_dir.empty()) spec.output_dir = a.output_dir;
  log_start("sweep", spec.split_plan.seed, fairproj::config_hash(spec));
  const auto res = fairproj::run_sweep(spec);
  fairproj::emit_curves(res, spec.output_dir);
  fairproj::log::info("wrote " + std::to_string(res.rows.size()) + " reports to " + spec.output_dir + " in " +
                      fairproj::csv::format_double(res.provenance.timings.total_ms) + " ms");
  ordered_json summary = {{"output_dir", spec.output_dir},
                          {"rows", res.rows.size()},
                          {"dataset_hash", fairproj::hex64(res.provenance.dataset_hash)},
                          {"config_hash", fairproj::hex64(res.provenance.config_hash)},
                          {"timings", fairproj::timings_json(res)}};
  print_json(g, summary);
  return kOk;
}

// ---------------------------------------------------------------------------

struct MetricsArgs {
  std::string predictions, dataset, schema, protected_column, output;
  int folds = 5;
  int bins = 10;
};

int cmd_metrics(const MetricsArgs& a, const Globals& g) {
  const ordered_json opts = {{"cmd", "metrics"}, {"predictions", a.predictions}, {"dataset", a.dataset},
                             {"schema", a.schema}, {"protected", a.protected_column}, {"folds", a.folds},
                             {"bins", a.bins}};
  const auto seed = g.seed.value_or(0);
  log_start("metrics", seed, hash_options(opts));
  const auto d = load_encoded(a.dataset, a.schema);
  const auto all = fairproj::detail::read_external_predictions(a.predictions, d.rows());
  std::vector<std::size_t> rows;
  for (Eigen::Index i = 0; i < all.size(); ++i)
    if (!std::isnan(all(i))) rows.push_back(static_cast<std::size_t>(i));
  if (rows.empty()) throw fairproj::DataError("'" + a.predictions + "' holds no predictions");
  if (rows.size() < d.rows()) {
    fairproj::log::warn("scoring " + std::to_string(rows.size()) + " of " + std::to_string(d.rows()) +
                        " rows that have predictions");
  }
  const auto sub = d.select_rows(rows);
  Eigen::VectorXd yhat(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) yhat(static_cast<Eigen::Index>(i)) = all(static_cast<Eigen::Index>(rows[i]));
  const auto names = sub.labels(fairproj::Role::Protected);
  if (names.empty()) throw fairproj::DataError("dataset has no protected column");
  std::size_t designated = 0;
  if (!a.protected_column.empty()) {
    const auto it = std::find(names.begin(), names.end(), a.protected_column);
    if (it == names.end()) throw fairproj::DataError("'" + a.protected_column + "' is not a protected column");
    designated = static_cast<std::size_t>(it - names.begin());
  }
  auto rep = fairproj::evaluate(yhat, sub.outcome(), sub.protected_matrix(), names, designated,
                                {a.folds, a.bins, seed});
  rep.model_id = fs::path(a.predictions).stem().string();
  rep.split_id = "all";
  const auto j = fairproj::to_json(rep);
  if (!a.output.empty()) write_text(a.output, j.dump(2) + "\n");
  fairproj::log::info("acc_y=" + fairproj::csv::format_double(rep.acc_y) +
                      " max_abs_corr=" + fairproj::csv::format_double(rep.max_abs_corr) +
                      " discrimination=" + fairproj::csv::format_double(rep.discrimination) +
                      " nll=" + fairproj::csv::format_double(rep.neg_log_likelihood) +
                      " acc_p=" + fairproj::csv::format_double(rep.acc_p));
  print_json(g, j);
  return kOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 2000;
  std::string out, config;
  bool n_given = false;
};

int cmd_synth(const SynthArgs& a, const Globals& g) {
  fairproj::SynthConfig c;
  if (!a.config.empty()) {
    try {
      c = fairproj::synth_config_from_json(nlohmann::json::parse(fairproj::csv::read_file(a.config)));
    } catch (const nlohmann::json::exception& e) {
      throw fairproj::DataError("cannot parse '" + a.config + "': " + e.what());
    }
  }
  if (a.n_given || a.config.empty()) c.n = a.n;
  if (g.seed) c.seed = *g.seed;
  fairproj::validate(c);
  const auto echo = fairproj::to_json(c);
  log_start("synth", c.seed, hash_options(echo));
  const auto d = fairproj::generate(c);
  fairproj::write_csv(d, a.out);
  write_text(sibling(a.out, ".schema.json"), fairproj::schema_json(d).dump(2) + "\n");
  write_text(sibling(a.out, ".config.json"), echo.dump(2) + "\n");
  fairproj::log::info("wrote " + std::to_string(d.rows()) + " rows to " + a.out);
  print_json(g, echo);
  return kOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string input, schema;
  int repeats = 5;
  std::size_t rows = 45000, features = 103, protected_cols = 1;
  double target_ms = 200.0;
};

/// Random standardized-scale data with protected columns correlated with
/// every feature.
fairproj::Dataset bench_data(std::size_t n, std::size_t nf, std::size_t np, std::uint64_t seed) {
  const auto m = static_cast<Eigen::Index>(nf + np + 1);
  Eigen::MatrixXd v(static_cast<Eigen::Index>(n), m);
  std::vector<std::string> names;
  std::vector<fairproj::ColumnRole> roles;
  for (std::size_t j = 0; j < nf; ++j) {
    names.push_back("x" + std::to_string(j));
    roles.push_back({fairproj::Role::Feature});
  }
  for (std::size_t j = 0; j < np; ++j) {
    names.push_back("p" + std::to_string(j));
    roles.push_back({fairproj::Role::Protected});
  }
  names.push_back("y");
  roles.push_back({fairproj::Role::Outcome});
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    fairproj::CounterRng rng(seed, static_cast<std::uint64_t>(i));
    double psum = 0.0;
    for (std::size_t j = 0; j < np; ++j) {
      const double p = rng.next_uniform() < 0.5 ? 1.0 : 0.0;
      v(i, static_cast<Eigen::Index>(nf + j)) = p;
      psum += p;
    }
    for (std::size_t j = 0; j < nf; ++j) v(i, static_cast<Eigen::Index>(j)) = rng.next_normal() + 0.5 * psum;
    v(i, m - 1) = rng.next_uniform() < 0.5 ? 1.0 : 0.0;
  }
  return fairproj::Dataset(std::move(v), std::move(names), std::move(roles));
}

int cmd_bench(const BenchArgs& a, const Globals& g) {
  const auto seed = g.seed.value_or(0);
  ordered_json opts = {{"cmd", "bench"}, {"repeats", a.repeats}};
  if (!a.input.empty()) {
    opts["input"] = a.input;
    opts["schema"] = a.schema;
  } else {
    opts["rows"] = a.rows;
    opts["features"] = a.features;
    opts["protected"] = a.protected_cols;
  }
  log_start("bench", seed, hash_options(opts));
  const auto d = a.input.empty() ? bench_data(a.rows, a.features, a.protected_cols, seed)
                                 : load_encoded(a.input, a.schema);
  const auto t = fairproj::time_debias(d, a.repeats, {.threads = g.threads});
  auto j = fairproj::to_json(t);
  j["target_ms"] = a.target_ms;
  j["meets_target"] = t.median_ms < a.target_ms;
  fairproj::log::info("n=" + std::to_string(t.n) + " n_f=" + std::to_string(t.n_f) + " n_p=" +
                      std::to_string(t.n_p) + " median " + fairproj::csv::format_double(t.median_ms) +
                      " ms (target " + fairproj::csv::format_double(a.target_ms) + " ms: " +
                      (t.median_ms < a.target_ms ? "met" : "missed") + ")");
  print_json(g, j);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear debiasing of tabular features by orthogonal projection"};
  app.set_version_flag("--version", std::string(fairproj::kVersion));
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_flag("--json", g.json, "Print a machine-readable summary on stdout");
  auto* threads_opt = app.add_option("--threads", g.threads, "Maximum worker threads")->check(CLI::Range(1u, 1024u));
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides config files)");

  DebiasArgs da;
  auto* debias = app.add_subcommand("debias", "Write the fair representation of a dataset's features");
  debias->add_option("--input", da.input, "Input CSV")->required()->check(CLI::ExistingFile);
  debias->add_option("--schema", da.schema, "Column schema JSON")->required()->check(CLI::ExistingFile);
  debias->add_option("--lambda", da.lambda, "Fairness level in [0, 1]; 0 removes all linear correlation")
      ->required();
  debias->add_option("--output", da.output, "Output CSV")->required();
  debias->add_option("--sidecar", da.sidecar, "Sidecar JSON path (default: <output stem>.json)");
  debias->add_option("--suffix", da.suffix, "Suffix appended to debiased feature names");
  debias->add_flag("--standardize", da.standardize, "Scale features and protected columns to unit variance");

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "Run a lambda sweep described by a JSON config");
  sweep->add_option("--config", sa.config, "Sweep config JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--output-dir", sa.output_dir, "Override the config's output directory");

  MetricsArgs ma;
  auto* metrics = app.add_subcommand("metrics", "Score external predictions");
  metrics->add_option("--predictions", ma.predictions, "CSV with columns row_index,yhat_real")
      ->required()
      ->check(CLI::ExistingFile);
  metrics->add_option("--dataset", ma.dataset, "Dataset CSV")->required()->check(CLI::ExistingFile);
  metrics->add_option("--schema", ma.schema, "Column schema JSON")->required()->check(CLI::ExistingFile);
  metrics->add_option("--protected", ma.protected_column, "Designated binary protected column");
  metrics->add_option("--output", ma.output, "Write the report JSON here");
  metrics->add_option("--acc-p-folds", ma.folds, "Cross-validation folds for acc_p")->check(CLI::Range(2, 100));
  metrics->add_option("--acc-p-bins", ma.bins, "Histogram bins for acc_p")->check(CLI::Range(1, 1000));

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "Generate the biased two-Gaussian dataset");
  auto* n_opt = synth->add_option("--n", ya.n, "Rows")->check(CLI::Range(std::size_t{2}, std::size_t{100000000}));
  synth->add_option("--out", ya.out, "Output CSV (schema and config echo are written next to it)")->required();
  synth->add_option("--config", ya.config, "Generator config JSON")->check(CLI::ExistingFile);

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Time basis construction plus debiasing");
  auto* in_opt = bench->add_option("--input", ba.input, "Dataset CSV (default: random data)")->check(CLI::ExistingFile);
  bench->add_option("--schema", ba.schema, "Column schema JSON")->needs(in_opt)->check(CLI::ExistingFile);
  in_opt->needs("--schema");
  bench->add_option("--repeats", ba.repeats, "Timed runs")->check(CLI::Range(1, 100000));
  bench->add_option("--rows", ba.rows, "Rows of random data")->excludes(in_opt);
  bench->add_option("--features", ba.features, "Features of random data")->excludes(in_opt);
  bench->add_option("--protected", ba.protected_cols, "Protected columns of random data")->excludes(in_opt);
  bench->add_option("--target-ms", ba.target_ms, "Reference time to compare against");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (*seed_opt) g.seed = seed;
  ya.n_given = static_cast<bool>(*n_opt);

  try {
    if (*debias) return cmd_debias(da, g);
    if (*sweep) return cmd_sweep(sa, g, static_cast<bool>(*threads_opt));
    if (*metrics) return cmd_metrics(ma, g);
    if (*synth) return cmd_synth(ya, g);
    if (*bench) return cmd_bench(ba, g);
  } catch (const fairproj::NumericalError& e) {
    fairproj::log::error(std::string("numerical: ") + e.what());
    return kNumerical;
  } catch (const fairproj::Error& e) {
    fairproj::log::error(e.what());
    return kData;
  } catch (const std::exception& e) {
    fairproj::log::error(e.what());
    return kData;
  }
  return kUsage;
}
