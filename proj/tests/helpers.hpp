#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fairproj/fairproj.hpp"

namespace testing_helpers {

/// Column-wise reference correlation, computed the slow way.
inline double naive_corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    ma += a(i);
    mb += b(i);
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    sab += (a(i) - ma) * (b(i) - mb);
    saa += (a(i) - ma) * (a(i) - ma);
    sbb += (b(i) - mb) * (b(i) - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Brute-force references, written against the definitions rather than the
// library code.
inline double ref_discrimination(const Eigen::VectorXd& yb, const Eigen::VectorXd& p) {
  double a = 0, na = 0, b = 0, nb = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) == 0) {
      na += 1;
      a += yb(i);
    } else {
      nb += 1;
      b += yb(i);
    }
  }
  return std::abs(a / na - b / nb);
}

inline double ref_cell_mean(const Eigen::VectorXd& yr, const Eigen::VectorXd& y, const Eigen::VectorXd& p, int pv, int yv) {
  double s = 0, c = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (p(i) == pv && y(i) == yv) {
      s += yr(i);
      c += 1;
    }
  return s / c;
}

inline double ref_nll(const Eigen::VectorXd& yr, const Eigen::VectorXd& y) {
  double s = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double q = std::min(std::max(yr(i), 1e-12), 1 - 1e-12);
    s -= y(i) * std::log(q) + (1 - y(i)) * std::log(1 - q);
  }
  return s / static_cast<double>(y.size());
}


inline Eigen::MatrixXd gaussian(std::mt19937_64& g, Eigen::Index n, Eigen::Index m) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(n, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) x(i, j) = z(g);
  return x;
}

/// Features correlated with the protected columns; outcome depends on both.
inline fairproj::Dataset correlated_dataset(std::mt19937_64& g, Eigen::Index n, Eigen::Index nf, Eigen::Index np,
                                            bool binary_outcome = false, bool binary_protected = false) {
  const Eigen::MatrixXd pz = gaussian(g, n, np);
  Eigen::MatrixXd p = pz;
  if (binary_protected) p = (pz.array() > 0.3).cast<double>();
  const Eigen::MatrixXd mix = gaussian(g, np, nf);
  const Eigen::MatrixXd x = gaussian(g, n, nf) + p * mix;
  const Eigen::VectorXd beta = gaussian(g, nf, 1);
  const Eigen::VectorXd gamma = gaussian(g, np, 1);
  Eigen::VectorXd y = x * beta + p * gamma + 0.5 * gaussian(g, n, 1);
  if (binary_outcome) y = (y.array() > y.mean()).cast<double>();
  Eigen::MatrixXd v(n, nf + np + 1);
  v << x, p, y;
  std::vector<std::string> names;
  std::vector<fairproj::ColumnRole> roles;
  for (Eigen::Index j = 0; j < nf; ++j) {
    names.push_back("x" + std::to_string(j));
    roles.push_back({fairproj::Role::Feature});
  }
  for (Eigen::Index j = 0; j < np; ++j) {
    names.push_back("p" + std::to_string(j));
    roles.push_back({fairproj::Role::Protected});
  }
  names.push_back("y");
  roles.push_back({fairproj::Role::Outcome});
  return fairproj::Dataset(std::move(v), std::move(names), std::move(roles));
}

inline fairproj::Schema schema(std::initializer_list<std::pair<const char*, fairproj::ColumnRole>> cols) {
  fairproj::Schema s;
  for (const auto& [n, r] : cols) s.columns.emplace(n, r);
  return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("fairproj_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Silences library warnings for the lifetime of the guard and counts them.
struct CaptureLog {
  std::vector<std::string> warnings;
  fairproj::log::ScopedSink guard{[this](fairproj::log::Level l, std::string_view m) {
    if (l != fairproj::log::Level::Info) warnings.emplace_back(m);
  }};
};

/// Outcome of fitting logistic models on fair synthetic features at the two
/// ends of the sweep and scoring them on a fresh sample.
struct SynthDirection {
  struct End {
    double accuracy = 0.0;
    double discrimination = 0.0;
    double positive_rate_s0 = 0.0;  ///< P(yhat = 1 | s = 0)
    double positive_rate_s1 = 0.0;
    double gap() const { return std::abs(positive_rate_s1 - positive_rate_s0); }
  };
  End fair;  ///< lambda = 0
  End full;  ///< lambda = 1
};

inline SynthDirection synth_direction(std::size_t n, std::uint64_t seed) {
  using namespace fairproj;
  SynthConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  const Dataset train_raw = generate(cfg);
  cfg.seed = seed + 1;
  const Dataset test_raw = generate(cfg);
  const auto stats = fit_centering(train_raw, {.standardize = true, .center_outcome = false});
  const Dataset train = apply_centering(train_raw, stats);
  const Dataset test = apply_centering(test_raw, stats);
  const auto basis = build_basis(train);
  const auto view0 = debias(train, basis);
  const auto labels = train.labels(Role::Feature);
  const Eigen::VectorXd s = test_raw.protected_matrix().col(0);
  const Eigen::VectorXd y = test.outcome();

  auto score = [&](double lambda) {
    const auto m = fit_logistic(blend(view0.values, train.feature_matrix(), lambda), labels, train.outcome());
    const Eigen::VectorXd yb = predict(m, project_rows(basis, view0, test, lambda), labels).binarize().values;
    SynthDirection::End e;
    e.accuracy = accuracy(yb, y);
    e.discrimination = discrimination(yb, s);
    double c0 = 0, c1 = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      (s(i) == 1.0 ? e.positive_rate_s1 : e.positive_rate_s0) += yb(i);
      (s(i) == 1.0 ? c1 : c0) += 1;
    }
    e.positive_rate_s0 /= c0;
    e.positive_rate_s1 /= c1;
    return e;
  };
  return {score(0.0), score(1.0)};
}

}  // namespace testing_helpers
