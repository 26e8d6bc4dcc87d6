#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>

#include "fairproj/error.hpp"
#include "fairproj/rng.hpp"
#include "fairproj/tabular.hpp"

namespace fairproj {

/// Biased two-class Gaussian data: binary outcome y, binary protected s whose
/// distribution is skewed by y, and two features drawn from a bivariate
/// Gaussian whose parameters depend on y.
///
/// P(y = 1) = 1/2, P(s = 1 | y = 1) = protected_bias, P(s = 1 | y = 0) =
/// 1 - protected_bias. With bias > 1/2 the s = 1 group is dominated by
/// positives.
struct SynthConfig {
  std::size_t n = 2000;
  std::uint64_t seed = 0;
  Eigen::Vector2d mean_pos{2.0, 2.0};
  Eigen::Vector2d mean_neg{-2.0, -2.0};
  Eigen::Matrix2d cov_pos = (Eigen::Matrix2d() << 5.0, 1.0, 1.0, 5.0).finished();
  Eigen::Matrix2d cov_neg = (Eigen::Matrix2d() << 10.0, 1.0, 1.0, 3.0).finished();
  double protected_bias = 0.75;
};

namespace detail {
inline Eigen::Matrix2d cholesky_factor(const Eigen::Matrix2d& cov, const char* which) {
  if (!cov.allFinite() || std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * cov.cwiseAbs().maxCoeff()) {
    throw DataError(std::string(which) + " covariance is not symmetric");
  }
  Eigen::LLT<Eigen::Matrix2d> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw DataError(std::string(which) + " covariance is not positive definite");
  }
  return llt.matrixL();
}
}  // namespace detail

inline void validate(const SynthConfig& c) {
  if (c.n < 2) throw DataError("synthetic data needs n >= 2");
  if (!(c.protected_bias > 0.0 && c.protected_bias < 1.0)) {
    throw DataError("protected_bias must lie in (0, 1)");
  }
  detail::cholesky_factor(c.cov_pos, "cov_pos");
  detail::cholesky_factor(c.cov_neg, "cov_neg");
}

/// Row i draws only from counter stream i, so the output is identical however
/// rows are scheduled and on every platform.
inline Dataset generate(const SynthConfig& c) {
  validate(c);
  const Eigen::Matrix2d l_pos = detail::cholesky_factor(c.cov_pos, "cov_pos");
  const Eigen::Matrix2d l_neg = detail::cholesky_factor(c.cov_neg, "cov_neg");
  const auto n = static_cast<Eigen::Index>(c.n);
  Eigen::MatrixXd v(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    CounterRng rng(c.seed, static_cast<std::uint64_t>(i));
    const bool y = rng.next_uniform() < 0.5;
    const double p_s = y ? c.protected_bias : 1.0 - c.protected_bias;
    const bool s = rng.next_uniform() < p_s;
    Eigen::Vector2d z;
    z(0) = rng.next_normal();
    z(1) = rng.next_normal();
    const Eigen::Vector2d x = y ? Eigen::Vector2d(c.mean_pos + l_pos * z)
                                : Eigen::Vector2d(c.mean_neg + l_neg * z);
    v(i, 0) = x(0);
    v(i, 1) = x(1);
    v(i, 2) = s ? 1.0 : 0.0;
    v(i, 3) = y ? 1.0 : 0.0;
  }
  return Dataset(std::move(v), {"x1", "x2", "s", "y"},
                 {{Role::Feature}, {Role::Feature}, {Role::Protected}, {Role::Outcome}});
}

inline nlohmann::ordered_json to_json(const SynthConfig& c) {
  auto mat = [](const Eigen::Matrix2d& m) {
    return nlohmann::ordered_json::array({{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}});
  };
  return {{"n", c.n},
          {"seed", c.seed},
          {"mean_pos", {c.mean_pos(0), c.mean_pos(1)}},
          {"mean_neg", {c.mean_neg(0), c.mean_neg(1)}},
          {"cov_pos", mat(c.cov_pos)},
          {"cov_neg", mat(c.cov_neg)},
          {"protected_bias", c.protected_bias}};
}

/// Missing keys keep their defaults.
inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.n = j.value("n", c.n);
    c.seed = j.value("seed", c.seed);
    auto vec = [&](const char* key, Eigen::Vector2d& out) {
      if (!j.contains(key)) return;
      const auto& a = j.at(key);
      if (!a.is_array() || a.size() != 2) throw DataError(std::string(key) + " must be a 2-vector");
      out << a[0].get<double>(), a[1].get<double>();
    };
    auto mat = [&](const char* key, Eigen::Matrix2d& out) {
      if (!j.contains(key)) return;
      const auto& a = j.at(key);
      if (!a.is_array() || a.size() != 2 || a[0].size() != 2 || a[1].size() != 2) {
        throw DataError(std::string(key) + " must be a 2x2 matrix");
      }
      out << a[0][0].get<double>(), a[0][1].get<double>(), a[1][0].get<double>(), a[1][1].get<double>();
    };
    vec("mean_pos", c.mean_pos);
    vec("mean_neg", c.mean_neg);
    mat("cov_pos", c.cov_pos);
    mat("cov_neg", c.cov_neg);
    c.protected_bias = j.value("protected_bias", c.protected_bias);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("synthetic config: ") + e.what());
  }
  validate(c);
  return c;
}

}  // namespace fairproj
