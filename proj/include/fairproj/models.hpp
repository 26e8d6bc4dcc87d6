#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "fairproj/error.hpp"
#include "fairproj/log.hpp"
#include "fairproj/projection.hpp"
#include "fairproj/tabular.hpp"

namespace fairproj {

enum class ModelKind { Linear, Logistic, MajorityClass };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Linear: return "linear";
    case ModelKind::Logistic: return "logistic";
    case ModelKind::MajorityClass: return "majority";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "linear") return ModelKind::Linear;
  if (s == "logistic") return ModelKind::Logistic;
  if (s == "majority") return ModelKind::MajorityClass;
  throw DataError("unknown model kind '" + s + "'");
}

struct FittedModel {
  ModelKind kind = ModelKind::Linear;
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  std::vector<std::string> trained_on;
  bool converged = true;
  int iterations = 0;
  double final_gradient_norm = 0.0;
  /// Non-zero when a rank-deficient linear fit fell back to ridge.
  double ridge_penalty = 0.0;
  std::vector<std::string> dependent_columns;
  /// Penalized log-likelihood after each accepted Newton step (logistic only).
  std::vector<double> objective_trace;
};

struct Predictions {
  enum class Kind { RealValued, Binary };
  Eigen::VectorXd values;
  Kind kind = Kind::RealValued;

  /// Values strictly above 1/2 become 1, everything else 0.
  Predictions binarize() const {
    Predictions out;
    out.kind = Kind::Binary;
    out.values = (values.array() > 0.5).cast<double>();
    return out;
  }
};

namespace detail {

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  return a;
}

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline void check_design(const Eigen::MatrixXd& x, const std::vector<std::string>& labels,
                         Eigen::Index n_y) {
  if (labels.size() != static_cast<std::size_t>(x.cols())) {
    throw DataError("design has " + std::to_string(x.cols()) + " columns but " +
                    std::to_string(labels.size()) + " labels");
  }
  if (x.rows() != n_y) throw DataError("design and outcome lengths differ");
  if (x.rows() <= x.cols()) {
    throw DataError("need more rows (" + std::to_string(x.rows()) + ") than columns (" +
                    std::to_string(x.cols()) + ")");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ordinary least squares

struct LinearOptions {
  /// Relative pivot threshold below which a QR column counts as dependent.
  double rank_tolerance = 1e-10;
  /// On rank deficiency, solve a lightly ridged system instead of failing.
  bool allow_ridge = true;
};

/// Least squares with intercept via column-pivoting Householder QR of [1 X].
inline FittedModel fit_linear(const Eigen::MatrixXd& x, std::vector<std::string> labels,
                              const Eigen::VectorXd& y, LinearOptions opts = {}) {
  detail::check_design(x, labels, y.size());
  const Eigen::MatrixXd a = detail::with_intercept(x);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(opts.rank_tolerance);

  FittedModel m;
  m.kind = ModelKind::Linear;
  m.trained_on = std::move(labels);
  Eigen::VectorXd beta;
  if (qr.rank() == a.cols()) {
    beta = qr.solve(y);
  } else {
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < a.cols(); ++k) {
      const auto c = perm(k);
      m.dependent_columns.push_back(c == 0 ? "(intercept)" : m.trained_on[static_cast<std::size_t>(c - 1)]);
    }
    std::string list;
    for (const auto& c : m.dependent_columns) list += (list.empty() ? "" : ", ") + c;
    if (!opts.allow_ridge) throw RankDeficientError("design is rank deficient; dependent columns: " + list);
    log::warn("rank-deficient design (dependent: " + list + "); using ridge fallback");
    Eigen::MatrixXd h = a.transpose() * a;
    m.ridge_penalty = 1e-8 * std::max(1.0, h.diagonal().maxCoeff());
    h.diagonal().tail(x.cols()).array() += m.ridge_penalty;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    if (ldlt.info() != Eigen::Success) {
      throw RankDeficientError("ridge fallback failed; dependent columns: " + list);
    }
    beta = ldlt.solve(a.transpose() * y);
  }
  if (!beta.allFinite()) throw NumericalError("least-squares solution is not finite");
  m.intercept = beta(0);
  m.coefficients = beta.tail(x.cols());
  const Eigen::VectorXd g = a.transpose() * (a * beta - y);
  m.final_gradient_norm = g.norm();
  return m;
}

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
  /// L2 damping on the slopes (intercept is never penalized).
  double l2 = 1e-8;
  bool warn_if_not_converged = true;
};

/// Penalized Bernoulli log-likelihood of beta (intercept first).
inline double logistic_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& beta, double l2) {
  const Eigen::VectorXd eta = a * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - detail::softplus(eta(i));
  return ll - 0.5 * l2 * beta.tail(beta.size() - 1).squaredNorm();
}

/// Maximum-likelihood logistic regression by damped Newton (IRLS) with step
/// halving. Non-convergence is reported through `converged`, not thrown.
inline FittedModel fit_logistic(const Eigen::MatrixXd& x, std::vector<std::string> labels,
                                const Eigen::VectorXd& y, LogisticOptions opts = {}) {
  detail::check_design(x, labels, y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) {
      throw DataError("logistic outcome must be 0/1; row " + std::to_string(i + 1) + " has " +
                      csv::format_double(y(i)));
    }
  }
  const Eigen::MatrixXd a = detail::with_intercept(x);
  const auto p = a.cols();
  const auto n = a.rows();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  const double rate = std::clamp(y.mean(), 1e-6, 1.0 - 1e-6);
  beta(0) = std::log(rate / (1.0 - rate));

  FittedModel m;
  m.kind = ModelKind::Logistic;
  m.trained_on = std::move(labels);
  m.converged = false;

  Eigen::VectorXd mu(n), w(n), g(p);
  Eigen::MatrixXd h(p, p);
  Eigen::MatrixXd weighted(n, p);
  double objective = logistic_objective(a, y, beta, opts.l2);
  m.objective_trace.push_back(objective);

  for (int it = 0;; ++it) {
    const Eigen::VectorXd eta = a * beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = detail::sigmoid(eta(i));
      w(i) = mu(i) * (1.0 - mu(i));
    }
    g.noalias() = a.transpose() * (y - mu);
    g.tail(p - 1) -= opts.l2 * beta.tail(p - 1);
    m.final_gradient_norm = g.norm();
    m.iterations = it;
    if (m.final_gradient_norm <= opts.gradient_tolerance) {
      m.converged = true;
      break;
    }
    if (it >= opts.max_iterations) break;

    weighted = w.cwiseSqrt().asDiagonal() * a;
    h.setZero();
    h.selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose());
    h.diagonal().tail(p - 1).array() += opts.l2;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h.selfadjointView<Eigen::Lower>());
    Eigen::VectorXd step = ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      // Hessian numerically singular (saturated weights): fall back to a
      // scaled gradient step.
      step = g / std::max(1.0, h.diagonal().maxCoeff());
    }

    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      const Eigen::VectorXd trial = beta + t * step;
      const double obj = logistic_objective(a, y, trial, opts.l2);
      // Accept ties within rounding of the objective itself.
      if (std::isfinite(obj) && obj >= objective - 1e-13 * (1.0 + std::abs(objective))) {
        beta = trial;
        objective = obj;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    m.objective_trace.push_back(objective);
  }
  if (!m.converged && opts.warn_if_not_converged) {
    log::warn("logistic regression stopped after " + std::to_string(m.iterations) +
              " iterations with gradient norm " + csv::format_double(m.final_gradient_norm));
  }
  m.intercept = beta(0);
  m.coefficients = beta.tail(p - 1);
  return m;
}

// ---------------------------------------------------------------------------
// Majority class

inline FittedModel fit_majority(const Eigen::VectorXd& y, std::vector<std::string> labels = {}) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) != 0.0 && y(i) != 1.0) throw DataError("majority baseline needs a 0/1 outcome");
  if (y.size() == 0) throw DataError("majority baseline needs data");
  FittedModel m;
  m.kind = ModelKind::MajorityClass;
  m.intercept = y.sum() * 2.0 >= static_cast<double>(y.size()) ? 1.0 : 0.0;
  m.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(labels.size()));
  m.trained_on = std::move(labels);
  return m;
}

inline Predictions predict(const FittedModel& m, const Eigen::MatrixXd& x,
                           const std::vector<std::string>& labels) {
  if (labels != m.trained_on) throw DataError("prediction columns do not match the trained columns");
  if (x.cols() != static_cast<Eigen::Index>(labels.size())) {
    throw DataError("prediction design width does not match its labels");
  }
  Predictions p;
  switch (m.kind) {
    case ModelKind::MajorityClass:
      p.values = Eigen::VectorXd::Constant(x.rows(), m.intercept);
      break;
    case ModelKind::Linear:
      p.values = (x * m.coefficients).array() + m.intercept;
      break;
    case ModelKind::Logistic:
      p.values = (x * m.coefficients).array() + m.intercept;
      for (Eigen::Index i = 0; i < p.values.size(); ++i) p.values(i) = detail::sigmoid(p.values(i));
      break;
  }
  return p;
}

inline nlohmann::ordered_json to_json(const FittedModel& m) {
  nlohmann::ordered_json coef = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < m.trained_on.size(); ++i)
    coef[m.trained_on[i]] = m.coefficients(static_cast<Eigen::Index>(i));
  nlohmann::ordered_json j = {{"kind", to_string(m.kind)},
                              {"intercept", m.intercept},
                              {"coefficients", coef},
                              {"converged", m.converged},
                              {"iterations", m.iterations},
                              {"final_gradient_norm", m.final_gradient_norm}};
  if (m.ridge_penalty > 0) {
    j["ridge_penalty"] = m.ridge_penalty;
    j["dependent_columns"] = m.dependent_columns;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Coefficient invariance

struct InvarianceReport {
  double max_abs_coeff_diff = 0.0;
  double yhat_protected_corr = 0.0;
  FittedModel full;
  FittedModel fair;
};

namespace detail {
inline double centered_abs_corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ac = a.array() - a.mean();
  const Eigen::VectorXd bc = b.array() - b.mean();
  const double den = ac.norm() * bc.norm();
  return den > 0.0 ? std::abs(ac.dot(bc)) / den : 0.0;
}
}  // namespace detail

/// Fits y on [features, protected] and y on the lambda = 0 fair features and
/// compares the feature coefficients, which agree exactly in theory. Also
/// reports the largest |corr| between the fair model's fitted values and any
/// protected column. The dataset must be centered; the classical argument
/// assumes unit variances as well, which standardize() provides.
inline InvarianceReport verify_coefficient_invariance(const Dataset& d, const ProtectedBasis& b) {
  if (!d.is_centered()) throw DataError("coefficient invariance check needs a centered dataset");
  const Eigen::MatrixXd x = d.feature_matrix();
  const Eigen::MatrixXd p = d.protected_matrix();
  const Eigen::VectorXd y = d.outcome();
  const auto feature_labels = d.labels(Role::Feature);

  Eigen::MatrixXd full_design(x.rows(), x.cols() + p.cols());
  full_design << x, p;
  auto full_labels = feature_labels;
  for (const auto& l : d.labels(Role::Protected)) full_labels.push_back(l);

  InvarianceReport r;
  r.full = fit_linear(full_design, full_labels, y);
  const auto view = debias(d, b);
  r.fair = fit_linear(view.values, feature_labels, y);
  r.max_abs_coeff_diff =
      (r.full.coefficients.head(x.cols()) - r.fair.coefficients).cwiseAbs().maxCoeff();

  const Eigen::VectorXd yhat = predict(r.fair, view.values, feature_labels).values;
  for (Eigen::Index i = 0; i < p.cols(); ++i)
    r.yhat_protected_corr = std::max(r.yhat_protected_corr, detail::centered_abs_corr(yhat, p.col(i)));
  return r;
}

/// Logistic analogue of the invariance check; no exact identity holds, so the
/// per-feature coefficient deltas are returned as a diagnostic.
inline Eigen::VectorXd logistic_coefficient_deltas(const Dataset& d, const ProtectedBasis& b) {
  if (!d.is_centered()) throw DataError("logistic coefficient comparison needs a centered dataset");
  const auto oi = static_cast<Eigen::Index>(d.outcome_index());
  Eigen::VectorXd y = d.values().col(oi) * d.column_scales()[static_cast<std::size_t>(oi)];
  y.array() += d.column_means()[static_cast<std::size_t>(oi)];
  y = y.array().round();
  const Eigen::MatrixXd x = d.feature_matrix();
  const Eigen::MatrixXd p = d.protected_matrix();
  Eigen::MatrixXd full_design(x.rows(), x.cols() + p.cols());
  full_design << x, p;
  std::vector<std::string> full_labels(static_cast<std::size_t>(full_design.cols()));
  for (std::size_t i = 0; i < full_labels.size(); ++i) full_labels[i] = "c" + std::to_string(i);
  const auto full = fit_logistic(full_design, full_labels, y);
  const auto view = debias(d, b);
  const auto fair = fit_logistic(view.values, view.source_columns, y);
  return full.coefficients.head(x.cols()) - fair.coefficients;
}

}  // namespace fairproj
