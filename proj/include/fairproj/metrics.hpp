#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "fairproj/error.hpp"
#include "fairproj/log.hpp"
#include "fairproj/models.hpp"
#include "fairproj/rng.hpp"

namespace fairproj {

using VecRef = Eigen::Ref<const Eigen::VectorXd>;

namespace detail {

inline void require_same_length(VecRef a, VecRef b, const char* what) {
  if (a.size() != b.size()) {
    throw DataError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  }
}

inline void require_binary(VecRef v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v(i) != 0.0 && v(i) != 1.0) {
      throw DataError(std::string(what) + " must be 0/1; element " + std::to_string(i) + " is " +
                      csv::format_double(v(i)));
    }
  }
}

}  // namespace detail

/// Pearson correlation. Throws ZeroVarianceError when either input is constant.
inline double pearson(VecRef a, VecRef b) {
  detail::require_same_length(a, b, "pearson");
  if (a.size() < 2) throw DataError("pearson needs at least two observations");
  const Eigen::VectorXd ac = a.array() - a.mean();
  const Eigen::VectorXd bc = b.array() - b.mean();
  const double na = ac.norm();
  const double nb = bc.norm();
  if (na == 0.0 || nb == 0.0) throw ZeroVarianceError("pearson correlation of a constant vector");
  return ac.dot(bc) / (na * nb);
}

/// |P(yhat = 1 | p1 = 0) - P(yhat = 1 | p1 = 1)| for binary predictions.
inline double discrimination(VecRef yhat_bin, VecRef p1) {
  detail::require_same_length(yhat_bin, p1, "discrimination");
  detail::require_binary(yhat_bin, "binary predictions");
  detail::require_binary(p1, "protected column");
  std::array<double, 2> pos{0, 0}, count{0, 0};
  for (Eigen::Index i = 0; i < p1.size(); ++i) {
    const auto g = static_cast<std::size_t>(p1(i));
    count[g] += 1;
    pos[g] += yhat_bin(i);
  }
  if (count[0] == 0 || count[1] == 0) throw DataError("discrimination: a protected group is empty");
  return std::abs(pos[0] / count[0] - pos[1] / count[1]);
}

struct Balance {
  double negative = 0.0;  ///< |mean yhat(p1=0, y=0) - mean yhat(p1=1, y=0)|
  double positive = 0.0;  ///< same for y = 1
};

inline Balance balance(VecRef yhat_real, VecRef y, VecRef p1) {
  detail::require_same_length(yhat_real, y, "balance");
  detail::require_same_length(yhat_real, p1, "balance");
  detail::require_binary(y, "outcome");
  detail::require_binary(p1, "protected column");
  double sum[2][2] = {{0, 0}, {0, 0}};
  double cnt[2][2] = {{0, 0}, {0, 0}};
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const auto g = static_cast<std::size_t>(p1(i));
    const auto c = static_cast<std::size_t>(y(i));
    sum[g][c] += yhat_real(i);
    cnt[g][c] += 1;
  }
  for (int g = 0; g < 2; ++g)
    for (int c = 0; c < 2; ++c)
      if (cnt[g][c] == 0) {
        throw DataError("balance: cell (p1=" + std::to_string(g) + ", y=" + std::to_string(c) +
                        ") is empty");
      }
  return {std::abs(sum[0][0] / cnt[0][0] - sum[1][0] / cnt[1][0]),
          std::abs(sum[0][1] / cnt[0][1] - sum[1][1] / cnt[1][1])};
}

inline constexpr double kProbabilityClamp = 1e-12;

/// Mean negative Bernoulli log-likelihood; predictions are clamped into
/// [1e-12, 1 - 1e-12] first.
inline double calibration_nll(VecRef yhat_real, VecRef y) {
  detail::require_same_length(yhat_real, y, "calibration_nll");
  detail::require_binary(y, "outcome");
  if (y.size() == 0) throw DataError("calibration_nll needs data");
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double p = std::clamp(yhat_real(i), kProbabilityClamp, 1.0 - kProbabilityClamp);
    total += y(i) == 1.0 ? std::log(p) : std::log1p(-p);
  }
  return -total / static_cast<double>(y.size());
}

inline double accuracy(VecRef yhat_bin, VecRef y) {
  detail::require_same_length(yhat_bin, y, "accuracy");
  if (y.size() == 0) throw DataError("accuracy needs data");
  return (yhat_bin.array() == y.array()).cast<double>().mean();
}

// ---------------------------------------------------------------------------
// Discriminator accuracy

struct AccP {
  double acc_p = 0.0;     ///< better of the two held-out accuracies
  double baseline = 0.0;  ///< majority-class rate of p1
  double histogram = 0.0;
  double logistic = 0.0;
};

namespace detail {

inline int bin_of(double v, double lo, double hi, int bins) {
  if (!(hi > lo)) return 0;
  const double pos = (v - lo) / (hi - lo) * bins;
  return std::clamp(static_cast<int>(std::floor(pos)), 0, bins - 1);
}

}  // namespace detail

/// How well the protected attribute can be recovered from the predictions.
///
/// Two discriminators run under `folds`-fold cross-validation: a histogram
/// Bayes classifier (equal-width bins over the training range, predicting
/// argmax_c P(R | p1 = c) P(p1 = c)) and a logistic regression of p1 on yhat.
/// The larger mean held-out accuracy is returned.
inline AccP acc_p(VecRef yhat_real, VecRef p1, int folds = 5, int bins = 10,
                  std::uint64_t seed = 0) {
  detail::require_same_length(yhat_real, p1, "acc_p");
  detail::require_binary(p1, "protected column");
  if (folds < 2) throw DataError("acc_p needs at least 2 folds");
  if (bins < 1) throw DataError("acc_p needs at least 1 bin");
  const auto n = static_cast<std::size_t>(p1.size());
  if (n < static_cast<std::size_t>(10 * folds)) {
    throw DataError("acc_p needs at least " + std::to_string(10 * folds) + " rows");
  }
  const double ones = p1.sum();
  if (ones == 0.0 || ones == static_cast<double>(n)) {
    throw DataError("acc_p: protected column has a single class");
  }

  AccP out;
  out.baseline = std::max(ones, static_cast<double>(n) - ones) / static_cast<double>(n);

  const auto perm = shuffled_indices(n, seed, 0xACC9);
  const auto k = static_cast<std::size_t>(folds);
  double hist_total = 0.0, logit_total = 0.0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t lo = f * n / k, hi = (f + 1) * n / k;
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (i >= lo && i < hi ? test : train).push_back(perm[i]);

    double ymin = std::numeric_limits<double>::infinity();
    double ymax = -ymin;
    double train_ones = 0.0;
    for (auto i : train) {
      ymin = std::min(ymin, yhat_real(static_cast<Eigen::Index>(i)));
      ymax = std::max(ymax, yhat_real(static_cast<Eigen::Index>(i)));
      train_ones += p1(static_cast<Eigen::Index>(i));
    }
    const double majority = train_ones * 2.0 >= static_cast<double>(train.size()) ? 1.0 : 0.0;

    std::vector<std::array<double, 2>> counts(static_cast<std::size_t>(bins), {0.0, 0.0});
    for (auto i : train) {
      const auto b = detail::bin_of(yhat_real(static_cast<Eigen::Index>(i)), ymin, ymax, bins);
      counts[static_cast<std::size_t>(b)][static_cast<std::size_t>(p1(static_cast<Eigen::Index>(i)))] += 1;
    }
    double hist_hits = 0.0;
    for (auto i : test) {
      const auto b = detail::bin_of(yhat_real(static_cast<Eigen::Index>(i)), ymin, ymax, bins);
      const auto& c = counts[static_cast<std::size_t>(b)];
      const double guess = c[1] > c[0] ? 1.0 : (c[0] > c[1] ? 0.0 : majority);
      hist_hits += guess == p1(static_cast<Eigen::Index>(i)) ? 1.0 : 0.0;
    }
    hist_total += hist_hits / static_cast<double>(test.size());

    // Logistic discriminator on the standardized score.
    double mean = 0.0;
    for (auto i : train) mean += yhat_real(static_cast<Eigen::Index>(i));
    mean /= static_cast<double>(train.size());
    double var = 0.0;
    for (auto i : train) var += std::pow(yhat_real(static_cast<Eigen::Index>(i)) - mean, 2);
    const double sd = var > 0.0 ? std::sqrt(var / static_cast<double>(train.size())) : 1.0;
    Eigen::MatrixXd xt(static_cast<Eigen::Index>(train.size()), 1);
    Eigen::VectorXd yt(static_cast<Eigen::Index>(train.size()));
    for (std::size_t r = 0; r < train.size(); ++r) {
      xt(static_cast<Eigen::Index>(r), 0) = (yhat_real(static_cast<Eigen::Index>(train[r])) - mean) / sd;
      yt(static_cast<Eigen::Index>(r)) = p1(static_cast<Eigen::Index>(train[r]));
    }
    // Perfectly separable scores never converge; the direction is still right.
    const auto disc = fit_logistic(xt, {"yhat"}, yt, {.warn_if_not_converged = false});
    double logit_hits = 0.0;
    for (auto i : test) {
      const double z = disc.intercept +
                       disc.coefficients(0) * (yhat_real(static_cast<Eigen::Index>(i)) - mean) / sd;
      const double guess = z > 0.0 ? 1.0 : 0.0;
      logit_hits += guess == p1(static_cast<Eigen::Index>(i)) ? 1.0 : 0.0;
    }
    logit_total += logit_hits / static_cast<double>(test.size());
  }
  out.histogram = hist_total / static_cast<double>(k);
  out.logistic = logit_total / static_cast<double>(k);
  out.acc_p = std::max(out.histogram, out.logistic);
  return out;
}

// ---------------------------------------------------------------------------
// Report

inline constexpr const char* kDiscriminatorNote =
    "acc_p discriminators: equal-width histogram Bayes + logistic regression";

struct MetricsReport {
  double acc_y = 0.0;
  std::vector<std::string> protected_columns;
  std::vector<double> pearson_corr_yp;
  double max_abs_corr = 0.0;
  std::string designated_protected;
  double discrimination = 0.0;
  double balance_neg = 0.0;
  double balance_pos = 0.0;
  double neg_log_likelihood = 0.0;
  double acc_p = 0.0;
  double acc_p_baseline = 0.0;
  double acc_p_histogram = 0.0;
  double acc_p_logistic = 0.0;
  std::optional<double> lambda;
  std::string model_id;
  std::string split_id;
  std::uint64_t seed = 0;
};

struct EvaluateOptions {
  int acc_p_folds = 5;
  int acc_p_bins = 10;
  std::uint64_t seed = 0;
};

/// Scores real-valued predictions. `protected_cols` holds the raw protected
/// columns (one per name); `designated` selects the binary column used for
/// discrimination, balance and acc_p.
inline MetricsReport evaluate(VecRef yhat_real, VecRef y, const Eigen::MatrixXd& protected_cols,
                              const std::vector<std::string>& protected_names, std::size_t designated,
                              const EvaluateOptions& opts = {}) {
  detail::require_same_length(yhat_real, y, "evaluate");
  if (protected_cols.rows() != y.size() ||
      protected_cols.cols() != static_cast<Eigen::Index>(protected_names.size())) {
    throw DataError("evaluate: protected block shape mismatch");
  }
  if (designated >= protected_names.size()) throw DataError("evaluate: designated protected index out of range");

  MetricsReport r;
  r.seed = opts.seed;
  r.protected_columns = protected_names;
  r.designated_protected = protected_names[designated];
  const Predictions real{yhat_real, Predictions::Kind::RealValued};
  const Eigen::VectorXd bin = real.binarize().values;
  r.acc_y = accuracy(bin, y);
  for (Eigen::Index i = 0; i < protected_cols.cols(); ++i) {
    double c = 0.0;
    try {
      c = pearson(yhat_real, protected_cols.col(i));
    } catch (const ZeroVarianceError&) {
      log::warn("constant predictions or protected column '" + protected_names[static_cast<std::size_t>(i)] +
                "': correlation reported as 0");
    }
    r.pearson_corr_yp.push_back(c);
    r.max_abs_corr = std::max(r.max_abs_corr, std::abs(c));
  }
  const Eigen::VectorXd p1 = protected_cols.col(static_cast<Eigen::Index>(designated));
  r.discrimination = discrimination(bin, p1);
  const auto bal = balance(yhat_real, y, p1);
  r.balance_neg = bal.negative;
  r.balance_pos = bal.positive;
  r.neg_log_likelihood = calibration_nll(yhat_real, y);
  const auto ap = acc_p(yhat_real, p1, opts.acc_p_folds, opts.acc_p_bins, opts.seed);
  r.acc_p = ap.acc_p;
  r.acc_p_baseline = ap.baseline;
  r.acc_p_histogram = ap.histogram;
  r.acc_p_logistic = ap.logistic;
  return r;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json corr = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < r.protected_columns.size(); ++i) corr[r.protected_columns[i]] = r.pearson_corr_yp[i];
  nlohmann::ordered_json j = {
      {"model_id", r.model_id},
      {"split_id", r.split_id},
      {"lambda", r.lambda ? nlohmann::ordered_json(*r.lambda) : nlohmann::ordered_json(nullptr)},
      {"seed", r.seed},
      {"acc_y", r.acc_y},
      {"pearson_corr_yp", corr},
      {"max_abs_corr", r.max_abs_corr},
      {"designated_protected", r.designated_protected},
      {"discrimination", r.discrimination},
      {"balance_neg", r.balance_neg},
      {"balance_pos", r.balance_pos},
      {"neg_log_likelihood", r.neg_log_likelihood},
      {"acc_p", r.acc_p},
      {"acc_p_baseline", r.acc_p_baseline},
      {"acc_p_histogram", r.acc_p_histogram},
      {"acc_p_logistic", r.acc_p_logistic},
      {"acc_p_method", kDiscriminatorNote}};
  return j;
}

}  // namespace fairproj
