#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <thread>
#include <vector>

#include "fairproj/csv.hpp"
#include "fairproj/error.hpp"
#include "fairproj/log.hpp"
#include "fairproj/tabular.hpp"

namespace fairproj {

/// Orthonormal basis of the span of the protected columns.
///
/// `vectors` holds the basis as columns (n x rank). The n x n projector
/// sum_i v_i v_i^T is never formed. `coefficients` (n_p x rank) expresses each
/// basis vector in terms of the source protected columns, vectors = P * C,
/// which lets the same basis be evaluated on rows it was not built from.
struct ProtectedBasis {
  Eigen::MatrixXd vectors;
  Eigen::MatrixXd coefficients;
  std::vector<std::string> source_columns;
  std::vector<std::string> dropped_columns;
  double drop_tolerance = 1e-10;

  std::size_t rank() const noexcept { return static_cast<std::size_t>(vectors.cols()); }
  std::size_t rows() const noexcept { return static_cast<std::size_t>(vectors.rows()); }

  /// Basis vectors evaluated on other rows of the protected block (same
  /// columns, same centering as the rows the basis was built from).
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& protected_rows) const {
    if (protected_rows.cols() != coefficients.rows()) {
      throw DataError("protected block has " + std::to_string(protected_rows.cols()) +
                      " columns, basis was built from " + std::to_string(coefficients.rows()));
    }
    return protected_rows * coefficients;
  }
};

/// Fair representation of the feature block at one fairness level.
struct DebiasedView {
  Eigen::MatrixXd values;  ///< n x n_f
  double lambda = 0.0;
  std::vector<std::string> source_columns;
  /// |corr(column j, basis vector i)|, n_f x rank.
  Eigen::MatrixXd residual_correlations;
  /// Total component removed from feature j along basis vector i, n_f x rank.
  /// Together with ProtectedBasis::coefficients this replays the projection
  /// on new rows.
  Eigen::MatrixXd loadings;
  std::vector<std::string> zero_residual_columns;

  double max_residual_correlation() const {
    return residual_correlations.size() == 0 ? 0.0 : residual_correlations.maxCoeff();
  }
};

struct DebiasOptions {
  unsigned threads = 1;
  /// A residual shorter than this fraction of the source column is treated as
  /// zero: its correlations are undefined and reported as 0.
  double zero_residual_tolerance = 1e-10;
};

// ---------------------------------------------------------------------------
// Basis construction

/// Modified Gram-Schmidt with one full re-orthogonalization pass per column,
/// over the columns of `protected_block` in order. Columns whose residual falls
/// below drop_tolerance times their own norm are skipped.
inline ProtectedBasis build_basis(const Eigen::MatrixXd& protected_block,
                                  std::vector<std::string> labels, double drop_tolerance = 1e-10) {
  const auto n = protected_block.rows();
  const auto np = protected_block.cols();
  if (labels.size() != static_cast<std::size_t>(np)) {
    throw DataError("protected label count does not match block width");
  }
  if (np == 0) throw DataError("no protected columns to build a basis from");

  ProtectedBasis b;
  b.drop_tolerance = drop_tolerance;
  b.source_columns = labels;
  Eigen::MatrixXd q(n, std::min(n, np));
  Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(np, std::min(n, np));
  Eigen::Index rank = 0;

  Eigen::VectorXd v(n);
  Eigen::VectorXd t(np);
  for (Eigen::Index k = 0; k < np; ++k) {
    v = protected_block.col(k);
    t.setZero();
    t(k) = 1.0;
    const double norm0 = v.norm();
    if (norm0 > 0.0 && rank < n) {
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index i = 0; i < rank; ++i) {
          const double c = q.col(i).dot(v);
          v.noalias() -= c * q.col(i);
          t.noalias() -= c * coef.col(i);
        }
      }
    }
    const double norm = v.norm();
    if (norm0 == 0.0 || rank >= n || norm < drop_tolerance * norm0) {
      log::warn("protected column '" + labels[static_cast<std::size_t>(k)] +
                "' is linearly dependent on earlier protected columns; dropped from basis");
      b.dropped_columns.push_back(labels[static_cast<std::size_t>(k)]);
      continue;
    }
    q.col(rank) = v / norm;
    coef.col(rank) = t / norm;
    ++rank;
  }
  if (rank == 0) throw RankZeroBasisError("protected columns span nothing (rank 0 basis)");
  b.vectors = q.leftCols(rank);
  b.coefficients = coef.leftCols(rank);
  return b;
}

/// Basis over the protected columns of a centered dataset, in declared order.
inline ProtectedBasis build_basis(const Dataset& d, double drop_tolerance = 1e-10) {
  if (!d.is_centered()) throw DataError("build_basis needs a centered dataset");
  const auto cols = d.columns_with(Role::Protected);
  if (cols.empty()) throw DataError("dataset has no protected column");
  return build_basis(d.matrix_of(cols), d.labels(Role::Protected), drop_tolerance);
}

// ---------------------------------------------------------------------------
// Projection

namespace detail {

template <typename Fn>
void for_each_thread(unsigned threads, Eigen::Index count, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<Eigen::Index>(count, 1))));
  if (threads == 1) {
    fn(0u, 1u);
    return;
  }
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back([&, t] { fn(t, threads); });
}

inline double abs_cosine(Eigen::Ref<const Eigen::VectorXd> a, Eigen::Ref<const Eigen::VectorXd> unit) {
  const double na = a.norm();
  return na > 0.0 ? std::abs(a.dot(unit)) / na : 0.0;
}

/// Rows per block: the basis block stays cache resident while every column
/// of the thread's share streams past it.
inline Eigen::Index row_block(Eigen::Index rank) {
  return std::max<Eigen::Index>(256, 32768 / std::max<Eigen::Index>(rank, 1));
}

/// Residuals of the columns `cols` of x against the orthonormal basis v:
/// r_j = x_j - sum_i (x_j . v_i) v_i. A second pass runs for columns whose
/// residual norm fell below half the original, which keeps |r . v_i| at
/// rounding level relative to |r| even for features nearly inside the
/// protected span. Every quantity for column j is accumulated over the same
/// row blocks in the same order whichever other columns are in `cols`.
struct ResidualStats {
  Eigen::MatrixXd removed;  ///< rank x |cols|, total coefficient along each v_i
  Eigen::MatrixXd dots;     ///< rank x |cols|, v_i . r_j for the final residual
  Eigen::VectorXd x_sq, r_sq;
};

inline ResidualStats residualize(const Eigen::MatrixXd& v, const Eigen::MatrixXd& x,
                                 const std::vector<Eigen::Index>& cols, Eigen::MatrixXd& r) {
  const Eigen::Index n = x.rows(), rank = v.cols(), k = static_cast<Eigen::Index>(cols.size());
  const Eigen::Index bs = row_block(rank);
  ResidualStats st{Eigen::MatrixXd::Zero(rank, k), Eigen::MatrixXd::Zero(rank, k), Eigen::VectorXd::Zero(k),
                   Eigen::VectorXd::Zero(k)};
  for (Eigen::Index r0 = 0; r0 < n; r0 += bs) {
    const Eigen::Index len = std::min(bs, n - r0);
    const auto vb = v.middleRows(r0, len);
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto xb = x.col(cols[static_cast<std::size_t>(c)]).segment(r0, len);
      st.removed.col(c).noalias() += vb.transpose() * xb;
      st.x_sq(c) += xb.squaredNorm();
    }
  }
  for (Eigen::Index r0 = 0; r0 < n; r0 += bs) {
    const Eigen::Index len = std::min(bs, n - r0);
    const auto vb = v.middleRows(r0, len);
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto j = cols[static_cast<std::size_t>(c)];
      auto rb = r.col(j).segment(r0, len);
      rb = x.col(j).segment(r0, len);
      rb.noalias() -= vb * st.removed.col(c);
      st.dots.col(c).noalias() += vb.transpose() * rb;
      st.r_sq(c) += rb.squaredNorm();
    }
  }
  std::vector<Eigen::Index> again;
  for (Eigen::Index c = 0; c < k; ++c)
    if (st.r_sq(c) < 0.25 * st.x_sq(c)) again.push_back(c);
  if (again.empty()) return st;
  Eigen::MatrixXd second(rank, static_cast<Eigen::Index>(again.size()));
  for (std::size_t a = 0; a < again.size(); ++a) {
    const auto c = again[a];
    second.col(static_cast<Eigen::Index>(a)) = st.dots.col(c);
    st.removed.col(c) += st.dots.col(c);
    st.dots.col(c).setZero();
    st.r_sq(c) = 0.0;
  }
  for (Eigen::Index r0 = 0; r0 < n; r0 += bs) {
    const Eigen::Index len = std::min(bs, n - r0);
    const auto vb = v.middleRows(r0, len);
    for (std::size_t a = 0; a < again.size(); ++a) {
      const auto c = again[a];
      auto rb = r.col(cols[static_cast<std::size_t>(c)]).segment(r0, len);
      rb.noalias() -= vb * second.col(static_cast<Eigen::Index>(a));
      st.dots.col(c).noalias() += vb.transpose() * rb;
      st.r_sq(c) += rb.squaredNorm();
    }
  }
  return st;
}

}  // namespace detail

/// Fair representation at lambda = 0: every feature column with its
/// component in the protected span removed. Work is independent per column;
/// threads split the columns and the result does not depend on how.
inline DebiasedView debias(const Eigen::MatrixXd& features, std::vector<std::string> labels,
                           const ProtectedBasis& b, DebiasOptions opts = {}) {
  if (features.rows() != b.vectors.rows()) {
    throw DataError("feature block has " + std::to_string(features.rows()) +
                    " rows, basis has " + std::to_string(b.vectors.rows()));
  }
  if (labels.size() != static_cast<std::size_t>(features.cols())) {
    throw DataError("feature label count does not match block width");
  }
  const auto nf = features.cols();
  const auto rank = b.vectors.cols();
  DebiasedView view;
  view.lambda = 0.0;
  view.source_columns = std::move(labels);
  view.values.resize(features.rows(), nf);
  view.loadings = Eigen::MatrixXd::Zero(nf, rank);
  view.residual_correlations = Eigen::MatrixXd::Zero(nf, rank);
  std::vector<char> zero(static_cast<std::size_t>(nf), 0);

  detail::for_each_thread(opts.threads, nf, [&](unsigned t, unsigned stride) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = t; j < nf; j += stride) cols.push_back(j);
    const auto st = detail::residualize(b.vectors, features, cols, view.values);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto j = cols[c];
      const auto ci = static_cast<Eigen::Index>(c);
      view.loadings.row(j) = st.removed.col(ci).transpose();
      const double xn = std::sqrt(st.x_sq(ci));
      const double rn = std::sqrt(st.r_sq(ci));
      if (rn <= opts.zero_residual_tolerance * xn || rn == 0.0) {
        zero[static_cast<std::size_t>(j)] = 1;
        continue;
      }
      // basis vectors have unit norm
      view.residual_correlations.row(j) = st.dots.col(ci).cwiseAbs().transpose() / rn;
    }
  });

  for (Eigen::Index j = 0; j < nf; ++j) {
    if (!zero[static_cast<std::size_t>(j)]) continue;
    view.zero_residual_columns.push_back(view.source_columns[static_cast<std::size_t>(j)]);
    log::warn("feature '" + view.source_columns[static_cast<std::size_t>(j)] +
              "' lies inside the protected span; its fair representation is zero");
  }
  return view;
}

inline DebiasedView debias(const Dataset& d, const ProtectedBasis& b, DebiasOptions opts = {}) {
  if (!d.is_centered()) throw DataError("debias needs a centered dataset");
  if (d.rows() != b.rows()) {
    throw DataError("dataset has " + std::to_string(d.rows()) + " rows, basis has " +
                    std::to_string(b.rows()));
  }
  return debias(d.feature_matrix(), d.labels(Role::Feature), b, opts);
}

/// Fairness-level interpolation r'(lambda) = r + lambda (x - r), evaluated as
/// (1 - lambda) r + lambda x so both endpoints are reproduced exactly.
inline Eigen::MatrixXd blend(const Eigen::MatrixXd& residual, const Eigen::MatrixXd& original,
                             double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw DataError("fairness level lambda must lie in [0, 1], got " + csv::format_double(lambda));
  }
  if (lambda == 0.0) return residual;
  if (lambda == 1.0) return original;
  return (1.0 - lambda) * residual + lambda * original;
}

inline DebiasedView interpolate(const DebiasedView& view0, const Dataset& d, double lambda,
                                const ProtectedBasis* basis = nullptr) {
  if (view0.lambda != 0.0) throw DataError("interpolate expects the lambda = 0 view");
  const auto x = d.feature_matrix();
  if (x.rows() != view0.values.rows() || x.cols() != view0.values.cols()) {
    throw DataError("dataset feature block does not match the view");
  }
  DebiasedView out = view0;
  out.values = blend(view0.values, x, lambda);
  out.lambda = lambda;
  if (basis != nullptr && lambda != 0.0) {
    for (Eigen::Index j = 0; j < out.values.cols(); ++j)
      for (Eigen::Index i = 0; i < out.residual_correlations.cols(); ++i)
        out.residual_correlations(j, i) = detail::abs_cosine(out.values.col(j), basis->vectors.col(i));
  }
  return out;
}

/// Fair version of the outcome column.
inline Eigen::VectorXd debias_outcome(const Dataset& d, const ProtectedBasis& b) {
  if (!d.is_centered()) throw DataError("debias_outcome needs a centered dataset");
  if (d.rows() != b.rows()) throw DataError("dataset and basis row counts differ");
  const Eigen::MatrixXd y = d.outcome();
  Eigen::MatrixXd r(y.rows(), 1);
  detail::residualize(b.vectors, y, {0}, r);
  return r.col(0);
}

/// Replays a fitted projection on other rows (e.g. a test split centered with
/// the training statistics). Returns the fair features at `lambda`.
inline Eigen::MatrixXd project_rows(const ProtectedBasis& b, const DebiasedView& view0,
                                    const Eigen::MatrixXd& features,
                                    const Eigen::MatrixXd& protected_rows, double lambda) {
  if (features.cols() != view0.loadings.rows()) {
    throw DataError("feature block width does not match the fitted view");
  }
  if (features.rows() != protected_rows.rows()) throw DataError("row count mismatch");
  const Eigen::MatrixXd basis_rows = b.evaluate(protected_rows);
  const Eigen::MatrixXd residual = features - basis_rows * view0.loadings.transpose();
  return blend(residual, features, lambda);
}

inline Eigen::MatrixXd project_rows(const ProtectedBasis& b, const DebiasedView& view0,
                                    const Dataset& other, double lambda) {
  if (other.labels(Role::Feature) != view0.source_columns) {
    throw DataError("dataset feature columns differ from the fitted view");
  }
  if (other.labels(Role::Protected) != b.source_columns) {
    throw DataError("dataset protected columns differ from the basis");
  }
  return project_rows(b, view0, other.feature_matrix(), other.protected_matrix(), lambda);
}

/// Mean over features of corr(fair column, original column); columns whose
/// fair version is zero are skipped. Inputs must be centered.
inline double mean_feature_correlation(const DebiasedView& view, const Eigen::MatrixXd& original) {
  double total = 0.0;
  int count = 0;
  for (Eigen::Index j = 0; j < view.values.cols(); ++j) {
    const double rn = view.values.col(j).norm();
    const double xn = original.col(j).norm();
    if (rn == 0.0 || xn == 0.0) continue;
    if (std::find(view.zero_residual_columns.begin(), view.zero_residual_columns.end(),
                  view.source_columns[static_cast<std::size_t>(j)]) != view.zero_residual_columns.end())
      continue;
    total += view.values.col(j).dot(original.col(j)) / (rn * xn);
    ++count;
  }
  return count ? total / count : 0.0;
}

// ---------------------------------------------------------------------------
// Export

/// Debiased CSV: fair feature columns (header + suffix) followed by the
/// protected and outcome columns as they appear in the centered dataset.
inline void write_view_csv(const DebiasedView& view, const Dataset& d, const std::string& path,
                           const std::string& suffix = "") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  const auto others = [&] {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < d.cols(); ++j)
      if (d.role(j).role != Role::Feature) idx.push_back(j);
    return idx;
  }();
  csv::Record header;
  for (const auto& c : view.source_columns) header.push_back(c + suffix);
  for (auto j : others) header.push_back(d.name(j));
  csv::write_record(out, header);
  csv::Record rec(header.size());
  for (Eigen::Index i = 0; i < view.values.rows(); ++i) {
    std::size_t k = 0;
    for (Eigen::Index j = 0; j < view.values.cols(); ++j) rec[k++] = csv::format_double(view.values(i, j));
    for (auto j : others) rec[k++] = csv::format_double(d.values()(i, static_cast<Eigen::Index>(j)));
    csv::write_record(out, rec);
  }
}

inline nlohmann::ordered_json sidecar_json(const DebiasedView& view, const ProtectedBasis& b,
                                   double wall_clock_ms) {
  return {{"lambda", view.lambda},
          {"basis_rank", b.rank()},
          {"dropped_columns", b.dropped_columns},
          {"zero_residual_columns", view.zero_residual_columns},
          {"max_residual_correlation", view.max_residual_correlation()},
          {"wall_clock_ms", wall_clock_ms}};
}

}  // namespace fairproj
