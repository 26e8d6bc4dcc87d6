#include <gtest/gtest.h>

#include <fstream>
#include <numeric>

#include "helpers.hpp"

using namespace fairproj;
using testing_helpers::CaptureLog;
using testing_helpers::gaussian;

namespace {

const ColumnRole F{Role::Feature}, P{Role::Protected}, Y{Role::Outcome};

/// Reference projector from Householder QR: r = x - Q Q^T x.
Eigen::MatrixXd qr_residual(const Eigen::MatrixXd& p, const Eigen::MatrixXd& x) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(p);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(p.rows(), p.cols());
  return x - q * (q.transpose() * x);
}

Dataset centered_three(const Eigen::Vector3d& x, const Eigen::Vector3d& p) {
  Eigen::MatrixXd v(3, 3);
  v << x, p, Eigen::Vector3d(0, 1, 0);
  return center(Dataset(v, {"x", "p", "y"}, {F, P, Y}), {.center_outcome = false});
}

}  // namespace

// --- basis -------------------------------------------------------------------

TEST(Basis, HandNormalization) {
  Eigen::MatrixXd p(3, 1);
  p << 1, 0, -1;
  const auto b = build_basis(p, {"p"});
  ASSERT_EQ(b.rank(), 1u);
  const double h = 1.0 / std::sqrt(2.0);
  // sign is fixed by the source column
  EXPECT_NEAR(b.vectors(0, 0), h, 1e-15);
  EXPECT_NEAR(b.vectors(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(b.vectors(2, 0), -h, 1e-15);
}

TEST(Basis, IdenticalColumnsDropped) {
  std::mt19937_64 g(1);
  Eigen::MatrixXd p(20, 2);
  p.col(0) = gaussian(g, 20, 1);
  p.col(1) = p.col(0);
  CaptureLog log;
  const auto b = build_basis(p, {"a", "b"});
  EXPECT_EQ(b.rank(), 1u);
  EXPECT_EQ(b.dropped_columns, std::vector<std::string>{"b"});
  EXPECT_EQ(log.warnings.size(), 1u);
}

TEST(Basis, OrthonormalInputIsFixedPoint) {
  Eigen::MatrixXd p(4, 2);
  p << 0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5;
  const auto b = build_basis(p, {"a", "b"});
  EXPECT_LE((b.vectors - p).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Basis, RankZeroThrows) {
  CaptureLog log;
  EXPECT_THROW(build_basis(Eigen::MatrixXd::Zero(5, 2), {"a", "b"}), RankZeroBasisError);
}

TEST(Basis, RequiresCenteredDataset) {
  std::mt19937_64 g(2);
  const auto d = testing_helpers::correlated_dataset(g, 30, 2, 1);
  EXPECT_THROW(build_basis(d), DataError);
  EXPECT_NO_THROW(build_basis(center(d)));
}

TEST(Basis, OrthonormalityAndCoefficientsOnRandomBlocks) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 30 + trial, np = 1 + trial % 5;
    Eigen::MatrixXd p = gaussian(g, n, np);
    if (np > 2) p.col(2) = 0.999999 * p.col(0) + 1e-3 * p.col(1);  // ill-conditioned
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < np; ++j) names.push_back("p" + std::to_string(j));
    const auto b = build_basis(p, names);
    const Eigen::MatrixXd gram = b.vectors.transpose() * b.vectors;
    const auto r = static_cast<Eigen::Index>(b.rank());
    EXPECT_LE(b.rank(), static_cast<std::size_t>(np));
    for (Eigen::Index i = 0; i < r; ++i) {
      EXPECT_NEAR(gram(i, i), 1.0, 1e-12);
      for (Eigen::Index k = 0; k < r; ++k)
        if (k != i) {
          EXPECT_LE(std::abs(gram(i, k)), 1e-10);
        }
    }
    // vectors = P C
    EXPECT_LE((p * b.coefficients - b.vectors).cwiseAbs().maxCoeff(), 1e-8);
  }
}

// --- debias ------------------------------------------------------------------

TEST(Debias, HandArithmetic) {
  const auto d = centered_three({1, 2, 4}, {1, 0, -1});
  EXPECT_NEAR(d.values()(0, 0), -4.0 / 3, 1e-15);
  const auto b = build_basis(d);
  const auto v = debias(d, b);
  EXPECT_NEAR(v.values(0, 0), 1.0 / 6, 1e-15);
  EXPECT_NEAR(v.values(1, 0), -1.0 / 3, 1e-15);
  EXPECT_NEAR(v.values(2, 0), 1.0 / 6, 1e-15);
  EXPECT_NEAR(v.values.col(0).dot(d.protected_matrix().col(0)), 0.0, 1e-15);

  const auto half = interpolate(v, d, 0.5);
  EXPECT_NEAR(half.values(0, 0), -7.0 / 12, 1e-15);
  EXPECT_NEAR(half.values(1, 0), -1.0 / 3, 1e-15);
  EXPECT_NEAR(half.values(2, 0), 11.0 / 12, 1e-15);
}

TEST(Debias, OrthogonalFeatureUnchanged) {
  Eigen::MatrixXd x(3, 1), p(3, 1);
  x << 1, -2, 1;
  p << 1, 0, -1;
  const auto b = build_basis(p, {"p"});
  const auto v = debias(x, {"x"}, b);
  EXPECT_EQ(v.values, x);
}

TEST(Debias, FeatureInsideSpanBecomesZero) {
  std::mt19937_64 g(4);
  const Eigen::MatrixXd p = gaussian(g, 25, 2);
  const auto b = build_basis(p, {"a", "b"});
  CaptureLog log;
  const auto v = debias(b.vectors.col(0), {"x"}, b);
  EXPECT_LE(v.values.norm(), 1e-15);
  EXPECT_EQ(v.zero_residual_columns, std::vector<std::string>{"x"});
  EXPECT_EQ(v.max_residual_correlation(), 0.0);
  EXPECT_EQ(log.warnings.size(), 1u);
}

TEST(Debias, MatchesHouseholderOracleAndProperties) {
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index n = 50 + 7 * trial, nf = 2 + trial % 6, np = 1 + trial % 3;
    const auto d = center(testing_helpers::correlated_dataset(g, n, nf, np));
    const auto b = build_basis(d);
    const auto v = debias(d, b);
    const Eigen::MatrixXd x = d.feature_matrix();
    const Eigen::MatrixXd ref = qr_residual(d.protected_matrix(), x);
    EXPECT_LE((v.values - ref).cwiseAbs().maxCoeff(), 1e-10 * x.cwiseAbs().maxCoeff());

    // orthogonality, measured as correlation with every basis vector
    for (Eigen::Index j = 0; j < nf; ++j)
      for (Eigen::Index i = 0; i < b.vectors.cols(); ++i)
        EXPECT_LE(std::abs(testing_helpers::naive_corr(v.values.col(j), b.vectors.col(i))), 1e-10);
    EXPECT_LE(v.max_residual_correlation(), 1e-10);

    // idempotence
    const auto twice = debias(v.values, v.source_columns, b);
    EXPECT_LE((twice.values - v.values).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + v.values.cwiseAbs().maxCoeff()));

    // norm non-increase
    for (Eigen::Index j = 0; j < nf; ++j) EXPECT_LE(v.values.col(j).norm(), x.col(j).norm() * (1 + 1e-15));

    // linearity
    const double alpha = 1.7, beta = -0.3;
    Eigen::MatrixXd combo(n, 1);
    combo.col(0) = alpha * x.col(0) + beta * x.col(1);
    const auto lin = debias(combo, {"c"}, b);
    const Eigen::VectorXd expect = alpha * v.values.col(0) + beta * v.values.col(1);
    EXPECT_LE((lin.values.col(0) - expect).norm(), 1e-10 * expect.norm());

    // endpoints
    EXPECT_EQ(interpolate(v, d, 1.0).values, x);
    EXPECT_EQ(interpolate(v, d, 0.0).values, v.values);
  }
}

TEST(Debias, BinaryProtectedGroupMeansEqual) {
  std::mt19937_64 g(6);
  const auto raw = testing_helpers::correlated_dataset(g, 400, 4, 1, false, true);
  const auto d = center(raw);
  const auto v = debias(d, build_basis(d));
  const Eigen::VectorXd p = raw.protected_matrix().col(0);
  for (Eigen::Index j = 0; j < v.values.cols(); ++j) {
    double s0 = 0, s1 = 0, n0 = 0, n1 = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      (p(i) == 1.0 ? s1 : s0) += v.values(i, j);
      (p(i) == 1.0 ? n1 : n0) += 1;
    }
    EXPECT_NEAR(s0 / n0, s1 / n1, 1e-10);
  }
}

TEST(Debias, ThreadedMatchesSequential) {
  std::mt19937_64 g(7);
  const auto d = center(testing_helpers::correlated_dataset(g, 500, 13, 3));
  const auto b = build_basis(d);
  const auto one = debias(d, b, {.threads = 1});
  const auto four = debias(d, b, {.threads = 4});
  EXPECT_EQ(one.values, four.values);
  EXPECT_EQ(one.loadings, four.loadings);
}

TEST(Debias, RejectsBadInput) {
  std::mt19937_64 g(8);
  const auto raw = testing_helpers::correlated_dataset(g, 30, 2, 1);
  const auto d = center(raw);
  const auto b = build_basis(d);
  EXPECT_THROW(debias(raw, b), DataError);
  EXPECT_THROW(debias(Eigen::MatrixXd::Zero(29, 2), {"a", "b"}, b), DataError);
  const auto v = debias(d, b);
  EXPECT_THROW(interpolate(v, d, 1.5), DataError);
  EXPECT_THROW(interpolate(v, d, -0.1), DataError);
  EXPECT_THROW(interpolate(interpolate(v, d, 0.5), d, 0.2), DataError);
}

TEST(DebiasOutcome, Cases) {
  std::mt19937_64 g(9);
  const Eigen::Index n = 40;
  Eigen::MatrixXd p = gaussian(g, n, 1);
  p.array() -= p.mean();
  const auto b = build_basis(p, {"p"});
  auto make = [&](const Eigen::VectorXd& y) {
    Eigen::MatrixXd v(n, 3);
    v << gaussian(g, n, 1), p, y;
    // zero-mean columns, so centering only flips the flag
    Eigen::MatrixXd c = v.rowwise() - v.colwise().mean();
    return center(Dataset(c, {"x", "p", "y"}, {F, P, Y}));
  };
  Eigen::VectorXd z = gaussian(g, n, 1);
  z.array() -= z.mean();
  z -= b.vectors.col(0) * b.vectors.col(0).dot(z);
  {
    const auto d = make(z);
    EXPECT_LE((debias_outcome(d, build_basis(d)) - d.outcome()).norm(), 1e-12);
  }
  {
    const auto d = make(b.vectors.col(0));
    EXPECT_LE(debias_outcome(d, build_basis(d)).norm(), 1e-14);
  }
  {
    const auto d = make(b.vectors.col(0) + z);
    EXPECT_LE((debias_outcome(d, build_basis(d)) - d.outcome() + b.vectors.col(0)).norm(), 1e-12);
  }
}

// --- out-of-sample replay ----------------------------------------------------

TEST(ProjectRows, TrainingRowsReproduceView) {
  std::mt19937_64 g(10);
  const auto d = center(testing_helpers::correlated_dataset(g, 200, 5, 2));
  const auto b = build_basis(d);
  const auto v = debias(d, b);
  for (double lambda : {0.0, 0.3, 1.0}) {
    const Eigen::MatrixXd r = project_rows(b, v, d, lambda);
    const Eigen::MatrixXd expect = blend(v.values, d.feature_matrix(), lambda);
    EXPECT_LE((r - expect).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ProjectRows, MatchesRegressionOracleOnNewRows) {
  // Removing the protected span from training features equals subtracting the
  // least-squares fit of each feature on the protected columns; the same
  // coefficients apply to unseen rows.
  std::mt19937_64 g(11);
  const auto raw = testing_helpers::correlated_dataset(g, 300, 4, 3);
  std::vector<std::size_t> tr(200), te(100);
  std::iota(tr.begin(), tr.end(), 0);
  std::iota(te.begin(), te.end(), 200);
  const auto stats = fit_centering(raw.select_rows(tr));
  const auto train = apply_centering(raw.select_rows(tr), stats);
  const auto test = apply_centering(raw.select_rows(te), stats);
  const auto b = build_basis(train);
  const auto v = debias(train, b);
  const Eigen::MatrixXd coef = train.protected_matrix().colPivHouseholderQr().solve(train.feature_matrix());
  const Eigen::MatrixXd expect = test.feature_matrix() - test.protected_matrix() * coef;
  EXPECT_LE((project_rows(b, v, test, 0.0) - expect).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(project_rows(b, v, test, 1.0), test.feature_matrix());
}

TEST(ProjectRows, RejectsMismatchedColumns) {
  std::mt19937_64 g(12);
  const auto d = center(testing_helpers::correlated_dataset(g, 50, 3, 1));
  const auto other = center(testing_helpers::correlated_dataset(g, 50, 2, 1));
  const auto b = build_basis(d);
  const auto v = debias(d, b);
  EXPECT_THROW(project_rows(b, v, other, 0.0), DataError);
}

// --- diagnostics and export --------------------------------------------------

TEST(Fidelity, MeanFeatureCorrelation) {
  std::mt19937_64 g(13);
  const auto d = center(testing_helpers::correlated_dataset(g, 300, 3, 1));
  const auto v = debias(d, build_basis(d));
  const Eigen::MatrixXd x = d.feature_matrix();
  double expect = 0;
  for (Eigen::Index j = 0; j < 3; ++j) expect += testing_helpers::naive_corr(v.values.col(j), x.col(j)) / 3;
  EXPECT_NEAR(mean_feature_correlation(v, x), expect, 1e-12);
  EXPECT_NEAR(mean_feature_correlation(interpolate(v, d, 1.0), x), 1.0, 1e-12);
}

TEST(Export, CsvAndSidecar) {
  std::mt19937_64 g(14);
  const auto d = center(testing_helpers::correlated_dataset(g, 20, 2, 1));
  const auto b = build_basis(d);
  const auto v = debias(d, b);
  const auto dir = testing_helpers::temp_dir("export");
  const auto path = (dir / "fair.csv").string();
  write_view_csv(v, d, path, "_fair");
  const auto recs = csv::read(path);
  ASSERT_EQ(recs.size(), 21u);
  EXPECT_EQ(recs[0], (csv::Record{"x0_fair", "x1_fair", "p0", "y"}));
  double val = 0;
  ASSERT_EQ(csv::parse_double(recs[5][1], val), csv::ParseStatus::Ok);
  EXPECT_EQ(val, v.values(4, 1));
  const auto j = sidecar_json(v, b, 1.5);
  EXPECT_EQ(j["basis_rank"], 1);
  EXPECT_EQ(j["lambda"], 0.0);
  EXPECT_LE(j["max_residual_correlation"].get<double>(), 1e-10);
  EXPECT_EQ(j["wall_clock_ms"], 1.5);
  EXPECT_THROW(write_view_csv(v, d, (dir / "missing" / "x.csv").string()), DataError);
}
