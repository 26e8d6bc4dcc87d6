#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace fairproj;

namespace {

struct ClassStats {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  double count = 0;
  double s_ones = 0;
};

ClassStats class_stats(const Dataset& d, double cls) {
  ClassStats c;
  const auto& v = d.values();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    if (v(i, 3) != cls) continue;
    c.mean += v.row(i).head<2>().transpose();
    c.count += 1;
    c.s_ones += v(i, 2);
  }
  c.mean /= c.count;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    if (v(i, 3) != cls) continue;
    const Eigen::Vector2d dlt = v.row(i).head<2>().transpose() - c.mean;
    c.cov += dlt * dlt.transpose();
  }
  c.cov /= c.count - 1;
  return c;
}

}  // namespace

TEST(Synth, ShapeAndRoles) {
  const auto d = generate({.n = 50});
  EXPECT_EQ(d.rows(), 50u);
  EXPECT_EQ(d.names(), (std::vector<std::string>{"x1", "x2", "s", "y"}));
  EXPECT_EQ(d.labels(Role::Protected), std::vector<std::string>{"s"});
  for (Eigen::Index i = 0; i < 50; ++i) {
    EXPECT_TRUE(d.values()(i, 2) == 0.0 || d.values()(i, 2) == 1.0);
    EXPECT_TRUE(d.values()(i, 3) == 0.0 || d.values()(i, 3) == 1.0);
  }
}

TEST(Synth, Deterministic) {
  const auto a = generate({.n = 300, .seed = 9});
  const auto b = generate({.n = 300, .seed = 9});
  EXPECT_EQ(a.values(), b.values());
  EXPECT_NE(a.values(), generate({.n = 300, .seed = 10}).values());
  // Row i depends only on (seed, i): a longer sample extends a shorter one.
  EXPECT_EQ(generate({.n = 500, .seed = 9}).values().topRows(300), a.values());
}

TEST(Synth, UnbiasedProtectedIsIndependentOfOutcome) {
  SynthConfig c;
  c.n = 10000;
  c.seed = 3;
  c.protected_bias = 0.5;
  const auto d = generate(c);
  EXPECT_LE(std::abs(testing_helpers::naive_corr(d.values().col(2), d.values().col(3))), 0.05);
}

TEST(Synth, ClassConditionalMoments) {
  SynthConfig c;
  c.n = 20000;
  c.seed = 4;
  const auto d = generate(c);
  const auto pos = class_stats(d, 1.0);
  const auto neg = class_stats(d, 0.0);
  for (int k = 0; k < 2; ++k) {
    // 4 standard errors
    EXPECT_NEAR(pos.mean(k), c.mean_pos(k), 4 * std::sqrt(c.cov_pos(k, k) / pos.count));
    EXPECT_NEAR(neg.mean(k), c.mean_neg(k), 4 * std::sqrt(c.cov_neg(k, k) / neg.count));
  }
  EXPECT_NEAR((pos.cov - c.cov_pos).cwiseAbs().maxCoeff() / c.cov_pos.maxCoeff(), 0.0, 0.06);
  EXPECT_NEAR((neg.cov - c.cov_neg).cwiseAbs().maxCoeff() / c.cov_neg.maxCoeff(), 0.0, 0.06);
  const double b = c.protected_bias;
  EXPECT_NEAR(pos.s_ones / pos.count, b, 4 * std::sqrt(b * (1 - b) / pos.count));
  EXPECT_NEAR(neg.s_ones / neg.count, 1 - b, 4 * std::sqrt(b * (1 - b) / neg.count));
  EXPECT_NEAR(pos.count / static_cast<double>(c.n), 0.5, 4 * std::sqrt(0.25 / static_cast<double>(c.n)));
}

TEST(Synth, Rejections) {
  SynthConfig c;
  c.cov_pos << 1, 2, 2, 1;  // indefinite
  EXPECT_THROW(generate(c), DataError);
  c = {};
  c.cov_neg << 1, 0.5, 0.2, 1;  // not symmetric
  EXPECT_THROW(generate(c), DataError);
  c = {};
  c.protected_bias = 1.0;
  EXPECT_THROW(generate(c), DataError);
  c = {};
  c.n = 1;
  EXPECT_THROW(generate(c), DataError);
}

TEST(Synth, JsonRoundTrip) {
  SynthConfig c;
  c.n = 77;
  c.seed = 12;
  c.mean_pos << 1, 3;
  c.cov_neg << 4, -1, -1, 2;
  c.protected_bias = 0.6;
  const auto back = synth_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(back.n, c.n);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.mean_pos, c.mean_pos);
  EXPECT_EQ(back.mean_neg, c.mean_neg);
  EXPECT_EQ(back.cov_pos, c.cov_pos);
  EXPECT_EQ(back.cov_neg, c.cov_neg);
  EXPECT_EQ(back.protected_bias, c.protected_bias);
  EXPECT_EQ(synth_config_from_json(nlohmann::json::object()).n, SynthConfig{}.n);
  EXPECT_THROW(synth_config_from_json(nlohmann::json{{"mean_pos", {1}}}), DataError);
  EXPECT_THROW(synth_config_from_json(nlohmann::json{{"n", "many"}}), DataError);
}

TEST(Synth, FairnessAccuracyDirection) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto r = testing_helpers::synth_direction(10000, seed);
    EXPECT_GT(r.full.accuracy, r.fair.accuracy) << "seed " << seed;
    EXPECT_LT(r.fair.discrimination, r.full.discrimination) << "seed " << seed;
    EXPECT_LT(r.fair.gap(), r.full.gap()) << "seed " << seed;
    EXPECT_GT(r.full.positive_rate_s1, r.full.positive_rate_s0);
  }
}
