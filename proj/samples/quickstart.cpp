// Generate biased data, remove the linear trace of the protected column and
// compare a logistic model before and after.
#include <iostream>

#include "fairproj/fairproj.hpp"

int main() {
  using namespace fairproj;
  SynthConfig cfg;
  cfg.n = 5000;
  cfg.seed = 1;
  const Dataset raw = generate(cfg);
  const Dataset d = center(raw, {.standardize = true, .center_outcome = false});

  const ProtectedBasis basis = build_basis(d);
  const DebiasedView fair = debias(d, basis);
  std::cout << "max |corr(r, p)| after debiasing: " << fair.max_residual_correlation() << "\n";

  const auto names = d.labels(Role::Feature);
  const Eigen::VectorXd y = d.outcome();
  const Eigen::MatrixXd p = raw.protected_matrix();
  for (double lambda : {1.0, 0.5, 0.0}) {
    const Eigen::MatrixXd x = blend(fair.values, d.feature_matrix(), lambda);
    const FittedModel m = fit_logistic(x, names, y);
    const Eigen::VectorXd yhat = predict(m, x, names).values;
    const MetricsReport r = evaluate(yhat, raw.outcome(), p, {"s"}, 0);
    std::cout << "lambda " << lambda << ": acc " << r.acc_y << ", discrimination " << r.discrimination
              << ", corr(yhat, s) " << r.pearson_corr_yp[0] << "\n";
  }
}
