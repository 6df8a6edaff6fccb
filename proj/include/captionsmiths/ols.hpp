#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "captionsmiths/error.hpp"

namespace captionsmiths {

/// Ordinary least squares with intercept: y ~ coef[0] + sum_j coef[j+1] * x_j.
/// Regressors are centered before the QR solve so residuals stay orthogonal
/// to them to working precision. Throws FitError naming `what` when a
/// regressor has zero variance.
inline std::vector<double> ols_with_intercept(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                              const std::string& what) {
    const auto n = x.rows();
    if (n < 2 || y.size() != n) throw FitError(what + ": regression needs at least two samples");
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - x_mean;
    const Eigen::VectorXd yc = y.array() - y_mean;
    for (Eigen::Index j = 0; j < xc.cols(); ++j) {
        if (xc.col(j).squaredNorm() == 0.0) {
            throw FitError(what + ": regressor " + std::to_string(j) + " has zero variance");
        }
    }
    Eigen::VectorXd beta(xc.cols());
    if (xc.cols() == 1) {
        beta[0] = xc.col(0).dot(yc) / xc.col(0).squaredNorm();
    } else {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc);
        if (qr.rank() < xc.cols()) throw FitError(what + ": regression design is rank deficient");
        beta = qr.solve(yc);
    }
    std::vector<double> coef(static_cast<std::size_t>(x.cols()) + 1);
    coef[0] = y_mean - x_mean.dot(beta);
    for (Eigen::Index j = 0; j < beta.size(); ++j) coef[static_cast<std::size_t>(j) + 1] = beta[j];
    return coef;
}

}  // namespace captionsmiths
