#pragma once

// Least-squares helpers shared by the ADF and Granger regressions.
// Everything is solved through a Householder QR of the design matrix; the
// normal equations are never formed.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

#include "noisy/core.hpp"

namespace noisy::linalg {

struct OlsFit {
    Eigen::VectorXd coef;
    /// Standard errors; empty unless requested.
    Eigen::VectorXd stderr_;
    double rss = 0.0;
    std::size_t nobs = 0;
    std::size_t nparams = 0;

    [[nodiscard]] double t_value(Eigen::Index j) const { return coef(j) / stderr_(j); }
};

namespace detail {

inline void check_rank(const Eigen::MatrixXd& x, const Eigen::MatrixXd& r) {
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
        const double scale = x.col(j).norm();
        if (scale == 0.0 || std::abs(r(j, j)) <= 1e-10 * scale)
            throw Error(Errc::SingularRegression,
                        "design column " + std::to_string(j) + " is collinear with earlier columns");
    }
}

}  // namespace detail

/// Ordinary least squares of y on the columns of x.
inline OlsFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool with_stderr = false) {
    const auto n = x.rows();
    const auto p = x.cols();
    if (n <= p) throw Error(Errc::InsufficientSamples, "regression needs more rows than columns");

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
    const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    detail::check_rank(x, r);

    Eigen::VectorXd qty = qr.householderQ().adjoint() * y;
    OlsFit fit;
    fit.nobs = static_cast<std::size_t>(n);
    fit.nparams = static_cast<std::size_t>(p);
    fit.coef = r.triangularView<Eigen::Upper>().solve(qty.head(p));
    fit.rss = qty.tail(n - p).squaredNorm();

    if (with_stderr) {
        const Eigen::MatrixXd rinv =
            r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
        const double sigma2 = fit.rss / static_cast<double>(n - p);
        fit.stderr_.resize(p);
        for (Eigen::Index j = 0; j < p; ++j)
            fit.stderr_(j) = std::sqrt(rinv.row(j).squaredNorm() * sigma2);
    }
    return fit;
}

/// Residual sums of squares of the nested models that use the first k columns
/// of x, for k = 1..cols. One factorisation serves every prefix.
inline std::vector<double> nested_rss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const auto n = x.rows();
    const auto p = x.cols();
    if (n <= p) throw Error(Errc::InsufficientSamples, "regression needs more rows than columns");

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
    const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    detail::check_rank(x, r);

    const Eigen::VectorXd qty = qr.householderQ().adjoint() * y;
    std::vector<double> out(static_cast<std::size_t>(p));
    double tail = qty.tail(n - p).squaredNorm();
    for (Eigen::Index k = p; k >= 1; --k) {
        out[static_cast<std::size_t>(k - 1)] = tail;
        tail += qty(k - 1) * qty(k - 1);
    }
    return out;
}

}  // namespace noisy::linalg
