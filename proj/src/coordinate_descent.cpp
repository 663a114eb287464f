#include "dslasso/detail/coordinate_descent.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dslasso::detail {

namespace {

template <class Update>
CdResult run_sweeps(Eigen::Index p, const Eigen::VectorXd& beta, double tol, int max_sweeps, Update&& update)
{
    CdResult res;
    std::vector<Eigen::Index> active;
    active.reserve(static_cast<std::size_t>(p));

    while (res.sweeps < max_sweeps) {
        double max_delta = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) max_delta = std::max(max_delta, update(k));
        ++res.sweeps;
        if (max_delta < tol) {
            res.converged = true;
            return res;
        }
        active.clear();
        for (Eigen::Index k = 0; k < p; ++k) {
            if (beta(k) != 0.0) active.push_back(k);
        }
        while (res.sweeps < max_sweeps) {
            double inner_delta = 0.0;
            for (Eigen::Index k : active) inner_delta = std::max(inner_delta, update(k));
            ++res.sweeps;
            if (inner_delta < tol) break;
        }
    }
    return res;
}

} // namespace

CdResult gram_cd(const Eigen::MatrixXd& G,
                 double lambda,
                 const Eigen::VectorXd& pf,
                 Eigen::VectorXd& beta,
                 Eigen::VectorXd& grad,
                 double tol,
                 int max_sweeps)
{
    const Eigen::Index p = G.cols();
    auto update = [&](Eigen::Index k) {
        const double gkk = G(k, k);
        if (gkk <= 0.0) return 0.0;
        const double old = beta(k);
        const double fresh = soft_threshold(grad(k) + gkk * old, lambda * pf(k)) / gkk;
        const double delta = fresh - old;
        if (delta == 0.0) return 0.0;
        beta(k) = fresh;
        grad.noalias() -= delta * G.col(k);
        return std::abs(delta);
    };
    return run_sweeps(p, beta, tol, max_sweeps, update);
}

CdResult weighted_cd(const Eigen::MatrixXd& X,
                     const Eigen::VectorXd& v,
                     double lambda,
                     const Eigen::VectorXd& pf,
                     Eigen::VectorXd& beta,
                     Eigen::VectorXd& resid,
                     double tol,
                     int max_sweeps)
{
    const Eigen::Index p = X.cols();
    const double inv_n = 1.0 / static_cast<double>(X.rows());

    const Eigen::MatrixXd XV = v.asDiagonal() * X;
    Eigen::VectorXd curv(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        curv(k) = XV.col(k).dot(X.col(k)) * inv_n;
    }

    auto update = [&](Eigen::Index k) {
        const double a = curv(k);
        if (a <= 0.0) return 0.0;
        const double old = beta(k);
        const double g = XV.col(k).dot(resid) * inv_n + a * old;
        const double fresh = soft_threshold(g, lambda * pf(k)) / a;
        const double delta = fresh - old;
        if (delta == 0.0) return 0.0;
        beta(k) = fresh;
        resid.noalias() -= delta * X.col(k);
        return std::abs(delta);
    };
    return run_sweeps(p, beta, tol, max_sweeps, update);
}

} // namespace dslasso::detail
