#pragma once
#include <Eigen/Dense>

namespace dslasso::detail {

struct CdResult
{
    int sweeps = 0;
    bool converged = false;
};

inline double soft_threshold(double z, double t)
{
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

/**
 * Covariance-update coordinate descent for
 *
 *     minimize_b  0.5 b^T G b - c^T b + lambda * sum_k pf_k |b_k|
 *
 * `grad` must hold c - G b on entry and is kept in sync. Convergence when a
 * full sweep moves no coordinate by more than `tol`. Sweeps alternate between
 * the full coordinate set and the current nonzero set.
 */
CdResult gram_cd(const Eigen::MatrixXd& G,
                 double lambda,
                 const Eigen::VectorXd& pf,
                 Eigen::VectorXd& beta,
                 Eigen::VectorXd& grad,
                 double tol,
                 int max_sweeps);

/**
 * Naive-update coordinate descent for the weighted least-squares problem
 *
 *     minimize_b  (1/2n) sum_i v_i (z_i - x_i^T b)^2 + lambda * sum_k pf_k |b_k|
 *
 * `resid` must hold z - X b on entry and is kept in sync.
 */
CdResult weighted_cd(const Eigen::MatrixXd& X,
                     const Eigen::VectorXd& v,
                     double lambda,
                     const Eigen::VectorXd& pf,
                     Eigen::VectorXd& beta,
                     Eigen::VectorXd& resid,
                     double tol,
                     int max_sweeps);

} // namespace dslasso::detail
