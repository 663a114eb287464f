#pragma once
// Test-only reference computations. None of these call into the solver code
// paths they are used to check.
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "dslasso/model.hpp"
#include "dslasso/rng.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Penalized objective evaluated from scratch.
inline double objective(const dslasso::LossSpec& spec, const MatrixXd& X, const VectorXd& y, double lambda,
                        const VectorXd& beta)
{
    const VectorXd u = X * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) total += dslasso::loss_value(spec, u(i), y(i));
    return total / static_cast<double>(y.size()) + lambda * beta.cwiseAbs().sum();
}

/**
 * Multi-resolution grid search: from the origin, repeatedly move to the best
 * point of the full 3^p stencil {-h, 0, h}^p until no stencil point improves,
 * then halve h. Stops after h drops below `final_step`. Every iterate lies on
 * the grid with spacing h, so the result is an upper bound on the minimum.
 */
inline double grid_minimum(const std::function<double(const VectorXd&)>& f, Eigen::Index p, double start_step,
                           double final_step, VectorXd* argmin = nullptr)
{
    VectorXd x = VectorXd::Zero(p);
    double fx = f(x);
    std::size_t stencil = 1;
    for (Eigen::Index k = 0; k < p; ++k) stencil *= 3;
    VectorXd cand(p);
    for (double h = start_step; h >= final_step * 0.999; h *= 0.5) {
        bool moved = true;
        while (moved) {
            moved = false;
            VectorXd best = x;
            double best_f = fx;
            for (std::size_t code = 0; code < stencil; ++code) {
                std::size_t c = code;
                for (Eigen::Index k = 0; k < p; ++k) {
                    cand(k) = x(k) + h * (static_cast<double>(c % 3) - 1.0);
                    c /= 3;
                }
                const double fc = f(cand);
                if (fc < best_f - 1e-15) {
                    best_f = fc;
                    best = cand;
                }
            }
            if (best_f < fx) {
                x = best;
                fx = best_f;
                moved = true;
            }
        }
    }
    if (argmin) *argmin = x;
    return fx;
}

// Exact minimum of the l1-penalized check loss by enumerating vertices: every
// choice of p breakpoint hyperplanes among {x_i^T b = y_i} and {b_k = 0}.
inline double quantile_vertex_minimum(double q, const MatrixXd& X, const VectorXd& y, double lambda)
{
    const Eigen::Index n = X.rows(), p = X.cols();
    MatrixXd H(n + p, p);
    VectorXd h(n + p);
    H.topRows(n) = X;
    h.head(n) = y;
    H.bottomRows(p) = MatrixXd::Identity(p, p);
    h.tail(p).setZero();
    const dslasso::LossSpec spec = dslasso::LossSpec::quantile(q);

    double best = std::numeric_limits<double>::infinity();
    std::vector<int> pick(static_cast<std::size_t>(n + p), 0);
    std::fill(pick.end() - p, pick.end(), 1);
    MatrixXd A(p, p);
    VectorXd rhs(p);
    do {
        Eigen::Index row = 0;
        for (Eigen::Index i = 0; i < n + p; ++i) {
            if (pick[static_cast<std::size_t>(i)]) {
                A.row(row) = H.row(i);
                rhs(row) = h(i);
                ++row;
            }
        }
        Eigen::FullPivLU<MatrixXd> lu(A);
        if (lu.rank() < p) continue;
        const VectorXd b = lu.solve(rhs);
        best = std::min(best, objective(spec, X, y, lambda, b));
    } while (std::next_permutation(pick.begin(), pick.end()));
    return best;
}

inline MatrixXd random_matrix(dslasso::CounterRng& rng, Eigen::Index n, Eigen::Index p)
{
    MatrixXd X(n, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < n; ++i) X(i, j) = rng.normal();
    return X;
}

} // namespace oracle
