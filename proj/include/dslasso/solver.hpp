#pragma once
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dslasso/error.hpp"
#include "dslasso/model.hpp"

namespace dslasso {

struct SolverOptions
{
    /// Max coordinate change that counts as converged (coordinate descent, IRLS outer loop).
    double tol = 1e-8;
    /// Cap on coordinate sweeps / outer iterations / splitting iterations.
    int max_iter = 100000;
    double admm_tol_primal = 1e-7;
    double admm_tol_dual = 1e-7;
    /// Scale columns to unit empirical norm before fitting; coefficients are returned unscaled.
    bool standardize = false;
    /// Unpenalized intercept.
    bool intercept = false;
};

struct PenalizedFit
{
    Eigen::VectorXd beta;
    std::optional<double> intercept;
    double lambda = 0.0;
    /// (1/n) sum rho + lambda * sum_k penalty_weights_k |beta_k|
    double objective = 0.0;
    std::vector<Index> active_set;
    /// sup-norm of P_n psi + lambda Z under the best subgradient selection Z.
    double kkt_residual = 0.0;
    int iterations = 0;
    bool converged = true;
    /// Per-coordinate multipliers of lambda (ones unless the fit was standardized).
    Eigen::VectorXd penalty_weights;
    /// Objective after every outer iteration; non-increasing.
    std::vector<double> objective_trace;

    Coefficients coefficients() const { return {beta, intercept}; }
};

class SolverNotConverged : public ConvergenceError
{
public:
    SolverNotConverged(const std::string& what, PenalizedFit last)
        : ConvergenceError(what), last_iterate(std::move(last))
    {
    }
    PenalizedFit last_iterate;
};

double penalized_objective(const LossSpec& spec,
                           const Dataset& data,
                           const Coefficients& coef,
                           double lambda,
                           const Eigen::VectorXd& penalty_weights);

/**
 * l1-penalized M-estimator
 *
 *     argmin_beta (1/n) sum_i rho(X_i^T beta, y_i) + lambda ||beta||_1.
 *
 * quadratic: covariance-update coordinate descent. huber: iteratively
 * reweighted majorize-minimize (the Huber function is concave in z^2, so the
 * tangent quadratic with weight 1/max(K, |z|) majorizes it). logistic:
 * proximal Newton with backtracking. quantile: ADMM on the split
 * X beta + r = y followed by a vertex polish.
 *
 * Throws SolverNotConverged (carrying the last iterate) after opts.max_iter.
 */
PenalizedFit fit_lasso(const LossSpec& spec,
                       const Dataset& data,
                       double lambda,
                       const SolverOptions& opts = {},
                       const Coefficients* warm_start = nullptr);

/// Fits along `lambdas` (any order; warm-started in the given order).
std::vector<PenalizedFit> fit_path(const LossSpec& spec,
                                   const Dataset& data,
                                   std::span<const double> lambdas,
                                   const SolverOptions& opts = {});

/// Smallest lambda at which beta_hat = 0 (with the intercept fitted, if requested).
double lambda_max(const LossSpec& spec, const Dataset& data, const SolverOptions& opts = {});

/// `len` log-spaced values from lam_max down to min_ratio * lam_max.
std::vector<double> make_lambda_path(double lam_max, int len, double min_ratio);

struct SqrtLassoResult
{
    Eigen::VectorXd gamma;
    /// ||target - others * gamma||_2 / sqrt(n) at the solution.
    double sigma = 0.0;
    double objective = 0.0;
    /// Target (numerically) in the span of the other columns; gamma interpolates.
    bool degenerate = false;
    int iterations = 0;
    /// Penalty of the last inner Lasso step (2 lambda sigma); gamma satisfies its KKT conditions.
    double lasso_penalty = 0.0;
};

/**
 * Square-root Lasso: argmin_gamma ||t - A gamma||_2 / sqrt(n) + 2 lambda ||gamma||_1,
 * solved by alternating the noise level sigma = ||r||/sqrt(n) with a Lasso step
 * at penalty 2 lambda sigma.
 */
SqrtLassoResult fit_sqrt_lasso(const Eigen::VectorXd& target,
                               const Eigen::MatrixXd& others,
                               double lambda,
                               const SolverOptions& opts = {});

/// Same problem from Gram quantities S = A^T A / n, s = A^T t / n, tt = t^T t / n.
SqrtLassoResult sqrt_lasso_gram(const Eigen::MatrixXd& S,
                                const Eigen::VectorXd& s,
                                double tt,
                                double lambda,
                                const SolverOptions& opts = {});

struct LambdaPathConfig
{
    int path_len = 50;
    double min_ratio = 0.01;
    int n_folds = 10;
    /// Explicit decreasing path; overrides path_len/min_ratio when non-empty.
    std::vector<double> values;
};

struct LambdaPath
{
    std::vector<double> values;
    int n_folds = 0;
    std::vector<double> cv_errors;
    std::size_t selected = 0;
    int skipped_folds = 0;
    std::vector<std::string> warnings;

    double selected_lambda() const { return values.at(selected); }
};

/// Assigns each of n rows to one of k folds from a seeded shuffle.
std::vector<int> make_folds(Index n, int n_folds, std::uint64_t seed);

/**
 * K-fold cross-validation along a decreasing lambda path. cv_errors[k] is the
 * mean over folds of the mean held-out loss; ties go to the larger lambda.
 * Logistic folds whose training part holds a single class are skipped.
 */
LambdaPath cv_select_lambda(const LossSpec& spec,
                            const Dataset& data,
                            const LambdaPathConfig& config,
                            std::uint64_t seed,
                            const SolverOptions& opts = {});

/// ||P_n psi_beta_hat||_inf
double kkt_check(const LossSpec& spec, const Dataset& data, const PenalizedFit& fit);

struct KktReport
{
    /// max over active j of |(P_n psi)_j + lambda w_j sign(beta_j)|
    double active = 0.0;
    /// max over inactive j of |(P_n psi)_j| (to be compared against lambda w_j)
    double inactive = 0.0;
    /// max over inactive j of (|(P_n psi)_j| - lambda w_j)_+
    double inactive_excess = 0.0;
    /// |(P_n psi)| on the intercept coordinate, 0 when absent
    double intercept = 0.0;
    double score_sup = 0.0;
};

KktReport kkt_report(const LossSpec& spec, const Dataset& data, const PenalizedFit& fit);

} // namespace dslasso
