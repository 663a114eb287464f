#pragma once
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dslasso/model.hpp"
#include "dslasso/solver.hpp"

namespace dslasso {

/// Rows of X multiplied by W_diag; Sigma_hat = WX^T WX / n.
struct WeightedDesign
{
    Eigen::VectorXd W_diag;
    Eigen::MatrixXd WX;

    Index n() const { return WX.rows(); }
    Index p() const { return WX.cols(); }
    Eigen::MatrixXd sigma_hat() const;
};

/**
 * W_diag[i] = sqrt(curvature_weight) for quadratic and logistic. The check
 * loss and the Huber loss use W = 1: their Hessian of the expected risk is a
 * scalar multiple of E xx^T, and that scalar is applied afterwards by
 * loss_scale_correction.
 */
WeightedDesign build_weighted_design(const LossSpec& spec, const Dataset& data, const Coefficients& beta_hat);

/// Design used as-is (W = 1).
WeightedDesign unweighted_design(const Eigen::MatrixXd& X);

enum class NodewiseMethod
{
    lasso,
    sqrt_lasso
};

struct PrecisionRow
{
    Index j = 0;
    Eigen::VectorXd gamma;
    double tau_sq = 0.0;
    Eigen::VectorXd theta_row;
    /// Penalty of the equivalent plain nodewise Lasso, (1/n)||.||^2 + 2 lambda_j ||gamma||_1.
    double lambda_j = 0.0;
};

/// Tighter coordinate tolerance than the outer fit: the KKT identities are asserted at 1e-8.
SolverOptions nodewise_solver_options();

/**
 * Nodewise regression of column j on the others.
 *
 * lasso: gamma minimizes ||WX_j - WX_{-j} g||^2 / n + 2 lambda ||g||_1.
 * sqrt_lasso: gamma minimizes ||WX_j - WX_{-j} g||_2 / sqrt(n) + 2 lambda ||g||_1;
 * its stationarity conditions are those of the plain problem at penalty
 * 2 lambda sigma_hat, which is what lambda_j reports.
 *
 * tau_sq = ||WX_j - WX_{-j} gamma||^2 / n + lambda_j ||gamma||_1.
 */
PrecisionRow nodewise_row(const WeightedDesign& wd, Index j, double lambda, NodewiseMethod method,
                          const SolverOptions& opts = nodewise_solver_options());

/// Same from the Gram matrix Sigma_hat (row j only touches Sigma_hat).
PrecisionRow nodewise_row_gram(const Eigen::MatrixXd& sigma_hat, Index j, double lambda, NodewiseMethod method,
                               const SolverOptions& opts = nodewise_solver_options());

enum class NodewiseLambdaRule
{
    cross_validation,
    universal,
    fixed
};

struct NodewiseConfig
{
    NodewiseMethod method = NodewiseMethod::lasso;
    NodewiseLambdaRule rule = NodewiseLambdaRule::cross_validation;
    /// Constant c of the universal rule lambda = c sqrt(log p / n).
    double universal_c = 1.0;
    double fixed_lambda = 0.0;
    /// Per-column CV path, log-spaced from max_k |Sigma_jk| down to min_ratio times that.
    int path_len = 30;
    double min_ratio = 0.05;
    int n_folds = 10;
    std::uint64_t cv_seed = 0;
    int threads = 1;
};

/// One row per requested column, in the order given.
std::vector<PrecisionRow> precision_estimate(const WeightedDesign& wd,
                                             const std::vector<Index>& columns,
                                             const NodewiseConfig& config);

std::vector<PrecisionRow> precision_estimate(const LossSpec& spec,
                                             const Dataset& data,
                                             const Coefficients& beta_hat,
                                             const std::vector<Index>& columns,
                                             const NodewiseConfig& config);

/// Per-column cross-validated lambda on the given design (mean held-out squared error).
double nodewise_cv_lambda(const WeightedDesign& wd, Index j, const NodewiseConfig& config);

/// ||Sigma_hat Theta_j - e_j||_inf
double nodewise_kkt_deviation(const Eigen::MatrixXd& sigma_hat, const PrecisionRow& row);

/**
 * Properties of the error law needed to rescale the unweighted nodewise rows:
 * the density at the q-quantile (zero under the model) for the check loss, and
 * F(K), F(-K) for Huber.
 */
struct NoiseInfo
{
    std::optional<double> density_at_zero;
    std::optional<double> cdf_upper;
    std::optional<double> cdf_lower;
    bool estimated = false;
};

/**
 * Theta_j <- scale * Theta'_j with
 *   quantile: 1 / f(0)   (the check loss at q = 0.5 is half the absolute loss)
 *   huber:    K / (F(K) - F(-K))
 * and the identity otherwise.
 */
double loss_scale(const LossSpec& spec, const NoiseInfo& info);
std::vector<PrecisionRow> loss_scale_correction(const LossSpec& spec, std::vector<PrecisionRow> rows,
                                                const NoiseInfo& info);

/**
 * Rough plug-in noise constants from residuals (experimental): Gaussian kernel
 * density at zero with Silverman's bandwidth, and the empirical mass of
 * |residual| <= K split evenly around zero.
 */
NoiseInfo estimate_noise_info(const LossSpec& spec, const Eigen::VectorXd& residuals);

namespace detail {
/// Closest double t to tau_sq for which (1 / t) * t == 1 holds exactly.
double exactly_invertible(double tau_sq);
} // namespace detail

} // namespace dslasso
