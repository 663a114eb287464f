#pragma once
#include <optional>
#include <string>
#include <string_view>
#include <vector>
#include <Eigen/Dense>

namespace dslasso {

using Index = Eigen::Index;

enum class LossFamily
{
    quadratic,
    huber,
    quantile,
    logistic
};

std::string to_string(LossFamily family);
LossFamily parse_loss_family(std::string_view name);

/**
 * A loss rho(u, y) of the linear predictor u = x^T beta.
 *
 *   quadratic  (y - u)^2
 *   huber      [z^2 1{|z|<=K} + K(2|z| - K) 1{|z|>K}] / (2K),  z = y - u
 *   quantile   q z 1{z>0} + (1-q)|z| 1{z<=0}
 *   logistic   -y u + log(1 + e^u)
 *
 * The weight w(u, y) is always oriented as d rho / du, so that the score of a
 * sample is psi_beta(x, y) = w(x^T beta, y) x = grad_beta rho(x^T beta, y).
 */
struct LossSpec
{
    LossFamily family = LossFamily::quadratic;
    double huber_k = 1.0;
    double quantile_q = 0.5;

    static LossSpec quadratic() { return {LossFamily::quadratic, 1.0, 0.5}; }
    static LossSpec huber(double k) { return {LossFamily::huber, k, 0.5}; }
    static LossSpec quantile(double q) { return {LossFamily::quantile, 1.0, q}; }
    static LossSpec logistic() { return {LossFamily::logistic, 1.0, 0.5}; }

    void validate() const;
    bool differentiable() const { return family != LossFamily::quantile; }
    std::string describe() const;
};

struct Dataset
{
    Eigen::MatrixXd X;
    Eigen::VectorXd y;

    Index n() const { return X.rows(); }
    Index p() const { return X.cols(); }

    /// Throws DimensionError / InvalidArgument when the invariants do not hold.
    void validate(const LossSpec& spec) const;
    Dataset subset_rows(const std::vector<Index>& rows) const;
};

struct Coefficients
{
    Eigen::VectorXd beta;
    std::optional<double> intercept;

    Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& X) const;
};

/// Row i is psi(X_i, y_i) = w(X_i^T beta, y_i) X_i.
struct ScoreMatrix
{
    Eigen::MatrixXd psi;

    Eigen::VectorXd mean() const { return psi.colwise().mean().transpose(); }
};

double loss_value(const LossSpec& spec, double u, double y);
double weight(const LossSpec& spec, double u, double y);

/**
 * Per-sample weight v_i entering Sigma_hat = (1/n) sum v_i x_i x_i^T.
 * quadratic: 2, logistic: pi(1 - pi), huber: w^2, quantile: 1.
 */
double curvature_weight(const LossSpec& spec, double u, double y);

ScoreMatrix score_matrix(const LossSpec& spec, const Dataset& data, const Coefficients& coef);

/// (1/n) sum_i rho(X_i^T beta, y_i)
double empirical_risk(const LossSpec& spec, const Dataset& data, const Coefficients& coef);
double empirical_risk(const LossSpec& spec, const Eigen::VectorXd& u, const Eigen::VectorXd& y);

} // namespace dslasso
