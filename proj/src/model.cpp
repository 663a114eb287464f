#include "dslasso/model.hpp"

#include <cmath>

#include "dslasso/error.hpp"

namespace dslasso {

std::string to_string(LossFamily family)
{
    switch (family) {
        case LossFamily::quadratic: return "quadratic";
        case LossFamily::huber: return "huber";
        case LossFamily::quantile: return "quantile";
        case LossFamily::logistic: return "logistic";
    }
    return "unknown";
}

LossFamily parse_loss_family(std::string_view name)
{
    if (name == "quadratic") return LossFamily::quadratic;
    if (name == "huber") return LossFamily::huber;
    if (name == "quantile" || name == "lad") return LossFamily::quantile;
    if (name == "logistic") return LossFamily::logistic;
    throw InvalidArgument("unknown loss family: " + std::string(name));
}

void LossSpec::validate() const
{
    if (family == LossFamily::huber && !(huber_k > 0.0 && std::isfinite(huber_k))) {
        throw InvalidArgument("huber loss requires K > 0");
    }
    if (family == LossFamily::quantile && !(quantile_q > 0.0 && quantile_q < 1.0)) {
        throw InvalidArgument("quantile loss requires q in (0, 1)");
    }
}

std::string LossSpec::describe() const
{
    switch (family) {
        case LossFamily::huber: return "huber(K=" + std::to_string(huber_k) + ")";
        case LossFamily::quantile: return "quantile(q=" + std::to_string(quantile_q) + ")";
        default: return to_string(family);
    }
}

void Dataset::validate(const LossSpec& spec) const
{
    if (X.rows() < 1 || X.cols() < 1) {
        throw DimensionError("dataset needs n >= 1 and p >= 1");
    }
    if (y.size() != X.rows()) {
        throw DimensionError("response length " + std::to_string(y.size()) +
                             " does not match n = " + std::to_string(X.rows()));
    }
    if (!X.allFinite() || !y.allFinite()) {
        throw InvalidArgument("dataset contains NaN or Inf entries");
    }
    if (spec.family == LossFamily::logistic) {
        for (Index i = 0; i < y.size(); ++i) {
            if (y(i) != 0.0 && y(i) != 1.0) {
                throw InvalidArgument("logistic loss requires y in {0, 1}; row " + std::to_string(i) +
                                      " has " + std::to_string(y(i)));
            }
        }
    }
}

Dataset Dataset::subset_rows(const std::vector<Index>& rows) const
{
    Dataset out;
    out.X.resize(static_cast<Index>(rows.size()), X.cols());
    out.y.resize(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.X.row(static_cast<Index>(r)) = X.row(rows[r]);
        out.y(static_cast<Index>(r)) = y(rows[r]);
    }
    return out;
}

Eigen::VectorXd Coefficients::linear_predictor(const Eigen::MatrixXd& X) const
{
    if (X.cols() != beta.size()) {
        throw DimensionError("coefficient length " + std::to_string(beta.size()) +
                             " does not match p = " + std::to_string(X.cols()));
    }
    Eigen::VectorXd u = X * beta;
    if (intercept) u.array() += *intercept;
    return u;
}

namespace {

// log(1 + e^u) without overflow
double log1p_exp(double u)
{
    return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}

double sigmoid(double u)
{
    if (u >= 0.0) {
        return 1.0 / (1.0 + std::exp(-u));
    }
    const double e = std::exp(u);
    return e / (1.0 + e);
}

} // namespace

double loss_value(const LossSpec& spec, double u, double y)
{
    const double z = y - u;
    switch (spec.family) {
        case LossFamily::quadratic:
            return z * z;
        case LossFamily::huber: {
            const double k = spec.huber_k;
            const double a = std::abs(z);
            return a <= k ? z * z / (2.0 * k) : (2.0 * a - k) / 2.0;
        }
        case LossFamily::quantile:
            return z > 0.0 ? spec.quantile_q * z : (spec.quantile_q - 1.0) * z;
        case LossFamily::logistic:
            return -y * u + log1p_exp(u);
    }
    return 0.0;
}

double weight(const LossSpec& spec, double u, double y)
{
    const double z = y - u;
    switch (spec.family) {
        case LossFamily::quadratic:
            return -2.0 * z;
        case LossFamily::huber:
            if (std::abs(z) <= spec.huber_k) return -z / spec.huber_k;
            return z > 0.0 ? -1.0 : 1.0;
        case LossFamily::quantile:
            // kink: pick 0 from the subdifferential [-q, 1-q]
            if (z > 0.0) return -spec.quantile_q;
            if (z < 0.0) return 1.0 - spec.quantile_q;
            return 0.0;
        case LossFamily::logistic:
            return sigmoid(u) - y;
    }
    return 0.0;
}

double curvature_weight(const LossSpec& spec, double u, double y)
{
    switch (spec.family) {
        case LossFamily::quadratic:
            return 2.0;
        case LossFamily::logistic: {
            const double pi = sigmoid(u);
            return pi * (1.0 - pi);
        }
        case LossFamily::huber: {
            const double w = weight(spec, u, y);
            return w * w;
        }
        case LossFamily::quantile:
            return 1.0;
    }
    return 1.0;
}

ScoreMatrix score_matrix(const LossSpec& spec, const Dataset& data, const Coefficients& coef)
{
    if (data.y.size() != data.X.rows()) {
        throw DimensionError("score_matrix: response length does not match design rows");
    }
    const Eigen::VectorXd u = coef.linear_predictor(data.X);
    Eigen::VectorXd w(data.n());
    for (Index i = 0; i < data.n(); ++i) w(i) = weight(spec, u(i), data.y(i));
    return ScoreMatrix{w.asDiagonal() * data.X};
}

double empirical_risk(const LossSpec& spec, const Eigen::VectorXd& u, const Eigen::VectorXd& y)
{
    double total = 0.0;
    for (Index i = 0; i < y.size(); ++i) total += loss_value(spec, u(i), y(i));
    return total / static_cast<double>(y.size());
}

double empirical_risk(const LossSpec& spec, const Dataset& data, const Coefficients& coef)
{
    return empirical_risk(spec, coef.linear_predictor(data.X), data.y);
}

} // namespace dslasso
