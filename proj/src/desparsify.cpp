#include "dslasso/desparsify.hpp"

#include <cmath>

namespace dslasso {

std::vector<double> estimate_variance(const std::vector<PrecisionRow>& rows, const ScoreMatrix& scores)
{
    const Index n = scores.psi.rows();
    if (n == 0) throw DimensionError("variance: empty score matrix");
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        if (row.theta_row.size() != scores.psi.cols()) throw DimensionError("variance: precision row length mismatch");
        const Eigen::VectorXd proj = scores.psi * row.theta_row;
        const double v = proj.squaredNorm() / static_cast<double>(n);
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw DegenerateError("variance: projected scores vanish for coordinate " + std::to_string(row.j));
        }
        out.push_back(v);
    }
    return out;
}

std::vector<DesparsifiedEstimate> desparsify(const LossSpec& spec,
                                             const Dataset& data,
                                             const PenalizedFit& fit,
                                             const std::vector<PrecisionRow>& rows)
{
    if (fit.beta.size() != data.p()) throw DimensionError("desparsify: fit and data dimensions disagree");
    const ScoreMatrix scores = score_matrix(spec, data, fit.coefficients());
    if (!scores.psi.allFinite()) throw InvalidArgument("desparsify: non-finite scores");
    const Eigen::VectorXd mean_score = scores.mean();
    const std::vector<double> var = estimate_variance(rows, scores);

    std::vector<DesparsifiedEstimate> out;
    out.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const PrecisionRow& row = rows[k];
        if (row.j < 0 || row.j >= data.p()) throw DimensionError("desparsify: row index out of range");
        DesparsifiedEstimate est;
        est.j = row.j;
        est.n = data.n();
        est.beta_hat_j = fit.beta(row.j);
        est.correction_j = row.theta_row.dot(mean_score);
        est.b_hat_j = est.beta_hat_j - est.correction_j;
        est.sigma_hat_j = std::sqrt(var[k]);
        out.push_back(est);
    }
    return out;
}

PrecisionRow precision_row_from_theta(Index j, const Eigen::VectorXd& theta_row)
{
    if (j < 0 || j >= theta_row.size()) throw DimensionError("precision row: index out of range");
    if (!(theta_row(j) > 0.0)) throw InvalidArgument("precision row: diagonal entry must be positive");
    PrecisionRow row;
    row.j = j;
    row.theta_row = theta_row;
    row.tau_sq = 1.0 / theta_row(j);
    row.gamma.resize(theta_row.size() - 1);
    for (Index k = 0, g = 0; k < theta_row.size(); ++k) {
        if (k != j) row.gamma(g++) = -theta_row(k) * row.tau_sq;
    }
    return row;
}

} // namespace dslasso
