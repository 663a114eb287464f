#pragma once
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dslasso/model.hpp"
#include "dslasso/nodewise.hpp"
#include "dslasso/solver.hpp"

namespace dslasso {

struct DesparsifiedEstimate
{
    Index j = 0;
    double beta_hat_j = 0.0;
    /// Theta_j^T P_n psi_beta_hat
    double correction_j = 0.0;
    double b_hat_j = 0.0;
    /// sqrt(Theta_j^T P_n psi psi^T Theta_j)
    double sigma_hat_j = 0.0;
    Index n = 0;
};

/// b_hat_j = beta_hat_j - Theta_j^T P_n psi_beta_hat for each row, with the plug-in sigma_hat_j.
std::vector<DesparsifiedEstimate> desparsify(const LossSpec& spec,
                                             const Dataset& data,
                                             const PenalizedFit& fit,
                                             const std::vector<PrecisionRow>& rows);

/// sigma_j^2 = (1/n) sum_i (Theta_j^T psi_i)^2, one entry per row.
std::vector<double> estimate_variance(const std::vector<PrecisionRow>& rows, const ScoreMatrix& scores);

/// Wraps a known precision row Theta_j (simulation oracle mode) so it can be passed to desparsify.
PrecisionRow precision_row_from_theta(Index j, const Eigen::VectorXd& theta_row);

} // namespace dslasso
