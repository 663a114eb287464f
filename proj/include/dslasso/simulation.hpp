#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dslasso/desparsify.hpp"
#include "dslasso/inference.hpp"
#include "dslasso/nodewise.hpp"
#include "dslasso/solver.hpp"

namespace dslasso {

enum class ErrorDist
{
    gaussian,
    t3,
    t5,
    logistic_bernoulli
};

std::string to_string(ErrorDist dist);
ErrorDist parse_error_dist(const std::string& name);

struct DgpConfig
{
    Index n = 500;
    Index p = 100;
    /// beta0 = (value, ..., value, 0, ..., 0) with s0 leading entries.
    Index s0 = 3;
    double beta_value = 1.0;
    /// Theta0 tridiagonal: 1 on the diagonal, `offdiag` next to it.
    double offdiag = 0.3;
    ErrorDist error = ErrorDist::gaussian;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Precomputed population quantities of a DgpConfig.
class Dgp
{
public:
    explicit Dgp(const DgpConfig& cfg);

    const DgpConfig& config() const { return cfg_; }
    const Eigen::MatrixXd& theta0() const { return theta0_; }
    const Eigen::MatrixXd& sigma0() const { return sigma0_; }
    const Eigen::VectorXd& beta0() const { return beta0_; }

    /// Draws replication `rep`; identical for identical (seed, rep).
    Dataset generate(std::uint64_t rep) const;

private:
    DgpConfig cfg_;
    Eigen::MatrixXd theta0_;
    Eigen::MatrixXd sigma0_;
    Eigen::MatrixXd chol_;
    Eigen::VectorXd beta0_;
};

struct Generated
{
    Dataset data;
    Coefficients truth;
};

Generated generate(const DgpConfig& cfg, std::uint64_t rep = 0);

/// Unit-variance error laws: density at 0 and F(+-K) from the exact distribution.
NoiseInfo true_noise_info(ErrorDist dist, const LossSpec& spec);

struct PipelineOptions
{
    LambdaPathConfig lambda_path;
    NodewiseConfig nodewise;
    SolverOptions solver;
    double alpha = 0.05;
    /// Required for quantile and Huber losses unless estimate_noise is set.
    std::optional<NoiseInfo> noise;
    /// Plug-in noise constants from the fitted residuals when `noise` is empty.
    bool estimate_noise = false;
    /// Columns to de-sparsify; empty means all.
    std::vector<Index> columns;
};

struct PipelineDiagnostics
{
    KktReport kkt;
    /// Loss-appropriate KKT bound for the outer fit.
    bool kkt_ok = false;
    /// max_j |Theta_j[j] tau_j^2 - 1|
    double nodewise_diag_error = 0.0;
    /// max_j (||Sigma_hat Theta_j - e_j||_inf - lambda_j / tau_j^2)
    double nodewise_kkt_excess = 0.0;
    std::size_t active_size = 0;
};

struct PipelineOutput
{
    PenalizedFit fit;
    LambdaPath path;
    /// Nodewise rows before the loss-specific rescaling.
    std::vector<PrecisionRow> raw_rows;
    std::vector<DesparsifiedEstimate> estimates;
    PipelineDiagnostics diagnostics;
    /// Noise constants used for the loss rescaling (empty fields when not needed).
    NoiseInfo noise;
};

/**
 * Fit at the cross-validated lambda, nodewise rows, loss rescaling and
 * de-sparsification. `cv_seed` keys the outer fold assignment; the nodewise
 * folds use opts.nodewise.cv_seed. With opts.solver.intercept the intercept
 * is treated as an extra unpenalized column of ones in the nodewise step.
 */
PipelineOutput run_pipeline(const LossSpec& spec, const Dataset& data, const PipelineOptions& opts,
                            std::uint64_t cv_seed);

struct CoordinateRecord
{
    std::uint64_t rep = 0;
    Index j = 0;
    double beta0 = 0.0;
    double beta_hat = 0.0;
    double b_hat = 0.0;
    double sigma_hat = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    bool covered = false;
    double length = 0.0;
    double p_value = 1.0;
    bool in_s0 = false;
    /// sqrt(n) (b_hat - beta0) / sigma_hat
    double z = 0.0;
};

struct ReplicationSummary
{
    std::uint64_t rep = 0;
    bool failed = false;
    std::string failure;
    double lambda = 0.0;
    PipelineDiagnostics diagnostics;
};

struct ExperimentResult
{
    std::vector<CoordinateRecord> records;
    std::vector<ReplicationSummary> replications;
    int failures = 0;
    double coverage_s0 = 0.0;
    double coverage_s0c = 0.0;
    double length_s0 = 0.0;
    double length_s0c = 0.0;
    std::size_t count_s0 = 0;
    std::size_t count_s0c = 0;
};

struct ExperimentOptions
{
    PipelineOptions pipeline;
    int replications = 100;
    /// Worker threads across replications; results do not depend on it.
    int threads = 1;
};

ExperimentResult run_ci_experiment(const DgpConfig& cfg, const LossSpec& spec, const ExperimentOptions& opts);

struct FwerResult
{
    /// Mean over replications of the fraction of S0 rejected; NaN when S0 is empty.
    double tpr = 0.0;
    bool tpr_defined = true;
    /// Fraction of replications rejecting any coordinate outside S0.
    double fwer = 0.0;
    int replications = 0;
    int failures = 0;
    std::vector<ReplicationSummary> details;
};

/// Holm at level opts.pipeline.alpha over all p coordinates.
FwerResult run_fwer_experiment(const DgpConfig& cfg, const LossSpec& spec, const ExperimentOptions& opts);

/// Coverage with the across-replication standard deviation of b_hat_j in place of sigma_hat_j / sqrt(n).
std::pair<double, double> known_variance_coverage(const ExperimentResult& result, double alpha);

struct ZRecord
{
    Index j = 0;
    std::uint64_t rep = 0;
    double z = 0.0;
};

struct StandardizedExport
{
    std::vector<ZRecord> rows;
    /// Kolmogorov-Smirnov distance to N(0, 1) per coordinate, ordered by j.
    std::vector<std::pair<Index, double>> ks_distance;
};

StandardizedExport export_standardized(const ExperimentResult& result);

/// sup_x |F_n(x) - Phi(x)|
double ks_distance_normal(std::vector<double> values);
/// Asymptotic p-value of the one-sample KS statistic (with the small-sample correction of Stephens).
double ks_pvalue(double distance, std::size_t count);

} // namespace dslasso
