#pragma once
#include <utility>
#include <vector>

#include "dslasso/desparsify.hpp"

namespace dslasso {

double normal_cdf(double x);
/// Inverse of normal_cdf on (0, 1).
double normal_quantile(double prob);

/// b_hat -/+ z_{1 - alpha/2} sigma_hat / sqrt(n)
std::pair<double, double> confidence_interval(const DesparsifiedEstimate& est, double alpha);

/// Two-sided p-value of H0: beta_j = 0.
double p_value(const DesparsifiedEstimate& est);

/// Step-down Holm adjustment.
std::vector<double> holm_adjust(const std::vector<double>& pvals);
/// Step-up Benjamini-Hochberg adjustment.
std::vector<double> bh_adjust(const std::vector<double>& pvals);

/// {j : |b_hat_j| > 2 sigma_hat_j sqrt(log p / n)}
std::vector<Index> threshold_select(const std::vector<DesparsifiedEstimate>& ests, Index p);

struct InferenceRecord
{
    Index j = 0;
    double b_hat = 0.0;
    double sigma_hat = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double p_value = 1.0;
    double p_holm = 1.0;
    double p_bh = 1.0;
    bool reject_holm = false;
    bool reject_bh = false;
    bool reject_threshold = false;
};

struct InferenceReport
{
    std::vector<InferenceRecord> records;
    double alpha = 0.05;
    Index n = 0;
    Index p = 0;
};

/// Multiplicity adjustments run over the supplied estimates only.
InferenceReport make_report(const std::vector<DesparsifiedEstimate>& ests, double alpha, Index p);

} // namespace dslasso
