#include "dslasso/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "dslasso/rng.hpp"

namespace dslasso {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum Stream : std::uint64_t
{
    design_stream = 0,
    noise_stream = 1,
    outer_cv_stream = 2,
    nodewise_cv_stream = 3
};

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t rep, std::uint64_t stream)
{
    return CounterRng(seed, rep, stream).next_u64();
}

double draw_error(CounterRng& rng, ErrorDist dist)
{
    switch (dist) {
        case ErrorDist::gaussian: return rng.normal();
        case ErrorDist::t3: return rng.student_t(3) * std::sqrt(1.0 / 3.0);
        case ErrorDist::t5: return rng.student_t(5) * std::sqrt(3.0 / 5.0);
        case ErrorDist::logistic_bernoulli: break;
    }
    return 0.0;
}

// Runs fn(r) for r in [0, count) on up to `threads` workers. fn writes only to
// slot r, so the outcome does not depend on scheduling.
template <class Fn>
void for_each_replication(int count, int threads, Fn&& fn)
{
    const int workers = std::max(1, std::min(threads, count));
    if (workers == 1) {
        for (int r = 0; r < count; ++r) fn(r);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (int r = next++; r < count; r = next++) {
                try {
                    fn(r);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

bool needs_noise_info(const LossSpec& spec)
{
    return spec.family == LossFamily::quantile || spec.family == LossFamily::huber;
}

PipelineOptions options_for_replication(const DgpConfig& cfg, const LossSpec& spec, const PipelineOptions& base,
                                        std::uint64_t rep)
{
    PipelineOptions opts = base;
    opts.nodewise.cv_seed = derived_seed(cfg.seed, rep, nodewise_cv_stream);
    opts.nodewise.threads = 1;
    if (!opts.noise && needs_noise_info(spec)) opts.noise = true_noise_info(cfg.error, spec);
    return opts;
}

struct ReplicationOutcome
{
    ReplicationSummary summary;
    std::vector<DesparsifiedEstimate> estimates;
};

ReplicationOutcome run_replication(const Dgp& dgp, const LossSpec& spec, const PipelineOptions& base,
                                   std::uint64_t rep)
{
    ReplicationOutcome out;
    out.summary.rep = rep;
    try {
        const Dataset data = dgp.generate(rep);
        const PipelineOptions opts = options_for_replication(dgp.config(), spec, base, rep);
        PipelineOutput res = run_pipeline(spec, data, opts, derived_seed(dgp.config().seed, rep, outer_cv_stream));
        out.summary.lambda = res.fit.lambda;
        out.summary.diagnostics = res.diagnostics;
        out.estimates = std::move(res.estimates);
    } catch (const Error& e) {
        out.summary.failed = true;
        out.summary.failure = e.what();
    }
    return out;
}

} // namespace

std::string to_string(ErrorDist dist)
{
    switch (dist) {
        case ErrorDist::gaussian: return "gaussian";
        case ErrorDist::t3: return "t3";
        case ErrorDist::t5: return "t5";
        case ErrorDist::logistic_bernoulli: return "logistic";
    }
    return "?";
}

ErrorDist parse_error_dist(const std::string& name)
{
    if (name == "gaussian" || name == "normal") return ErrorDist::gaussian;
    if (name == "t3") return ErrorDist::t3;
    if (name == "t5") return ErrorDist::t5;
    if (name == "logistic" || name == "bernoulli") return ErrorDist::logistic_bernoulli;
    throw InvalidArgument("unknown error distribution '" + name + "'");
}

void DgpConfig::validate() const
{
    if (n < 1 || p < 1) throw InvalidArgument("dgp: n and p must be positive");
    if (s0 < 0 || s0 > p) throw InvalidArgument("dgp: s0 must lie in [0, p]");
    if (!std::isfinite(beta_value) || !std::isfinite(offdiag)) throw InvalidArgument("dgp: non-finite parameter");
}

Dgp::Dgp(const DgpConfig& cfg) : cfg_(cfg)
{
    cfg.validate();
    const Index p = cfg.p;
    theta0_ = MatrixXd::Identity(p, p);
    for (Index k = 0; k + 1 < p; ++k) {
        theta0_(k, k + 1) = cfg.offdiag;
        theta0_(k + 1, k) = cfg.offdiag;
    }
    Eigen::LLT<MatrixXd> theta_llt(theta0_);
    if (theta_llt.info() != Eigen::Success) throw InvalidArgument("dgp: Theta0 is not positive definite");
    sigma0_ = theta_llt.solve(MatrixXd::Identity(p, p));
    sigma0_ = 0.5 * (sigma0_ + sigma0_.transpose());
    Eigen::LLT<MatrixXd> sigma_llt(sigma0_);
    if (sigma_llt.info() != Eigen::Success) throw InvalidArgument("dgp: Sigma0 is not positive definite");
    chol_ = sigma_llt.matrixL();
    beta0_ = VectorXd::Zero(p);
    beta0_.head(cfg.s0).setConstant(cfg.beta_value);
}

Dataset Dgp::generate(std::uint64_t rep) const
{
    const Index n = cfg_.n, p = cfg_.p;
    CounterRng design(cfg_.seed, rep, design_stream);
    MatrixXd Z(n, p);
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < p; ++k) Z(i, k) = design.normal();
    Dataset data;
    data.X = Z * chol_.transpose();
    const VectorXd eta = data.X * beta0_;
    data.y.resize(n);
    CounterRng noise(cfg_.seed, rep, noise_stream);
    for (Index i = 0; i < n; ++i) {
        if (cfg_.error == ErrorDist::logistic_bernoulli) {
            data.y(i) = noise.bernoulli(1.0 / (1.0 + std::exp(-eta(i)))) ? 1.0 : 0.0;
        } else {
            data.y(i) = eta(i) + draw_error(noise, cfg_.error);
        }
    }
    return data;
}

Generated generate(const DgpConfig& cfg, std::uint64_t rep)
{
    const Dgp dgp(cfg);
    return {dgp.generate(rep), Coefficients{dgp.beta0(), std::nullopt}};
}

NoiseInfo true_noise_info(ErrorDist dist, const LossSpec& spec)
{
    NoiseInfo info;
    const double k = spec.huber_k;
    const double q = spec.family == LossFamily::quantile ? spec.quantile_q : 0.5;
    switch (dist) {
        case ErrorDist::gaussian: {
            const boost::math::normal_distribution<double> law;
            const double at = boost::math::quantile(law, q);
            info.density_at_zero = boost::math::pdf(law, at);
            info.cdf_upper = boost::math::cdf(law, k);
            info.cdf_lower = boost::math::cdf(law, -k);
            break;
        }
        case ErrorDist::t3:
        case ErrorDist::t5: {
            const double nu = dist == ErrorDist::t3 ? 3.0 : 5.0;
            const double scale = std::sqrt((nu - 2.0) / nu);
            const boost::math::students_t_distribution<double> law(nu);
            const double at = boost::math::quantile(law, q);
            info.density_at_zero = boost::math::pdf(law, at) / scale;
            info.cdf_upper = boost::math::cdf(law, k / scale);
            info.cdf_lower = boost::math::cdf(law, -k / scale);
            break;
        }
        case ErrorDist::logistic_bernoulli: break;
    }
    return info;
}

PipelineOutput run_pipeline(const LossSpec& spec, const Dataset& data, const PipelineOptions& opts,
                            std::uint64_t cv_seed)
{
    spec.validate();
    data.validate(spec);
    PipelineOutput out;
    out.path = cv_select_lambda(spec, data, opts.lambda_path, cv_seed, opts.solver);
    out.fit = fit_lasso(spec, data, out.path.selected_lambda(), opts.solver);

    std::vector<Index> columns = opts.columns;
    if (columns.empty()) {
        for (Index j = 0; j < data.p(); ++j) columns.push_back(j);
    }
    for (Index j : columns) {
        if (j < 0 || j >= data.p()) throw DimensionError("pipeline: column index out of range");
    }

    // An unpenalized intercept enters the nodewise regressions and the scores
    // as a trailing column of ones.
    Dataset work = data;
    PenalizedFit work_fit = out.fit;
    if (out.fit.intercept) {
        const Index p = data.p();
        work.X.conservativeResize(Eigen::NoChange, p + 1);
        work.X.col(p).setOnes();
        work_fit.beta.conservativeResize(p + 1);
        work_fit.beta(p) = *out.fit.intercept;
        work_fit.intercept.reset();
    }
    const WeightedDesign wd = build_weighted_design(spec, work, work_fit.coefficients());
    out.raw_rows = precision_estimate(wd, columns, opts.nodewise);

    PipelineDiagnostics& diag = out.diagnostics;
    diag.kkt = kkt_report(spec, data, out.fit);
    diag.active_size = out.fit.active_set.size();
    if (spec.family == LossFamily::quantile) {
        const double kx = data.X.cwiseAbs().maxCoeff();
        diag.kkt_ok = diag.kkt.score_sup <= out.fit.lambda + static_cast<double>(diag.active_size) * kx /
                                                                   static_cast<double>(data.n()) +
                                                1e-6;
    } else {
        diag.kkt_ok = diag.kkt.active <= 1e-6 && diag.kkt.inactive_excess <= 1e-6 && diag.kkt.intercept <= 1e-6;
    }
    const MatrixXd sigma_hat = wd.sigma_hat();
    diag.nodewise_kkt_excess = -std::numeric_limits<double>::infinity();
    for (const auto& row : out.raw_rows) {
        diag.nodewise_diag_error = std::max(diag.nodewise_diag_error, std::abs(row.theta_row(row.j) * row.tau_sq - 1.0));
        diag.nodewise_kkt_excess =
            std::max(diag.nodewise_kkt_excess, nodewise_kkt_deviation(sigma_hat, row) - row.lambda_j / row.tau_sq);
    }

    if (opts.noise) {
        out.noise = *opts.noise;
    } else if (opts.estimate_noise && needs_noise_info(spec)) {
        out.noise = estimate_noise_info(spec, data.y - out.fit.coefficients().linear_predictor(data.X));
    }
    const auto rows = loss_scale_correction(spec, out.raw_rows, out.noise);
    out.estimates = desparsify(spec, work, work_fit, rows);
    return out;
}

ExperimentResult run_ci_experiment(const DgpConfig& cfg, const LossSpec& spec, const ExperimentOptions& opts)
{
    if (opts.replications < 1) throw InvalidArgument("experiment needs at least one replication");
    const Dgp dgp(cfg);
    std::vector<ReplicationOutcome> outcomes(static_cast<std::size_t>(opts.replications));
    for_each_replication(opts.replications, opts.threads, [&](int r) {
        outcomes[static_cast<std::size_t>(r)] = run_replication(dgp, spec, opts.pipeline, static_cast<std::uint64_t>(r));
    });

    ExperimentResult res;
    double cov_s0 = 0.0, cov_s0c = 0.0, len_s0 = 0.0, len_s0c = 0.0;
    const double sqrt_n = std::sqrt(static_cast<double>(cfg.n));
    for (auto& outcome : outcomes) {
        res.replications.push_back(outcome.summary);
        if (outcome.summary.failed) {
            ++res.failures;
            continue;
        }
        for (const auto& est : outcome.estimates) {
            CoordinateRecord rec;
            rec.rep = outcome.summary.rep;
            rec.j = est.j;
            rec.beta0 = dgp.beta0()(est.j);
            rec.beta_hat = est.beta_hat_j;
            rec.b_hat = est.b_hat_j;
            rec.sigma_hat = est.sigma_hat_j;
            std::tie(rec.ci_lo, rec.ci_hi) = confidence_interval(est, opts.pipeline.alpha);
            rec.covered = rec.ci_lo <= rec.beta0 && rec.beta0 <= rec.ci_hi;
            rec.length = rec.ci_hi - rec.ci_lo;
            rec.p_value = p_value(est);
            rec.in_s0 = rec.beta0 != 0.0;
            rec.z = sqrt_n * (rec.b_hat - rec.beta0) / rec.sigma_hat;
            if (rec.in_s0) {
                ++res.count_s0;
                cov_s0 += rec.covered ? 1.0 : 0.0;
                len_s0 += rec.length;
            } else {
                ++res.count_s0c;
                cov_s0c += rec.covered ? 1.0 : 0.0;
                len_s0c += rec.length;
            }
            res.records.push_back(rec);
        }
    }
    const auto nan = std::numeric_limits<double>::quiet_NaN();
    const auto s0 = static_cast<double>(res.count_s0);
    const auto s0c = static_cast<double>(res.count_s0c);
    res.coverage_s0 = res.count_s0 ? cov_s0 / s0 : nan;
    res.length_s0 = res.count_s0 ? len_s0 / s0 : nan;
    res.coverage_s0c = res.count_s0c ? cov_s0c / s0c : nan;
    res.length_s0c = res.count_s0c ? len_s0c / s0c : nan;
    return res;
}

FwerResult run_fwer_experiment(const DgpConfig& cfg, const LossSpec& spec, const ExperimentOptions& opts)
{
    if (opts.replications < 1) throw InvalidArgument("experiment needs at least one replication");
    const Dgp dgp(cfg);
    std::vector<ReplicationOutcome> outcomes(static_cast<std::size_t>(opts.replications));
    for_each_replication(opts.replications, opts.threads, [&](int r) {
        outcomes[static_cast<std::size_t>(r)] = run_replication(dgp, spec, opts.pipeline, static_cast<std::uint64_t>(r));
    });

    FwerResult res;
    double tpr_sum = 0.0, fwer_events = 0.0;
    for (auto& outcome : outcomes) {
        res.details.push_back(outcome.summary);
        if (outcome.summary.failed) {
            ++res.failures;
            continue;
        }
        ++res.replications;
        std::vector<double> raw;
        for (const auto& est : outcome.estimates) raw.push_back(p_value(est));
        const auto holm = holm_adjust(raw);
        std::size_t hits = 0, s0 = 0;
        bool false_rejection = false;
        for (std::size_t k = 0; k < holm.size(); ++k) {
            const bool reject = holm[k] <= opts.pipeline.alpha;
            if (dgp.beta0()(outcome.estimates[k].j) != 0.0) {
                ++s0;
                hits += reject ? 1 : 0;
            } else if (reject) {
                false_rejection = true;
            }
        }
        if (s0 == 0) {
            res.tpr_defined = false;
        } else {
            tpr_sum += static_cast<double>(hits) / static_cast<double>(s0);
        }
        fwer_events += false_rejection ? 1.0 : 0.0;
    }
    const double reps = static_cast<double>(res.replications);
    res.tpr = res.tpr_defined && res.replications > 0 ? tpr_sum / reps : std::numeric_limits<double>::quiet_NaN();
    res.fwer = res.replications > 0 ? fwer_events / reps : std::numeric_limits<double>::quiet_NaN();
    return res;
}

std::pair<double, double> known_variance_coverage(const ExperimentResult& result, double alpha)
{
    std::map<Index, std::pair<double, double>> moments; // sum, sum of squares
    std::map<Index, double> counts;
    for (const auto& rec : result.records) {
        auto& m = moments[rec.j];
        m.first += rec.b_hat;
        m.second += rec.b_hat * rec.b_hat;
        counts[rec.j] += 1.0;
    }
    std::map<Index, std::pair<double, double>> mean_sd;
    for (const auto& [j, m] : moments) {
        const double c = counts[j];
        const double mean = m.first / c;
        const double var = c > 1.0 ? std::max(m.second - c * mean * mean, 0.0) / (c - 1.0) : 0.0;
        mean_sd[j] = {mean, std::sqrt(var)};
    }
    const double z = normal_quantile(1.0 - alpha / 2.0);
    double cov_s0 = 0.0, cov_s0c = 0.0, n_s0 = 0.0, n_s0c = 0.0;
    for (const auto& rec : result.records) {
        const bool covered = std::abs(rec.b_hat - rec.beta0) <= z * mean_sd[rec.j].second;
        (rec.in_s0 ? cov_s0 : cov_s0c) += covered ? 1.0 : 0.0;
        (rec.in_s0 ? n_s0 : n_s0c) += 1.0;
    }
    const auto nan = std::numeric_limits<double>::quiet_NaN();
    return {n_s0 > 0 ? cov_s0 / n_s0 : nan, n_s0c > 0 ? cov_s0c / n_s0c : nan};
}

StandardizedExport export_standardized(const ExperimentResult& result)
{
    StandardizedExport out;
    std::map<Index, std::vector<double>> by_j;
    for (const auto& rec : result.records) {
        out.rows.push_back({rec.j, rec.rep, rec.z});
        by_j[rec.j].push_back(rec.z);
    }
    for (auto& [j, values] : by_j) out.ks_distance.emplace_back(j, ks_distance_normal(std::move(values)));
    return out;
}

double ks_distance_normal(std::vector<double> values)
{
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double m = static_cast<double>(values.size());
    double d = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double f = normal_cdf(values[i]);
        d = std::max({d, static_cast<double>(i + 1) / m - f, f - static_cast<double>(i) / m});
    }
    return d;
}

double ks_pvalue(double distance, std::size_t count)
{
    if (count == 0) return 1.0;
    const double rn = std::sqrt(static_cast<double>(count));
    const double t = (rn + 0.12 + 0.11 / rn) * distance;
    if (t < 0.2) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * t * t);
        sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

} // namespace dslasso
