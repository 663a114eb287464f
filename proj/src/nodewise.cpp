#include "dslasso/nodewise.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "dslasso/detail/coordinate_descent.hpp"

namespace dslasso {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Sigma_{-j,-j} and Sigma_{-j,j}
void split_gram(const MatrixXd& S, Index j, MatrixXd& G, VectorXd& c)
{
    const Index p = S.rows();
    const Index m = p - 1;
    G.resize(m, m);
    c.resize(m);
    for (Index b = 0, kb = 0; kb < p; ++kb) {
        if (kb == j) continue;
        c(b) = S(kb, j);
        for (Index a = 0, ka = 0; ka < p; ++ka) {
            if (ka == j) continue;
            G(a, b) = S(ka, kb);
            ++a;
        }
        ++b;
    }
}

} // namespace

// Nearest double t to tau_sq with (1 / t) * t == 1 in floating point, so the
// diagonal identity holds without rounding slack. Most values need a step or
// two; a few sit in runs of several thousand ulps (still ~1e-12 relative).
double detail::exactly_invertible(double tau_sq)
{
    double up = tau_sq, down = tau_sq;
    for (int step = 0; step < (1 << 20); ++step) {
        if ((1.0 / down) * down == 1.0) return down;
        if ((1.0 / up) * up == 1.0) return up;
        up = std::nextafter(up, std::numeric_limits<double>::infinity());
        down = std::nextafter(down, 0.0);
    }
    return tau_sq;
}

namespace {

PrecisionRow assemble(Index j, Index p, VectorXd gamma, double rss_over_n, double lambda_j)
{
    PrecisionRow row;
    row.j = j;
    row.lambda_j = lambda_j;
    row.tau_sq = rss_over_n + lambda_j * gamma.cwiseAbs().sum();
    if (!(row.tau_sq >= 1e-12)) {
        throw DegenerateError("nodewise: column " + std::to_string(j) +
                              " is (numerically) in the span of the other columns (tau^2 = " +
                              std::to_string(row.tau_sq) + ")");
    }
    row.tau_sq = detail::exactly_invertible(row.tau_sq);
    row.theta_row.resize(p);
    for (Index k = 0, g = 0; k < p; ++k) {
        if (k == j) {
            row.theta_row(k) = 1.0 / row.tau_sq;
        } else {
            row.theta_row(k) = -gamma(g++) / row.tau_sq;
        }
    }
    row.gamma = std::move(gamma);
    return row;
}

// Returns gamma and the plain-Lasso penalty it satisfies the KKT conditions for.
std::pair<VectorXd, double> solve_row(const MatrixXd& G, const VectorXd& c, double s_jj, double lambda,
                                      NodewiseMethod method, const SolverOptions& opts)
{
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidArgument("nodewise: lambda must be positive");
    if (method == NodewiseMethod::sqrt_lasso) {
        SqrtLassoResult res = sqrt_lasso_gram(G, c, s_jj, lambda, opts);
        if (res.degenerate) throw DegenerateError("nodewise: square-root Lasso residual vanished");
        return {std::move(res.gamma), res.lasso_penalty};
    }
    VectorXd gamma = VectorXd::Zero(c.size());
    VectorXd grad = c;
    const VectorXd pf = VectorXd::Ones(c.size());
    const auto cd = detail::gram_cd(G, lambda, pf, gamma, grad, opts.tol, opts.max_iter);
    if (!cd.converged) throw ConvergenceError("nodewise Lasso did not converge");
    return {std::move(gamma), lambda};
}

double heldout_error(const MatrixXd& G, const VectorXd& c, double s_jj, const VectorXd& gamma)
{
    return s_jj - 2.0 * gamma.dot(c) + gamma.dot(G * gamma);
}

double resolve_lambda(const WeightedDesign& wd, Index j, const NodewiseConfig& config)
{
    switch (config.rule) {
        case NodewiseLambdaRule::fixed:
            if (!(config.fixed_lambda > 0.0)) throw InvalidArgument("nodewise: fixed lambda must be positive");
            return config.fixed_lambda;
        case NodewiseLambdaRule::universal: {
            const double p = static_cast<double>(std::max<Index>(wd.p(), 2));
            return config.universal_c * std::sqrt(std::log(p) / static_cast<double>(wd.n()));
        }
        case NodewiseLambdaRule::cross_validation: return nodewise_cv_lambda(wd, j, config);
    }
    return 0.0;
}

// Fold Grams shared by every column of one precision_estimate call.
struct FoldGrams
{
    std::vector<MatrixXd> train, test;
};

FoldGrams fold_grams(const WeightedDesign& wd, const MatrixXd& full, const NodewiseConfig& config)
{
    const Index n = wd.n();
    if (n < 2 * static_cast<Index>(config.n_folds)) throw InvalidArgument("nodewise CV needs n >= 2 * n_folds");
    const std::vector<int> folds = make_folds(n, config.n_folds, config.cv_seed);
    FoldGrams fg;
    const MatrixXd total = full * static_cast<double>(n);
    for (int f = 0; f < config.n_folds; ++f) {
        std::vector<Index> rows;
        for (Index i = 0; i < n; ++i) {
            if (folds[static_cast<std::size_t>(i)] == f) rows.push_back(i);
        }
        MatrixXd part(static_cast<Index>(rows.size()), wd.p());
        for (Index r = 0; r < part.rows(); ++r) part.row(r) = wd.WX.row(rows[static_cast<std::size_t>(r)]);
        const MatrixXd test_sum = part.transpose() * part;
        const double nt = static_cast<double>(rows.size());
        fg.test.push_back(test_sum / nt);
        fg.train.push_back((total - test_sum) / (static_cast<double>(n) - nt));
    }
    return fg;
}

double cv_lambda_from_grams(const MatrixXd& full, const FoldGrams& fg, Index j, const NodewiseConfig& config)
{
    MatrixXd G;
    VectorXd c;
    split_gram(full, j, G, c);
    if (c.size() == 0) return 1.0;
    const double lam_max = c.cwiseAbs().maxCoeff();
    if (!(lam_max > 0.0)) return 1.0; // column orthogonal to the rest: any lambda gives gamma = 0
    const std::vector<double> path = make_lambda_path(lam_max, config.path_len, config.min_ratio);

    SolverOptions opts;
    const VectorXd pf = VectorXd::Ones(c.size());
    std::vector<double> err(path.size(), 0.0);
    MatrixXd Gt, Ge;
    VectorXd ct, ce;
    for (std::size_t f = 0; f < fg.train.size(); ++f) {
        split_gram(fg.train[f], j, Gt, ct);
        split_gram(fg.test[f], j, Ge, ce);
        VectorXd gamma = VectorXd::Zero(ct.size());
        VectorXd grad = ct;
        for (std::size_t k = 0; k < path.size(); ++k) {
            detail::gram_cd(Gt, path[k], pf, gamma, grad, opts.tol, opts.max_iter);
            err[k] += heldout_error(Ge, ce, fg.test[f](j, j), gamma);
        }
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < path.size(); ++k) {
        if (err[k] < err[best]) best = k;
    }
    return path[best];
}

} // namespace

MatrixXd WeightedDesign::sigma_hat() const
{
    return WX.transpose() * WX / static_cast<double>(WX.rows());
}

WeightedDesign build_weighted_design(const LossSpec& spec, const Dataset& data, const Coefficients& beta_hat)
{
    spec.validate();
    data.validate(spec);
    if (beta_hat.beta.size() != data.p()) throw DimensionError("weighted design: coefficient length mismatch");
    WeightedDesign wd;
    wd.W_diag.resize(data.n());
    if (spec.family == LossFamily::quantile || spec.family == LossFamily::huber) {
        wd.W_diag.setOnes();
    } else {
        const VectorXd u = beta_hat.linear_predictor(data.X);
        for (Index i = 0; i < data.n(); ++i) {
            const double v = curvature_weight(spec, u(i), data.y(i));
            if (!(v > 0.0)) {
                throw DegenerateError("weighted design: non-positive curvature weight at row " + std::to_string(i));
            }
            wd.W_diag(i) = std::sqrt(v);
        }
    }
    wd.WX = wd.W_diag.asDiagonal() * data.X;
    return wd;
}

WeightedDesign unweighted_design(const MatrixXd& X)
{
    return {VectorXd::Ones(X.rows()), X};
}

SolverOptions nodewise_solver_options()
{
    SolverOptions opts;
    opts.tol = 1e-12;
    return opts;
}

PrecisionRow nodewise_row_gram(const MatrixXd& sigma_hat, Index j, double lambda, NodewiseMethod method,
                               const SolverOptions& opts)
{
    const Index p = sigma_hat.rows();
    if (j < 0 || j >= p) throw DimensionError("nodewise: column index out of range");
    MatrixXd G;
    VectorXd c;
    split_gram(sigma_hat, j, G, c);
    auto [gamma, pen] = solve_row(G, c, sigma_hat(j, j), lambda, method, opts);
    const double rss = std::max(sigma_hat(j, j) - 2.0 * gamma.dot(c) + gamma.dot(G * gamma), 0.0);
    return assemble(j, p, std::move(gamma), rss, pen);
}

PrecisionRow nodewise_row(const WeightedDesign& wd, Index j, double lambda, NodewiseMethod method,
                          const SolverOptions& opts)
{
    const Index p = wd.p();
    if (j < 0 || j >= p) throw DimensionError("nodewise: column index out of range");
    const MatrixXd S = wd.sigma_hat();
    MatrixXd G;
    VectorXd c;
    split_gram(S, j, G, c);
    auto [gamma, pen] = solve_row(G, c, S(j, j), lambda, method, opts);

    VectorXd resid = wd.WX.col(j);
    for (Index k = 0, g = 0; k < p; ++k) {
        if (k != j) resid.noalias() -= gamma(g++) * wd.WX.col(k);
    }
    return assemble(j, p, std::move(gamma), resid.squaredNorm() / static_cast<double>(wd.n()), pen);
}

double nodewise_cv_lambda(const WeightedDesign& wd, Index j, const NodewiseConfig& config)
{
    const MatrixXd S = wd.sigma_hat();
    return cv_lambda_from_grams(S, fold_grams(wd, S, config), j, config);
}

std::vector<PrecisionRow> precision_estimate(const WeightedDesign& wd,
                                             const std::vector<Index>& columns,
                                             const NodewiseConfig& config)
{
    if (columns.empty()) throw InvalidArgument("precision_estimate: no columns requested");
    for (Index j : columns) {
        if (j < 0 || j >= wd.p()) throw DimensionError("precision_estimate: column index out of range");
    }
    const MatrixXd S = wd.sigma_hat();
    FoldGrams fg;
    if (config.rule == NodewiseLambdaRule::cross_validation) fg = fold_grams(wd, S, config);
    const SolverOptions opts = nodewise_solver_options();

    std::vector<PrecisionRow> rows(columns.size());
    auto compute = [&](std::size_t idx) {
        const Index j = columns[idx];
        const double lambda = config.rule == NodewiseLambdaRule::cross_validation
                                  ? cv_lambda_from_grams(S, fg, j, config)
                                  : resolve_lambda(wd, j, config);
        PrecisionRow row = nodewise_row_gram(S, j, lambda, config.method, opts);
        // tau^2 from the residual itself rather than the Gram expansion
        VectorXd resid = wd.WX.col(j);
        for (Index k = 0, g = 0; k < wd.p(); ++k) {
            if (k != j) resid.noalias() -= row.gamma(g++) * wd.WX.col(k);
        }
        rows[idx] = assemble(j, wd.p(), std::move(row.gamma), resid.squaredNorm() / static_cast<double>(wd.n()),
                             row.lambda_j);
    };

    const int workers = std::max(1, std::min<int>(config.threads, static_cast<int>(columns.size())));
    if (workers == 1) {
        for (std::size_t idx = 0; idx < columns.size(); ++idx) compute(idx);
        return rows;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (std::size_t idx = next++; idx < columns.size(); idx = next++) {
                try {
                    compute(idx);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    return rows;
}

std::vector<PrecisionRow> precision_estimate(const LossSpec& spec,
                                             const Dataset& data,
                                             const Coefficients& beta_hat,
                                             const std::vector<Index>& columns,
                                             const NodewiseConfig& config)
{
    return precision_estimate(build_weighted_design(spec, data, beta_hat), columns, config);
}

double nodewise_kkt_deviation(const MatrixXd& sigma_hat, const PrecisionRow& row)
{
    VectorXd r = sigma_hat * row.theta_row;
    r(row.j) -= 1.0;
    return r.cwiseAbs().maxCoeff();
}

double loss_scale(const LossSpec& spec, const NoiseInfo& info)
{
    switch (spec.family) {
        case LossFamily::quadratic:
        case LossFamily::logistic: return 1.0;
        case LossFamily::quantile: {
            if (!info.density_at_zero) throw InvalidArgument("check loss needs the error density at zero");
            const double f0 = *info.density_at_zero;
            if (!(f0 > 0.0) || !std::isfinite(f0)) throw InvalidArgument("error density at zero must be positive");
            return 1.0 / f0;
        }
        case LossFamily::huber: {
            if (!info.cdf_upper || !info.cdf_lower) throw InvalidArgument("Huber loss needs F(K) and F(-K)");
            const double mass = *info.cdf_upper - *info.cdf_lower;
            if (!(mass > 0.0) || mass > 1.0) throw InvalidArgument("F(K) - F(-K) must lie in (0, 1]");
            return spec.huber_k / mass;
        }
    }
    return 1.0;
}

std::vector<PrecisionRow> loss_scale_correction(const LossSpec& spec, std::vector<PrecisionRow> rows,
                                                const NoiseInfo& info)
{
    const double scale = loss_scale(spec, info);
    if (scale == 1.0) return rows;
    for (auto& row : rows) {
        row.theta_row *= scale;
        row.tau_sq /= scale;
    }
    return rows;
}

NoiseInfo estimate_noise_info(const LossSpec& spec, const VectorXd& residuals)
{
    NoiseInfo info;
    info.estimated = true;
    const Index n = residuals.size();
    if (n < 2) throw InvalidArgument("noise estimate needs at least two residuals");
    if (spec.family == LossFamily::quantile) {
        const double mean = residuals.mean();
        const double sd = std::sqrt((residuals.array() - mean).square().sum() / static_cast<double>(n - 1));
        std::vector<double> sorted(residuals.data(), residuals.data() + n);
        std::sort(sorted.begin(), sorted.end());
        auto quant = [&](double a) {
            const double pos = a * static_cast<double>(n - 1);
            const auto lo = static_cast<std::size_t>(std::floor(pos));
            const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
            return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
        };
        const double iqr = quant(0.75) - quant(0.25);
        double spread = std::min(sd, iqr / 1.34);
        if (!(spread > 0.0)) spread = sd;
        if (!(spread > 0.0)) throw DegenerateError("noise estimate: residuals are constant");
        const double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
        double sum = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double z = residuals(i) / h;
            sum += std::exp(-0.5 * z * z);
        }
        info.density_at_zero = sum / (static_cast<double>(n) * h * std::sqrt(2.0 * M_PI));
    } else if (spec.family == LossFamily::huber) {
        const double k = spec.huber_k;
        const double inside =
            static_cast<double>((residuals.array().abs() <= k).count()) / static_cast<double>(n);
        info.cdf_upper = 0.5 + 0.5 * inside;
        info.cdf_lower = 0.5 - 0.5 * inside;
    }
    return info;
}

} // namespace dslasso
