#include "dslasso/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dslasso/detail/coordinate_descent.hpp"
#include "dslasso/rng.hpp"

namespace dslasso {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Solver coordinates: columns of X divided by `scale`, plus a trailing column
// of ones when an intercept is fitted (penalty factor 0).
struct Problem
{
    MatrixXd Xa;
    VectorXd y;
    VectorXd pf;
    VectorXd scale;
    Index p = 0;
    bool intercept = false;

    Index n() const { return Xa.rows(); }
};

Problem prepare(const LossSpec& spec, const Dataset& data, const SolverOptions& opts)
{
    spec.validate();
    data.validate(spec);
    Problem prob;
    prob.p = data.p();
    prob.intercept = opts.intercept;
    prob.y = data.y;
    prob.scale = VectorXd::Ones(data.p());
    if (opts.standardize) {
        for (Index k = 0; k < data.p(); ++k) {
            const double s = std::sqrt(data.X.col(k).squaredNorm() / static_cast<double>(data.n()));
            prob.scale(k) = s > 0.0 ? s : 1.0;
        }
    }
    const Index cols = data.p() + (opts.intercept ? 1 : 0);
    prob.Xa.resize(data.n(), cols);
    prob.Xa.leftCols(data.p()) = data.X * prob.scale.cwiseInverse().asDiagonal();
    prob.pf = VectorXd::Ones(cols);
    if (opts.intercept) {
        prob.Xa.col(data.p()).setOnes();
        prob.pf(data.p()) = 0.0;
    }
    return prob;
}

Coefficients to_coefficients(const Problem& prob, const VectorXd& b)
{
    Coefficients coef;
    coef.beta = b.head(prob.p).cwiseQuotient(prob.scale);
    if (prob.intercept) coef.intercept = b(prob.p);
    return coef;
}

VectorXd from_coefficients(const Problem& prob, const Coefficients& coef)
{
    VectorXd b = VectorXd::Zero(prob.Xa.cols());
    if (coef.beta.size() != prob.p) {
        throw DimensionError("warm start has length " + std::to_string(coef.beta.size()) + ", expected " +
                             std::to_string(prob.p));
    }
    b.head(prob.p) = coef.beta.cwiseProduct(prob.scale);
    if (prob.intercept) b(prob.p) = coef.intercept.value_or(0.0);
    return b;
}

double solver_objective(const LossSpec& spec, const Problem& prob, const VectorXd& eta, const VectorXd& b,
                        double lambda)
{
    return empirical_risk(spec, eta, prob.y) + lambda * b.cwiseAbs().dot(prob.pf);
}

struct EngineResult
{
    VectorXd b;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;
};

// ---------------------------------------------------------------- quadratic

class QuadraticEngine
{
public:
    explicit QuadraticEngine(const Problem& prob) : prob_(prob)
    {
        const double n = static_cast<double>(prob.n());
        G_ = 2.0 / n * (prob.Xa.transpose() * prob.Xa);
        c_ = 2.0 / n * (prob.Xa.transpose() * prob.y);
        yy_ = prob.y.squaredNorm() / n;
    }

    EngineResult solve(double lambda, VectorXd b, const SolverOptions& opts) const
    {
        EngineResult res;
        VectorXd grad = c_ - G_ * b;
        res.trace.push_back(objective(b, grad, lambda));
        const auto cd = detail::gram_cd(G_, lambda, prob_.pf, b, grad, opts.tol, opts.max_iter);
        res.trace.push_back(objective(b, grad, lambda));
        res.iterations = cd.sweeps;
        res.converged = cd.converged;
        res.b = std::move(b);
        return res;
    }

private:
    double objective(const VectorXd& b, const VectorXd& grad, double lambda) const
    {
        return -0.5 * b.dot(c_ + grad) + yy_ + lambda * b.cwiseAbs().dot(prob_.pf);
    }

    const Problem& prob_;
    MatrixXd G_;
    VectorXd c_;
    double yy_ = 0.0;
};

// ------------------------------------------------------ huber and logistic

EngineResult solve_reweighted(const LossSpec& spec, const Problem& prob, double lambda, VectorXd b,
                              const SolverOptions& opts)
{
    EngineResult res;
    const Index n = prob.n();
    VectorXd eta = prob.Xa * b;
    double f = solver_objective(spec, prob, eta, b, lambda);
    res.trace.push_back(f);

    VectorXd v(n), z(n);
    // Inner solves are inexact early on; their accuracy follows the outer progress.
    double inner_tol = std::max(opts.tol, 1e-4);
    for (int outer = 0; outer < opts.max_iter; ++outer) {
        for (Index i = 0; i < n; ++i) {
            const double w = weight(spec, eta(i), prob.y(i));
            if (spec.family == LossFamily::huber) {
                v(i) = 1.0 / std::max(spec.huber_k, std::abs(prob.y(i) - eta(i)));
            } else {
                v(i) = std::max(curvature_weight(spec, eta(i), prob.y(i)), 1e-5);
            }
            z(i) = eta(i) - w / v(i);
        }
        VectorXd b_new = b;
        VectorXd resid = z - eta;
        const auto cd = detail::weighted_cd(prob.Xa, v, lambda, prob.pf, b_new, resid, inner_tol, opts.max_iter);
        res.iterations += cd.sweeps;

        VectorXd eta_new = prob.Xa * b_new;
        double f_new = solver_objective(spec, prob, eta_new, b_new, lambda);
        if (f_new > f) {
            // Newton step overshot (logistic); backtrack along the segment.
            const VectorXd db = b_new - b;
            const VectorXd deta = eta_new - eta;
            bool accepted = false;
            double t = 0.5;
            for (int tries = 0; tries < 60; ++tries, t *= 0.5) {
                VectorXd b_t = b + t * db;
                VectorXd eta_t = eta + t * deta;
                const double f_t = solver_objective(spec, prob, eta_t, b_t, lambda);
                if (f_t <= f) {
                    b_new = std::move(b_t);
                    eta_new = std::move(eta_t);
                    f_new = f_t;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) {
                // No descent available at working precision.
                res.converged = db.cwiseAbs().maxCoeff() < std::sqrt(opts.tol);
                break;
            }
        }
        const double delta = (b_new - b).cwiseAbs().maxCoeff();
        b = std::move(b_new);
        eta = std::move(eta_new);
        f = f_new;
        res.trace.push_back(f);
        if (delta < opts.tol && cd.converged && inner_tol <= opts.tol) {
            res.converged = true;
            break;
        }
        inner_tol = std::max(opts.tol, std::min(inner_tol, 1e-2 * delta));
    }
    res.b = std::move(b);
    return res;
}

// ----------------------------------------------------------------- quantile

double check_prox(double v, double t, double q)
{
    if (v > t * q) return v - t * q;
    if (v < -t * (1.0 - q)) return v + t * (1.0 - q);
    return 0.0;
}

// Moves an approximate solution to the vertex defined by its support: the
// |A| smallest residuals are set to zero exactly. Accepted only if the
// objective does not increase.
VectorXd polish_quantile(const LossSpec& spec, const Problem& prob, double lambda, const VectorXd& b)
{
    VectorXd best = b;
    double best_f = solver_objective(spec, prob, prob.Xa * b, b, lambda);
    const double bmax = std::max(1.0, b.cwiseAbs().maxCoeff());

    for (double rel : {1e-9, 1e-7, 1e-5, 1e-3}) {
        std::vector<Index> support;
        for (Index k = 0; k < b.size(); ++k) {
            if (prob.pf(k) == 0.0 || std::abs(b(k)) > rel * bmax) support.push_back(k);
        }
        const auto m = static_cast<Index>(support.size());
        VectorXd cand = VectorXd::Zero(b.size());
        if (m > 0) {
            if (m > prob.n()) continue;
            const VectorXd r = prob.y - prob.Xa * b;
            std::vector<Index> rows(static_cast<std::size_t>(prob.n()));
            std::iota(rows.begin(), rows.end(), Index{0});
            std::stable_sort(rows.begin(), rows.end(),
                             [&](Index a, Index c) { return std::abs(r(a)) < std::abs(r(c)); });
            MatrixXd A(m, m);
            VectorXd rhs(m);
            for (Index i = 0; i < m; ++i) {
                for (Index k = 0; k < m; ++k) A(i, k) = prob.Xa(rows[static_cast<std::size_t>(i)], support[k]);
                rhs(i) = prob.y(rows[static_cast<std::size_t>(i)]);
            }
            Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
            if (qr.rank() < m) continue;
            const VectorXd sol = qr.solve(rhs);
            for (Index k = 0; k < m; ++k) cand(support[k]) = sol(k);
        }
        const double f = solver_objective(spec, prob, prob.Xa * cand, cand, lambda);
        if (f <= best_f) {
            best_f = f;
            best = std::move(cand);
        }
    }
    return best;
}

// Looks for a subgradient selection on the zero-residual rows that satisfies
// the optimality conditions at b exactly (up to `tol`). On success stores the
// KKT residual under that selection.
bool certify_quantile(const LossSpec& spec, const Problem& prob, double lambda, const VectorXd& b, double tol,
                      double* residual)
{
    const Index n = prob.n();
    const double q = spec.quantile_q;
    const VectorXd r = prob.y - prob.Xa * b;
    const double zero_tol = 1e-10 * std::max(1.0, prob.y.cwiseAbs().maxCoeff());

    std::vector<Index> zero_rows, eq_cols;
    VectorXd g0 = VectorXd::Zero(b.size());
    for (Index i = 0; i < n; ++i) {
        if (std::abs(r(i)) <= zero_tol) {
            zero_rows.push_back(i);
        } else {
            g0 += (r(i) > 0.0 ? -q : 1.0 - q) * prob.Xa.row(i).transpose();
        }
    }
    g0 /= static_cast<double>(n);
    VectorXd target(b.size());
    for (Index k = 0; k < b.size(); ++k) {
        if (b(k) != 0.0 || prob.pf(k) == 0.0) {
            eq_cols.push_back(k);
            const double sgn = b(k) > 0.0 ? 1.0 : (b(k) < 0.0 ? -1.0 : 0.0);
            target(k) = -g0(k) - lambda * prob.pf(k) * sgn;
        }
    }

    const auto nz = static_cast<Index>(zero_rows.size());
    const auto ne = static_cast<Index>(eq_cols.size());
    VectorXd zeta = VectorXd::Constant(nz, 0.5 - q);
    if (ne > 0) {
        if (nz == 0) return false;
        MatrixXd A(ne, nz);
        VectorXd rhs(ne);
        for (Index e = 0; e < ne; ++e) {
            const Index k = eq_cols[static_cast<std::size_t>(e)];
            for (Index z = 0; z < nz; ++z) A(e, z) = prob.Xa(zero_rows[static_cast<std::size_t>(z)], k);
            rhs(e) = static_cast<double>(n) * target(k);
        }
        // closest selection to the centre of the box that solves the equalities
        const VectorXd shift = A.completeOrthogonalDecomposition().solve(rhs - A * zeta);
        zeta += shift;
        if ((A * zeta - rhs).cwiseAbs().maxCoeff() > tol * static_cast<double>(n)) return false;
    }
    if (nz > 0 && (zeta.maxCoeff() > 1.0 - q + tol || zeta.minCoeff() < -q - tol)) return false;

    VectorXd g = g0;
    for (Index z = 0; z < nz; ++z) {
        g += zeta(z) / static_cast<double>(n) * prob.Xa.row(zero_rows[static_cast<std::size_t>(z)]).transpose();
    }
    double worst = 0.0;
    for (Index k = 0; k < b.size(); ++k) {
        if (b(k) != 0.0) {
            worst = std::max(worst, std::abs(g(k) + lambda * prob.pf(k) * (b(k) > 0.0 ? 1.0 : -1.0)));
        } else {
            worst = std::max(worst, std::abs(g(k)) - lambda * prob.pf(k));
        }
    }
    if (worst > tol) return false;
    if (residual) *residual = std::max(worst, 0.0);
    return true;
}

EngineResult solve_quantile(const LossSpec& spec, const Problem& prob, const MatrixXd& XtX, double lambda,
                            VectorXd b, const SolverOptions& opts, double* certified_residual)
{
    EngineResult res;
    const Index n = prob.n();
    const double q = spec.quantile_q;
    const double sqrt_n = std::sqrt(static_cast<double>(n));
    const double sqrt_p = std::sqrt(static_cast<double>(prob.Xa.cols()));
    const double cert_tol = 1e-9;

    VectorXd eta = prob.Xa * b;
    VectorXd r = prob.y - eta;
    VectorXd u = VectorXd::Zero(n);
    const double spread = std::max(r.cwiseAbs().sum() / static_cast<double>(n), 1e-8);
    double sigma = 1.0 / (static_cast<double>(n) * spread);
    int rescales = 0;

    res.trace.push_back(solver_objective(spec, prob, eta, b, lambda));
    VectorXd best = b;
    double best_f = res.trace.back();
    auto try_polish = [&](const VectorXd& cand) {
        const VectorXd polished = polish_quantile(spec, prob, lambda, cand);
        const double f = solver_objective(spec, prob, prob.Xa * polished, polished, lambda);
        if (f <= best_f) {
            best_f = f;
            best = polished;
        }
        return certify_quantile(spec, prob, lambda, polished, cert_tol, certified_residual) && f <= best_f;
    };
    if (try_polish(b)) {
        res.converged = true;
    }

    for (int it = 0; it < opts.max_iter && !res.converged; ++it) {
        const VectorXd target = prob.y - r - u;
        VectorXd grad = prob.Xa.transpose() * target - XtX * b;
        const auto cd = detail::gram_cd(XtX, lambda / sigma, prob.pf, b, grad, opts.tol * 0.1, opts.max_iter);
        res.iterations += cd.sweeps;
        eta.noalias() = prob.Xa * b;

        const VectorXd r_old = r;
        const double t = 1.0 / (static_cast<double>(n) * sigma);
        const VectorXd shifted = prob.y - eta - u;
        for (Index i = 0; i < n; ++i) r(i) = check_prox(shifted(i), t, q);

        const VectorXd primal = eta + r - prob.y;
        u += primal;
        const double primal_norm = primal.norm();
        const double dual_norm = sigma * (prob.Xa.transpose() * (r - r_old)).norm();
        const double eps_primal =
            sqrt_n * opts.admm_tol_primal + opts.admm_tol_primal * std::max({eta.norm(), r.norm(), prob.y.norm()});
        const double eps_dual =
            sqrt_p * opts.admm_tol_dual + opts.admm_tol_dual * sigma * (prob.Xa.transpose() * u).norm();
        if (primal_norm <= eps_primal && dual_norm <= eps_dual) {
            res.converged = true;
            try_polish(b);
            break;
        }
        if (it % 25 == 24 && try_polish(b)) {
            res.converged = true;
            break;
        }
        // Penalty balancing; frozen after a while since a varying penalty can cycle.
        if (it % 10 == 9 && rescales < 50) {
            if (primal_norm > 10.0 * dual_norm) {
                sigma *= 2.0;
                u *= 0.5;
                ++rescales;
            } else if (dual_norm > 10.0 * primal_norm) {
                sigma *= 0.5;
                u *= 2.0;
                ++rescales;
            }
        }
    }
    const double f_admm = solver_objective(spec, prob, prob.Xa * b, b, lambda);
    if (f_admm < best_f) {
        best_f = f_admm;
        best = b;
    }
    res.trace.push_back(best_f);
    res.b = std::move(best);
    return res;
}

// ------------------------------------------------------------ intercept only

double intercept_only(const LossSpec& spec, const VectorXd& y)
{
    const auto n = static_cast<double>(y.size());
    switch (spec.family) {
        case LossFamily::quadratic:
            return y.mean();
        case LossFamily::logistic: {
            const double m = y.mean();
            if (m <= 0.0 || m >= 1.0) throw DegenerateError("logistic intercept: response has a single class");
            return std::log(m / (1.0 - m));
        }
        case LossFamily::quantile: {
            std::vector<double> sorted(y.data(), y.data() + y.size());
            std::sort(sorted.begin(), sorted.end());
            const auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(spec.quantile_q * n)));
            return sorted[k - 1];
        }
        case LossFamily::huber: {
            double lo = y.minCoeff(), hi = y.maxCoeff();
            for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
                const double mid = 0.5 * (lo + hi);
                double g = 0.0;
                for (Index i = 0; i < y.size(); ++i) g += weight(spec, mid, y(i));
                (g > 0.0 ? hi : lo) = mid;
            }
            return 0.5 * (lo + hi);
        }
    }
    return 0.0;
}

class PathSolver
{
public:
    PathSolver(const LossSpec& spec, const Dataset& data, const SolverOptions& opts)
        : spec_(spec), data_(data), opts_(opts), prob_(prepare(spec, data, opts))
    {
        if (spec.family == LossFamily::quadratic) {
            quadratic_.emplace(prob_);
        } else if (spec.family == LossFamily::quantile) {
            XtX_ = prob_.Xa.transpose() * prob_.Xa;
        }
    }

    const Problem& problem() const { return prob_; }

    PenalizedFit solve(double lambda, const VectorXd& b0) const
    {
        if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be positive and finite");
        EngineResult res;
        double certified = -1.0;
        switch (spec_.family) {
            case LossFamily::quadratic: res = quadratic_->solve(lambda, b0, opts_); break;
            case LossFamily::huber:
            case LossFamily::logistic: res = solve_reweighted(spec_, prob_, lambda, b0, opts_); break;
            case LossFamily::quantile: res = solve_quantile(spec_, prob_, XtX_, lambda, b0, opts_, &certified); break;
        }
        PenalizedFit fit;
        const Coefficients coef = to_coefficients(prob_, res.b);
        fit.beta = coef.beta;
        fit.intercept = coef.intercept;
        fit.lambda = lambda;
        fit.penalty_weights = prob_.scale;
        fit.objective = penalized_objective(spec_, data_, coef, lambda, prob_.scale);
        for (Index k = 0; k < fit.beta.size(); ++k) {
            if (fit.beta(k) != 0.0) fit.active_set.push_back(k);
        }
        fit.iterations = res.iterations;
        fit.converged = res.converged;
        fit.objective_trace = std::move(res.trace);
        const KktReport kkt = kkt_report(spec_, data_, fit);
        // For the check loss the score at a kink row is a free subgradient element;
        // report the residual under the certifying selection when there is one.
        fit.kkt_residual = certified >= 0.0 ? certified : std::max({kkt.active, kkt.inactive_excess, kkt.intercept});
        return fit;
    }

    VectorXd initial() const
    {
        VectorXd b = VectorXd::Zero(prob_.Xa.cols());
        if (prob_.intercept) b(prob_.p) = intercept_only(spec_, prob_.y);
        return b;
    }

    VectorXd to_solver(const PenalizedFit& fit) const { return from_coefficients(prob_, fit.coefficients()); }

private:
    const LossSpec& spec_;
    const Dataset& data_;
    const SolverOptions& opts_;
    Problem prob_;
    std::optional<QuadraticEngine> quadratic_;
    MatrixXd XtX_;
};

void throw_if_not_converged(const PenalizedFit& fit)
{
    if (!fit.converged) {
        throw SolverNotConverged("solver did not converge at lambda = " + std::to_string(fit.lambda) +
                                     " (KKT residual " + std::to_string(fit.kkt_residual) + ")",
                                 fit);
    }
}

} // namespace

double penalized_objective(const LossSpec& spec,
                           const Dataset& data,
                           const Coefficients& coef,
                           double lambda,
                           const Eigen::VectorXd& penalty_weights)
{
    const double pen = penalty_weights.size() == 0 ? coef.beta.cwiseAbs().sum()
                                                   : coef.beta.cwiseAbs().dot(penalty_weights);
    return empirical_risk(spec, data, coef) + lambda * pen;
}

PenalizedFit fit_lasso(const LossSpec& spec,
                       const Dataset& data,
                       double lambda,
                       const SolverOptions& opts,
                       const Coefficients* warm_start)
{
    PathSolver solver(spec, data, opts);
    const VectorXd b0 = warm_start ? from_coefficients(solver.problem(), *warm_start) : solver.initial();
    PenalizedFit fit = solver.solve(lambda, b0);
    throw_if_not_converged(fit);
    return fit;
}

std::vector<PenalizedFit> fit_path(const LossSpec& spec,
                                   const Dataset& data,
                                   std::span<const double> lambdas,
                                   const SolverOptions& opts)
{
    PathSolver solver(spec, data, opts);
    std::vector<PenalizedFit> fits;
    fits.reserve(lambdas.size());
    VectorXd b = solver.initial();
    for (double lambda : lambdas) {
        fits.push_back(solver.solve(lambda, b));
        throw_if_not_converged(fits.back());
        b = solver.to_solver(fits.back());
    }
    return fits;
}

double lambda_max(const LossSpec& spec, const Dataset& data, const SolverOptions& opts)
{
    spec.validate();
    data.validate(spec);
    Coefficients zero{VectorXd::Zero(data.p()), std::nullopt};
    if (opts.intercept) zero.intercept = intercept_only(spec, data.y);
    const VectorXd g = score_matrix(spec, data, zero).mean();
    double lam = 0.0;
    for (Index k = 0; k < data.p(); ++k) {
        double scale = 1.0;
        if (opts.standardize) {
            const double s = std::sqrt(data.X.col(k).squaredNorm() / static_cast<double>(data.n()));
            scale = s > 0.0 ? s : 1.0;
        }
        lam = std::max(lam, std::abs(g(k)) / scale);
    }
    return lam;
}

std::vector<double> make_lambda_path(double lam_max, int len, double min_ratio)
{
    if (len < 1) throw InvalidArgument("lambda path needs at least one value");
    if (!(lam_max > 0.0)) throw InvalidArgument("lambda_max must be positive");
    if (!(min_ratio > 0.0 && min_ratio <= 1.0)) throw InvalidArgument("min_ratio must lie in (0, 1]");
    std::vector<double> values(static_cast<std::size_t>(len));
    if (len == 1) {
        values[0] = lam_max;
        return values;
    }
    const double step = std::log(min_ratio) / (len - 1);
    for (int k = 0; k < len; ++k) values[static_cast<std::size_t>(k)] = lam_max * std::exp(step * k);
    return values;
}

// --------------------------------------------------------------- sqrt lasso

SqrtLassoResult sqrt_lasso_gram(const Eigen::MatrixXd& S,
                                const Eigen::VectorXd& s,
                                double tt,
                                double lambda,
                                const SolverOptions& opts)
{
    if (!(lambda > 0.0)) throw InvalidArgument("sqrt-lasso: lambda must be positive");
    if (S.rows() != S.cols() || S.rows() != s.size()) throw DimensionError("sqrt-lasso: Gram dimensions disagree");

    SqrtLassoResult res;
    res.gamma = VectorXd::Zero(s.size());
    const VectorXd pf = VectorXd::Ones(s.size());
    VectorXd grad = s;
    auto rss = [&] { return std::max(tt - res.gamma.dot(s) - res.gamma.dot(grad), 0.0); };

    const double floor = 1e-12 * std::sqrt(std::max(tt, 0.0));
    double sigma = std::sqrt(rss());
    if (sigma <= floor) {
        res.degenerate = true;
        return res;
    }
    bool converged = false;
    for (int it = 0; it < opts.max_iter; ++it) {
        res.lasso_penalty = 2.0 * lambda * sigma;
        const auto cd = detail::gram_cd(S, res.lasso_penalty, pf, res.gamma, grad, opts.tol, opts.max_iter);
        res.iterations += cd.sweeps;
        const double fresh = std::sqrt(rss());
        if (fresh <= floor) {
            res.degenerate = true;
            sigma = fresh;
            converged = true;
            break;
        }
        const double change = std::abs(fresh - sigma);
        sigma = fresh;
        if (change <= opts.tol * std::max(1.0, sigma)) {
            converged = true;
            break;
        }
    }
    if (!converged) throw ConvergenceError("sqrt-lasso did not converge");
    res.sigma = sigma;
    res.objective = sigma + 2.0 * lambda * res.gamma.cwiseAbs().sum();
    return res;
}

SqrtLassoResult fit_sqrt_lasso(const Eigen::VectorXd& target,
                               const Eigen::MatrixXd& others,
                               double lambda,
                               const SolverOptions& opts)
{
    if (target.size() != others.rows()) throw DimensionError("sqrt-lasso: target length does not match rows");
    if (!target.allFinite() || !others.allFinite()) throw InvalidArgument("sqrt-lasso: non-finite input");
    const double n = static_cast<double>(target.size());
    const MatrixXd S = others.transpose() * others / n;
    const VectorXd s = others.transpose() * target / n;
    SqrtLassoResult res = sqrt_lasso_gram(S, s, target.squaredNorm() / n, lambda, opts);
    // Recompute the data term from the residual rather than the Gram expansion.
    res.sigma = (target - others * res.gamma).norm() / std::sqrt(n);
    res.objective = res.sigma + 2.0 * lambda * res.gamma.cwiseAbs().sum();
    return res;
}

// ------------------------------------------------------------- cross-validation

std::vector<int> make_folds(Index n, int n_folds, std::uint64_t seed)
{
    if (n_folds < 2) throw InvalidArgument("cross-validation needs at least 2 folds");
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    CounterRng rng(seed);
    rng.shuffle(perm);
    std::vector<int> folds(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < perm.size(); ++i) {
        folds[static_cast<std::size_t>(perm[i])] = static_cast<int>(i % static_cast<std::size_t>(n_folds));
    }
    return folds;
}

LambdaPath cv_select_lambda(const LossSpec& spec,
                            const Dataset& data,
                            const LambdaPathConfig& config,
                            std::uint64_t seed,
                            const SolverOptions& opts)
{
    spec.validate();
    data.validate(spec);
    if (data.n() < 2 * static_cast<Index>(config.n_folds)) {
        throw InvalidArgument("cross-validation needs n >= 2 * n_folds");
    }
    LambdaPath path;
    path.n_folds = config.n_folds;
    path.values = config.values.empty()
                      ? make_lambda_path(lambda_max(spec, data, opts), config.path_len, config.min_ratio)
                      : config.values;
    for (std::size_t k = 1; k < path.values.size(); ++k) {
        if (!(path.values[k] < path.values[k - 1])) throw InvalidArgument("lambda path must be strictly decreasing");
    }

    const std::vector<int> folds = make_folds(data.n(), config.n_folds, seed);
    std::vector<double> sums(path.values.size(), 0.0);
    int used = 0;
    for (int f = 0; f < config.n_folds; ++f) {
        std::vector<Index> train, test;
        for (Index i = 0; i < data.n(); ++i) (folds[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
        const Dataset train_data = data.subset_rows(train);
        const Dataset test_data = data.subset_rows(test);
        if (spec.family == LossFamily::logistic) {
            const double m = train_data.y.mean();
            if (m == 0.0 || m == 1.0) {
                ++path.skipped_folds;
                path.warnings.push_back("fold " + std::to_string(f) + " skipped: training response has one class");
                continue;
            }
        }
        const auto fits = fit_path(spec, train_data, path.values, opts);
        for (std::size_t k = 0; k < fits.size(); ++k) {
            sums[k] += empirical_risk(spec, test_data, fits[k].coefficients());
        }
        ++used;
    }
    if (used == 0) throw DegenerateError("cross-validation: every fold was degenerate");

    path.cv_errors.resize(sums.size());
    for (std::size_t k = 0; k < sums.size(); ++k) path.cv_errors[k] = sums[k] / used;
    path.selected = 0;
    for (std::size_t k = 1; k < path.cv_errors.size(); ++k) {
        if (path.cv_errors[k] < path.cv_errors[path.selected]) path.selected = k;
    }
    return path;
}

// ------------------------------------------------------------------- KKT

KktReport kkt_report(const LossSpec& spec, const Dataset& data, const PenalizedFit& fit)
{
    if (fit.beta.size() != data.p()) throw DimensionError("kkt: fit and data dimensions disagree");
    const Coefficients coef = fit.coefficients();
    const ScoreMatrix scores = score_matrix(spec, data, coef);
    const VectorXd g = scores.mean();
    const VectorXd pw = fit.penalty_weights.size() == 0 ? VectorXd::Ones(data.p()) : fit.penalty_weights;

    KktReport rep;
    rep.score_sup = g.cwiseAbs().maxCoeff();
    for (Index k = 0; k < data.p(); ++k) {
        const double lam = fit.lambda * pw(k);
        if (fit.beta(k) != 0.0) {
            const double sgn = fit.beta(k) > 0.0 ? 1.0 : -1.0;
            rep.active = std::max(rep.active, std::abs(g(k) + lam * sgn));
        } else {
            rep.inactive = std::max(rep.inactive, std::abs(g(k)));
            rep.inactive_excess = std::max(rep.inactive_excess, std::abs(g(k)) - lam);
        }
    }
    if (coef.intercept) {
        const Eigen::VectorXd u = coef.linear_predictor(data.X);
        double s = 0.0;
        for (Index i = 0; i < data.n(); ++i) s += weight(spec, u(i), data.y(i));
        rep.intercept = std::abs(s) / static_cast<double>(data.n());
    }
    return rep;
}

double kkt_check(const LossSpec& spec, const Dataset& data, const PenalizedFit& fit)
{
    return kkt_report(spec, data, fit).score_sup;
}

} // namespace dslasso
