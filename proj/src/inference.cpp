#include "dslasso/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

namespace dslasso {

namespace {

void check_alpha(double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
}

void check_pvals(const std::vector<double>& pvals)
{
    for (double v : pvals) {
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("p-values must lie in [0, 1]");
    }
}

std::vector<std::size_t> ascending_order(const std::vector<double>& pvals)
{
    std::vector<std::size_t> order(pvals.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
    return order;
}

} // namespace

double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double normal_quantile(double prob)
{
    if (!(prob > 0.0 && prob < 1.0)) throw InvalidArgument("normal_quantile: probability must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), prob);
}

std::pair<double, double> confidence_interval(const DesparsifiedEstimate& est, double alpha)
{
    check_alpha(alpha);
    const double half = normal_quantile(1.0 - alpha / 2.0) * est.sigma_hat_j / std::sqrt(static_cast<double>(est.n));
    return {est.b_hat_j - half, est.b_hat_j + half};
}

double p_value(const DesparsifiedEstimate& est)
{
    if (!(est.sigma_hat_j > 0.0)) throw InvalidArgument("p_value: sigma_hat must be positive");
    const double z = std::sqrt(static_cast<double>(est.n)) * std::abs(est.b_hat_j) / est.sigma_hat_j;
    // 2 (1 - Phi(z)) without cancellation
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

std::vector<double> holm_adjust(const std::vector<double>& pvals)
{
    check_pvals(pvals);
    const std::size_t m = pvals.size();
    const auto order = ascending_order(pvals);
    std::vector<double> out(m);
    double running = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double v = std::min(1.0, static_cast<double>(m - i) * pvals[order[i]]);
        running = std::max(running, v);
        out[order[i]] = running;
    }
    return out;
}

std::vector<double> bh_adjust(const std::vector<double>& pvals)
{
    check_pvals(pvals);
    const std::size_t m = pvals.size();
    const auto order = ascending_order(pvals);
    std::vector<double> out(m);
    double running = 1.0;
    for (std::size_t i = m; i-- > 0;) {
        // ratio first: m / (i + 1) >= 1, so the product never rounds below the raw value
        const double v = std::min(1.0, pvals[order[i]] * (static_cast<double>(m) / static_cast<double>(i + 1)));
        running = std::min(running, v);
        out[order[i]] = running;
    }
    return out;
}

std::vector<Index> threshold_select(const std::vector<DesparsifiedEstimate>& ests, Index p)
{
    if (p < 2) throw InvalidArgument("threshold_select: p must be at least 2");
    std::vector<Index> out;
    for (const auto& est : ests) {
        const double level =
            2.0 * est.sigma_hat_j * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(est.n));
        if (std::abs(est.b_hat_j) > level) out.push_back(est.j);
    }
    return out;
}

InferenceReport make_report(const std::vector<DesparsifiedEstimate>& ests, double alpha, Index p)
{
    check_alpha(alpha);
    InferenceReport rep;
    rep.alpha = alpha;
    rep.p = p;
    rep.n = ests.empty() ? 0 : ests.front().n;
    std::vector<double> raw;
    raw.reserve(ests.size());
    for (const auto& est : ests) raw.push_back(p_value(est));
    const auto holm = holm_adjust(raw);
    const auto bh = bh_adjust(raw);
    const auto selected = p >= 2 ? threshold_select(ests, p) : std::vector<Index>{};

    for (std::size_t k = 0; k < ests.size(); ++k) {
        InferenceRecord r;
        r.j = ests[k].j;
        r.b_hat = ests[k].b_hat_j;
        r.sigma_hat = ests[k].sigma_hat_j;
        std::tie(r.ci_lo, r.ci_hi) = confidence_interval(ests[k], alpha);
        r.p_value = raw[k];
        r.p_holm = holm[k];
        r.p_bh = bh[k];
        r.reject_holm = holm[k] <= alpha;
        r.reject_bh = bh[k] <= alpha;
        r.reject_threshold = std::find(selected.begin(), selected.end(), r.j) != selected.end();
        rep.records.push_back(r);
    }
    return rep;
}

} // namespace dslasso
