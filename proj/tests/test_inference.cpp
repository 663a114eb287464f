#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dslasso/inference.hpp"
#include "dslasso/rng.hpp"

using namespace dslasso;

namespace {

DesparsifiedEstimate estimate(double b, double sigma, Index n, Index j = 0)
{
    DesparsifiedEstimate e;
    e.j = j;
    e.b_hat_j = b;
    e.beta_hat_j = b;
    e.sigma_hat_j = sigma;
    e.n = n;
    return e;
}

std::vector<double> random_pvalues(CounterRng& rng)
{
    const std::size_t m = 1 + rng.below(30);
    std::vector<double> p(m);
    for (auto& v : p) {
        // mix of tiny values, ties and ordinary ones
        const double u = rng.uniform();
        if (u < 0.2) v = std::pow(10.0, -1.0 - 8.0 * rng.uniform());
        else if (u < 0.3) v = 0.5;
        else v = rng.uniform();
    }
    return p;
}

// step-down Holm straight from the definition, O(m^2)
std::vector<double> holm_reference(const std::vector<double>& p)
{
    const std::size_t m = p.size();
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        // rank of p[i] with ties resolved by index
        double best = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const bool before = p[k] < p[i] || (p[k] == p[i] && k <= i);
            if (!before) continue;
            std::size_t rank = 0;
            for (std::size_t l = 0; l < m; ++l) rank += (p[l] < p[k] || (p[l] == p[k] && l < k)) ? 1 : 0;
            best = std::max(best, std::min(1.0, static_cast<double>(m - rank) * p[k]));
        }
        out[i] = best;
    }
    return out;
}

} // namespace

TEST_CASE("normal quantile and cdf")
{
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
    CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-12));
    for (double p : {1e-8, 0.01, 0.2, 0.5, 0.7, 0.99, 1 - 1e-8})
        CHECK(std::abs(normal_cdf(normal_quantile(p)) - p) <= 1e-9 * std::max(p, 1e-3));
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK_THROWS_AS(normal_quantile(0.0), InvalidArgument);
    CHECK_THROWS_AS(normal_quantile(1.0), InvalidArgument);
}

TEST_CASE("confidence interval examples")
{
    const auto [lo, hi] = confidence_interval(estimate(0.0, 1.0, 100), 0.05);
    CHECK(lo == doctest::Approx(-0.1959964).epsilon(1e-7));
    CHECK(hi == doctest::Approx(0.1959964).epsilon(1e-7));

    const auto [a, b] = confidence_interval(estimate(0.7, 2.0, 50), 1.0 - 1e-12);
    CHECK(std::abs(a - 0.7) < 1e-11);
    CHECK(std::abs(b - 0.7) < 1e-11);

    for (double alpha : {0.01, 0.1, 0.5}) {
        const auto [l, h] = confidence_interval(estimate(-0.3, 1.5, 400), alpha);
        CHECK(l <= -0.3);
        CHECK(h >= -0.3);
        CHECK((h - l) / 2 == doctest::Approx(normal_quantile(1 - alpha / 2) * 1.5 / 20.0));
    }
    CHECK_THROWS_AS(confidence_interval(estimate(0.0, 1.0, 10), 0.0), InvalidArgument);
    CHECK_THROWS_AS(confidence_interval(estimate(0.0, 1.0, 10), 1.0), InvalidArgument);
}

TEST_CASE("p-value examples")
{
    CHECK(p_value(estimate(0.0, 1.0, 100)) == 1.0);
    // sqrt(n) |b| / sigma = 1.959964
    CHECK(p_value(estimate(0.1959963984540054, 1.0, 100)) == doctest::Approx(0.05).epsilon(1e-12));
    double prev = 1.0;
    for (double z = 0.5; z <= 10.0; z += 0.5) {
        const double p = p_value(estimate(z / 10.0, 1.0, 100));
        CHECK(p < prev);
        prev = p;
    }
    CHECK(p_value(estimate(-0.2, 1.0, 100)) == p_value(estimate(0.2, 1.0, 100)));
    CHECK(p_value(estimate(3.0, 1.0, 100)) > 0.0); // z = 30, far in the tail but representable
}

TEST_CASE("Holm examples")
{
    const auto h = holm_adjust({0.01, 0.04, 0.03});
    CHECK(h[0] == doctest::Approx(0.03).epsilon(1e-15));
    CHECK(h[1] == doctest::Approx(0.06).epsilon(1e-15));
    CHECK(h[2] == doctest::Approx(0.06).epsilon(1e-15));
    CHECK(holm_adjust({0.3}) == std::vector<double>{0.3});
    CHECK(holm_adjust({1.0, 1.0, 1.0}) == std::vector<double>{1.0, 1.0, 1.0});
    CHECK(holm_adjust({}).empty());
    CHECK_THROWS_AS(holm_adjust({0.1, 1.2}), InvalidArgument);
}

TEST_CASE("Benjamini-Hochberg examples")
{
    const auto b = bh_adjust({0.01, 0.02, 0.04, 0.05});
    CHECK(b[0] == doctest::Approx(0.04).epsilon(1e-15));
    CHECK(b[1] == doctest::Approx(0.04).epsilon(1e-15));
    CHECK(b[2] == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(b[3] == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(bh_adjust({0.3}) == std::vector<double>{0.3});
    CHECK(bh_adjust({0.25, 0.5, 0.75, 1.0}) == std::vector<double>{1.0, 1.0, 1.0, 1.0});
    const auto ties = bh_adjust({0.02, 0.01, 0.02, 0.02});
    CHECK(ties[0] == ties[2]);
    CHECK(ties[2] == ties[3]);
    CHECK_THROWS_AS(bh_adjust({-0.1}), InvalidArgument);
}

TEST_CASE("adjustment properties on random vectors")
{
    CounterRng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto p = random_pvalues(rng);
        const double m = static_cast<double>(p.size());
        const auto holm = holm_adjust(p);
        const auto bh = bh_adjust(p);
        const auto ref = holm_reference(p);
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(holm[i] >= p[i]);
            CHECK(holm[i] <= std::min(1.0, m * p[i]));
            CHECK(bh[i] >= p[i]);
            CHECK(bh[i] <= holm[i]);
            CHECK(holm[i] == ref[i]);
            CHECK(bh[i] <= 1.0);
        }
        // raising any one raw p-value never lowers an adjusted one
        auto bumped = p;
        const std::size_t k = rng.below(p.size());
        bumped[k] = std::min(1.0, bumped[k] + rng.uniform() * (1.0 - bumped[k]));
        const auto holm2 = holm_adjust(bumped);
        const auto bh2 = bh_adjust(bumped);
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(holm2[i] >= holm[i]);
            CHECK(bh2[i] >= bh[i]);
        }
    }
}

TEST_CASE("interval and test agree")
{
    CounterRng rng(7);
    for (int trial = 0; trial < 2000; ++trial) {
        const double alpha = 0.001 + 0.5 * rng.uniform();
        const Index n = 10 + static_cast<Index>(rng.below(1000));
        const auto est = estimate(rng.normal() * 0.3, 0.1 + rng.uniform(), n);
        const auto [lo, hi] = confidence_interval(est, alpha);
        const double p = p_value(est);
        const bool excludes_zero = lo > 0.0 || hi < 0.0;
        if (std::abs(p - alpha) > 1e-12) CHECK((p <= alpha) == excludes_zero);
    }
}

TEST_CASE("threshold rule")
{
    const Index n = 100, p = 50;
    const double level = 2.0 * std::sqrt(std::log(50.0) / 100.0);
    std::vector<DesparsifiedEstimate> ests = {
        estimate(0.0, 1.0, n, 0),
        estimate(level, 1.0, n, 1),
        estimate(-1.01 * level, 1.0, n, 2),
        estimate(0.99 * 2.0 * level, 2.0, n, 3),
        estimate(1.01 * 2.0 * level, 2.0, n, 4),
    };
    CHECK(threshold_select(ests, p) == std::vector<Index>{2, 4});
    CHECK(threshold_select({estimate(0.0, 1.0, n, 0), estimate(0.0, 1.0, n, 1)}, p).empty());
    CHECK_THROWS_AS(threshold_select(ests, 1), InvalidArgument);
}

TEST_CASE("report invariants")
{
    CounterRng rng(5);
    std::vector<DesparsifiedEstimate> ests;
    for (Index j = 0; j < 40; ++j) ests.push_back(estimate(j < 4 ? 0.5 : rng.normal() * 0.05, 1.0, 400, j));
    const InferenceReport rep = make_report(ests, 0.05, 40);
    REQUIRE(rep.records.size() == 40);
    CHECK(rep.n == 400);
    for (const auto& r : rep.records) {
        CHECK(r.ci_lo <= r.b_hat);
        CHECK(r.b_hat <= r.ci_hi);
        CHECK(r.p_value >= 0.0);
        CHECK(r.p_value <= 1.0);
        CHECK(r.p_holm >= r.p_value);
        CHECK(r.p_bh >= r.p_value);
        CHECK(r.reject_holm == (r.p_holm <= 0.05));
        CHECK(r.reject_bh == (r.p_bh <= 0.05));
    }
    for (Index j = 0; j < 4; ++j) CHECK(rep.records[static_cast<std::size_t>(j)].reject_holm);
}
