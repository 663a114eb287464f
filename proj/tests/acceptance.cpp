// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance <path-to-dslasso-executable> [C1 C5 ...]
//
// With no criterion list every criterion is evaluated. Criteria 5, 7, 8 and 9
// reuse the experiment runs of criteria 1-4.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "dslasso/inference.hpp"
#include "dslasso/nodewise.hpp"
#include "dslasso/simulation.hpp"
#include "dslasso/solver.hpp"
#include "oracles.hpp"

using namespace dslasso;
namespace fs = std::filesystem;

namespace {

int failures = 0;
std::set<std::string> wanted;

void report(const std::string& id, bool pass, const std::string& detail)
{
    if (!wanted.empty() && wanted.count(id) == 0) return;
    std::cout << id << ' ' << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
    if (!pass) ++failures;
}

std::string num(double v, int digits = 4)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

double elapsed(std::chrono::steady_clock::time_point since)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

ExperimentOptions study_options(int reps)
{
    ExperimentOptions opts;
    opts.replications = reps;
    opts.threads = 1;
    return opts;
}

DgpConfig linear_design(ErrorDist error)
{
    DgpConfig cfg;
    cfg.n = 500;
    cfg.p = 100;
    cfg.s0 = 3;
    cfg.beta_value = 1.0;
    cfg.offdiag = 0.3;
    cfg.error = error;
    cfg.seed = 1;
    return cfg;
}

DgpConfig logistic_design()
{
    DgpConfig cfg = linear_design(ErrorDist::logistic_bernoulli);
    cfg.n = 400;
    return cfg;
}

struct DiagnosticTally
{
    int runs = 0;
    int failed = 0;
    int kkt_violations = 0;
    int diag_violations = 0;
    int nodewise_kkt_violations = 0;
    double worst_nodewise_excess = -1.0;

    void add(const std::vector<ReplicationSummary>& reps)
    {
        for (const auto& r : reps) {
            ++runs;
            if (r.failed) {
                ++failed;
                continue;
            }
            if (!r.diagnostics.kkt_ok) ++kkt_violations;
            if (r.diagnostics.nodewise_diag_error != 0.0) ++diag_violations;
            if (r.diagnostics.nodewise_kkt_excess > 1e-8) ++nodewise_kkt_violations;
            worst_nodewise_excess = std::max(worst_nodewise_excess, r.diagnostics.nodewise_kkt_excess);
        }
    }
};

// ---------------------------------------------------------------- C1, C5, C9

void linear_gaussian(DiagnosticTally& tally, bool c1, bool c5, bool c9)
{
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentResult r =
        run_ci_experiment(linear_design(ErrorDist::gaussian), LossSpec::quadratic(), study_options(100));
    tally.add(r.replications);
    std::cerr << "[criterion 1 run: " << num(elapsed(t0), 1) << " s]\n";

    if (c1) {
        const double cov_s0 = 100.0 * r.coverage_s0, cov_s0c = 100.0 * r.coverage_s0c;
        const bool pass = std::abs(cov_s0 - 92.67) <= 4.0 && std::abs(cov_s0c - 95.88) <= 2.0 &&
                          std::abs(r.length_s0 - 0.17) <= 0.03 && std::abs(r.length_s0c - 0.17) <= 0.03 &&
                          r.failures == 0;
        report("C1", pass,
               "coverage S0 " + num(cov_s0, 2) + " (92.67 +-4), S0c " + num(cov_s0c, 2) + " (95.88 +-2), length S0 " +
                   num(r.length_s0, 3) + ", S0c " + num(r.length_s0c, 3) + " (0.17 +-0.03), failed reps " +
                   std::to_string(r.failures));
    }

    if (c5) {
        std::vector<double> z;
        for (const auto& rec : r.records)
            if (rec.j < 4) z.push_back(rec.z);
        const double d = ks_distance_normal(z);
        const double pv = ks_pvalue(d, z.size());
        report("C5", pv >= 0.01,
               "pooled KS over j=1..4: D = " + num(d, 4) + ", p = " + num(pv, 4) + " (n = " +
                   std::to_string(z.size()) + ", need p >= 0.01)");
    }

    if (c9) {
        bool pass = true;
        std::string detail;
        for (Index j = 0; j < 3; ++j) {
            std::vector<double> b, s;
            for (const auto& rec : r.records) {
                if (rec.j != j) continue;
                b.push_back(rec.b_hat);
                s.push_back(rec.sigma_hat / std::sqrt(500.0));
            }
            const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
            double ss = 0.0;
            for (double v : b) ss += (v - mb) * (v - mb);
            const double sd = std::sqrt(ss / static_cast<double>(b.size() - 1));
            const double ms = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
            const double rel = std::abs(ms - sd) / sd;
            pass = pass && rel <= 0.15;
            detail += "j=" + std::to_string(j + 1) + ": mean sigma/sqrt(n) " + num(ms, 4) + " vs sd " + num(sd, 4) +
                      " (" + num(100.0 * rel, 1) + "%)  ";
        }
        report("C9", pass, detail + "(need <= 15%)");
    }
}

// ------------------------------------------------------------------------ C2

void huber_t3(DiagnosticTally& tally)
{
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentResult r =
        run_ci_experiment(linear_design(ErrorDist::t3), LossSpec::huber(0.5), study_options(100));
    tally.add(r.replications);
    std::cerr << "[criterion 2 run: " << num(elapsed(t0), 1) << " s]\n";
    const double cov = 100.0 * r.coverage_s0;
    const bool pass = std::abs(cov - 94.67) <= 4.0 && std::abs(r.length_s0 - 0.11) <= 0.03 && r.failures == 0;
    report("C2", pass,
           "Huber K=0.5, t3: coverage S0 " + num(cov, 2) + " (94.67 +-4), length S0 " + num(r.length_s0, 3) +
               " (0.11 +-0.03), S0c coverage " + num(100.0 * r.coverage_s0c, 2) + ", failed reps " +
               std::to_string(r.failures));
}

// ------------------------------------------------------------------------ C3

void logistic_ci(DiagnosticTally& tally)
{
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentResult r = run_ci_experiment(logistic_design(), LossSpec::logistic(), study_options(100));
    tally.add(r.replications);
    std::cerr << "[criterion 3 run: " << num(elapsed(t0), 1) << " s]\n";
    const bool pass =
        std::abs(r.coverage_s0 - 0.817) <= 0.06 && std::abs(r.coverage_s0c - 0.919) <= 0.03 && r.failures == 0;
    report("C3", pass,
           "logistic: coverage S0 " + num(r.coverage_s0, 3) + " (0.817 +-0.06), S0c " + num(r.coverage_s0c, 3) +
               " (0.919 +-0.03), failed reps " + std::to_string(r.failures));
}

// ------------------------------------------------------------------------ C4

void logistic_fwer(DiagnosticTally& tally)
{
    const auto t0 = std::chrono::steady_clock::now();
    const FwerResult r = run_fwer_experiment(logistic_design(), LossSpec::logistic(), study_options(200));
    tally.add(r.details);
    std::cerr << "[criterion 4 run: " << num(elapsed(t0), 1) << " s]\n";
    const bool pass = r.tpr_defined && r.tpr >= 0.95 && r.fwer <= 0.05 && r.failures == 0;
    report("C4", pass,
           "logistic Holm: TPR " + num(r.tpr, 3) + " (>= 0.95), FWER " + num(r.fwer, 3) + " (<= 0.05), failed reps " +
               std::to_string(r.failures));
}

// ------------------------------------------------------------------------ C6

void solver_oracle()
{
    const LossSpec specs[] = {LossSpec::quadratic(), LossSpec::huber(0.5), LossSpec::quantile(0.5),
                              LossSpec::logistic()};
    bool pass = true;
    std::string detail;
    for (const auto& spec : specs) {
        double worst = -std::numeric_limits<double>::infinity();
        for (int inst = 0; inst < 20; ++inst) {
            CounterRng rng(9000 + static_cast<std::uint64_t>(inst), static_cast<std::uint64_t>(spec.family));
            const Index p = 1 + inst % 6;
            const Index n = 15 + 5 * (inst % 6);
            Dataset d;
            d.X = oracle::random_matrix(rng, n, p);
            Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
            beta(0) = 1.0;
            if (p > 2) beta(2) = -0.7;
            const Eigen::VectorXd u = d.X * beta;
            d.y.resize(n);
            for (Index i = 0; i < n; ++i) {
                d.y(i) = spec.family == LossFamily::logistic ? (rng.bernoulli(1.0 / (1.0 + std::exp(-u(i)))) ? 1.0 : 0.0)
                                                             : u(i) + rng.student_t(3) * 0.7;
            }
            const double ratio = 0.05 + 0.9 * rng.uniform();
            const double lam = ratio * lambda_max(spec, d);
            const PenalizedFit fit = fit_lasso(spec, d, lam);
            const double grid = oracle::grid_minimum(
                [&](const Eigen::VectorXd& b) { return oracle::objective(spec, d.X, d.y, lam, b); }, p, 1.0, 1e-4);
            const double gap = fit.objective - grid;
            worst = std::max(worst, gap);
            pass = pass && gap <= 1e-3;
        }
        detail += spec.describe() + " worst gap " + num(worst, 6) + "  ";
    }
    report("C6", pass, detail + "(need <= 1e-3, 20 instances each)");
}

// ---------------------------------------------------------------- C7, C8

void diagnostics_summary(const DiagnosticTally& t, bool c7, bool c8)
{
    if (c7) {
        report("C7", t.runs > 0 && t.failed == 0 && t.kkt_violations == 0,
               std::to_string(t.runs) + " fits from criteria 1-4: " + std::to_string(t.kkt_violations) +
                   " KKT violations, " + std::to_string(t.failed) + " failed replications");
    }
    if (c8) {
        // dense-inverse agreement with a vanishing penalty
        DgpConfig cfg;
        cfg.n = 5000;
        cfg.p = 5;
        cfg.s0 = 1;
        cfg.offdiag = 0.4;
        cfg.seed = 21;
        const Dataset d = Dgp(cfg).generate(0);
        const WeightedDesign wd = unweighted_design(d.X);
        NodewiseConfig nc;
        nc.rule = NodewiseLambdaRule::fixed;
        nc.fixed_lambda = 1e-6;
        const auto rows = precision_estimate(wd, {0, 1, 2, 3, 4}, nc);
        const Eigen::MatrixXd inv = wd.sigma_hat().inverse();
        double dense_err = 0.0;
        bool exact = true;
        for (const auto& row : rows) {
            dense_err = std::max(dense_err, (row.theta_row - inv.row(row.j).transpose()).cwiseAbs().maxCoeff());
            exact = exact && row.theta_row(row.j) * row.tau_sq == 1.0;
        }
        const bool pass = t.runs > 0 && t.failed == 0 && t.diag_violations == 0 && t.nodewise_kkt_violations == 0 &&
                          exact && dense_err <= 1e-3;
        report("C8", pass,
               std::to_string(t.runs) + " runs: " + std::to_string(t.diag_violations) + " with Theta_jj tau^2 != 1, " +
                   std::to_string(t.nodewise_kkt_violations) + " over the KKT bound (worst excess " +
                   num(t.worst_nodewise_excess, 12) + "); dense inverse error " + num(dense_err, 6) + " (<= 1e-3)");
    }
}

// ----------------------------------------------------------------------- C10

void multiple_testing()
{
    bool pass = true;
    auto same = [](const std::vector<double>& a, const std::vector<double>& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t k = 0; k < a.size(); ++k)
            if (std::abs(a[k] - b[k]) > 1e-15) return false;
        return true;
    };
    pass = pass && same(holm_adjust({0.01, 0.04, 0.03}), {0.03, 0.06, 0.06});
    pass = pass && same(bh_adjust({0.01, 0.02, 0.04, 0.05}), {0.04, 0.04, 0.05, 0.05});
    pass = pass && same(bh_adjust({0.25, 0.5, 0.75, 1.0}), {1.0, 1.0, 1.0, 1.0});
    const bool examples = pass;

    CounterRng rng(77);
    int violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = 1 + rng.below(40);
        std::vector<double> p(m);
        for (auto& v : p) v = rng.uniform() < 0.2 ? std::pow(10.0, -6.0 * rng.uniform()) : rng.uniform();
        const auto h = holm_adjust(p);
        const auto b = bh_adjust(p);
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return p[x] < p[y]; });
        for (std::size_t i = 0; i < m; ++i) {
            const double bonf = std::min(1.0, static_cast<double>(m) * p[i]);
            if (!(h[i] >= p[i] && h[i] <= bonf && b[i] >= p[i] && b[i] <= h[i] && h[i] <= 1.0)) ++violations;
        }
        // adjusted values are monotone in the raw order
        for (std::size_t k = 1; k < m; ++k) {
            if (h[order[k]] < h[order[k - 1]] || b[order[k]] < b[order[k - 1]]) ++violations;
        }
    }
    pass = pass && violations == 0;
    report("C10", pass,
           std::string("hand examples ") + (examples ? "match" : "MISMATCH") + "; " + std::to_string(violations) +
               " property violations on 1000 random vectors");
}

// ----------------------------------------------------------------------- C11

void reproducibility(const std::string& exe)
{
    const fs::path base = fs::temp_directory_path() / "dslasso_acceptance_c11";
    fs::remove_all(base);
    fs::create_directories(base);
    std::map<int, std::string> bytes;
    bool ran = true;
    for (int threads : {1, 2}) {
        const fs::path out = base / ("threads" + std::to_string(threads));
        const std::string cmd = "\"" + exe + "\" simulate --loss quadratic --n 500 --p 100 --reps 100 --seed 1 --threads " +
                                std::to_string(threads) + " --out \"" + out.string() + "\" > /dev/null";
        const auto t0 = std::chrono::steady_clock::now();
        if (std::system(cmd.c_str()) != 0) ran = false;
        std::cerr << "[criterion 11 run, " << threads << " threads: " << num(elapsed(t0), 1) << " s]\n";
        std::ifstream f(out / "records.csv", std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        bytes[threads] = ss.str();
    }
    const bool pass = ran && !bytes[1].empty() && bytes[1] == bytes[2];
    report("C11", pass,
           "records.csv with --threads 1 and 2: " + std::to_string(bytes[1].size()) + " vs " +
               std::to_string(bytes[2].size()) + " bytes, " + (bytes[1] == bytes[2] ? "identical" : "DIFFERENT"));
    fs::remove_all(base);
}

} // namespace

int main(int argc, char** argv)
{
    if (argc < 2) {
        std::cerr << "usage: acceptance <dslasso executable> [C1 ... C11]\n";
        return 2;
    }
    const std::string exe = argv[1];
    wanted = std::set<std::string>(argv + 2, argv + argc);
    auto on = [&](const std::string& id) { return wanted.empty() || wanted.count(id) > 0; };

    try {
        DiagnosticTally tally;
        const bool diag = on("C7") || on("C8");
        if (on("C1") || on("C5") || on("C9") || diag) linear_gaussian(tally, on("C1"), on("C5"), on("C9"));
        if (on("C2") || diag) huber_t3(tally);
        if (on("C3") || diag) logistic_ci(tally);
        if (on("C4") || diag) logistic_fwer(tally);
        if (on("C6")) solver_oracle();
        diagnostics_summary(tally, on("C7"), on("C8"));
        if (on("C10")) multiple_testing();
        if (on("C11")) reproducibility(exe);
    } catch (const std::exception& e) {
        std::cout << "aborted: " << e.what() << std::endl;
        return 1;
    }
    return failures == 0 ? 0 : 1;
}
