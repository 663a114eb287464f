#include "dslasso/cli.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "dslasso/inference.hpp"
#include "dslasso/simulation.hpp"

namespace dslasso::cli {

namespace {

using nlohmann::json;

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::optional<double> parse_number(const std::string& cell)
{
    if (cell.empty()) return std::nullopt;
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
    return v;
}

json vector_to_json(const Eigen::VectorXd& v)
{
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const json& j)
{
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
}

void write_file(const std::filesystem::path& path, const std::string& content)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot open " + path.string() + " for writing");
    f << content;
    f.close();
    if (!f) throw UsageError("failed writing " + path.string());
}

std::string csv_line(std::initializer_list<std::string> cells)
{
    std::string line;
    for (const auto& c : cells) {
        if (!line.empty()) line += ',';
        line += c;
    }
    line += '\n';
    return line;
}

std::string fmt(double v) { return format_double(v); }
std::string fmt(Index v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "1" : "0"; }

std::string fixed(double v, int digits)
{
    if (!std::isfinite(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

struct Options
{
    // model and solver
    std::string loss = "quadratic";
    double huber_k = 1.0;
    double quantile_q = 0.5;
    double tol = 1e-8;
    int max_iter = 100000;
    int folds = 10;
    int path_len = 50;
    double min_ratio = 0.01;
    bool standardize = false;
    // inference
    double alpha = 0.05;
    std::string adjust = "holm";
    std::string nodewise = "cv";
    double nodewise_c = 1.0;
    std::optional<double> noise_f0;
    std::optional<double> noise_mass;
    // run
    std::uint64_t seed = 1;
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::string out_dir = ".";
    // data
    std::string csv;
    std::string response_col;
    bool intercept = false;
    Index screen_top = 0;
    double lambda = 0.0;
    // simulation
    Index n = 500;
    Index p = 100;
    Index s0 = 3;
    double beta_value = 1.0;
    double offdiag = 0.3;
    std::string error;
    int reps = 100;
    std::string experiment = "ci";
};

void add_model_options(CLI::App* sub, Options& o)
{
    sub->add_option("--loss", o.loss, "quadratic | huber | quantile | logistic")
        ->check(CLI::IsMember({"quadratic", "huber", "quantile", "logistic"}));
    sub->add_option("--huber-k", o.huber_k, "Huber threshold K");
    sub->add_option("--quantile-q", o.quantile_q, "check-loss level q");
    sub->add_option("--tol", o.tol, "solver tolerance");
    sub->add_option("--max-iter", o.max_iter, "solver iteration cap");
    sub->add_option("--folds", o.folds, "cross-validation folds");
    sub->add_option("--path-len", o.path_len, "length of the lambda path");
    sub->add_option("--min-ratio", o.min_ratio, "smallest lambda as a fraction of lambda_max");
    sub->add_flag("--standardize", o.standardize, "fit on unit-norm columns (screening is unaffected)");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--threads", o.threads, "worker threads");
    sub->add_option("--out", o.out_dir, "output directory");
}

void add_inference_options(CLI::App* sub, Options& o)
{
    sub->add_option("--alpha", o.alpha, "level of the intervals and tests");
    sub->add_option("--nodewise", o.nodewise, "cv (nodewise Lasso, CV per column) | sqrt (square-root Lasso)")
        ->check(CLI::IsMember({"cv", "sqrt"}));
    sub->add_option("--nodewise-c", o.nodewise_c, "constant c of lambda = c sqrt(log p / n) for --nodewise sqrt");
}

void add_data_options(CLI::App* sub, Options& o)
{
    sub->add_option("--csv", o.csv, "input CSV with a header row")->required();
    sub->add_option("--response-col", o.response_col, "response column name or 0-based index")->required();
    sub->add_flag("--intercept", o.intercept, "fit an unpenalized intercept");
}

LossSpec make_loss(const Options& o)
{
    LossSpec spec;
    spec.family = parse_loss_family(o.loss);
    spec.huber_k = o.huber_k;
    spec.quantile_q = o.quantile_q;
    spec.validate();
    return spec;
}

SolverOptions make_solver(const Options& o)
{
    SolverOptions s;
    s.tol = o.tol;
    s.max_iter = o.max_iter;
    s.standardize = o.standardize;
    s.intercept = o.intercept;
    return s;
}

LambdaPathConfig make_path(const Options& o)
{
    LambdaPathConfig c;
    c.n_folds = o.folds;
    c.path_len = o.path_len;
    c.min_ratio = o.min_ratio;
    return c;
}

NodewiseConfig make_nodewise(const Options& o)
{
    NodewiseConfig c;
    if (o.nodewise == "sqrt") {
        c.method = NodewiseMethod::sqrt_lasso;
        c.rule = NodewiseLambdaRule::universal;
        c.universal_c = o.nodewise_c;
    }
    c.n_folds = o.folds;
    c.cv_seed = o.seed + 1;
    c.threads = o.threads;
    return c;
}

bool given(const CLI::App* sub, const char* flag)
{
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    return opt != nullptr && opt->count() > 0;
}

void validate(const CLI::App* sub, const Options& o)
{
    if (given(sub, "--huber-k") && o.loss != "huber") throw UsageError("--huber-k requires --loss huber");
    if (given(sub, "--quantile-q") && o.loss != "quantile") throw UsageError("--quantile-q requires --loss quantile");
    if (!(o.huber_k > 0.0)) throw UsageError("--huber-k must be positive");
    if (!(o.quantile_q > 0.0 && o.quantile_q < 1.0)) throw UsageError("--quantile-q must lie in (0, 1)");
    if (!(o.tol > 0.0)) throw UsageError("--tol must be positive");
    if (o.max_iter < 1) throw UsageError("--max-iter must be at least 1");
    if (o.folds < 2) throw UsageError("--folds must be at least 2");
    if (o.path_len < 1) throw UsageError("--path-len must be at least 1");
    if (!(o.min_ratio > 0.0 && o.min_ratio <= 1.0)) throw UsageError("--min-ratio must lie in (0, 1]");
    if (o.threads < 1) throw UsageError("--threads must be at least 1");
    if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
    if (given(sub, "--noise-f0") && o.loss != "quantile") throw UsageError("--noise-f0 requires --loss quantile");
    if (given(sub, "--noise-mass") && o.loss != "huber") throw UsageError("--noise-mass requires --loss huber");
    if (o.noise_f0 && !(*o.noise_f0 > 0.0)) throw UsageError("--noise-f0 must be positive");
    if (o.noise_mass && !(*o.noise_mass > 0.0 && *o.noise_mass <= 1.0))
        throw UsageError("--noise-mass must lie in (0, 1]");
    if (given(sub, "--nodewise-c") && o.nodewise != "sqrt") throw UsageError("--nodewise-c requires --nodewise sqrt");
    if (!(o.nodewise_c > 0.0)) throw UsageError("--nodewise-c must be positive");
    if (given(sub, "--lambda") && !(o.lambda > 0.0)) throw UsageError("--lambda must be positive");
    if (given(sub, "--screen-top") && o.screen_top < 1) throw UsageError("--screen-top must be at least 1");
}

json config_json(const std::string& command, const Options& o, const CLI::App* sub)
{
    json c;
    c["command"] = command;
    c["loss"] = o.loss;
    if (o.loss == "huber") c["huber_k"] = o.huber_k;
    if (o.loss == "quantile") c["quantile_q"] = o.quantile_q;
    c["seed"] = o.seed;
    c["threads"] = o.threads;
    c["tol"] = o.tol;
    c["max_iter"] = o.max_iter;
    c["folds"] = o.folds;
    c["path_len"] = o.path_len;
    c["min_ratio"] = o.min_ratio;
    c["standardize"] = o.standardize;
    if (sub->get_option_no_throw("--alpha")) {
        c["alpha"] = o.alpha;
        c["nodewise"] = o.nodewise;
        if (o.nodewise == "sqrt") c["nodewise_c"] = o.nodewise_c;
    }
    if (sub->get_option_no_throw("--csv")) {
        c["csv"] = o.csv;
        c["response_col"] = o.response_col;
        c["intercept"] = o.intercept;
    }
    if (sub->get_option_no_throw("--adjust")) c["adjust"] = o.adjust;
    if (sub->get_option_no_throw("--screen-top")) c["screen_top"] = o.screen_top;
    if (o.noise_f0) c["noise_f0"] = *o.noise_f0;
    if (o.noise_mass) c["noise_mass"] = *o.noise_mass;
    if (command == "simulate") {
        c["n"] = o.n;
        c["p"] = o.p;
        c["s0"] = o.s0;
        c["beta_value"] = o.beta_value;
        c["offdiag"] = o.offdiag;
        c["error"] = o.error;
        c["reps"] = o.reps;
        c["experiment"] = o.experiment;
    }
    return c;
}

json envelope(const std::string& command, const Options& o, const CLI::App* sub)
{
    json j;
    j["spec_version"] = spec_version;
    j["config"] = config_json(command, o, sub);
    return j;
}

json diagnostics_json(const PipelineDiagnostics& d)
{
    return {{"kkt_ok", d.kkt_ok},
            {"kkt_active", d.kkt.active},
            {"kkt_inactive_excess", d.kkt.inactive_excess},
            {"kkt_score_sup", d.kkt.score_sup},
            {"nodewise_diag_error", d.nodewise_diag_error},
            {"nodewise_kkt_excess", d.nodewise_kkt_excess},
            {"active_size", d.active_size}};
}

json noise_json(const NoiseInfo& info)
{
    json j = json::object();
    if (info.density_at_zero) j["density_at_zero"] = *info.density_at_zero;
    if (info.cdf_upper) j["cdf_upper"] = *info.cdf_upper;
    if (info.cdf_lower) j["cdf_lower"] = *info.cdf_lower;
    j["estimated"] = info.estimated;
    return j;
}

std::filesystem::path out_dir(const Options& o)
{
    std::filesystem::path dir(o.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw UsageError("cannot create output directory " + o.out_dir + ": " + ec.message());
    return dir;
}

// ----------------------------------------------------------------- simulate

int cmd_simulate(const Options& o, const CLI::App* sub, std::ostream& out)
{
    const LossSpec spec = make_loss(o);
    DgpConfig cfg;
    cfg.n = o.n;
    cfg.p = o.p;
    cfg.s0 = o.s0;
    cfg.beta_value = o.beta_value;
    cfg.offdiag = o.offdiag;
    cfg.seed = o.seed;
    cfg.error = parse_error_dist(o.error);
    cfg.validate();

    ExperimentOptions eo;
    eo.replications = o.reps;
    eo.threads = o.threads;
    eo.pipeline.lambda_path = make_path(o);
    eo.pipeline.nodewise = make_nodewise(o);
    eo.pipeline.solver = make_solver(o);
    eo.pipeline.alpha = o.alpha;

    const auto dir = out_dir(o);
    json res = envelope("simulate", o, sub);

    if (o.experiment == "fwer") {
        const FwerResult f = run_fwer_experiment(cfg, spec, eo);
        res["tpr"] = f.tpr_defined ? json(f.tpr) : json(nullptr);
        res["tpr_defined"] = f.tpr_defined;
        res["fwer"] = f.fwer;
        res["replications"] = f.replications;
        res["failures"] = f.failures;
        json reps = json::array();
        for (const auto& d : f.details)
            reps.push_back({{"rep", d.rep}, {"failed", d.failed}, {"failure", d.failure}, {"lambda", d.lambda},
                            {"diagnostics", diagnostics_json(d.diagnostics)}});
        res["per_replication"] = std::move(reps);
        write_file(dir / "results.json", res.dump(2) + "\n");
        out << "tpr " << (f.tpr_defined ? fixed(f.tpr, 3) : "undefined") << "  fwer " << fixed(f.fwer, 3)
            << "  failures " << f.failures << "\n";
        return 0;
    }

    const ExperimentResult r = run_ci_experiment(cfg, spec, eo);

    std::string records =
        csv_line({"rep", "j", "beta0", "beta_hat", "b_hat", "sigma_hat", "ci_lo", "ci_hi", "covered", "length",
                  "p_value", "in_s0", "z"});
    for (const auto& c : r.records) {
        records += csv_line({fmt(c.rep), fmt(c.j), fmt(c.beta0), fmt(c.beta_hat), fmt(c.b_hat), fmt(c.sigma_hat),
                             fmt(c.ci_lo), fmt(c.ci_hi), fmt(c.covered), fmt(c.length), fmt(c.p_value),
                             fmt(c.in_s0), fmt(c.z)});
    }
    const StandardizedExport ex = export_standardized(r);
    std::string zvalues = csv_line({"j", "rep", "z"});
    for (const auto& z : ex.rows) zvalues += csv_line({fmt(z.j), fmt(z.rep), fmt(z.z)});

    res["coverage_s0"] = r.coverage_s0;
    res["coverage_s0c"] = r.coverage_s0c;
    res["length_s0"] = r.length_s0;
    res["length_s0c"] = r.length_s0c;
    res["count_s0"] = r.count_s0;
    res["count_s0c"] = r.count_s0c;
    res["failures"] = r.failures;
    const auto [kv_s0, kv_s0c] = known_variance_coverage(r, o.alpha);
    res["known_variance_coverage_s0"] = kv_s0;
    res["known_variance_coverage_s0c"] = kv_s0c;

    // linear models print percentages with two decimals, logistic proportions with three
    const bool percent = spec.family != LossFamily::logistic;
    json table;
    table["format"] = percent ? "percent" : "proportion";
    table["coverage_s0"] = percent ? fixed(100.0 * r.coverage_s0, 2) : fixed(r.coverage_s0, 3);
    table["coverage_s0c"] = percent ? fixed(100.0 * r.coverage_s0c, 2) : fixed(r.coverage_s0c, 3);
    table["length_s0"] = fixed(r.length_s0, percent ? 2 : 3);
    table["length_s0c"] = fixed(r.length_s0c, percent ? 2 : 3);
    res["table"] = table;

    json ks = json::array();
    for (const auto& [j, d] : ex.ks_distance) {
        std::size_t count = 0;
        for (const auto& z : ex.rows) count += z.j == j ? 1 : 0;
        ks.push_back({{"j", j}, {"distance", d}, {"p_value", ks_pvalue(d, count)}});
    }
    res["ks"] = std::move(ks);

    json reps = json::array();
    for (const auto& d : r.replications)
        reps.push_back({{"rep", d.rep}, {"failed", d.failed}, {"failure", d.failure}, {"lambda", d.lambda},
                        {"diagnostics", diagnostics_json(d.diagnostics)}});
    res["per_replication"] = std::move(reps);

    write_file(dir / "records.csv", records);
    write_file(dir / "zvalues.csv", zvalues);
    write_file(dir / "results.json", res.dump(2) + "\n");

    out << "coverage S0 " << table["coverage_s0"].get<std::string>() << "  S0c "
        << table["coverage_s0c"].get<std::string>() << "  length S0 " << table["length_s0"].get<std::string>()
        << "  S0c " << table["length_s0c"].get<std::string>() << "  failures " << r.failures << "\n";
    return 0;
}

// --------------------------------------------------------------------- fit

int cmd_fit(const Options& o, const CLI::App* sub, std::ostream& out)
{
    const LossSpec spec = make_loss(o);
    const LabelledData ld = split_response(read_csv_file(o.csv), o.response_col);
    ld.data.validate(spec);
    const SolverOptions solver = make_solver(o);
    const auto dir = out_dir(o);

    json res = envelope("fit", o, sub);
    PenalizedFit fit;
    if (given(sub, "--lambda")) {
        fit = fit_lasso(spec, ld.data, o.lambda, solver);
    } else {
        const LambdaPath path = cv_select_lambda(spec, ld.data, make_path(o), o.seed, solver);
        fit = fit_lasso(spec, ld.data, path.selected_lambda(), solver);
        res["cv"] = {{"lambdas", path.values},
                     {"errors", path.cv_errors},
                     {"selected", path.selected},
                     {"skipped_folds", path.skipped_folds},
                     {"warnings", path.warnings}};
    }
    res["fit"] = fit_to_json(spec, fit);
    res["feature_names"] = ld.feature_names;
    res["response"] = ld.response;
    write_file(dir / "fit.json", res.dump(2) + "\n");
    out << "lambda " << format_double(fit.lambda) << "  active " << fit.active_set.size() << "  objective "
        << format_double(fit.objective) << "\n";
    return 0;
}

// ------------------------------------------------------------------- infer

int cmd_infer(const Options& o, const CLI::App* sub, std::ostream& out, std::ostream& err)
{
    const LossSpec spec = make_loss(o);
    const LabelledData full = split_response(read_csv_file(o.csv), o.response_col);
    full.data.validate(spec);
    if (o.screen_top > full.data.p()) throw UsageError("--screen-top exceeds the number of columns");

    json res = envelope("infer", o, sub);
    std::vector<Index> kept(static_cast<std::size_t>(full.data.p()));
    std::iota(kept.begin(), kept.end(), Index{0});
    if (o.screen_top > 0) {
        const ScreenResult sr = screen(full.data, o.screen_top);
        kept = sr.indices;
        std::sort(kept.begin(), kept.end());
        res["screening"] = {{"indices", sr.indices}, {"scores", sr.scores}};
    }
    Dataset data;
    data.y = full.data.y;
    data.X.resize(full.data.n(), static_cast<Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k) data.X.col(static_cast<Index>(k)) = full.data.X.col(kept[k]);

    PipelineOptions po;
    po.lambda_path = make_path(o);
    po.nodewise = make_nodewise(o);
    po.solver = make_solver(o);
    po.alpha = o.alpha;
    if (o.noise_f0 || o.noise_mass) {
        NoiseInfo info;
        if (o.noise_f0) info.density_at_zero = *o.noise_f0;
        if (o.noise_mass) {
            info.cdf_upper = 0.5 + 0.5 * *o.noise_mass;
            info.cdf_lower = 0.5 - 0.5 * *o.noise_mass;
        }
        po.noise = info;
    } else if (spec.family == LossFamily::quantile || spec.family == LossFamily::huber) {
        po.estimate_noise = true;
        err << "warning: noise constants estimated from residuals; pass --noise-f0 / --noise-mass if known\n";
    }
    const PipelineOutput po_out = run_pipeline(spec, data, po, o.seed);
    const InferenceReport rep = make_report(po_out.estimates, o.alpha, data.p());

    auto original = [&](Index j) { return kept[static_cast<std::size_t>(j)]; };
    auto decision = [&](const InferenceRecord& r) {
        if (o.adjust == "holm") return r.reject_holm;
        if (o.adjust == "bh") return r.reject_bh;
        return r.p_value <= o.alpha;
    };
    const double sqrt_n = std::sqrt(static_cast<double>(data.n()));

    std::string report = csv_line({"j", "name", "b_hat", "sigma_hat", "ci_lo", "ci_hi", "p_value", "p_holm", "p_bh",
                                   "reject_holm", "reject_bh", "reject_threshold", "reject"});
    std::string zvalues = csv_line({"j", "name", "z"});
    json records = json::array();
    std::vector<Index> rejected, thresholded;
    for (const auto& r : rep.records) {
        const Index j = original(r.j);
        const std::string& name = full.feature_names[static_cast<std::size_t>(j)];
        const bool reject = decision(r);
        report += csv_line({fmt(j), name, fmt(r.b_hat), fmt(r.sigma_hat), fmt(r.ci_lo), fmt(r.ci_hi), fmt(r.p_value),
                            fmt(r.p_holm), fmt(r.p_bh), fmt(r.reject_holm), fmt(r.reject_bh),
                            fmt(r.reject_threshold), fmt(reject)});
        zvalues += csv_line({fmt(j), name, fmt(sqrt_n * r.b_hat / r.sigma_hat)});
        records.push_back({{"j", j},
                           {"name", name},
                           {"b_hat", r.b_hat},
                           {"sigma_hat", r.sigma_hat},
                           {"ci_lo", r.ci_lo},
                           {"ci_hi", r.ci_hi},
                           {"p_value", r.p_value},
                           {"p_holm", r.p_holm},
                           {"p_bh", r.p_bh},
                           {"reject", reject},
                           {"reject_threshold", r.reject_threshold}});
        if (reject) rejected.push_back(j);
        if (r.reject_threshold) thresholded.push_back(j);
    }
    res["n"] = data.n();
    res["p"] = full.data.p();
    res["p_analysed"] = data.p();
    res["fit"] = fit_to_json(spec, po_out.fit);
    res["diagnostics"] = diagnostics_json(po_out.diagnostics);
    res["noise"] = noise_json(po_out.noise);
    res["records"] = std::move(records);
    res["rejected"] = rejected;
    res["threshold_selected"] = thresholded;

    const auto dir = out_dir(o);
    write_file(dir / "report.csv", report);
    write_file(dir / "zvalues.csv", zvalues);
    write_file(dir / "results.json", res.dump(2) + "\n");
    out << "rejected (" << o.adjust << ", alpha " << o.alpha << "):";
    for (Index j : rejected) out << ' ' << full.feature_names[static_cast<std::size_t>(j)];
    out << "\nthreshold selected:";
    for (Index j : thresholded) out << ' ' << full.feature_names[static_cast<std::size_t>(j)];
    out << "\n";
    return 0;
}

// ------------------------------------------------------------------ screen

int cmd_screen(const Options& o, const CLI::App* sub, std::ostream& out)
{
    const LabelledData ld = split_response(read_csv_file(o.csv), o.response_col);
    if (o.screen_top > ld.data.p()) throw UsageError("--screen-top exceeds the number of columns");
    const ScreenResult sr = screen(ld.data, o.screen_top);
    std::string csv = csv_line({"rank", "j", "name", "score"});
    for (std::size_t k = 0; k < sr.indices.size(); ++k) {
        csv += csv_line({std::to_string(k + 1), fmt(sr.indices[k]),
                         ld.feature_names[static_cast<std::size_t>(sr.indices[k])], fmt(sr.scores[k])});
    }
    json res = envelope("screen", o, sub);
    res["indices"] = sr.indices;
    res["scores"] = sr.scores;
    const auto dir = out_dir(o);
    write_file(dir / "screen.csv", csv);
    write_file(dir / "results.json", res.dump(2) + "\n");
    for (Index j : sr.indices) out << j << "\n";
    return 0;
}

} // namespace

std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvTable read_csv(std::istream& in, const std::string& source)
{
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw UsageError(source + ": empty file");
    t.header = split_line(line);
    for (const auto& h : t.header) {
        if (h.empty()) throw UsageError(source + ":" + std::to_string(line_no) + ": empty column name in header");
    }
    const auto cols = static_cast<Index>(t.header.size());

    std::vector<double> cells;
    Index rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto parts = split_line(line);
        if (static_cast<Index>(parts.size()) != cols) {
            throw UsageError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                             " fields, found " + std::to_string(parts.size()));
        }
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const auto v = parse_number(parts[k]);
            if (!v) {
                throw UsageError(source + ":" + std::to_string(line_no) + ": column '" + t.header[k] +
                                 "' is not a finite number ('" + parts[k] + "')");
            }
            cells.push_back(*v);
        }
        ++rows;
    }
    if (rows == 0) throw UsageError(source + ": no data rows");
    t.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        cells.data(), rows, cols);
    return t;
}

CsvTable read_csv_file(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw UsageError("cannot open " + path);
    return read_csv(f, path);
}

LabelledData split_response(const CsvTable& table, const std::string& response_col)
{
    const auto cols = static_cast<Index>(table.header.size());
    Index target = -1;
    for (Index k = 0; k < cols; ++k) {
        if (table.header[static_cast<std::size_t>(k)] == response_col) target = k;
    }
    if (target < 0) {
        const auto v = parse_number(response_col);
        if (v && *v == std::floor(*v) && *v >= 0 && *v < static_cast<double>(cols)) target = static_cast<Index>(*v);
    }
    if (target < 0) throw UsageError("response column '" + response_col + "' not found");
    if (cols < 2) throw UsageError("need at least one feature column besides the response");

    LabelledData ld;
    ld.response = table.header[static_cast<std::size_t>(target)];
    ld.data.y = table.values.col(target);
    ld.data.X.resize(table.values.rows(), cols - 1);
    for (Index k = 0, c = 0; k < cols; ++k) {
        if (k == target) continue;
        ld.data.X.col(c++) = table.values.col(k);
        ld.feature_names.push_back(table.header[static_cast<std::size_t>(k)]);
    }
    return ld;
}

ScreenResult screen(const Dataset& data, Index m)
{
    if (m < 1 || m > data.p()) throw InvalidArgument("screen: m must lie in [1, p]");
    if (data.y.size() != data.n()) throw DimensionError("screen: response length mismatch");
    // one dot product per column so that identical columns score identically
    Eigen::VectorXd omega(data.p());
    for (Index k = 0; k < data.p(); ++k) omega(k) = std::abs(data.X.col(k).dot(data.y));
    std::vector<Index> order(static_cast<std::size_t>(data.p()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return omega(a) > omega(b); });
    ScreenResult r;
    r.indices.assign(order.begin(), order.begin() + m);
    for (Index j : r.indices) r.scores.push_back(omega(j));
    return r;
}

json loss_to_json(const LossSpec& spec)
{
    json j{{"family", to_string(spec.family)}};
    if (spec.family == LossFamily::huber) j["huber_k"] = spec.huber_k;
    if (spec.family == LossFamily::quantile) j["quantile_q"] = spec.quantile_q;
    return j;
}

LossSpec loss_from_json(const json& j)
{
    LossSpec spec;
    spec.family = parse_loss_family(j.at("family").get<std::string>());
    if (j.contains("huber_k")) spec.huber_k = j.at("huber_k").get<double>();
    if (j.contains("quantile_q")) spec.quantile_q = j.at("quantile_q").get<double>();
    spec.validate();
    return spec;
}

json fit_to_json(const LossSpec& spec, const PenalizedFit& fit)
{
    json j;
    j["loss"] = loss_to_json(spec);
    j["lambda"] = fit.lambda;
    j["beta"] = vector_to_json(fit.beta);
    j["intercept"] = fit.intercept ? json(*fit.intercept) : json(nullptr);
    j["penalty_weights"] = vector_to_json(fit.penalty_weights);
    j["objective"] = fit.objective;
    j["active_set"] = fit.active_set;
    j["kkt_residual"] = fit.kkt_residual;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    return j;
}

PenalizedFit fit_from_json(const json& j)
{
    PenalizedFit fit;
    try {
        fit.lambda = j.at("lambda").get<double>();
        fit.beta = vector_from_json(j.at("beta"));
        if (!j.at("intercept").is_null()) fit.intercept = j.at("intercept").get<double>();
        fit.penalty_weights = vector_from_json(j.at("penalty_weights"));
        fit.objective = j.at("objective").get<double>();
        fit.active_set = j.at("active_set").get<std::vector<Index>>();
        fit.kkt_residual = j.at("kkt_residual").get<double>();
        fit.iterations = j.at("iterations").get<int>();
        fit.converged = j.at("converged").get<bool>();
    } catch (const json::exception& e) {
        throw UsageError(std::string("malformed fit JSON: ") + e.what());
    }
    if (fit.penalty_weights.size() != fit.beta.size()) throw UsageError("malformed fit JSON: length mismatch");
    return fit;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    Options o;
    CLI::App app{"De-sparsified l1-penalized M-estimation"};
    app.require_subcommand(1, 1);

    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo coverage or FWER experiment");
    add_model_options(simulate, o);
    add_inference_options(simulate, o);
    simulate->add_option("--n", o.n, "sample size");
    simulate->add_option("--p", o.p, "dimension");
    simulate->add_option("--s0", o.s0, "number of leading nonzero coefficients");
    simulate->add_option("--beta-value", o.beta_value, "value of the nonzero coefficients");
    simulate->add_option("--offdiag", o.offdiag, "off-diagonal of the tridiagonal precision matrix");
    simulate->add_option("--error", o.error, "gaussian | t3 | t5 | logistic (default follows --loss)")
        ->check(CLI::IsMember({"gaussian", "t3", "t5", "logistic"}));
    simulate->add_option("--reps", o.reps, "replications");
    simulate->add_option("--experiment", o.experiment, "ci | fwer")->check(CLI::IsMember({"ci", "fwer"}));

    auto* fit = app.add_subcommand("fit", "penalized fit on CSV data");
    add_model_options(fit, o);
    add_data_options(fit, o);
    fit->add_option("--lambda", o.lambda, "fixed penalty (default: cross-validation)");

    auto* infer = app.add_subcommand("infer", "de-sparsified inference on CSV data");
    add_model_options(infer, o);
    add_data_options(infer, o);
    add_inference_options(infer, o);
    infer->add_option("--adjust", o.adjust, "holm | bh | none")->check(CLI::IsMember({"holm", "bh", "none"}));
    infer->add_option("--screen-top", o.screen_top, "keep the m columns with largest |y^T X_k| first");
    infer->add_option("--noise-f0", o.noise_f0, "error density at zero (quantile loss)");
    infer->add_option("--noise-mass", o.noise_mass, "P(|error| <= K) (Huber loss)");

    auto* scr = app.add_subcommand("screen", "marginal screening by |y^T X_k|");
    add_data_options(scr, o);
    scr->add_option("--screen-top", o.screen_top, "number of columns to keep")->required();
    scr->add_option("--out", o.out_dir, "output directory");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (simulate->parsed()) {
            if (o.error.empty()) o.error = o.loss == "logistic" ? "logistic" : "gaussian";
            validate(simulate, o);
            if ((o.loss == "logistic") != (o.error == "logistic"))
                throw UsageError("--loss logistic goes with --error logistic and only with it");
            if (o.reps < 1) throw UsageError("--reps must be at least 1");
            if (o.n < 2 || o.p < 1) throw UsageError("--n must be at least 2 and --p at least 1");
            if (o.s0 < 0 || o.s0 > o.p) throw UsageError("--s0 must lie in [0, p]");
            return cmd_simulate(o, simulate, out);
        }
        if (fit->parsed()) {
            validate(fit, o);
            return cmd_fit(o, fit, out);
        }
        if (infer->parsed()) {
            validate(infer, o);
            return cmd_infer(o, infer, out, err);
        }
        validate(scr, o);
        return cmd_screen(o, scr, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace dslasso::cli
