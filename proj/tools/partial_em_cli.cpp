// partial-em: fit Gaussian mixtures with full or partial E-steps, compare
// policies, generate synthetic samples and tabulate likelihood surfaces.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "partial_em/data_io.hpp"
#include "partial_em/em_engine.hpp"
#include "partial_em/error.hpp"
#include "partial_em/eval.hpp"
#include "partial_em/report.hpp"

namespace pe = partial_em;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitMaxIter = 2;

struct DataOptions {
    std::string input;
    std::string labels;
    bool has_labels = false;
    std::string digits;
    std::size_t subsample = 0;
    std::string pca = "auto";
};

struct FitOptions {
    std::size_t k = 0;
    std::string policy = "full";
    std::optional<std::uint32_t> tau;
    double lazy_threshold = 0.9;
    std::size_t lazy_every = 5;
    std::optional<double> star_tail;
    std::string cov = "full";
    std::optional<double> ridge;
    double tol = 1e-6;
    std::size_t max_iter = 500;
    std::uint64_t seed = 0;
    std::string init = "kmeans++";
    std::optional<std::size_t> threads;
    bool f_trace = false;
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) return out;
        start = pos + 1;
    }
}

double to_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw pe::InvalidArgument("bad " + what + ": '" + s + "'");
}

std::vector<double> to_doubles(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& part : split(s, ',')) out.push_back(to_double(part, what));
    return out;
}

bool looks_like_idx(const std::string& path) {
    const std::string head = pe::read_file(path).substr(0, 4);
    return head.size() == 4 && head[0] == 0 && head[1] == 0 && head[2] == 8 && head[3] == 3;
}

std::size_t resolve_threads(const std::optional<std::size_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("PARTIAL_EM_THREADS")) {
        const std::string s(env);
        if (!s.empty() && s.find_first_not_of("0123456789") == std::string::npos) {
            const auto v = std::stoul(s);
            if (v >= 1) return v;
        }
        throw pe::InvalidArgument("PARTIAL_EM_THREADS must be a positive integer");
    }
    return 1;
}

struct LoadedData {
    pe::Dataset data;
    std::size_t original_dim = 0;
    std::optional<std::size_t> pca_dim;
};

LoadedData load_data(const DataOptions& opt, pe::CovarianceKind cov, std::uint64_t seed) {
    LoadedData out;
    const bool idx = looks_like_idx(opt.input);
    if (idx) {
        if (opt.labels.empty()) throw pe::InvalidArgument("IDX input needs --labels");
        std::optional<std::set<int>> keep;
        if (!opt.digits.empty()) {
            keep.emplace();
            for (const auto& d : split(opt.digits, ',')) keep->insert(static_cast<int>(to_double(d, "digit")));
        }
        out.data = pe::load_idx(opt.input, opt.labels, keep).data;
    } else {
        out.data = pe::load_csv(opt.input, opt.has_labels);
    }
    if (out.data.size() == 0) throw pe::InvalidArgument("no points left after loading " + opt.input);
    if (opt.subsample > 0) out.data = pe::random_subsample(out.data, opt.subsample, seed);
    out.original_dim = static_cast<std::size_t>(out.data.dim());

    std::optional<std::size_t> pca;
    if (opt.pca == "auto") {
        if (idx && cov == pe::CovarianceKind::Full) pca = 50;
    } else if (opt.pca != "off") {
        const double v = to_double(opt.pca, "--pca");
        if (v < 1 || v != std::floor(v)) throw pe::InvalidArgument("--pca must be a positive integer or 'off'");
        pca = static_cast<std::size_t>(v);
    }
    if (pca) {
        out.data = pe::fit_pca(out.data, *pca).apply(out.data);
        out.pca_dim = pca;
    }
    out.data.validate();
    return out;
}

pe::Policy build_policy(const FitOptions& opt) {
    pe::Policy policy;
    if (opt.policy == "full") {
        policy = pe::FullPolicy{};
    } else if (opt.policy == "tau") {
        if (!opt.tau) throw pe::InvalidArgument("--policy tau requires --tau");
        policy = pe::TauPolicy{*opt.tau};
    } else if (opt.policy == "lazy") {
        policy = pe::LazyPolicy{opt.lazy_threshold, opt.lazy_every};
    } else if (opt.policy == "star") {
        policy = pe::StarPolicy{opt.star_tail};
    } else {
        throw pe::InvalidArgument("unknown policy '" + opt.policy + "'");
    }
    pe::validate(policy);
    return policy;
}

pe::FitConfig build_config(const FitOptions& opt) {
    pe::FitConfig cfg;
    cfg.tol = opt.tol;
    cfg.max_iter = opt.max_iter;
    cfg.ridge = opt.ridge;
    cfg.seed = opt.seed;
    cfg.init = pe::parse_init(opt.init);
    cfg.cov = pe::parse_cov(opt.cov);
    cfg.threads = resolve_threads(opt.threads);
    cfg.record_f_trace = opt.f_trace;
    cfg.validate();
    return cfg;
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        pe::write_file(path, text);
    }
}

nlohmann::json confusion_json(const pe::ConfusionMatrix& cm) {
    return {{"predicted", cm.predicted}, {"truth", cm.truth}, {"counts", cm.counts}};
}

void add_data_options(CLI::App* cmd, DataOptions& opt) {
    cmd->add_option("--input", opt.input, "CSV file or IDX image file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--labels", opt.labels, "IDX label file")->check(CLI::ExistingFile);
    cmd->add_flag("--has-labels", opt.has_labels, "last CSV column holds integer labels");
    cmd->add_option("--digits", opt.digits, "IDX labels to keep, e.g. 1,2,4,5,6");
    cmd->add_option("--subsample", opt.subsample, "use this many randomly chosen points (0 = all)");
    cmd->add_option("--pca", opt.pca, "project onto this many principal components, or 'off'")
        ->capture_default_str();
}

void add_fit_options(CLI::App* cmd, FitOptions& opt, bool with_policy) {
    cmd->add_option("--k", opt.k, "number of mixture components")->required()->check(CLI::PositiveNumber);
    if (with_policy) {
        cmd->add_option("--policy", opt.policy, "full|tau|lazy|star")->capture_default_str();
        cmd->add_option("--tau", opt.tau, "tau for --policy tau");
        cmd->add_option("--lazy-threshold", opt.lazy_threshold, "threshold T for --policy lazy")->capture_default_str();
        cmd->add_option("--lazy-every", opt.lazy_every, "full E-step period for --policy lazy")->capture_default_str();
        cmd->add_option("--star-tail", opt.star_tail, "fraction of each heap kept active for --policy star");
    }
    cmd->add_option("--cov", opt.cov, "full|diag")->capture_default_str();
    cmd->add_option("--ridge", opt.ridge, "ridge added to covariances (default 1e-6 trace/d)");
    cmd->add_option("--tol", opt.tol, "tolerance on mean log-likelihood change")->capture_default_str();
    cmd->add_option("--max-iter", opt.max_iter, "iteration cap")->capture_default_str();
    cmd->add_option("--seed", opt.seed, "random seed")->capture_default_str();
    cmd->add_option("--init", opt.init, "kmeans++|random")->capture_default_str();
    cmd->add_option("--threads", opt.threads, "worker threads (falls back to PARTIAL_EM_THREADS)");
}

int run_fit(const DataOptions& dopt, const FitOptions& fopt, const std::string& out_path,
            const std::string& membership_path) {
    const pe::Policy policy = build_policy(fopt);
    const pe::FitConfig cfg = build_config(fopt);
    const LoadedData loaded = load_data(dopt, cfg.cov, cfg.seed);
    const auto result = pe::fit(loaded.data, fopt.k, policy, cfg);

    nlohmann::json j = pe::report_to_json(result.report, policy, cfg, fopt.k);
    j["data"] = {{"n", loaded.data.size()},
                 {"d", loaded.data.dim()},
                 {"original_d", loaded.original_dim},
                 {"pca", loaded.pca_dim ? nlohmann::json(*loaded.pca_dim) : nlohmann::json("off")}};
    if (loaded.data.labels) {
        const auto assign = pe::hard_assign(result.membership);
        j["metrics"] = {{"classification_error", pe::classification_error(assign, *loaded.data.labels)},
                        {"confusion_matrix", confusion_json(pe::confusion_matrix(assign, *loaded.data.labels))}};
    }
    emit(out_path, j.dump(2) + "\n");
    if (!membership_path.empty()) pe::write_membership_csv(result.membership, membership_path);
    return result.report.termination == pe::Termination::MaxIterations ? kExitMaxIter : kExitOk;
}

int run_compare(const DataOptions& dopt, const FitOptions& fopt, const std::string& policies,
                const std::string& out_path, const std::string& json_path) {
    const pe::FitConfig cfg = build_config(fopt);
    const LoadedData loaded = load_data(dopt, cfg.cov, cfg.seed);
    const auto& data = loaded.data;

    std::vector<std::string> methods = split(policies, ',');
    std::vector<std::optional<pe::Policy>> parsed;
    for (const auto& m : methods) {
        parsed.push_back(m == "kmeans" ? std::nullopt : std::optional<pe::Policy>(pe::parse_policy(m)));
    }

    // Every policy starts from the same initial model.
    const pe::MixtureModel init = pe::initialize(data, fopt.k, cfg);
    const auto reference = pe::fit_from(data, init, pe::FullPolicy{}, cfg);

    nlohmann::json rows = nlohmann::json::array();
    std::string table;
    char line[256];
    std::snprintf(line, sizeof line, "%-14s %10s %17s %14s %12s %21s\n", "method", "iterations", "membership_error",
                  "density_evals", "time(secs)", "classification_error");
    table += line;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        nlohmann::json row{{"method", methods[i]}};
        std::string iters = "", merr = "", evals = "", cerr = "-";
        double seconds = 0.0;
        std::vector<int> assign;
        if (parsed[i]) {
            const auto res = std::holds_alternative<pe::FullPolicy>(*parsed[i])
                                 ? reference
                                 : pe::fit_from(data, init, *parsed[i], cfg);
            const double me = pe::membership_error(res.membership, reference.membership);
            assign = pe::hard_assign(res.membership);
            seconds = res.report.wall_time;
            row["iterations"] = res.report.iterations;
            row["termination"] = pe::to_string(res.report.termination);
            row["membership_error"] = me;
            row["density_evals"] = res.report.density_evals;
            iters = std::to_string(res.report.iterations);
            std::snprintf(line, sizeof line, "%.6f", me);
            merr = line;
            evals = std::to_string(res.report.density_evals);
        } else {
            const auto km = pe::kmeans(data.points, fopt.k, cfg.seed);
            assign = km.assignments;
            row["iterations"] = km.iterations;
            iters = std::to_string(km.iterations);
        }
        row["wall_time_secs"] = seconds;
        if (data.labels) {
            const double ce = pe::classification_error(assign, *data.labels);
            row["classification_error"] = ce;
            std::snprintf(line, sizeof line, "%.6f", ce);
            cerr = line;
        }
        std::snprintf(line, sizeof line, "%-14s %10s %17s %14s %12.4f %21s\n", methods[i].c_str(), iters.c_str(),
                      merr.empty() ? "-" : merr.c_str(), evals.empty() ? "-" : evals.c_str(), seconds, cerr.c_str());
        table += line;
        rows.push_back(std::move(row));
    }
    emit(out_path, table);
    if (!json_path.empty()) {
        nlohmann::json j{{"rows", rows},
                         {"reference_iterations", reference.report.iterations},
                         {"data", {{"n", data.size()}, {"d", data.dim()}}}};
        pe::write_file(json_path, j.dump(2) + "\n");
    }
    return kExitOk;
}

int run_gen(bool example1, const std::string& spec_path, long long n, std::uint64_t seed, const std::string& out) {
    if (example1 == !spec_path.empty()) throw pe::InvalidArgument("give exactly one of --example1 and --spec");
    if (n < 1) throw pe::InvalidArgument("--n must be at least 1");
    const pe::MixtureSpec spec = example1 ? pe::example1_spec() : pe::mixture_spec_from_json(pe::read_file(spec_path));
    emit(out, pe::dataset_to_csv(pe::sample_mixture(spec, static_cast<std::size_t>(n), seed)));
    return kExitOk;
}

struct Axis {
    double lo, hi;
    std::size_t steps;
    double at(std::size_t i) const {
        return steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
    }
};

Axis parse_axis(const std::string& s) {
    const auto p = split(s, ':');
    if (p.size() != 3) throw pe::InvalidArgument("grid axis must look like min:max:steps, got '" + s + "'");
    const double steps = to_double(p[2], "grid steps");
    if (steps < 1 || steps != std::floor(steps)) throw pe::InvalidArgument("grid steps must be a positive integer");
    return Axis{to_double(p[0], "grid bound"), to_double(p[1], "grid bound"), static_cast<std::size_t>(steps)};
}

int run_contour(const DataOptions& dopt, const std::string& grid, const std::string& weights_s,
                const std::string& vars_s, const std::string& at_fit, const std::string& out) {
    const pe::Dataset data = pe::load_csv(dopt.input, dopt.has_labels);
    data.validate();
    if (data.dim() != 1) throw pe::InvalidArgument("contour needs one-dimensional data");
    const auto axes = split(grid, ',');
    if (axes.size() != 2) throw pe::InvalidArgument("--grid needs two axes separated by a comma");
    const Axis a1 = parse_axis(axes[0]);
    const Axis a2 = parse_axis(axes[1]);
    const auto weights = to_doubles(weights_s, "weight");
    const auto vars = to_doubles(vars_s, "variance");
    if (weights.size() != 2 || vars.size() != 2) throw pe::InvalidArgument("--weights and --vars need two values");

    auto mean_loglik = [&](double m1, double m2) {
        pe::MixtureModel model;
        const double means[2] = {m1, m2};
        for (int k = 0; k < 2; ++k) {
            model.components.push_back(pe::GaussianComponent{pe::Vector::Constant(1, means[k]),
                                                            pe::cholesky_regularized(pe::Matrix::Constant(1, 1, vars[k]), 0.0),
                                                            weights[static_cast<std::size_t>(k)]});
        }
        return pe::observed_loglik(data, model) / static_cast<double>(data.size());
    };

    std::string csv = "mu1,mu2,mean_loglik,kind\n";
    char line[128];
    for (std::size_t i = 0; i < a1.steps; ++i) {
        for (std::size_t j = 0; j < a2.steps; ++j) {
            const double m1 = a1.at(i), m2 = a2.at(j);
            std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,grid\n", m1, m2, mean_loglik(m1, m2));
            csv += line;
        }
    }
    if (!at_fit.empty()) {
        const auto j = nlohmann::json::parse(pe::read_file(at_fit));
        const auto& means = j.at("model").at("means");
        if (means.size() != 2) throw pe::InvalidArgument("--at-fit report must hold a two-component model");
        // Pair the fitted components with the fixed weights by rank so that a
        // fit whose first component is the heavy one still lands on the slice.
        const auto& fw = j.at("model").at("weights");
        const bool swap = (fw[0].get<double>() < fw[1].get<double>()) != (weights[0] < weights[1]);
        double m1 = means[0][0].get<double>(), m2 = means[1][0].get<double>();
        if (swap) std::swap(m1, m2);
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,fit\n", m1, m2, mean_loglik(m1, m2));
        csv += line;
    }
    emit(out, csv);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian mixture EM with partial E-steps"};
    app.require_subcommand(1);

    DataOptions fit_data, cmp_data, contour_data;
    FitOptions fit_opt, cmp_opt;
    std::string fit_out, membership_out, cmp_out, cmp_json, policies = "full";

    auto* fit = app.add_subcommand("fit", "fit a mixture and write a JSON run report");
    add_data_options(fit, fit_data);
    add_fit_options(fit, fit_opt, true);
    fit->add_option("--out", fit_out, "report path (default stdout)");
    fit->add_option("--emit-membership", membership_out, "write the final membership matrix as CSV");
    fit->add_flag("--f-trace", fit_opt.f_trace, "record F after every half step");

    auto* cmp = app.add_subcommand("compare", "run several policies from one initial model");
    add_data_options(cmp, cmp_data);
    add_fit_options(cmp, cmp_opt, false);
    cmp->add_option("--policies", policies, "comma list: full, tau:<n>, lazy[:T[:every]], star[:f], kmeans")
        ->capture_default_str();
    cmp->add_option("--out", cmp_out, "table path (default stdout)");
    cmp->add_option("--json", cmp_json, "also write the rows as JSON");

    bool example1 = false;
    std::string spec_path, gen_out;
    long long gen_n = 0;
    std::uint64_t gen_seed = 0;
    auto* gen = app.add_subcommand("gen", "sample a labeled dataset from a Gaussian mixture");
    gen->add_flag("--example1", example1, "0.3 N(-2,1) + 0.7 N(2,1)");
    gen->add_option("--spec", spec_path, "JSON file with weights, means, covariances")->check(CLI::ExistingFile);
    gen->add_option("--n", gen_n, "number of points")->required();
    gen->add_option("--seed", gen_seed, "random seed")->capture_default_str();
    gen->add_option("--out", gen_out, "CSV path (default stdout)");

    std::string grid, weights = "0.3,0.7", vars = "1,1", at_fit, contour_out;
    auto* contour = app.add_subcommand("contour", "mean log-likelihood over a grid of the two means");
    contour->add_option("--input", contour_data.input, "one-dimensional CSV")->required()->check(CLI::ExistingFile);
    contour->add_flag("--has-labels", contour_data.has_labels, "last CSV column holds labels");
    contour->add_option("--grid", grid, "mu1_min:mu1_max:steps,mu2_min:mu2_max:steps")->required();
    contour->add_option("--weights", weights, "fixed mixing weights")->capture_default_str();
    contour->add_option("--vars", vars, "fixed component variances")->capture_default_str();
    contour->add_option("--at-fit", at_fit, "fit report whose means are appended as a 'fit' row")
        ->check(CLI::ExistingFile);
    contour->add_option("--out", contour_out, "CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitError;
    }

    try {
        if (fit->parsed()) return run_fit(fit_data, fit_opt, fit_out, membership_out);
        if (cmp->parsed()) return run_compare(cmp_data, cmp_opt, policies, cmp_out, cmp_json);
        if (gen->parsed()) return run_gen(example1, spec_path, gen_n, gen_seed, gen_out);
        if (contour->parsed()) return run_contour(contour_data, grid, weights, vars, at_fit, contour_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
