// dips: average treatment effects with the double-index propensity score.
//
//   dips estimate --input data.csv --outcome Y --treatment T [options]
//   dips simulate --scenario both-correct --n 1000 --p 15 --reps 500 [options]
//
// Exit codes: 0 success, 2 configuration error, 1 data/estimation/I-O error.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dips/dips.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

dips::Family parse_family(const std::string& s) {
    if (s == "gaussian") return dips::Family::kGaussian;
    if (s == "binomial") return dips::Family::kBinomial;
    throw dips::ConfigError("unknown family '" + s + "' (expected gaussian or binomial)");
}

dips::Criterion parse_criterion(const std::string& s) {
    if (s == "eric") return dips::Criterion::kEric;
    if (s == "bic") return dips::Criterion::kBic;
    throw dips::ConfigError("unknown criterion '" + s + "' (expected eric or bic)");
}

std::vector<dips::Method> parse_methods(const std::string& s) {
    std::vector<dips::Method> out;
    for (const auto& m : split_list(s)) out.push_back(dips::parse_method(m));
    if (out.empty()) throw dips::ConfigError("no method given");
    return out;
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-")
        std::cout << text;
    else
        dips::write_text(path, text);
}

struct EstimateArgs {
    std::string input, outcome, treatment, covariates, family = "gaussian", methods = "dips";
    std::string output = "-", dump_resamples, criterion = "eric";
    int resamples = 500;
    std::uint64_t seed = 1;
    double trim = 0, gamma = 1.0, bandwidth = 0;
    unsigned threads = 0;
    bool arm_specific = false, no_standardize = false, retune = false;
};

struct SimulateArgs {
    std::string scenario, estimators = "dips,ipw-alas,dr-alas", output = "-", csv;
    long n = 0, p = 0;
    int reps = 0, resamples = 0;
    std::uint64_t seed = 1;
    double noise_sd = std::sqrt(10.0);
    unsigned threads = 0;
    bool no_timing = false;
};

int run_estimate(const EstimateArgs& a) {
    dips::EstimatorConfig cfg;
    cfg.outcome_family = parse_family(a.family);
    cfg.standardize = !a.no_standardize;
    cfg.arm_specific_slopes = a.arm_specific;
    cfg.gamma = a.gamma;
    cfg.glm.criterion = parse_criterion(a.criterion);
    if (a.trim != 0) {
        if (!(a.trim > 0 && a.trim < 0.5)) throw dips::ConfigError("--trim-ps must lie in (0, 0.5)");
        cfg.trim = a.trim;
    }
    if (a.bandwidth != 0) {
        if (!(a.bandwidth > 0)) throw dips::ConfigError("--bandwidth must be positive");
        cfg.smoother.bandwidth = a.bandwidth;
    }
    if (a.resamples < 0 || a.resamples == 1) throw dips::ConfigError("--resamples must be 0 or at least 2");
    const auto methods = parse_methods(a.methods);
    const unsigned threads = a.threads ? a.threads : dips::default_threads();
    cfg.smoother.threads = threads;

    const dips::Dataset d = dips::load_csv(a.input, a.outcome, a.treatment, split_list(a.covariates));
    std::vector<dips::EffectEstimate> estimates;
    std::vector<dips::ResampleSummary> summaries;
    if (a.resamples > 0) {
        dips::PerturbationConfig pc;
        pc.resamples = a.resamples;
        pc.seed = a.seed;
        pc.threads = threads;
        pc.reuse_lambda = !a.retune;
        estimates = dips::estimate_with_inference(d, cfg, methods, pc, &summaries);
    } else {
        estimates = dips::estimate_all(d, cfg, methods);
    }

    dips::Json out;
    if (estimates.size() == 1) {
        out = dips::to_json(estimates.front(), d.n(), d.p(), a.seed);
    } else {
        out = dips::Json::array();
        for (const auto& e : estimates) out.push_back(dips::to_json(e, d.n(), d.p(), a.seed));
    }
    emit(a.output, out.dump(2) + "\n");
    if (!a.dump_resamples.empty() && !summaries.empty()) {
        std::string text;
        for (std::size_t k = 0; k < summaries.size(); ++k) {
            std::string block = dips::resamples_csv(summaries[k]);
            if (summaries.size() > 1) {
                // prefix a method column when several estimators were perturbed
                std::string tagged = k == 0 ? "method," + block.substr(0, block.find('\n') + 1) : "";
                std::stringstream ss(block.substr(block.find('\n') + 1));
                std::string line;
                while (std::getline(ss, line)) tagged += std::string(dips::to_string(estimates[k].method)) + "," + line + "\n";
                block = tagged;
            }
            text += block;
        }
        dips::write_text(a.dump_resamples, text);
    }
    for (const auto& e : estimates)
        for (const auto& w : e.diagnostics.warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

int run_simulate(const SimulateArgs& a) {
    dips::ScenarioConfig cfg;
    cfg.scenario = dips::parse_scenario(a.scenario);
    cfg.n = a.n;
    cfg.p = a.p;
    cfg.reps = a.reps;
    cfg.seed = a.seed;
    cfg.noise_sd = a.noise_sd;
    cfg.estimators = parse_methods(a.estimators);
    cfg.threads = a.threads ? a.threads : dips::default_threads();
    if (a.resamples < 0 || a.resamples == 1) throw dips::ConfigError("--resamples must be 0 or at least 2");
    if (a.resamples > 0) {
        dips::PerturbationConfig pc;
        pc.resamples = a.resamples;
        pc.seed = a.seed;
        cfg.perturb = pc;
    }
    cfg.validate();
    const dips::SimReport report = dips::run_experiment(cfg);
    emit(a.output, dips::to_json(report, !a.no_timing).dump(2) + "\n");
    if (!a.csv.empty()) dips::write_text(a.csv, dips::to_csv(report));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Average treatment effects with the double-index propensity score (DiPS)"};
    app.set_version_flag("--version", std::string(dips::kVersion));
    app.require_subcommand(1);

    EstimateArgs ea;
    auto* est = app.add_subcommand("estimate", "estimate the ATE from a CSV file");
    est->add_option("--input", ea.input, "CSV file with a header row")->required();
    est->add_option("--outcome", ea.outcome, "outcome column")->required();
    est->add_option("--treatment", ea.treatment, "0/1 treatment column")->required();
    est->add_option("--covariates", ea.covariates, "comma-separated covariate columns (default: all others)");
    est->add_option("--family", ea.family, "outcome working model: gaussian or binomial")->capture_default_str();
    est->add_option("--method", ea.methods, "comma-separated: dips, ipw-alas, dr-alas")->capture_default_str();
    est->add_option("--resamples", ea.resamples, "perturbation resamples (0 disables inference)")->capture_default_str();
    est->add_option("--seed", ea.seed, "resampling seed")->capture_default_str();
    est->add_option("--trim-ps", ea.trim, "clip propensities into [eps, 1-eps]");
    est->add_option("--gamma", ea.gamma, "adaptive-LASSO exponent")->capture_default_str();
    est->add_option("--criterion", ea.criterion, "lambda criterion: eric or bic")->capture_default_str();
    est->add_option("--bandwidth", ea.bandwidth, "override the plug-in bandwidth");
    est->add_flag("--arm-specific-slopes", ea.arm_specific, "separate outcome slopes per arm");
    est->add_flag("--no-standardize", ea.no_standardize, "penalize covariates on their raw scale");
    est->add_flag("--retune-lambda", ea.retune, "re-tune lambda inside every resample");
    est->add_option("--output", ea.output, "JSON output path ('-' for stdout)")->capture_default_str();
    est->add_option("--dump-resamples", ea.dump_resamples, "write the resampled estimates to this CSV");
    est->add_option("--threads", ea.threads, "worker threads (default: DIPS_THREADS or all cores)");

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "run a Monte Carlo scenario study");
    sim->add_option("--scenario", sa.scenario, "both-correct, misspec-outcome, misspec-ps, both-misspec")->required();
    sim->add_option("--n", sa.n, "sample size")->required();
    sim->add_option("--p", sa.p, "covariate dimension (>= 10)")->required();
    sim->add_option("--reps", sa.reps, "repetitions")->required();
    sim->add_option("--seed", sa.seed, "master seed")->capture_default_str();
    sim->add_option("--estimators", sa.estimators, "comma-separated estimators")->capture_default_str();
    sim->add_option("--resamples", sa.resamples, "perturbations per repetition for coverage (0: off)");
    sim->add_option("--noise-sd", sa.noise_sd, "outcome noise standard deviation")->capture_default_str();
    sim->add_option("--output", sa.output, "JSON output path ('-' for stdout)")->capture_default_str();
    sim->add_option("--csv", sa.csv, "also write a flat CSV summary here");
    sim->add_option("--threads", sa.threads, "worker threads (default: DIPS_THREADS or all cores)");
    sim->add_flag("--no-timing", sa.no_timing, "omit wall-clock fields from the JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "CONFIG: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*est) return run_estimate(ea);
        return run_simulate(sa);
    } catch (const dips::ConfigError& e) {
        std::cerr << e.prefix() << ": " << e.what() << "\n";
        return 2;
    } catch (const dips::Error& e) {
        std::cerr << e.prefix() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "ESTIMATION: " << e.what() << "\n";
        return 1;
    }
}
