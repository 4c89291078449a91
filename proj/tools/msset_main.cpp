#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "msset/experiment.hpp"
#include "msset/io.hpp"
#include "msset/model.hpp"
#include "msset/selection.hpp"

namespace {

struct TestCmd {
    std::string input;
    std::string format = "wide";
    std::string test = "all";
    double alpha = 0.10;
    std::string binary_outcomes;
    bool smooth = false;
    bool no_continuity = false;
    std::string m_convention = "per-outcome";
    std::string sigma_aa = "sandwich";
    std::string sigma_eval = "null";
    int bootstrap_reps = 1000;
    std::uint64_t seed = 1;
    bool json = false;
    bool egger_fixed = false;
    std::string out;
};

std::vector<int> parse_outcome_list(const std::string& list, int n_outcomes) {
    std::vector<int> out;
    std::string token;
    std::istringstream is(list);
    while (std::getline(is, token, ',')) {
        if (token.empty()) continue;
        const int k = std::stoi(token);
        if (k < 1 || k > n_outcomes)
            throw msset::ValidationError("--binary-outcomes: index out of range: " + token);
        out.push_back(k - 1);
    }
    return out;
}

int run_test_cmd(const TestCmd& cmd) {
    const msset::MetaDataset data = msset::parse_dataset(
        cmd.input, msset::dataset_format_from_name(cmd.format), !cmd.no_continuity);

    msset::MssetOptions options;
    options.binary_outcomes = parse_outcome_list(cmd.binary_outcomes, data.n_outcomes);
    if (options.binary_outcomes.empty()) {
        // counts-format inputs mark their binary outcomes implicitly
        for (int k = 0; k < data.n_outcomes; ++k) {
            bool any = false;
            for (const auto& s : data.studies) any = any || s.has_counts(k);
            if (any) options.binary_outcomes.push_back(k);
        }
    }
    options.smooth = cmd.smooth;
    options.continuity = !cmd.no_continuity;
    if (cmd.m_convention == "per-outcome")
        options.m_convention = msset::MConvention::per_outcome;
    else if (cmd.m_convention == "total")
        options.m_convention = msset::MConvention::total;
    else
        throw msset::ValidationError("--m-convention must be per-outcome or total");
    if (cmd.sigma_aa == "sandwich")
        options.sigma_method = msset::SigmaMethod::sandwich;
    else if (cmd.sigma_aa == "bootstrap")
        options.sigma_method = msset::SigmaMethod::bootstrap;
    else
        throw msset::ValidationError("--sigma-aa must be sandwich or bootstrap");
    if (cmd.sigma_eval == "null")
        options.sigma_eval = msset::SigmaEval::null_restricted;
    else if (cmd.sigma_eval == "unrestricted")
        options.sigma_eval = msset::SigmaEval::unrestricted;
    else
        throw msset::ValidationError("--sigma-eval must be null or unrestricted");
    options.bootstrap_reps = cmd.bootstrap_reps;
    options.seed = cmd.seed;

    msset::TestReportInputs inputs{data, options};
    inputs.alpha = cmd.alpha;
    inputs.run_msset_test = cmd.test == "msset" || cmd.test == "all";
    inputs.run_egger = cmd.test == "egger" || cmd.test == "all";
    inputs.run_begg = cmd.test == "begg" || cmd.test == "all";
    inputs.egger_fixed_effect = cmd.egger_fixed;
    if (!inputs.run_msset_test && !inputs.run_egger && !inputs.run_begg)
        throw msset::ValidationError("--test must be one of msset, egger, begg, all");

    const std::string report =
        cmd.json ? msset::test_report_json(inputs) : msset::test_report_text(inputs);
    if (cmd.out.empty()) {
        std::cout << report << (cmd.json ? "\n" : "");
    } else {
        std::ofstream f(cmd.out);
        if (!f) throw msset::ValidationError("cannot open output file: " + cmd.out);
        f << report << (cmd.json ? "\n" : "");
    }
    return 0;
}

int run_experiment_cmd(const std::string& config_path, const std::string& out_csv,
                       const std::string& out_json, int threads) {
    msset::ExperimentConfig config = msset::load_experiment_config(config_path);
    if (threads > 0) config.threads = threads;
    const msset::ExperimentResult result = msset::run_experiment(config);

    if (!out_csv.empty()) {
        std::ofstream f(out_csv);
        if (!f) throw msset::ValidationError("cannot open output file: " + out_csv);
        msset::write_experiment_csv(result, f);
    }
    if (!out_json.empty()) {
        std::ofstream f(out_json);
        if (!f) throw msset::ValidationError("cannot open output file: " + out_json);
        f << msset::experiment_json(result) << "\n";
    }
    if (out_csv.empty() && out_json.empty()) msset::write_experiment_csv(result, std::cout);
    return 0;
}

int run_funnel_cmd(const std::string& input, const std::string& format, int outcome,
                   const std::string& out) {
    const msset::MetaDataset data =
        msset::parse_dataset(input, msset::dataset_format_from_name(format));
    if (out.empty()) {
        msset::funnel_export(data, outcome - 1, std::cout);
    } else {
        msset::funnel_export_file(data, outcome - 1, out);
    }
    return 0;
}

int run_batch_cmd(const std::string& manifest, double alpha, const std::string& out_csv) {
    const msset::BatchConcordanceResult result = msset::batch_concordance(manifest, alpha);
    msset::write_batch_tables(result, std::cout);
    std::cout << "analyzed " << result.analyzed << " of " << result.rows.size()
              << " datasets\n";
    if (!out_csv.empty()) {
        std::ofstream f(out_csv);
        if (!f) throw msset::ValidationError("cannot open output file: " + out_csv);
        msset::write_batch_csv(result, f);
    }
    return 0;
}

struct GenerateCmd {
    int n = 50;
    double tau2 = 0.9;
    double rho_w = 0.5;
    double rho_b = 0.5;
    double beta = 0.0;
    std::string scenario = "none";
    std::uint64_t seed = 1;
    std::string format = "wide";
    std::string out;
};

int run_generate_cmd(const GenerateCmd& cmd) {
    const msset::ModelParams params =
        msset::ModelParams::bivariate(cmd.beta, cmd.beta, cmd.tau2, cmd.rho_w, cmd.rho_b);
    msset::ScenarioSpec spec = msset::ScenarioSpec::from_name(cmd.scenario);
    if (spec.kind == msset::ScenarioSpec::Kind::p)
        spec.snd_tau2 = Eigen::Vector2d(cmd.tau2, cmd.tau2);
    const msset::MetaDataset data =
        msset::simulate_selected_dataset(params, cmd.n, spec, cmd.seed);

    const auto format = msset::dataset_format_from_name(cmd.format);
    if (cmd.out.empty()) {
        msset::emit_dataset(data, format, std::cout);
    } else {
        std::ofstream f(cmd.out);
        if (!f) throw msset::ValidationError("cannot open output file: " + cmd.out);
        msset::emit_dataset(data, format, f);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Small-study-effect tests for multivariate meta-analysis"};
    app.require_subcommand(1);

    TestCmd test_cmd;
    auto* test = app.add_subcommand("test", "Run SSE tests on a dataset file");
    test->add_option("--input", test_cmd.input, "Dataset file")->required();
    test->add_option("--format", test_cmd.format, "wide | long | counts");
    test->add_option("--test", test_cmd.test, "msset | egger | begg | all");
    test->add_option("--alpha", test_cmd.alpha, "Decision threshold (default 0.10)");
    test->add_option("--binary-outcomes", test_cmd.binary_outcomes,
                     "Comma-separated 1-based outcome indices with 2x2 counts");
    test->add_flag("--smooth", test_cmd.smooth, "Smoothed variance for binary outcomes");
    test->add_flag("--no-continuity", test_cmd.no_continuity,
                   "Disable the 0.5 zero-cell correction");
    test->add_option("--m-convention", test_cmd.m_convention, "per-outcome | total");
    test->add_option("--sigma-aa", test_cmd.sigma_aa, "sandwich | bootstrap");
    test->add_option("--sigma-eval", test_cmd.sigma_eval, "null | unrestricted");
    test->add_option("--bootstrap-reps", test_cmd.bootstrap_reps, "Bootstrap replicates");
    test->add_option("--seed", test_cmd.seed, "Seed for bootstrap sigma");
    test->add_flag("--json", test_cmd.json, "Emit the full JSON report");
    test->add_flag("--egger-fixed", test_cmd.egger_fixed,
                   "Classic fixed-effect Egger scale (tau2 = 0)");
    test->add_option("--out", test_cmd.out, "Write the report to a file");

    std::string config_path, out_csv, out_json;
    int threads = 0;
    auto* experiment = app.add_subcommand("experiment", "Run a Monte Carlo experiment");
    experiment->add_option("--config", config_path, "key = value config file")->required();
    experiment->add_option("--out-csv", out_csv, "CSV output path");
    experiment->add_option("--out-json", out_json, "JSON output path");
    experiment->add_option("--threads", threads, "Worker threads (0 = hardware)");

    std::string funnel_input, funnel_format = "wide", funnel_out;
    int funnel_outcome = 1;
    auto* funnel = app.add_subcommand("funnel", "Export funnel-plot data for one outcome");
    funnel->add_option("--input", funnel_input, "Dataset file")->required();
    funnel->add_option("--format", funnel_format, "wide | long | counts");
    funnel->add_option("--outcome", funnel_outcome, "1-based outcome index")->required();
    funnel->add_option("--out", funnel_out, "Output CSV path");

    std::string manifest, batch_csv;
    double batch_alpha = 0.10;
    auto* batch = app.add_subcommand("batch", "Concordance tables over a dataset manifest");
    batch->add_option("--manifest", manifest, "Manifest file (path[,format] per line)")->required();
    batch->add_option("--alpha", batch_alpha, "Dichotomization threshold");
    batch->add_option("--out-csv", batch_csv, "Per-dataset decision CSV");

    GenerateCmd gen_cmd;
    auto* gen = app.add_subcommand("generate", "Simulate a bivariate dataset");
    gen->add_option("--n", gen_cmd.n, "Number of studies");
    gen->add_option("--tau2", gen_cmd.tau2, "Between-study variance (both outcomes)");
    gen->add_option("--rho-w", gen_cmd.rho_w, "Within-study correlation");
    gen->add_option("--rho-b", gen_cmd.rho_b, "Between-study correlation");
    gen->add_option("--beta", gen_cmd.beta, "Overall effect (both outcomes)");
    gen->add_option("--scenario", gen_cmd.scenario, "none | C1 | C2 | C3 | P");
    gen->add_option("--seed", gen_cmd.seed, "Seed");
    gen->add_option("--format", gen_cmd.format, "wide | long");
    gen->add_option("--out", gen_cmd.out, "Output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 64;
    }

    try {
        if (*test) return run_test_cmd(test_cmd);
        if (*experiment) return run_experiment_cmd(config_path, out_csv, out_json, threads);
        if (*funnel) return run_funnel_cmd(funnel_input, funnel_format, funnel_outcome, funnel_out);
        if (*batch) return run_batch_cmd(manifest, batch_alpha, batch_csv);
        if (*gen) return run_generate_cmd(gen_cmd);
    } catch (const msset::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const msset::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
