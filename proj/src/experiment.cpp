#include "msset/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include "msset/rng.hpp"
#include "msset/score_test.hpp"
#include "msset/univariate.hpp"
#include "json.hpp"

namespace msset {

std::string test_kind_name(TestKind kind) {
    switch (kind) {
        case TestKind::msset: return "msset";
        case TestKind::msset_smooth: return "msset_smooth";
        case TestKind::egger1: return "egger1";
        case TestKind::egger_bonf: return "egger";
        case TestKind::egger1_smooth: return "egger1_smooth";
        case TestKind::egger_bonf_smooth: return "egger_smooth";
        case TestKind::begg1: return "begg1";
        case TestKind::begg_bonf: return "begg";
    }
    throw ValidationError("unknown test kind");
}

TestKind test_kind_from_name(const std::string& name) {
    for (TestKind k : {TestKind::msset, TestKind::msset_smooth, TestKind::egger1,
                       TestKind::egger_bonf, TestKind::egger1_smooth,
                       TestKind::egger_bonf_smooth, TestKind::begg1, TestKind::begg_bonf})
        if (test_kind_name(k) == name) return k;
    throw ValidationError("unknown test: " + name);
}

void ExperimentConfig::validate() const {
    if (n_list.empty() || tau2_list.empty()) throw ValidationError("experiment: empty grid");
    for (int n : n_list)
        if (n < 3) throw ValidationError("experiment: n must be >= 3");
    for (double t : tau2_list)
        if (!(t >= 0.0)) throw ValidationError("experiment: tau2 must be >= 0");
    if (std::abs(rho_w) > 1.0 || std::abs(rho_b) > 1.0)
        throw ValidationError("experiment: correlations must lie in [-1, 1]");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("experiment: alpha must lie in (0, 1]");
    if (replicates < 1) throw ValidationError("experiment: replicates must be >= 1");
    if (tests.empty()) throw ValidationError("experiment: no tests selected");
    if (mixed_binary && scenario != ScenarioSpec::Kind::none)
        throw ValidationError("experiment: mixed binary cells support scenario none only");
}

double CellResult::rate() const {
    const int s = successes();
    return s > 0 ? static_cast<double>(rejections) / s : std::nan("");
}

double CellResult::mc_se() const {
    const int s = successes();
    if (s <= 0) return std::nan("");
    const double r = rate();
    return std::sqrt(r * (1.0 - r) / s);
}

const CellResult& ExperimentResult::cell(int n, double tau2, TestKind test) const {
    for (const auto& c : cells)
        if (c.n == n && std::abs(c.tau2 - tau2) < 1e-12 && c.test == test) return c;
    throw ValidationError("experiment cell not found");
}

namespace {

enum class Outcome : std::uint8_t { reject, accept, failed };

struct VariantAnalysis {
    // per-outcome RE-scale transforms for Egger and raw (y, s) for Begg
    std::vector<OutcomeTransform> transforms;
    std::vector<Eigen::VectorXd> effects;
    std::vector<Eigen::VectorXd> stderrs;
};

VariantAnalysis analyze_variant(const MetaDataset& data) {
    VariantAnalysis v;
    for (int k = 0; k < data.n_outcomes; ++k) {
        const std::vector<int> reporting = data.reporting_studies(k);
        const int mj = static_cast<int>(reporting.size());
        if (mj < 3) throw ComputationError("outcome reported by fewer than 3 studies");
        Eigen::VectorXd y(mj), s(mj);
        for (int i = 0; i < mj; ++i) {
            const auto& meas = data.studies[static_cast<std::size_t>(reporting[i])].at(k);
            y(i) = meas.effect;
            s(i) = meas.se;
        }
        v.effects.push_back(y);
        v.stderrs.push_back(s);
        v.transforms.push_back(transform_snd_precision(data, k, dl_tau2(y, s)));
    }
    return v;
}

class ReplicateAnalyzer {
  public:
    ReplicateAnalyzer(const MetaDataset& data, const ExperimentConfig& config,
                      std::uint64_t seed)
        : data_(data), config_(config), seed_(seed) {}

    double p_value(TestKind kind) {
        switch (kind) {
            case TestKind::msset:
                return run_msset(data_, msset_options(false)).p_value;
            case TestKind::msset_smooth:
                return run_msset(data_, msset_options(true)).p_value;
            case TestKind::egger1:
                return egger_test(naive().transforms.at(0)).p_value;
            case TestKind::egger_bonf:
                return egger_bonferroni(naive());
            case TestKind::egger1_smooth:
                return egger_test(smoothed().transforms.at(0)).p_value;
            case TestKind::egger_bonf_smooth:
                return egger_bonferroni(smoothed());
            case TestKind::begg1:
                return begg_test(naive().effects.at(0), naive().stderrs.at(0), 0.0).p_value;
            case TestKind::begg_bonf: {
                std::vector<TestResult> parts;
                for (int k = 0; k < data_.n_outcomes; ++k)
                    parts.push_back(
                        begg_test(naive().effects.at(static_cast<std::size_t>(k)),
                                  naive().stderrs.at(static_cast<std::size_t>(k)), 0.0));
                return bonferroni_combine(parts).p_value;
            }
        }
        throw ValidationError("unknown test kind");
    }

  private:
    MssetOptions msset_options(bool smooth) const {
        MssetOptions opts;
        if (config_.mixed_binary) opts.binary_outcomes = {config_.binary.binary_outcome};
        opts.smooth = smooth;
        opts.seed = derive_seed(seed_, 0xB0);
        return opts;
    }

    const VariantAnalysis& naive() {
        if (!naive_) naive_ = analyze_variant(data_);
        return *naive_;
    }

    const VariantAnalysis& smoothed() {
        if (!smoothed_) smoothed_ = analyze_variant(apply_variance_smoothing(data_, msset_options(true)));
        return *smoothed_;
    }

    double egger_bonferroni(const VariantAnalysis& v) const {
        std::vector<TestResult> parts;
        for (const auto& t : v.transforms) parts.push_back(egger_test(t));
        return bonferroni_combine(parts).p_value;
    }

    const MetaDataset& data_;
    const ExperimentConfig& config_;
    std::uint64_t seed_ = 0;
    std::optional<VariantAnalysis> naive_;
    std::optional<VariantAnalysis> smoothed_;
};

MetaDataset draw_replicate(const ExperimentConfig& config, int n, double tau2,
                           std::uint64_t seed) {
    const ModelParams params =
        ModelParams::bivariate(config.beta, config.beta, tau2, config.rho_w, config.rho_b);
    if (config.mixed_binary) return generate_mixed_binary_dataset(params, n, config.binary, seed);
    if (config.scenario == ScenarioSpec::Kind::none) return generate_dataset(params, n, seed);

    ScenarioSpec spec = [&] {
        switch (config.scenario) {
            case ScenarioSpec::Kind::c1: return ScenarioSpec::c1();
            case ScenarioSpec::Kind::c2: return ScenarioSpec::c2();
            case ScenarioSpec::Kind::c3: return ScenarioSpec::c3();
            case ScenarioSpec::Kind::p:
                return ScenarioSpec::p(Eigen::Vector2d(tau2, tau2));
            default: throw ValidationError("unsupported scenario");
        }
    }();
    return simulate_selected_dataset(params, n, spec, seed);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    const int n_tests = static_cast<int>(config.tests.size());
    const int reps = config.replicates;
    int n_threads = config.threads > 0
                        ? config.threads
                        : std::max(1u, std::thread::hardware_concurrency());

    ExperimentResult result;
    result.config = config;

    int cell_index = 0;
    for (int n : config.n_list) {
        for (double tau2 : config.tau2_list) {
            // one outcome slot per (replicate, test); workers never share slots
            std::vector<Outcome> outcomes(static_cast<std::size_t>(reps) * n_tests,
                                          Outcome::failed);
            auto run_range = [&](int start, int stride) {
                for (int r = start; r < reps; r += stride) {
                    const std::uint64_t seed =
                        derive_seed(config.seed, static_cast<std::uint64_t>(cell_index),
                                    static_cast<std::uint64_t>(r));
                    std::optional<MetaDataset> data;
                    try {
                        data = draw_replicate(config, n, tau2, seed);
                    } catch (const Error&) {
                        continue;  // all tests in this replicate stay failed
                    }
                    ReplicateAnalyzer analyzer(*data, config, seed);
                    for (int t = 0; t < n_tests; ++t) {
                        Outcome& slot = outcomes[static_cast<std::size_t>(r) * n_tests + t];
                        try {
                            const double p = analyzer.p_value(config.tests[static_cast<std::size_t>(t)]);
                            slot = p <= config.alpha ? Outcome::reject : Outcome::accept;
                        } catch (const Error&) {
                            slot = Outcome::failed;
                        }
                    }
                }
            };

            if (n_threads <= 1) {
                run_range(0, 1);
            } else {
                std::vector<std::thread> pool;
                pool.reserve(static_cast<std::size_t>(n_threads));
                for (int w = 0; w < n_threads; ++w)
                    pool.emplace_back(run_range, w, n_threads);
                for (auto& th : pool) th.join();
            }

            for (int t = 0; t < n_tests; ++t) {
                CellResult cell;
                cell.n = n;
                cell.tau2 = tau2;
                cell.test = config.tests[static_cast<std::size_t>(t)];
                cell.replicates = reps;
                for (int r = 0; r < reps; ++r) {
                    switch (outcomes[static_cast<std::size_t>(r) * n_tests + t]) {
                        case Outcome::reject: ++cell.rejections; break;
                        case Outcome::accept: break;
                        case Outcome::failed: ++cell.failures; break;
                    }
                }
                result.cells.push_back(cell);
            }
            ++cell_index;
        }
    }
    return result;
}

// --- config file ------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string token;
    for (char c : s) {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!token.empty()) out.push_back(token);
            token.clear();
        } else {
            token.push_back(c);
        }
    }
    if (!token.empty()) out.push_back(token);
    return out;
}

bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParseError("config line " + std::to_string(line) + ": expected a boolean, got '" + v + "'");
}

double parse_double(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ParseError("config line " + std::to_string(line) + ": expected a number, got '" + v + "'");
    }
}

int parse_int(const std::string& v, int line) {
    const double x = parse_double(v, line);
    if (x != std::floor(x)) throw ParseError("config line " + std::to_string(line) +
                                             ": expected an integer, got '" + v + "'");
    return static_cast<int>(x);
}

}  // namespace

ExperimentConfig parse_experiment_config(std::istream& in) {
    ExperimentConfig config;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (value.empty())
            throw ParseError("config line " + std::to_string(line_no) + ": empty value for " + key);

        if (key == "n_list" || key == "n") {
            config.n_list.clear();
            for (const auto& v : split_list(value)) config.n_list.push_back(parse_int(v, line_no));
        } else if (key == "tau2_list" || key == "tau2") {
            config.tau2_list.clear();
            for (const auto& v : split_list(value))
                config.tau2_list.push_back(parse_double(v, line_no));
        } else if (key == "rho_w") {
            config.rho_w = parse_double(value, line_no);
        } else if (key == "rho_b") {
            config.rho_b = parse_double(value, line_no);
        } else if (key == "beta") {
            config.beta = parse_double(value, line_no);
        } else if (key == "scenario") {
            config.scenario = ScenarioSpec::from_name(value).kind;
        } else if (key == "alpha") {
            config.alpha = parse_double(value, line_no);
        } else if (key == "replicates") {
            config.replicates = parse_int(value, line_no);
        } else if (key == "tests") {
            config.tests.clear();
            for (const auto& v : split_list(value)) config.tests.push_back(test_kind_from_name(v));
        } else if (key == "seed") {
            config.seed = static_cast<std::uint64_t>(std::stoull(value));
        } else if (key == "threads") {
            config.threads = parse_int(value, line_no);
        } else if (key == "mixed_binary") {
            config.mixed_binary = parse_bool(value, line_no);
        } else if (key == "binary_outcome") {
            config.binary.binary_outcome = parse_int(value, line_no) - 1;
        } else if (key == "exposed_size") {
            config.binary.exposed_size = parse_int(value, line_no);
        } else if (key == "unexposed_size") {
            config.binary.unexposed_size = parse_int(value, line_no);
        } else if (key == "group_size") {
            config.binary.exposed_size = config.binary.unexposed_size = parse_int(value, line_no);
        } else if (key == "baseline_rate") {
            config.binary.baseline_rate = parse_double(value, line_no);
        } else {
            throw ParseError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    config.validate();
    return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    return parse_experiment_config(in);
}

namespace {

const char* scenario_name(ScenarioSpec::Kind kind) {
    switch (kind) {
        case ScenarioSpec::Kind::none: return "none";
        case ScenarioSpec::Kind::c1: return "C1";
        case ScenarioSpec::Kind::c2: return "C2";
        case ScenarioSpec::Kind::c3: return "C3";
        case ScenarioSpec::Kind::p: return "P";
        case ScenarioSpec::Kind::custom: return "custom";
    }
    return "?";
}

}  // namespace

void write_experiment_csv(const ExperimentResult& result, std::ostream& out) {
    out << "n,tau2,scenario,test,replicates,failures,rejections,rate,mc_se\n";
    for (const auto& c : result.cells) {
        out << c.n << ',' << c.tau2 << ',' << scenario_name(result.config.scenario) << ','
            << test_kind_name(c.test) << ',' << c.replicates << ',' << c.failures << ','
            << c.rejections << ',' << c.rate() << ',' << c.mc_se() << '\n';
    }
}

std::string experiment_json(const ExperimentResult& result) {
    nlohmann::json j;
    j["config"] = {
        {"n_list", result.config.n_list},
        {"tau2_list", result.config.tau2_list},
        {"rho_w", result.config.rho_w},
        {"rho_b", result.config.rho_b},
        {"beta", result.config.beta},
        {"scenario", scenario_name(result.config.scenario)},
        {"alpha", result.config.alpha},
        {"replicates", result.config.replicates},
        {"seed", result.config.seed},
        {"mixed_binary", result.config.mixed_binary},
    };
    std::vector<std::string> names;
    for (TestKind k : result.config.tests) names.push_back(test_kind_name(k));
    j["config"]["tests"] = names;

    j["cells"] = nlohmann::json::array();
    for (const auto& c : result.cells) {
        nlohmann::json cell = {
            {"n", c.n},
            {"tau2", c.tau2},
            {"test", test_kind_name(c.test)},
            {"replicates", c.replicates},
            {"failures", c.failures},
            {"rejections", c.rejections},
        };
        if (c.successes() > 0) {
            cell["rate"] = c.rate();
            cell["mc_se"] = c.mc_se();
        } else {
            cell["rate"] = nullptr;
            cell["mc_se"] = nullptr;
        }
        j["cells"].push_back(cell);
    }
    return j.dump(2);
}

}  // namespace msset
