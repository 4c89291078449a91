#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "msset/selection.hpp"

namespace msset {

enum class TestKind {
    msset,
    msset_smooth,
    egger1,
    egger_bonf,
    egger1_smooth,
    egger_bonf_smooth,
    begg1,
    begg_bonf,
};

std::string test_kind_name(TestKind kind);
TestKind test_kind_from_name(const std::string& name);

struct ExperimentConfig {
    std::vector<int> n_list{100};
    std::vector<double> tau2_list{0.9};
    double rho_w = 0.5;
    double rho_b = 0.5;
    // Overall effect applied to every outcome. Power runs need a nonzero
    // value: two-sided selection of zero-mean effects is symmetric and
    // produces no funnel asymmetry.
    double beta = 0.0;
    ScenarioSpec::Kind scenario = ScenarioSpec::Kind::none;
    double alpha = 0.10;
    int replicates = 5000;
    std::vector<TestKind> tests{TestKind::msset};
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = hardware concurrency

    // Mixed continuous/binary cells (one outcome simulated as 2x2 tables).
    bool mixed_binary = false;
    BinaryOutcomeConfig binary;

    void validate() const;
};

// Flat key = value file, '#' comments. Unknown keys are an error.
ExperimentConfig parse_experiment_config(std::istream& in);
ExperimentConfig load_experiment_config(const std::string& path);

struct CellResult {
    int n = 0;
    double tau2 = 0.0;
    TestKind test{};
    int replicates = 0;
    long long rejections = 0;
    long long failures = 0;  // replicates where this test raised an error

    int successes() const { return replicates - static_cast<int>(failures); }
    double rate() const;
    double mc_se() const;  // sqrt(r (1-r) / successes)
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<CellResult> cells;

    const CellResult& cell(int n, double tau2, TestKind test) const;
};

// Monte Carlo rejection rates over all (n, tau2) cells. Per-replicate seeds
// are derived by counter from config.seed, and replicate outcomes land in
// preallocated slots, so the result is bit-identical for any thread count.
ExperimentResult run_experiment(const ExperimentConfig& config);

void write_experiment_csv(const ExperimentResult& result, std::ostream& out);
std::string experiment_json(const ExperimentResult& result);

}  // namespace msset
