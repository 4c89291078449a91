#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "msset/data.hpp"
#include "msset/model.hpp"

namespace msset {

// p-value bins used by the C-scenario grids: [0, .01), [.01, .05),
// [.05, .10), [.10, 1].
int pvalue_bin(double p);

// Logit model for the probability that one outcome is reported, as a
// function of its standardized deviate:
//   logit(prob) = (intercept + slope*SND + quad*SND^2) for SND < threshold,
//                 plateau_logit               for SND >= threshold.
struct LogitSelection {
    double intercept = -2.5;
    double slope = 0.1;
    double quad = 1.5;
    double snd_threshold = 2.0;
    double plateau_logit = 4.0;

    double report_probability(double snd) const;
};

// Selection mechanism applied between data generation and analysis.
// C-scenarios suppress whole studies via a 4x4 grid of publication
// probabilities indexed by the p-value bins of the two outcomes; scenario P
// drops individual outcomes with the logit model above.
struct ScenarioSpec {
    enum class Kind { none, c1, c2, c3, p, custom };
    Kind kind = Kind::none;
    Eigen::Matrix4d grid = Eigen::Matrix4d::Zero();
    LogitSelection logit;
    // True between-study variances used for the SND entering the logit
    // model (available in simulation); empty means zeros.
    Eigen::VectorXd snd_tau2;

    bool whole_study() const { return kind == Kind::c1 || kind == Kind::c2 ||
                                      kind == Kind::c3 || kind == Kind::custom; }

    static ScenarioSpec none();
    static ScenarioSpec c1();
    static ScenarioSpec c2();
    static ScenarioSpec c3();
    static ScenarioSpec p(const Eigen::VectorXd& snd_tau2);
    static ScenarioSpec custom(const Eigen::Matrix4d& grid);
    static ScenarioSpec from_name(const std::string& name);
};

// Default diagonal severities for the step grids; grid(i,j) = diag[max(i,j)].
Eigen::Matrix4d c_grid_from_diagonal(const Eigen::Vector4d& diag);

// Whole-study publication probability for a C-scenario, from the two
// outcomes' two-sided Wald p-values.
double study_publication_probability(const ScenarioSpec& spec, double p1, double p2);

// Per-outcome reporting probabilities for scenario P, from the outcomes'
// standardized deviates.
Eigen::VectorXd outcome_report_probabilities(const ScenarioSpec& spec,
                                             const Eigen::VectorXd& snd);

// Applies the selection mechanism. C-scenarios keep or drop whole studies;
// P drops individual outcomes and removes studies left with none.
// Deterministic under seed (one uniform per study for C, one per outcome
// for P, in dataset order).
MetaDataset apply_selection(const MetaDataset& data, const ScenarioSpec& spec,
                            std::uint64_t seed);

// Power-pipeline draw: generate batches of 3n studies, select, then sample
// n uniformly without replacement from the survivors. Additional batches
// are generated when fewer than n studies survive; a retry cap guards
// pathological specs.
MetaDataset simulate_selected_dataset(const ModelParams& params, int n,
                                      const ScenarioSpec& spec, std::uint64_t seed);

// Mixed continuous/binary generator: the binary outcome is produced as 2x2
// tables from binomial draws whose true logOR is the study's random effect,
// with the naive (logOR, se) stored as its measurement; the other outcomes
// stay continuous.
struct BinaryOutcomeConfig {
    int binary_outcome = 0;
    int exposed_size = 100;
    int unexposed_size = 100;
    double baseline_rate = 0.5;
};

MetaDataset generate_mixed_binary_dataset(const ModelParams& params, int m,
                                          const BinaryOutcomeConfig& config,
                                          std::uint64_t seed);

}  // namespace msset
