#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msset/error.hpp"

namespace msset {

// One reported (effect, standard error) pair on the outcome scale.
struct OutcomeMeasurement {
    double effect = 0.0;
    double se = 0.0;  // within-study standard error, > 0
};

// 2x2 table for a binary outcome: a/b = cases/controls exposed,
// c/d = cases/controls unexposed. logOR = log(ad/bc).
struct CountTable {
    long long a = 0;
    long long b = 0;
    long long c = 0;
    long long d = 0;

    bool has_zero_cell() const { return a == 0 || b == 0 || c == 0 || d == 0; }
};

struct StudyRecord {
    std::string id;
    // Length J; a disengaged entry means the outcome was not reported.
    std::vector<std::optional<OutcomeMeasurement>> measurements;
    // Empty, or length J with tables only for binary outcomes.
    std::vector<std::optional<CountTable>> counts;

    bool reports(int outcome) const {
        return outcome >= 0 && outcome < static_cast<int>(measurements.size()) &&
               measurements[static_cast<std::size_t>(outcome)].has_value();
    }
    const OutcomeMeasurement& at(int outcome) const {
        return *measurements[static_cast<std::size_t>(outcome)];
    }
    bool has_counts(int outcome) const {
        return outcome >= 0 && outcome < static_cast<int>(counts.size()) &&
               counts[static_cast<std::size_t>(outcome)].has_value();
    }
};

struct MetaDataset {
    std::vector<StudyRecord> studies;
    int n_outcomes = 0;
    std::vector<std::string> outcome_labels;

    int study_count() const { return static_cast<int>(studies.size()); }

    // Number of studies reporting outcome j.
    int reporting_count(int outcome) const {
        int n = 0;
        for (const auto& s : studies) n += s.reports(outcome) ? 1 : 0;
        return n;
    }

    std::vector<int> reporting_studies(int outcome) const {
        std::vector<int> idx;
        for (int i = 0; i < study_count(); ++i)
            if (studies[static_cast<std::size_t>(i)].reports(outcome)) idx.push_back(i);
        return idx;
    }
};

struct ValidationIssue {
    std::string study_id;  // empty for dataset-level issues
    int outcome = -1;      // -1 for study/dataset-level issues
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    bool ok() const { return issues.empty(); }
    std::string to_string() const;
};

// Sampling law for within-study variances s^2 in simulated data.
// Default: s^2 is the square of a N(0.3, 0.5^2) draw.
struct StderrDistribution {
    enum class Kind { squared_normal, fixed };
    Kind kind = Kind::squared_normal;
    double mean = 0.3;
    double sd = 0.5;
    double fixed_se = 1.0;

    static StderrDistribution fixed(double se) {
        StderrDistribution d;
        d.kind = Kind::fixed;
        d.fixed_se = se;
        return d;
    }
};

// Generative truth for the random-effects model: per-outcome overall
// effects and between-study variances plus the two correlation matrices.
// rho_within is applied as the within-study correlation of every study.
struct ModelParams {
    Eigen::VectorXd beta;
    Eigen::VectorXd tau2;
    Eigen::MatrixXd rho_between;
    Eigen::MatrixXd rho_within;
    StderrDistribution s_dist;

    int outcome_count() const { return static_cast<int>(beta.size()); }

    // Throws ValidationError on any broken invariant (dimension mismatch,
    // tau2 < 0, correlation matrices not symmetric PSD with unit diagonal).
    void validate() const;

    static ModelParams bivariate(double beta1, double beta2, double tau2_both, double rho_w,
                                 double rho_b);
    static ModelParams univariate(double beta1, double tau2_1);
};

}  // namespace msset
