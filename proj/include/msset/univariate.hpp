#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "msset/heterogeneity.hpp"

namespace msset {

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    int df = 0;  // context: residual df (Egger), study count (Begg), J (Bonferroni)
    std::string method;
    std::vector<TestResult> per_outcome;
};

// Egger's regression test on one outcome: OLS of SND on P with intercept,
// t = a_hat / SE(a_hat) against t_{m-2}, two-sided. Requires m >= 3 and a
// non-constant precision vector.
TestResult egger_test(const OutcomeTransform& transform);

// Kendall S statistic (concordant minus discordant pairs) plus tie counts,
// computed with a merge-sort inversion count. Exposed separately so the
// rank machinery can be checked against a brute-force counter.
struct KendallStats {
    long long s = 0;        // P - Q
    long long n = 0;
    double var_s = 0.0;     // tie-corrected null variance of S
    double tau_b = 0.0;
};
KendallStats kendall_s(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Begg-Mazumdar rank correlation test: Kendall correlation between the
// variance-stabilized deviates (y_i - ybar_w)/sqrt(v_i - var(ybar_w)) and
// v_i = s_i^2 + tau2, with the normal approximation for S. Pass tau2 = 0
// for the classical fixed-effect form.
TestResult begg_test(const Eigen::VectorXd& effects, const Eigen::VectorXd& stderrs,
                     double tau2);

// Bonferroni combination: p = min(1, J * min_j p_j); inputs retained in
// per_outcome.
TestResult bonferroni_combine(const std::vector<TestResult>& results);

}  // namespace msset
