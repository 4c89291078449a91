#pragma once

#include <Eigen/Dense>
#include <vector>

#include "msset/data.hpp"

namespace msset {

// Standardized effects and precisions of one outcome over its reporting
// studies, on the random-effects scale:
//   precision[i] = (s_i^2 + tau2)^(-1/2),  snd[i] = effect_i * precision[i].
struct OutcomeTransform {
    Eigen::VectorXd snd;
    Eigen::VectorXd precision;
    double tau2 = 0.0;
    std::vector<int> reporting;  // dataset study indices, in dataset order

    int size() const { return static_cast<int>(snd.size()); }
};

// DerSimonian-Laird moment estimator of the between-study variance:
// max(0, (Q - (m-1)) / c) with weights w = s^-2. Throws on fewer than
// two studies.
double dl_tau2(const Eigen::VectorXd& effects, const Eigen::VectorXd& stderrs);

// Raw (untruncated) DL solution (Q - (m-1)) / c; negative values signal the
// truncation boundary.
double dl_tau2_raw(const Eigen::VectorXd& effects, const Eigen::VectorXd& stderrs);

OutcomeTransform transform_snd_precision(const MetaDataset& data, int outcome, double tau2);

struct SmoothedLogOr {
    Eigen::VectorXd logor;
    Eigen::VectorXd variance;
};

// Smoothed logOR variance for a set of 2x2 tables: each study's group
// proportions are replaced by the pooled means p1 = mean(a/(a+c)) and
// p0 = mean(b/(b+d)), which decouples the variance from the study's own
// estimated logOR:
//   var_i = 1/((a+c) p1) + 1/((a+c)(1-p1)) + 1/((b+d) p0) + 1/((b+d)(1-p0)).
// continuity=true adds 0.5 to all four cells of tables with a zero cell
// (Haldane-Anscombe); with continuity=false such tables are an error.
SmoothedLogOr smoothed_logor_variance(const std::vector<CountTable>& tables,
                                      bool continuity = true);

// Naive logOR and its variance 1/a + 1/b + 1/c + 1/d for one table, with
// the same continuity handling.
OutcomeMeasurement logor_measurement(const CountTable& table, bool continuity = true);

}  // namespace msset
