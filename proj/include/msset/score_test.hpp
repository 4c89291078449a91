#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "msset/data.hpp"
#include "msset/heterogeneity.hpp"

namespace msset {

enum class MConvention { per_outcome, total };
enum class SigmaMethod { sandwich, bootstrap };
enum class SigmaEval { null_restricted, unrestricted };
// Estimator behind the per-outcome diagonal of sigma_aa: the Egger-style
// residual variance times the model information, or the empirical variance
// of the per-study intercept influences.
enum class SigmaDiagonal { model_sigma2, influence };

struct MssetOptions {
    // Outcomes whose measurements should be recomputed from 2x2 tables with
    // the smoothed variance before any analysis step.
    std::vector<int> binary_outcomes;
    bool smooth = false;
    bool continuity = true;  // Haldane correction for zero cells
    // Diagonal of I_aa: the per-outcome reporting count m_j, or the total
    // study count for every outcome.
    MConvention m_convention = MConvention::per_outcome;
    SigmaMethod sigma_method = SigmaMethod::sandwich;
    // Residuals feeding the empirical cross-outcome covariance terms.
    // Restricted-fit residuals keep the alternative's mean structure and
    // leak it into the variance estimate; the unrestricted default avoids
    // that.
    SigmaEval sigma_eval = SigmaEval::unrestricted;
    int bootstrap_reps = 1000;
    // Replicates of the fitted-null simulation behind each outcome's
    // intercept variance.
    int variance_sim_reps = 400;
    std::uint64_t seed = 1;
};

// Null-restricted fit: per outcome, the through-origin slope b0 of SND on P,
// the fixed-effect weighted mean mu_fe (weights s^-2), the DL tau2, and the
// transform itself.
struct NullFit {
    Eigen::VectorXd b0;
    Eigen::VectorXd mu_fe;
    Eigen::VectorXd tau2;
    std::vector<OutcomeTransform> transforms;
    std::vector<char> tau2_truncated;  // DL hit the max(0, .) boundary

    int outcome_count() const { return static_cast<int>(b0.size()); }
};

// Blocks of the negative pseudolikelihood Hessian at the null fit. All four
// blocks are diagonal: I_aa = diag(m_eff), I_ab = diag(sum P), I_bb =
// diag(sum P^2); i_aa_inv holds the diagonal of the inverse-information
// submatrix for the intercepts, (I_aa - I_ab I_bb^-1 I_ab)^-1.
struct InformationBlocks {
    Eigen::VectorXd i_aa;
    Eigen::VectorXd i_ab;
    Eigen::VectorXd i_bb;
    Eigen::VectorXd i_aa_inv;

    Eigen::MatrixXd aa_inverse_matrix() const {
        return Eigen::MatrixXd(i_aa_inv.asDiagonal());
    }
};

struct MssetResult {
    Eigen::VectorXd score;      // U_a at (a=0, b0, tau2_hat)
    InformationBlocks info;
    Eigen::MatrixXd sigma_aa;   // intercept covariance on the test's scale (var(a_hat)/m)
    double lambda_bar = 0.0;
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
    NullFit fit;
    std::vector<int> m_per_outcome;
    int m_total = 0;
    bool degenerate_null_fit = false;  // every outcome fit its null exactly; statistic pinned to 0
};

// --- Pipeline pieces -------------------------------------------------------

// Returns a copy of the dataset with each smoothed binary outcome's
// measurements replaced by (logOR, sqrt(smoothed variance)) recomputed from
// the count tables. No-op when options.smooth is false.
MetaDataset apply_variance_smoothing(const MetaDataset& data, const MssetOptions& options);

// Through-origin least-squares slope of SND on P.
double null_slope(const OutcomeTransform& transform);

// log pseudolikelihood of Eq-style residuals: -1/2 sum_j sum_i
// (SND_ij - a_j - b_j P_ij)^2 over reporting studies.
double pseudo_loglik(const std::vector<OutcomeTransform>& transforms,
                     const Eigen::VectorXd& a, const Eigen::VectorXd& b);

NullFit fit_null(const MetaDataset& data, const MssetOptions& options = {});

// Pseudo-score for the intercepts at the null fit:
// U_j = sum_i SND_ij - b0_j sum_i P_ij.
Eigen::VectorXd pseudo_score(const NullFit& fit);

// Information blocks, with the intercept submatrix of the inverse computed
// through the diagonal Schur complement m_eff - (sum P)^2 / sum P^2. Throws
// ComputationError when a precision vector is (numerically) constant.
InformationBlocks information_aa_block(const NullFit& fit,
                                       MConvention convention = MConvention::per_outcome,
                                       int m_total = 0);

// Single-outcome Schur entry, exposed for direct checks.
double schur_aa_inverse_entry(double m_eff, double sum_p, double sum_p2);

// Covariance of the intercept estimates for the score normalization,
// returned as the asymptotic covariance of sqrt(m) (a_hat - a0).
//
// Diagonal entries come from simulating the fitted null per outcome: the
// observed within-study variances are held fixed, the DL tau2 is treated
// as the truth, unit-normal effects are drawn, and the entire per-outcome
// pipeline (DL refit, SND/P transform, intercept fit) is rerun each
// replicate. The tau2 refit inside the loop is what carries the estimation
// uncertainty of the heterogeneity into the variance; a plain
// Schur-complement variance misses it and inflates the test, while
// residual-based plug-ins adapt to selection-distorted data and drain
// power. Off-diagonal entries are empirical cross-products of the
// per-study intercept influences (studies missing an outcome contribute
// zeros); they carry the unknown between- and within-study correlations.
// Deterministic given options.seed.
Eigen::MatrixXd sigma_aa_sandwich(const MetaDataset& data, const NullFit& fit,
                                  const MssetOptions& options = {});

// Unrestricted per-outcome intercepts for one resample of study indices
// (with repetition), refitting tau2 and the smoothing from scratch. Throws
// ComputationError when the resample is degenerate (an outcome reported by
// fewer than 3 studies, constant precision, ...). Exposed as the unit the
// bootstrap draws.
Eigen::VectorXd resample_intercepts(const MetaDataset& data, std::span<const int> indices,
                                    const MssetOptions& options = {});

struct BootstrapDiagnostics {
    int redraws = 0;
};

// Nonparametric bootstrap check of sigma_aa_sandwich: resample studies with
// replacement, refit everything, return m * cov(a_hat) across replicates.
// Degenerate resamples are redrawn up to a retry cap.
Eigen::MatrixXd sigma_aa_bootstrap_oracle(const MetaDataset& data, int reps, std::uint64_t seed,
                                          const MssetOptions& options = {},
                                          BootstrapDiagnostics* diag = nullptr);

struct StatisticValue {
    double statistic = 0.0;
    double lambda_bar = 0.0;
};

// Statistic assembly: lambda_bar is the arithmetic mean of the eigenvalues
// of (I0^aa)^-1 Sigma_aa, computed by the exact trace identity, and
//   statistic = (m lambda_bar)^-1 U^T I0^aa U,
// referred to chi-square with J df. sigma_aa here is on the same scale as
// the reported MssetResult::sigma_aa. Throws ComputationError when
// lambda_bar is non-finite or <= 0.
StatisticValue msset_statistic(const Eigen::VectorXd& score, const InformationBlocks& info,
                               const Eigen::MatrixXd& sigma_aa, int m);

// Full pipeline: validate -> smoothing substitution -> DL tau2 + transforms
// -> null fit -> score -> information -> sigma_aa -> statistic -> p-value.
// Deterministic; bootstrap-based sigma_aa uses options.seed.
MssetResult run_msset(const MetaDataset& data, const MssetOptions& options = {});

}  // namespace msset
