#include "msset/score_test.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>

#include "msset/distributions.hpp"
#include "msset/model.hpp"
#include "msset/rng.hpp"

namespace msset {

MetaDataset apply_variance_smoothing(const MetaDataset& data, const MssetOptions& options) {
    MetaDataset out = data;
    if (!options.smooth || options.binary_outcomes.empty()) return out;

    for (int j : options.binary_outcomes) {
        if (j < 0 || j >= data.n_outcomes)
            throw ValidationError("smoothing: binary outcome index out of range");
        const std::vector<int> reporting = data.reporting_studies(j);
        std::vector<CountTable> tables;
        tables.reserve(reporting.size());
        for (int i : reporting) {
            const auto& study = data.studies[static_cast<std::size_t>(i)];
            if (!study.has_counts(j))
                throw ComputationError("smoothing requested for outcome " +
                                       std::to_string(j + 1) + " but study " + study.id +
                                       " has no 2x2 counts");
            tables.push_back(*study.counts[static_cast<std::size_t>(j)]);
        }
        const SmoothedLogOr sm = smoothed_logor_variance(tables, options.continuity);
        for (std::size_t k = 0; k < reporting.size(); ++k) {
            auto& study = out.studies[static_cast<std::size_t>(reporting[k])];
            study.measurements[static_cast<std::size_t>(j)] =
                OutcomeMeasurement{sm.logor(static_cast<int>(k)),
                                   std::sqrt(sm.variance(static_cast<int>(k)))};
        }
    }
    return out;
}

double null_slope(const OutcomeTransform& transform) {
    if (transform.size() == 0) throw ValidationError("null_slope: empty transform");
    const double sp2 = transform.precision.squaredNorm();
    if (sp2 <= 0.0) throw ComputationError("null_slope: zero precision mass");
    return transform.snd.dot(transform.precision) / sp2;
}

double pseudo_loglik(const std::vector<OutcomeTransform>& transforms, const Eigen::VectorXd& a,
                     const Eigen::VectorXd& b) {
    const int j = static_cast<int>(transforms.size());
    if (a.size() != j || b.size() != j) throw ValidationError("pseudo_loglik: size mismatch");
    double ll = 0.0;
    for (int k = 0; k < j; ++k) {
        const auto& t = transforms[static_cast<std::size_t>(k)];
        ll += (t.snd.array() - a(k) - b(k) * t.precision.array()).square().sum();
    }
    return -0.5 * ll;
}

NullFit fit_null(const MetaDataset& data, const MssetOptions& options) {
    const int j = data.n_outcomes;
    NullFit fit;
    fit.b0.resize(j);
    fit.mu_fe.resize(j);
    fit.tau2.resize(j);
    fit.tau2_truncated.assign(static_cast<std::size_t>(j), 0);
    fit.transforms.reserve(static_cast<std::size_t>(j));
    (void)options;

    for (int k = 0; k < j; ++k) {
        const std::vector<int> reporting = data.reporting_studies(k);
        const int mj = static_cast<int>(reporting.size());
        if (mj == 0) throw ComputationError("outcome never reported");

        Eigen::VectorXd y(mj), s(mj);
        for (int i = 0; i < mj; ++i) {
            const auto& meas = data.studies[static_cast<std::size_t>(reporting[i])].at(k);
            y(i) = meas.effect;
            s(i) = meas.se;
        }
        const double raw = dl_tau2_raw(y, s);
        fit.tau2(k) = std::max(0.0, raw);
        fit.tau2_truncated[static_cast<std::size_t>(k)] = raw < 0.0 ? 1 : 0;

        OutcomeTransform t = transform_snd_precision(data, k, fit.tau2(k));
        fit.b0(k) = null_slope(t);

        const Eigen::ArrayXd w = s.array().square().inverse();
        fit.mu_fe(k) = (w * y.array()).sum() / w.sum();
        fit.transforms.push_back(std::move(t));
    }
    return fit;
}

Eigen::VectorXd pseudo_score(const NullFit& fit) {
    const int j = fit.outcome_count();
    Eigen::VectorXd u(j);
    for (int k = 0; k < j; ++k) {
        const auto& t = fit.transforms[static_cast<std::size_t>(k)];
        u(k) = t.snd.sum() - fit.b0(k) * t.precision.sum();
    }
    return u;
}

double schur_aa_inverse_entry(double m_eff, double sum_p, double sum_p2) {
    if (sum_p2 <= 0.0) throw ComputationError("information: zero precision mass");
    const double schur = m_eff - sum_p * sum_p / sum_p2;
    if (!(schur > 0.0)) throw ComputationError("singular information (constant precision)");
    return 1.0 / schur;
}

InformationBlocks information_aa_block(const NullFit& fit, MConvention convention, int m_total) {
    const int j = fit.outcome_count();
    if (convention == MConvention::total && m_total <= 0)
        throw ValidationError("information: total m convention requires m_total");

    InformationBlocks blocks;
    blocks.i_aa.resize(j);
    blocks.i_ab.resize(j);
    blocks.i_bb.resize(j);
    blocks.i_aa_inv.resize(j);
    for (int k = 0; k < j; ++k) {
        const auto& t = fit.transforms[static_cast<std::size_t>(k)];
        const double pmax = t.precision.maxCoeff();
        if (pmax - t.precision.minCoeff() <= 1e-12 * pmax)
            throw ComputationError("singular information (constant precision)");
        const double m_eff =
            convention == MConvention::per_outcome ? static_cast<double>(t.size())
                                                   : static_cast<double>(m_total);
        blocks.i_aa(k) = m_eff;
        blocks.i_ab(k) = t.precision.sum();
        blocks.i_bb(k) = t.precision.squaredNorm();
        blocks.i_aa_inv(k) = schur_aa_inverse_entry(m_eff, blocks.i_ab(k), blocks.i_bb(k));
    }
    return blocks;
}

// --- Stacked estimating-equation sandwich ----------------------------------

namespace {

// Per-outcome packed view over reporting studies; w = s^-2 stays fixed in
// the estimating functions.
struct OutcomeData {
    std::vector<int> reporting;
    Eigen::VectorXd y;
    Eigen::VectorXd s2;
    Eigen::VectorXd w;
    double c_dl = 0.0;  // sum w - sum w^2 / sum w

    int mj() const { return static_cast<int>(reporting.size()); }
};

std::vector<OutcomeData> pack_outcomes(const MetaDataset& data) {
    std::vector<OutcomeData> packed;
    packed.reserve(static_cast<std::size_t>(data.n_outcomes));
    for (int k = 0; k < data.n_outcomes; ++k) {
        OutcomeData od;
        od.reporting = data.reporting_studies(k);
        const int mj = od.mj();
        od.y.resize(mj);
        od.s2.resize(mj);
        od.w.resize(mj);
        for (int i = 0; i < mj; ++i) {
            const auto& meas = data.studies[static_cast<std::size_t>(od.reporting[i])].at(k);
            od.y(i) = meas.effect;
            od.s2(i) = meas.se * meas.se;
            od.w(i) = 1.0 / od.s2(i);
        }
        const double sw = od.w.sum();
        od.c_dl = sw - od.w.squaredNorm() / sw;
        packed.push_back(std::move(od));
    }
    return packed;
}

// Unrestricted per-outcome regression point (a_hat, b_hat), or the
// null-restricted (0, b0).
struct RegressionPoint {
    double a = 0.0;
    double b = 0.0;
};

RegressionPoint regression_point(const OutcomeTransform& t, bool restricted, double b0) {
    if (restricted) return {0.0, b0};
    const Eigen::ArrayXd x = t.precision.array();
    const Eigen::ArrayXd y = t.snd.array();
    const double xbar = x.mean();
    const double ybar = y.mean();
    const double sxx = (x - xbar).square().sum();
    if (sxx <= 0.0) throw ComputationError("degenerate design (constant precision)");
    RegressionPoint p;
    p.b = ((x - xbar) * (y - ybar)).sum() / sxx;
    p.a = ybar - p.b * xbar;
    return p;
}

}  // namespace

Eigen::MatrixXd sigma_aa_sandwich(const MetaDataset& data, const NullFit& fit,
                                  const MssetOptions& options) {
    const MetaDataset working = apply_variance_smoothing(data, options);
    const int j = working.n_outcomes;
    const int m = working.study_count();
    if (fit.outcome_count() != j) throw ValidationError("sigma_aa_sandwich: fit mismatch");

    const std::vector<OutcomeData> outcomes = pack_outcomes(working);

    // Diagonal: per-outcome intercept variance sigma2_j * [(X'X)^-1]_00 of
    // the SND-on-P regression, i.e. exactly the squared standard error the
    // per-outcome Egger test uses. The empirical residual variance already
    // carries the extra dispersion induced by the estimated tau2 entering
    // every SND, and because it rescales with the dataset's own
    // mis-standardization the ratio statistic stays calibrated across
    // heterogeneity levels; with one outcome the statistic reduces to the
    // squared Egger t.
    Eigen::MatrixXd var_a = Eigen::MatrixXd::Zero(j, j);
    for (int k = 0; k < j; ++k) {
        const auto& t = fit.transforms[static_cast<std::size_t>(k)];
        const RegressionPoint pt = regression_point(t, false, fit.b0(k));
        const Eigen::ArrayXd x = t.precision.array();
        const double rss = (t.snd.array() - pt.a - pt.b * x).square().sum();
        const double sigma2 = rss / std::max(1, t.size() - 2);
        const double xbar = x.mean();
        const double sxx = (x - xbar).square().sum();
        var_a(k, k) = sigma2 * (1.0 / t.size() + xbar * xbar / sxx);
    }

    // Off-diagonals: empirical cross-products of the per-study intercept
    // influences; studies missing an outcome contribute zero. This is where
    // the unknown between- and within-study correlations enter.
    Eigen::MatrixXd influence = Eigen::MatrixXd::Zero(j, m);
    const bool restricted = options.sigma_eval == SigmaEval::null_restricted;
    for (int k = 0; k < j; ++k) {
        const auto& t = fit.transforms[static_cast<std::size_t>(k)];
        const RegressionPoint pt = regression_point(t, restricted, fit.b0(k));
        const Eigen::ArrayXd x = t.precision.array();
        const double xbar = x.mean();
        const double sxx = (x - xbar).square().sum();
        if (sxx <= 0.0) throw ComputationError("degenerate design (constant precision)");
        const double mj = static_cast<double>(t.size());
        for (int i = 0; i < t.size(); ++i) {
            const double resid = t.snd(i) - pt.a - pt.b * t.precision(i);
            const double weight = 1.0 / mj - (t.precision(i) - xbar) * xbar / sxx;
            influence(k, t.reporting[static_cast<std::size_t>(i)]) = weight * resid;
        }
    }
    const Eigen::VectorXd mean = influence.rowwise().mean();
    influence.colwise() -= mean;
    const Eigen::MatrixXd cross = influence * influence.transpose();
    for (int r = 0; r < j; ++r)
        for (int c = 0; c < j; ++c)
            if (r != c) var_a(r, c) = cross(r, c);

    // PSD projection (off-diagonals are estimated separately from the
    // diagonal, so tiny violations are possible).
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(var_a);
    if (eig.eigenvalues().minCoeff() < 0.0) {
        const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
        var_a = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
    }

    return static_cast<double>(m) * var_a;
}

Eigen::VectorXd resample_intercepts(const MetaDataset& data, std::span<const int> indices,
                                    const MssetOptions& options) {
    MetaDataset resampled;
    resampled.n_outcomes = data.n_outcomes;
    resampled.outcome_labels = data.outcome_labels;
    resampled.studies.reserve(indices.size());
    for (int idx : indices) {
        if (idx < 0 || idx >= data.study_count())
            throw ValidationError("resample: index out of range");
        resampled.studies.push_back(data.studies[static_cast<std::size_t>(idx)]);
    }

    const MetaDataset working = apply_variance_smoothing(resampled, options);
    const int j = working.n_outcomes;
    Eigen::VectorXd intercepts(j);
    for (int k = 0; k < j; ++k) {
        const std::vector<int> reporting = working.reporting_studies(k);
        const int mj = static_cast<int>(reporting.size());
        if (mj < 3) throw ComputationError("degenerate resample: outcome reported by fewer than 3 studies");

        Eigen::VectorXd y(mj), s(mj);
        for (int i = 0; i < mj; ++i) {
            const auto& meas = working.studies[static_cast<std::size_t>(reporting[i])].at(k);
            y(i) = meas.effect;
            s(i) = meas.se;
        }
        const double tau2 = dl_tau2(y, s);
        const OutcomeTransform t = transform_snd_precision(working, k, tau2);

        const Eigen::ArrayXd x = t.precision.array();
        const Eigen::ArrayXd snd = t.snd.array();
        const double xbar = x.mean();
        const double sxx = (x - xbar).square().sum();
        if (sxx <= 1e-12 * x.square().sum())
            throw ComputationError("degenerate resample: constant precision");
        const double slope = ((x - xbar) * (snd - snd.mean())).sum() / sxx;
        intercepts(k) = snd.mean() - slope * xbar;
    }
    return intercepts;
}

Eigen::MatrixXd sigma_aa_bootstrap_oracle(const MetaDataset& data, int reps, std::uint64_t seed,
                                          const MssetOptions& options,
                                          BootstrapDiagnostics* diag) {
    if (reps < 200) throw ValidationError("bootstrap oracle: need at least 200 replicates");
    const int m = data.study_count();
    const int j = data.n_outcomes;
    if (m < 1) throw ValidationError("bootstrap oracle: empty dataset");

    Eigen::MatrixXd draws(reps, j);
    int redraws = 0;
    std::vector<int> indices(static_cast<std::size_t>(m));
    for (int r = 0; r < reps; ++r) {
        Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        std::uniform_int_distribution<int> pick(0, m - 1);
        bool done = false;
        for (int attempt = 0; attempt < 1000 && !done; ++attempt) {
            for (auto& idx : indices) idx = pick(rng);
            try {
                draws.row(r) = resample_intercepts(data, indices, options).transpose();
                done = true;
            } catch (const ComputationError&) {
                ++redraws;
            }
        }
        if (!done) throw ComputationError("bootstrap oracle: resample retry cap exceeded");
    }
    if (diag) diag->redraws = redraws;

    const Eigen::RowVectorXd mean = draws.colwise().mean();
    const Eigen::MatrixXd centered = draws.rowwise() - mean;
    return static_cast<double>(m) * (centered.transpose() * centered) /
           static_cast<double>(reps - 1);
}

StatisticValue msset_statistic(const Eigen::VectorXd& score, const InformationBlocks& info,
                               const Eigen::MatrixXd& sigma_aa, int m) {
    const int j = static_cast<int>(score.size());
    if (info.i_aa_inv.size() != j || sigma_aa.rows() != j || sigma_aa.cols() != j)
        throw ValidationError("msset_statistic: dimension mismatch");
    if (m < 1) throw ValidationError("msset_statistic: m must be >= 1");

    // trace identity: mean eigenvalue of (I0^aa)^-1 Sigma_aa with I0^aa
    // diagonal; no eigendecomposition needed.
    double trace = 0.0;
    for (int k = 0; k < j; ++k) trace += sigma_aa(k, k) / info.i_aa_inv(k);
    const double lambda_bar = trace / j;
    if (!std::isfinite(lambda_bar) || lambda_bar <= 0.0)
        throw ComputationError("invalid variance correction");

    double quad = 0.0;
    for (int k = 0; k < j; ++k) quad += score(k) * score(k) * info.i_aa_inv(k);

    StatisticValue v;
    v.lambda_bar = lambda_bar;
    v.statistic = quad / (static_cast<double>(m) * lambda_bar);
    return v;
}

MssetResult run_msset(const MetaDataset& data, const MssetOptions& options) {
    const ValidationReport report = validate_dataset(data);
    if (!report.ok()) throw ValidationError("dataset validation failed:\n" + report.to_string());

    const MetaDataset working = apply_variance_smoothing(data, options);
    const int j = working.n_outcomes;
    const int m = working.study_count();

    MssetResult result;
    result.df = j;
    result.m_total = m;
    result.fit = fit_null(working, options);
    result.score = pseudo_score(result.fit);
    result.info = information_aa_block(result.fit, options.m_convention, m);
    result.m_per_outcome.reserve(static_cast<std::size_t>(j));
    for (int k = 0; k < j; ++k)
        result.m_per_outcome.push_back(result.fit.transforms[static_cast<std::size_t>(k)].size());

    // Exact null fit on every outcome: zero residuals make the variance
    // correction 0/0; the statistic is 0 by construction.
    bool all_exact = true;
    for (int k = 0; k < j && all_exact; ++k) {
        const auto& t = result.fit.transforms[static_cast<std::size_t>(k)];
        const double rss =
            (t.snd.array() - result.fit.b0(k) * t.precision.array()).square().sum();
        all_exact = rss <= 1e-12 * std::max(t.snd.squaredNorm(), 1e-300);
    }

    Eigen::MatrixXd sigma_asym;
    if (options.sigma_method == SigmaMethod::bootstrap)
        sigma_asym = sigma_aa_bootstrap_oracle(data, options.bootstrap_reps, options.seed, options);
    else
        sigma_asym = sigma_aa_sandwich(data, result.fit, options);

    // sigma_asym estimates var(sqrt(m) a_hat); the statistic and the
    // reported intermediates live on the var(a_hat)/m scale that matches
    // the chi-square reference (see msset_statistic).
    result.sigma_aa = sigma_asym / (static_cast<double>(m) * static_cast<double>(m));

    if (all_exact) {
        result.degenerate_null_fit = true;
        result.lambda_bar = 0.0;
        result.statistic = 0.0;
        result.p_value = 1.0;
        return result;
    }

    const StatisticValue v = msset_statistic(result.score, result.info, result.sigma_aa, m);
    result.lambda_bar = v.lambda_bar;
    result.statistic = v.statistic;
    result.p_value = chi_square_tail(v.statistic, j);
    return result;
}

}  // namespace msset
