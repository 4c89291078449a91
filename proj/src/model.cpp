#include "msset/model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <set>

#include "msset/rng.hpp"

namespace msset {

Eigen::MatrixXd marginal_covariance(const ModelParams& params, const Eigen::VectorXd& s_row) {
    const int j = params.outcome_count();
    if (s_row.size() != j) throw ValidationError("marginal_covariance: s_row length mismatch");
    if (!(s_row.array() > 0.0).all() || !s_row.allFinite())
        throw ValidationError("marginal_covariance: s_row entries must be positive and finite");

    const Eigen::VectorXd tau = params.tau2.array().sqrt();
    Eigen::MatrixXd v(j, j);
    for (int r = 0; r < j; ++r)
        for (int c = 0; c < j; ++c)
            v(r, c) = s_row(r) * s_row(c) * params.rho_within(r, c) +
                      tau(r) * tau(c) * params.rho_between(r, c);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(v, Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
        throw ComputationError("marginal_covariance: result not positive semidefinite");
    return v;
}

namespace {

// y = mean + Q sqrt(max(lambda, 0)) z for V = Q diag(lambda) Q^T; handles
// semidefinite V (tau2 = 0 with |rho_w| = 1, etc.).
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& v) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(v);
    Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
    return eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal();
}

}  // namespace

MetaDataset generate_dataset(const ModelParams& params, int m, std::uint64_t seed,
                             const std::string& id_prefix) {
    params.validate();
    if (m < 1) throw ValidationError("generate_dataset: m must be >= 1");

    const int j = params.outcome_count();
    MetaDataset data;
    data.n_outcomes = j;
    data.outcome_labels.reserve(static_cast<std::size_t>(j));
    for (int k = 0; k < j; ++k) data.outcome_labels.push_back("y" + std::to_string(k + 1));
    data.studies.reserve(static_cast<std::size_t>(m));

    Rng rng = make_rng(seed);
    std::normal_distribution<double> draw_s(params.s_dist.mean, params.s_dist.sd);
    std::normal_distribution<double> draw_z(0.0, 1.0);

    Eigen::VectorXd s_row(j), z(j);
    for (int i = 0; i < m; ++i) {
        for (int k = 0; k < j; ++k) {
            if (params.s_dist.kind == StderrDistribution::Kind::fixed) {
                s_row(k) = params.s_dist.fixed_se;
            } else {
                double x = draw_s(rng);
                // s^2 = x^2; exact zeros would break precisions downstream
                s_row(k) = std::max(std::abs(x), 1e-12);
            }
        }
        for (int k = 0; k < j; ++k) z(k) = draw_z(rng);

        const Eigen::MatrixXd v = marginal_covariance(params, s_row);
        const Eigen::VectorXd y = params.beta + psd_sqrt(v) * z;

        StudyRecord study;
        study.id = id_prefix + std::to_string(i + 1);
        study.measurements.resize(static_cast<std::size_t>(j));
        for (int k = 0; k < j; ++k)
            study.measurements[static_cast<std::size_t>(k)] =
                OutcomeMeasurement{y(k), s_row(k)};
        data.studies.push_back(std::move(study));
    }
    return data;
}

ValidationReport validate_dataset(const MetaDataset& data) {
    ValidationReport report;
    auto add = [&](const std::string& id, int outcome, const std::string& msg) {
        report.issues.push_back(ValidationIssue{id, outcome, msg});
    };

    if (data.n_outcomes < 1) {
        add("", -1, "dataset declares no outcomes");
        return report;
    }
    if (static_cast<int>(data.outcome_labels.size()) != data.n_outcomes)
        add("", -1, "outcome label count does not match J");

    std::set<std::string> seen;
    for (const auto& study : data.studies) {
        if (!seen.insert(study.id).second) add(study.id, -1, "duplicate study id");
        if (static_cast<int>(study.measurements.size()) != data.n_outcomes) {
            add(study.id, -1, "measurement array length does not match J");
            continue;
        }
        if (!study.counts.empty() &&
            static_cast<int>(study.counts.size()) != data.n_outcomes)
            add(study.id, -1, "count array length does not match J");

        bool any = false;
        for (int k = 0; k < data.n_outcomes; ++k) {
            if (!study.reports(k)) continue;
            any = true;
            const auto& meas = study.at(k);
            if (!std::isfinite(meas.effect)) add(study.id, k, "effect is not finite");
            if (!std::isfinite(meas.se) || meas.se <= 0.0)
                add(study.id, k, "standard error must be positive and finite");
            if (study.has_counts(k)) {
                const auto& t = *study.counts[static_cast<std::size_t>(k)];
                if (t.a < 0 || t.b < 0 || t.c < 0 || t.d < 0)
                    add(study.id, k, "negative cell count");
                if (t.a + t.c <= 0 || t.b + t.d <= 0)
                    add(study.id, k, "empty margin in 2x2 table");
            }
        }
        if (!any) add(study.id, -1, "study reports no outcomes");
    }

    for (int k = 0; k < data.n_outcomes; ++k) {
        const int mj = data.reporting_count(k);
        if (mj < 3) add("", k, "m_j below minimum (reported by " + std::to_string(mj) +
                                   " studies, need 3)");
    }
    return report;
}

}  // namespace msset
