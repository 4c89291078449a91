#include "msset/selection.hpp"

#include <algorithm>
#include <cmath>

#include "msset/distributions.hpp"
#include "msset/heterogeneity.hpp"
#include "msset/rng.hpp"

namespace msset {

int pvalue_bin(double p) {
    if (p < 0.01) return 0;
    if (p < 0.05) return 1;
    if (p < 0.10) return 2;
    return 3;
}

double LogitSelection::report_probability(double snd) const {
    const double logit = snd < snd_threshold
                             ? intercept + slope * snd + quad * snd * snd
                             : plateau_logit;
    return 1.0 / (1.0 + std::exp(-logit));
}

Eigen::Matrix4d c_grid_from_diagonal(const Eigen::Vector4d& diag) {
    Eigen::Matrix4d g;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) g(i, j) = diag(std::max(i, j));
    return g;
}

ScenarioSpec ScenarioSpec::none() { return ScenarioSpec{}; }

ScenarioSpec ScenarioSpec::c1() {
    ScenarioSpec s;
    s.kind = Kind::c1;
    // published iff both p-values fall below 0.05 (bins 0 and 1)
    s.grid.setZero();
    s.grid.topLeftCorner<2, 2>().setOnes();
    return s;
}

ScenarioSpec ScenarioSpec::c2() {
    ScenarioSpec s;
    s.kind = Kind::c2;
    s.grid = c_grid_from_diagonal(Eigen::Vector4d(0.9, 0.7, 0.5, 0.2));
    return s;
}

ScenarioSpec ScenarioSpec::c3() {
    ScenarioSpec s;
    s.kind = Kind::c3;
    s.grid = c_grid_from_diagonal(Eigen::Vector4d(0.8, 0.6, 0.4, 0.3));
    return s;
}

ScenarioSpec ScenarioSpec::p(const Eigen::VectorXd& snd_tau2) {
    ScenarioSpec s;
    s.kind = Kind::p;
    s.snd_tau2 = snd_tau2;
    return s;
}

ScenarioSpec ScenarioSpec::custom(const Eigen::Matrix4d& grid) {
    if (grid.minCoeff() < 0.0 || grid.maxCoeff() > 1.0)
        throw ValidationError("scenario grid probabilities must lie in [0, 1]");
    ScenarioSpec s;
    s.kind = Kind::custom;
    s.grid = grid;
    return s;
}

ScenarioSpec ScenarioSpec::from_name(const std::string& name) {
    if (name == "none") return none();
    if (name == "C1" || name == "c1") return c1();
    if (name == "C2" || name == "c2") return c2();
    if (name == "C3" || name == "c3") return c3();
    if (name == "P" || name == "p") return p(Eigen::VectorXd());
    throw ValidationError("unknown scenario: " + name);
}

double study_publication_probability(const ScenarioSpec& spec, double p1, double p2) {
    if (!spec.whole_study())
        throw ValidationError("study publication probability only applies to C-scenarios");
    return spec.grid(pvalue_bin(p1), pvalue_bin(p2));
}

Eigen::VectorXd outcome_report_probabilities(const ScenarioSpec& spec,
                                             const Eigen::VectorXd& snd) {
    if (spec.kind != ScenarioSpec::Kind::p)
        throw ValidationError("per-outcome report probabilities only apply to scenario P");
    Eigen::VectorXd probs(snd.size());
    for (int k = 0; k < snd.size(); ++k) probs(k) = spec.logit.report_probability(snd(k));
    return probs;
}

namespace {

double wald_p(const OutcomeMeasurement& meas) {
    return normal_two_sided_p(meas.effect / meas.se);
}

double scenario_snd(const ScenarioSpec& spec, const OutcomeMeasurement& meas, int outcome) {
    const double tau2 =
        spec.snd_tau2.size() > outcome ? std::max(0.0, spec.snd_tau2(outcome)) : 0.0;
    return meas.effect / std::sqrt(meas.se * meas.se + tau2);
}

}  // namespace

MetaDataset apply_selection(const MetaDataset& data, const ScenarioSpec& spec,
                            std::uint64_t seed) {
    if (spec.kind == ScenarioSpec::Kind::none) return data;

    MetaDataset out;
    out.n_outcomes = data.n_outcomes;
    out.outcome_labels = data.outcome_labels;

    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    if (spec.whole_study()) {
        if (data.n_outcomes != 2)
            throw ValidationError("C-scenarios are defined for bivariate datasets");
        for (const auto& study : data.studies) {
            if (!study.reports(0) || !study.reports(1))
                throw ValidationError("C-scenarios require complete studies");
            const double prob =
                study_publication_probability(spec, wald_p(study.at(0)), wald_p(study.at(1)));
            if (unif(rng) < prob) out.studies.push_back(study);
        }
        return out;
    }

    // scenario P: outcome-level reporting
    for (const auto& study : data.studies) {
        StudyRecord kept = study;
        bool any = false;
        for (int k = 0; k < data.n_outcomes; ++k) {
            const double u = unif(rng);  // one draw per outcome, reported or not
            if (!study.reports(k)) continue;
            const double prob =
                spec.logit.report_probability(scenario_snd(spec, study.at(k), k));
            if (u < prob) {
                any = true;
            } else {
                kept.measurements[static_cast<std::size_t>(k)].reset();
                if (kept.has_counts(k)) kept.counts[static_cast<std::size_t>(k)].reset();
            }
        }
        if (any) out.studies.push_back(std::move(kept));
    }
    return out;
}

MetaDataset simulate_selected_dataset(const ModelParams& params, int n, const ScenarioSpec& spec,
                                      std::uint64_t seed) {
    if (n < 3) throw ValidationError("simulate_selected_dataset: n must be >= 3");
    if (spec.kind == ScenarioSpec::Kind::none) return generate_dataset(params, n, seed);

    constexpr int kMaxBatches = 200;
    MetaDataset survivors;
    survivors.n_outcomes = params.outcome_count();
    for (int batch = 0; batch < kMaxBatches; ++batch) {
        const MetaDataset generated =
            generate_dataset(params, 3 * n, derive_seed(seed, 1, static_cast<std::uint64_t>(batch)),
                             "b" + std::to_string(batch + 1) + "_");
        MetaDataset selected =
            apply_selection(generated, spec, derive_seed(seed, 2, static_cast<std::uint64_t>(batch)));
        if (survivors.outcome_labels.empty()) survivors.outcome_labels = selected.outcome_labels;
        for (auto& study : selected.studies) survivors.studies.push_back(std::move(study));
        if (survivors.study_count() >= n) break;
    }
    if (survivors.study_count() < n)
        throw ComputationError("selection produced too few studies (retry cap exceeded)");

    // sample n without replacement (partial Fisher-Yates)
    Rng rng = make_rng(derive_seed(seed, 3));
    MetaDataset out;
    out.n_outcomes = survivors.n_outcomes;
    out.outcome_labels = survivors.outcome_labels;
    out.studies.reserve(static_cast<std::size_t>(n));
    const int total = survivors.study_count();
    std::vector<int> pool(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) pool[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < n; ++i) {
        std::uniform_int_distribution<int> pick(i, total - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
        out.studies.push_back(std::move(survivors.studies[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])]));
    }
    return out;
}

MetaDataset generate_mixed_binary_dataset(const ModelParams& params, int m,
                                          const BinaryOutcomeConfig& config,
                                          std::uint64_t seed) {
    params.validate();
    if (m < 1) throw ValidationError("generate_mixed_binary_dataset: m must be >= 1");
    const int j = params.outcome_count();
    if (config.binary_outcome < 0 || config.binary_outcome >= j)
        throw ValidationError("binary outcome index out of range");
    if (config.exposed_size < 1 || config.unexposed_size < 1)
        throw ValidationError("group sizes must be >= 1");
    if (config.baseline_rate <= 0.0 || config.baseline_rate >= 1.0)
        throw ValidationError("baseline rate must lie in (0, 1)");

    MetaDataset data;
    data.n_outcomes = j;
    for (int k = 0; k < j; ++k) data.outcome_labels.push_back("y" + std::to_string(k + 1));

    // between-study draw of true effects theta ~ N(beta, Omega)
    const Eigen::VectorXd tau = params.tau2.array().sqrt();
    Eigen::MatrixXd omega(j, j);
    for (int r = 0; r < j; ++r)
        for (int c = 0; c < j; ++c)
            omega(r, c) = tau(r) * tau(c) * params.rho_between(r, c);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(omega);
    const Eigen::MatrixXd omega_sqrt =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

    Rng rng = make_rng(seed);
    std::normal_distribution<double> draw_z(0.0, 1.0);
    std::normal_distribution<double> draw_s(params.s_dist.mean, params.s_dist.sd);
    const double base_logit = std::log(config.baseline_rate / (1.0 - config.baseline_rate));

    Eigen::VectorXd z(j);
    for (int i = 0; i < m; ++i) {
        StudyRecord study;
        study.id = "s" + std::to_string(i + 1);
        study.measurements.resize(static_cast<std::size_t>(j));
        study.counts.resize(static_cast<std::size_t>(j));

        for (int k = 0; k < j; ++k) z(k) = draw_z(rng);
        const Eigen::VectorXd theta = params.beta + omega_sqrt * z;

        for (int k = 0; k < j; ++k) {
            if (k == config.binary_outcome) {
                const double p_exposed = 1.0 / (1.0 + std::exp(-(base_logit + theta(k))));
                std::binomial_distribution<long long> cases_exp(config.exposed_size, p_exposed);
                std::binomial_distribution<long long> cases_unexp(config.unexposed_size,
                                                                  config.baseline_rate);
                CountTable t;
                // empty margins would leave the logOR undefined; redraw
                do {
                    t.a = cases_exp(rng);
                    t.c = cases_unexp(rng);
                } while (t.a + t.c == 0 ||
                         (config.exposed_size - t.a) + (config.unexposed_size - t.c) == 0);
                t.b = config.exposed_size - t.a;
                t.d = config.unexposed_size - t.c;
                study.counts[static_cast<std::size_t>(k)] = t;
                study.measurements[static_cast<std::size_t>(k)] = logor_measurement(t, true);
            } else {
                double x = params.s_dist.kind == StderrDistribution::Kind::fixed
                               ? params.s_dist.fixed_se
                               : std::max(std::abs(draw_s(rng)), 1e-12);
                const double y = theta(k) + x * draw_z(rng);
                study.measurements[static_cast<std::size_t>(k)] = OutcomeMeasurement{y, x};
            }
        }
        data.studies.push_back(std::move(study));
    }
    return data;
}

}  // namespace msset
