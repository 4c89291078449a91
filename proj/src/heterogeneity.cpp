#include "msset/heterogeneity.hpp"

#include <cmath>

#include "msset/error.hpp"

namespace msset {

double dl_tau2_raw(const Eigen::VectorXd& effects, const Eigen::VectorXd& stderrs) {
    const auto m = effects.size();
    if (m < 2) throw ComputationError("insufficient studies for heterogeneity");
    if (stderrs.size() != m) throw ValidationError("dl_tau2: length mismatch");
    if (!(stderrs.array() > 0.0).all())
        throw ValidationError("dl_tau2: standard errors must be positive");

    const Eigen::ArrayXd w = stderrs.array().square().inverse();
    const double sw = w.sum();
    const double ybar = (w * effects.array()).sum() / sw;
    const double q = (w * (effects.array() - ybar).square()).sum();
    const double c = sw - w.square().sum() / sw;
    if (c <= 0.0) throw ComputationError("dl_tau2: degenerate weights");
    return (q - static_cast<double>(m - 1)) / c;
}

double dl_tau2(const Eigen::VectorXd& effects, const Eigen::VectorXd& stderrs) {
    return std::max(0.0, dl_tau2_raw(effects, stderrs));
}

OutcomeTransform transform_snd_precision(const MetaDataset& data, int outcome, double tau2) {
    if (outcome < 0 || outcome >= data.n_outcomes)
        throw ValidationError("transform: outcome index out of range");
    if (!(tau2 >= 0.0)) throw ValidationError("transform: tau2 must be >= 0");

    OutcomeTransform t;
    t.tau2 = tau2;
    t.reporting = data.reporting_studies(outcome);
    const int mj = static_cast<int>(t.reporting.size());
    if (mj == 0) throw ComputationError("outcome never reported");

    t.snd.resize(mj);
    t.precision.resize(mj);
    for (int i = 0; i < mj; ++i) {
        const auto& meas = data.studies[static_cast<std::size_t>(t.reporting[i])].at(outcome);
        const double p = 1.0 / std::sqrt(meas.se * meas.se + tau2);
        t.precision(i) = p;
        t.snd(i) = meas.effect * p;
    }
    return t;
}

namespace {

struct Cells {
    double a, b, c, d;
};

Cells corrected_cells(const CountTable& t, bool continuity) {
    if (t.a < 0 || t.b < 0 || t.c < 0 || t.d < 0)
        throw ValidationError("2x2 table with negative cell");
    if (t.a + t.c <= 0 || t.b + t.d <= 0)
        throw ValidationError("2x2 table with empty margin");
    if (t.has_zero_cell()) {
        if (!continuity)
            throw ComputationError("zero cell in 2x2 table and continuity correction disabled");
        return {t.a + 0.5, t.b + 0.5, t.c + 0.5, t.d + 0.5};
    }
    return {static_cast<double>(t.a), static_cast<double>(t.b), static_cast<double>(t.c),
            static_cast<double>(t.d)};
}

}  // namespace

OutcomeMeasurement logor_measurement(const CountTable& table, bool continuity) {
    const Cells x = corrected_cells(table, continuity);
    OutcomeMeasurement m;
    m.effect = std::log(x.a * x.d / (x.b * x.c));
    m.se = std::sqrt(1.0 / x.a + 1.0 / x.b + 1.0 / x.c + 1.0 / x.d);
    return m;
}

SmoothedLogOr smoothed_logor_variance(const std::vector<CountTable>& tables, bool continuity) {
    const int n = static_cast<int>(tables.size());
    if (n == 0) throw ValidationError("smoothed variance: no tables");

    std::vector<Cells> cells;
    cells.reserve(tables.size());
    for (const auto& t : tables) cells.push_back(corrected_cells(t, continuity));

    double p1 = 0.0, p0 = 0.0;
    for (const Cells& x : cells) {
        p1 += x.a / (x.a + x.c);
        p0 += x.b / (x.b + x.d);
    }
    p1 /= n;
    p0 /= n;
    if (p1 <= 0.0 || p1 >= 1.0 || p0 <= 0.0 || p0 >= 1.0)
        throw ComputationError("degenerate pooled proportion");

    SmoothedLogOr out;
    out.logor.resize(n);
    out.variance.resize(n);
    for (int i = 0; i < n; ++i) {
        const Cells& x = cells[static_cast<std::size_t>(i)];
        out.logor(i) = std::log(x.a * x.d / (x.b * x.c));
        const double cases = x.a + x.c;
        const double controls = x.b + x.d;
        out.variance(i) = 1.0 / (cases * p1) + 1.0 / (cases * (1.0 - p1)) +
                          1.0 / (controls * p0) + 1.0 / (controls * (1.0 - p0));
    }
    return out;
}

}  // namespace msset
