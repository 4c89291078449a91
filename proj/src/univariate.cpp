#include "msset/univariate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "msset/distributions.hpp"
#include "msset/error.hpp"

namespace msset {

namespace {

// Inversions (strict) in v, counted by merge sort. Equal elements are
// merged left-first and contribute nothing.
long long count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo,
                           std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    long long inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            inv += static_cast<long long>(mid - i);
            buf[k++] = v[j++];
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<long>(lo), buf.begin() + static_cast<long>(hi),
              v.begin() + static_cast<long>(lo));
    return inv;
}

struct TieSums {
    long long pairs = 0;      // sum t(t-1)/2
    double v_term = 0.0;      // sum t(t-1)(2t+5)
    double v1_term = 0.0;     // sum t(t-1)
    double v2_term = 0.0;     // sum t(t-1)(t-2)
};

template <typename Iter, typename Equal>
TieSums tie_sums(Iter first, Iter last, Equal eq) {
    TieSums s;
    auto it = first;
    while (it != last) {
        auto run = it;
        long long t = 0;
        while (run != last && eq(*it, *run)) {
            ++run;
            ++t;
        }
        const double td = static_cast<double>(t);
        s.pairs += t * (t - 1) / 2;
        s.v_term += td * (td - 1) * (2 * td + 5);
        s.v1_term += td * (td - 1);
        s.v2_term += td * (td - 1) * (td - 2);
        it = run;
    }
    return s;
}

}  // namespace

KendallStats kendall_s(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const long long n = x.size();
    if (y.size() != n) throw ValidationError("kendall_s: length mismatch");
    if (n < 2) throw ValidationError("kendall_s: need at least 2 observations");

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (x(a) != x(b)) return x(a) < x(b);
        return y(a) < y(b);
    });

    // ties in x and joint (x, y) ties, over the x-sorted order
    const TieSums tx = tie_sums(order.begin(), order.end(),
                                [&](int a, int b) { return x(a) == x(b); });
    const TieSums txy = tie_sums(order.begin(), order.end(), [&](int a, int b) {
        return x(a) == x(b) && y(a) == y(b);
    });

    std::vector<double> ys(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = y(order[i]);
    std::vector<double> buf(ys.size());
    const long long discordant = count_inversions(ys, buf, 0, ys.size());

    // ys is now sorted; y-tie sums read off directly
    const TieSums ty = tie_sums(ys.begin(), ys.end(),
                                [](double a, double b) { return a == b; });

    const long long n0 = n * (n - 1) / 2;
    const long long untied = n0 - tx.pairs - ty.pairs + txy.pairs;

    KendallStats out;
    out.n = n;
    out.s = untied - 2 * discordant;

    const double nd = static_cast<double>(n);
    double var = (nd * (nd - 1) * (2 * nd + 5) - tx.v_term - ty.v_term) / 18.0;
    if (n > 2)
        var += tx.v2_term * ty.v2_term / (9.0 * nd * (nd - 1) * (nd - 2));
    var += tx.v1_term * ty.v1_term / (2.0 * nd * (nd - 1));
    out.var_s = var;

    const double denom =
        std::sqrt(static_cast<double>(n0 - tx.pairs)) * std::sqrt(static_cast<double>(n0 - ty.pairs));
    out.tau_b = denom > 0.0 ? static_cast<double>(out.s) / denom : 0.0;
    return out;
}

TestResult egger_test(const OutcomeTransform& transform) {
    const int m = transform.size();
    if (m < 3) throw ValidationError("egger test needs at least 3 studies");

    const Eigen::ArrayXd x = transform.precision.array();
    const Eigen::ArrayXd y = transform.snd.array();
    const double xbar = x.mean();
    const double ybar = y.mean();
    const double sxx = (x - xbar).square().sum();
    if (sxx <= 1e-12 * x.square().sum())
        throw ComputationError("degenerate design (constant precision)");

    const double slope = ((x - xbar) * (y - ybar)).sum() / sxx;
    const double intercept = ybar - slope * xbar;
    const double rss = (y - intercept - slope * x).square().sum();
    const double sigma2 = rss / (m - 2);
    const double se = std::sqrt(sigma2 * (1.0 / m + xbar * xbar / sxx));

    TestResult r;
    r.method = "egger";
    r.df = m - 2;
    if (se == 0.0) {
        r.statistic = 0.0;
        r.p_value = intercept == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.statistic = intercept / se;
    r.p_value = student_t_two_sided_p(r.statistic, m - 2);
    return r;
}

TestResult begg_test(const Eigen::VectorXd& effects, const Eigen::VectorXd& stderrs,
                     double tau2) {
    const int m = static_cast<int>(effects.size());
    if (m < 3) throw ValidationError("begg test needs at least 3 studies");
    if (stderrs.size() != m) throw ValidationError("begg test: length mismatch");
    if (!(tau2 >= 0.0)) throw ValidationError("begg test: tau2 must be >= 0");

    const Eigen::ArrayXd var = stderrs.array().square() + tau2;
    if (var.maxCoeff() - var.minCoeff() <= 1e-12 * var.maxCoeff())
        throw ComputationError("rank test undefined for constant variances");

    const Eigen::ArrayXd w = var.inverse();
    const double sw = w.sum();
    const double ybar = (w * effects.array()).sum() / sw;
    const double var_ybar = 1.0 / sw;
    const Eigen::ArrayXd deviates =
        (effects.array() - ybar) / (var - var_ybar).sqrt();

    const KendallStats k = kendall_s(deviates.matrix(), var.matrix());
    if (k.var_s <= 0.0) throw ComputationError("rank test variance is zero");

    TestResult r;
    r.method = "begg";
    r.df = m;
    r.statistic = static_cast<double>(k.s) / std::sqrt(k.var_s);
    r.p_value = normal_two_sided_p(r.statistic);
    return r;
}

TestResult bonferroni_combine(const std::vector<TestResult>& results) {
    if (results.empty()) throw ValidationError("bonferroni: no results to combine");
    const auto j = results.size();
    double pmin = 1.0;
    for (const auto& r : results) pmin = std::min(pmin, r.p_value);

    TestResult out;
    out.method = "bonferroni";
    out.df = static_cast<int>(j);
    out.statistic = pmin;
    out.p_value = std::min(1.0, static_cast<double>(j) * pmin);
    out.per_outcome = results;
    return out;
}

}  // namespace msset
