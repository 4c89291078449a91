#include "msset/distributions.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "msset/error.hpp"

namespace msset {

double chi_square_tail(double x, int df) {
    if (df < 1) throw ValidationError("chi_square_tail: df must be >= 1");
    if (!(x >= 0.0)) throw ValidationError("chi_square_tail: x must be >= 0");
    if (x == 0.0) return 1.0;
    return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_two_sided_p(double z) {
    return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
}

double student_t_two_sided_p(double t, int df) {
    if (df < 1) throw ValidationError("student_t_two_sided_p: df must be >= 1");
    if (!std::isfinite(t)) return 0.0;
    const boost::math::students_t dist(df);
    return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

}  // namespace msset
