#pragma once

namespace msset {

// Upper-tail probability of the chi-square distribution with df degrees of
// freedom, i.e. the regularized upper incomplete gamma Q(df/2, x/2).
double chi_square_tail(double x, int df);

// Standard normal cdf and two-sided p-value of a z statistic.
double normal_cdf(double z);
double normal_two_sided_p(double z);

// Two-sided p-value of a t statistic with df degrees of freedom.
double student_t_two_sided_p(double t, int df);

}  // namespace msset
