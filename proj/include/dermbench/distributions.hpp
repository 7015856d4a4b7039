#pragma once

namespace dermbench {

double normal_cdf(double x);
/// 2 * (1 - Phi(|z|)), computed with erfc so small tails keep precision.
double two_sided_normal_p(double z);

/// I_x(a, b) by continued fraction (modified Lentz), a, b > 0, x in [0, 1].
double regularized_incomplete_beta(double a, double b, double x);

double student_t_cdf(double t, double df);
/// P(|T| >= |t|) for T ~ t(df).
double two_sided_t_p(double t, double df);

}  // namespace dermbench
