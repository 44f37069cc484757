#pragma once

namespace abevo::special {

// Regularized incomplete gamma P(a, x) and its complement Q(a, x).
// Series expansion below x < a+1, continued fraction above; accurate to
// ~1e-14 over the ranges the statistics need.
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Regularized incomplete beta I_x(a, b), continued fraction with the
// symmetry reduction.
double beta_inc(double a, double b, double x);

// Survival functions built on the above.
double chi_squared_sf(double x, double dof);
// Two-sided p for a t statistic with (possibly fractional) dof.
double student_t_sf_two_sided(double t, double dof);

}  // namespace abevo::special
