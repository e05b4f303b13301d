#pragma once

#include <functional>
#include <utility>

#include "blowup/model.hpp"
#include "blowup/quad.hpp"

namespace blowup {

enum class Verdict {
  AlmostSureNonExplosion,
  PositiveProbabilityExplosion,
  AlmostSureExplosion,
  Inconclusive,
};

const char* to_string(Verdict v);

}  // namespace blowup

namespace blowup::feller {

// Scale-function boundary test for one-dimensional diffusions without
// jumps. The scale density is p'(y) = exp(-2 int_c^y b/sigma^2) and
//   v(x) = int_c^x p'(y) int_c^y 2 / (p'(z) sigma^2(z)) dz dy.
// Endpoint verdicts decide whether v stays finite toward each end of the
// working interval. Everything runs in log space: the inner integrand pairs
// e^{-A} against int e^{+A} with A growing like y^3 for quadratic drift,
// which overflows doubles near y ~ 9.
struct FellerReport {
  bool precond_nondegenerate = true;
  bool precond_locally_integrable = true;
  quad::IntegralVerdict v_at_left;
  quad::IntegralVerdict v_at_right;
  Verdict verdict = Verdict::Inconclusive;
  double anchor = 1.0;
  // Interval the classification actually ran on; narrower than the state
  // domain when sigma vanishes inside it.
  double working_left = -std::numeric_limits<double>::infinity();
  double working_right = std::numeric_limits<double>::infinity();
  std::vector<std::string> caveats;
  // (y, log w(y)) samples of the outer integrand on each side, for CSV
  // output and tail diagnostics.
  std::vector<std::pair<double, double>> w_samples_right;
  std::vector<std::pair<double, double>> w_samples_left;
};

// Non-degeneracy (sigma^2 > 0) and local integrability of |b|/sigma^2,
// both checked by sampling and reported best-effort. Throws DimensionError
// unless dim == 1.
std::pair<bool, bool> check_preconditions(const SdeModel& m);

// Points where sigma^2 vanishes inside the domain (sampled detection).
std::vector<double> degeneracy_points(const SdeModel& m);

// y |-> log p'(y) = -2 int_c^y b/sigma^2; exactly 0 at y = c.
std::function<double(double)> scale_log_derivative(const SdeModel& m, double c);

// v(x) by the nested log-space march; v >= 0, nondecreasing in |x - c|.
double v_function(const SdeModel& m, double c, double x);

double default_anchor(const SdeModel& m);

FellerReport classify_feller(const SdeModel& m, double c);
FellerReport classify_feller(const SdeModel& m);

// Least-squares slope of log w against log y over y in [y_lo, y_hi] on the
// right side of the anchor.
double outer_integrand_tail_slope(const SdeModel& m, double c, double y_lo, double y_hi);

// Improper integral of 1/b from xi; Convergent means the noiseless flow
// explodes in finite time. Throws DriftNotPositive when sampling finds
// b <= 0 on [xi, inf).
quad::IntegralVerdict osgood_test(const SdeModel& m, double xi);

}  // namespace blowup::feller
