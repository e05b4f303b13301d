#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blowup/errors.hpp"

namespace blowup::quad {

using Fn = std::function<double(double)>;

// Declared integrable endpoint singularity: f ~ (y - endpoint)^(-exponent)
// with exponent < 1. Handled by a power substitution before the adaptive
// pass so the transformed integrand is bounded.
struct SingularEndpoint {
  double exponent = 0.5;
};

struct IntegrateOptions {
  std::optional<SingularEndpoint> left;
  std::optional<SingularEndpoint> right;
  int max_depth = 50;
};

// Adaptive Gauss-Kronrod (G7,K15) with bisection on the error estimate.
// Estimated absolute error <= tol * (1 + |result|). Throws QuadFailure when
// the refinement limit is reached without meeting tol.
double integrate(const Fn& f, double a, double b, double tol,
                 const IntegrateOptions& opt = {});

enum class IntegralStatus { Convergent, Divergent, Inconclusive };

struct IntegralVerdict {
  IntegralStatus status = IntegralStatus::Inconclusive;
  double value = std::numeric_limits<double>::quiet_NaN();  // when Convergent
  int direction = +1;                                       // sign of infinity when Divergent
  // Diagnostics: truncation sequence, fitted tail slope, error estimate.
  std::vector<double> truncation_radii;
  std::vector<double> truncation_values;  // running integral at each radius
  double tail_slope = std::numeric_limits<double>::quiet_NaN();
  double error_estimate = std::numeric_limits<double>::quiet_NaN();
  std::string note;

  bool convergent() const { return status == IntegralStatus::Convergent; }
  bool divergent() const { return status == IntegralStatus::Divergent; }
};

struct TailConfig {
  double delta = 0.1;                  // dead zone half-width around slope -1
  int k_max = 40;                      // truncations at R_k = a * 2^k
  double divergence_threshold = 1e12;  // partial integral beyond this => Divergent
  int fit_points = 8;                  // trailing samples for the slope fit
};

// Decides whether the improper integral of a positive f over [a, inf)
// converges. Truncations at R_k = a*2^k; Convergent requires a Cauchy
// truncation sequence (after a fitted power-law tail correction) together
// with a fitted log-log tail slope < -1-delta; Divergent on mass beyond the
// divergence threshold, sustained slope >= -1+delta, or non-decaying dyadic
// increments. Anything else is Inconclusive, which is a value, not an error.
IntegralVerdict integrate_improper(const Fn& f, double a, double tol,
                                   const TailConfig& cfg = {});

// Same contract with the integrand supplied as log f (f > 0 implied); used
// when f itself would overflow or underflow.
IntegralVerdict integrate_improper_log(const Fn& logf, double a, double tol,
                                       const TailConfig& cfg = {});

// Improper integral toward a finite endpoint at distance `span` from the
// start of integration: decides convergence of  int_0^span  f(s) ds  where
// f may blow up as s -> span. logf takes the distance d = span - s to the
// endpoint. Convergence criterion mirrors the infinite case with the slope
// test flipped: f ~ d^sigma integrates iff sigma > -1.
IntegralVerdict integrate_to_endpoint_log(const Fn& logf_of_distance, double span,
                                          double tol, const TailConfig& cfg = {});

// A positive integrand presented in log space.
struct LogIntegrand {
  Fn log_abs;     // returns log |f(y)|
  int sign = +1;  // constant sign on the interval
};

// Running integral of a positive integrand in log space: returns
// log( int_c^{grid[i]} f )  for every grid point, accumulated with
// log-sum-exp so integrands spanning hundreds of e-folds per panel never
// overflow. grid[0] must equal c (its value is -inf). Throws GridTooCoarse
// when a panel cannot be resolved within the refinement limit.
std::vector<double> cumulative_log_integral(const LogIntegrand& g, double c,
                                            std::span<const double> grid);

// log( int_{t0}^{t1} exp(logf) )  via adaptive bisection with G7/K15 panels
// evaluated in log space. Subpanels falling more than `drop_log` below
// `running_max` are not refined further. Evaluation order is not monotone;
// callbacks that carry cumulative state must tolerate arbitrary order.
// Returns -inf for empty panels.
double log_panel_integral(const Fn& logf, double t0, double t1, double rel_tol,
                          double running_max = -std::numeric_limits<double>::infinity(),
                          double drop_log = 45.0, int max_depth = 60);

double logaddexp(double a, double b);

// Non-adaptive K15 value on [a, b]; building block exposed for cumulative
// integrators that chain many short panels.
double gk15(const Fn& f, double a, double b, double* error_estimate = nullptr);

}  // namespace blowup::quad
