#include "blowup/quad.hpp"

#include <algorithm>
#include <cmath>

namespace blowup::quad {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// (G7, K15) Gauss-Kronrod pair on [-1, 1], nodes sorted ascending. Gauss
// weight is zero on Kronrod-only nodes.
struct GkNode {
  double x, wg, wk;
};
constexpr GkNode kGk15[15] = {
    {-0.991455371120813, 0.0, 0.022935322010529},
    {-0.949107912342759, 0.129484966168870, 0.063092092629979},
    {-0.864864423359769, 0.0, 0.104790010322250},
    {-0.741531185599394, 0.279705391489277, 0.140653259715525},
    {-0.586087235467691, 0.0, 0.169004726639267},
    {-0.405845151377397, 0.381830050505119, 0.190350578064785},
    {-0.207784955007898, 0.0, 0.204432940075298},
    {0.0, 0.417959183673469, 0.209482141084728},
    {0.207784955007898, 0.0, 0.204432940075298},
    {0.405845151377397, 0.381830050505119, 0.190350578064785},
    {0.586087235467691, 0.0, 0.169004726639267},
    {0.741531185599394, 0.279705391489277, 0.140653259715525},
    {0.864864423359769, 0.0, 0.104790010322250},
    {0.949107912342759, 0.129484966168870, 0.063092092629979},
    {0.991455371120813, 0.0, 0.022935322010529},
};

}  // namespace

double logaddexp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

double gk15(const Fn& f, double a, double b, double* error_estimate) {
  const double mid = 0.5 * (a + b);
  const double hw = 0.5 * (b - a);
  double k15 = 0.0, g7 = 0.0;
  for (const GkNode& n : kGk15) {
    double v = f(mid + hw * n.x);
    k15 += n.wk * v;
    g7 += n.wg * v;
  }
  k15 *= hw;
  g7 *= hw;
  if (error_estimate) *error_estimate = std::fabs(k15 - g7);
  return k15;
}

// ---------------------------------------------------------------------------
// Proper integrals

namespace {

struct Panel {
  double a, b, value, err;
};

double integrate_adaptive(const Fn& f, double a, double b, double tol, int max_depth) {
  std::vector<Panel> work;
  double err0;
  double v0 = gk15(f, a, b, &err0);
  work.push_back({a, b, v0, err0});
  double total = v0, total_err = err0;
  const std::size_t max_panels = 200000;

  while (total_err > tol * (1.0 + std::fabs(total))) {
    auto worst = std::max_element(work.begin(), work.end(),
                                  [](const Panel& p, const Panel& q) { return p.err < q.err; });
    Panel p = *worst;
    double min_width = std::ldexp(std::fabs(b - a) + 1.0, -max_depth);
    if (work.size() >= max_panels || (p.b - p.a) <= min_width)
      throw QuadFailure("adaptive refinement limit reached before meeting tolerance");
    work.erase(worst);
    double mid = 0.5 * (p.a + p.b);
    double e1, e2;
    double v1 = gk15(f, p.a, mid, &e1);
    double v2 = gk15(f, mid, p.b, &e2);
    work.push_back({p.a, mid, v1, e1});
    work.push_back({mid, p.b, v2, e2});
    total = 0.0;
    total_err = 0.0;
    for (const Panel& q : work) {
      total += q.value;
      total_err += q.err;
    }
  }
  return total;
}

}  // namespace

double integrate(const Fn& f, double a, double b, double tol, const IntegrateOptions& opt) {
  if (!(a < b)) throw QuadFailure("integrate requires a < b");
  if (opt.left && opt.right) {
    double mid = 0.5 * (a + b);
    IntegrateOptions lo = opt, hi = opt;
    lo.right.reset();
    hi.left.reset();
    return integrate(f, a, mid, tol / 2, lo) + integrate(f, mid, b, tol / 2, hi);
  }
  if (opt.left || opt.right) {
    const bool left = opt.left.has_value();
    const double beta = left ? opt.left->exponent : opt.right->exponent;
    if (beta >= 1.0) throw QuadFailure("declared endpoint singularity is not integrable");
    if (beta > 0.0) {
      // y = endpoint +- u^q with q = 1/(1-beta) bounds the transformed integrand
      const double q = 1.0 / (1.0 - beta);
      const double umax = std::pow(b - a, 1.0 / q);
      Fn g = [&f, a, b, q, left](double u) {
        double uq = std::pow(u, q);
        double y = left ? a + uq : b - uq;
        double jac = q * std::pow(u, q - 1.0);
        return f(y) * jac;
      };
      return integrate_adaptive(g, 0.0, umax, tol, opt.max_depth);
    }
  }
  return integrate_adaptive(f, a, b, tol, opt.max_depth);
}

// ---------------------------------------------------------------------------
// Log-space panels

namespace {

struct LogPanelResult {
  double value = -kInf;
  bool resolved = true;
};

LogPanelResult log_panel_recurse(const Fn& logf, double t0, double t1, double rel_tol,
                                 double running_max, double drop_log, int depth_left) {
  const double mid = 0.5 * (t0 + t1);
  const double hw = 0.5 * (t1 - t0);
  double g[15];
  double gmax = -kInf, gmin = kInf;
  for (int j = 0; j < 15; ++j) {
    double v = logf(mid + hw * kGk15[j].x);
    if (std::isnan(v)) v = -kInf;
    g[j] = v;
    gmax = std::max(gmax, v);
    if (v != -kInf) gmin = std::min(gmin, v);
  }
  if (gmax == -kInf) return {-kInf, true};

  double k15 = 0.0, g7 = 0.0;
  for (int j = 0; j < 15; ++j) {
    double e = std::exp(g[j] - gmax);
    k15 += kGk15[j].wk * e;
    g7 += kGk15[j].wg * e;
  }
  const double value = gmax + std::log(std::max(k15 * hw, 1e-300));
  const double spread = gmax - (gmin == kInf ? gmax : gmin);
  const double err_rel = std::fabs(k15 - g7) / std::max(k15, 1e-300);

  const bool negligible = value < running_max - drop_log;
  const bool accurate = err_rel <= rel_tol && spread <= 35.0;
  if (accurate || negligible) return {value, true};
  if (depth_left <= 0) return {value, err_rel <= 1e-3};

  // Refine the dominant half first so the other half can be pruned against
  // an up-to-date running maximum; steep exponential integrands would
  // otherwise force full-depth refinement of negligible subpanels.
  double left_max = -kInf, right_max = -kInf;
  for (int j = 0; j < 8; ++j) left_max = std::max(left_max, g[j]);
  for (int j = 7; j < 15; ++j) right_max = std::max(right_max, g[j]);
  double lo1 = t0, hi1 = mid, lo2 = mid, hi2 = t1;
  if (right_max > left_max) {
    std::swap(lo1, lo2);
    std::swap(hi1, hi2);
  }
  LogPanelResult first =
      log_panel_recurse(logf, lo1, hi1, rel_tol, running_max, drop_log, depth_left - 1);
  LogPanelResult second = log_panel_recurse(
      logf, lo2, hi2, rel_tol, std::max(running_max, first.value), drop_log, depth_left - 1);
  return {logaddexp(first.value, second.value), first.resolved && second.resolved};
}

LogPanelResult log_panel(const Fn& logf, double t0, double t1, double rel_tol,
                         double running_max, double drop_log, int max_depth) {
  if (!(t1 > t0)) return {-kInf, true};
  return log_panel_recurse(logf, t0, t1, rel_tol, running_max, drop_log, max_depth);
}

}  // namespace

double log_panel_integral(const Fn& logf, double t0, double t1, double rel_tol,
                          double running_max, double drop_log, int max_depth) {
  return log_panel(logf, t0, t1, rel_tol, running_max, drop_log, max_depth).value;
}

std::vector<double> cumulative_log_integral(const LogIntegrand& g, double c,
                                            std::span<const double> grid) {
  if (grid.empty()) return {};
  if (std::fabs(grid.front() - c) > 1e-12 * (1.0 + std::fabs(c)))
    throw GridTooCoarse("grid must start at the anchor c");
  std::vector<double> out(grid.size(), -kInf);
  double acc = -kInf;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw GridTooCoarse("grid must be strictly increasing");
    LogPanelResult p = log_panel(g.log_abs, grid[i - 1], grid[i], 1e-10, acc, 45.0, 60);
    if (!p.resolved)
      throw GridTooCoarse("panel [" + std::to_string(grid[i - 1]) + ", " +
                          std::to_string(grid[i]) +
                          "] exceeds the log-variation stability bound");
    acc = logaddexp(acc, p.value);
    out[i] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Improper integrals with convergence verdicts

namespace {

struct FitResult {
  bool ok = false;
  double slope = 0.0;
};

// Least-squares slope of logf against log(abscissa) over the trailing window.
FitResult fit_tail_slope(const std::vector<double>& log_x, const std::vector<double>& log_f,
                         int fit_points) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < log_x.size(); ++i)
    if (std::isfinite(log_f[i])) pts.emplace_back(log_x[i], log_f[i]);
  int n = static_cast<int>(pts.size());
  int use = std::min(n, std::max(4, fit_points));
  if (n < 4) return {};
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = n - use; i < n; ++i) {
    sx += pts[i].first;
    sy += pts[i].second;
    sxx += pts[i].first * pts[i].first;
    sxy += pts[i].first * pts[i].second;
  }
  double det = use * sxx - sx * sx;
  if (std::fabs(det) < 1e-12) return {};
  return {true, (use * sxy - sx * sy) / det};
}

// Shared truncation loop. The caller feeds per-truncation triples
// (abscissa, logf sample, panel log-mass); this applies the verdict rules.
// `toward_infinity` selects the slope criterion: toward +inf a tail
// f ~ y^s integrates iff s < -1, toward a finite endpoint f ~ d^s
// integrates iff s > -1.
class VerdictBuilder {
public:
  VerdictBuilder(double tol, const TailConfig& cfg, bool toward_infinity)
      : tol_(tol), cfg_(cfg), toward_infinity_(toward_infinity) {}

  // Returns a verdict once one can be issued; std::nullopt keeps going.
  std::optional<IntegralVerdict> step(double abscissa, double logf_sample, double panel_log) {
    log_mass_ = logaddexp(log_mass_, panel_log);
    log_x_.push_back(std::log(abscissa));
    log_f_.push_back(logf_sample);
    v_.truncation_radii.push_back(abscissa);
    v_.truncation_values.push_back(std::exp(std::min(log_mass_, 700.0)));

    if (log_mass_ > std::log(cfg_.divergence_threshold)) {
      v_.status = IntegralStatus::Divergent;
      v_.note = "partial integral exceeded the divergence threshold";
      return v_;
    }

    FitResult fit = fit_tail_slope(log_x_, log_f_, cfg_.fit_points);
    if (fit.ok) v_.tail_slope = fit.slope;

    bool diverging_slope = false, converging_slope = false;
    if (fit.ok) {
      if (toward_infinity_) {
        diverging_slope = fit.slope >= -1.0 + cfg_.delta;
        converging_slope = fit.slope < -1.0 - cfg_.delta;
      } else {
        diverging_slope = fit.slope <= -1.0 - cfg_.delta;
        converging_slope = fit.slope > -1.0 + cfg_.delta;
      }
    }

    slope_diverge_streak_ = diverging_slope ? slope_diverge_streak_ + 1 : 0;

    // Log-type divergence: dyadic panel masses stop decaying.
    if (fit.ok && !converging_slope && prev_panel_log_ != -kInf && panel_log != -kInf &&
        panel_log - prev_panel_log_ >= std::log(0.98))
      ++ratio_streak_;
    else
      ratio_streak_ = 0;
    prev_panel_log_ = panel_log;

    if (slope_diverge_streak_ >= 3 || ratio_streak_ >= 3) {
      v_.status = IntegralStatus::Divergent;
      v_.note = slope_diverge_streak_ >= 3 ? "sustained non-integrable tail slope"
                                           : "dyadic increments stopped decaying";
      return v_;
    }

    if (converging_slope && std::isfinite(logf_sample)) {
      // Power-law tail correction, then a Cauchy test on corrected values.
      double decay = toward_infinity_ ? (-fit.slope - 1.0) : (fit.slope + 1.0);
      double log_tail = logf_sample + std::log(abscissa) - std::log(decay);
      double corrected = logaddexp(log_mass_, log_tail);
      if (have_prev_corrected_) {
        double cur = std::exp(corrected), prev = std::exp(prev_corrected_);
        if (std::fabs(cur - prev) <= tol_ * (1.0 + std::fabs(cur)))
          ++cauchy_streak_;
        else
          cauchy_streak_ = 0;
        if (cauchy_streak_ >= 2) {
          v_.status = IntegralStatus::Convergent;
          v_.value = cur;
          v_.error_estimate = std::fabs(cur - prev) + tol_ * (1.0 + std::fabs(cur));
          return v_;
        }
      }
      prev_corrected_ = corrected;
      have_prev_corrected_ = true;
    } else {
      have_prev_corrected_ = false;
      cauchy_streak_ = 0;
    }
    return std::nullopt;
  }

  IntegralVerdict inconclusive(const std::string& why) {
    v_.status = IntegralStatus::Inconclusive;
    v_.note = why;
    return v_;
  }

  double log_mass() const { return log_mass_; }

private:
  double tol_;
  TailConfig cfg_;
  bool toward_infinity_;
  IntegralVerdict v_;
  double log_mass_ = -kInf;
  std::vector<double> log_x_, log_f_;
  int slope_diverge_streak_ = 0;
  int ratio_streak_ = 0;
  int cauchy_streak_ = 0;
  double prev_panel_log_ = -kInf;
  double prev_corrected_ = -kInf;
  bool have_prev_corrected_ = false;
};

}  // namespace

IntegralVerdict integrate_improper_log(const Fn& logf, double a, double tol,
                                       const TailConfig& cfg) {
  if (!(a > 0.0)) throw QuadFailure("integrate_improper requires a > 0");
  VerdictBuilder builder(tol, cfg, /*toward_infinity=*/true);
  double r_prev = a;
  for (int k = 1; k <= cfg.k_max; ++k) {
    double r_k = r_prev * 2.0;
    double panel = log_panel_integral(logf, r_prev, r_k, 1e-10, builder.log_mass());
    double sample = logf(r_k);
    if (std::isnan(sample)) sample = -kInf;
    if (auto verdict = builder.step(r_k, sample, panel)) return *verdict;
    r_prev = r_k;
  }
  return builder.inconclusive("truncation limit reached without a decisive trend");
}

IntegralVerdict integrate_improper(const Fn& f, double a, double tol, const TailConfig& cfg) {
  Fn logf = [&f](double y) {
    double v = f(y);
    if (v > 0.0) return std::log(v);
    if (v == 0.0) return -kInf;
    return std::numeric_limits<double>::quiet_NaN();
  };
  return integrate_improper_log(logf, a, tol, cfg);
}

IntegralVerdict integrate_to_endpoint_log(const Fn& logf_of_distance, double span, double tol,
                                          const TailConfig& cfg) {
  if (!(span > 0.0)) throw QuadFailure("integrate_to_endpoint requires a positive span");
  VerdictBuilder builder(tol, cfg, /*toward_infinity=*/false);
  double d_prev = span;
  for (int k = 1; k <= cfg.k_max; ++k) {
    double d_k = d_prev * 0.5;
    // panel over distances [d_k, d_prev]
    double panel = log_panel_integral(logf_of_distance, d_k, d_prev, 1e-10, builder.log_mass());
    double sample = logf_of_distance(d_k);
    if (std::isnan(sample)) sample = -kInf;
    if (auto verdict = builder.step(d_k, sample, panel)) return *verdict;
    d_prev = d_k;
  }
  return builder.inconclusive("truncation limit reached without a decisive trend");
}

}  // namespace blowup::quad
