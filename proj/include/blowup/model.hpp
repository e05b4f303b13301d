#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "blowup/expr.hpp"

namespace blowup {

enum class DomainKind { FullLine, Interval, PositiveHalfLine, FullSpace };

struct StateDomain {
  DomainKind kind = DomainKind::FullLine;
  double l = -std::numeric_limits<double>::infinity();
  double r = std::numeric_limits<double>::infinity();

  bool contains(double x) const { return x > l && x < r; }
};

enum class JumpDist { Lognormal, Normal, PointMass };
enum class JumpApply { Additive, MertonMultiplicative };

// Jump size Y and jump application are separated so multiplicative
// x <- x*Y increments and additive x <- x+Y jumps share one code path.
struct JumpSpec {
  double lambda = 1.0;
  JumpDist dist = JumpDist::Lognormal;
  double p1 = 0.0;  // Lognormal mu_j / Normal mu / PointMass y
  double p2 = 0.0;  // Lognormal sigma_j / Normal s / unused
  JumpApply apply = JumpApply::Additive;
};

// Nested sampling regions: an inner disk of radius r_d (boundary of D), a
// start shell at r_gamma, and an outer truncation radius r_max.
struct RegionSpec {
  double r_d = 3.0;
  double r_gamma = 10.0;
  double r_max = 1e6;
};

enum class CandidateKind { Expression, DriftReciprocalIntegral };

struct LyapunovCandidate {
  std::string name;
  CandidateKind kind = CandidateKind::Expression;
  std::optional<Expr> v;                 // Expression candidates
  std::map<std::string, double> params;  // candidate-local defaults (K, eps)
  std::vector<double> singular_radii;    // radii where v or derivatives blow up
};

struct FellerSettings {
  std::optional<double> anchor;
};

struct LyapunovSettings {
  RegionSpec region;
  double epsilon = 0.5;  // exponent in the shifted-log candidate family
  std::optional<bool> include_interior;
};

struct McSettings {
  std::vector<double> x0;
  double horizon = 1.0;
  double dt0 = 1e-3;
  double eta = 0.5;
  double threshold = 1e8;
  long n_paths = 1000;
  std::uint64_t seed = 0;
  std::optional<double> boundary_level;
  bool threshold_sensitivity = false;
};

struct SdeModel {
  int dim = 1;
  std::vector<Expr> drift;                    // b(x), length dim
  std::vector<std::vector<Expr>> diffusion;   // sigma(x), dim x m
  std::optional<JumpSpec> jumps;
  StateDomain domain;
  std::map<std::string, double> params;

  FellerSettings feller;
  LyapunovSettings lyapunov;
  std::optional<McSettings> mc;
  std::string name;

  int brownian_dim() const { return diffusion.empty() ? 0 : static_cast<int>(diffusion[0].size()); }

  EvalPoint point(std::vector<double> state) const {
    EvalPoint p;
    p.state = std::move(state);
    p.params = params;
    return p;
  }

  // Entry (i, j) of A(x) = sigma sigma^T, assembled on demand.
  Expr covariance_entry(int i, int j) const;

  double drift_at(double x) const;      // dim-1 convenience
  double sigma2_at(double x) const;     // dim-1: sum_k sigma_1k^2
};

// Loads and fully validates a model from config text (JSON). Throws
// ConfigError naming the offending key.
SdeModel load_model(const std::string& config_text);
SdeModel load_model_file(const std::string& path);

// The built-in Lyapunov candidate families: squared norm, log squared norm,
// the shifted-log family K - 1/ln(|x|)^eps, the reciprocal 1/x, and (for
// one-dimensional models with positive drift) the tabulated integral of
// 1/b. K and eps are exposed parameters.
std::vector<LyapunovCandidate> builtin_candidates(const SdeModel& m);

// FNV-1a over a canonical rendering of the model; stable across runs.
std::string model_digest(const SdeModel& m);

}  // namespace blowup
