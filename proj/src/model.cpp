#include "blowup/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace blowup {

using nlohmann::json;

Expr SdeModel::covariance_entry(int i, int j) const {
  const int m = brownian_dim();
  Expr acc = Expr::constant(0.0);
  for (int k = 0; k < m; ++k) acc = acc + diffusion[i][k] * diffusion[j][k];
  return simplify(acc);
}

double SdeModel::drift_at(double x) const { return eval(drift[0], point({x})); }

double SdeModel::sigma2_at(double x) const {
  EvalPoint p = point({x});
  double s = 0.0;
  for (const Expr& e : diffusion[0]) {
    double v = eval(e, p);
    s += v * v;
  }
  return s;
}

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ConfigError("config key '" + key + "': " + why);
}

double require_finite(const json& j, const std::string& key) {
  if (!j.is_number()) bad(key, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) bad(key, "must be finite");
  return v;
}

Expr parse_checked(const std::string& src, const ParseContext& ctx, const std::string& key) {
  try {
    return parse(src, ctx);
  } catch (const ParseError& e) {
    bad(key, std::string("parse error: ") + e.what());
  }
}

StateDomain load_domain(const json& j, int dim) {
  StateDomain d;
  if (!j.contains("kind")) bad("domain.kind", "missing");
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "full_line") {
    d.kind = DomainKind::FullLine;
  } else if (kind == "positive_half_line") {
    d.kind = DomainKind::PositiveHalfLine;
    d.l = 0.0;
  } else if (kind == "interval") {
    d.kind = DomainKind::Interval;
    if (!j.contains("l") || !j.contains("r")) bad("domain", "interval requires l and r");
    d.l = require_finite(j.at("l"), "domain.l");
    d.r = require_finite(j.at("r"), "domain.r");
    if (!(d.l < d.r)) bad("domain", "requires l < r");
  } else if (kind == "full_space") {
    d.kind = DomainKind::FullSpace;
  } else {
    bad("domain.kind", "unknown kind '" + kind + "'");
  }
  if (dim > 1 && d.kind != DomainKind::FullSpace)
    bad("domain.kind", "multi-dimensional models use full_space");
  return d;
}

JumpSpec load_jumps(const json& j) {
  JumpSpec spec;
  if (!j.contains("lambda")) bad("jumps.lambda", "missing");
  spec.lambda = require_finite(j.at("lambda"), "jumps.lambda");
  if (!(spec.lambda > 0.0)) bad("jumps.lambda", "must be positive");

  std::string dist = j.value("dist", "");
  const json params = j.contains("dist_params") ? j.at("dist_params") : json::object();
  if (dist == "lognormal") {
    spec.dist = JumpDist::Lognormal;
    if (!params.contains("mu_j") || !params.contains("sigma_j"))
      bad("jumps.dist_params", "lognormal requires mu_j and sigma_j");
    spec.p1 = require_finite(params.at("mu_j"), "jumps.dist_params.mu_j");
    spec.p2 = require_finite(params.at("sigma_j"), "jumps.dist_params.sigma_j");
    if (!(spec.p2 > 0.0)) bad("jumps.dist_params.sigma_j", "must be positive");
  } else if (dist == "normal") {
    spec.dist = JumpDist::Normal;
    if (!params.contains("mu") || !params.contains("s"))
      bad("jumps.dist_params", "normal requires mu and s");
    spec.p1 = require_finite(params.at("mu"), "jumps.dist_params.mu");
    spec.p2 = require_finite(params.at("s"), "jumps.dist_params.s");
    if (!(spec.p2 > 0.0)) bad("jumps.dist_params.s", "must be positive");
  } else if (dist == "point_mass") {
    spec.dist = JumpDist::PointMass;
    if (!params.contains("y")) bad("jumps.dist_params", "point_mass requires y");
    spec.p1 = require_finite(params.at("y"), "jumps.dist_params.y");
  } else {
    bad("jumps.dist", "expected lognormal, normal, or point_mass");
  }

  std::string apply = j.value("apply", "additive");
  if (apply == "additive")
    spec.apply = JumpApply::Additive;
  else if (apply == "merton_multiplicative")
    spec.apply = JumpApply::MertonMultiplicative;
  else
    bad("jumps.apply", "expected additive or merton_multiplicative");
  return spec;
}

}  // namespace

SdeModel load_model(const std::string& config_text) {
  json j;
  try {
    j = json::parse(config_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }

  SdeModel m;
  m.name = j.value("name", "");
  if (!j.contains("dim")) bad("dim", "missing");
  if (!j.at("dim").is_number_integer()) bad("dim", "expected a positive integer");
  m.dim = j.at("dim").get<int>();
  if (m.dim < 1 || m.dim > 9) bad("dim", "must be in 1..9");

  if (j.contains("params")) {
    for (auto& [key, value] : j.at("params").items())
      m.params[key] = require_finite(value, "params." + key);
  }
  ParseContext ctx;
  ctx.dim = m.dim;
  for (const auto& kv : m.params) ctx.params.push_back(kv.first);

  if (!j.contains("drift")) bad("drift", "missing");
  const json& dj = j.at("drift");
  if (dj.is_string()) {
    m.drift.push_back(parse_checked(dj.get<std::string>(), ctx, "drift"));
  } else if (dj.is_array()) {
    for (const auto& e : dj)
      m.drift.push_back(parse_checked(e.get<std::string>(), ctx, "drift"));
  } else {
    bad("drift", "expected a string or a list of expression strings");
  }
  if (static_cast<int>(m.drift.size()) != m.dim)
    bad("drift", "expected " + std::to_string(m.dim) + " entries, got " +
                     std::to_string(m.drift.size()));

  if (!j.contains("diffusion")) bad("diffusion", "missing");
  const json& sj = j.at("diffusion");
  if (sj.is_string()) {
    if (m.dim != 1) bad("diffusion", "a single string requires dim=1");
    m.diffusion.push_back({parse_checked(sj.get<std::string>(), ctx, "diffusion")});
  } else if (sj.is_array() && !sj.empty() && sj.front().is_string()) {
    // flat list of dim strings: diagonal diffusion
    if (static_cast<int>(sj.size()) != m.dim)
      bad("diffusion", "diagonal form needs exactly dim entries");
    for (int i = 0; i < m.dim; ++i) {
      std::vector<Expr> row(static_cast<std::size_t>(m.dim), Expr::constant(0.0));
      row[static_cast<std::size_t>(i)] =
          parse_checked(sj.at(static_cast<std::size_t>(i)).get<std::string>(), ctx, "diffusion");
      m.diffusion.push_back(std::move(row));
    }
  } else if (sj.is_array()) {
    std::size_t cols = 0;
    for (const auto& row : sj) {
      if (!row.is_array()) bad("diffusion", "expected rows of expression strings");
      std::vector<Expr> r;
      for (const auto& e : row)
        r.push_back(parse_checked(e.get<std::string>(), ctx, "diffusion"));
      if (cols == 0) cols = r.size();
      if (r.size() != cols) bad("diffusion", "ragged rows");
      m.diffusion.push_back(std::move(r));
    }
    if (cols == 0) bad("diffusion", "empty matrix");
  } else {
    bad("diffusion", "expected a string, a list, or a matrix of expression strings");
  }
  if (static_cast<int>(m.diffusion.size()) != m.dim)
    bad("diffusion", "expected " + std::to_string(m.dim) + " rows, got " +
                         std::to_string(m.diffusion.size()));

  for (const Expr& e : m.drift)
    if (max_var_index(e) >= m.dim) bad("drift", "references a variable beyond dim");
  for (const auto& row : m.diffusion)
    for (const Expr& e : row)
      if (max_var_index(e) >= m.dim) bad("diffusion", "references a variable beyond dim");

  if (j.contains("domain")) {
    m.domain = load_domain(j.at("domain"), m.dim);
  } else if (m.dim > 1) {
    m.domain.kind = DomainKind::FullSpace;
  }
  if (j.contains("jumps") && !j.at("jumps").is_null()) m.jumps = load_jumps(j.at("jumps"));

  if (j.contains("feller")) {
    const json& f = j.at("feller");
    if (f.contains("anchor")) m.feller.anchor = require_finite(f.at("anchor"), "feller.anchor");
  }
  if (j.contains("lyapunov")) {
    const json& l = j.at("lyapunov");
    if (l.contains("r_d")) m.lyapunov.region.r_d = require_finite(l.at("r_d"), "lyapunov.r_d");
    if (l.contains("r_gamma"))
      m.lyapunov.region.r_gamma = require_finite(l.at("r_gamma"), "lyapunov.r_gamma");
    if (l.contains("r_max"))
      m.lyapunov.region.r_max = require_finite(l.at("r_max"), "lyapunov.r_max");
    if (l.contains("epsilon"))
      m.lyapunov.epsilon = require_finite(l.at("epsilon"), "lyapunov.epsilon");
    if (l.contains("include_interior") && !l.at("include_interior").is_null())
      m.lyapunov.include_interior = l.at("include_interior").get<bool>();
    const RegionSpec& rg = m.lyapunov.region;
    if (!(rg.r_d > 0.0 && rg.r_d < rg.r_gamma && rg.r_gamma < rg.r_max))
      bad("lyapunov", "regions must satisfy 0 < r_d < r_gamma < r_max");
    if (!(m.lyapunov.epsilon > 0.0)) bad("lyapunov.epsilon", "must be positive");
  }
  if (j.contains("mc")) {
    const json& c = j.at("mc");
    McSettings s;
    if (!c.contains("x0")) bad("mc.x0", "missing");
    if (c.at("x0").is_number()) {
      s.x0 = {require_finite(c.at("x0"), "mc.x0")};
    } else {
      for (const auto& e : c.at("x0")) s.x0.push_back(require_finite(e, "mc.x0"));
    }
    if (static_cast<int>(s.x0.size()) != m.dim) bad("mc.x0", "length must equal dim");
    if (c.contains("horizon")) s.horizon = require_finite(c.at("horizon"), "mc.horizon");
    if (c.contains("dt0")) s.dt0 = require_finite(c.at("dt0"), "mc.dt0");
    if (c.contains("eta")) s.eta = require_finite(c.at("eta"), "mc.eta");
    if (c.contains("threshold")) s.threshold = require_finite(c.at("threshold"), "mc.threshold");
    if (c.contains("n_paths")) s.n_paths = c.at("n_paths").get<long>();
    if (c.contains("seed")) s.seed = c.at("seed").get<std::uint64_t>();
    if (c.contains("boundary_level"))
      s.boundary_level = require_finite(c.at("boundary_level"), "mc.boundary_level");
    if (c.contains("threshold_sensitivity"))
      s.threshold_sensitivity = c.at("threshold_sensitivity").get<bool>();
    if (!(s.dt0 > 0.0)) bad("mc.dt0", "must be positive");
    if (!(s.eta > 0.0 && s.eta <= 1.0)) bad("mc.eta", "must lie in (0, 1]");
    if (s.n_paths < 1) bad("mc.n_paths", "must be at least 1");
    if (!(s.horizon > 0.0)) bad("mc.horizon", "must be positive");
    double r0 = 0.0;
    for (double x : s.x0) r0 += x * x;
    if (!(s.threshold > std::sqrt(r0))) bad("mc.threshold", "must exceed |x0|");
    m.mc = s;
  }
  return m;
}

SdeModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_model(ss.str());
}

std::vector<LyapunovCandidate> builtin_candidates(const SdeModel& m) {
  std::vector<LyapunovCandidate> out;

  Expr sumsq = Expr::constant(0.0);
  for (int i = 0; i < m.dim; ++i) sumsq = sumsq + pow(Expr::variable(i), 2.0);
  sumsq = simplify(sumsq);

  {
    LyapunovCandidate c;
    c.name = "squared_norm";
    c.v = sumsq;
    out.push_back(std::move(c));
  }
  {
    LyapunovCandidate c;
    c.name = "log_squared_norm";
    c.v = ln(sumsq);
    c.singular_radii = {0.0, 1.0};  // undefined at 0, nonpositive for |x| <= 1
    out.push_back(std::move(c));
  }
  {
    // K - 1/ln(|x|)^eps: positive and bounded past |x| = exp(K^(-1/eps))
    LyapunovCandidate c;
    c.name = "shifted_log_reciprocal";
    c.v = Expr::parameter("K") - pow(ln(Expr::norm()), -Expr::parameter("eps"));
    c.params = {{"K", 2.0}, {"eps", 0.5}};
    c.singular_radii = {0.0, 1.0};
    out.push_back(std::move(c));
  }
  if (m.dim == 1) {
    LyapunovCandidate c;
    c.name = "reciprocal";
    c.v = Expr::constant(1.0) / Expr::variable(0);
    c.singular_radii = {0.0};
    out.push_back(std::move(c));
  }
  if (m.dim == 1) {
    // integral of 1/b from 1, realized as a tabulated function by the
    // analysis engines; offered when the drift is positive past 1
    bool drift_positive = true;
    for (double x : {1.0, 2.0, 5.0, 25.0, 400.0}) {
      EvalOutcome v = eval_extended(m.drift[0], m.point({x}));
      if (!v.finite() || v.value <= 0.0) {
        drift_positive = false;
        break;
      }
    }
    if (drift_positive) {
      LyapunovCandidate c;
      c.name = "drift_reciprocal_integral";
      c.kind = CandidateKind::DriftReciprocalIntegral;
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::string model_digest(const SdeModel& m) {
  std::string s = "dim=" + std::to_string(m.dim) + ";drift=";
  for (const Expr& e : m.drift) s += render(e) + ",";
  s += ";sigma=";
  for (const auto& row : m.diffusion) {
    for (const Expr& e : row) s += render(e) + ",";
    s += "|";
  }
  s += ";domain=" + std::to_string(static_cast<int>(m.domain.kind)) + "," +
       format_double(m.domain.l) + "," + format_double(m.domain.r);
  if (m.jumps) {
    s += ";jumps=" + format_double(m.jumps->lambda) + "," +
         std::to_string(static_cast<int>(m.jumps->dist)) + "," + format_double(m.jumps->p1) +
         "," + format_double(m.jumps->p2) + "," +
         std::to_string(static_cast<int>(m.jumps->apply));
  }
  s += ";params=";
  for (const auto& [k, v] : m.params) s += k + "=" + format_double(v) + ",";

  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace blowup
