#include <doctest.h>

#include <cmath>

#include "blowup/model.hpp"
#include "blowup/quad.hpp"

using namespace blowup;

namespace {

const char* kQuadraticDriftUnitNoise = R"({
  "dim": 1,
  "drift": "x^2",
  "diffusion": "1",
  "domain": {"kind": "full_line"}
})";

const char* kQuadraticDriftQuinticNoise = R"({
  "dim": 1,
  "drift": ["x^2"],
  "diffusion": [["x^5"]],
  "domain": {"kind": "full_line"}
})";

}  // namespace

TEST_CASE("load_model: 1-D models") {
  SdeModel a = load_model(kQuadraticDriftUnitNoise);
  CHECK(a.dim == 1);
  CHECK(a.drift_at(3.0) == doctest::Approx(9.0));
  CHECK(a.sigma2_at(7.0) == doctest::Approx(1.0));

  SdeModel b = load_model(kQuadraticDriftQuinticNoise);
  CHECK(b.sigma2_at(2.0) == doctest::Approx(1024.0));
}

TEST_CASE("load_model: dimension mismatch is a ConfigError") {
  const char* bad = R"({
    "dim": 2,
    "drift": ["0", "0"],
    "diffusion": [["1","0"],["0","1"],["0","0"]]
  })";
  CHECK_THROWS_AS(load_model(bad), ConfigError);
}

TEST_CASE("load_model: errors name the offending key") {
  try {
    load_model(R"({"dim": 1, "diffusion": "1"})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("drift") != std::string::npos);
  }
  try {
    load_model(R"({"dim": 1, "drift": "x", "diffusion": "1",
                   "jumps": {"lambda": -1, "dist": "point_mass", "dist_params": {"y": 0}}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("lambda") != std::string::npos);
  }
  try {
    load_model(R"({"dim": 1, "drift": "x", "diffusion": "1",
                   "jumps": {"lambda": 1, "dist": "lognormal",
                             "dist_params": {"mu_j": 0, "sigma_j": 0}}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("sigma_j") != std::string::npos);
  }
}

TEST_CASE("load_model: schema-valid configs load or raise ConfigError, never crash") {
  const char* variants[] = {
      R"({"dim": 1, "drift": "x", "diffusion": "1", "domain": {"kind": "interval", "l": 2, "r": 1}})",
      R"({"dim": 1, "drift": "y", "diffusion": "1"})",
      R"({"dim": 3, "drift": ["0","0","0"], "diffusion": ["norm(x)^2","norm(x)^2","norm(x)^2"],
          "domain": {"kind": "full_space"}})",
      R"({"dim": 1, "drift": "x", "diffusion": "1", "mc": {"x0": 1.0, "threshold": 0.5}})",
      R"({"dim": 2, "drift": ["0","0"], "diffusion": "1"})",
      R"(not json)",
  };
  for (const char* cfg : variants) {
    try {
      SdeModel m = load_model(cfg);
      CHECK(m.dim >= 1);
    } catch (const ConfigError&) {
      CHECK(true);
    }
  }
}

TEST_CASE("load_model: loading twice gives structurally equal models") {
  SdeModel a = load_model(kQuadraticDriftQuinticNoise);
  SdeModel b = load_model(kQuadraticDriftQuinticNoise);
  CHECK(structurally_equal(a.drift[0], b.drift[0]));
  CHECK(structurally_equal(a.diffusion[0][0], b.diffusion[0][0]));
  CHECK(model_digest(a) == model_digest(b));
}

TEST_CASE("covariance_entry assembles sigma sigma^T on demand") {
  const char* planar = R"({
    "dim": 2,
    "drift": ["0", "0"],
    "diffusion": ["norm(x)^3", "norm(x)^3"],
    "domain": {"kind": "full_space"}
  })";
  SdeModel m = load_model(planar);
  EvalPoint p = m.point({3.0, 4.0});  // |x| = 5
  CHECK(eval(m.covariance_entry(0, 0), p) == doctest::Approx(std::pow(5.0, 6.0)));
  CHECK(eval(m.covariance_entry(0, 1), p) == doctest::Approx(0.0));
}

TEST_CASE("builtin_candidates: the named families") {
  SdeModel m3 = load_model(R"({
    "dim": 3,
    "drift": ["0","0","0"],
    "diffusion": ["norm(x)^2","norm(x)^2","norm(x)^2"],
    "domain": {"kind": "full_space"}
  })");
  auto cands = builtin_candidates(m3);

  auto find = [&](const std::string& name) -> const LyapunovCandidate* {
    for (const auto& c : cands)
      if (c.name == name) return &c;
    return nullptr;
  };

  const LyapunovCandidate* logsq = find("log_squared_norm");
  REQUIRE(logsq != nullptr);
  EvalPoint p = m3.point({1.0, 2.0, 2.0});  // |x|^2 = 9
  CHECK(eval(*logsq->v, p) == doctest::Approx(std::log(9.0)).epsilon(1e-14));

  const LyapunovCandidate* sq = find("squared_norm");
  REQUIRE(sq != nullptr);
  CHECK(sq->singular_radii.empty());
  CHECK(eval(*sq->v, p) == doctest::Approx(9.0));

  const LyapunovCandidate* shifted = find("shifted_log_reciprocal");
  REQUIRE(shifted != nullptr);
  EvalPoint q = m3.point({3.0, 0.0, 0.0});
  q.params.insert(shifted->params.begin(), shifted->params.end());
  CHECK(eval(*shifted->v, q) ==
        doctest::Approx(2.0 - 1.0 / std::sqrt(std::log(3.0))).epsilon(1e-12));
}

TEST_CASE("builtin_candidates: drift reciprocal integral for positive drift") {
  SdeModel m = load_model(kQuadraticDriftUnitNoise);
  auto cands = builtin_candidates(m);
  bool found = false;
  for (const auto& c : cands)
    if (c.kind == CandidateKind::DriftReciprocalIntegral) found = true;
  CHECK(found);

  // The realized function is V(x) = int_1^x 1/b = 1 - 1/x for b = y^2;
  // check the closed form against the quadrature oracle the engines use.
  for (double x : {1.5, 2.0, 6.0}) {
    double oracle = quad::integrate([](double y) { return std::pow(y, -2.0); }, 1.0, x, 1e-12);
    CHECK(oracle == doctest::Approx(1.0 - 1.0 / x).epsilon(1e-10));
  }

  // no such candidate when the drift changes sign
  SdeModel bm = load_model(R"({"dim": 1, "drift": "-x", "diffusion": "1"})");
  for (const auto& c : builtin_candidates(bm))
    CHECK(c.kind != CandidateKind::DriftReciprocalIntegral);
}
