#include "hotleg/runconfig.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace hotleg;

TEST_CASE("run config accepts known sections and keys") {
  const char* text = R"({
    "geometry": {"n_s": 12, "n_r": 6},
    "fluid": {"density": 700.0},
    "train": {"epochs": 10, "learning_rate": 0.001},
    "dataset": {"scenarios": 100, "train_fraction": 0.8}
  })";
  auto cfg = runconfig::parse(text);
  REQUIRE(runconfig::get(cfg, "train", "epochs", 0) == 10);
  REQUIRE(runconfig::get(cfg, "train", "batch_size", 16) == 16);  // default
  auto geom = runconfig::geometry(cfg);
  REQUIRE(geom.n_s == 12);
  REQUIRE(geom.n_r == 6);
  REQUIRE(geom.d_m == 0.025);  // untouched default
  REQUIRE(runconfig::fluid(cfg).density == 700.0);
}

TEST_CASE("run config rejects unknown sections and keys") {
  REQUIRE_THROWS_AS(runconfig::parse(R"({"geomtry": {}})"), config_error);
  REQUIRE_THROWS_AS(runconfig::parse(R"({"train": {"epochz": 3}})"), config_error);
  REQUIRE_THROWS_AS(runconfig::parse(R"({"train": 7})"), config_error);
  REQUIRE_THROWS_AS(runconfig::parse(R"([1,2,3])"), config_error);
}

TEST_CASE("run config round-trips surrogate coefficients") {
  flowgen::SurrogateCoeffs defaults;
  auto j = runconfig::coeffs_json(defaults);
  ordered_json cfg;
  cfg["surrogate"] = j;
  runconfig::validate(cfg);
  auto back = runconfig::surrogate(cfg);
  REQUIRE(back.friction == defaults.friction);
  REQUIRE(back.tke_amplification == defaults.tke_amplification);
  REQUIRE(back.noise_amplitude == defaults.noise_amplitude);
}
