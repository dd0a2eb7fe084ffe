#include "hotleg/flowgen.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace hotleg;
using namespace hotleg::flowgen;

TEST_CASE("scaled_geometry") {
  GeometryConfig g = scaled_geometry(0.7874, 31.5);
  REQUIRE(g.d_m == Catch::Approx(0.025).epsilon(1e-3));
  REQUIRE(scaled_geometry(1.0, 1.0).d_m == 1.0);
  REQUIRE(scaled_geometry(1.0, 4.0).d_m == 0.25);
  REQUIRE_THROWS_AS(scaled_geometry(-1.0, 4.0), std::invalid_argument);
  validate_scaling({31.5, 0.7874}, g.d_m);
  REQUIRE_THROWS_AS(validate_scaling({31.5, 0.7874}, 0.030), std::invalid_argument);
}

TEST_CASE("reynolds relations") {
  REQUIRE(reynolds_number(1.0, 1.0, 1.0) == 1.0);
  REQUIRE(reynolds_number(2.0, 1.0, 1.0) == 2.0 * reynolds_number(1.0, 1.0, 1.0));
  // model relation evaluated verbatim with d_m as printed in the config units
  REQUIRE(reynolds_model(1e6, 31.5, 25.0) == Catch::Approx(1.26e6));
  REQUIRE_THROWS_AS(reynolds_number(0.0, 1.0, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(reynolds_model(1e6, 31.5, 0.0), std::invalid_argument);
}

TEST_CASE("turbulence intensity correlation") {
  REQUIRE(turbulence_intensity(1e5) == Catch::Approx(0.03794).margin(2e-5));
  REQUIRE(turbulence_intensity(1.0) == Catch::Approx(0.16));
  REQUIRE(turbulence_intensity(1e4) > turbulence_intensity(1e6));
  REQUIRE_THROWS_AS(turbulence_intensity(0.0), std::invalid_argument);
}

TEST_CASE("generate_centerplane grid") {
  SECTION("full-scale factorization") {
    GeometryConfig g;
    g.n_s = 189;
    g.n_r = 60;
    REQUIRE(g.n_points() == 11340);
    Mat coords = generate_centerplane(g);
    REQUIRE(coords.rows() == 11340);
  }
  SECTION("desk default") {
    GeometryConfig g;
    REQUIRE(g.n_points() == 1260);
    Mat coords = generate_centerplane(g);
    REQUIRE(coords.rows() == 1260);
    REQUIRE((coords.col(2).array() == 0.0).all());
  }
  SECTION("points stay within the pipe bounding box") {
    GeometryConfig g;
    Mat coords = generate_centerplane(g);
    const double pad = g.d_m / 2.0;
    REQUIRE(coords.col(0).minCoeff() >= -pad);
    REQUIRE(coords.col(0).maxCoeff() <= g.path_length() + pad);
    REQUIRE(coords.col(1).minCoeff() >= -pad);
    REQUIRE(coords.col(1).maxCoeff() <=
            g.bend_radius() + g.outlet_run() + pad);  // loose geometric bound
  }
  SECTION("coordinates are unique rows") {
    GeometryConfig g;
    g.n_s = 20;
    g.n_r = 8;
    Mat coords = generate_centerplane(g);
    for (int a = 0; a < coords.rows(); ++a) {
      for (int b = a + 1; b < coords.rows(); ++b) {
        REQUIRE((coords.row(a) - coords.row(b)).norm() > 1e-9);
      }
    }
  }
}

TEST_CASE("generate_fields structure") {
  GeometryConfig geom;
  FluidConfig fluid;
  SurrogateCoeffs coeffs;
  const Mat lo = generate_fields(0.63, geom, fluid, coeffs);
  const Mat hi = generate_fields(0.83, geom, fluid, coeffs);

  SECTION("all three field magnitudes grow with inlet velocity at fixed nodes") {
    for (int node = 0; node < geom.n_points(); node += 7) {
      REQUIRE(std::abs(hi(0, node)) > std::abs(lo(0, node)));
      REQUIRE(hi(1, node) > lo(1, node));
      REQUIRE(hi(2, node) > lo(2, node));
    }
  }
  SECTION("bend pressure sign: outer wall above inner wall across the arc") {
    const double s_lo = geom.inlet_run();
    const double s_hi = geom.inlet_run() + geom.arc_length();
    for (int i = 0; i < geom.n_s; ++i) {
      const double s = (i + 0.5) * geom.path_length() / geom.n_s;
      if (s < s_lo || s > s_hi) continue;
      const Eigen::Index outer = static_cast<Eigen::Index>(i) * geom.n_r;  // w ~ -1
      const Eigen::Index inner = outer + geom.n_r - 1;                     // w ~ +1
      REQUIRE(hi(0, outer) > hi(0, inner));
    }
  }
  SECTION("TKE mean is larger downstream of the elbow than upstream") {
    const double bend_end = geom.inlet_run() + geom.arc_length();
    double pre = 0, post = 0;
    int n_pre = 0, n_post = 0;
    for (int i = 0; i < geom.n_s; ++i) {
      const double s = (i + 0.5) * geom.path_length() / geom.n_s;
      for (int j = 0; j < geom.n_r; ++j) {
        const double v = hi(2, static_cast<Eigen::Index>(i) * geom.n_r + j);
        if (s < geom.inlet_run()) {
          pre += v;
          ++n_pre;
        } else if (s > bend_end) {
          post += v;
          ++n_post;
        }
      }
    }
    REQUIRE(post / n_post > pre / n_pre);
  }
  SECTION("TKE is positive everywhere") {
    REQUIRE(lo.row(2).minCoeff() > 0.0);
    REQUIRE(hi.row(2).minCoeff() > 0.0);
  }
  SECTION("inlet TKE matches the intensity correlation to 1e-10") {
    for (double v : {0.63, 0.73, 0.83}) {
      const Mat f = generate_fields(v, geom, fluid, coeffs);
      const double re = reynolds_number(v, geom.d_m, fluid.kinematic_viscosity);
      const double expect = turbulence_intensity(re);
      // first axial station, all transverse nodes
      for (int j = 0; j < geom.n_r; ++j) {
        const double k = f(2, j);
        const double implied = std::sqrt(2.0 * k / 3.0) / v;
        REQUIRE(std::abs(implied - expect) < 1e-10);
      }
    }
  }
  SECTION("chord-average of the unskewed profile recovers v_in within 0.5%") {
    SurrogateCoeffs no_skew = coeffs;
    no_skew.velocity_skew = 0.0;
    const double v = 0.7;
    const Mat f = generate_fields(v, geom, fluid, no_skew);
    // any station works; use one upstream of the bend
    double mean = 0;
    for (int j = 0; j < geom.n_r; ++j) mean += f(1, 2 * geom.n_r + j);
    mean /= geom.n_r;
    REQUIRE(mean == Catch::Approx(v).epsilon(0.005));
  }
}

TEST_CASE("generate_dataset determinism and shapes") {
  GeometryConfig geom;
  geom.n_s = 10;
  geom.n_r = 6;
  auto a = generate_dataset(25, {}, geom, {}, {}, 42);
  REQUIRE(a.n_scenarios() == 25);
  REQUIRE(a.n_points() == 60);
  REQUIRE(a.inputs.minCoeff() >= 0.63);
  REQUIRE(a.inputs.maxCoeff() <= 0.83);
  auto b = generate_dataset(25, {}, geom, {}, {}, 42);
  REQUIRE(a.inputs == b.inputs);
  REQUIRE(a.fields == b.fields);  // bitwise
  auto c = generate_dataset(25, {}, geom, {}, {}, 43);
  REQUIRE(a.inputs != c.inputs);

  REQUIRE_THROWS_AS(generate_dataset(0, {}, geom, {}, {}, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(generate_dataset(5, {0.8, 0.8}, geom, {}, {}, 1),
                    std::invalid_argument);
}

TEST_CASE("seeded noise is opt-in and deterministic") {
  GeometryConfig geom;
  geom.n_s = 8;
  geom.n_r = 4;
  SurrogateCoeffs noisy;
  noisy.noise_amplitude = 0.01;
  auto a = generate_dataset(5, {}, geom, {}, noisy, 7);
  auto b = generate_dataset(5, {}, geom, {}, noisy, 7);
  REQUIRE(a.fields == b.fields);
  SurrogateCoeffs clean;
  auto c = generate_dataset(5, {}, geom, {}, clean, 7);
  REQUIRE(a.fields != c.fields);
}

TEST_CASE("calibrate_coefficients") {
  SECTION("default targets are achieved; pressure min lands near the reference") {
    auto report = calibrate_coefficients({});
    REQUIRE(report.ok);
    // oracle: exhaustive scan over the generated plane at the range endpoints
    REQUIRE(report.achieved_pressure.min >= -242.8);
    REQUIRE(report.achieved_pressure.min <= -219.7);
    REQUIRE(report.achieved_pressure.max ==
            Catch::Approx(132.7).margin(0.05 * (132.7 + 231.25)));
    REQUIRE(report.achieved_tke.min ==
            Catch::Approx(0.000875).margin(0.05 * (0.019015 - 0.000875)));
    REQUIRE(report.achieved_tke.max ==
            Catch::Approx(0.019015).margin(0.05 * (0.019015 - 0.000875)));
  }
  SECTION("already-met targets return the coefficients unchanged") {
    auto report = calibrate_coefficients({});
    REQUIRE(report.ok);
    auto again = calibrate_coefficients({}, {}, {}, {}, report.coeffs);
    REQUIRE(again.coeffs.friction == report.coeffs.friction);
    REQUIRE(again.coeffs.bend_pressure == report.coeffs.bend_pressure);
    REQUIRE(again.coeffs.tke_amplification == report.coeffs.tke_amplification);
  }
  SECTION("inverted targets are rejected") {
    CalibrationTargets bad;
    bad.pressure = {132.7, -231.25};
    REQUIRE_THROWS_AS(calibrate_coefficients(bad), std::invalid_argument);
  }
  SECTION("an off-default pressure target is reachable by search") {
    CalibrationTargets t;
    t.pressure = {-120.0, 68.8};  // same span ratio, smaller magnitude
    t.tke = {0.000875, 0.0500};
    SurrogateCoeffs base;
    auto report = calibrate_coefficients(t, {}, {}, {}, base);
    REQUIRE(report.ok);
    REQUIRE(report.achieved_pressure.max == Catch::Approx(68.8).margin(0.05 * 188.8));
    REQUIRE(report.achieved_tke.max == Catch::Approx(0.05).margin(0.05 * 0.05));
  }
  SECTION("unreachable TKE floor produces a failure report") {
    CalibrationTargets t;
    t.tke = {0.5, 0.9};  // k_min is set by the fluid, cannot reach 0.5
    auto report = calibrate_coefficients(t);
    REQUIRE_FALSE(report.ok);
    REQUIRE(report.message.find("failure") != std::string::npos);
  }
}
