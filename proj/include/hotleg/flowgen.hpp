#pragma once

// Analytic center-plane elbow-flow generator. Produces pressure, velocity and
// turbulence-kinetic-energy fields on a structured grid along a scaled hot-leg
// pipe (straight inlet run, elbow arc, straight outlet run) so the training
// pipeline runs without an external CFD package. Field shapes follow the
// classic picture: 1/7-power velocity profile with a bend skew, linear
// streamwise friction loss with a cross-stream bend gradient (outer wall
// high), and TKE amplification downstream of the elbow near the inner wall.

#include "hotleg/common.hpp"
#include "hotleg/dataset.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace hotleg::flowgen {

// ---------------------------------------------------------------------------
// Configuration

struct GeometryConfig {
  double d_m = 0.025;          // pipe diameter, m
  double flow_length = 0.150;  // straight inlet run, m
  double elbow_angle_deg = 120.0;
  int n_s = 63;  // axial stations
  int n_r = 20;  // transverse stations (N = n_s * n_r)

  double turn_angle_rad() const {
    return (180.0 - elbow_angle_deg) * std::numbers::pi / 180.0;
  }
  double bend_radius() const { return 2.0 * d_m; }
  double arc_length() const { return bend_radius() * turn_angle_rad(); }
  double inlet_run() const { return flow_length; }
  // Outlet run sized so the default friction drop spans the intended
  // gauge-pressure window (positive peak at the inlet, strongest suction at
  // the outlet, zero crossing at the bend entrance).
  double outlet_run() const {
    return kPressureSpanRatio * flow_length - arc_length();
  }
  double path_length() const { return inlet_run() + arc_length() + outlet_run(); }
  int n_points() const { return n_s * n_r; }

  static constexpr double kPressureSpanRatio = 231.25 / 132.7;
};

inline void validate_geometry(const GeometryConfig& g) {
  if (g.d_m <= 0.0 || g.flow_length <= 0.0) {
    throw std::invalid_argument("geometry: lengths must be positive");
  }
  if (!(g.elbow_angle_deg > 0.0 && g.elbow_angle_deg < 180.0)) {
    throw std::invalid_argument("geometry: elbow angle must be in (0, 180) degrees");
  }
  if (g.n_s < 1 || g.n_r < 1) {
    throw std::invalid_argument("geometry: station counts must be >= 1");
  }
  if (g.outlet_run() <= 0.0) {
    throw std::invalid_argument("geometry: derived outlet run is non-positive");
  }
}

struct ScalingRelation {
  double lambda = 31.5;  // geometric scale factor
  double d_a = 0.7874;   // actual-plant pipe diameter, m
};

/// lambda must equal d_a / d_m within 0.1%.
inline void validate_scaling(const ScalingRelation& s, double d_m) {
  if (s.lambda <= 0.0 || s.d_a <= 0.0 || d_m <= 0.0) {
    throw std::invalid_argument("scaling: values must be positive");
  }
  if (std::abs(s.d_a / d_m - s.lambda) > 1e-3 * s.lambda) {
    throw std::invalid_argument("scaling: lambda inconsistent with d_a/d_m");
  }
}

struct FluidConfig {
  // Representative values for high-temperature pressurized water; they are
  // configuration, not measured properties.
  double density = 704.0;                 // kg/m^3
  double kinematic_viscosity = 1.712e-7;  // m^2/s
  double inlet_temperature_k = 594.3;     // recorded metadata only
};

inline void validate_fluid(const FluidConfig& f) {
  if (f.density <= 0.0 || f.kinematic_viscosity <= 0.0) {
    throw std::invalid_argument("fluid: density and viscosity must be positive");
  }
}

struct SurrogateCoeffs {
  double friction = 0.0932;        // C_f, streamwise loss coefficient
  double bend_pressure = 0.30;     // K_b, cross-stream bend gradient
  double velocity_skew = 0.25;     // alpha, bend skew of the velocity profile
  double tke_amplification = 10.8; // A_k, downstream TKE gain
  double bump_width = 0.04;        // sigma, streamwise extent of bend effects, m
  std::uint64_t seed = 0;
  double noise_amplitude = 0.0;    // optional multiplicative noise, off by default
};

inline void validate_coeffs(const SurrogateCoeffs& c) {
  for (double v : {c.friction, c.bend_pressure, c.velocity_skew,
                   c.tke_amplification, c.bump_width}) {
    if (!std::isfinite(v)) throw std::invalid_argument("coeffs: non-finite value");
  }
  if (c.noise_amplitude < 0.0) {
    throw std::invalid_argument("coeffs: noise amplitude must be >= 0");
  }
}

// ---------------------------------------------------------------------------
// Scaling relations and inlet turbulence

inline GeometryConfig scaled_geometry(double d_a, double lambda) {
  if (d_a <= 0.0 || lambda <= 0.0) {
    throw std::invalid_argument("scaled_geometry: inputs must be positive");
  }
  GeometryConfig g;
  g.d_m = d_a / lambda;
  return g;
}

inline double reynolds_number(double v, double d, double nu) {
  if (v <= 0.0 || d <= 0.0 || nu <= 0.0) {
    throw std::invalid_argument("reynolds_number: inputs must be positive");
  }
  return v * d / nu;
}

/// Model-scale Reynolds relation evaluated verbatim: Re_m = Re_a * lambda / d_m.
/// d_m is taken in whatever unit the caller's configuration records (the
/// relation is not dimensionless; see README).
inline double reynolds_model(double re_actual, double lambda, double d_m_value) {
  if (re_actual <= 0.0 || lambda <= 0.0 || d_m_value <= 0.0) {
    throw std::invalid_argument("reynolds_model: inputs must be positive");
  }
  return re_actual * lambda / d_m_value;
}

/// Inlet turbulence intensity, I = 0.16 / Re^(1/8).
inline double turbulence_intensity(double re) {
  if (re <= 0.0) {
    throw std::invalid_argument("turbulence_intensity: Re must be positive");
  }
  return 0.16 * std::pow(re, -1.0 / 8.0);
}

/// Inlet TKE from the intensity definition I = sqrt(2k/3) / U_avg.
inline double inlet_tke(double v_in, const GeometryConfig& geom,
                        const FluidConfig& fluid) {
  const double re = reynolds_number(v_in, geom.d_m, fluid.kinematic_viscosity);
  const double intensity = turbulence_intensity(re);
  return 1.5 * (intensity * v_in) * (intensity * v_in);
}

// ---------------------------------------------------------------------------
// Grid

namespace detail {

struct PathPoint {
  double x, y;    // centerline position
  double nx, ny;  // left normal (unit); +r points toward the bend center
};

inline PathPoint path_at(const GeometryConfig& g, double s) {
  const double l1 = g.inlet_run();
  const double arc = g.arc_length();
  const double rb = g.bend_radius();
  if (s <= l1) {
    return {s, 0.0, 0.0, 1.0};
  }
  if (s <= l1 + arc) {
    const double phi = (s - l1) / rb;
    return {l1 + rb * std::sin(phi), rb * (1.0 - std::cos(phi)),
            -std::sin(phi), std::cos(phi)};
  }
  const double phi = g.turn_angle_rad();
  const double ex = l1 + rb * std::sin(phi);
  const double ey = rb * (1.0 - std::cos(phi));
  const double t = s - l1 - arc;
  return {ex + t * std::cos(phi), ey + t * std::sin(phi),
          -std::sin(phi), std::cos(phi)};
}

inline double station_s(const GeometryConfig& g, int i) {
  return (i + 0.5) * g.path_length() / g.n_s;
}

/// Normalized transverse position in (-1, 1); stations are cell-centered so
/// no node sits exactly on a wall.
inline double station_w(const GeometryConfig& g, int j) {
  return -1.0 + (2.0 * j + 1.0) / g.n_r;
}

inline double bend_mid_s(const GeometryConfig& g) {
  return g.inlet_run() + 0.5 * g.arc_length();
}
inline double bend_end_s(const GeometryConfig& g) {
  return g.inlet_run() + g.arc_length();
}

/// Streamwise bend bump, peak 1 at mid-arc.
inline double bend_bump(const GeometryConfig& g, const SurrogateCoeffs& c, double s) {
  const double d = s - bend_mid_s(g);
  return std::exp(-d * d / (2.0 * c.bump_width * c.bump_width));
}

/// Downstream TKE bump, >= 0, peaking past the bend toward the inner wall.
inline double tke_bump(const GeometryConfig& g, const SurrogateCoeffs& c, double s,
                       double w) {
  const double sk = bend_end_s(g) + 1.5 * c.bump_width;
  const double sig = 0.75 * c.bump_width;
  const double ds = s - sk;
  const double axial = std::exp(-ds * ds / (2.0 * sig * sig));
  const double transverse = 0.25 * (1.0 + w) * (1.0 + w);
  return axial * transverse;
}

}  // namespace detail

/// Structured s-major point grid on the symmetry plane (z = 0): node
/// (i, j) -> row i * n_r + j.
inline Mat generate_centerplane(const GeometryConfig& geom) {
  validate_geometry(geom);
  Mat coords(geom.n_points(), 3);
  const double half = 0.5 * geom.d_m;
  for (int i = 0; i < geom.n_s; ++i) {
    const double s = detail::station_s(geom, i);
    const auto p = detail::path_at(geom, s);
    for (int j = 0; j < geom.n_r; ++j) {
      const double r = half * detail::station_w(geom, j);
      const Eigen::Index row = static_cast<Eigen::Index>(i) * geom.n_r + j;
      coords(row, 0) = p.x + r * p.nx;
      coords(row, 1) = p.y + r * p.ny;
      coords(row, 2) = 0.0;
    }
  }
  return coords;
}

// ---------------------------------------------------------------------------
// Fields
//
// With w = 2r/d in (-1, 1), q = rho v^2 / 2, g(s) the bend bump and
// L the inlet-run length:
//   V_o = v * (8/7) (1-|w|)^{1/7} (1 + alpha sqrt(v/v_ref) g(s) w)
//   P   = q [ C_f (L - s)/d  -  K_b g(s) w ]
//   k   = k_inlet(v) [ 1 + A_k (v/v_ref)^{3/2} h(s, w) ]
// The sqrt(v/v_ref) and (v/v_ref)^{3/2} trend factors tie the bend-feature
// strength to the flow rate, so the three channels respond to the inlet
// condition with different functional complexity.

inline constexpr double kReferenceVelocity = 0.73;

/// One scenario's fields (3 x N, rows P, V_o, k) for inlet velocity v_in.
inline Mat generate_fields(double v_in, const GeometryConfig& geom,
                           const FluidConfig& fluid, const SurrogateCoeffs& coeffs) {
  validate_geometry(geom);
  validate_fluid(fluid);
  validate_coeffs(coeffs);
  if (v_in <= 0.0) {
    throw std::invalid_argument("generate_fields: inlet velocity must be positive");
  }
  const double q = 0.5 * fluid.density * v_in * v_in;
  const double k_in = inlet_tke(v_in, geom, fluid);
  const double vel_trend = std::sqrt(v_in / kReferenceVelocity);
  const double tke_trend = std::pow(v_in / kReferenceVelocity, 1.5);
  const double inlet_len = geom.inlet_run();
  Mat fields(kNumParams, geom.n_points());
  for (int i = 0; i < geom.n_s; ++i) {
    const double s = detail::station_s(geom, i);
    const double g = detail::bend_bump(geom, coeffs, s);
    for (int j = 0; j < geom.n_r; ++j) {
      const double w = detail::station_w(geom, j);
      const Eigen::Index node = static_cast<Eigen::Index>(i) * geom.n_r + j;
      const double profile = std::pow(1.0 - std::abs(w), 1.0 / 7.0);
      fields(1, node) = v_in * (8.0 / 7.0) * profile *
                        (1.0 + coeffs.velocity_skew * vel_trend * g * w);
      fields(0, node) = q * (coeffs.friction * (inlet_len - s) / geom.d_m -
                             coeffs.bend_pressure * g * w);
      fields(2, node) = k_in * (1.0 + coeffs.tke_amplification * tke_trend *
                                          detail::tke_bump(geom, coeffs, s, w));
    }
  }
  return fields;
}

struct VelocityRange {
  double lo = 0.63;
  double hi = 0.83;
};

/// M scenarios with seeded uniform inlet velocities; provenance recorded in
/// the dataset manifest.
inline ScenarioDataset generate_dataset(int n_scenarios, const VelocityRange& v_range,
                                        const GeometryConfig& geom,
                                        const FluidConfig& fluid,
                                        const SurrogateCoeffs& coeffs,
                                        std::uint64_t seed) {
  if (n_scenarios < 1) {
    throw std::invalid_argument("generate_dataset: need at least one scenario");
  }
  if (!(v_range.hi > v_range.lo)) {
    throw std::invalid_argument("generate_dataset: empty velocity range");
  }
  validate_geometry(geom);
  ScenarioDataset ds;
  ds.coords = generate_centerplane(geom);
  ds.inputs.resize(n_scenarios, 1);
  ds.fields.resize(n_scenarios, static_cast<Eigen::Index>(kNumParams) * geom.n_points());
  Rng rng(seed);
  Rng noise_rng(derive_seed(seed, 0x401ce));
  for (int s = 0; s < n_scenarios; ++s) {
    const double v = rng.uniform(v_range.lo, v_range.hi);
    ds.inputs(s, 0) = v;
    Mat f = generate_fields(v, geom, fluid, coeffs);
    if (coeffs.noise_amplitude > 0.0) {
      for (Eigen::Index idx = 0; idx < f.size(); ++idx) {
        f.data()[idx] *= 1.0 + coeffs.noise_amplitude * (2.0 * noise_rng.uniform() - 1.0);
      }
    }
    for (int k = 0; k < kNumParams; ++k) {
      ds.fields.row(s).segment(static_cast<Eigen::Index>(k) * geom.n_points(),
                               geom.n_points()) = f.row(k);
    }
  }
  ds.meta["generator"] = {
      {"seed", seed},
      {"velocity_range", {v_range.lo, v_range.hi}},
      {"geometry",
       {{"d_m", geom.d_m},
        {"flow_length", geom.flow_length},
        {"elbow_angle_deg", geom.elbow_angle_deg},
        {"n_s", geom.n_s},
        {"n_r", geom.n_r}}},
      {"fluid",
       {{"density", fluid.density},
        {"kinematic_viscosity", fluid.kinematic_viscosity},
        {"inlet_temperature_k", fluid.inlet_temperature_k}}},
      {"coeffs",
       {{"friction", coeffs.friction},
        {"bend_pressure", coeffs.bend_pressure},
        {"velocity_skew", coeffs.velocity_skew},
        {"tke_amplification", coeffs.tke_amplification},
        {"bump_width", coeffs.bump_width},
        {"noise_amplitude", coeffs.noise_amplitude}}},
  };
  return ds;
}

// ---------------------------------------------------------------------------
// Coefficient calibration

struct ChannelRange {
  double min, max;
};

struct CalibrationTargets {
  ChannelRange pressure{-231.25, 132.7};
  ChannelRange tke{0.000875, 0.019015};
};

struct CalibrationReport {
  bool ok = false;
  SurrogateCoeffs coeffs;
  ChannelRange achieved_pressure{0, 0};
  ChannelRange achieved_tke{0, 0};
  std::string message;
};

namespace detail {

struct Extremes {
  double p_min, p_max, k_min, k_max;
};

/// Exhaustive min/max scan at the velocity-range endpoints (every field is
/// monotone in v at fixed location, so dataset extremes occur there).
inline Extremes scan_extremes(const GeometryConfig& geom, const FluidConfig& fluid,
                              const SurrogateCoeffs& coeffs, const VelocityRange& vr) {
  Extremes e{std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity(),
             std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity()};
  for (double v : {vr.lo, vr.hi}) {
    const Mat f = generate_fields(v, geom, fluid, coeffs);
    e.p_min = std::min(e.p_min, f.row(0).minCoeff());
    e.p_max = std::max(e.p_max, f.row(0).maxCoeff());
    e.k_min = std::min(e.k_min, f.row(2).minCoeff());
    e.k_max = std::max(e.k_max, f.row(2).maxCoeff());
  }
  return e;
}

/// Coarse log-spaced grid to bracket a sign change of `f`, then bisection.
/// Multi-branch objectives can cross zero more than once; the last bracket
/// (largest argument) sits on the asymptotically increasing branch, which is
/// the one the physical coefficients live on. Falls back to argmin |f| when
/// no bracket exists.
template <typename F>
double grid_bisect(F&& f, double lo, double hi, int grid_points, int bisect_iters) {
  double best_x = lo;
  double best_abs = std::abs(f(lo));
  double prev_x = lo, prev_f = f(lo);
  double bracket_lo = 0, bracket_hi = 0;
  bool bracketed = false;
  for (int i = 1; i < grid_points; ++i) {
    const double x = lo * std::pow(hi / lo, static_cast<double>(i) / (grid_points - 1));
    const double fx = f(x);
    if (std::abs(fx) < best_abs) {
      best_abs = std::abs(fx);
      best_x = x;
    }
    if (prev_f * fx <= 0.0 && prev_f != fx) {
      bracket_lo = prev_x;
      bracket_hi = x;
      bracketed = true;  // keep the last sign change
    }
    prev_x = x;
    prev_f = fx;
  }
  if (!bracketed) return best_x;
  double flo = f(bracket_lo);
  for (int it = 0; it < bisect_iters; ++it) {
    const double mid = 0.5 * (bracket_lo + bracket_hi);
    const double fm = f(mid);
    if (std::abs(fm) < best_abs) {
      best_abs = std::abs(fm);
      best_x = mid;
    }
    if (flo * fm <= 0.0) {
      bracket_hi = mid;
    } else {
      bracket_lo = mid;
      flo = fm;
    }
  }
  return best_x;
}

}  // namespace detail

/// Deterministic search over C_f, K_b and A_k so the generated extremes match
/// the target ranges within 5% of each channel's span. Already-satisfied
/// targets leave the corresponding coefficients unchanged.
inline CalibrationReport calibrate_coefficients(
    const CalibrationTargets& targets, const GeometryConfig& geom = {},
    const FluidConfig& fluid = {}, const VelocityRange& v_range = {},
    const SurrogateCoeffs& base = {}) {
  if (!(targets.pressure.min < targets.pressure.max) ||
      !(targets.tke.min < targets.tke.max)) {
    throw std::invalid_argument("calibrate_coefficients: target min must be < max");
  }
  const double p_tol = 0.05 * (targets.pressure.max - targets.pressure.min);
  const double k_tol = 0.05 * (targets.tke.max - targets.tke.min);

  CalibrationReport report;
  SurrogateCoeffs c = base;
  auto fill_achieved = [&](const detail::Extremes& e) {
    report.achieved_pressure = {e.p_min, e.p_max};
    report.achieved_tke = {e.k_min, e.k_max};
  };
  auto within = [&](const detail::Extremes& e) {
    return std::abs(e.p_min - targets.pressure.min) <= p_tol &&
           std::abs(e.p_max - targets.pressure.max) <= p_tol &&
           std::abs(e.k_min - targets.tke.min) <= k_tol &&
           std::abs(e.k_max - targets.tke.max) <= k_tol;
  };

  const auto initial = detail::scan_extremes(geom, fluid, base, v_range);
  if (within(initial)) {
    report.ok = true;
    report.coeffs = base;
    fill_achieved(initial);
    report.message = "targets already met; coefficients unchanged";
    return report;
  }

  c.friction = detail::grid_bisect(
      [&](double cf) {
        SurrogateCoeffs t = c;
        t.friction = cf;
        return detail::scan_extremes(geom, fluid, t, v_range).p_max -
               targets.pressure.max;
      },
      1e-4, 2.0, 40, 60);

  {
    const auto e = detail::scan_extremes(geom, fluid, c, v_range);
    if (std::abs(e.p_min - targets.pressure.min) > p_tol) {
      c.bend_pressure = detail::grid_bisect(
          [&](double kb) {
            SurrogateCoeffs t = c;
            t.bend_pressure = kb;
            return detail::scan_extremes(geom, fluid, t, v_range).p_min -
                   targets.pressure.min;
          },
          1e-3, 5.0, 40, 60);
    }
  }

  c.tke_amplification = detail::grid_bisect(
      [&](double ak) {
        SurrogateCoeffs t = c;
        t.tke_amplification = ak;
        return detail::scan_extremes(geom, fluid, t, v_range).k_max - targets.tke.max;
      },
      1e-2, 1e3, 40, 60);

  const auto achieved = detail::scan_extremes(geom, fluid, c, v_range);
  report.coeffs = c;
  fill_achieved(achieved);
  report.ok = within(achieved);
  report.message = report.ok
                       ? "calibrated"
                       : "calibration failure: achieved ranges miss targets "
                         "(k_min is set by the fluid model, not the coefficients)";
  return report;
}

}  // namespace hotleg::flowgen
