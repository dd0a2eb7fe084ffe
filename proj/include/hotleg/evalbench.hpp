#pragma once

// Metrics (MSE / MAE / Relative L2 per parameter), per-scenario aggregation,
// model evaluation on a held-out split, single-scenario inference timing, and
// CSV/SVG artifact export.

#include "hotleg/common.hpp"
#include "hotleg/dataset.hpp"
#include "hotleg/deeponet.hpp"
#include "hotleg/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace hotleg::evalbench {

struct ParamMetrics {
  double mse = 0.0;
  double mae = 0.0;
  double rel_l2 = 0.0;
};

struct ScenarioMetrics {
  std::array<ParamMetrics, 3> params;
};

/// Per-parameter metrics over the N nodes of one scenario. `truth` and
/// `prediction` are 3 x N in the fixed [P, V_o, k] order.
inline ScenarioMetrics scenario_metrics(const Mat& truth, const Mat& prediction) {
  if (truth.rows() != kNumParams || truth.rows() != prediction.rows() ||
      truth.cols() != prediction.cols()) {
    throw shape_error("scenario_metrics: truth/prediction shapes disagree");
  }
  const auto n = static_cast<double>(truth.cols());
  ScenarioMetrics m;
  for (int k = 0; k < kNumParams; ++k) {
    const auto err = prediction.row(k) - truth.row(k);
    m.params[k].mse = err.squaredNorm() / n;
    m.params[k].mae = err.cwiseAbs().sum() / n;
    const double truth_norm = truth.row(k).norm();
    if (truth_norm == 0.0) {
      throw std::invalid_argument(
          std::string("scenario_metrics: relative L2 undefined for zero-norm "
                      "truth in parameter ") +
          kParamNames[k]);
    }
    m.params[k].rel_l2 = err.norm() / truth_norm;
  }
  return m;
}

struct MetricStats {
  double average = 0.0;
  double stddev = 0.0;
  double max = 0.0;
};

struct MetricsReport {
  std::array<MetricStats, 3> mse;
  std::array<MetricStats, 3> mae;
  std::array<MetricStats, 3> rel_l2;
  int scenario_count = 0;
  std::string space = "scaled";
};

/// Arithmetic mean, population standard deviation, and maximum per
/// (parameter, metric).
inline MetricsReport aggregate_metrics(const std::vector<ScenarioMetrics>& all) {
  if (all.empty()) {
    throw std::invalid_argument("aggregate_metrics: empty metric list");
  }
  MetricsReport report;
  report.scenario_count = static_cast<int>(all.size());
  const double m = static_cast<double>(all.size());
  for (int k = 0; k < kNumParams; ++k) {
    auto stats_for = [&](auto pick) {
      MetricStats s;
      double sum = 0.0;
      s.max = -std::numeric_limits<double>::infinity();
      for (const auto& sc : all) {
        const double v = pick(sc.params[k]);
        sum += v;
        s.max = std::max(s.max, v);
      }
      s.average = sum / m;
      double sq = 0.0;
      for (const auto& sc : all) {
        const double d = pick(sc.params[k]) - s.average;
        sq += d * d;
      }
      s.stddev = std::sqrt(sq / m);
      return s;
    };
    report.mse[k] = stats_for([](const ParamMetrics& p) { return p.mse; });
    report.mae[k] = stats_for([](const ParamMetrics& p) { return p.mae; });
    report.rel_l2[k] = stats_for([](const ParamMetrics& p) { return p.rel_l2; });
  }
  return report;
}

inline ordered_json report_to_json(const MetricsReport& r) {
  ordered_json j;
  j["space"] = r.space;
  j["scenario_count"] = r.scenario_count;
  for (int k = 0; k < kNumParams; ++k) {
    ordered_json p;
    auto put = [](const MetricStats& s) {
      return ordered_json{
          {"average", s.average}, {"std", s.stddev}, {"max", s.max}};
    };
    p["mse"] = put(r.mse[k]);
    p["mae"] = put(r.mae[k]);
    p["rel_l2"] = put(r.rel_l2[k]);
    j["parameters"][kParamNames[k]] = p;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Model evaluation

struct EvalResult {
  MetricsReport report;
  std::vector<ScenarioMetrics> per_scenario;
  std::vector<int> scenario_ids;  // dataset indices, aligned with per_scenario
  Mat predictions;                // |test| x 3N, in the evaluation space
  Mat truths;                     // |test| x 3N
};

/// Runs inference per test scenario and aggregates metrics. Metrics are
/// computed in scaled space by default (matching how the model is fitted);
/// physical space is available behind the flag.
inline EvalResult evaluate_model(const DeepOnetModel& model,
                                 const ScenarioDataset& ds,
                                 const std::vector<int>& test_idx,
                                 Space space = Space::scaled, int batch_size = 32) {
  if (!model.scaler.fitted) {
    throw config_error("evaluate_model: model has no fitted scaler");
  }
  if (ds.n_points() != model.config.n_points) {
    throw shape_error("evaluate_model: dataset node count does not match model");
  }
  if (test_idx.empty()) {
    throw std::invalid_argument("evaluate_model: empty test set");
  }
  const auto tensors = training::prepare_scaled(ds, model.scaler);
  const int n = ds.n_points();
  EvalResult result;
  result.scenario_ids = test_idx;
  result.predictions.resize(test_idx.size(), 3 * static_cast<Eigen::Index>(n));
  result.truths.resize(test_idx.size(), 3 * static_cast<Eigen::Index>(n));
  for (int begin = 0; begin < static_cast<int>(test_idx.size()); begin += batch_size) {
    const int end = std::min<int>(begin + batch_size, static_cast<int>(test_idx.size()));
    Mat u(end - begin, tensors.inputs.cols());
    for (int i = begin; i < end; ++i) u.row(i - begin) = tensors.inputs.row(test_idx[i]);
    const Mat out =
        deeponet_forward(model, u, tensors.coords_scaled, RunMode::inference);
    for (int i = begin; i < end; ++i) {
      result.predictions.row(i) = out.row(i - begin);
      result.truths.row(i) = tensors.targets.row(test_idx[i]);
    }
  }
  if (space == Space::physical) {
    for (Eigen::Index r = 0; r < result.predictions.rows(); ++r) {
      for (int k = 0; k < kNumParams; ++k) {
        for (int i = 0; i < n; ++i) {
          const Eigen::Index c = static_cast<Eigen::Index>(k) * n + i;
          result.predictions(r, c) = model.scaler.field[k].invert(result.predictions(r, c));
          result.truths(r, c) = model.scaler.field[k].invert(result.truths(r, c));
        }
      }
    }
  }
  for (Eigen::Index r = 0; r < result.predictions.rows(); ++r) {
    Mat truth(kNumParams, n), pred(kNumParams, n);
    for (int k = 0; k < kNumParams; ++k) {
      truth.row(k) = result.truths.row(r).segment(static_cast<Eigen::Index>(k) * n, n);
      pred.row(k) = result.predictions.row(r).segment(static_cast<Eigen::Index>(k) * n, n);
    }
    result.per_scenario.push_back(scenario_metrics(truth, pred));
  }
  result.report = aggregate_metrics(result.per_scenario);
  result.report.space = space == Space::scaled ? "scaled" : "physical";
  return result;
}

// ---------------------------------------------------------------------------
// Inference timing

struct TimingReport {
  std::vector<double> seconds;  // per repetition
  double median = 0.0;
  double mean = 0.0;
  std::string cpu;
  int threads = 1;
};

/// Wall-clock time of the full prediction path (scale input, forward,
/// unscale output) for one scenario. Timing repetitions run sequentially.
inline TimingReport time_inference(const DeepOnetModel& model, double v_in,
                                   int repetitions = 10, int warmup = 3) {
  if (repetitions < 1) {
    throw std::invalid_argument("time_inference: repetitions must be >= 1");
  }
  if (warmup < 0) warmup = 0;
  for (int i = 0; i < warmup; ++i) {
    (void)predict_fields(model, v_in, Space::physical);
  }
  TimingReport report;
  report.seconds.reserve(repetitions);
  for (int i = 0; i < repetitions; ++i) {
    const auto pred = predict_fields(model, v_in, Space::physical);
    report.seconds.push_back(pred.seconds);
  }
  std::vector<double> sorted = report.seconds;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t h = sorted.size() / 2;
  report.median = sorted.size() % 2 == 1 ? sorted[h]
                                         : 0.5 * (sorted[h - 1] + sorted[h]);
  double sum = 0.0;
  for (double s : sorted) sum += s;
  report.mean = sum / sorted.size();
  report.cpu = cpu_model();
  report.threads = ThreadPool::instance().workers();
  return report;
}

inline ordered_json timing_to_json(const TimingReport& t, double fvm_seconds = 200.0) {
  ordered_json j;
  j["median_s"] = t.median;
  j["mean_s"] = t.mean;
  j["repetitions"] = t.seconds.size();
  j["samples_s"] = t.seconds;
  j["environment"] = {{"cpu", t.cpu}, {"threads", t.threads}};
  j["fvm_baseline_s"] = fvm_seconds;
  j["fvm_baseline_note"] =
      "configured reference solve time; the solver itself is not run here";
  j["speedup_vs_fvm"] = fvm_seconds / t.median;
  return j;
}

// ---------------------------------------------------------------------------
// Artifact export (CSV tables + SVG heatmaps)

namespace detail {

inline std::array<std::array<int, 3>, 8> viridis_stops() {
  // 8-stop viridis-like ramp, interpolated linearly in RGB
  return {{{68, 1, 84},
           {70, 50, 126},
           {54, 92, 141},
           {39, 127, 142},
           {31, 161, 135},
           {74, 193, 109},
           {160, 218, 57},
           {253, 231, 37}}};
}

inline std::string color_at(double t) {
  const auto stops = viridis_stops();
  t = std::clamp(t, 0.0, 1.0);
  const double x = t * 7.0;
  const int lo = std::min(6, static_cast<int>(x));
  const double frac = x - lo;
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                static_cast<int>(std::lround(stops[lo][0] + frac * (stops[lo + 1][0] - stops[lo][0]))),
                static_cast<int>(std::lround(stops[lo][1] + frac * (stops[lo + 1][1] - stops[lo][1]))),
                static_cast<int>(std::lround(stops[lo][2] + frac * (stops[lo + 1][2] - stops[lo][2]))));
  return buf;
}

}  // namespace detail

/// Heatmap of node values on the structured n_s x n_r grid (s-major node
/// order). Cell size is fixed, so image dimensions scale with the grid.
inline void write_heatmap_svg(const std::filesystem::path& path,
                              const Eigen::RowVectorXd& values, int n_s, int n_r,
                              const std::string& title) {
  if (values.size() != static_cast<Eigen::Index>(n_s) * n_r) {
    throw shape_error("write_heatmap_svg: value count != n_s * n_r");
  }
  const int cell = 6;
  const int margin = 24;
  const int width = n_s * cell + 2 * margin;
  const int height = n_r * cell + 2 * margin + 16;
  const double lo = values.minCoeff(), hi = values.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
      << height << "'>\n";
  svg << "<text x='" << margin << "' y='16' font-size='12' font-family='sans-serif'>"
      << title << " [" << lo << ", " << hi << "]</text>\n";
  for (int i = 0; i < n_s; ++i) {
    for (int j = 0; j < n_r; ++j) {
      const double v = values(static_cast<Eigen::Index>(i) * n_r + j);
      svg << "<rect x='" << (margin + i * cell) << "' y='"
          << (margin + (n_r - 1 - j) * cell) << "' width='" << cell << "' height='"
          << cell << "' fill='" << detail::color_at((v - lo) / span) << "'/>\n";
    }
  }
  // inline color scale
  for (int i = 0; i < 64; ++i) {
    svg << "<rect x='" << (margin + i * 2) << "' y='" << (height - 14) <<
        "' width='2' height='8' fill='" << detail::color_at(i / 63.0) << "'/>\n";
  }
  svg << "</svg>\n";
  write_text_atomic(path, svg.str());
}

struct HistogramTable {
  std::string parameter;
  std::string metric;
  std::vector<double> edges;  // size bins + 1
  std::vector<int> counts;    // size bins
};

inline HistogramTable histogram(const std::vector<double>& values,
                                const std::string& parameter,
                                const std::string& metric, int bins = 30) {
  HistogramTable h;
  h.parameter = parameter;
  h.metric = metric;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  const double span = hi > lo ? hi - lo : 1.0;
  h.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) h.edges[b] = lo + span * b / bins;
  h.counts.assign(bins, 0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / span * bins);
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[b];
  }
  return h;
}

/// Writes (a) the per-scenario metric table, (b) 30-bin histogram tables for
/// MSE and Relative L2 per parameter, (c) true/predicted/error field triplets
/// (CSV + SVG heatmaps) for the best, 25/50/75% quantile and worst scenarios
/// per parameter, selected by Relative L2.
inline void export_artifacts(const EvalResult& eval, const ScenarioDataset& ds,
                             const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const int n = ds.n_points();

  {
    std::ostringstream csv;
    csv << "scenario,v_in";
    for (int k = 0; k < kNumParams; ++k) {
      csv << "," << kParamNames[k] << "_mse," << kParamNames[k] << "_mae,"
          << kParamNames[k] << "_rel_l2";
    }
    csv << "\n";
    for (std::size_t r = 0; r < eval.per_scenario.size(); ++r) {
      const int id = eval.scenario_ids[r];
      csv << id << "," << ds.inputs(id, 0);
      for (int k = 0; k < kNumParams; ++k) {
        const auto& p = eval.per_scenario[r].params[k];
        csv << "," << p.mse << "," << p.mae << "," << p.rel_l2;
      }
      csv << "\n";
    }
    write_text_atomic(out_dir / "per_scenario_metrics.csv", csv.str());
  }

  {
    std::ostringstream csv;
    csv << "parameter,metric,bin,lo,hi,count\n";
    for (int k = 0; k < kNumParams; ++k) {
      for (const char* metric : {"mse", "rel_l2"}) {
        std::vector<double> vals;
        for (const auto& sc : eval.per_scenario) {
          vals.push_back(std::string(metric) == "mse" ? sc.params[k].mse
                                                      : sc.params[k].rel_l2);
        }
        const auto h = histogram(vals, kParamNames[k], metric);
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
          csv << h.parameter << "," << h.metric << "," << b << "," << h.edges[b]
              << "," << h.edges[b + 1] << "," << h.counts[b] << "\n";
        }
      }
    }
    write_text_atomic(out_dir / "metric_histograms.csv", csv.str());
  }

  int n_s = 0, n_r = 0;
  if (ds.meta.contains("generator")) {
    n_s = ds.meta["generator"]["geometry"].value("n_s", 0);
    n_r = ds.meta["generator"]["geometry"].value("n_r", 0);
  }
  const bool grid = n_s * n_r == n;

  for (int k = 0; k < kNumParams; ++k) {
    std::vector<std::size_t> order(eval.per_scenario.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return eval.per_scenario[a].params[k].rel_l2 <
             eval.per_scenario[b].params[k].rel_l2;
    });
    const std::array<double, 5> quantiles = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (std::size_t qi = 0; qi < quantiles.size(); ++qi) {
      const auto pos = static_cast<std::size_t>(
          std::lround(quantiles[qi] * (order.size() - 1)));
      const std::size_t row = order[pos];
      const int id = eval.scenario_ids[row];
      const std::string stem = std::string("field_") + kParamNames[k] + "_q" +
                               std::to_string(static_cast<int>(quantiles[qi] * 100)) +
                               "_scenario" + std::to_string(id);
      std::ostringstream csv;
      csv << "x,y,true,predicted,abs_error\n";
      Eigen::RowVectorXd truth =
          eval.truths.row(row).segment(static_cast<Eigen::Index>(k) * n, n);
      Eigen::RowVectorXd pred =
          eval.predictions.row(row).segment(static_cast<Eigen::Index>(k) * n, n);
      for (int i = 0; i < n; ++i) {
        csv << ds.coords(i, 0) << "," << ds.coords(i, 1) << "," << truth(i) << ","
            << pred(i) << "," << std::abs(truth(i) - pred(i)) << "\n";
      }
      write_text_atomic(out_dir / (stem + ".csv"), csv.str());
      if (grid) {
        write_heatmap_svg(out_dir / (stem + "_true.svg"), truth, n_s, n_r,
                          std::string(kParamNames[k]) + " true, scenario " +
                              std::to_string(id));
        write_heatmap_svg(out_dir / (stem + "_pred.svg"), pred, n_s, n_r,
                          std::string(kParamNames[k]) + " predicted");
        Eigen::RowVectorXd err = (truth - pred).cwiseAbs();
        write_heatmap_svg(out_dir / (stem + "_abserr.svg"), err, n_s, n_r,
                          std::string(kParamNames[k]) + " absolute error");
      }
    }
  }
}

}  // namespace hotleg::evalbench
