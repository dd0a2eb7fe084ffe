// hotleg: command-line entry point wiring data generation, training, tuning,
// cross-validation, evaluation, benchmarking, inference and serving.
//
// Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric
// failure. Errors are also emitted as one JSON object on stderr.

#include "hotleg/hotleg.hpp"
#include "hotleg/runconfig.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hotleg;
using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json load_config_file(const std::string& path) {
  if (path.empty()) return ordered_json::object();
  return runconfig::parse(read_text(path));
}

template <typename T>
T cfg_get(const ordered_json& cfg, const std::string& section,
          const std::string& key, T fallback) {
  return runconfig::get(cfg, section, key, fallback);
}

// ---------------------------------------------------------------------------
// Shared helpers

std::string out_dir_override(const std::string& out) {
  if (const char* env = std::getenv("HOTLEG_OUT_DIR"); env && *env) {
    return (fs::path(env) / fs::path(out).filename()).string();
  }
  return out;
}

void write_effective_config(const fs::path& out_dir, const std::string& command,
                            const ordered_json& effective) {
  fs::create_directories(out_dir);
  ordered_json doc;
  doc["command"] = command;
  doc["hotleg_version"] = kVersion;
  doc["config"] = effective;
  write_text_atomic(out_dir / "effective_config.json", doc.dump(2) + "\n");
}

struct LoadedData {
  ScenarioDataset ds;
  std::string checksum;
};

LoadedData load_data(const std::string& dir) {
  LoadedData d;
  d.ds = load_dataset(dir);
  d.checksum = dataset_checksum_of_dir(dir);
  return d;
}

struct TrainSetup {
  DeepOnetConfig model_cfg;
  training::TrainConfig train_cfg;
  Split split;
  ScalerParams scaler;
  training::ScaledTensors tensors;
  double train_fraction;
  std::uint64_t split_seed;
};

TrainSetup make_train_setup(const ScenarioDataset& ds, const ordered_json& cfg,
                            const std::string& preset) {
  TrainSetup s;
  if (preset == "desk") {
    s.train_cfg = training::desk_preset();
  } else if (preset == "final" || preset == "paper") {
    s.train_cfg = training::final_preset();
  } else if (!preset.empty()) {
    throw config_error("unknown preset '" + preset + "' (desk|final|paper)");
  } else {
    s.train_cfg = training::desk_preset();
  }
  s.train_cfg.epochs = cfg_get(cfg, "train", "epochs", s.train_cfg.epochs);
  s.train_cfg.batch_size = cfg_get(cfg, "train", "batch_size", s.train_cfg.batch_size);
  s.train_cfg.learning_rate =
      cfg_get(cfg, "train", "learning_rate", s.train_cfg.learning_rate);
  s.train_cfg.weight_decay =
      cfg_get(cfg, "train", "weight_decay", s.train_cfg.weight_decay);
  s.train_cfg.dropout_rate =
      cfg_get(cfg, "train", "dropout_rate", s.train_cfg.dropout_rate);
  s.train_cfg.patience = cfg_get(cfg, "train", "patience", s.train_cfg.patience);
  s.train_cfg.seed = cfg_get<std::uint64_t>(cfg, "train", "seed", 0);

  s.model_cfg.n_points = ds.n_points();
  s.model_cfg.branch_hidden =
      cfg_get(cfg, "model", "branch_hidden", s.train_cfg.branch_hidden);
  s.model_cfg.trunk_hidden =
      cfg_get(cfg, "model", "trunk_hidden", s.train_cfg.trunk_hidden);
  s.model_cfg.with_heads = cfg_get(cfg, "model", "with_heads", true);
  s.model_cfg.seed = cfg_get<std::uint64_t>(cfg, "model", "seed", 0);
  s.model_cfg.dropout_rate = s.train_cfg.dropout_rate;
  s.train_cfg.branch_hidden = s.model_cfg.branch_hidden;
  s.train_cfg.trunk_hidden = s.model_cfg.trunk_hidden;
  s.train_cfg.with_heads = s.model_cfg.with_heads;

  s.train_fraction = cfg_get(cfg, "dataset", "train_fraction", 0.8);
  s.split_seed = cfg_get<std::uint64_t>(cfg, "dataset", "split_seed", 0);
  s.split = split_dataset(ds.n_scenarios(), {s.train_fraction, s.split_seed});
  s.scaler = fit_scaler(ds, s.split.train);
  s.tensors = training::prepare_scaled(ds, s.scaler);
  return s;
}

ordered_json split_provenance(const TrainSetup& s, const std::string& checksum) {
  ordered_json p;
  p["dataset_sha256"] = checksum;
  p["split"] = {{"train_fraction", s.train_fraction}, {"seed", s.split_seed}};
  p["train_config"] = training::train_config_to_json(s.train_cfg);
  return p;
}

void verify_provenance(const ordered_json& header, const std::string& checksum) {
  if (!header.contains("provenance") || !header["provenance"].contains("split")) {
    throw config_error("checkpoint lacks split provenance; cannot locate the test split");
  }
  if (header["provenance"].at("dataset_sha256").get<std::string>() != checksum) {
    throw config_error(
        "dataset checksum does not match the one recorded in the checkpoint; "
        "refusing to evaluate (the test split would be meaningless)");
  }
}

void history_to_files(const training::TrainHistory& h, const fs::path& out_dir) {
  ordered_json doc;
  doc["epochs_run"] = h.epochs_run;
  doc["best_epoch"] = h.best_epoch;
  doc["train_loss"] = h.train_loss;
  doc["val_loss"] = h.val_loss;
  doc["epoch_seconds"] = h.epoch_seconds;
  write_text_atomic(out_dir / "history.json", doc.dump(2) + "\n");
}

void report_to_files(const evalbench::MetricsReport& report, const fs::path& out_dir,
                     const std::string& stem) {
  write_text_atomic(out_dir / (stem + ".json"),
                    evalbench::report_to_json(report).dump(2) + "\n");
  std::ostringstream csv;
  csv << "parameter,metric,average,std,max\n";
  for (int k = 0; k < kNumParams; ++k) {
    auto row = [&](const char* metric, const evalbench::MetricStats& s) {
      csv << kParamNames[k] << "," << metric << "," << s.average << "," << s.stddev
          << "," << s.max << "\n";
    };
    row("mse", report.mse[k]);
    row("mae", report.mae[k]);
    row("rel_l2", report.rel_l2[k]);
  }
  write_text_atomic(out_dir / (stem + ".csv"), csv.str());
}

/// Width for an 11/10-hidden-layer plain branch/trunk pair whose parameter
/// count best matches `target`.
int vanilla_width_for_budget(long target, int n_points) {
  auto count = [&](long w) {
    return 19 * w * w + (28 + static_cast<long>(n_points)) * w + n_points + 3;
  };
  const double n = n_points;
  const double root =
      (-(28.0 + n) + std::sqrt((28.0 + n) * (28.0 + n) +
                               76.0 * (static_cast<double>(target) - n - 3.0))) /
      38.0;
  long best = std::max(1l, std::lround(root));
  long best_diff = std::abs(count(best) - target);
  for (long w = std::max(1l, best - 2); w <= best + 2; ++w) {
    if (std::abs(count(w) - target) < best_diff) {
      best = w;
      best_diff = std::abs(count(w) - target);
    }
  }
  return static_cast<int>(best);
}

DeepOnetConfig vanilla_config_for(const DeepOnetConfig& heads_cfg) {
  DeepOnetConfig v;
  v.n_points = heads_cfg.n_points;
  const int w = vanilla_width_for_budget(param_count(heads_cfg), heads_cfg.n_points);
  v.branch_hidden = std::vector<int>(11, w);
  v.trunk_hidden = std::vector<int>(10, w);
  v.with_heads = false;
  v.seed = heads_cfg.seed;
  return v;
}

int run_training(const ScenarioDataset& ds, const std::string& checksum,
                 TrainSetup& setup, double holdout, const fs::path& out_dir,
                 const ordered_json& effective, const std::string& command) {
  write_effective_config(out_dir, command, effective);
  DeepOnetModel model = build_deeponet(setup.model_cfg);
  attach_context(model, ds.coords, setup.scaler);
  std::vector<int> train_idx = setup.split.train;
  std::vector<int> val_idx;
  if (holdout > 0.0) {
    Rng rng(derive_seed(setup.train_cfg.seed, 0x401d));
    rng.shuffle(train_idx);
    const auto n_val = static_cast<std::size_t>(train_idx.size() * holdout);
    val_idx.assign(train_idx.end() - n_val, train_idx.end());
    train_idx.resize(train_idx.size() - n_val);
  }
  auto history = training::train(model, setup.tensors, train_idx, val_idx,
                                 setup.train_cfg);
  checkpoint_save(model, out_dir / "checkpoint", split_provenance(setup, checksum));
  history_to_files(history, out_dir);
  std::cout << "trained " << history.epochs_run << " epochs; final train loss "
            << history.train_loss.back() << "\n"
            << "checkpoint: " << (out_dir / "checkpoint").string() << "\n";
  return 0;
}

ordered_json effective_sections(const ordered_json& file_cfg,
                                std::initializer_list<const char*> sections) {
  ordered_json out = ordered_json::object();
  for (const char* s : sections) {
    out[s] = file_cfg.contains(s) ? file_cfg[s] : ordered_json::object();
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hotleg: DeepONet virtual sensor for hot-leg thermal hydraulics"};
  app.require_subcommand(1);
  app.fallthrough();  // allow --config after the subcommand name
  std::string config_path;
  app.add_option("--config", config_path, "JSON run-config file (strict keys)");

  // --- gen-data ---
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  struct {
    int scenarios = -1;
    std::string out;
    std::string preset;
    std::uint64_t seed = std::uint64_t(-1);
    bool calibrate = false;
  } gen_opt;
  gen->add_option("--scenarios", gen_opt.scenarios, "number of scenarios");
  gen->add_option("--out", gen_opt.out, "output dataset directory")->required();
  gen->add_option("--preset", gen_opt.preset, "desk|paper scale preset");
  gen->add_option("--seed", gen_opt.seed, "generator seed");
  gen->add_flag("--calibrate", gen_opt.calibrate,
                "re-run coefficient calibration before generating");

  // --- train ---
  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  struct {
    std::string data;
    std::string out;
    std::string preset;
    int epochs = -1;
    double lr = -1;
    std::uint64_t seed = std::uint64_t(-1);
  } train_opt;
  train_cmd->add_option("--data", train_opt.data, "dataset directory")->required();
  train_cmd->add_option("--out", train_opt.out, "run output directory")->required();
  train_cmd->add_option("--preset", train_opt.preset, "desk|final|paper");
  train_cmd->add_option("--epochs", train_opt.epochs, "override epoch count");
  train_cmd->add_option("--learning-rate", train_opt.lr, "override learning rate");
  train_cmd->add_option("--seed", train_opt.seed, "override training seed");

  // --- tune ---
  auto* tune = app.add_subcommand("tune", "random hyperparameter search");
  struct {
    std::string data;
    std::string out;
    int trials = 50;
    std::uint64_t seed = std::uint64_t(-1);
  } tune_opt;
  tune->add_option("--data", tune_opt.data, "dataset directory")->required();
  tune->add_option("--out", tune_opt.out, "run output directory")->required();
  tune->add_option("--trials", tune_opt.trials, "number of trials");
  tune->add_option("--seed", tune_opt.seed, "search seed");

  // --- cv ---
  auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
  struct {
    std::string data;
    std::string out;
    int folds = 5;
  } cv_opt;
  cv->add_option("--data", cv_opt.data, "dataset directory")->required();
  cv->add_option("--out", cv_opt.out, "run output directory")->required();
  cv->add_option("--folds", cv_opt.folds, "fold count");

  // --- eval ---
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  struct {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::string space = "scaled";
    bool no_artifacts = false;
  } eval_opt;
  eval_cmd->add_option("--checkpoint", eval_opt.checkpoint, "checkpoint directory")
      ->required();
  eval_cmd->add_option("--data", eval_opt.data, "dataset directory")->required();
  eval_cmd->add_option("--out", eval_opt.out, "output directory")->required();
  eval_cmd->add_option("--space", eval_opt.space, "scaled|physical");
  eval_cmd->add_flag("--no-artifacts", eval_opt.no_artifacts,
                     "skip CSV/SVG artifact export");

  // --- bench ---
  auto* bench = app.add_subcommand("bench", "inference latency benchmark");
  struct {
    std::string checkpoint;
    std::string out;
    double v_in = 0.73;
    int repetitions = 20;
    int warmup = 5;
    double fvm_seconds = 200.0;
  } bench_opt;
  bench->add_option("--checkpoint", bench_opt.checkpoint, "checkpoint directory")
      ->required();
  bench->add_option("--out", bench_opt.out, "output directory")->required();
  bench->add_option("--v-in", bench_opt.v_in, "inlet velocity for the probe");
  bench->add_option("--repetitions", bench_opt.repetitions, "timed repetitions");
  bench->add_option("--warmup", bench_opt.warmup, "warmup repetitions");
  bench->add_option("--fvm-seconds", bench_opt.fvm_seconds,
                    "reference solver time for the speedup figure");

  // --- infer ---
  auto* infer = app.add_subcommand("infer", "single prediction to stdout");
  struct {
    std::string checkpoint;
    double v_in = 0.0;
    std::string space = "physical";
  } infer_opt;
  infer->add_option("--checkpoint", infer_opt.checkpoint, "checkpoint directory")
      ->required();
  infer->add_option("--v-in", infer_opt.v_in, "inlet velocity, m/s")->required();
  infer->add_option("--space", infer_opt.space, "scaled|physical");

  // --- serve ---
  auto* serve_cmd = app.add_subcommand("serve", "HTTP virtual-sensor service");
  struct {
    std::string checkpoint;
    std::string host = "127.0.0.1";
    int port = 8080;
    int max_concurrent = 8;
  } serve_opt;
  serve_cmd->add_option("--checkpoint", serve_opt.checkpoint, "checkpoint directory")
      ->required();
  serve_cmd->add_option("--host", serve_opt.host, "bind address");
  serve_cmd->add_option("--port", serve_opt.port, "port (0 = ephemeral)");
  serve_cmd->add_option("--max-concurrent", serve_opt.max_concurrent,
                        "503 beyond this many in-flight predictions");

  // --- ablate ---
  auto* ablate = app.add_subcommand(
      "ablate", "heads-vs-plain comparison at matched parameter budget");
  struct {
    std::string data;
    std::string out;
    int epochs = -1;
  } ablate_opt;
  ablate->add_option("--data", ablate_opt.data, "dataset directory")->required();
  ablate->add_option("--out", ablate_opt.out, "output directory")->required();
  ablate->add_option("--epochs", ablate_opt.epochs, "training epochs per model");

  // --- robustness ---
  auto* robust = app.add_subcommand(
      "robustness", "split-ratio and node-count robustness sweeps");
  struct {
    std::string data;
    std::string out;
    std::vector<double> splits = {0.7, 0.8, 0.9};
    int epochs = -1;
    int node_stride = 4;
  } robust_opt;
  robust->add_option("--data", robust_opt.data, "dataset directory")->required();
  robust->add_option("--out", robust_opt.out, "output directory")->required();
  robust->add_option("--splits", robust_opt.splits, "train fractions")->delimiter(',');
  robust->add_option("--epochs", robust_opt.epochs, "training epochs per run");
  robust->add_option("--node-stride", robust_opt.node_stride,
                     "node subsampling stride for the reduced-N run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << ordered_json{{"error", "usage"}, {"message", e.what()}}.dump()
              << "\n";
    return 1;
  }

  try {
    ordered_json cfg = load_config_file(config_path);

    if (*gen) {
      flowgen::GeometryConfig geom = runconfig::geometry(cfg);
      flowgen::FluidConfig fluid = runconfig::fluid(cfg);
      flowgen::SurrogateCoeffs coeffs = runconfig::surrogate(cfg);
      int scenarios = cfg_get(cfg, "dataset", "scenarios", 500);
      if (gen_opt.preset == "desk") {
        scenarios = 500;
        geom.n_s = 63;
        geom.n_r = 20;
      } else if (gen_opt.preset == "paper") {
        scenarios = 5000;
        geom.n_s = 189;
        geom.n_r = 60;
        std::cerr << "note: paper-scale dataset is ~1.6 GB of fields\n";
      } else if (!gen_opt.preset.empty()) {
        throw config_error("unknown preset '" + gen_opt.preset + "'");
      }
      if (gen_opt.scenarios > 0) scenarios = gen_opt.scenarios;
      std::uint64_t seed = cfg_get<std::uint64_t>(cfg, "dataset", "seed", 20240101);
      if (gen_opt.seed != std::uint64_t(-1)) seed = gen_opt.seed;
      flowgen::VelocityRange vr{cfg_get(cfg, "dataset", "v_min", 0.63),
                                cfg_get(cfg, "dataset", "v_max", 0.83)};
      if (gen_opt.calibrate || cfg_get(cfg, "surrogate", "calibrate", false)) {
        auto report = flowgen::calibrate_coefficients({}, geom, fluid, vr, coeffs);
        if (!report.ok) {
          std::cerr << ordered_json{{"error", "calibration_failure"},
                                    {"message", report.message}}
                           .dump()
                    << "\n";
          return 3;
        }
        coeffs = report.coeffs;
      }
      const std::string out = out_dir_override(gen_opt.out);
      auto ds = flowgen::generate_dataset(scenarios, vr, geom, fluid, coeffs, seed);
      save_dataset(ds, out);
      ordered_json effective;
      effective["geometry"] = runconfig::geometry_json(geom);
      effective["fluid"] = runconfig::fluid_json(fluid);
      effective["surrogate"] = runconfig::coeffs_json(coeffs);
      effective["dataset"] = {{"scenarios", scenarios},
                              {"v_min", vr.lo},
                              {"v_max", vr.hi},
                              {"seed", seed}};
      write_effective_config(out, "gen-data", effective);
      std::cout << "dataset: " << out << " (M=" << scenarios
                << ", N=" << ds.n_points() << ")\n";
      return 0;
    }

    if (*train_cmd) {
      auto data = load_data(train_opt.data);
      if (cfg.contains("train") && cfg["train"].contains("preset") &&
          train_opt.preset.empty()) {
        train_opt.preset = cfg["train"]["preset"].get<std::string>();
      }
      TrainSetup setup = make_train_setup(data.ds, cfg, train_opt.preset);
      if (train_opt.epochs > 0) setup.train_cfg.epochs = train_opt.epochs;
      if (train_opt.lr > 0) setup.train_cfg.learning_rate = train_opt.lr;
      if (train_opt.seed != std::uint64_t(-1)) setup.train_cfg.seed = train_opt.seed;
      if (train_opt.preset == "paper") {
        std::cerr << "note: paper-scale heads hold ~1.5 GB in float32; training "
                     "needs several GB of RAM\n";
      }
      const fs::path out = out_dir_override(train_opt.out);
      ordered_json effective;
      effective["model"] = config_to_json(setup.model_cfg);
      effective["train"] = training::train_config_to_json(setup.train_cfg);
      effective["dataset"] = {{"checksum", data.checksum},
                              {"train_fraction", setup.train_fraction},
                              {"split_seed", setup.split_seed}};
      const double holdout = cfg_get(cfg, "train", "holdout_fraction", 0.0);
      return run_training(data.ds, data.checksum, setup, holdout, out, effective,
                          "train");
    }

    if (*tune) {
      auto data = load_data(tune_opt.data);
      TrainSetup setup = make_train_setup(data.ds, cfg, "");
      training::SearchSpace space;
      space.widths = cfg_get(cfg, "search", "widths", space.widths);
      space.batch_sizes = cfg_get(cfg, "search", "batch_sizes", space.batch_sizes);
      space.dropout_lo = cfg_get(cfg, "search", "dropout_lo", space.dropout_lo);
      space.dropout_hi = cfg_get(cfg, "search", "dropout_hi", space.dropout_hi);
      space.lr_lo = cfg_get(cfg, "search", "lr_lo", space.lr_lo);
      space.lr_hi = cfg_get(cfg, "search", "lr_hi", space.lr_hi);
      space.wd_lo = cfg_get(cfg, "search", "wd_lo", space.wd_lo);
      space.wd_hi = cfg_get(cfg, "search", "wd_hi", space.wd_hi);
      space.max_epochs = cfg_get(cfg, "search", "max_epochs", space.max_epochs);
      space.patience = cfg_get(cfg, "search", "patience", space.patience);
      std::uint64_t seed = cfg_get<std::uint64_t>(cfg, "search", "seed", 0);
      if (tune_opt.seed != std::uint64_t(-1)) seed = tune_opt.seed;
      const int trials = cfg_get(cfg, "search", "trials", tune_opt.trials);
      const fs::path out = out_dir_override(tune_opt.out);
      fs::create_directories(out);
      auto result = training::hyperparameter_search(
          space, trials, data.ds.n_points(), setup.tensors, setup.split.train, seed,
          (out / "trials.jsonl").string());
      ordered_json best;
      best["trial"] = result.best.trial;
      best["val_loss"] = result.best.val_loss;
      best["config"] = training::train_config_to_json(result.best.config);
      write_text_atomic(out / "best.json", best.dump(2) + "\n");
      ordered_json effective = effective_sections(cfg, {"dataset", "search"});
      effective["search"]["trials"] = trials;
      effective["search"]["seed"] = seed;
      effective["dataset"]["checksum"] = data.checksum;
      write_effective_config(out, "tune", effective);
      std::cout << "best trial " << result.best.trial << " val loss "
                << result.best.val_loss << "\n";
      return 0;
    }

    if (*cv) {
      auto data = load_data(cv_opt.data);
      TrainSetup setup = make_train_setup(data.ds, cfg, "");
      setup.train_cfg.epochs = cfg_get(cfg, "train", "epochs", 100);
      setup.train_cfg.patience = cfg_get(cfg, "train", "patience", 5);
      auto report = training::cross_validate(setup.model_cfg, setup.train_cfg,
                                             setup.tensors, setup.split.train,
                                             cv_opt.folds);
      const fs::path out = out_dir_override(cv_opt.out);
      fs::create_directories(out);
      ordered_json doc;
      doc["k"] = report.k;
      doc["fold_val_losses"] = report.fold_val_losses;
      doc["mean"] = report.mean;
      doc["std"] = report.stddev;
      write_text_atomic(out / "cv.json", doc.dump(2) + "\n");
      ordered_json effective = effective_sections(cfg, {"dataset", "model", "train"});
      effective["dataset"]["checksum"] = data.checksum;
      write_effective_config(out, "cv", effective);
      std::cout << "cv mean " << report.mean << " +/- " << report.stddev << "\n";
      return 0;
    }

    if (*eval_cmd) {
      auto data = load_data(eval_opt.data);
      DeepOnetModel model = checkpoint_load(eval_opt.checkpoint);
      auto header = ordered_json::parse(
          read_text(fs::path(eval_opt.checkpoint) / "model.json"));
      verify_provenance(header, data.checksum);
      const auto& sp = header["provenance"]["split"];
      Split split = split_dataset(data.ds.n_scenarios(),
                                  {sp.at("train_fraction").get<double>(),
                                   sp.at("seed").get<std::uint64_t>()});
      const Space space =
          eval_opt.space == "physical" ? Space::physical : Space::scaled;
      auto result = evalbench::evaluate_model(model, data.ds, split.test, space);
      const fs::path out = out_dir_override(eval_opt.out);
      fs::create_directories(out);
      report_to_files(result.report, out, "report");
      if (!eval_opt.no_artifacts) {
        evalbench::export_artifacts(result, data.ds, out / "artifacts");
      }
      ordered_json effective = effective_sections(cfg, {"eval"});
      effective["eval"]["space"] = result.report.space;
      effective["eval"]["checkpoint"] = eval_opt.checkpoint;
      effective["dataset"] = {{"checksum", data.checksum}};
      write_effective_config(out, "eval", effective);
      std::cout << evalbench::report_to_json(result.report).dump(2) << "\n";
      return 0;
    }

    if (*bench) {
      DeepOnetModel model = checkpoint_load(bench_opt.checkpoint);
      auto report = evalbench::time_inference(model, bench_opt.v_in,
                                              bench_opt.repetitions, bench_opt.warmup);
      const fs::path out = out_dir_override(bench_opt.out);
      fs::create_directories(out);
      auto doc = evalbench::timing_to_json(report, bench_opt.fvm_seconds);
      write_text_atomic(out / "timing.json", doc.dump(2) + "\n");
      write_effective_config(out, "bench",
                             ordered_json{{"bench",
                                           {{"repetitions", bench_opt.repetitions},
                                            {"warmup", bench_opt.warmup},
                                            {"v_in", bench_opt.v_in},
                                            {"fvm_seconds", bench_opt.fvm_seconds}}}});
      std::cout << doc.dump(2) << "\n";
      return 0;
    }

    if (*infer) {
      DeepOnetModel model = checkpoint_load(infer_opt.checkpoint);
      auto header = ordered_json::parse(
          read_text(fs::path(infer_opt.checkpoint) / "model.json"));
      const Space space =
          infer_opt.space == "scaled" ? Space::scaled : Space::physical;
      auto pred = predict_fields(model, infer_opt.v_in, space);
      std::cout << prediction_to_json(model, pred,
                                      header.at("blob_sha256").get<std::string>())
                       .dump()
                << "\n";
      std::cerr << "inference_seconds " << pred.seconds << "\n";
      return 0;
    }

    if (*serve_cmd) {
      serve::ServeConfig scfg;
      scfg.host = cfg_get(cfg, "serve", "host", serve_opt.host);
      scfg.port = cfg_get(cfg, "serve", "port", serve_opt.port);
      scfg.max_concurrent =
          cfg_get(cfg, "serve", "max_concurrent", serve_opt.max_concurrent);
      scfg.checkpoint_dir = serve_opt.checkpoint;
      scfg.default_space =
          cfg_get<std::string>(cfg, "serve", "default_space", "physical") == "scaled"
              ? Space::scaled
              : Space::physical;
      serve::SensorService service(scfg);
      service.load();
      httplib::Server server;
      int port = 0;
      std::cout << "serving " << scfg.host << " (requested port " << scfg.port
                << ")\n";
      if (!service.run(server, &port)) {
        throw io_error("serve: failed to bind " + scfg.host + ":" +
                       std::to_string(scfg.port));
      }
      return 0;
    }

    if (*ablate) {
      auto data = load_data(ablate_opt.data);
      TrainSetup setup = make_train_setup(data.ds, cfg, "desk");
      if (ablate_opt.epochs > 0) setup.train_cfg.epochs = ablate_opt.epochs;
      const fs::path out = out_dir_override(ablate_opt.out);
      fs::create_directories(out);

      DeepOnetConfig heads_cfg = setup.model_cfg;
      heads_cfg.with_heads = true;
      DeepOnetConfig vanilla_cfg = vanilla_config_for(heads_cfg);

      auto run_variant = [&](const DeepOnetConfig& mc) {
        DeepOnetModel model = build_deeponet(mc);
        attach_context(model, data.ds.coords, setup.scaler);
        training::TrainConfig tc = setup.train_cfg;
        tc.with_heads = mc.with_heads;
        training::train(model, setup.tensors, setup.split.train, {}, tc);
        return evalbench::evaluate_model(model, data.ds, setup.split.test);
      };
      auto heads_eval = run_variant(heads_cfg);
      auto vanilla_eval = run_variant(vanilla_cfg);

      ordered_json doc;
      doc["parameter_budget"] = {{"heads", param_count(heads_cfg)},
                                 {"vanilla", param_count(vanilla_cfg)},
                                 {"vanilla_width", vanilla_cfg.branch_hidden[0]}};
      doc["heads"] = evalbench::report_to_json(heads_eval.report);
      doc["vanilla"] = evalbench::report_to_json(vanilla_eval.report);
      write_text_atomic(out / "ablation.json", doc.dump(2) + "\n");

      std::ostringstream csv;
      csv << "parameter,model,mse_avg,mse_std,mse_max,rel_l2_avg,rel_l2_std,rel_l2_max\n";
      for (int k = 0; k < kNumParams; ++k) {
        auto row = [&](const char* name, const evalbench::MetricsReport& r) {
          csv << kParamNames[k] << "," << name << "," << r.mse[k].average << ","
              << r.mse[k].stddev << "," << r.mse[k].max << "," << r.rel_l2[k].average
              << "," << r.rel_l2[k].stddev << "," << r.rel_l2[k].max << "\n";
        };
        row("vanilla", vanilla_eval.report);
        row("with_heads", heads_eval.report);
      }
      write_text_atomic(out / "ablation.csv", csv.str());
      ordered_json effective = effective_sections(cfg, {"dataset", "model"});
      effective["train"] = training::train_config_to_json(setup.train_cfg);
      effective["dataset"]["checksum"] = data.checksum;
      write_effective_config(out, "ablate", effective);
      std::cout << "ablation report: " << (out / "ablation.csv").string() << "\n";
      return 0;
    }

    if (*robust) {
      auto data = load_data(robust_opt.data);
      const fs::path out = out_dir_override(robust_opt.out);
      fs::create_directories(out);

      auto run_once = [&](const ScenarioDataset& ds, double fraction) {
        ordered_json local = cfg;
        if (!local.contains("dataset")) local["dataset"] = ordered_json::object();
        local["dataset"]["train_fraction"] = fraction;
        TrainSetup setup = make_train_setup(ds, local, "desk");
        if (robust_opt.epochs > 0) setup.train_cfg.epochs = robust_opt.epochs;
        DeepOnetModel model = build_deeponet(setup.model_cfg);
        attach_context(model, ds.coords, setup.scaler);
        training::train(model, setup.tensors, setup.split.train, {}, setup.train_cfg);
        return evalbench::evaluate_model(model, ds, setup.split.test);
      };

      ordered_json doc;
      std::ostringstream split_csv;
      split_csv << "train_fraction,P_mse,V_o_mse,k_mse,P_rel_l2,V_o_rel_l2,k_rel_l2\n";
      for (double fraction : robust_opt.splits) {
        auto result = run_once(data.ds, fraction);
        split_csv << fraction;
        for (int k = 0; k < kNumParams; ++k) split_csv << "," << result.report.mse[k].average;
        for (int k = 0; k < kNumParams; ++k) split_csv << "," << result.report.rel_l2[k].average;
        split_csv << "\n";
        doc["splits"][std::to_string(fraction)] =
            evalbench::report_to_json(result.report);
      }
      write_text_atomic(out / "robustness_splits.csv", split_csv.str());

      std::ostringstream node_csv;
      node_csv << "n_points,P_mse,V_o_mse,k_mse,P_rel_l2,V_o_rel_l2,k_rel_l2\n";
      auto full = run_once(data.ds, 0.8);
      auto reduced_ds = subsample_nodes(data.ds, robust_opt.node_stride);
      auto reduced = run_once(reduced_ds, 0.8);
      auto node_row = [&](int n, const evalbench::EvalResult& r) {
        node_csv << n;
        for (int k = 0; k < kNumParams; ++k) node_csv << "," << r.report.mse[k].average;
        for (int k = 0; k < kNumParams; ++k) node_csv << "," << r.report.rel_l2[k].average;
        node_csv << "\n";
      };
      node_row(data.ds.n_points(), full);
      node_row(reduced_ds.n_points(), reduced);
      write_text_atomic(out / "robustness_nodes.csv", node_csv.str());
      doc["nodes"][std::to_string(data.ds.n_points())] =
          evalbench::report_to_json(full.report);
      doc["nodes"][std::to_string(reduced_ds.n_points())] =
          evalbench::report_to_json(reduced.report);
      write_text_atomic(out / "robustness.json", doc.dump(2) + "\n");
      ordered_json effective = effective_sections(cfg, {"dataset", "model", "train"});
      effective["dataset"]["checksum"] = data.checksum;
      effective["robustness"] = {{"splits", robust_opt.splits},
                                 {"node_stride", robust_opt.node_stride}};
      write_effective_config(out, "robustness", effective);
      std::cout << "robustness reports in " << out.string() << "\n";
      return 0;
    }

    return 1;
  } catch (const numeric_error& e) {
    std::cerr << ordered_json{{"error", "numeric"}, {"message", e.what()}}.dump()
              << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << ordered_json{{"error", "data_or_config"}, {"message", e.what()}}.dump()
              << "\n";
    return 2;
  }
}
