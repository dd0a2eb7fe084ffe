#pragma once

// Training loop (scaled-MSE objective, seeded mini-batches, early stopping
// with best-epoch restore), 5-fold cross-validation, and seeded random
// hyperparameter search over the tuning space.

#include "hotleg/common.hpp"
#include "hotleg/dataset.hpp"
#include "hotleg/deeponet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace hotleg::training {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double weight_decay = 1e-8;
  double dropout_rate = 0.0;
  int patience = 0;  // 0 disables early stopping
  std::uint64_t seed = 0;
  std::vector<int> branch_hidden = {512, 512, 512};
  std::vector<int> trunk_hidden = {512, 512, 256};
  bool with_heads = true;
};

inline void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (cfg.patience < 0) throw std::invalid_argument("train: patience must be >= 0");
  if (cfg.learning_rate < 0.0) throw std::invalid_argument("train: negative learning rate");
}

/// Desk-scale protocol: full 300-epoch pass over the training split.
inline TrainConfig desk_preset() {
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-3;
  cfg.weight_decay = 1e-8;
  cfg.dropout_rate = 0.0;
  cfg.patience = 0;
  return cfg;
}

/// Final-phase protocol: 1000 epochs on the entire training split, fixed
/// learning rate 0.001, no validation holdout.
inline TrainConfig final_preset() {
  TrainConfig cfg;
  cfg.epochs = 1000;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-3;
  cfg.weight_decay = 1e-8;
  cfg.dropout_rate = 0.0;
  cfg.patience = 0;
  return cfg;
}

inline ordered_json train_config_to_json(const TrainConfig& cfg) {
  ordered_json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["weight_decay"] = cfg.weight_decay;
  j["dropout_rate"] = cfg.dropout_rate;
  j["patience"] = cfg.patience;
  j["seed"] = cfg.seed;
  j["branch_hidden"] = cfg.branch_hidden;
  j["trunk_hidden"] = cfg.trunk_hidden;
  j["with_heads"] = cfg.with_heads;
  return j;
}

// ---------------------------------------------------------------------------
// Scaled tensors

struct ScaledTensors {
  Mat inputs;         // M x n, scaled
  Mat targets;        // M x 3N, scaled
  Mat coords_scaled;  // N x 3
};

inline ScaledTensors prepare_scaled(const ScenarioDataset& ds,
                                    const ScalerParams& scaler) {
  ScaledTensors t;
  t.inputs.resize(ds.inputs.rows(), ds.inputs.cols());
  for (Eigen::Index i = 0; i < ds.inputs.size(); ++i) {
    t.inputs.data()[i] = scaler.input.apply(ds.inputs.data()[i]);
  }
  const int n = ds.n_points();
  t.targets.resize(ds.fields.rows(), ds.fields.cols());
  for (int s = 0; s < ds.n_scenarios(); ++s) {
    for (int k = 0; k < kNumParams; ++k) {
      for (int i = 0; i < n; ++i) {
        t.targets(s, static_cast<Eigen::Index>(k) * n + i) =
            scaler.field[k].apply(ds.field(s, k, i));
      }
    }
  }
  t.coords_scaled = apply_coord_scaler(ds.coords, scaler);
  return t;
}

// ---------------------------------------------------------------------------
// Training

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;  // empty when no validation set
  std::vector<double> epoch_seconds;
  int best_epoch = -1;  // 0-based; -1 when no validation monitoring
  int epochs_run = 0;
};

inline constexpr double kImprovementThreshold = 1e-12;

namespace detail {

inline Mat gather_rows(const Mat& src, const std::vector<int>& idx, int begin, int end) {
  Mat out(end - begin, src.cols());
  for (int i = begin; i < end; ++i) out.row(i - begin) = src.row(idx[i]);
  return out;
}

inline double evaluate_loss(const DeepOnetModel& model, const ScaledTensors& data,
                            const std::vector<int>& idx, int batch_size) {
  double total_sq = 0.0;
  std::size_t total_entries = 0;
  for (int begin = 0; begin < static_cast<int>(idx.size()); begin += batch_size) {
    const int end = std::min<int>(begin + batch_size, static_cast<int>(idx.size()));
    const Mat u = gather_rows(data.inputs, idx, begin, end);
    const Mat target = gather_rows(data.targets, idx, begin, end);
    const Mat out =
        deeponet_forward(model, u, data.coords_scaled, RunMode::inference);
    total_sq += (out - target).squaredNorm();
    total_entries += static_cast<std::size_t>(target.size());
  }
  return total_sq / static_cast<double>(total_entries);
}

struct ParamSnapshot {
  std::vector<std::vector<double>> blocks;

  static ParamSnapshot take(const std::vector<nn::TensorRef>& refs) {
    ParamSnapshot s;
    for (const auto& r : refs) s.blocks.emplace_back(r.data, r.data + r.size);
    return s;
  }
  void restore(const std::vector<nn::TensorRef>& refs) const {
    for (std::size_t i = 0; i < refs.size(); ++i) {
      std::copy(blocks[i].begin(), blocks[i].end(), refs[i].data);
    }
  }
};

}  // namespace detail

/// Minimizes the mean of squared scaled-space residuals over all
/// (batch, parameter, node) entries. With a validation set and patience > 0,
/// stops after `patience` consecutive epochs without improvement (strict
/// decrease by at least 1e-12) and restores the best-epoch parameters.
inline TrainHistory train(DeepOnetModel& model, const ScaledTensors& data,
                          const std::vector<int>& train_idx,
                          const std::vector<int>& val_idx, const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (train_idx.empty()) throw std::invalid_argument("train: empty training set");
  if (data.coords_scaled.rows() != model.config.n_points) {
    throw shape_error("train: dataset node count does not match model");
  }
  model.config.dropout_rate = cfg.dropout_rate;

  auto params = collect_params(model);
  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  adam_cfg.weight_decay = cfg.weight_decay;
  auto adam = nn::AdamState::init(adam_cfg, params);

  Rng shuffle_rng(derive_seed(cfg.seed, 0x5f0f));
  const bool monitor = !val_idx.empty() && cfg.patience > 0;
  const bool track_best = !val_idx.empty();
  double best_val = std::numeric_limits<double>::infinity();
  detail::ParamSnapshot best_params;
  int stall = 0;

  TrainHistory history;
  std::vector<int> order = train_idx;
  const auto entries_per_scenario = static_cast<double>(data.targets.cols());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double t0 = wall_seconds();
    shuffle_rng.shuffle(order);
    double epoch_sq = 0.0;
    int step = 0;
    for (int begin = 0; begin < static_cast<int>(order.size());
         begin += cfg.batch_size, ++step) {
      const int end = std::min<int>(begin + cfg.batch_size,
                                    static_cast<int>(order.size()));
      const Mat u = detail::gather_rows(data.inputs, order, begin, end);
      const Mat target = detail::gather_rows(data.targets, order, begin, end);
      DeepOnetCache cache;
      const std::uint64_t dropout_seed = derive_seed(
          cfg.seed, 0xd0ull + static_cast<std::uint64_t>(epoch) * 1000003ull +
                        static_cast<std::uint64_t>(step));
      const Mat out = deeponet_forward(model, u, data.coords_scaled, RunMode::train,
                                       dropout_seed, &cache);
      Mat residual = out - target;
      epoch_sq += residual.squaredNorm();
      residual *= 2.0 / static_cast<double>(residual.size());
      DeepOnetGrads grads = deeponet_backward(model, cache, residual);
      auto grad_refs = collect_grads(grads);
      nn::adam_step(adam, params, grad_refs);
    }
    const double train_loss =
        epoch_sq / (static_cast<double>(order.size()) * entries_per_scenario);
    if (!std::isfinite(train_loss)) {
      throw numeric_error("train: loss diverged (non-finite) at epoch " +
                          std::to_string(epoch + 1));
    }
    history.train_loss.push_back(train_loss);

    if (track_best) {
      const double val =
          detail::evaluate_loss(model, data, val_idx, cfg.batch_size);
      if (!std::isfinite(val)) {
        throw numeric_error("train: validation loss non-finite at epoch " +
                            std::to_string(epoch + 1));
      }
      history.val_loss.push_back(val);
      if (best_val - val >= kImprovementThreshold) {
        best_val = val;
        history.best_epoch = epoch;
        best_params = detail::ParamSnapshot::take(params);
        stall = 0;
      } else {
        ++stall;
      }
    }
    history.epoch_seconds.push_back(wall_seconds() - t0);
    history.epochs_run = epoch + 1;
    if (monitor && stall >= cfg.patience) break;
  }
  if (track_best && history.best_epoch >= 0) {
    best_params.restore(params);
  }
  return history;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CvReport {
  std::vector<double> fold_val_losses;
  double mean = 0.0;
  double stddev = 0.0;
  int k = 0;
};

/// Independent model per fold (fresh seed-derived init); the headline value
/// is the mean of best validation losses across folds.
inline CvReport cross_validate(const DeepOnetConfig& model_cfg, const TrainConfig& cfg,
                               const ScaledTensors& data,
                               const std::vector<int>& train_idx, int k) {
  const auto folds = kfold_indices(train_idx, k, derive_seed(cfg.seed, 0xf01d));
  CvReport report;
  report.k = k;
  // every fold gets a fresh model from the same derived seed, so folds are
  // procedurally identical and differ only through their data
  for (int f = 0; f < k; ++f) {
    try {
      DeepOnetConfig fold_model_cfg = model_cfg;
      fold_model_cfg.seed = derive_seed(model_cfg.seed, 0xcf0ull);
      fold_model_cfg.dropout_rate = cfg.dropout_rate;
      DeepOnetModel model = build_deeponet(fold_model_cfg);
      TrainConfig fold_cfg = cfg;
      fold_cfg.seed = derive_seed(cfg.seed, 0xcf1ull);
      TrainHistory h = train(model, data, folds[f].train, folds[f].val, fold_cfg);
      const double best = h.best_epoch >= 0 ? h.val_loss[h.best_epoch]
                                            : h.val_loss.back();
      report.fold_val_losses.push_back(best);
    } catch (const std::exception& e) {
      throw std::runtime_error("cross_validate: fold " + std::to_string(f) + ": " +
                               e.what());
    }
  }
  double sum = 0.0;
  for (double v : report.fold_val_losses) sum += v;
  report.mean = sum / k;
  double sq = 0.0;
  for (double v : report.fold_val_losses) sq += (v - report.mean) * (v - report.mean);
  report.stddev = std::sqrt(sq / k);
  return report;
}

// ---------------------------------------------------------------------------
// Hyperparameter search (seeded random sampling over the tuning space)

struct SearchSpace {
  std::vector<int> widths = {128, 256, 512};  // hidden width per layer
  double dropout_lo = 0.0, dropout_hi = 0.3;
  double lr_lo = 1e-5, lr_hi = 1e-3;          // log-uniform
  std::vector<int> batch_sizes = {16, 32, 64};
  double wd_lo = 1e-8, wd_hi = 1e-6;          // log-uniform
  int max_epochs = 100;
  int patience = 5;
};

struct TrialResult {
  int trial = 0;
  TrainConfig config;
  double val_loss = std::numeric_limits<double>::infinity();
  int epochs_run = 0;
  bool diverged = false;
  std::string error;
};

struct SearchResult {
  TrialResult best;
  std::vector<TrialResult> trials;
};

inline ordered_json trial_to_json(const TrialResult& t) {
  ordered_json j;
  j["trial"] = t.trial;
  j["config"] = train_config_to_json(t.config);
  j["val_loss"] = t.diverged ? ordered_json() : ordered_json(t.val_loss);
  j["epochs_run"] = t.epochs_run;
  j["diverged"] = t.diverged;
  if (!t.error.empty()) j["error"] = t.error;
  return j;
}

/// Categorical choices uniform; learning rate and weight decay log-uniform;
/// dropout uniform. Each trial trains on a fixed 80/20 validation split of
/// the provided training indices with early stopping.
inline SearchResult hyperparameter_search(const SearchSpace& space, int trials,
                                          int n_points, const ScaledTensors& data,
                                          const std::vector<int>& train_idx,
                                          std::uint64_t seed,
                                          const std::string& jsonl_path = "") {
  if (trials < 1) throw std::invalid_argument("hyperparameter_search: trials >= 1");
  if (space.widths.empty() || space.batch_sizes.empty()) {
    throw std::invalid_argument("hyperparameter_search: empty search space");
  }
  // one validation split shared by all trials
  std::vector<int> order = train_idx;
  Rng split_rng(derive_seed(seed, 0x11f0));
  split_rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::lround(order.size() * 0.8));
  std::vector<int> tr(order.begin(), order.begin() + n_train);
  std::vector<int> va(order.begin() + n_train, order.end());

  std::ofstream log;
  if (!jsonl_path.empty()) log.open(jsonl_path, std::ios::app);

  Rng sample_rng(derive_seed(seed, 0x7a1e));
  SearchResult result;
  int ok_trials = 0;
  for (int t = 0; t < trials; ++t) {
    TrialResult trial;
    trial.trial = t;
    TrainConfig cfg;
    const int width =
        space.widths[sample_rng.below(space.widths.size())];
    cfg.branch_hidden = {width, width, width};
    cfg.trunk_hidden = {width, width, std::max(1, width / 2)};
    cfg.dropout_rate = sample_rng.uniform(space.dropout_lo, space.dropout_hi);
    cfg.learning_rate = sample_rng.log_uniform(space.lr_lo, space.lr_hi);
    cfg.batch_size = space.batch_sizes[sample_rng.below(space.batch_sizes.size())];
    cfg.weight_decay = sample_rng.log_uniform(space.wd_lo, space.wd_hi);
    cfg.epochs = space.max_epochs;
    cfg.patience = space.patience;
    cfg.seed = derive_seed(seed, 0x7a1a1ull + t);
    trial.config = cfg;
    try {
      DeepOnetConfig model_cfg;
      model_cfg.n_points = n_points;
      model_cfg.branch_hidden = cfg.branch_hidden;
      model_cfg.trunk_hidden = cfg.trunk_hidden;
      model_cfg.dropout_rate = cfg.dropout_rate;
      model_cfg.seed = derive_seed(seed, 0x70d31ull + t);
      DeepOnetModel model = build_deeponet(model_cfg);
      TrainHistory h = train(model, data, tr, va, cfg);
      trial.val_loss = h.best_epoch >= 0 ? h.val_loss[h.best_epoch]
                                         : h.val_loss.back();
      trial.epochs_run = h.epochs_run;
      ++ok_trials;
    } catch (const numeric_error& e) {
      trial.diverged = true;
      trial.error = e.what();
    }
    if (log.is_open()) log << trial_to_json(trial).dump() << "\n";
    result.trials.push_back(trial);
  }
  if (ok_trials == 0) {
    throw numeric_error("hyperparameter_search: every trial diverged");
  }
  result.best = *std::min_element(
      result.trials.begin(), result.trials.end(),
      [](const TrialResult& a, const TrialResult& b) { return a.val_loss < b.val_loss; });
  return result;
}

}  // namespace hotleg::training
