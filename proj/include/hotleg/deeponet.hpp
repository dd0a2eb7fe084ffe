#pragma once

// Branch/trunk operator model with optional per-parameter linear heads.
//
// Forward path per batch item: branch(u) -> R^N, trunk(coords) -> R^{N x 3},
// fused[k][i] = branch[i] * trunk[i][k], then (with heads) z_k = W_k f_k + c_k
// with one dense N x N head per output parameter. Outputs live in scaled
// space; the fitted scaler travels inside the model and its checkpoints.

#include "hotleg/common.hpp"
#include "hotleg/dataset.hpp"
#include "hotleg/nn.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace hotleg {

struct DeepOnetConfig {
  int n_input = 1;
  int n_points = 0;
  int n_params = kNumParams;
  std::vector<int> branch_hidden = {512, 512, 512};
  std::vector<int> trunk_hidden = {512, 512, 256};
  bool with_heads = true;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;

  std::vector<int> branch_sizes() const {
    std::vector<int> s{n_input};
    s.insert(s.end(), branch_hidden.begin(), branch_hidden.end());
    s.push_back(n_points);
    return s;
  }
  std::vector<int> trunk_sizes() const {
    std::vector<int> s{3};
    s.insert(s.end(), trunk_hidden.begin(), trunk_hidden.end());
    s.push_back(n_params);
    return s;
  }
};

inline void validate_config(const DeepOnetConfig& cfg) {
  if (cfg.n_input < 1) throw config_error("deeponet: n_input must be >= 1");
  if (cfg.n_points < 1) throw config_error("deeponet: n_points must be >= 1");
  if (cfg.n_params != kNumParams) {
    throw config_error("deeponet: n_params is fixed at 3 (P, V_o, k)");
  }
  if (cfg.branch_hidden.empty() || cfg.trunk_hidden.empty()) {
    throw config_error("deeponet: hidden layer lists must be non-empty");
  }
  for (int h : cfg.branch_hidden) {
    if (h < 1) throw config_error("deeponet: branch hidden sizes must be >= 1");
  }
  for (int h : cfg.trunk_hidden) {
    if (h < 1) throw config_error("deeponet: trunk hidden sizes must be >= 1");
  }
  if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0) {
    throw config_error("deeponet: dropout rate must be in [0,1)");
  }
}

inline long param_count(const DeepOnetConfig& cfg) {
  long total = nn::param_count(cfg.branch_sizes()) + nn::param_count(cfg.trunk_sizes());
  if (cfg.with_heads) {
    total += static_cast<long>(cfg.n_params) *
             (static_cast<long>(cfg.n_points) * cfg.n_points + cfg.n_points);
  }
  return total;
}

struct LinearHead {
  Mat w;  // N x N
  Vec b;  // N
};

struct DeepOnetModel {
  DeepOnetConfig config;
  nn::Mlp branch;
  nn::Mlp trunk;
  std::vector<LinearHead> heads;  // size n_params iff with_heads
  ScalerParams scaler;            // attached at training time
  Mat coords;                     // N x 3 physical coordinates (attached with scaler)

  bool has_context() const { return scaler.fitted && coords.rows() == config.n_points; }
};

/// Xavier weights and zero biases everywhere (heads included); deterministic
/// for a given config seed.
inline DeepOnetModel build_deeponet(const DeepOnetConfig& cfg) {
  validate_config(cfg);
  DeepOnetModel model;
  model.config = cfg;
  model.branch = nn::make_mlp(cfg.branch_sizes(), derive_seed(cfg.seed, 1));
  model.trunk = nn::make_mlp(cfg.trunk_sizes(), derive_seed(cfg.seed, 2));
  if (cfg.with_heads) {
    for (int k = 0; k < cfg.n_params; ++k) {
      LinearHead head;
      head.w = nn::xavier_init(cfg.n_points, cfg.n_points, derive_seed(cfg.seed, 10 + k));
      head.b = Vec::Zero(cfg.n_points);
      model.heads.push_back(std::move(head));
    }
  }
  return model;
}

inline long param_count(const DeepOnetModel& model) {
  return param_count(model.config);
}

inline void attach_context(DeepOnetModel& model, const Mat& coords,
                           const ScalerParams& scaler) {
  if (coords.rows() != model.config.n_points || coords.cols() != 3) {
    throw shape_error("attach_context: coordinate shape does not match model");
  }
  model.coords = coords;
  model.scaler = scaler;
}

// ---------------------------------------------------------------------------
// Fusion

/// fused[k][i] = branch_out[i] * trunk_out(i, k); the k rows are the three
/// per-parameter components.
inline Mat fuse(const Vec& branch_out, const Mat& trunk_out) {
  if (trunk_out.rows() != branch_out.size()) {
    throw shape_error("fuse: branch length " + std::to_string(branch_out.size()) +
                      " != trunk rows " + std::to_string(trunk_out.rows()));
  }
  Mat fused(trunk_out.cols(), branch_out.size());
  for (Eigen::Index k = 0; k < trunk_out.cols(); ++k) {
    fused.row(k) = branch_out.transpose().array() * trunk_out.col(k).transpose().array();
  }
  return fused;
}

// ---------------------------------------------------------------------------
// Batched forward / backward

struct DeepOnetCache {
  nn::MlpCache branch;
  nn::MlpCache trunk;
  Mat branch_out;               // B x N
  Mat trunk_out;                // N x 3
  std::array<Mat, 3> fused;     // each B x N
  bool valid = false;
};

enum class RunMode { train, inference };

/// Output layout: B x (3N), columns [P block | V_o block | k block], i.e. the
/// (batch, parameter, node) tensor flattened row-major.
inline Mat deeponet_forward(const DeepOnetModel& model, const Mat& u_batch,
                            const Mat& coords_scaled, RunMode mode,
                            std::uint64_t dropout_seed = 0,
                            DeepOnetCache* cache = nullptr) {
  const auto& cfg = model.config;
  if (u_batch.cols() != cfg.n_input) {
    throw shape_error("deeponet_forward: input width != n_input");
  }
  if (coords_scaled.cols() != 3) {
    throw shape_error("deeponet_forward: coords must be N x 3");
  }
  if (cfg.with_heads && coords_scaled.rows() != cfg.n_points) {
    throw shape_error("deeponet_forward: heads fix N = " +
                      std::to_string(cfg.n_points) + ", got " +
                      std::to_string(coords_scaled.rows()) + " coordinates");
  }
  nn::DropoutSpec dropout;
  if (mode == RunMode::train && cfg.dropout_rate > 0.0) {
    dropout.rate = cfg.dropout_rate;
    dropout.mode = nn::DropoutSpec::Mode::train;
  }
  const Eigen::Index batch = u_batch.rows();
  const Eigen::Index n = coords_scaled.rows();

  dropout.seed = derive_seed(dropout_seed, 1);
  Mat branch_out = nn::mlp_forward(model.branch, u_batch, dropout,
                                   cache ? &cache->branch : nullptr);
  dropout.seed = derive_seed(dropout_seed, 2);
  Mat trunk_out = nn::mlp_forward(model.trunk, coords_scaled, dropout,
                                  cache ? &cache->trunk : nullptr);

  Mat out(batch, static_cast<Eigen::Index>(cfg.n_params) * n);
  std::array<Mat, 3> fused;
  for (int k = 0; k < cfg.n_params; ++k) {
    fused[k] = branch_out.array().rowwise() *
               trunk_out.col(k).transpose().array();
    if (cfg.with_heads) {
      Mat z;
      matmul(fused[k], model.heads[k].w, z);
      z.rowwise() += model.heads[k].b.transpose();
      out.middleCols(static_cast<Eigen::Index>(k) * n, n) = z;
    } else {
      out.middleCols(static_cast<Eigen::Index>(k) * n, n) = fused[k];
    }
  }
  if (cache) {
    cache->branch_out = std::move(branch_out);
    cache->trunk_out = std::move(trunk_out);
    cache->fused = std::move(fused);
    cache->valid = true;
  }
  return out;
}

struct DeepOnetGrads {
  nn::MlpGrads branch;
  nn::MlpGrads trunk;
  std::vector<LinearHead> heads;  // gradient tensors, same shapes as heads
};

inline DeepOnetGrads deeponet_backward(const DeepOnetModel& model,
                                       const DeepOnetCache& cache,
                                       const Mat& upstream) {
  if (!cache.valid) {
    throw std::runtime_error("deeponet_backward: cache not produced by forward");
  }
  const auto& cfg = model.config;
  const Eigen::Index n = cache.trunk_out.rows();
  const Eigen::Index batch = cache.branch_out.rows();
  if (upstream.rows() != batch ||
      upstream.cols() != static_cast<Eigen::Index>(cfg.n_params) * n) {
    throw shape_error("deeponet_backward: upstream shape mismatch");
  }
  DeepOnetGrads grads;
  Mat d_branch_out = Mat::Zero(batch, n);
  Mat d_trunk_out = Mat::Zero(n, cfg.n_params);
  Mat d_fused;
  for (int k = 0; k < cfg.n_params; ++k) {
    const auto dz = upstream.middleCols(static_cast<Eigen::Index>(k) * n, n);
    if (cfg.with_heads) {
      LinearHead hg;
      matmul_at_b(cache.fused[k], Mat(dz), hg.w);
      hg.b = dz.colwise().sum();
      grads.heads.push_back(std::move(hg));
      matmul_a_bt(Mat(dz), model.heads[k].w, d_fused);
    } else {
      d_fused = dz;
    }
    // fused[k](b,i) = branch_out(b,i) * trunk_out(i,k)
    d_branch_out.array() +=
        d_fused.array().rowwise() * cache.trunk_out.col(k).transpose().array();
    d_trunk_out.col(k) =
        (d_fused.array() * cache.branch_out.array()).colwise().sum().transpose();
  }
  grads.branch = nn::mlp_backward(model.branch, cache.branch, d_branch_out);
  grads.trunk = nn::mlp_backward(model.trunk, cache.trunk, d_trunk_out);
  return grads;
}

// ---------------------------------------------------------------------------
// Flat parameter views (checkpoint concatenation order: branch layers in
// order, weights row-major then bias; then trunk; then heads)

inline std::vector<nn::TensorRef> collect_params(DeepOnetModel& model) {
  std::vector<nn::TensorRef> refs;
  nn::collect_refs(model.branch, "branch", refs);
  nn::collect_refs(model.trunk, "trunk", refs);
  for (std::size_t k = 0; k < model.heads.size(); ++k) {
    refs.push_back({"head" + std::to_string(k) + ".weight", model.heads[k].w.data(),
                    model.heads[k].w.size()});
    refs.push_back({"head" + std::to_string(k) + ".bias", model.heads[k].b.data(),
                    model.heads[k].b.size()});
  }
  return refs;
}

inline std::vector<nn::TensorRef> collect_grads(DeepOnetGrads& grads) {
  std::vector<nn::TensorRef> refs;
  nn::collect_refs(grads.branch, "branch", refs);
  nn::collect_refs(grads.trunk, "trunk", refs);
  for (std::size_t k = 0; k < grads.heads.size(); ++k) {
    refs.push_back({"head" + std::to_string(k) + ".weight", grads.heads[k].w.data(),
                    grads.heads[k].w.size()});
    refs.push_back({"head" + std::to_string(k) + ".bias", grads.heads[k].b.data(),
                    grads.heads[k].b.size()});
  }
  return refs;
}

// ---------------------------------------------------------------------------
// Checkpoints: model.json + weights.f32le (+ coords.f32le when attached)

inline constexpr int kCheckpointFormatVersion = 1;

inline ordered_json config_to_json(const DeepOnetConfig& cfg) {
  ordered_json j;
  j["n_input"] = cfg.n_input;
  j["n_points"] = cfg.n_points;
  j["n_params"] = cfg.n_params;
  j["branch_hidden"] = cfg.branch_hidden;
  j["trunk_hidden"] = cfg.trunk_hidden;
  j["with_heads"] = cfg.with_heads;
  j["dropout_rate"] = cfg.dropout_rate;
  j["seed"] = cfg.seed;
  return j;
}

inline DeepOnetConfig config_from_json(const ordered_json& j) {
  DeepOnetConfig cfg;
  cfg.n_input = j.at("n_input").get<int>();
  cfg.n_points = j.at("n_points").get<int>();
  cfg.n_params = j.at("n_params").get<int>();
  cfg.branch_hidden = j.at("branch_hidden").get<std::vector<int>>();
  cfg.trunk_hidden = j.at("trunk_hidden").get<std::vector<int>>();
  cfg.with_heads = j.at("with_heads").get<bool>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

inline void checkpoint_save(DeepOnetModel& model, const std::filesystem::path& dir,
                            const ordered_json& provenance = ordered_json::object()) {
  std::filesystem::create_directories(dir);
  const auto refs = collect_params(model);
  std::size_t total = 0;
  for (const auto& r : refs) total += static_cast<std::size_t>(r.size);
  std::vector<double> flat;
  flat.reserve(total);
  for (const auto& r : refs) flat.insert(flat.end(), r.data, r.data + r.size);
  write_f32le(dir / "weights.f32le", flat.data(), flat.size());
  ordered_json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["config"] = config_to_json(model.config);
  header["param_count"] = param_count(model);
  header["parameter_order"] = {"P", "V_o", "k"};
  header["scaler"] = model.scaler.fitted ? scaler_to_json(model.scaler) : ordered_json();
  header["blob_sha256"] = sha256_file(dir / "weights.f32le");
  if (model.coords.rows() > 0) {
    write_f32le(dir / "coords.f32le", model.coords.data(), model.coords.size());
    header["coords_sha256"] = sha256_file(dir / "coords.f32le");
  }
  if (!provenance.empty()) header["provenance"] = provenance;
  // blob written first: a header never exists without its weights
  write_text_atomic(dir / "model.json", header.dump(2) + "\n");
}

inline DeepOnetModel checkpoint_load(const std::filesystem::path& dir) {
  const auto header_path = dir / "model.json";
  if (!std::filesystem::exists(header_path)) {
    throw io_error("checkpoint_load: missing " + header_path.string());
  }
  ordered_json header = ordered_json::parse(read_text(header_path));
  if (header.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw corruption_error("checkpoint_load: unsupported format version");
  }
  const auto blob_path = dir / "weights.f32le";
  if (!std::filesystem::exists(blob_path)) {
    throw corruption_error("checkpoint_load: missing blob file " + blob_path.string());
  }
  if (sha256_file(blob_path) != header.at("blob_sha256").get<std::string>()) {
    throw corruption_error("checkpoint_load: blob checksum mismatch");
  }
  DeepOnetModel model = build_deeponet(config_from_json(header.at("config")));
  const long expected = header.at("param_count").get<long>();
  if (expected != param_count(model)) {
    throw corruption_error("checkpoint_load: parameter count mismatch");
  }
  const auto flat = read_f32le(blob_path, static_cast<std::size_t>(expected));
  std::size_t pos = 0;
  for (auto& r : collect_params(model)) {
    std::copy(flat.begin() + pos, flat.begin() + pos + r.size, r.data);
    pos += static_cast<std::size_t>(r.size);
  }
  for (auto& r : collect_params(model)) {
    Eigen::Map<Eigen::ArrayXd> a(r.data, r.size);
    if (!a.isFinite().all()) {
      throw corruption_error("checkpoint_load: non-finite entries in " + r.name);
    }
  }
  if (!header.at("scaler").is_null()) {
    model.scaler = scaler_from_json(header.at("scaler"));
  }
  if (header.contains("coords_sha256")) {
    const auto coords_path = dir / "coords.f32le";
    if (!std::filesystem::exists(coords_path)) {
      throw corruption_error("checkpoint_load: missing coords file " +
                             coords_path.string());
    }
    if (sha256_file(coords_path) != header.at("coords_sha256").get<std::string>()) {
      throw corruption_error("checkpoint_load: coords checksum mismatch");
    }
    const auto raw = read_f32le(coords_path,
                                static_cast<std::size_t>(model.config.n_points) * 3);
    model.coords.resize(model.config.n_points, 3);
    std::copy(raw.begin(), raw.end(), model.coords.data());
  }
  return model;
}

// ---------------------------------------------------------------------------
// Single-scenario prediction (the serving / CLI inference path)

enum class Space { scaled, physical };

inline const char* space_name(Space s) {
  return s == Space::scaled ? "scaled" : "physical";
}

struct FieldPrediction {
  Mat values;  // 3 x N
  Space space = Space::scaled;
  double seconds = 0.0;  // wall time of scale -> forward -> unscale
};

/// Scale the inlet velocity, run one inference forward pass, optionally map
/// back to physical units. Requires scaler + coordinates attached.
inline FieldPrediction predict_fields(const DeepOnetModel& model, double v_in,
                                      Space space) {
  if (!model.has_context()) {
    throw config_error("predict_fields: model lacks scaler/coordinate context");
  }
  if (!std::isfinite(v_in)) {
    throw std::invalid_argument("predict_fields: non-finite inlet velocity");
  }
  const double t0 = wall_seconds();
  Mat u(1, 1);
  u(0, 0) = model.scaler.input.apply(v_in);
  const Mat coords_scaled = apply_coord_scaler(model.coords, model.scaler);
  const Mat out = deeponet_forward(model, u, coords_scaled, RunMode::inference);
  const int n = model.config.n_points;
  FieldPrediction pred;
  pred.space = space;
  pred.values.resize(kNumParams, n);
  for (int k = 0; k < kNumParams; ++k) {
    for (int i = 0; i < n; ++i) {
      const double s = out(0, static_cast<Eigen::Index>(k) * n + i);
      pred.values(k, i) = space == Space::physical ? model.scaler.field[k].invert(s) : s;
    }
  }
  pred.seconds = wall_seconds() - t0;
  return pred;
}

/// Canonical prediction document shared by the HTTP service and the CLI, so
/// both emit byte-identical bodies for the same checkpoint and input.
inline ordered_json prediction_to_json(const DeepOnetModel& model,
                                       const FieldPrediction& pred,
                                       const std::string& model_checksum) {
  ordered_json j;
  j["n_points"] = model.config.n_points;
  j["parameter_order"] = {"P", "V_o", "k"};
  j["space"] = space_name(pred.space);
  j["model_checksum"] = model_checksum;
  for (int k = 0; k < kNumParams; ++k) {
    std::vector<double> vals(pred.values.row(k).begin(), pred.values.row(k).end());
    j[kParamNames[k]] = vals;
  }
  return j;
}

}  // namespace hotleg
