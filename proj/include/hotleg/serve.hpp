#pragma once

// HTTP virtual-sensor service: inlet velocity in, full center-plane fields
// out. Endpoints: POST /predict, GET /health, GET /metadata. The prediction
// body is produced by the same library path as the CLI `infer` command, so
// the two are byte-identical for the same checkpoint and input; per-request
// inference time is reported in the X-Inference-Seconds response header.

#include "hotleg/common.hpp"
#include "hotleg/deeponet.hpp"

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>

namespace hotleg::serve {

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string checkpoint_dir;
  int max_concurrent = 8;
  Space default_space = Space::physical;
};

struct Response {
  int status = 200;
  std::string body;
  double inference_seconds = -1.0;  // >= 0 only for successful predictions
};

class SensorService {
 public:
  explicit SensorService(const ServeConfig& cfg) : cfg_(cfg) {
    if (cfg.port < 0 || cfg.port > 65535) {
      throw config_error("serve: invalid port");
    }
    start_time_ = wall_seconds();
  }

  /// Loads the checkpoint; the service reports 503 on /health until done.
  void load() {
    DeepOnetModel model = checkpoint_load(cfg_.checkpoint_dir);
    if (!model.has_context()) {
      throw config_error("serve: checkpoint lacks scaler/coordinate context");
    }
    ordered_json header =
        ordered_json::parse(read_text(std::filesystem::path(cfg_.checkpoint_dir) / "model.json"));
    checksum_ = header.at("blob_sha256").get<std::string>();
    model_ = std::make_shared<const DeepOnetModel>(std::move(model));
    loaded_.store(true, std::memory_order_release);
  }

  bool loaded() const { return loaded_.load(std::memory_order_acquire); }
  const std::string& checksum() const { return checksum_; }
  const DeepOnetModel& model() const { return *model_; }

  Response health() const {
    if (!loaded()) {
      return {503, ordered_json{{"status", "loading"}}.dump()};
    }
    ordered_json j;
    j["status"] = "ok";
    j["model_checksum"] = checksum_;
    j["n_points"] = model_->config.n_points;
    j["uptime_s"] = wall_seconds() - start_time_;
    return {200, j.dump()};
  }

  Response metadata() const {
    if (!loaded()) {
      return {503, ordered_json{{"status", "loading"}}.dump()};
    }
    ordered_json j;
    j["model_checksum"] = checksum_;
    j["config"] = config_to_json(model_->config);
    j["parameter_order"] = {"P", "V_o", "k"};
    j["scaler"] = scaler_to_json(model_->scaler);
    ordered_json coords = ordered_json::array();
    for (Eigen::Index i = 0; i < model_->coords.rows(); ++i) {
      coords.push_back({model_->coords(i, 0), model_->coords(i, 1), model_->coords(i, 2)});
    }
    j["coords"] = std::move(coords);
    return {200, j.dump()};
  }

  Response predict(const std::string& body) {
    if (!loaded()) {
      return {503, ordered_json{{"error", "model_loading"}}.dump()};
    }
    const int active = active_.fetch_add(1, std::memory_order_acq_rel) + 1;
    struct Release {
      std::atomic<int>& c;
      ~Release() { c.fetch_sub(1, std::memory_order_acq_rel); }
    } release{active_};
    if (active > cfg_.max_concurrent) {
      return {503, ordered_json{{"error", "overloaded"},
                                {"max_concurrent", cfg_.max_concurrent}}.dump()};
    }

    ordered_json req;
    try {
      req = ordered_json::parse(body);
    } catch (const nlohmann::json::out_of_range&) {
      // syntactically a number, but it overflows a double
      return {422, ordered_json{{"error", "v_in_not_finite"}}.dump()};
    } catch (const std::exception&) {
      return {400, ordered_json{{"error", "malformed_json"}}.dump()};
    }
    if (!req.is_object() || !req.contains("v_in") || !req["v_in"].is_number()) {
      return {400, ordered_json{{"error", "v_in_missing_or_not_a_number"}}.dump()};
    }
    const double v_in = req["v_in"].get<double>();
    if (!std::isfinite(v_in)) {
      return {422, ordered_json{{"error", "v_in_not_finite"}}.dump()};
    }
    Space space = cfg_.default_space;
    if (req.contains("space")) {
      if (!req["space"].is_string()) {
        return {400, ordered_json{{"error", "space_must_be_string"}}.dump()};
      }
      const std::string s = req["space"].get<std::string>();
      if (s == "scaled") {
        space = Space::scaled;
      } else if (s == "physical") {
        space = Space::physical;
      } else {
        return {400, ordered_json{{"error", "space_must_be_scaled_or_physical"}}.dump()};
      }
    }
    const auto model = model_;  // shared, immutable
    const FieldPrediction pred = predict_fields(*model, v_in, space);
    Response resp;
    resp.status = 200;
    resp.body = prediction_to_json(*model, pred, checksum_).dump();
    resp.inference_seconds = pred.seconds;
    return resp;
  }

  /// Blocking HTTP loop; `ready_port` (when given) receives the bound port
  /// before the listener starts accepting.
  bool run(httplib::Server& server, int* ready_port = nullptr) {
    server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      const auto r = health();
      res.status = r.status;
      res.set_content(r.body, "application/json");
    });
    server.Get("/metadata", [this](const httplib::Request&, httplib::Response& res) {
      const auto r = metadata();
      res.status = r.status;
      res.set_content(r.body, "application/json");
    });
    server.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
      const auto r = predict(req.body);
      res.status = r.status;
      if (r.inference_seconds >= 0.0) {
        res.set_header("X-Inference-Seconds", std::to_string(r.inference_seconds));
      }
      res.set_content(r.body, "application/json");
    });
    int port = cfg_.port;
    if (port == 0) {
      port = server.bind_to_any_port(cfg_.host);
      if (port < 0) return false;
      if (ready_port) *ready_port = port;
      return server.listen_after_bind();
    }
    if (!server.bind_to_port(cfg_.host, port)) return false;
    if (ready_port) *ready_port = port;
    return server.listen_after_bind();
  }

 private:
  ServeConfig cfg_;
  std::shared_ptr<const DeepOnetModel> model_;
  std::string checksum_;
  std::atomic<bool> loaded_{false};
  std::atomic<int> active_{0};
  double start_time_ = 0.0;
};

}  // namespace hotleg::serve
