#include "hotleg/deeponet.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace hotleg;
namespace fs = std::filesystem;

namespace {

DeepOnetConfig tiny_config(bool heads = true) {
  DeepOnetConfig cfg;
  cfg.n_points = 8;
  cfg.branch_hidden = {10, 10};
  cfg.trunk_hidden = {10, 6};
  cfg.with_heads = heads;
  cfg.seed = 7;
  return cfg;
}

Mat tiny_coords(int n) {
  Mat coords(n, 3);
  Rng rng(3);
  for (Eigen::Index i = 0; i < coords.size(); ++i) coords.data()[i] = rng.uniform();
  return coords;
}

ScalerParams identity_scaler() {
  ScalerParams p;
  p.input = {0.0, 1.0};
  for (int k = 0; k < 3; ++k) p.field[k] = {0.0, 1.0};
  for (int c = 0; c < 3; ++c) p.coord[c] = {0.0, 1.0};
  p.fitted = true;
  return p;
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("hotleg_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("parameter counts for the reference configurations") {
  SECTION("full-scale heads configuration") {
    DeepOnetConfig cfg;
    cfg.n_points = 11340;
    cfg.branch_hidden = {512, 512, 512};
    cfg.trunk_hidden = {512, 512, 256};
    cfg.with_heads = true;
    // branch 6,343,756 + trunk 396,803 + heads 3*(11340^2 + 11340)
    const long heads = 3L * (11340L * 11340L + 11340L);
    REQUIRE(param_count(cfg) == 6343756L + 396803L + heads);
    REQUIRE(param_count(cfg) == 392561379L);
  }
  SECTION("budget-matched vanilla configuration") {
    DeepOnetConfig cfg;
    cfg.n_points = 11340;
    cfg.branch_hidden = std::vector<int>(11, 4096);
    cfg.trunk_hidden = std::vector<int>(10, 4096);
    cfg.with_heads = false;
    REQUIRE(param_count(cfg) == 365341775L);
  }
  SECTION("desk configuration builds and heads have the stated storage") {
    DeepOnetConfig cfg;
    cfg.n_points = 1260;
    cfg.with_heads = true;
    DeepOnetModel model = build_deeponet(cfg);
    REQUIRE(model.heads.size() == 3);
    for (const auto& h : model.heads) {
      REQUIRE(h.w.rows() == 1260);
      REQUIRE(h.w.cols() == 1260);
      REQUIRE((h.b.array() == 0.0).all());  // zero bias at construction
    }
    REQUIRE(param_count(model) == param_count(cfg));
  }
}

TEST_CASE("build_deeponet is deterministic and validates config") {
  DeepOnetModel a = build_deeponet(tiny_config());
  DeepOnetModel b = build_deeponet(tiny_config());
  REQUIRE(a.branch.layers[0].w == b.branch.layers[0].w);
  REQUIRE(a.heads[1].w == b.heads[1].w);

  DeepOnetConfig bad = tiny_config();
  bad.n_points = 0;
  REQUIRE_THROWS_AS(build_deeponet(bad), config_error);
  bad = tiny_config();
  bad.branch_hidden.clear();
  REQUIRE_THROWS_AS(build_deeponet(bad), config_error);
}

TEST_CASE("fuse broadcast semantics") {
  SECTION("all-ones branch returns the trunk columns") {
    Vec b = Vec::Ones(4);
    Mat t = Mat::Random(4, 3);
    Mat fused = fuse(b, t);
    for (int k = 0; k < 3; ++k) {
      for (int i = 0; i < 4; ++i) REQUIRE(fused(k, i) == t(i, k));
    }
  }
  SECTION("zero trunk annihilates") {
    Vec b = Vec::Random(5);
    Mat fused = fuse(b, Mat::Zero(5, 3));
    REQUIRE((fused.array() == 0.0).all());
  }
  SECTION("hand-computed 2-point case") {
    Vec b(2);
    b << 2.0, 3.0;
    Mat t(2, 3);
    t << 1.0, 0.0, -1.0, 0.5, 2.0, 1.0;
    Mat fused = fuse(b, t);
    REQUIRE(fused(0, 0) == 2.0);
    REQUIRE(fused(0, 1) == 1.5);
    REQUIRE(fused(1, 0) == 0.0);
    REQUIRE(fused(1, 1) == 6.0);
    REQUIRE(fused(2, 0) == -2.0);
    REQUIRE(fused(2, 1) == 3.0);
  }
  SECTION("length mismatch throws") {
    REQUIRE_THROWS_AS(fuse(Vec::Ones(3), Mat::Zero(4, 3)), shape_error);
  }
  SECTION("bilinearity") {
    Rng rng(17);
    Vec b1(6), b2(6);
    Mat t(6, 3);
    for (int i = 0; i < 6; ++i) {
      b1(i) = rng.uniform(-1, 1);
      b2(i) = rng.uniform(-1, 1);
    }
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-1, 1);
    Mat lhs = fuse(2.5 * b1, t);
    Mat rhs = 2.5 * fuse(b1, t);
    REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-14);
    Mat add = fuse(b1 + b2, t);
    Mat sum = fuse(b1, t) + fuse(b2, t);
    REQUIRE((add - sum).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("deeponet_forward shape and structural cases") {
  DeepOnetModel model = build_deeponet(tiny_config());
  Mat coords = tiny_coords(8);
  Mat u = Mat::Random(5, 1);

  SECTION("output shape is (B, 3, N) flattened") {
    Mat out = deeponet_forward(model, u, coords, RunMode::inference);
    REQUIRE(out.rows() == 5);
    REQUIRE(out.cols() == 3 * 8);
  }
  SECTION("zero heads give identically zero output") {
    for (auto& h : model.heads) {
      h.w.setZero();
      h.b.setZero();
    }
    Mat out = deeponet_forward(model, u, coords, RunMode::inference);
    REQUIRE((out.array() == 0.0).all());
  }
  SECTION("without heads the output equals fuse()") {
    DeepOnetModel vanilla = build_deeponet(tiny_config(false));
    Mat out = deeponet_forward(vanilla, u, coords, RunMode::inference);
    // row 0 against the per-scenario fuse() path
    Mat u0 = u.row(0);
    Vec branch_out =
        nn::mlp_forward(vanilla.branch, u0, nn::no_dropout()).row(0).transpose();
    Mat trunk_out = nn::mlp_forward(vanilla.trunk, coords, nn::no_dropout());
    Mat fused = fuse(branch_out, trunk_out);
    for (int k = 0; k < 3; ++k) {
      for (int i = 0; i < 8; ++i) {
        REQUIRE(out(0, k * 8 + i) == Catch::Approx(fused(k, i)).margin(1e-15));
      }
    }
  }
  SECTION("heads pin the coordinate count") {
    Mat wrong = tiny_coords(9);
    REQUIRE_THROWS_AS(deeponet_forward(model, u, wrong, RunMode::inference),
                      shape_error);
  }
  SECTION("inference is deterministic") {
    Mat a = deeponet_forward(model, u, coords, RunMode::inference);
    Mat b = deeponet_forward(model, u, coords, RunMode::inference);
    REQUIRE(a == b);
  }
  SECTION("head affinity: head(af) - head(0) = a (head(f) - head(0))") {
    const auto& head = model.heads[0];
    Mat f = Mat::Random(3, 8);
    Mat h0 = Mat::Zero(3, 8);
    h0.rowwise() += head.b.transpose();
    Mat hf = f * head.w;
    hf.rowwise() += head.b.transpose();
    Mat haf = Mat(3.0 * f) * head.w;
    haf.rowwise() += head.b.transpose();
    REQUIRE(((haf - h0) - 3.0 * (hf - h0)).cwiseAbs().maxCoeff() < 1e-10);
  }
  SECTION("trunk evaluation is pointwise: permuting coordinates permutes rows") {
    // The node-indexed fusion ties branch coefficients to node slots, so the
    // full no-heads output is not permutation covariant; the trunk is.
    DeepOnetModel vanilla = build_deeponet(tiny_config(false));
    Mat trunk_out = nn::mlp_forward(vanilla.trunk, coords, nn::no_dropout());
    std::vector<int> perm{3, 1, 7, 0, 5, 2, 6, 4};
    Mat permuted_coords(8, 3);
    for (int i = 0; i < 8; ++i) permuted_coords.row(i) = coords.row(perm[i]);
    Mat trunk_p = nn::mlp_forward(vanilla.trunk, permuted_coords, nn::no_dropout());
    for (int i = 0; i < 8; ++i) {
      for (int k = 0; k < 3; ++k) {
        REQUIRE(trunk_p(i, k) == Catch::Approx(trunk_out(perm[i], k)).margin(1e-14));
      }
    }
  }
}

TEST_CASE("deeponet gradients match finite differences (tiny model, heads on)") {
  DeepOnetModel model = build_deeponet(tiny_config());
  Mat coords = tiny_coords(8);
  Mat u = Mat::Random(3, 1);
  Mat target = Mat::Random(3, 24);

  auto loss_value = [&]() {
    Mat out = deeponet_forward(model, u, coords, RunMode::inference);
    return 0.5 * (out - target).squaredNorm();
  };
  DeepOnetCache cache;
  Mat out = deeponet_forward(model, u, coords, RunMode::inference, 0, &cache);
  DeepOnetGrads grads = deeponet_backward(model, cache, Mat(out - target));
  auto params = collect_params(model);
  auto analytic = collect_grads(grads);
  auto report = nn::finite_diff_check(params, loss_value, analytic, 1e-4);
  INFO("worst " << report.worst_param << " rel " << report.worst_rel_error);
  REQUIRE(report.pass);
}

TEST_CASE("checkpoint round trip") {
  auto dir = temp_dir("ckpt");
  DeepOnetModel model = build_deeponet(tiny_config());
  attach_context(model, tiny_coords(8), identity_scaler());
  checkpoint_save(model, dir);

  SECTION("forward outputs agree within float32 round-trip") {
    DeepOnetModel back = checkpoint_load(dir);
    Mat u(2, 1);
    u << 0.35, 0.8;
    Mat coords_scaled = apply_coord_scaler(model.coords, model.scaler);
    Mat a = deeponet_forward(model, u, coords_scaled, RunMode::inference);
    Mat b = deeponet_forward(back, u, coords_scaled, RunMode::inference);
    const double rel =
        (a - b).cwiseAbs().maxCoeff() / a.cwiseAbs().maxCoeff();
    REQUIRE(rel <= 1e-6);
  }
  SECTION("loaded param_count matches the header") {
    DeepOnetModel back = checkpoint_load(dir);
    auto header = ordered_json::parse(read_text(dir / "model.json"));
    REQUIRE(param_count(back) == header["param_count"].get<long>());
  }
  SECTION("truncated blob is rejected") {
    auto size = fs::file_size(dir / "weights.f32le");
    fs::resize_file(dir / "weights.f32le", size - 8);
    REQUIRE_THROWS_AS(checkpoint_load(dir), corruption_error);
  }
  SECTION("missing blob is named") {
    fs::remove(dir / "weights.f32le");
    REQUIRE_THROWS_WITH(checkpoint_load(dir),
                        Catch::Matchers::ContainsSubstring("weights.f32le"));
  }
  SECTION("version mismatch is rejected") {
    auto header = ordered_json::parse(read_text(dir / "model.json"));
    header["format_version"] = 999;
    write_text_atomic(dir / "model.json", header.dump(2));
    REQUIRE_THROWS_AS(checkpoint_load(dir), corruption_error);
  }
}

TEST_CASE("checkpoint header records the full-scale node count") {
  auto dir = temp_dir("ckpt_fullscale");
  DeepOnetConfig cfg;
  cfg.n_points = 11340;
  cfg.branch_hidden = {2};
  cfg.trunk_hidden = {2};
  cfg.with_heads = false;  // keep the blob small; header semantics are the point
  DeepOnetModel model = build_deeponet(cfg);
  checkpoint_save(model, dir);
  auto header = ordered_json::parse(read_text(dir / "model.json"));
  REQUIRE(header["config"]["n_points"].get<int>() == 11340);
}

TEST_CASE("predict_fields requires context and rejects non-finite input") {
  DeepOnetModel model = build_deeponet(tiny_config());
  REQUIRE_THROWS_AS(predict_fields(model, 0.7, Space::physical), config_error);
  attach_context(model, tiny_coords(8), identity_scaler());
  REQUIRE_THROWS_AS(
      predict_fields(model, std::numeric_limits<double>::quiet_NaN(), Space::physical),
      std::invalid_argument);
  auto pred = predict_fields(model, 0.7, Space::scaled);
  REQUIRE(pred.values.rows() == 3);
  REQUIRE(pred.values.cols() == 8);
  REQUIRE(pred.values.allFinite());
}
