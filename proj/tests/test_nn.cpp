#include "hotleg/nn.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace hotleg;
using namespace hotleg::nn;

namespace {

// Test-only quadratic objective: L = 1/2 sum (y - target)^2.
OutputLoss quadratic_loss(const Mat& target) {
  OutputLoss loss;
  loss.value = [target](const Mat& y) { return 0.5 * (y - target).squaredNorm(); };
  loss.grad = [target](const Mat& y) { return Mat(y - target); };
  return loss;
}

}  // namespace

TEST_CASE("xavier_init respects the Glorot-uniform bound") {
  const double bound = std::sqrt(6.0 / 2.0);  // in=out=1
  for (std::uint64_t seed : {7ull, 8ull, 9ull}) {
    Mat w = xavier_init(1, 1, seed);
    REQUIRE(std::abs(w(0, 0)) <= bound);
  }
  Mat big = xavier_init(64, 48, 3);
  const double b = std::sqrt(6.0 / (64 + 48));
  REQUIRE(big.minCoeff() >= -b);
  REQUIRE(big.maxCoeff() <= b);
}

TEST_CASE("xavier_init is deterministic per seed") {
  Mat a = xavier_init(17, 23, 1234);
  Mat b = xavier_init(17, 23, 1234);
  REQUIRE(a == b);  // bitwise
  Mat c = xavier_init(17, 23, 1235);
  REQUIRE(a != c);
}

TEST_CASE("xavier_init sample mean vanishes at 512x512") {
  Mat w = xavier_init(512, 512, 99);
  REQUIRE(std::abs(w.mean()) < 0.01);
}

TEST_CASE("xavier_init rejects bad dimensions") {
  REQUIRE_THROWS_AS(xavier_init(0, 3, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(xavier_init(3, -1, 1), std::invalid_argument);
}

TEST_CASE("mlp_forward identity and hand cases") {
  SECTION("identity weights pass input through") {
    Mlp mlp;
    mlp.layers.push_back({Mat::Identity(2, 2), Vec::Zero(2), Activation::linear});
    Mat x(1, 2);
    x << 0.3, -0.2;
    Mat y = mlp_forward(mlp, x, no_dropout());
    REQUIRE(y(0, 0) == Catch::Approx(0.3));
    REQUIRE(y(0, 1) == Catch::Approx(-0.2));
  }
  SECTION("relu 1->1, w=2, b=1") {
    Mlp mlp;
    Mat w(1, 1);
    w << 2.0;
    Vec b(1);
    b << 1.0;
    mlp.layers.push_back({w, b, Activation::relu});
    Mat x(1, 1);
    x << 3.0;
    REQUIRE(mlp_forward(mlp, x, no_dropout())(0, 0) == Catch::Approx(7.0));
    x << -3.0;
    REQUIRE(mlp_forward(mlp, x, no_dropout())(0, 0) == 0.0);
  }
  SECTION("zero weights give the bias for any input") {
    Mlp mlp;
    Vec b(3);
    b << 0.5, -1.5, 2.0;
    mlp.layers.push_back({Mat::Zero(4, 3), b, Activation::linear});
    Mat x = Mat::Random(5, 4);
    Mat y = mlp_forward(mlp, x, no_dropout());
    for (int r = 0; r < 5; ++r) {
      REQUIRE(y(r, 0) == 0.5);
      REQUIRE(y(r, 1) == -1.5);
      REQUIRE(y(r, 2) == 2.0);
    }
  }
  SECTION("dimension mismatch throws") {
    Mlp mlp = make_mlp({3, 4, 2}, 0);
    Mat x(1, 5);
    x.setZero();
    REQUIRE_THROWS_AS(mlp_forward(mlp, x, no_dropout()), shape_error);
  }
}

TEST_CASE("mlp_backward hand case and zero upstream") {
  SECTION("zero upstream gradient yields zero parameter gradients") {
    Mlp mlp = make_mlp({3, 5, 2}, 11);
    Mat x = Mat::Random(4, 3);
    MlpCache cache;
    mlp_forward(mlp, x, no_dropout(), &cache);
    MlpGrads g = mlp_backward(mlp, cache, Mat::Zero(4, 2));
    for (const auto& dw : g.dw) REQUIRE(dw.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& db : g.db) REQUIRE(db.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("1-layer linear net, loss = 0.5 (wx-y)^2, x=2, w=1, y=0 -> dL/dw = 4") {
    Mlp mlp;
    Mat w(1, 1);
    w << 1.0;
    mlp.layers.push_back({w, Vec::Zero(1), Activation::linear});
    Mat x(1, 1);
    x << 2.0;
    MlpCache cache;
    Mat y = mlp_forward(mlp, x, no_dropout(), &cache);
    // dL/dy = y - target = 2
    MlpGrads g = mlp_backward(mlp, cache, y);
    REQUIRE(g.dw[0](0, 0) == Catch::Approx(4.0));
  }
  SECTION("stale cache rejected") {
    Mlp a = make_mlp({2, 3, 1}, 0);
    Mlp b = make_mlp({2, 4, 4, 1}, 0);
    MlpCache cache;
    mlp_forward(a, Mat::Random(2, 2), no_dropout(), &cache);
    REQUIRE_THROWS(mlp_backward(b, cache, Mat::Zero(2, 1)));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    Mlp mlp = make_mlp({4, 5, 5, 3}, 100 + trial);
    Mat x(3, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
    Mat target(3, 3);
    for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = rng.uniform(-1, 1);
    auto report = finite_diff_check(mlp, x, quadratic_loss(target), 1e-4);
    INFO("worst " << report.worst_param << " rel err " << report.worst_rel_error);
    REQUIRE(report.pass);
  }
}

TEST_CASE("finite_diff_check linear net is near machine precision") {
  Mlp mlp;
  Mat w(2, 2);
  w << 0.7, -0.3, 0.1, 1.2;
  Vec b(2);
  b << 0.05, -0.4;
  mlp.layers.push_back({w, b, Activation::linear});
  Mat x(2, 2);
  x << 1.0, -2.0, 0.5, 0.25;
  Mat target = Mat::Zero(2, 2);
  auto report = finite_diff_check(mlp, x, quadratic_loss(target), 1e-4);
  REQUIRE(report.worst_rel_error < 1e-8);
}

TEST_CASE("finite_diff_check flags a corrupted gradient") {
  Mlp mlp = make_mlp({2, 3, 1}, 5);
  Mat x(2, 2);
  x << 0.4, -0.7, 1.1, 0.2;
  Mat target(2, 1);
  target << 0.5, -0.25;
  auto loss = quadratic_loss(target);
  MlpCache cache;
  Mat out = mlp_forward(mlp, x, no_dropout(), &cache);
  MlpGrads grads = mlp_backward(mlp, cache, loss.grad(out));
  for (auto& dw : grads.dw) dw *= 2.0;  // corrupt
  for (auto& db : grads.db) db *= 2.0;
  std::vector<TensorRef> params, analytic;
  collect_refs(mlp, "mlp", params);
  collect_refs(grads, "mlp", analytic);
  auto eval = [&]() { return loss.value(mlp_forward(mlp, x, no_dropout())); };
  auto report = finite_diff_check(params, eval, analytic, 1e-4);
  REQUIRE_FALSE(report.pass);
}

TEST_CASE("finite_diff_check validates tolerance") {
  Mlp mlp = make_mlp({2, 2}, 0);
  Mat x = Mat::Zero(1, 2);
  REQUIRE_THROWS_AS(finite_diff_check(mlp, x, quadratic_loss(Mat::Zero(1, 2)), 0.0),
                    std::invalid_argument);
}

TEST_CASE("adam fixed point and first-step direction") {
  SECTION("zero gradient, zero decay: parameters exactly unchanged") {
    Mlp mlp = make_mlp({2, 3, 1}, 7);
    std::vector<TensorRef> params;
    collect_refs(mlp, "mlp", params);
    AdamState state = AdamState::init({.learning_rate = 0.1}, params);
    Mlp copy = mlp;
    MlpGrads zeros;
    for (const auto& l : mlp.layers) {
      zeros.dw.push_back(Mat::Zero(l.w.rows(), l.w.cols()));
      zeros.db.push_back(Vec::Zero(l.b.size()));
    }
    std::vector<TensorRef> grads;
    collect_refs(zeros, "mlp", grads);
    for (int i = 0; i < 5; ++i) adam_step(state, params, grads);
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
      REQUIRE(mlp.layers[l].w == copy.layers[l].w);
      REQUIRE(mlp.layers[l].b == copy.layers[l].b);
    }
    REQUIRE(state.step_count == 5);
  }
  SECTION("first step moves by ~ -lr * sign(g)") {
    Mat w(1, 2);
    w << 1.0, -2.0;
    std::vector<TensorRef> params{{"w", w.data(), 2}};
    AdamState state = AdamState::init({.learning_rate = 1e-3}, params);
    Mat g(1, 2);
    g << 0.37, -4.2;
    std::vector<TensorRef> grads{{"w", g.data(), 2}};
    adam_step(state, params, grads);
    REQUIRE(w(0, 0) == Catch::Approx(1.0 - 1e-3).epsilon(1e-6));
    REQUIRE(w(0, 1) == Catch::Approx(-2.0 + 1e-3).epsilon(1e-6));
  }
  SECTION("coupled L2: zero grad with decay acts like gradient wd*param") {
    Mat w(1, 1);
    w << 1.0;
    std::vector<TensorRef> params{{"w", w.data(), 1}};
    AdamState state = AdamState::init(
        {.learning_rate = 1e-3, .weight_decay = 1.53625e-08}, params);
    Mat g = Mat::Zero(1, 1);
    std::vector<TensorRef> grads{{"w", g.data(), 1}};
    adam_step(state, params, grads);
    // first moment is (1-beta1) * effective gradient
    REQUIRE(state.first_moment[0](0) == Catch::Approx(0.1 * 1.53625e-08));
    REQUIRE(w(0, 0) < 1.0);  // decays toward zero
  }
  SECTION("non-finite gradient is rejected with the block name") {
    Mat w(1, 1);
    w << 1.0;
    std::vector<TensorRef> params{{"branch.layer0.weight", w.data(), 1}};
    AdamState state = AdamState::init({}, params);
    Mat g(1, 1);
    g << std::numeric_limits<double>::quiet_NaN();
    std::vector<TensorRef> grads{{"branch.layer0.weight", g.data(), 1}};
    REQUIRE_THROWS_WITH(adam_step(state, params, grads),
                        Catch::Matchers::ContainsSubstring("branch.layer0.weight"));
  }
}

TEST_CASE("param_count closed form") {
  REQUIRE(param_count(std::vector<int>{2, 3}) == 9);
  REQUIRE(param_count(std::vector<int>{1, 512, 512, 512, 11340}) == 6343756);
  // per-layer sum: 2048 + 262656 + 131328 + 771
  REQUIRE(param_count(std::vector<int>{3, 512, 512, 256, 3}) == 396803);
}

TEST_CASE("param_count matches per-entry enumeration") {
  // independent oracle: count scalars through the parameter refs
  Mlp mlp = make_mlp({7, 13, 5, 2}, 3);
  std::vector<TensorRef> refs;
  collect_refs(mlp, "mlp", refs);
  long total = 0;
  for (const auto& r : refs) total += r.size;
  REQUIRE(total == param_count(mlp));
}

TEST_CASE("dropout") {
  Mlp mlp = make_mlp({8, 64, 64, 4}, 21);
  Mat x = Mat::Random(16, 8);
  SECTION("inference mode is the identity map") {
    DropoutSpec inference{0.3, DropoutSpec::Mode::inference, 7};
    Mat with = mlp_forward(mlp, x, inference);
    Mat without = mlp_forward(mlp, x, no_dropout());
    REQUIRE(with == without);
  }
  SECTION("train mode zeroes about `rate` of hidden activations") {
    DropoutSpec spec{0.3, DropoutSpec::Mode::train, 99};
    MlpCache cache;
    mlp_forward(mlp, x, spec, &cache);
    long zeroed = 0, total = 0;
    REQUIRE(cache.mask[0].size() > 0);
    for (int l = 0; l < 2; ++l) {
      zeroed += (cache.mask[l].array() == 0.0).count();
      total += cache.mask[l].size();
    }
    const double frac = static_cast<double>(zeroed) / total;
    REQUIRE(frac == Catch::Approx(0.3).margin(0.05));
  }
  SECTION("inverted dropout preserves the expected activation") {
    // mean over many seeds of a dropped-then-scaled hidden activation equals
    // the undropped activation
    Mat xs = Mat::Constant(4, 8, 0.5);
    MlpCache ref_cache;
    mlp_forward(mlp, xs, no_dropout(), &ref_cache);
    const Mat undropped = ref_cache.post[0];  // first hidden activation
    Mat sum = Mat::Zero(undropped.rows(), undropped.cols());
    const int reps = 4000;
    for (int i = 0; i < reps; ++i) {
      DropoutSpec spec{0.3, DropoutSpec::Mode::train, 1000 + static_cast<std::uint64_t>(i)};
      MlpCache cache;
      mlp_forward(mlp, xs, spec, &cache);
      sum += cache.post[0];
    }
    const double mean_ref = undropped.cwiseAbs().mean();
    const double err = ((sum / reps) - undropped).cwiseAbs().mean();
    REQUIRE(err / mean_ref < 0.01);
  }
}

TEST_CASE("training-step determinism is bitwise") {
  auto run = [](std::uint64_t seed) {
    Mlp mlp = make_mlp({3, 16, 2}, seed);
    std::vector<TensorRef> params;
    collect_refs(mlp, "mlp", params);
    AdamState state = AdamState::init({.learning_rate = 1e-2}, params);
    Rng rng(555);
    Mat x(6, 3), t(6, 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-1, 1);
    for (int step = 0; step < 20; ++step) {
      MlpCache cache;
      Mat y = mlp_forward(mlp, x, no_dropout(), &cache);
      MlpGrads grads = mlp_backward(mlp, cache, Mat(y - t));
      std::vector<TensorRef> grad_refs;
      collect_refs(grads, "mlp", grad_refs);
      adam_step(state, params, grad_refs);
    }
    return mlp;
  };
  Mlp a = run(77), b = run(77);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    REQUIRE(a.layers[l].w == b.layers[l].w);
    REQUIRE(a.layers[l].b == b.layers[l].b);
  }
}
