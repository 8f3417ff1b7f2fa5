#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "ratelab/controller.hpp"
#include "ratelab/controller_io.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace ratelab;

TEST_CASE("gru cell with all-zero weights and state") {
  const GruWeights w(kHiddenDim, kHiddenDim);
  const Vec x = zeros(kHiddenDim);
  const Vec h = zeros(kHiddenDim);
  GruCache cache;
  const Vec out = gru_cell(w, x, h, &cache);
  for (double v : out) CHECK(v == 0.0);
  for (double v : cache.z) CHECK(v == 0.5);  // sigmoid(0)
  for (double v : cache.hcand) CHECK(v == 0.0);
}

TEST_CASE("gru cell with zero input decays the hidden state by z") {
  // All weights zero: z = r = 0.5 and hcand = 0, so h' = 0.5 h.
  const GruWeights w(kHiddenDim, kHiddenDim);
  const Vec x = zeros(kHiddenDim);
  Vec h(kHiddenDim);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = 0.3 - 0.01 * static_cast<double>(i % 7);
  const Vec out = gru_cell(w, x, h);
  for (std::size_t i = 0; i < h.size(); ++i) {
    CHECK(out[i] == Catch::Approx(0.5 * h[i]).epsilon(1e-15));
  }
}

TEST_CASE("gru hidden state stays strictly inside (-1,1)") {
  ControllerWeights w = init_controller_weights(3);
  Vec h = zeros(kHiddenDim);
  rng::Engine engine(11);
  for (int step = 0; step < 200; ++step) {
    Vec x(kHiddenDim);
    for (auto& v : x) v = (engine.uniform01() - 0.5) * 20.0;
    h = gru_cell(w.gru_b, x, h);
    for (double v : h) {
      REQUIRE(v > -1.0);
      REQUIRE(v < 1.0);
    }
  }
}

TEST_CASE("controller with zero head emits exactly zero") {
  const ControllerWeights w = init_controller_weights(5);
  ControllerState state;
  BudgetFeatures b;
  b.v = {-2.3, 0.1, -0.4, 0.5, -1.0};
  CodingStats c;
  c.v = {0.2, 0.8, 0.5, -2.0};
  const ControllerOutput out = controller_forward(w, state, b, c);
  CHECK(out.delta == 0.0);
}

TEST_CASE("controller output is bounded and the gate lies in (0,1)") {
  ControllerWeights w = init_controller_weights(17);
  rng::Engine engine(29);
  for (auto& v : w.head_w) v = (engine.uniform01() - 0.5) * 4.0;
  w.head_b = 0.7;

  ControllerState state;
  for (int i = 0; i < 500; ++i) {
    BudgetFeatures b;
    for (auto& v : b.v) v = (engine.uniform01() - 0.5) * 10.0;
    CodingStats c;
    for (auto& v : c.v) v = (engine.uniform01() - 0.5) * 10.0;
    const ControllerOutput out = controller_forward(w, state, b, c);
    state = out.state;
    REQUIRE(std::abs(out.delta) < w.delta_max);
    for (double g : out.gate) {
      REQUIRE(g > 0.0);
      REQUIRE(g < 1.0);
    }
    for (double v : state.h_b) REQUIRE(std::abs(v) < 1.0);
    for (double v : state.h_c) REQUIRE(std::abs(v) < 1.0);
  }
}

TEST_CASE("forward pass matches the straight-line oracle") {
  ControllerWeights w = init_controller_weights(7);
  rng::Engine engine(71);
  for (auto& v : w.head_w) v = (engine.uniform01() - 0.5) * 2.0;
  w.head_b = -0.31;

  BudgetFeatures b;
  b.v = {-2.3, 0.0, 0.0, 0.0, -1.39};
  CodingStats c;
  c.v = {0.2, 0.8, 0.5, 0.0};

  ControllerState state;
  const ControllerOutput out = controller_forward(w, state, b, c);
  const double expect = oracle::controller_forward_oracle(
      w, zeros(kHiddenDim), zeros(kHiddenDim), Vec(b.v.begin(), b.v.end()),
      Vec(c.v.begin(), c.v.end()));
  CHECK(out.delta == Catch::Approx(expect).margin(1e-12));

  // and again with nonzero recurrent state
  const ControllerOutput out2 = controller_forward(w, out.state, b, c);
  const double expect2 = oracle::controller_forward_oracle(w, out.state.h_b,
                                                           out.state.h_c,
                                                           Vec(b.v.begin(), b.v.end()),
                                                           Vec(c.v.begin(), c.v.end()));
  CHECK(out2.delta == Catch::Approx(expect2).margin(1e-12));
}

TEST_CASE("forward pass is bitwise deterministic") {
  ControllerWeights w = init_controller_weights(9);
  w.head_w[0] = 0.5;
  BudgetFeatures b;
  b.v = {-2.0, 0.2, 1.0, 0.25, -0.5};
  CodingStats c;
  c.v = {0.1, 0.9, 0.3, -1.0};
  ControllerState state;
  const double d1 = controller_forward(w, state, b, c).delta;
  const double d2 = controller_forward(w, state, b, c).delta;
  CHECK(d1 == d2);
}

TEST_CASE("gate endpoints reduce the fusion to a single branch") {
  ControllerWeights w = init_controller_weights(13);
  for (auto& v : w.head_w) v = 0.1;
  // Saturate the gate high: fused state must equal the coding branch.
  w.gate.w1.fill(0.0);
  w.gate.w2.fill(0.0);
  for (auto& v : w.gate.b1) v = 0.0;
  for (auto& v : w.gate.b2) v = 40.0;

  BudgetFeatures b;
  b.v = {-2.0, 0.1, 0.0, 0.5, -1.0};
  CodingStats c;
  c.v = {0.3, 0.7, 0.4, -0.7};
  ControllerState state;
  ControllerCache cache;
  controller_forward(w, state, b, c, &cache);
  for (std::size_t i = 0; i < kHiddenDim; ++i) {
    CHECK(cache.h_fused[i] == Catch::Approx(cache.h_c_new[i]).margin(1e-12));
  }

  for (auto& v : w.gate.b2) v = -40.0;
  controller_forward(w, state, b, c, &cache);
  for (std::size_t i = 0; i < kHiddenDim; ++i) {
    CHECK(cache.h_fused[i] == Catch::Approx(cache.h_b_new[i]).margin(1e-12));
  }
}

TEST_CASE("compose_lambda applies the bounded residual") {
  const PiBounds bounds{};
  CHECK(compose_lambda(1024.0, 0.0, bounds) == 1024.0);
  CHECK(compose_lambda(1024.0, 0.1, bounds) ==
        Catch::Approx(1024.0 * std::exp(0.1)).epsilon(1e-15));
  CHECK(compose_lambda(1024.0, 0.1, bounds) == Catch::Approx(1131.71).epsilon(1e-4));
  CHECK(compose_lambda(4096.0, 0.5, bounds) == 4096.0);
  CHECK(compose_lambda(32.0, -0.5, bounds) == 32.0);
}

TEST_CASE("parameter count is reported and in the expected range") {
  const ControllerWeights w;
  const std::size_t count = w.parameter_count();
  CHECK(count == 71041);
  CHECK(count >= 60000);
  CHECK(count <= 120000);
}

TEST_CASE("weight save/load round-trips bitwise") {
  ControllerWeights w = init_controller_weights(21, 0.17);
  rng::Engine engine(5);
  for (auto& v : w.head_w) v = engine.uniform01() - 0.5;
  w.head_b = 0.123456789012345;

  TempDir tmp;
  const auto path = (tmp.path / "weights.json").string();
  save_weights(w, path, 21);
  const ControllerWeights back = load_weights(path);

  CHECK(back.delta_max == w.delta_max);
  CHECK(back.head_b == w.head_b);
  const auto va = param_views(w);
  const auto vb = param_views(back);
  for (std::size_t k = 0; k < va.size(); ++k) {
    REQUIRE(va[k].count == vb[k].count);
    for (std::size_t i = 0; i < va[k].count; ++i) {
      REQUIRE(va[k].data[i] == vb[k].data[i]);
    }
  }
}

TEST_CASE("weight loading rejects malformed files") {
  TempDir tmp;
  const auto truncated = (tmp.path / "truncated.json").string();
  {
    ControllerWeights w = init_controller_weights(3);
    save_weights(w, truncated);
    std::error_code ec;
    std::filesystem::resize_file(truncated, 2000, ec);
    REQUIRE(!ec);
  }
  CHECK_THROWS_WITH(load_weights(truncated), Catch::Matchers::ContainsSubstring("malformed"));

  const auto bad_shape = (tmp.path / "bad_shape.json").string();
  {
    ControllerWeights w = init_controller_weights(3);
    save_weights(w, bad_shape);
    std::ifstream in(bad_shape);
    nlohmann::json doc;
    in >> doc;
    in.close();
    doc["tensors"]["gate.w1"].erase(0);  // drop one row
    std::ofstream out(bad_shape);
    out << doc.dump();
  }
  CHECK_THROWS_WITH(load_weights(bad_shape),
                    Catch::Matchers::ContainsSubstring("gate.w1") &&
                        Catch::Matchers::ContainsSubstring("shape"));

  CHECK_THROWS_AS(load_weights((tmp.path / "absent.json").string()), std::runtime_error);
}

TEST_CASE("initialization is deterministic in the seed and zero-headed") {
  const ControllerWeights a = init_controller_weights(77);
  const ControllerWeights b = init_controller_weights(77);
  const ControllerWeights c = init_controller_weights(78);
  const auto va = param_views(a);
  const auto vb = param_views(b);
  const auto vc = param_views(c);
  bool any_diff = false;
  for (std::size_t k = 0; k < va.size(); ++k) {
    for (std::size_t i = 0; i < va[k].count; ++i) {
      REQUIRE(va[k].data[i] == vb[k].data[i]);
      if (va[k].data[i] != vc[k].data[i]) any_diff = true;
    }
  }
  CHECK(any_diff);
  for (double v : a.head_w) CHECK(v == 0.0);
  CHECK(a.head_b == 0.0);
}
