#include <cmath>

#include "doctest.h"
#include "stormcnn/optim.hpp"
#include "support.hpp"

using namespace stormcnn;

TEST_SUITE("optim") {
  TEST_CASE("cross entropy values") {
    const auto uniform = cross_entropy(Tensor64({1, 2}, {0.5, 0.5}), Tensor64({1, 2}, {1, 0}));
    CHECK(uniform.loss == doctest::Approx(std::log(2.0)));
    CHECK(std::abs(uniform.loss - 0.6931) <= 1e-4);
    const auto perfect = cross_entropy(Tensor64({1, 2}, {1 - 1e-7, 1e-7}), Tensor64({1, 2}, {1, 0}));
    CHECK(perfect.loss == doctest::Approx(1e-7).epsilon(1e-3));
    CHECK(perfect.loss >= 0.0);
    // Exact zero probability is clipped, not infinite.
    const auto wrong = cross_entropy(Tensor64({1, 2}, {0, 1}), Tensor64({1, 2}, {1, 0}));
    CHECK(wrong.loss == doctest::Approx(-std::log(1e-7)));
    CHECK_THROWS_AS(cross_entropy(Tensor64({1, 2}, {0.5, 0.5}), Tensor64({1, 2}, {0.5, 0.5})), InputError);
    CHECK_THROWS_AS(cross_entropy(Tensor64({1, 2}, {0.5, 0.5}), Tensor64({2, 2}, {1, 0, 0, 1})), ShapeError);
  }

  TEST_CASE("fused gradient matches finite differences through softmax") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      const auto z = testing::random_tensor<double>({3, 2}, rng, -2, 2);
      Tensor64 y({3, 2});
      for (std::size_t r = 0; r < 3; ++r) y[r * 2 + rng.below(2)] = 1.0;
      const auto fused = cross_entropy(softmax(z), y).grad_logits;
      for (std::size_t i = 0; i < z.size(); ++i) {
        auto up = z, down = z;
        up[i] += 1e-5;
        down[i] -= 1e-5;
        const double numeric = (cross_entropy(softmax(up), y).loss - cross_entropy(softmax(down), y).loss) / 2e-5;
        CHECK(std::abs(numeric - fused[i]) <= 1e-5);
      }
    }
  }

  TEST_CASE("l2 penalty") {
    Tensor64 w({2}, {1, 2}), g({2}, {0, 0});
    std::vector<Param<double>> params{{"w", &w, &g, true}};
    CHECK(l2_penalty(params, 0.001) == doctest::Approx(0.005));
    CHECK(g[0] == doctest::Approx(0.002));
    CHECK(g[1] == doctest::Approx(0.004));

    Tensor64 g0({2}, {0.5, 0.5});
    std::vector<Param<double>> zero{{"w", &w, &g0, true}};
    CHECK(l2_penalty(zero, 0.0) == 0.0);
    CHECK(g0 == Tensor64({2}, {0.5, 0.5}));

    // Biases are not decayed.
    Tensor64 b({1}, {10}), gb({1}, {0});
    std::vector<Param<double>> bias{{"b", &b, &gb, false}};
    CHECK(l2_penalty(bias, 0.001) == 0.0);
    CHECK(gb[0] == 0.0);
  }

  TEST_CASE("sgd momentum steps") {
    Tensor64 w({1}, {1.0}), v({1}, {0.0});
    const Tensor64 g({1}, {0.5});
    sgd_momentum_step(w, g, v, 0.1, 0.9);
    CHECK(v[0] == doctest::Approx(-0.05));
    CHECK(w[0] == doctest::Approx(0.95));
    sgd_momentum_step(w, g, v, 0.1, 0.9);
    CHECK(v[0] == doctest::Approx(-0.095));
    CHECK(w[0] == doctest::Approx(0.855));

    Tensor64 w2({1}, {1.0}), v2({1}, {0.0});
    for (int i = 0; i < 3; ++i) sgd_momentum_step(w2, g, v2, 0.1, 0.0);
    CHECK(w2[0] == doctest::Approx(1.0 - 3 * 0.05));
  }

  TEST_CASE("optimizer defaults and lazy velocities") {
    SgdMomentum<double> opt;
    CHECK(opt.learning_rate() == doctest::Approx(0.001));
    CHECK(opt.momentum() == doctest::Approx(0.9));
    Tensor64 w({2}, {1, 1}), g({2}, {1, -1});
    opt.step({{"w", &w, &g, true}});
    REQUIRE(opt.velocities().size() == 1);
    CHECK(w[0] == doctest::Approx(0.999));
    CHECK(w[1] == doctest::Approx(1.001));
  }

  TEST_CASE("He uniform bounds and moments") {
    Rng rng(2);
    const auto a = he_uniform_init<double>({1000}, 50, rng);
    for (double v : a.values()) CHECK(std::abs(v) <= 0.34641);
    const auto b = he_uniform_init<double>({1000}, 6, rng);
    double peak = 0.0;
    for (double v : b.values()) peak = std::max(peak, std::abs(v));
    CHECK(peak <= 1.0);
    CHECK(peak > 0.99);

    const auto c = he_uniform_init<double>({100000}, 27, rng);
    double mean = 0.0, var = 0.0;
    for (double v : c.values()) mean += v;
    mean /= double(c.size());
    for (double v : c.values()) var += (v - mean) * (v - mean);
    var /= double(c.size() - 1);
    const double bound_sq = 6.0 / 27.0;
    CHECK(std::abs(mean) <= 0.01);
    CHECK(std::abs(var - bound_sq / 3.0) <= 0.1 * bound_sq / 3.0);
    CHECK_THROWS_AS(he_uniform_init<double>({3}, 0, rng), ConfigError);
  }
}
