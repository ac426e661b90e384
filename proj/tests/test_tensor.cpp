#include "doctest.h"
#include "support.hpp"

using namespace stormcnn;

TEST_SUITE("tensor") {
  TEST_CASE("create fills every element") {
    const Tensor zeros = Tensor::create({2, 2}, 0.0f);
    CHECK(zeros.size() == 4);
    for (float v : zeros.values()) CHECK(v == 0.0f);

    const Tensor single = Tensor::create({1}, 3.5f);
    CHECK(single.size() == 1);
    CHECK(single[0] == 3.5f);

    const Tensor ones = Tensor::create({2, 3}, 1.0f);
    CHECK(ones.shape() == Shape{2, 3});
    for (float v : ones.values()) CHECK(v == 1.0f);
  }

  TEST_CASE("shape validation") {
    CHECK_THROWS_AS(Shape({2, 0}), ShapeError);
    CHECK_THROWS_AS(Shape({-1}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>(3)), ShapeError);
    CHECK(Shape{2, 3, 4}.strides() == std::vector<std::size_t>{12, 4, 1});
    const std::vector<std::size_t> idx{1, 2, 3};
    CHECK(Shape{2, 3, 4}.offset(idx) == 23);
    CHECK(Shape{2, 3, 4}.unravel(23) == idx);
  }

  TEST_CASE("matmul small cases") {
    const Tensor id({2, 2}, {1, 0, 0, 1});
    const Tensor m({2, 2}, {1, 2, 3, 4});
    CHECK(matmul(id, m) == m);
    const Tensor row({1, 2}, {1, 2});
    const Tensor col({2, 1}, {3, 4});
    const Tensor r = matmul(row, col);
    CHECK(r.shape() == Shape{1, 1});
    CHECK(r[0] == 11.0f);
    CHECK_THROWS_AS(matmul(row, row), ShapeError);
  }

  TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(7);
    const auto a = testing::random_tensor<double>({4, 5}, rng);
    const auto b = testing::random_tensor<double>({5, 3}, rng);
    const auto got = matmul(a, b), want = testing::naive_matmul(a, b);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }

  TEST_CASE("gemm transposes and larger blocks match the oracle") {
    Rng rng(11);
    for (auto [m, n, k] : {std::tuple{70, 33, 129}, std::tuple{3, 200, 17}, std::tuple{130, 5, 64}}) {
      const auto a = testing::random_tensor<double>({m, k}, rng);
      const auto b = testing::random_tensor<double>({k, n}, rng);
      const auto want = testing::naive_matmul(a, b);
      // Transposed copies.
      Tensor64 at({k, m}), bt({n, k});
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
      for (bool ta : {false, true})
        for (bool tb : {false, true}) {
          std::vector<double> c(std::size_t(m) * n, 1.0);
          kernels::gemm<double>(ta, tb, m, n, k, ta ? at.data() : a.data(), tb ? bt.data() : b.data(), c.data(), true);
          for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(c[i] == doctest::Approx(want[i] + 1.0).epsilon(1e-10));
        }
    }
  }

  TEST_CASE("map_zip") {
    const Tensor a({2}, {1, 2}), b({2}, {3, 4});
    CHECK(map_zip(ZipOp::add, a, b) == Tensor({2}, {4, 6}));
    CHECK(map_zip(ZipOp::sub, b, a) == Tensor({2}, {2, 2}));
    CHECK(map_zip(ZipOp::scale, Tensor({2}, {2, 4}), 0.5f) == Tensor({2}, {1, 2}));
    Rng rng(3);
    const auto x = testing::random_tensor<float>({3, 4}, rng);
    CHECK(map_zip(ZipOp::mul, x, Tensor({3, 4}, 0.0f)) == Tensor({3, 4}, 0.0f));
    CHECK_THROWS_AS(map_zip(ZipOp::add, a, Tensor({3}, 0.0f)), ShapeError);
  }

  TEST_CASE("reduce") {
    CHECK(reduce(ReduceOp::mean, Tensor({3}, {1, 2, 3}), {0})[0] == 2.0f);
    CHECK(reduce(ReduceOp::max, Tensor({2, 2}, {1, 5, 3, 2}), {1}) == Tensor({2}, {5, 3}));
    const Tensor colsum = reduce(ReduceOp::sum, Tensor({2, 2}, {1, 5, 3, 2}), {0});
    CHECK(colsum == Tensor({2}, {4, 7}));

    Rng rng(5);
    const auto x = testing::random_tensor<double>({3, 4}, rng);
    double sequential = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sequential += x[i];
    const auto total = reduce(ReduceOp::sum, x, {0, 1});
    CHECK(total.shape() == Shape{1});
    CHECK(total[0] == doctest::Approx(sequential).epsilon(1e-14));
    CHECK_THROWS_AS(reduce(ReduceOp::sum, x, {2}), ShapeError);
  }

  TEST_CASE("reshape keeps row-major order") {
    const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor r = t.reshaped({3, 2});
    CHECK(r.at({2, 1}) == 6.0f);
    CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
  }
}
