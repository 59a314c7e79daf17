#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "paramask/kernels.hpp"
#include "paramask/rng.hpp"

using paramask::Rng;
namespace kern = paramask::kern;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("matmul_nn matches a hand-worked product") {
  // [1 2 3; 4 5 6] * [7 8; 9 10; 11 12]
  std::vector<double> a{1, 2, 3, 4, 5, 6};
  std::vector<double> b{7, 8, 9, 10, 11, 12};
  std::vector<double> c(4);
  kern::serial::matmul_nn(a.data(), b.data(), c.data(), 2, 3, 2);
  CHECK(c[0] == doctest::Approx(58));
  CHECK(c[1] == doctest::Approx(64));
  CHECK(c[2] == doctest::Approx(139));
  CHECK(c[3] == doctest::Approx(154));
}

TEST_CASE("accumulate adds on top of existing output") {
  std::vector<double> a{1, 2};
  std::vector<double> b{3, 4};
  std::vector<double> c{100};
  kern::serial::matmul_nn(a.data(), b.data(), c.data(), 1, 2, 1, true);
  CHECK(c[0] == doctest::Approx(111));
  kern::serial::matmul_nn(a.data(), b.data(), c.data(), 1, 2, 1, false);
  CHECK(c[0] == doctest::Approx(11));
}

TEST_CASE("transposed variants agree with plain matmul") {
  Rng rng(11);
  std::size_t m = 5, k = 7, n = 4;
  auto a = random_vec(m * k, rng);
  auto b = random_vec(k * n, rng);
  std::vector<double> ref(m * n);
  kern::serial::matmul_nn(a.data(), b.data(), ref.data(), m, k, n);

  std::vector<double> bt(n * k), at(k * m);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];

  std::vector<double> c1(m * n), c2(m * n);
  kern::serial::matmul_nt(a.data(), bt.data(), c1.data(), m, k, n);
  kern::serial::matmul_tn(at.data(), b.data(), c2.data(), m, k, n);
  for (std::size_t i = 0; i < m * n; ++i) {
    CHECK(c1[i] == doctest::Approx(ref[i]));
    CHECK(c2[i] == doctest::Approx(ref[i]));
  }
}

TEST_CASE("omp kernels are bitwise identical to serial") {
  Rng rng(42);
  SUBCASE("matmul family, small and above the dispatch cutoff") {
    for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{3, 2, 5},
                           {37, 23, 41},
                           {64, 64, 64}}) {
      auto a = random_vec(m * k, rng);
      auto b = random_vec(k * n, rng);
      std::vector<double> cs(m * n, 0.5), co(m * n, 0.5);
      kern::serial::matmul_nn(a.data(), b.data(), cs.data(), m, k, n, true);
      kern::omp::matmul_nn(a.data(), b.data(), co.data(), m, k, n, true);
      CHECK(bitwise_equal(cs, co));

      auto bt = random_vec(n * k, rng);
      std::vector<double> ds(m * n), dno(m * n);
      kern::serial::matmul_nt(a.data(), bt.data(), ds.data(), m, k, n);
      kern::omp::matmul_nt(a.data(), bt.data(), dno.data(), m, k, n);
      CHECK(bitwise_equal(ds, dno));

      auto ap = random_vec(k * m, rng);
      std::vector<double> es(m * n), eo(m * n);
      kern::serial::matmul_tn(ap.data(), b.data(), es.data(), m, k, n);
      kern::omp::matmul_tn(ap.data(), b.data(), eo.data(), m, k, n);
      CHECK(bitwise_equal(es, eo));
    }
  }
  SUBCASE("softmax and sigmoid") {
    auto x = random_vec(100 * 50, rng);
    std::vector<double> ys(x.size()), yo(x.size());
    kern::serial::softmax_rows(x.data(), ys.data(), 100, 50);
    kern::omp::softmax_rows(x.data(), yo.data(), 100, 50);
    CHECK(bitwise_equal(ys, yo));

    auto z = random_vec(20000, rng);
    std::vector<double> ss(z.size()), so(z.size());
    kern::serial::sigmoid(z.data(), ss.data(), z.size());
    kern::omp::sigmoid(z.data(), so.data(), z.size());
    CHECK(bitwise_equal(ss, so));
  }
}

TEST_CASE("dispatch wrapper matches serial on both sides of the cutoff") {
  Rng rng(7);
  for (std::size_t n : {4ul, 96ul}) {
    auto a = random_vec(n * n, rng);
    auto b = random_vec(n * n, rng);
    std::vector<double> cs(n * n), cd(n * n);
    kern::serial::matmul_nn(a.data(), b.data(), cs.data(), n, n, n);
    kern::matmul_nn(a.data(), b.data(), cd.data(), n, n, n);
    CHECK(bitwise_equal(cs, cd));
  }
}

TEST_CASE("softmax rows sum to one and survive large inputs") {
  std::vector<double> x{1000.0, 1001.0, 999.0, -5.0, 0.0, 5.0};
  std::vector<double> y(6);
  kern::serial::softmax_rows(x.data(), y.data(), 2, 3);
  for (double v : y) CHECK(std::isfinite(v));
  CHECK(y[0] + y[1] + y[2] == doctest::Approx(1.0));
  CHECK(y[3] + y[4] + y[5] == doctest::Approx(1.0));
  CHECK(y[1] > y[0]);
  CHECK(y[0] > y[2]);
}

TEST_CASE("sigmoid fixture") {
  std::vector<double> x{0.0, 100.0, -100.0};
  std::vector<double> y(3);
  kern::serial::sigmoid(x.data(), y.data(), 3);
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(1.0));
  CHECK(y[2] == doctest::Approx(0.0));
}

TEST_CASE("max_threads reports at least one thread") {
  CHECK(kern::max_threads() >= 1);
}
