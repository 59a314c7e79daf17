#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "gradcheck_util.hpp"
#include "paramask/errors.hpp"
#include "paramask/losses.hpp"
#include "paramask/rng.hpp"
#include "paramask/tensor.hpp"

using paramask::Rng;
using paramask::UserError;
using testutil::check_builder;
using testutil::draw;
namespace ad = paramask::ad;
namespace L = paramask::losses;

namespace {

double scalar_of(const std::function<ad::Var(ad::Tape&)>& build) {
  ad::Tape t;
  return t.scalar(build(t));
}

ad::Var vec(ad::Tape& t, std::vector<double> v) {
  std::size_t n = v.size();
  return t.input({n}, std::move(v));
}

constexpr double kExact = 1e-10;

}  // namespace

TEST_CASE("classification loss fixtures") {
  CHECK(scalar_of([](ad::Tape& t) {
          return L::classification_loss(t, vec(t, {0.5}), vec(t, {1}));
        }) == doctest::Approx(std::log(2.0)).epsilon(kExact));
  CHECK(scalar_of([](ad::Tape& t) {
          return L::classification_loss(t, vec(t, {0.9, 0.1}), vec(t, {1, 0}));
        }) == doctest::Approx(-2.0 * std::log(0.9)).epsilon(kExact));
  // perfect prediction survives the clamp
  CHECK(scalar_of([](ad::Tape& t) {
          return L::classification_loss(t, vec(t, {1.0, 0.0}), vec(t, {1, 0}));
        }) == doctest::Approx(0.0).epsilon(kExact));
}

TEST_CASE("sparsity loss fixtures") {
  auto ls = [](std::vector<double> z, double T) {
    return scalar_of([&](ad::Tape& t) { return L::sparsity_loss(t, vec(t, std::move(z)), T); });
  };
  CHECK(ls({1, 1, 1, 0, 0, 0, 0, 0, 0, 0}, 0.3) == doctest::Approx(0.0).epsilon(kExact));
  CHECK(ls(std::vector<double>(10, 1.0), 0.3) == doctest::Approx(0.7).epsilon(kExact));
  CHECK(ls({1, 0, 0, 0, 0}, 0.3) == doctest::Approx(0.1).epsilon(kExact));
}

TEST_CASE("continuity loss fixtures") {
  auto lc = [](std::vector<double> z) {
    return scalar_of([&](ad::Tape& t) { return L::continuity_loss(t, vec(t, std::move(z))); });
  };
  CHECK(lc({1, 1, 0, 0}) == doctest::Approx(1.0 / 3.0).epsilon(kExact));
  CHECK(lc({1, 0, 1, 0}) == doctest::Approx(1.0).epsilon(kExact));
  CHECK(lc({1, 1, 1}) == doctest::Approx(0.0).epsilon(kExact));
  CHECK(lc({0, 0, 0, 0}) == doctest::Approx(0.0).epsilon(kExact));
  CHECK(lc({1}) == 0.0);
}

TEST_CASE("loss-margin comprehensiveness fixtures") {
  auto lg = [](double lp, double lpc, double h) {
    return scalar_of([&](ad::Tape& t) {
      return L::comprehensiveness_margin(t, t.input_scalar(lp), t.input_scalar(lpc), h);
    });
  };
  CHECK(lg(0.5, 1.0, 0.3) == doctest::Approx(0.0).epsilon(kExact));
  CHECK(lg(1.0, 0.5, 0.1) == doctest::Approx(0.6).epsilon(kExact));
  CHECK(lg(0.8, 0.8, 0.0) == doctest::Approx(0.0).epsilon(kExact));
}

TEST_CASE("probability-margin comprehensiveness fixtures") {
  auto lg = [](std::vector<double> p, std::vector<double> pc, std::vector<double> y, double h) {
    return scalar_of([&](ad::Tape& t) {
      return L::comprehensiveness_prob(t, vec(t, std::move(p)), vec(t, std::move(pc)),
                                       vec(t, std::move(y)), h);
    });
  };
  CHECK(lg({0.9, 0.2}, {0.3, 0.6}, {1, 0}, 0.1) == doctest::Approx(0.0).epsilon(kExact));
  CHECK(lg({0.4, 0.7}, {0.4, 0.7}, {1, 0}, 0.25) == doctest::Approx(0.25).epsilon(kExact));
  CHECK(lg({0.4}, {0.9}, {1}, 0.0) == doctest::Approx(0.5).epsilon(kExact));
}

TEST_CASE("representation comprehensiveness fixtures") {
  auto lg = [](std::vector<double> a, std::vector<double> b) {
    return scalar_of([&](ad::Tape& t) {
      return L::comprehensiveness_repr(t, vec(t, std::move(a)), vec(t, std::move(b)));
    });
  };
  CHECK(lg({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0).epsilon(kExact));
  CHECK(lg({1, 0}, {0, 1}) == doctest::Approx(0.0).epsilon(kExact));
  CHECK(lg({1, 2, 3}, {-1, -2, -3}) == doctest::Approx(1.0).epsilon(kExact));
  CHECK(lg({0, 0}, {1, 2}) == 0.0);
}

TEST_CASE("random mask selects the target count uniformly") {
  Rng rng(2024);
  SUBCASE("exact count") {
    auto m = L::random_mask(10, 0.3, rng);
    CHECK(std::accumulate(m.begin(), m.end(), 0.0) == 3.0);
  }
  SUBCASE("at least one") {
    auto m = L::random_mask(1, 0.3, rng);
    CHECK(m == std::vector<double>{1.0});
    auto m2 = L::random_mask(5, 0.01, rng);
    CHECK(std::accumulate(m2.begin(), m2.end(), 0.0) == 1.0);
  }
  SUBCASE("positions are uniform over many draws") {
    std::vector<double> freq(10, 0.0);
    const int kDraws = 10000;
    for (int d = 0; d < kDraws; ++d) {
      auto m = L::random_mask(10, 0.3, rng);
      for (std::size_t i = 0; i < 10; ++i) freq[i] += m[i];
    }
    for (double f : freq) CHECK(f / kDraws == doctest::Approx(0.3).epsilon(0.07));
  }
}

TEST_CASE("singularity scale fixtures") {
  auto gamma = [](std::vector<double> z, std::vector<double> zr) {
    return scalar_of([&](ad::Tape& t) {
      return L::singularity_scale(t, vec(t, std::move(z)), vec(t, std::move(zr)));
    });
  };
  CHECK(gamma({1, 0, 1}, {1, 0, 1}) == doctest::Approx(0.0).epsilon(kExact));
  CHECK(gamma({1, 1, 0, 0}, {0, 0, 1, 1}) == doctest::Approx(1.0).epsilon(kExact));
  CHECK(gamma({1, 1, 0, 0}, {1, 0, 1, 0}) == doctest::Approx(0.5).epsilon(kExact));
  // full singularity loss: disjoint masks keep L_g untouched
  ad::Tape t;
  auto lg = t.input_scalar(0.37);
  auto g = L::singularity_scale(t, vec(t, {1, 0}), vec(t, {0, 1}));
  CHECK(t.scalar(t.mul(g, lg)) == doctest::Approx(0.37).epsilon(kExact));
}

TEST_CASE("supervision loss fixtures") {
  auto mae = [](std::vector<double> z, std::vector<double> zs) {
    return scalar_of([&](ad::Tape& t) {
      return L::supervision_loss(t, vec(t, std::move(z)), vec(t, std::move(zs)));
    });
  };
  CHECK(mae({1, 0, 1}, {1, 0, 1}) == doctest::Approx(0.0).epsilon(kExact));
  CHECK(mae({1, 0, 0, 0}, {0, 1, 0, 0}) == doctest::Approx(0.5).epsilon(kExact));
  CHECK(mae({1, 0, 1, 0}, {0, 1, 0, 1}) == doctest::Approx(1.0).epsilon(kExact));
  CHECK(mae({1, 0, 0, 1}, {1, 1, 0, 0}) == mae({1, 1, 0, 0}, {1, 0, 0, 1}));
  ad::Tape t;
  CHECK_THROWS_AS(L::supervision_loss(t, vec(t, {1, 0}), vec(t, {1, 0, 1})),
                  std::invalid_argument);
}

TEST_CASE("total loss assembly") {
  auto assemble = [](const L::LossWeights& w, double lp, double ls, double lc, double lg,
                     double lpc, double lr, double lpr) {
    ad::Tape t;
    L::TotalInputs in;
    in.L_p = t.input_scalar(lp);
    in.L_s = t.input_scalar(ls);
    in.L_c = t.input_scalar(lc);
    in.L_g = t.input_scalar(lg);
    in.L_p_c = t.input_scalar(lpc);
    in.L_r = t.input_scalar(lr);
    in.L_p_r = t.input_scalar(lpr);
    return t.scalar(L::total_loss(t, in, w));
  };

  L::LossWeights w;
  CHECK(assemble(w, 0.7, 1, 1, 1, 1, 1, 1) == doctest::Approx(0.7).epsilon(kExact));

  w.lambda_s = 0.1;
  CHECK(assemble(w, 0.7, 0.2, 1, 1, 1, 1, 1) == doctest::Approx(0.72).epsilon(kExact));

  L::LossWeights wg;
  wg.lambda_g = 1e-3;
  CHECK(assemble(wg, 0.7, 0, 0, 0.4, 0.9, 0, 0) ==
        doctest::Approx(0.7 + 1e-3 * 1.3).epsilon(kExact));

  SUBCASE("linear in every weight") {
    L::LossWeights wa;
    wa.lambda_s = 0.3;
    wa.lambda_c = 0.2;
    wa.lambda_g = 0.05;
    wa.lambda_r = 0.07;
    double base = assemble(L::LossWeights{}, 0.5, 0.11, 0.13, 0.17, 0.19, 0.23, 0.29);
    double full = assemble(wa, 0.5, 0.11, 0.13, 0.17, 0.19, 0.23, 0.29);
    double expect = base + 0.3 * 0.11 + 0.2 * 0.13 + 0.05 * (0.17 + 0.19) + 0.07 * (0.23 + 0.29);
    CHECK(full == doctest::Approx(expect).epsilon(kExact));
  }

  SUBCASE("missing component with a nonzero weight fails") {
    ad::Tape t;
    L::TotalInputs in;
    in.L_p = t.input_scalar(0.5);
    L::LossWeights w2;
    w2.lambda_g = 0.1;
    CHECK_THROWS_AS(L::total_loss(t, in, w2), std::invalid_argument);
  }

  SUBCASE("supervision objective") {
    ad::Tape t;
    auto total = L::supervised_total(t, t.input_scalar(0.6), t.input_scalar(0.5), 2.0);
    CHECK(t.scalar(total) == doctest::Approx(1.6).epsilon(kExact));
  }
}

TEST_CASE("weight validation rejects bad values") {
  L::LossWeights w;
  w.lambda_s = -0.1;
  CHECK_THROWS_AS(w.validate(), UserError);
  w.lambda_s = 0.0;
  w.T = 0.0;
  CHECK_THROWS_AS(w.validate(), UserError);
  w.T = 1.0;
  CHECK_THROWS_AS(w.validate(), UserError);
  w.T = 0.3;
  CHECK_NOTHROW(w.validate());
}

TEST_CASE("losses pass the gradient check through the soft surrogate") {
  Rng rng(31415);
  const double kTol = 1e-4;

  // soft mask in (0,1) via sigmoid, probabilities likewise; the assembled
  // objective must agree with finite differences end to end
  CHECK(check_builder(
            [](ad::Tape& t, const std::vector<ad::Var>& in) {
              auto z = t.sigmoid(in[0]);
              auto zr = t.sigmoid(in[1]);
              auto p = t.sigmoid(in[2]);
              auto pc = t.sigmoid(in[3]);
              auto y = t.input({4}, {1, 0, 0, 1});
              L::TotalInputs parts;
              parts.L_p = L::classification_loss(t, p, y);
              parts.L_s = L::sparsity_loss(t, z, 0.3);
              parts.L_c = L::continuity_loss(t, z);
              parts.L_g = L::comprehensiveness_prob(t, p, pc, y, 0.1);
              parts.L_p_c = L::classification_loss(t, pc, y);
              auto gamma = L::singularity_scale(t, z, zr);
              parts.L_r = t.mul(gamma, L::comprehensiveness_margin(
                                           t, parts.L_p, parts.L_p_c, 0.05));
              parts.L_p_r = L::classification_loss(t, p, y);
              L::LossWeights w;
              w.lambda_s = 0.1;
              w.lambda_c = 0.2;
              w.lambda_g = 0.3;
              w.lambda_r = 0.4;
              return L::total_loss(t, parts, w);
            },
            {{6}, {6}, {4}, {4}},
            {draw(6, rng), draw(6, rng), draw(4, rng), draw(4, rng)}, 1e-5) < kTol);

  // representation variant and supervision objective
  CHECK(check_builder(
            [](ad::Tape& t, const std::vector<ad::Var>& in) {
              auto dm = in[0];
              auto dmc = in[1];
              auto z = t.sigmoid(in[2]);
              auto zs = t.input({5}, {1, 0, 0, 1, 0});
              auto lg = L::comprehensiveness_repr(t, dm, dmc);
              auto sup = L::supervision_loss(t, z, zs);
              return t.add(lg, L::supervised_total(t, t.mean(t.mul(dm, dm)), sup, 0.7));
            },
            {{5}, {5}, {5}},
            {draw(5, rng), draw(5, rng), draw(5, rng)}, 1e-5) < kTol);
}
