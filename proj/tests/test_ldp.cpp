#include <cmath>
#include <numbers>

#include "doctest.h"
#include "ldplab/ldp.hpp"
#include "ldplab/parallel.hpp"

using namespace ldplab;

namespace {

MapParams at2() {
  MapParams p;
  p.depth = 60;
  return p;
}

std::vector<double> grid(double lo, double hi, double step) {
  std::vector<double> v;
  const int n = static_cast<int>(std::lround((hi - lo) / step));
  for (int i = 0; i <= n; ++i) v.push_back(lo + step * i);
  return v;
}

}  // namespace

TEST_CASE("Birkhoff sampling reproduces the arcsine law at a = 2") {
  const auto xs = sample_mu(at2(), 200000, kDefaultBurnIn, 3);
  double above = 0.0, mean = 0.0;
  for (double x : xs) {
    above += x >= 0.5 ? 1.0 : 0.0;
    mean += x;
  }
  above /= xs.size();
  mean /= xs.size();
  // (1/pi) int_{1/2}^1 dx / sqrt(1 - x^2) = 1/3
  CHECK(std::abs(above - 1.0 / 3.0) < 0.01);
  CHECK(std::abs(mean) < 0.01);
  const auto est = birkhoff_mean(at2(), builtin_observable("x2"), 200000, kDefaultBurnIn, 3);
  CHECK(std::abs(est.mean - 0.5) < 0.01);
  CHECK(est.stderr_ > 0.0);
}

TEST_CASE("deviation rates at the extremes") {
  SUBCASE("threshold below the range is hit always") {
    const auto rs = deviation_rate(at2(), {{builtin_observable("x"), -1.0}}, {10, 20}, 500, 1);
    for (std::size_t i = 0; i < rs.n_grid.size(); ++i) {
      CHECK(rs.hits[i] == 500);
      CHECK(rs.values[i] == 0.0);
      CHECK(!rs.censored[i]);
    }
    CHECK(rs.fit.rate == doctest::Approx(0.0));
  }
  SUBCASE("threshold above the range is all censored") {
    try {
      deviation_rate(at2(), {{builtin_observable("x"), 1.5}}, {10, 20}, 500, 1);
      FAIL("expected all_censored");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::all_censored);
    }
  }
  SUBCASE("grid is sorted and deduplicated") {
    const auto rs = deviation_rate(at2(), {{builtin_observable("x"), 0.1}}, {20, 5, 20, 10}, 2000, 1);
    CHECK(rs.n_grid == std::vector<int>{5, 10, 20});
  }
  SUBCASE("censored cells carry the one-sided 95% bound") {
    const auto rs = deviation_rate(at2(), {{builtin_observable("x"), 0.1}, {builtin_observable("x"), 0.99}},
                                   {1, 40}, 1000, 1);
    REQUIRE(rs.censored[1]);
    const double upper = 1.0 - std::pow(0.05, 1.0 / 1000.0);
    CHECK(rs.values[1] == doctest::Approx(std::log(upper) / 40.0).epsilon(1e-12));
  }
  SUBCASE("confidence interval brackets the estimate") {
    const auto rs = deviation_rate(at2(), {{builtin_observable("x"), 0.2}}, {5, 10, 20}, 5000, 2);
    for (std::size_t i = 0; i < rs.n_grid.size(); ++i) {
      if (rs.censored[i]) continue;
      CHECK(rs.ci_lo[i] <= rs.values[i]);
      CHECK(rs.values[i] <= rs.ci_hi[i]);
    }
    CHECK(rs.fit.rate < 0.0);
  }
}

TEST_CASE("sampling is deterministic in the seed and the thread count") {
  const auto a = deviation_rate(at2(), {{builtin_observable("x"), 0.2}}, {10, 30}, 9000, 11);
  const unsigned before = max_threads();
  set_max_threads(3);
  const auto b = deviation_rate(at2(), {{builtin_observable("x"), 0.2}}, {10, 30}, 9000, 11);
  set_max_threads(before);
  CHECK(a.hits == b.hits);
  CHECK(sample_mu(at2(), 3000, 50, 5) == sample_mu(at2(), 3000, 50, 5));
  CHECK(sample_mu(at2(), 3000, 50, 5) != sample_mu(at2(), 3000, 50, 6));
}

TEST_CASE("empirical cumulant generating function") {
  const auto t = grid(-1.0, 1.0, 0.25);
  SUBCASE("zero at t = 0 and above the mean line") {
    const auto cv = pressure_cgf(at2(), builtin_observable("x"), t, {20, 40}, 4000, 9);
    const auto zero = static_cast<std::size_t>(std::find(cv.t_grid.begin(), cv.t_grid.end(), 0.0) -
                                               cv.t_grid.begin());
    CHECK(cv.p[zero] == 0.0);
    for (std::size_t j = 0; j < t.size(); ++j) {
      for (std::size_t i = 0; i < cv.n_grid.size(); ++i) {
        // Jensen: (1/n) log E exp(t S_n) >= t E[S_n]/n, and the empirical version holds exactly
        CHECK(cv.per_n[i][j] >= t[j] * cv.sample_mean - 0.05);
      }
    }
  }
  SUBCASE("constant observable") {
    const auto cv = pressure_cgf(at2(), constant_observable(0.4), t, {10, 30}, 200, 9);
    for (std::size_t j = 0; j < t.size(); ++j) {
      CHECK(cv.p[j] == doctest::Approx(0.4 * t[j]).epsilon(1e-9));
    }
  }
  SUBCASE("per-n values satisfy the empirical Jensen bound exactly") {
    const auto cv = pressure_cgf(at2(), builtin_observable("x"), t, {15}, 1000, 4);
    // mean of S_15 over the same starts is n * sample_mean
    for (std::size_t j = 0; j < t.size(); ++j) CHECK(cv.per_n[0][j] >= t[j] * cv.sample_mean - 1e-12);
  }
}

TEST_CASE("Legendre transforms") {
  const auto t = grid(-2.0, 2.0, 0.01);
  std::vector<double> p;
  for (double x : t) p.push_back(0.5 * x * x);
  SUBCASE("t^2/2 is self-dual") {
    const auto s = grid(-1.5, 1.5, 0.1);
    const auto lt = legendre_transform(t, p, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(std::abs(lt.rate[i] - 0.5 * s[i] * s[i]) < 1e-4);
      CHECK(!lt.endpoint[i]);
      CHECK(lt.argmax_t[i] == doctest::Approx(s[i]).epsilon(1e-9));
    }
    CHECK(lt.repair_magnitude < 1e-12);
  }
  SUBCASE("biconjugate recovers the convex input") {
    const auto s = grid(-2.0, 2.0, 0.01);
    const auto lt = legendre_transform(t, p, s);
    const auto back = legendre_transform(s, lt.rate, grid(-1.0, 1.0, 0.05));
    for (std::size_t i = 0; i < back.s_grid.size(); ++i) {
      const double x = back.s_grid[i];
      CHECK(std::abs(back.rate[i] - 0.5 * x * x) < 1e-4);
    }
  }
  SUBCASE("linear input peaks at the grid boundary") {
    std::vector<double> lin;
    for (double x : t) lin.push_back(0.3 * x);
    const auto lt = legendre_transform(t, lin, {1.0, -1.0});
    CHECK(lt.endpoint[0]);
    CHECK(lt.argmax_t[0] == 2.0);
    CHECK(lt.endpoint[1]);
    CHECK(lt.argmax_t[1] == -2.0);
  }
  SUBCASE("concave input is rejected") {
    std::vector<double> bad;
    for (double x : t) bad.push_back(-x * x);
    try {
      legendre_transform(t, bad, {0.0});
      FAIL("expected non_convex");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::non_convex);
    }
  }
  SUBCASE("invalid grids") {
    CHECK_THROWS_AS(legendre_transform({0.0}, {0.0}, {0.0}), Error);
    CHECK_THROWS_AS(legendre_transform({0.0, 0.0}, {0.0, 0.0}, {0.0}), Error);
  }
}

TEST_CASE("convexity repair") {
  const std::vector<double> t{-1.0, -0.5, 0.0, 0.5, 1.0};
  SUBCASE("convex input is unchanged") {
    const std::vector<double> p{1.0, 0.25, 0.0, 0.25, 1.0};
    const auto r = convex_repair(t, p);
    CHECK(r.magnitude < 1e-15);
  }
  SUBCASE("small kink is pooled") {
    const std::vector<double> p{1.0, 0.25, 0.0, 0.26, 0.5};  // slopes -1.5 -0.5 0.52 0.48
    const auto r = convex_repair(t, p);
    CHECK(r.values[2] == 0.0);
    CHECK(r.values[4] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.values[3] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(r.magnitude == doctest::Approx(0.01).epsilon(1e-9));
  }
}

TEST_CASE("upper concave hull") {
  const ConcaveHull h({0.0, 1.0, 2.0, 1.0, 0.5}, {0.0, 1.0, 0.0, 0.5, 0.1});
  CHECK(h.vertices_t() == std::vector<double>{0.0, 1.0, 2.0});
  CHECK(*h(0.5) == doctest::Approx(0.5));
  CHECK(*h(1.5) == doctest::Approx(0.5));
  CHECK(!h(-0.1));
  CHECK(!h(2.1));
  CHECK(*h.max_from(0.5) == doctest::Approx(1.0));
  CHECK(*h.max_from(1.5) == doctest::Approx(0.5));
  CHECK(!h.max_from(3.0));
  CHECK(ConcaveHull({}, {}).empty());
}

TEST_CASE("variational envelope for x at a = 2") {
  HorseshoeSpec spec;
  spec.k = 10;
  const auto tg = grid(-0.4, 0.4, 0.1);
  const auto env = variational_envelope(at2(), builtin_observable("x"), tg, {spec}, 8);
  REQUIRE(env.upper.size() == tg.size());
  for (double v : env.upper) CHECK(v <= 1e-6);
  for (std::size_t i = 1; i + 1 < tg.size(); ++i) {
    CHECK(env.upper[i + 1] - 2.0 * env.upper[i] + env.upper[i - 1] <= 1e-12);
  }
  // the absolutely continuous measure has mean 0 and free energy 0
  CHECK(env.upper[4] > -0.05);
  for (double v : env.lower) {
    if (!std::isnan(v)) CHECK(v <= 1e-6);
  }
  for (double v : env.legendre) CHECK(std::isnan(v));
  SUBCASE("coverage failure") {
    try {
      variational_envelope(at2(), builtin_observable("x"), {5.0}, {spec}, 0);
      FAIL("expected coverage");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::coverage);
    }
  }
}
