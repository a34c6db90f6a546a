#include <cmath>
#include <numbers>

#include "doctest.h"
#include "ldplab/map_core.hpp"

using namespace ldplab;

namespace {

// At a = 2 the critical orbit is 0 -> 1 -> -1 -> -1 ..., so |Df^i(c_0)| = 4^i and
// d_i = 4^{-i}; D_n = (1/10) / sum_{i<n} 4^i = 0.3 / (4^n - 1).
double closed_form_D(int n) { return 0.3 / (std::pow(4.0, n) - 1.0); }

MapParams at2(int depth = 60) {
  MapParams p;
  p.depth = depth;
  return p;
}

}  // namespace

TEST_CASE("orbit of the quadratic map") {
  const auto orbit = iterate(at2(), 0.0, 4);
  REQUIRE(orbit.size() == 5);
  CHECK(orbit[1] == 1.0);
  CHECK(orbit[2] == -1.0);
  CHECK(orbit[4] == -1.0);
  CHECK_THROWS_AS(iterate(at2(), 1.5, 2), Error);
}

TEST_CASE("log-space cocycle matches the direct product") {
  const MapParams p = at2();
  for (double x : {0.3, -0.77, 0.912, 0.05}) {
    for (int n : {1, 5, 17, 30}) {
      double prod = 1.0;
      double y = x;
      for (int i = 0; i < n; ++i) {
        prod *= std::abs(-2.0 * p.a * y);
        y = 1.0 - p.a * y * y;
      }
      CHECK(std::exp(log_derivative(p, x, n)) == doctest::Approx(prod).epsilon(1e-9));
    }
  }
  CHECK(log_derivative(p, 0.0, 1) == kNegInf);
}

TEST_CASE("schedule closed forms at a = 2") {
  const auto t = critical_table(at2(40));
  CHECK(std::abs(t.D[1] - 0.1) < 1e-12);
  CHECK(std::abs(t.D[2] - 0.02) < 1e-12);
  CHECK(std::abs(t.D[3] - 1.0 / 210.0) < 1e-12);
  for (int n = 1; n <= 40; ++n) {
    CHECK(t.log_df[static_cast<std::size_t>(n)] == doctest::Approx(n * std::log(4.0)).epsilon(1e-13));
    CHECK(std::exp(t.log_D[static_cast<std::size_t>(n)]) ==
          doctest::Approx(closed_form_D(n)).epsilon(1e-12));
    const double expect_delta = std::sqrt(std::exp(-0.01 * n) * closed_form_D(n));
    CHECK(t.delta[static_cast<std::size_t>(n)] == doctest::Approx(expect_delta).epsilon(1e-12));
  }
}

TEST_CASE("schedules are strictly decreasing") {
  for (double a : {2.0, 1.99, 1.95}) {
    MapParams p = at2(80);
    p.a = a;
    const auto t = critical_table(p);
    for (int n = 2; n <= 80; ++n) {
      CHECK(t.log_D[static_cast<std::size_t>(n)] < t.log_D[static_cast<std::size_t>(n - 1)]);
      CHECK(t.log_delta[static_cast<std::size_t>(n)] < t.log_delta[static_cast<std::size_t>(n - 1)]);
    }
  }
}

TEST_CASE("default N and validation") {
  const auto t = critical_table(at2());
  // delta_10 ~ 5.1e-4 <= 1e-3 already, and N must exceed 10
  CHECK(default_cap_n(t) == 11);
  MapParams bad = at2();
  bad.epsilon = bad.lambda / 24.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = at2();
  bad.a = 2.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = at2();
  bad.cap_n = 9;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("bound period brackets |x| and obeys the logarithmic bound") {
  const MapParams p = at2(80);
  const auto t = critical_table(p);
  for (int k = 1; k < 400; ++k) {
    const double x = t.delta_hat() * std::pow(0.97, k);
    if (x < t.delta[79]) break;
    const int q = bound_period(t, x);
    CHECK(t.delta[static_cast<std::size_t>(q)] <= x);
    CHECK(x < t.delta[static_cast<std::size_t>(q - 1)]);
    CHECK(q > 10);
    CHECK(q <= 2.0 / p.lambda * std::log(1.0 / x));
    CHECK(bound_period(t, -x) == q);
  }
  CHECK_THROWS_AS(bound_period(t, t.delta_hat()), Error);
}

TEST_CASE("bound/free itinerary") {
  const MapParams p = at2(80);
  const auto t = critical_table(p);
  const auto first = itinerary(p, t, t.delta_hat() / 2.0, 50);
  REQUIRE(!first.entries.empty());
  CHECK(first.entries[0].n == 0);
  CHECK(first.entries[0].p == bound_period(t, t.delta_hat() / 2.0));
  // the fixed point 1/2 never approaches 0
  CHECK(itinerary(p, t, 0.5, 50).entries.empty());
}

TEST_CASE("return grid") {
  SUBCASE("piece counts") {
    CHECK(IpjGrid::pieces(0.1, 20) == 403);  // floor(e^6)
    CHECK(IpjGrid::pieces(0.001, 100) == 1);  // floor(e^0.3)
  }
  const MapParams p = at2(60);
  const auto t = critical_table(p);
  const IpjGrid g(t, 11, 40);
  SUBCASE("equal lengths, exact union, right-to-left labels") {
    for (int q = 12; q <= 40; ++q) {
      const double lo = t.delta[static_cast<std::size_t>(q)];
      const double hi = t.delta[static_cast<std::size_t>(q - 1)];
      const int k = IpjGrid::pieces(0.01, q);
      std::vector<GridInterval> row;
      for (const auto& I : g.positive()) {
        if (I.p == q) row.push_back(I);
      }
      REQUIRE(static_cast<int>(row.size()) == k);
      CHECK(row.front().lo == lo);
      CHECK(row.back().hi == hi);
      CHECK(row.back().j == 1);
      for (std::size_t i = 0; i < row.size(); ++i) {
        CHECK(row[i].length() == doctest::Approx((hi - lo) / k).epsilon(1e-12));
        if (i > 0) CHECK(row[i].lo == row[i - 1].hi);
      }
    }
  }
  SUBCASE("mirror and Lambda^+") {
    const auto all = g.all();
    for (const auto& I : all) {
      if (I.p == 12 && I.j == 1) {
        bool found = false;
        for (const auto& M : all) {
          if (M.p == 12 && M.j == -1) {
            CHECK(M.lo == -I.hi);
            found = true;
          }
        }
        CHECK(found);
      }
    }
    CHECK(g.lambda_plus().hi == t.delta[10]);
    CHECK(g.lambda_plus().lo >= t.delta[11]);
    CHECK(g.lambda_minus().lo == -g.lambda_plus().hi);
  }
  SUBCASE("locate") {
    const auto I = g.positive()[5];
    const auto found = g.locate(0.5 * (I.lo + I.hi));
    REQUIRE(found);
    CHECK(found->p == I.p);
    CHECK(found->j == I.j);
    CHECK(g.locate(-0.5 * (I.lo + I.hi))->j == -I.j);
    CHECK(!g.locate(0.5));
  }
}

TEST_CASE("shadowing coordinates agree with direct iteration") {
  const MapParams p = at2(60);
  const auto t = critical_table(p);
  for (double x : {1e-3, 3e-4, -2e-4}) {
    for (int n : {1, 3, 8}) {
      const auto orbit = iterate(p, x, n);
      CHECK(image_offset_near_critical(t, x, n) + t.c[static_cast<std::size_t>(n - 1)] ==
            doctest::Approx(orbit.back()).epsilon(1e-9));
      CHECK(log_derivative_near_critical(t, x, n) ==
            doctest::Approx(log_derivative(p, x, n)).epsilon(1e-9));
    }
  }
}

TEST_CASE("shadowed orbits leave the fixed point -1 after a close pass by 0") {
  // at a = 2, f(sin t) = cos 2t and f(cos t) = -cos 2t, so f^n(sin t) = -cos(2^n t) for n >= 2
  const double x0 = 1e-9;
  const double t = std::asin(x0);
  const auto critical = critical_orbit(2.0, 64);
  ShadowedOrbit orb(critical, 2.0, x0);
  double plain = x0;
  for (int n = 1; n <= 34; ++n) {
    orb.step();
    plain = 1.0 - 2.0 * plain * plain;
    if (n >= 2) CHECK(orb.x() == doctest::Approx(-std::cos(std::ldexp(t, n))).epsilon(1e-9));
  }
  CHECK(plain == -1.0);
  CHECK(orb.x() > -0.9);
}
