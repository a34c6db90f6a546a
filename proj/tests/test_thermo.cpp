#include <cmath>
#include <numbers>
#include <utility>

#include "doctest.h"
#include "ldplab/thermo.hpp"

using namespace ldplab;

namespace {

MapParams at2() {
  MapParams p;
  p.depth = 60;
  return p;
}

Observable indicator_below(double cut) {
  Observable o;
  o.id = "branch0";
  o.eval = [cut](double x) { return x < cut ? 1.0 : 0.0; };
  o.lipschitz = 0.0;
  o.singular = true;
  return o;
}

}  // namespace

TEST_CASE("horseshoes of the full quadratic map") {
  const Interval core{-1.0, 1.0};
  CHECK(find_horseshoe(at2(), 1, core).q() == 2);
  CHECK(find_horseshoe(at2(), 2, core).q() == 4);
  CHECK(find_horseshoe(at2(), 3, core).q() == 8);
  CHECK_THROWS_AS(find_horseshoe(at2(), 2, core, 5), Error);
  const Horseshoe h = find_horseshoe(at2(), 3, {-0.9, 0.9});
  CHECK(h.q() >= 2);
  CHECK(h.disjoint);
  for (const auto& b : h.branches) {
    for (double u : {0.1, 0.5, 0.9}) {
      const double y = h.window.lo + u * h.window.length();
      const double x = b.inverse(y);
      CHECK(b.domain.contains(x));
      CHECK(b.forward(x) == doctest::Approx(y).epsilon(1e-10));
      // g = f^3 by direct iteration
      double z = x;
      for (int i = 0; i < 3; ++i) z = 1.0 - 2.0 * z * z;
      CHECK(z == doctest::Approx(y).epsilon(1e-9));
    }
  }
}

TEST_CASE("cylinders of linear toys") {
  SUBCASE("equal slopes") {
    const Horseshoe h = linear_horseshoe({2.0, 2.0});
    const CylinderTree t = cylinders(h, 6);
    CHECK(t.words.size() == 64);
    for (const auto& w : t.words) CHECK(w.interval.length() == doctest::Approx(std::pow(2.0, -6)).epsilon(1e-12));
  }
  SUBCASE("slopes (2, 4)") {
    const Horseshoe h = linear_horseshoe({2.0, 4.0});
    const CylinderTree t = cylinders(h, 2);
    // word 01 = branch 0 then branch 1
    CHECK(t.words[1].interval.length() == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
    CHECK(t.words[0].interval.length() == doctest::Approx(1.0 / 4.0).epsilon(1e-12));
    CHECK(cylinder_ratio_bound(cylinders(h, 5)) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("period-1 words sit at the branch fixed points") {
    const Horseshoe h = linear_horseshoe({2.0, 4.0});
    const CylinderTree t = cylinders(h, 1);
    CHECK(t.words[0].periodic_point == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(t.words[1].periodic_point == doctest::Approx(2.0 / 3.0).epsilon(1e-12));  // 4 (x - 1/2) = x
  }
  SUBCASE("budget") { CHECK_THROWS_AS(cylinders(linear_horseshoe({2.0, 2.0}), 12, 1000), Error); }
}

TEST_CASE("cylinders of the quadratic map refine and hold their periodic points") {
  // over the whole core the laps of f^m tile J, so children exactly fill their parent
  const Interval core{-1.0, 1.0};
  const Horseshoe full = find_horseshoe(at2(), 2, core);
  const CylinderTree ft = cylinders(full, 4);
  for (std::size_t lvl = 1; lvl < ft.levels.size(); ++lvl) {
    for (std::size_t w = 0; w < ft.levels[lvl - 1].size(); ++w) {
      double sum = 0.0;
      for (std::size_t a = 0; a < full.q(); ++a) sum += ft.levels[lvl][w * full.q() + a].length();
      CHECK(sum == doctest::Approx(ft.levels[lvl - 1][w].length()).epsilon(1e-10));
    }
  }
  const Horseshoe h = find_horseshoe(at2(), 2, {-0.95, 0.95});
  const CylinderTree t = cylinders(h, 4);
  for (std::size_t lvl = 1; lvl < t.levels.size(); ++lvl) {
    const auto& parent = t.levels[lvl - 1];
    const auto& child = t.levels[lvl];
    for (std::size_t w = 0; w < parent.size(); ++w) {
      double sum = 0.0;
      for (std::size_t a = 0; a < h.q(); ++a) {
        const Interval& c = child[w * h.q() + a];
        sum += c.length();
        CHECK(c.lo >= parent[w].lo - 1e-12);
        CHECK(c.hi <= parent[w].hi + 1e-12);
      }
      CHECK(sum <= parent[w].length() * (1.0 + 1e-10));
    }
  }
  for (const auto& w : t.words) {
    CHECK(w.interval.contains(w.periodic_point));
    double x = w.periodic_point;
    for (int i = 0; i < t.depth * h.m; ++i) x = 1.0 - 2.0 * x * x;
    CHECK(std::abs(x - w.periodic_point) < 1e-9);
  }
}

TEST_CASE("equilibrium proxies of linear toys") {
  SUBCASE("slopes (2, 2)") {
    const Horseshoe h = linear_horseshoe({2.0, 2.0});
    const MeasureApprox nu = equilibrium_nu_k(h, cylinders(h, 10));
    CHECK(std::abs(nu.free_energy - 0.0) < 0.02);
    double total = 0.0;
    for (double w : nu.weights) total += w;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("slopes (2, 4)") {
    const Horseshoe h = linear_horseshoe({2.0, 4.0});
    const MeasureApprox nu = equilibrium_nu_k(h, cylinders(h, 10));
    CHECK(std::abs(nu.free_energy - std::log(0.75)) < 0.02);
    // closed-form Gibbs state: weights (2/3, 1/3), h - int Phi = log(3/4)
    const double gibbs = -(2.0 / 3.0) * std::log(2.0 / 3.0) - (1.0 / 3.0) * std::log(1.0 / 3.0) -
                         ((2.0 / 3.0) * std::log(2.0) + (1.0 / 3.0) * std::log(4.0));
    CHECK(gibbs == doctest::Approx(std::log(0.75)).epsilon(1e-12));
    CHECK(nu.free_energy <= gibbs + 0.02);
  }
}

TEST_CASE("pressure curves") {
  const Horseshoe h = linear_horseshoe({2.0, 4.0});
  const CylinderTree t = cylinders(h, 8);
  const MeasureApprox nu = equilibrium_nu_k(h, t);
  SUBCASE("zero tilt is the equilibrium proxy") {
    const auto c = pressure_curve(h, t, builtin_observable("x"), {0.0});
    CHECK(c[0].p == doctest::Approx(nu.free_energy).epsilon(1e-12));
  }
  SUBCASE("constant observable") {
    const auto c = pressure_curve(h, t, constant_observable(0.7), {-1.0, 0.0, 2.0});
    for (const auto& pt : c) {
      CHECK(pt.t == doctest::Approx(0.7).epsilon(1e-12));
      CHECK(pt.p == doctest::Approx(c[1].p + 0.7 * pt.s).epsilon(1e-12));
    }
  }
  SUBCASE("locally constant observable: closed-form tilted Gibbs values") {
    const auto c = pressure_curve(h, t, indicator_below(0.5), {-2.0, -0.5, 0.0, 1.0, 3.0});
    for (const auto& pt : c) {
      const double z = std::exp(pt.s) / 2.0 + 0.25;
      CHECK(pt.p == doctest::Approx(std::log(z)).epsilon(1e-10));
      CHECK(pt.t == doctest::Approx(std::exp(pt.s) / 2.0 / z).epsilon(1e-10));
    }
  }
  SUBCASE("convex in s with non-decreasing t, sorted output") {
    std::vector<double> s;
    for (int i = 10; i >= -10; --i) s.push_back(0.3 * i);
    const auto c = pressure_curve(h, t, builtin_observable("x"), s);
    for (std::size_t i = 1; i < c.size(); ++i) {
      CHECK(c[i].s > c[i - 1].s);
      CHECK(c[i].t >= c[i - 1].t - 1e-12);
      if (i + 1 < c.size()) CHECK(c[i + 1].p - 2.0 * c[i].p + c[i - 1].p >= -1e-9);
    }
  }
}

TEST_CASE("spread measures") {
  SUBCASE("m = 1 is the identity") {
    const Horseshoe h = linear_horseshoe({2.0, 4.0});
    const MeasureApprox nu = equilibrium_nu_k(h, cylinders(h, 6), {builtin_observable("x")});
    const MeasureApprox s = spread_measure(h, nu);
    CHECK(s.free_energy == doctest::Approx(nu.free_energy).epsilon(1e-12));
    CHECK(s.lyapunov == doctest::Approx(nu.lyapunov).epsilon(1e-12));
    CHECK(s.observable_means.at("x") == doctest::Approx(nu.observable_means.at("x")).epsilon(1e-12));
    CHECK(s.free_energy == doctest::Approx(std::log(0.75)).epsilon(0.02));
  }
  SUBCASE("Ruelle inequality on quadratic horseshoes") {
    const std::vector<std::pair<int, Interval>> cases{{1, {-1.0, 1.0}}, {2, {-0.95, 0.95}}, {3, {-0.9, 0.9}}};
    for (const auto& [m, window] : cases) {
      const Horseshoe h = find_horseshoe(at2(), m, window);
      const MeasureApprox s = spread_measure(h, equilibrium_nu_k(h, cylinders(h, 6)));
      CHECK(s.free_energy <= 1e-6);
      double total = 0.0;
      for (double w : s.weights) {
        CHECK(w >= 0.0);
        total += w;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("periodic orbits at a = 2") {
  const auto orbits = periodic_orbit_survey(at2(), 10, {builtin_observable("x")});
  SUBCASE("fixed points 1/2 and -1") {
    int found = 0;
    for (const auto& o : orbits) {
      if (o.points.size() != 1) continue;
      ++found;
      if (std::abs(o.points[0] - 0.5) < 1e-12) CHECK(o.lyapunov == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
      if (std::abs(o.points[0] + 1.0) < 1e-12) CHECK(o.lyapunov == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
    CHECK(found == 2);
  }
  SUBCASE("2^p points of period dividing p") {
    for (int p = 1; p <= 10; ++p) {
      std::size_t count = 0;
      for (const auto& o : orbits) {
        if (p % static_cast<int>(o.points.size()) == 0) count += o.points.size();
      }
      CHECK(count == (std::size_t{1} << p));
    }
  }
  SUBCASE("equal weights, zero entropy, F = -lambda") {
    for (const auto& o : orbits) {
      for (double w : o.weights) CHECK(w == doctest::Approx(1.0 / o.points.size()).epsilon(1e-12));
      CHECK(o.entropy_lb == 0.0);
      CHECK(o.free_energy == -o.lyapunov);
      CHECK(o.free_energy <= 1e-6);
    }
  }
}
