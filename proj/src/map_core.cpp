#include "ldplab/map_core.hpp"

#include <algorithm>
#include <sstream>
#include <string>

namespace ldplab {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::domain_escape: return "domain-escape";
    case ErrorKind::degenerate_orbit: return "degenerate-orbit";
    case ErrorKind::out_of_schedule: return "out-of-schedule";
    case ErrorKind::insufficient_samples: return "insufficient-samples";
    case ErrorKind::orphan_fragment: return "orphan-fragment";
    case ErrorKind::insufficient_depth: return "insufficient-depth";
    case ErrorKind::unresolved_mass: return "unresolved-mass";
    case ErrorKind::not_found: return "not-found";
    case ErrorKind::budget_exceeded: return "budget-exceeded";
    case ErrorKind::all_censored: return "all-censored";
    case ErrorKind::coverage: return "coverage";
    case ErrorKind::non_convex: return "non-convex";
    case ErrorKind::inconclusive: return "inconclusive";
  }
  return "unknown";
}

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::validation, what); }

}  // namespace

void MapParams::validate() const {
  if (!(a > 0.0 && a <= 2.0)) invalid("a must satisfy 0 < a <= 2");
  if (!(lambda > 0.0)) invalid("lambda must be positive");
  if (!(alpha > 0.0)) invalid("alpha must be positive");
  if (!(epsilon > 0.0)) invalid("epsilon must be positive");
  if (!(8.0 * epsilon < lambda / 3.0)) invalid("epsilon must satisfy 8*epsilon < lambda/3");
  if (depth < 11) invalid("depth must be at least 11");
  if (cap_n != 0 && cap_n <= 10) invalid("capN must be > 10");
  if (cap_n != 0 && depth < cap_n) invalid("depth must be >= capN");
}

std::vector<double> critical_orbit(double a, int length) {
  std::vector<double> c;
  double y = quad_map(a, 0.0);
  for (int r = 0; r < length; ++r) {
    c.push_back(y);
    y = quad_map(a, y);
  }
  return c;
}

std::vector<double> iterate(const MapParams& params, double x, int n) {
  if (!(std::abs(x) <= 1.0)) throw Error(ErrorKind::validation, "iterate: |x| must be <= 1");
  if (n < 0) throw Error(ErrorKind::validation, "iterate: n must be >= 0");
  std::vector<double> orbit;
  orbit.reserve(static_cast<std::size_t>(n) + 1);
  orbit.push_back(x);
  for (int i = 0; i < n; ++i) {
    double y = quad_map(params.a, orbit.back());
    if (std::abs(y) > 1.0) {
      if (std::abs(y) - 1.0 > 1e-12) {
        std::ostringstream os;
        os << "iterate " << i + 1 << " left [-1,1]: " << y;
        throw Error(ErrorKind::domain_escape, os.str());
      }
      y = std::clamp(y, -1.0, 1.0);
    }
    orbit.push_back(y);
  }
  return orbit;
}

double log_derivative(const MapParams& params, double x, int n) {
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (x == 0.0) return kNegInf;
    sum += std::log(std::abs(2.0 * params.a * x));
    x = quad_map(params.a, x);
  }
  return sum;
}

CriticalOrbitTable critical_table(const MapParams& params) {
  params.validate();
  CriticalOrbitTable t;
  t.a = params.a;
  t.epsilon = params.epsilon;
  t.depth = params.depth;
  const auto depth = static_cast<std::size_t>(params.depth);

  t.c.resize(depth + 1);
  t.c[0] = quad_map(params.a, 0.0);
  for (std::size_t n = 1; n <= depth; ++n) t.c[n] = quad_map(params.a, t.c[n - 1]);
  for (std::size_t n = 0; n <= depth; ++n) {
    if (t.c[n] == 0.0) {
      throw Error(ErrorKind::degenerate_orbit,
                  "critical orbit hits 0 at c_" + std::to_string(n));
    }
  }

  t.log_df.resize(depth + 1);
  t.log_df[0] = 0.0;
  for (std::size_t n = 1; n <= depth; ++n) {
    t.log_df[n] = t.log_df[n - 1] + std::log(std::abs(2.0 * params.a * t.c[n - 1]));
  }

  t.log_d.resize(depth);
  for (std::size_t i = 0; i < depth; ++i) t.log_d[i] = std::log(std::abs(t.c[i])) - t.log_df[i];

  // log D_n = -log 10 - log sum_{i<n} exp(-log d_i), accumulated as a running
  // log-sum-exp.
  t.log_D.assign(depth + 1, std::numeric_limits<double>::quiet_NaN());
  t.D.assign(depth + 1, std::numeric_limits<double>::quiet_NaN());
  t.log_delta.assign(depth + 1, std::numeric_limits<double>::quiet_NaN());
  t.delta.assign(depth + 1, std::numeric_limits<double>::quiet_NaN());
  double lse = kNegInf;
  for (std::size_t n = 1; n <= depth; ++n) {
    const double term = -t.log_d[n - 1];
    if (lse == kNegInf) {
      lse = term;
    } else {
      const double hi = std::max(lse, term);
      lse = hi + std::log1p(std::exp(std::min(lse, term) - hi));
    }
    t.log_D[n] = -std::log(10.0) - lse;
    t.D[n] = std::exp(t.log_D[n]);
    t.log_delta[n] = 0.5 * (-params.epsilon * static_cast<double>(n) + t.log_D[n]);
    t.delta[n] = std::exp(t.log_delta[n]);
  }
  return t;
}

int default_cap_n(const CriticalOrbitTable& table) {
  for (int n = 11; n <= table.depth; ++n) {
    if (table.delta[static_cast<std::size_t>(n)] <= 1e-3) return n;
  }
  return table.depth;
}

MapParams resolve_cap_n(const MapParams& params, const CriticalOrbitTable& table) {
  MapParams out = params;
  if (out.cap_n == 0) out.cap_n = default_cap_n(table);
  out.validate();
  return out;
}

int bound_period(const CriticalOrbitTable& table, double x) {
  const double ax = std::abs(x);
  if (!(ax > 0.0) || !(ax < table.delta_hat())) {
    throw Error(ErrorKind::validation, "bound_period requires 0 < |x| < delta_hat");
  }
  const double lx = std::log(ax);
  // delta is strictly decreasing: first p with delta_p <= |x|. Compare doubles
  // where representable so that |x| == delta_p lands on p exactly.
  for (int p = 11; p <= table.depth; ++p) {
    const auto i = static_cast<std::size_t>(p);
    const bool below = table.delta[i] > 0.0 ? table.delta[i] <= ax : table.log_delta[i] <= lx;
    if (below) return p;
  }
  throw Error(ErrorKind::out_of_schedule,
              "|x| below delta_depth; deepen the critical table");
}

BoundFreeItinerary itinerary(const MapParams& params, const CriticalOrbitTable& table,
                             double x, int n) {
  BoundFreeItinerary it;
  it.horizon = n;
  const double dhat = table.delta_hat();
  int k = 0;
  double y = x;
  while (k < n) {
    if (std::abs(y) < dhat) {
      if (y == 0.0) throw Error(ErrorKind::validation, "itinerary: orbit hits 0");
      const int p = bound_period(table, y);
      it.entries.push_back({k, p});
      for (int i = 0; i < p && k < n; ++i, ++k) y = quad_map(params.a, y);
    } else {
      y = quad_map(params.a, y);
      ++k;
    }
  }
  return it;
}

// ---------------------------------------------------------------------------

int IpjGrid::pieces(double epsilon, int p) {
  return static_cast<int>(std::floor(std::exp(3.0 * epsilon * static_cast<double>(p))));
}

IpjGrid::IpjGrid(const CriticalOrbitTable& table, int cap_n, int p_max)
    : cap_n_(cap_n), p_max_(p_max) {
  if (cap_n < 2 || p_max <= cap_n || p_max > table.depth) {
    throw Error(ErrorKind::validation, "grid requires N < p_max <= depth");
  }
  const auto& d = table.delta;
  delta_n_ = d[static_cast<std::size_t>(cap_n)];
  delta_pmax_ = d[static_cast<std::size_t>(p_max)];
  if (!(delta_pmax_ > 0.0)) throw Error(ErrorKind::validation, "delta_{p_max} underflows");

  for (int p = p_max; p > cap_n; --p) {
    const double lo = d[static_cast<std::size_t>(p)];
    const double hi = d[static_cast<std::size_t>(p - 1)];
    const int k = pieces(table.epsilon, p);
    const double w = (hi - lo) / k;
    // j = k is leftmost; j = 1 ends exactly at delta_{p-1}.
    for (int j = k; j >= 1; --j) {
      GridInterval g;
      g.p = p;
      g.j = j;
      g.lo = j == k ? lo : hi - static_cast<double>(j) * w;
      g.hi = j == 1 ? hi : hi - static_cast<double>(j - 1) * w;
      positive_.push_back(g);
    }
  }
  const double lo = d[static_cast<std::size_t>(cap_n)];
  const double hi = d[static_cast<std::size_t>(cap_n - 1)];
  const int k = pieces(table.epsilon, cap_n);
  lambda_plus_ = GridInterval{cap_n, 1, k == 1 ? lo : hi - (hi - lo) / k, hi};
}

GridInterval IpjGrid::lambda_minus() const {
  return GridInterval{lambda_plus_.p, -1, -lambda_plus_.hi, -lambda_plus_.lo};
}

std::vector<GridInterval> IpjGrid::all() const {
  std::vector<GridInterval> out;
  out.reserve(2 * positive_.size());
  for (auto it = positive_.rbegin(); it != positive_.rend(); ++it) {
    out.push_back(GridInterval{it->p, -it->j, -it->hi, -it->lo});
  }
  out.insert(out.end(), positive_.begin(), positive_.end());
  return out;
}

std::optional<GridInterval> IpjGrid::locate(double y) const {
  const double ay = std::abs(y);
  if (ay < delta_pmax_ || ay >= delta_n_) return std::nullopt;
  // positive_ is sorted by lo; find the last interval with lo <= ay.
  auto it = std::upper_bound(positive_.begin(), positive_.end(), ay,
                             [](double v, const GridInterval& g) { return v < g.lo; });
  if (it == positive_.begin()) return std::nullopt;
  GridInterval g = *std::prev(it);
  // y in (-hi, -lo] iff |y| in [lo, hi), so the mirror lookup is the same search.
  if (y < 0.0) return GridInterval{g.p, -g.j, -g.hi, -g.lo};
  return g;
}

// ---------------------------------------------------------------------------

double log_derivative_near_critical(const CriticalOrbitTable& table, double x, int n) {
  if (n <= 0) return 0.0;
  if (x == 0.0) return kNegInf;
  if (n - 1 > table.depth) throw Error(ErrorKind::out_of_schedule, "shadow depth exceeds table");
  double sum = std::log(std::abs(2.0 * table.a * x));
  double e = shadow_start(table.a, x);
  for (int i = 0; i + 1 < n; ++i) {
    const double c = table.c[static_cast<std::size_t>(i)];
    const double y = c + e;
    if (y == 0.0) return kNegInf;
    sum += std::log(std::abs(2.0 * table.a * y));
    e = shadow_step(table.a, c, e);
  }
  return sum;
}

double image_offset_near_critical(const CriticalOrbitTable& table, double x, int n) {
  if (n < 1) throw Error(ErrorKind::validation, "image offset needs n >= 1");
  if (n - 1 > table.depth) throw Error(ErrorKind::out_of_schedule, "shadow depth exceeds table");
  double e = shadow_start(table.a, x);
  for (int i = 0; i + 1 < n; ++i) e = shadow_step(table.a, table.c[static_cast<std::size_t>(i)], e);
  return e;
}

}  // namespace ldplab
