#include "ldplab/thermo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "ldplab/error.hpp"
#include "ldplab/parallel.hpp"

namespace ldplab {

namespace {

// Inverse of f^len along the sign itinerary signs[0..len): for k = len-1 .. 0,
// y <- s_k sqrt((1 - y) / a).
double pull_back(double a, const std::vector<signed char>& signs, std::size_t len, double y) {
  for (std::size_t k = len; k-- > 0;) {
    y = signs[k] * std::sqrt(std::max(0.0, (1.0 - y) / a));
  }
  return y;
}

double push_forward(double a, double x, int n) {
  for (int i = 0; i < n; ++i) x = quad_map(a, x);
  return x;
}

double log_dfn(double a, double x, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    s += std::log(std::abs(2.0 * a * x));
    x = quad_map(a, x);
  }
  return s;
}

struct Lap {
  double lo = 0.0;
  double hi = 0.0;
  double u = 0.0;  // f^i(lo)
  double v = 0.0;  // f^i(hi)
  std::vector<signed char> signs;
};

// Replace a lap of f^i by the laps of f^{i+1}: split where f^i crosses 0, record the sign
// of f^i on each part, and push the endpoint values forward.
void advance_lap(double a, const Lap& lap, std::vector<Lap>& out) {
  auto finish = [&](Lap piece) {
    piece.signs.push_back(piece.u + piece.v > 0.0 ? 1 : -1);
    piece.u = quad_map(a, piece.u);
    piece.v = quad_map(a, piece.v);
    out.push_back(std::move(piece));
  };
  if (std::min(lap.u, lap.v) < 0.0 && std::max(lap.u, lap.v) > 0.0) {
    // The crossing point is the preimage of 0 along this lap's itinerary.
    const double cut = pull_back(a, lap.signs, lap.signs.size(), 0.0);
    finish(Lap{lap.lo, cut, lap.u, 0.0, lap.signs});
    finish(Lap{cut, lap.hi, 0.0, lap.v, lap.signs});
  } else {
    finish(lap);
  }
}

std::vector<int> decode(std::uint64_t code, std::size_t q, int k) {
  std::vector<int> w(static_cast<std::size_t>(k));
  for (int i = k - 1; i >= 0; --i) {
    w[static_cast<std::size_t>(i)] = static_cast<int>(code % q);
    code /= q;
  }
  return w;
}

void estimate_expansion(Horseshoe& h) {
  constexpr int samples = 64;
  double min_log = std::numeric_limits<double>::infinity();
  for (const auto& b : h.branches) {
    for (int i = 0; i < samples; ++i) {
      const double x = b.domain.lo + (i + 0.5) / samples * b.domain.length();
      min_log = std::min(min_log, b.log_dg(x));
    }
  }
  h.min_log_dg = min_log;
  h.uniformly_expanding = min_log > 0.0;

  // kappa from the shortest cylinders at the deepest affordable level, c from level 1.
  const std::size_t q = h.q();
  int depth = 1;
  while (depth < 3 && std::pow(static_cast<double>(q), depth + 1) <= 1e5) ++depth;
  const double jl = h.window.length();
  std::vector<Interval> level;
  for (const auto& b : h.branches) level.push_back(b.domain);
  double c = std::numeric_limits<double>::infinity();
  for (const auto& iv : level) c = std::min(c, jl / iv.length());
  std::vector<Interval> cur = level;
  for (int d = 2; d <= depth; ++d) {
    std::vector<Interval> next;
    next.reserve(cur.size() * q);
    for (const auto& b : h.branches) {
      for (const auto& iv : cur) {
        const double x = b.inverse(iv.lo);
        const double y = b.inverse(iv.hi);
        next.push_back({std::min(x, y), std::max(x, y)});
      }
    }
    cur = std::move(next);
  }
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& iv : cur) worst = std::min(worst, jl / iv.length());
  h.expansion_kappa = std::pow(worst, 1.0 / depth);
  h.expansion_c = std::min(1.0, c / h.expansion_kappa);
}

void set_layout_flags(Horseshoe& h) {
  std::vector<Interval> doms;
  for (const auto& b : h.branches) doms.push_back(b.domain);
  std::sort(doms.begin(), doms.end(), [](const Interval& x, const Interval& y) { return x.lo < y.lo; });
  h.disjoint = true;
  for (std::size_t i = 1; i < doms.size(); ++i) {
    if (doms[i].lo <= doms[i - 1].hi) h.disjoint = false;
  }
  h.interior = std::all_of(doms.begin(), doms.end(), [&](const Interval& d) {
    return h.window.lo < d.lo && d.hi < h.window.hi;
  });
}

// Birkhoff sum of phi over n base steps.
double birkhoff(const Horseshoe& h, const Observable& phi, double x, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    s += phi(x);
    if (i + 1 < n) x = h.base_step(x);
  }
  return s;
}

}  // namespace

std::string to_string(MeasureKind kind) {
  switch (kind) {
    case MeasureKind::periodic_orbit: return "periodic-orbit";
    case MeasureKind::nu_k: return "nu_k";
    case MeasureKind::spread: return "spread";
  }
  return "unknown";
}

Horseshoe find_horseshoe(const MapParams& params, int m, Interval window, std::size_t q_min) {
  params.validate();
  const double a = params.a;
  if (m < 1) throw Error(ErrorKind::validation, "find_horseshoe: m must be >= 1");
  if (m > 30) throw Error(ErrorKind::validation, "find_horseshoe: m must be <= 30");
  const double core_lo = quad_map(a, 1.0);
  if (!(window.lo < window.hi) || window.lo < core_lo - 1e-12 || window.hi > 1.0 + 1e-12) {
    throw Error(ErrorKind::validation, "find_horseshoe: window must lie in [f^2 0, f 0]");
  }

  std::vector<Lap> laps{Lap{window.lo, window.hi, window.lo, window.hi, {}}};
  for (int i = 0; i < m; ++i) {
    std::vector<Lap> next;
    next.reserve(laps.size() * 2);
    for (const auto& lap : laps) advance_lap(a, lap, next);
    laps = std::move(next);
  }

  Horseshoe h;
  h.m = m;
  h.window = window;
  constexpr double tol = 1e-12;
  for (const auto& lap : laps) {
    if (std::min(lap.u, lap.v) > window.lo + tol || std::max(lap.u, lap.v) < window.hi - tol) {
      continue;
    }
    auto signs = std::make_shared<const std::vector<signed char>>(lap.signs);
    auto inverse = [a, signs](double y) { return pull_back(a, *signs, signs->size(), y); };
    const double x0 = inverse(window.lo);
    const double x1 = inverse(window.hi);
    Branch b;
    b.domain = {std::min(x0, x1), std::max(x0, x1)};
    b.inverse = inverse;
    b.forward = [a, m](double x) { return push_forward(a, x, m); };
    b.log_dg = [a, m](double x) { return log_dfn(a, x, m); };
    h.branches.push_back(std::move(b));
  }
  if (h.branches.size() < q_min) {
    throw Error(ErrorKind::not_found, "find_horseshoe: " + std::to_string(h.branches.size()) +
                                          " full branches over the window at m=" +
                                          std::to_string(m) + ", need " + std::to_string(q_min));
  }
  h.base_step = [a](double x) { return quad_map(a, x); };
  set_layout_flags(h);
  estimate_expansion(h);
  return h;
}

Horseshoe linear_horseshoe(const std::vector<double>& slopes, double window_length) {
  if (slopes.size() < 2) throw Error(ErrorKind::validation, "linear_horseshoe: need >= 2 slopes");
  if (!(window_length > 0.0)) throw Error(ErrorKind::validation, "linear_horseshoe: bad window");
  double total = 0.0;
  for (double s : slopes) {
    if (!(s > 1.0)) throw Error(ErrorKind::validation, "linear_horseshoe: slopes must exceed 1");
    total += 1.0 / s;
  }
  if (total > 1.0 + 1e-12) {
    throw Error(ErrorKind::validation, "linear_horseshoe: branch domains do not fit in the window");
  }
  Horseshoe h;
  h.m = 1;
  h.window = {0.0, window_length};
  double lo = 0.0;
  for (double s : slopes) {
    const double len = window_length / s;
    Branch b;
    b.domain = {lo, lo + len};
    b.inverse = [lo, s](double y) { return lo + y / s; };
    b.forward = [lo, s](double x) { return (x - lo) * s; };
    const double ls = std::log(s);
    b.log_dg = [ls](double) { return ls; };
    h.branches.push_back(std::move(b));
    lo += len;
  }
  auto doms = std::make_shared<std::vector<Branch>>(h.branches);
  h.base_step = [doms](double x) {
    for (const auto& b : *doms) {
      if (x <= b.domain.hi) return b.forward(x);
    }
    return doms->back().forward(x);
  };
  set_layout_flags(h);
  estimate_expansion(h);
  return h;
}

std::vector<int> CylinderTree::word(std::uint64_t code) const { return decode(code, q, depth); }

std::uint64_t CylinderTree::rotate(std::uint64_t code) const {
  std::uint64_t top = 1;
  for (int i = 1; i < depth; ++i) top *= q;
  return (code % top) * q + code / top;
}

CylinderTree cylinders(const Horseshoe& h, int k, std::size_t budget) {
  if (k < 1) throw Error(ErrorKind::validation, "cylinders: depth must be >= 1");
  const std::size_t q = h.q();
  if (q < 1) throw Error(ErrorKind::validation, "cylinders: empty horseshoe");
  double count = 1.0;
  for (int i = 0; i < k; ++i) count *= static_cast<double>(q);
  if (count > static_cast<double>(budget)) {
    throw Error(ErrorKind::budget_exceeded,
                "cylinders: q^k = " + std::to_string(count) + " exceeds budget " +
                    std::to_string(budget));
  }
  CylinderTree tree;
  tree.depth = k;
  tree.q = q;
  tree.window_length = h.window.length();
  tree.levels.emplace_back();
  for (const auto& b : h.branches) tree.levels[0].push_back(b.domain);
  for (int j = 1; j < k; ++j) {
    const auto& prev = tree.levels[static_cast<std::size_t>(j - 1)];
    std::vector<Interval> next(prev.size() * q);
    // Prepending letter a: L_{a w} = psi_a(L_w), code a * q^j + w.
    parallel_for(q, [&](std::size_t letter) {
      const auto& br = h.branches[letter];
      for (std::size_t w = 0; w < prev.size(); ++w) {
        const double x = br.inverse(prev[w].lo);
        const double y = br.inverse(prev[w].hi);
        next[letter * prev.size() + w] = {std::min(x, y), std::max(x, y)};
      }
    });
    tree.levels.push_back(std::move(next));
  }
  const auto& top = tree.levels.back();
  tree.words.resize(top.size());
  parallel_for(top.size(), [&](std::size_t code) {
    const auto w = decode(code, q, k);
    auto psi = [&](double x) {
      for (int i = k - 1; i >= 0; --i) x = h.branches[static_cast<std::size_t>(w[static_cast<std::size_t>(i)])].inverse(x);
      return x;
    };
    const Interval iv = top[code];
    double x = 0.5 * (iv.lo + iv.hi);
    for (int it = 0; it < 200; ++it) {
      const double nx = psi(x);
      const bool done = std::abs(nx - x) <= 1e-12;
      x = nx;
      if (done) break;
    }
    tree.words[code] = Cylinder{code, iv, std::clamp(x, iv.lo, iv.hi)};
  });
  return tree;
}

MeasureApprox equilibrium_nu_k(const Horseshoe& h, const CylinderTree& tree,
                               const std::vector<Observable>& observables) {
  const int k = tree.depth;
  const std::size_t n = tree.words.size();
  double total = 0.0;
  for (const auto& c : tree.words) total += c.interval.length();

  MeasureApprox nu;
  nu.kind = MeasureKind::nu_k;
  nu.m = h.m;
  nu.points.resize(n);
  nu.weights.assign(n, 0.0);
  // Mass of word w is spread evenly over the points of its orbit, i.e. over the periodic
  // points of its rotations.
  for (std::size_t w = 0; w < n; ++w) {
    const double share = tree.words[w].interval.length() / total / k;
    std::uint64_t v = w;
    for (int j = 0; j < k; ++j) {
      nu.weights[v] += share;
      v = tree.rotate(v);
    }
  }
  std::vector<double> phi_sum(observables.size(), 0.0);
  double lyap = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const double x = tree.words[v].periodic_point;
    nu.points[v] = x;
    const auto first = static_cast<std::size_t>(v / (n / tree.q));
    lyap += nu.weights[v] * h.branches[first].log_dg(x);
    for (std::size_t o = 0; o < observables.size(); ++o) {
      phi_sum[o] += nu.weights[v] * birkhoff(h, observables[o], x, h.m);
    }
  }
  nu.lyapunov = lyap;
  for (std::size_t o = 0; o < observables.size(); ++o) nu.observable_means[observables[o].id] = phi_sum[o];
  nu.free_energy = std::log(total / tree.window_length) / k;
  nu.entropy_lb = nu.free_energy + nu.lyapunov;
  return nu;
}

std::vector<PressurePoint> pressure_curve(const Horseshoe& h, const CylinderTree& tree,
                                          const Observable& phi, std::vector<double> s_grid) {
  const int k = tree.depth;
  const std::size_t n = tree.words.size();
  std::vector<double> per_point(n);
  parallel_for(n, [&](std::size_t v) {
    per_point[v] = birkhoff(h, phi, tree.words[v].periodic_point, h.m);
  });
  std::vector<double> sums(n), log_len(n);
  for (std::size_t w = 0; w < n; ++w) {
    double b = 0.0;
    std::uint64_t v = w;
    for (int j = 0; j < k; ++j) {
      b += per_point[v];
      v = tree.rotate(v);
    }
    sums[w] = b;
    log_len[w] = std::log(tree.words[w].interval.length() / tree.window_length);
  }
  std::sort(s_grid.begin(), s_grid.end());
  const double steps = static_cast<double>(k) * h.m;
  std::vector<PressurePoint> out;
  out.reserve(s_grid.size());
  for (double s : s_grid) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t w = 0; w < n; ++w) mx = std::max(mx, log_len[w] + s * sums[w]);
    double z = 0.0;
    for (std::size_t w = 0; w < n; ++w) z += std::exp(log_len[w] + s * sums[w] - mx);
    const double log_z = mx + std::log(z);
    double mean = 0.0;
    for (std::size_t w = 0; w < n; ++w) mean += std::exp(log_len[w] + s * sums[w] - log_z) * sums[w];
    out.push_back({s, log_z / k, mean / steps, (log_z - s * mean) / steps});
  }
  return out;
}

MeasureApprox spread_measure(const Horseshoe& h, const MeasureApprox& nu) {
  const int m = h.m;
  MeasureApprox s;
  s.kind = MeasureKind::spread;
  s.m = 1;
  s.points.reserve(nu.points.size() * static_cast<std::size_t>(m));
  s.weights.reserve(nu.points.size() * static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < nu.points.size(); ++i) {
    double x = nu.points[i];
    for (int j = 0; j < m; ++j) {
      s.points.push_back(x);
      s.weights.push_back(nu.weights[i] / m);
      x = h.base_step(x);
    }
  }
  s.lyapunov = nu.lyapunov / m;
  s.entropy_lb = nu.entropy_lb / m;
  s.free_energy = (nu.entropy_lb - nu.lyapunov) / m;
  for (const auto& [id, mean] : nu.observable_means) s.observable_means[id] = mean / m;
  return s;
}

namespace {

struct Node {
  double lo, hi, u, v;
  std::vector<signed char> signs;  // signs of f^0..f^{depth-1} on the lap
};

std::uint32_t pack(const std::vector<signed char>& signs) {
  std::uint32_t bits = 0;
  for (std::size_t i = 0; i < signs.size(); ++i) {
    if (signs[i] > 0) bits |= 1u << i;
  }
  return bits;
}

// Orbit representative: the word must be primitive and its own smallest rotation.
bool canonical_primitive(std::uint32_t bits, int q) {
  const std::uint32_t mask = q == 32 ? ~0u : (1u << q) - 1u;
  for (int r = 1; r < q; ++r) {
    const std::uint32_t rot = ((bits >> r) | (bits << (q - r))) & mask;
    if (rot <= bits) return false;
  }
  return true;
}

struct OrbitHit {
  int period;
  std::vector<double> orbit;
};

// Fixed point of f^q on a monotone lap, by bisection on f^q(x) - x.
void solve_lap(double a, const Node& nd, int q, std::vector<OrbitHit>& hits) {
  const double h_lo = nd.u - nd.lo;
  const double h_hi = nd.v - nd.hi;
  if (h_lo * h_hi > 0.0) return;
  if (!canonical_primitive(pack(nd.signs), q)) return;
  double lo = nd.lo, hi = nd.hi;
  double x;
  if (h_lo == 0.0) {
    x = lo;
  } else if (h_hi == 0.0) {
    x = hi;
  } else {
    const bool rising = h_lo < 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * 0.5; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double hm = push_forward(a, mid, q) - mid;
      if ((hm < 0.0) == rising) lo = mid;
      else hi = mid;
    }
    x = 0.5 * (lo + hi);
  }
  std::vector<double> orbit(static_cast<std::size_t>(q));
  for (int i = 0; i < q; ++i) {
    if (std::abs(x) < 1e-13) return;  // passes through the critical point
    orbit[static_cast<std::size_t>(i)] = x;
    x = quad_map(a, x);
  }
  hits.push_back({q, std::move(orbit)});
}

void survey_dfs(double a, Node nd, int depth, int period_max, std::vector<OrbitHit>& hits) {
  if (depth >= 1) solve_lap(a, nd, depth, hits);
  if (depth == period_max) return;
  std::vector<Lap> kids;
  advance_lap(a, Lap{nd.lo, nd.hi, nd.u, nd.v, nd.signs}, kids);
  for (auto& k : kids) survey_dfs(a, Node{k.lo, k.hi, k.u, k.v, std::move(k.signs)}, depth + 1, period_max, hits);
}

}  // namespace

std::vector<MeasureApprox> periodic_orbit_survey(const MapParams& params, int period_max,
                                                 const std::vector<Observable>& observables) {
  params.validate();
  if (period_max < 1 || period_max > 24) {
    throw Error(ErrorKind::validation, "periodic_orbit_survey: period_max must be in [1, 24]");
  }
  const double a = params.a;
  // Sequential frontier to a moderate depth, then independent subtrees in parallel.
  const int split = std::min(period_max, 8);
  std::vector<OrbitHit> shallow;
  std::vector<Node> frontier{Node{-1.0, 1.0, -1.0, 1.0, {}}};
  for (int d = 0; d < split; ++d) {
    std::vector<Node> next;
    for (const auto& nd : frontier) {
      if (d >= 1) solve_lap(a, nd, d, shallow);
      std::vector<Lap> kids;
      advance_lap(a, Lap{nd.lo, nd.hi, nd.u, nd.v, nd.signs}, kids);
      for (auto& k : kids) next.push_back(Node{k.lo, k.hi, k.u, k.v, std::move(k.signs)});
    }
    frontier = std::move(next);
  }
  std::vector<std::vector<OrbitHit>> deep(frontier.size());
  parallel_for(frontier.size(), [&](std::size_t i) {
    survey_dfs(a, frontier[i], split, period_max, deep[i]);
  });
  for (auto& d : deep) {
    for (auto& hit : d) shallow.push_back(std::move(hit));
  }
  std::sort(shallow.begin(), shallow.end(), [](const OrbitHit& x, const OrbitHit& y) {
    if (x.period != y.period) return x.period < y.period;
    return *std::min_element(x.orbit.begin(), x.orbit.end()) <
           *std::min_element(y.orbit.begin(), y.orbit.end());
  });

  std::vector<MeasureApprox> out;
  out.reserve(shallow.size());
  for (const auto& hit : shallow) {
    MeasureApprox mu;
    mu.kind = MeasureKind::periodic_orbit;
    mu.points = hit.orbit;
    mu.weights.assign(hit.orbit.size(), 1.0 / hit.period);
    double lyap = 0.0;
    for (double x : hit.orbit) lyap += std::log(std::abs(2.0 * a * x));
    mu.lyapunov = lyap / hit.period;
    mu.entropy_lb = 0.0;
    mu.free_energy = -mu.lyapunov;
    for (const auto& phi : observables) {
      double s = 0.0;
      for (double x : hit.orbit) s += phi(x);
      mu.observable_means[phi.id] = s / hit.period;
    }
    out.push_back(std::move(mu));
  }
  return out;
}

double cylinder_ratio_bound(const CylinderTree& tree) {
  if (tree.depth < 2) return 1.0;
  const auto& parents = tree.levels[static_cast<std::size_t>(tree.depth - 2)];
  const auto& kids = tree.levels[static_cast<std::size_t>(tree.depth - 1)];
  const auto& letters = tree.levels[0];
  const std::size_t stride = std::max<std::size_t>(1, parents.size() / 4096);
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w < parents.size(); w += stride) {
    for (std::size_t a = 0; a < tree.q; ++a) {
      const double r = kids[w * tree.q + a].length() * tree.window_length /
                       (parents[w].length() * letters[a].length());
      worst = std::min(worst, r);
    }
  }
  return worst;
}

}  // namespace ldplab
