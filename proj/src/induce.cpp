#include <algorithm>
#include <cmath>
#include <sstream>

#include "ldplab/parallel.hpp"
#include "ldplab/partition.hpp"

namespace ldplab {

namespace {

constexpr std::size_t kLineageChunk = 64;

double log_min_abs(double lo, double hi) {
  if (lo > 0.0) return std::log(lo);
  if (hi < 0.0) return std::log(-hi);
  return kNegInf;
}

std::size_t draw(const std::vector<double>& w, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return i;
  }
  return w.size() - 1;
}

std::size_t draw_among(const PartitionGeometry& geo, const LabeledInterval& e, int t,
                       const std::vector<PieceSpec>& pieces, int window, std::mt19937_64& rng) {
  if (pieces.size() == 1) return 0;
  return draw(piece_weights(geo, e, t, pieces, window), rng);
}

// Chooses the piece holding a Lebesgue-random point of e: first among the left outer
// fragments, the middle block and the right outer fragments, then inside the drawn group,
// then inside an inner run.
PieceSpec choose_piece(const PartitionGeometry& geo, const LabeledInterval& e, int t,
                       const std::vector<PieceSpec>& coarse, int window, std::mt19937_64& rng) {
  std::size_t first = 0;
  while (first < coarse.size() && coarse[first].kind == PieceKind::outer) ++first;
  std::size_t last = coarse.size();
  while (last > first && coarse[last - 1].kind == PieceKind::outer) --last;
  std::vector<PieceSpec> groups;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (const auto& [b, f] : {std::pair{std::size_t{0}, first}, std::pair{first, last},
                             std::pair{last, coarse.size()}}) {
    if (b == f) continue;
    PieceSpec g;
    g.lo = coarse[b].lo;
    g.hi = coarse[f - 1].hi;
    groups.push_back(g);
    ranges.emplace_back(b, f);
  }
  const auto [b, f] = ranges[draw_among(geo, e, t, groups, window, rng)];
  const std::vector<PieceSpec> members(coarse.begin() + static_cast<std::ptrdiff_t>(b),
                                       coarse.begin() + static_cast<std::ptrdiff_t>(f));
  const PieceSpec c = members[draw_among(geo, e, t, members, window, rng)];
  if (c.kind != PieceKind::run) return c;
  std::vector<PieceSpec> inside;
  for (const auto& ps : subdivide(geo, e.lo, e.hi)) {
    if (ps.kind != PieceKind::center && ps.lo >= c.lo && ps.hi <= c.hi) inside.push_back(ps);
  }
  return inside[draw_among(geo, e, t, inside, window, rng)];
}

}  // namespace

Lineage sample_lineage(const PartitionGeometry& geo, LabeledInterval start, int n0, int horizon,
                       int window, std::mt19937_64& rng) {
  Lineage out;
  LabeledInterval e = std::move(start);
  int n = n0;
  int t = n0;  // time since the last restart
  const int keep = std::max(64, 4 * window);
  while (n < horizon) {
    step_forward(geo, e, t);
    ++t;
    ++n;
    if (window > 0 && static_cast<int>(e.trail.size()) > 2 * keep) {
      const auto cut = e.trail.size() - static_cast<std::size_t>(keep);
      e.trail.erase(e.trail.begin(), e.trail.begin() + static_cast<std::ptrdiff_t>(cut));
      e.trail_start += static_cast<int>(cut);
    }
    if (t < geo.N || t < e.bound_until) continue;
    if (e.tag >= 0) {
      const double cr = geo.table.c[static_cast<std::size_t>(e.tag)];
      e.lo += cr;
      e.hi += cr;
      e.tag = -1;
    }
    const std::vector<PieceSpec> pieces = subdivide(geo, e.lo, e.hi, nullptr, true);
    if (pieces.empty()) continue;
    if (pieces.size() == 1 && pieces.front().kind == PieceKind::unsplit) {
      e.bound_until = t + pieces.front().p;
      out.return_times.push_back(n);
      out.return_log_d.push_back(log_min_abs(e.lo, e.hi));
      continue;
    }
    const PieceSpec ps = choose_piece(geo, e, t, pieces, window, rng);
    switch (ps.kind) {
      case PieceKind::stop:
        out.stops.push_back(n);
        out.stop_signs.push_back(ps.stop_sign);
        e = lambda_plus_element(geo);
        e.history.clear();
        t = 0;
        break;
      case PieceKind::center:
        out.return_times.push_back(n);
        out.return_log_d.push_back(std::log(geo.center));
        out.truncated = true;
        out.end = n;
        return out;
      case PieceKind::outer:
        e.lo = ps.lo;
        e.hi = ps.hi;
        e.bound_until = t;
        break;
      default:
        e.lo = ps.lo;
        e.hi = ps.hi;
        e.bound_until = t + ps.p;
        out.return_times.push_back(n);
        out.return_log_d.push_back(log_min_abs(ps.lo, ps.hi));
        break;
    }
  }
  out.end = n;
  return out;
}

ExpFit fit_exponential(const std::vector<int>& n, const std::vector<double>& mass) {
  ExpFit fit;
  double sx = 0.0;
  double sy = 0.0;
  double sxx = 0.0;
  double sxy = 0.0;
  int k = 0;
  for (std::size_t i = 0; i < n.size() && i < mass.size(); ++i) {
    if (!(mass[i] > 0.0)) continue;
    const double x = n[i];
    const double y = std::log(mass[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    if (k == 0) fit.n_lo = n[i];
    fit.n_hi = n[i];
    ++k;
  }
  if (k < 2) throw Error(ErrorKind::insufficient_samples, "exponential fit needs two positive masses");
  const double den = k * sxx - sx * sx;
  if (!(den > 0.0)) throw Error(ErrorKind::insufficient_samples, "exponential fit needs two distinct n");
  fit.rate = (k * sxy - sx * sy) / den;
  fit.intercept = (sy - fit.rate * sx) / k;
  if (k > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < n.size() && i < mass.size(); ++i) {
      if (!(mass[i] > 0.0)) continue;
      const double r = std::log(mass[i]) - (fit.intercept + fit.rate * n[i]);
      rss += r * r;
    }
    fit.stderr_ = std::sqrt(rss / (k - 2) * k / den);
  }
  return fit;
}

namespace {

struct Outcome {
  bool carved = false;
  bool resolved = false;
  bool gap = false;
  int r = 0;
  int sign = 1;
};

Outcome evaluate(const PartitionGeometry& geo, const Lineage& L, int check_horizon) {
  Outcome o;
  const double ld = geo.log_delta;
  const double eps = geo.epsilon;
  for (std::size_t k = 0; k < L.return_times.size(); ++k) {
    const int n = L.return_times[k];
    if (L.return_log_d[k] < ld - eps * n) return o;  // x is not in the carved set
  }
  if (L.truncated) return o;  // center hit not decided by the threshold: unresolved below
  o.carved = true;
  if (L.stops.empty()) return o;
  std::size_t si = 0;
  int R = L.stops[0];
  int sign = L.stop_signs[0];
  for (;;) {
    int g = 0;
    for (std::size_t k = 0; k < L.return_times.size(); ++k) {
      const int n = L.return_times[k];
      if (n <= R) continue;
      const int m = n - R;
      if (m > check_horizon) break;
      if (L.return_log_d[k] < ld - eps * m) {
        g = m;
        break;
      }
    }
    if (g == 0) {
      if (R + check_horizon > L.end) return o;
      o.resolved = true;
      o.r = R;
      o.sign = sign;
      return o;
    }
    o.gap = true;
    while (si < L.stops.size() && L.stops[si] <= R + g) ++si;
    if (si >= L.stops.size()) return o;
    R = L.stops[si];
    sign = L.stop_signs[si];
  }
}

}  // namespace

InducedMap induce(const PartitionGeometry& geo, const LineageOptions& opts) {
  if (opts.samples == 0) throw Error(ErrorKind::validation, "induce needs samples > 0");
  const std::size_t chunks = (opts.samples + kLineageChunk - 1) / kLineageChunk;
  std::vector<std::vector<Outcome>> per(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    auto rng = chunk_rng(opts.seed, 3, c);
    const std::size_t lo = c * kLineageChunk;
    const std::size_t hi = std::min(opts.samples, lo + kLineageChunk);
    for (std::size_t s = lo; s < hi; ++s) {
      const Lineage L =
          sample_lineage(geo, lambda_plus_element(geo), 0, opts.horizon, opts.backward_window, rng);
      Outcome o = evaluate(geo, L, opts.check_horizon);
      if (L.truncated) {
        // a center hit that the threshold does not decide: count it as carved and unresolved
        bool earlier_deleted = false;
        for (std::size_t k = 0; k + 1 < L.return_times.size(); ++k) {
          if (L.return_log_d[k] < geo.log_delta - geo.epsilon * L.return_times[k]) earlier_deleted = true;
        }
        const bool decided = std::log(geo.center) < geo.log_delta - geo.epsilon * L.end;
        if (!earlier_deleted && !decided) {
          o.carved = true;
        }
      }
      per[c].push_back(o);
    }
  });
  InducedMap out;
  out.samples = opts.samples;
  out.horizon = opts.horizon;
  std::size_t unresolved = 0;
  std::size_t gaps = 0;
  std::size_t plus = 0;
  for (const auto& v : per) {
    for (const auto& o : v) {
      if (!o.carved) continue;
      ++out.carved_samples;
      if (!o.resolved) {
        ++unresolved;
        continue;
      }
      out.r_values.push_back(o.r);
      out.r_signs.push_back(o.sign);
      if (o.gap) ++gaps;
      if (o.sign > 0) ++plus;
    }
  }
  std::vector<std::size_t> order(out.r_values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return out.r_values[x] < out.r_values[y] || (out.r_values[x] == out.r_values[y] && x < y);
  });
  std::vector<int> rv;
  std::vector<int> rs;
  for (std::size_t i : order) {
    rv.push_back(out.r_values[i]);
    rs.push_back(out.r_signs[i]);
  }
  out.r_values = std::move(rv);
  out.r_signs = std::move(rs);
  const double total = static_cast<double>(opts.samples);
  const double carved = static_cast<double>(out.carved_samples);
  out.carved_fraction = carved / total;
  out.unresolved_fraction = carved > 0 ? static_cast<double>(unresolved) / carved : 1.0;
  const std::size_t resolved = out.r_values.size();
  out.regular_return_fraction = resolved ? static_cast<double>(gaps) / resolved : 0.0;
  out.plus_fraction = resolved ? static_cast<double>(plus) / resolved : 0.5;
  out.min_r = resolved ? out.r_values.front() : 0;
  if (out.unresolved_fraction > 0.2) {
    std::ostringstream os;
    os << out.unresolved_fraction * 100.0 << "% of the carved samples have no return time within "
       << opts.horizon << " steps";
    throw Error(ErrorKind::unresolved_mass, os.str());
  }
  if (resolved == 0) throw Error(ErrorKind::insufficient_samples, "no resolved return times");

  const int r_max = out.r_values.back();
  const int step = std::max(1, r_max / 400);
  for (int n = 0; n <= r_max; n += step) {
    const auto above = static_cast<std::size_t>(
        out.r_values.end() - std::upper_bound(out.r_values.begin(), out.r_values.end(), n));
    const std::size_t count = above + unresolved;
    out.n_grid.push_back(n);
    out.counts.push_back(count);
    out.tail.push_back(static_cast<double>(count) / total);
    out.tail_given_omega.push_back(static_cast<double>(count) / carved);
  }
  // resolved range: resolved tail count at least 30 and at least four times the unresolved count
  std::vector<int> fn;
  std::vector<double> fm;
  for (std::size_t i = 0; i < out.n_grid.size(); ++i) {
    const std::size_t res = out.counts[i] - unresolved;
    if (out.n_grid[i] < geo.N) continue;
    if (res < 30 || res < 4 * unresolved) break;
    fn.push_back(out.n_grid[i]);
    fm.push_back(out.tail[i]);
  }
  if (fn.size() >= 2) out.fit = fit_exponential(fn, fm);
  return out;
}

Tower build_tower(const InducedMap& induced, int kb_steps) {
  if (induced.r_values.empty()) throw Error(ErrorKind::insufficient_samples, "tower needs return times");
  Tower t;
  t.kb_steps = kb_steps;
  const auto& r = induced.r_values;
  const double count = static_cast<double>(r.size());
  const int r_max = r.back();
  t.level_mass.resize(static_cast<std::size_t>(r_max));
  for (int l = 0; l < r_max; ++l) {
    const auto above =
        static_cast<double>(r.end() - std::upper_bound(r.begin(), r.end(), l));
    t.level_mass[static_cast<std::size_t>(l)] = above / count;
  }
  for (double m : t.level_mass) t.mean_return += m;
  double direct = 0.0;
  for (int v : r) direct += v;
  t.mean_return_direct = direct / count;
  t.mu_hat.resize(t.level_mass.size());
  for (std::size_t l = 0; l < t.level_mass.size(); ++l) t.mu_hat[l] = t.level_mass[l] / t.mean_return;
  t.rho = t.mu_hat.empty() ? 0.0 : t.mu_hat[0];
  // Branch signs do not depend on the side a point starts from (f(-x) = f(x)), so every
  // push-forward under the induced map puts plus_fraction of the mass on Omega^+.
  const double w = kb_steps > 0 ? induced.plus_fraction : 0.5;
  t.plus_weight = w;
  const double half = 0.5 * induced.carved_fraction;
  const double dp = w / half / t.mean_return;
  const double dm = (1.0 - w) / half / t.mean_return;
  t.c1 = std::min(dp, dm);
  t.c2 = std::max(dp, dm);
  return t;
}

EscapeTail escape_tail(const PartitionGeometry& geo, const LabeledInterval& omega, int m, int n_lo,
                       int n_hi, const LineageOptions& opts) {
  if (n_lo > n_hi || n_lo < 0) throw Error(ErrorKind::validation, "escape tail needs 0 <= n_lo <= n_hi");
  if (n_lo < std::sqrt(geo.epsilon) * m) {
    throw Error(ErrorKind::validation, "escape tail needs n >= eps^(1/2) m");
  }
  if (m < omega.bound_until) throw Error(ErrorKind::validation, "escape tail needs a free element");
  const std::size_t chunks = (opts.samples + kLineageChunk - 1) / kLineageChunk;
  std::vector<std::vector<int>> first_stop(chunks);
  const int horizon = std::max(opts.horizon, m + n_hi + 1);
  parallel_for(chunks, [&](std::size_t c) {
    auto rng = chunk_rng(opts.seed, 4, c);
    const std::size_t lo = c * kLineageChunk;
    const std::size_t hi = std::min(opts.samples, lo + kLineageChunk);
    for (std::size_t s = lo; s < hi; ++s) {
      const Lineage L = sample_lineage(geo, omega, m, horizon, opts.backward_window, rng);
      first_stop[c].push_back(L.stops.empty() ? (L.truncated ? -2 : -1) : L.stops.front());
    }
  });
  EscapeTail out;
  out.m = m;
  std::vector<int> s;
  std::size_t unresolved = 0;
  for (const auto& v : first_stop) {
    for (int x : v) {
      if (x < 0) {
        ++unresolved;
      } else {
        s.push_back(x);
      }
    }
  }
  std::sort(s.begin(), s.end());
  const double total = static_cast<double>(opts.samples);
  out.unresolved = unresolved / total;
  if (out.unresolved > 0.2) {
    std::ostringstream os;
    os << out.unresolved * 100.0 << "% of omega has no stopping time within " << horizon << " steps";
    throw Error(ErrorKind::insufficient_depth, os.str());
  }
  const int step = std::max(1, (n_hi - n_lo) / 200);
  std::vector<int> fn;
  std::vector<double> fm;
  for (int n = n_lo; n <= n_hi; n += step) {
    const auto at_least =
        static_cast<std::size_t>(s.end() - std::lower_bound(s.begin(), s.end(), m + n));
    const std::size_t count = at_least + unresolved;
    out.n_values.push_back(n);
    out.mass.push_back(count / total);
    if (count >= 10) {
      fn.push_back(n);
      fm.push_back(count / total);
    }
  }
  out.fit = fit_exponential(fn, fm);
  out.c_fit = std::exp(out.fit.intercept);
  out.zeta_fit = std::exp(out.fit.rate);
  return out;
}

QuickFall quick_fall(const PartitionGeometry& geo, const LabeledInterval& omega, int n,
                     double carved_fraction, const PartitionOptions& opts) {
  QuickFall out;
  const double e3 = std::cbrt(geo.epsilon);
  out.window_hi = static_cast<int>(std::floor((1.0 + e3) * n));
  out.bound = std::exp(-e3 * n);
  PartitionEngine sub(geo, opts, omega, n);
  sub.run_to(out.window_hi);
  for (const auto& s : sub.stops()) {
    if (s.S < n || s.S > out.window_hi) continue;
    if (!survives(geo, s.history, 0, s.S)) continue;
    const double f = s.mass * carved_fraction / omega.mass;
    if (f > out.fraction) {
      out.fraction = f;
      out.r = s.S;
    }
  }
  out.pass = out.fraction >= out.bound;
  return out;
}

}  // namespace ldplab
