#include "ldplab/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "ldplab/parallel.hpp"

namespace ldplab {

namespace {

constexpr std::size_t kAdvanceBatch = 1024;

std::int16_t narrow16(int v) {
  if (v < INT16_MIN || v > INT16_MAX) throw Error(ErrorKind::out_of_schedule, "grid index beyond 16 bits");
  return static_cast<std::int16_t>(v);
}

std::vector<ReturnRecord> extended(const std::vector<ReturnRecord>& h, const ReturnRecord& r) {
  std::vector<ReturnRecord> out;
  out.reserve(h.size() + 1);
  out.assign(h.begin(), h.end());
  out.push_back(r);
  return out;
}

constexpr double kOffsetSwitch = 0.05;   // |y| below this: carry f(y) as an offset from c_0
constexpr double kOffsetRelease = 0.1;   // |e| above this fraction of |c_r|: back to absolute

double sgn(double x) { return x < 0.0 ? -1.0 : 1.0; }

struct Seg {
  double lo;
  double hi;
  int p;
  int j;
  bool full;
};

// Pieces of one side of (-delta, delta): one per full grid interval, partial end
// segments merged into the nearest full piece.
void side_pieces(const std::vector<Seg>& segs, std::vector<PieceSpec>& out,
                 SubdivisionFlags* flags) {
  if (segs.empty()) return;
  int first = -1;
  int last = -1;
  for (int i = 0; i < static_cast<int>(segs.size()); ++i) {
    if (segs[static_cast<std::size_t>(i)].full) {
      if (first < 0) first = i;
      last = i;
    }
  }
  if (first < 0) {
    PieceSpec ps;
    ps.lo = segs.front().lo;
    ps.hi = segs.back().hi;
    ps.kind = PieceKind::inner;
    ps.p = segs.front().p;
    ps.j = segs.front().j;
    for (const auto& s : segs) {
      if (s.p < ps.p) {
        ps.p = s.p;
        ps.j = s.j;
      }
    }
    ps.full_count = 0;
    ps.flagged = true;
    if (flags) ++flags->partial_pieces;
    out.push_back(ps);
    return;
  }
  for (int i = first; i <= last; ++i) {
    const Seg& s = segs[static_cast<std::size_t>(i)];
    if (!s.full) continue;
    PieceSpec ps;
    ps.lo = i == first ? segs.front().lo : s.lo;
    ps.hi = i == last ? segs.back().hi : s.hi;
    // partial segments strictly between full ones cannot occur: the image is an interval
    ps.kind = PieceKind::inner;
    ps.p = s.p;
    ps.j = s.j;
    ps.full_count = 1;
    out.push_back(ps);
  }
}

struct OuterSide {
  std::vector<PieceSpec> pieces;  // in increasing position, pending fragment excluded
  bool pending = false;           // short fragment adjacent to +-delta, to be glued inward
  PieceSpec fragment;
};

PieceSpec outer_piece(double lo, double hi) {
  PieceSpec ps;
  ps.lo = lo;
  ps.hi = hi;
  ps.kind = PieceKind::outer;
  return ps;
}

// Outer component on one side, [lo, hi] beyond delta. `near` is the part touching +-delta.
OuterSide outer_side(const PartitionGeometry& g, double lo, double hi, bool stop, int side) {
  OuterSide out;
  auto near_fragment = [&](double flo, double fhi) {
    if (!(fhi > flo)) return;
    if (fhi - flo >= g.lambda_len) {
      out.pieces.push_back(outer_piece(flo, fhi));
    } else {
      out.pending = true;
      out.fragment = outer_piece(flo, fhi);
    }
  };
  if (!stop) {
    near_fragment(lo, hi);
    return out;
  }
  PieceSpec st;
  st.kind = PieceKind::stop;
  st.stop_sign = side;
  st.p = g.N;
  st.j = side;
  if (side > 0) {
    st.lo = g.lambda_lo;
    st.hi = g.lambda_hi;
    near_fragment(lo, st.lo);
    out.pieces.push_back(st);
    if (hi > st.hi) out.pieces.push_back(outer_piece(st.hi, hi));
  } else {
    st.lo = -g.lambda_hi;
    st.hi = -g.lambda_lo;
    if (st.lo > lo) out.pieces.push_back(outer_piece(lo, st.lo));
    out.pieces.push_back(st);
    near_fragment(st.hi, hi);
  }
  return out;
}

}  // namespace

std::string to_string(ReturnKind kind) {
  switch (kind) {
    case ReturnKind::initial: return "initial";
    case ReturnKind::inner: return "inner";
    case ReturnKind::outer: return "outer";
    case ReturnKind::stop: return "stop";
    case ReturnKind::unsplit: return "unsplit";
  }
  return "unknown";
}

PartitionGeometry make_geometry(const MapParams& params, const PartitionOptions& opts) {
  params.validate();
  if (opts.depth < 1) throw Error(ErrorKind::validation, "partition depth must be >= 1");
  PartitionGeometry g;
  g.table = critical_table(params);
  const MapParams resolved = resolve_cap_n(params, g.table);
  g.N = resolved.cap_n;
  g.a = params.a;
  g.epsilon = params.epsilon;
  g.lambda = params.lambda;
  const auto& t = g.table;
  g.log_delta = t.log_delta[static_cast<std::size_t>(g.N)];
  g.delta = t.delta[static_cast<std::size_t>(g.N)];
  int p_max = opts.p_max;
  if (p_max <= 0) {
    int p0 = g.N + 1;
    while (p0 < t.depth &&
           t.log_delta[static_cast<std::size_t>(p0)] > g.log_delta - g.epsilon * opts.depth) {
      ++p0;
    }
    p_max = std::max(opts.depth, p0);
  }
  p_max = std::min(p_max, t.depth - 1);
  if (p_max <= g.N) throw Error(ErrorKind::validation, "partition needs depth > capN + 1");
  g.p_max = p_max;
  IpjGrid grid(t, g.N, p_max);
  g.positive.assign(grid.positive().begin(), grid.positive().end());
  g.center = grid.inner_radius();
  g.lambda_lo = grid.lambda_plus().lo;
  g.lambda_hi = grid.lambda_plus().hi;
  g.lambda_len = g.lambda_hi - g.lambda_lo;
  return g;
}

LabeledInterval lambda_plus_element(const PartitionGeometry& geo) {
  LabeledInterval e;
  e.mass = 1.0;
  e.base_lo = geo.lambda_lo;
  e.base_hi = geo.lambda_hi;
  e.tag = -1;
  e.lo = geo.lambda_lo;
  e.hi = geo.lambda_hi;
  e.bound_until = geo.N;
  e.history.push_back({0, narrow16(geo.N), 1, std::log(geo.lambda_lo), ReturnKind::initial});
  return e;
}

std::vector<LabeledInterval> PartitionStage::both_sides() const {
  std::vector<LabeledInterval> out;
  out.reserve(2 * elements.size());
  for (const auto& e : elements) {
    LabeledInterval m = e;
    m.mass *= 0.5;
    out.push_back(m);
    m.base_lo = -e.base_hi;
    m.base_hi = -e.base_lo;
    out.push_back(std::move(m));
  }
  std::sort(out.begin(), out.end(),
            [](const LabeledInterval& x, const LabeledInterval& y) { return x.base_lo < y.base_lo; });
  return out;
}

PartitionStage initial_stage(const PartitionGeometry& geo) {
  PartitionStage s;
  s.n = 0;
  s.elements.push_back(lambda_plus_element(geo));
  return s;
}

double image_length(const LabeledInterval& e) { return e.hi - e.lo; }

double distance_to_zero(const PartitionGeometry& geo, const LabeledInterval& e) {
  const double shift = e.tag >= 0 ? geo.table.c[static_cast<std::size_t>(e.tag)] : 0.0;
  const double lo = e.lo + shift;
  const double hi = e.hi + shift;
  if (lo > 0.0) return lo;
  if (hi < 0.0) return -hi;
  return 0.0;
}

void step_forward(const PartitionGeometry& geo, LabeledInterval& e, int n) {
  const auto& c = geo.table.c;
  TrailStep ts;
  ts.tag = static_cast<std::int16_t>(e.tag);
  ts.sign = static_cast<std::int8_t>(e.tag < 0 ? sgn(e.lo + e.hi) : sgn(c[static_cast<std::size_t>(e.tag)]));
  if (e.trail.empty()) e.trail_start = n;
  e.trail.push_back(ts);
  e.image_sum += e.hi - e.lo;
  const double a = geo.a;
  if (e.tag < 0) {
    const bool straddle = e.lo < 0.0 && e.hi > 0.0;
    if (std::max(std::abs(e.lo), std::abs(e.hi)) < kOffsetSwitch) {
      const double u = -a * e.lo * e.lo;
      const double v = -a * e.hi * e.hi;
      e.lo = std::min(u, v);
      e.hi = straddle ? 0.0 : std::max(u, v);
      e.tag = 0;
    } else {
      const double u = quad_map(a, e.lo);
      const double v = quad_map(a, e.hi);
      e.lo = std::min(u, v);
      e.hi = straddle ? 1.0 : std::max(u, v);
    }
    if (straddle) e.flagged = true;
    return;
  }
  const int r = e.tag;
  const double cr = c[static_cast<std::size_t>(r)];
  const double u = shadow_step(a, cr, e.lo);
  const double v = shadow_step(a, cr, e.hi);
  e.lo = std::min(u, v);
  e.hi = std::max(u, v);
  e.tag = r + 1;
  const double cn = c[static_cast<std::size_t>(r + 1)];
  if (r + 1 >= geo.table.depth || std::max(std::abs(e.lo), std::abs(e.hi)) > kOffsetRelease * std::abs(cn)) {
    e.lo += cn;
    e.hi += cn;
    e.tag = -1;
  }
}

BackwardResult pull_back(const PartitionGeometry& geo, const LabeledInterval& e, int n, double y,
                         int window) {
  const auto& c = geo.table.c;
  const double a = geo.a;
  const double log2a = std::log(2.0 * a);
  int lower = e.trail_start;
  if (window > 0) lower = std::max(lower, n - window);
  int t = e.tag;
  double w = y;
  double L = 0.0;
  for (int i = n - 1; i >= lower; --i) {
    const TrailStep& s = e.trail[static_cast<std::size_t>(i - e.trail_start)];
    if (s.tag < 0) {
      double x2;
      if (t == 0) {
        x2 = std::max(0.0, -w / a);
      } else {
        if (t > 0) w += c[static_cast<std::size_t>(t)];
        x2 = std::max(0.0, (1.0 - w) / a);
      }
      const double x = s.sign * std::sqrt(x2);
      L += x2 > 0.0 ? log2a + 0.5 * std::log(x2) : kNegInf;
      t = -1;
      w = x;
    } else {
      const int r = s.tag;
      const double cr = c[static_cast<std::size_t>(r)];
      double ep = w;
      if (t != r + 1) ep = (t < 0 ? w : w + c[static_cast<std::size_t>(t)]) - c[static_cast<std::size_t>(r + 1)];
      const double disc = std::max(0.0, cr * cr - ep / a);
      const double ee = (-ep / a) / (cr + sgn(cr) * std::sqrt(disc));
      L += log2a + std::log(std::abs(cr)) + std::log1p(ee / cr);
      t = r;
      w = ee;
    }
  }
  BackwardResult out;
  out.log_df = L;
  out.anchor = w;
  out.anchor_tag = t;
  if (lower == e.trail_start && lower == 0) {
    out.base = t < 0 ? w : w + c[static_cast<std::size_t>(t)];
    out.reached_base = true;
  }
  return out;
}

double log_pull_back_length(const PartitionGeometry& geo, const LabeledInterval& e, int n, double y_lo,
                        double y_hi, int window) {
  const auto& c = geo.table.c;
  const double a = geo.a;
  int lower = e.trail_start;
  if (window > 0) lower = std::max(lower, n - window);
  int t = e.tag;
  double u = y_lo;
  double v = y_hi;
  double d = y_hi - y_lo;  // v - u, carried separately as d * 2^scale
  int scale = 0;
  for (int i = n - 1; i >= lower; --i) {
    const TrailStep& s = e.trail[static_cast<std::size_t>(i - e.trail_start)];
    if (s.tag < 0) {
      double pu;
      double pv;
      double pd;
      if (t == 0) {
        // w = -a x^2
        pu = std::sqrt(std::max(0.0, -u / a));
        pv = std::sqrt(std::max(0.0, -v / a));
        const double sum = pu + pv;
        pd = sum > 0.0 ? -d / (a * sum) : 0.0;
      } else {
        if (t > 0) {
          u += c[static_cast<std::size_t>(t)];
          v += c[static_cast<std::size_t>(t)];
        }
        // w = 1 - a x^2
        pu = std::sqrt(std::max(0.0, (1.0 - u) / a));
        pv = std::sqrt(std::max(0.0, (1.0 - v) / a));
        const double sum = pu + pv;
        pd = sum > 0.0 ? -d / (a * sum) : 0.0;
      }
      const double sg = s.sign;
      u = sg * pu;
      v = sg * pv;
      d = sg * pd;
      t = -1;
    } else {
      const int r = s.tag;
      const double cr = c[static_cast<std::size_t>(r)];
      double eu = u;
      double ev = v;
      if (t != r + 1) {
        const double shift = (t < 0 ? 0.0 : c[static_cast<std::size_t>(t)]) - c[static_cast<std::size_t>(r + 1)];
        eu += shift;
        ev += shift;
      }
      auto inv = [&](double ep) {
        const double disc = std::max(0.0, cr * cr - ep / a);
        return (-ep / a) / (cr + sgn(cr) * std::sqrt(disc));
      };
      const double pu = inv(eu);
      const double pv = inv(ev);
      // e' = -a e (2 c + e): difference quotient -a (2 c + e_u + e_v)
      d = -d / (a * (2.0 * cr + pu + pv));
      u = pu;
      v = pv;
      t = r;
    }
    if (d != 0.0 && std::abs(d) < 0x1p-500) {
      d = std::ldexp(d, 500);
      scale -= 500;
    }
  }
  return d == 0.0 ? kNegInf : std::log(std::abs(d)) + scale * std::numbers::ln2;
}

namespace {

struct Weighted {
  std::vector<double> weights;
  std::vector<double> base;  // base coordinate at each piece boundary (NaN when unknown)
};

Weighted weigh_pieces(const PartitionGeometry& geo, const LabeledInterval& e, int n,
                      const std::vector<PieceSpec>& pieces, int window, bool want_base) {
  const std::size_t k = pieces.size();
  Weighted out;
  out.weights.resize(k);
  out.base.assign(k + 1, std::nan(""));
  if (want_base) {
    for (std::size_t i = 0; i <= k; ++i) {
      const BackwardResult r = pull_back(geo, e, n, i < k ? pieces[i].lo : pieces.back().hi, window);
      if (r.reached_base) out.base[i] = r.base;
    }
  }
  std::vector<double> lw(k);
  double top = kNegInf;
  for (std::size_t i = 0; i < k; ++i) {
    lw[i] = log_pull_back_length(geo, e, n, pieces[i].lo, pieces[i].hi, window);
    if (std::isnan(lw[i])) lw[i] = kNegInf;
    top = std::max(top, lw[i]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    out.weights[i] = std::isfinite(top) ? std::exp(lw[i] - top) : 0.0;
    total += out.weights[i];
  }
  if (total > 0.0) {
    for (double& w : out.weights) w /= total;
  } else {
    const double span = pieces.back().hi - pieces.front().lo;
    for (std::size_t i = 0; i < k; ++i) out.weights[i] = (pieces[i].hi - pieces[i].lo) / span;
  }
  return out;
}

}  // namespace

std::vector<double> piece_weights(const PartitionGeometry& geo, const LabeledInterval& e, int n,
                                  const std::vector<PieceSpec>& pieces, int window) {
  if (pieces.empty()) return {};
  return weigh_pieces(geo, e, n, pieces, window, false).weights;
}

std::vector<PieceSpec> subdivide(const PartitionGeometry& g, double lo, double hi,
                                 SubdivisionFlags* flags, bool coarse) {
  const double d = g.delta;
  if (!(lo < d && hi > -d)) return {};
  const auto& P = g.positive;
  // positive intervals meeting [a, b]: indices [first, last)
  auto meeting = [&](double a, double b) {
    const auto first = std::upper_bound(P.begin(), P.end(), a,
                                        [](double x, const GridInterval& I) { return x < I.hi; });
    const auto last = std::lower_bound(P.begin(), P.end(), b,
                                       [](const GridInterval& I, double x) { return I.lo < x; });
    return std::pair{static_cast<std::size_t>(first - P.begin()), static_cast<std::size_t>(last - P.begin())};
  };
  const auto [pf, pl] = meeting(lo, hi);
  const auto [nf, nl] = meeting(-hi, -lo);
  auto full_in = [](const GridInterval& I, double a, double b) { return a <= I.lo && I.hi <= b; };
  int full = 0;
  for (std::size_t i = pf; i < pl; ++i) full += full_in(P[i], lo, hi) ? 1 : 0;
  for (std::size_t i = nf; i < nl; ++i) full += full_in(P[i], -hi, -lo) ? 1 : 0;
  const bool center_hit = lo < g.center && hi > -g.center;
  const bool stop_p = lo <= g.cover_lo() && hi >= g.cover_hi();
  const bool stop_m = lo <= -g.cover_hi() && hi >= -g.cover_lo();

  if (full < 2 && !center_hit && !stop_p && !stop_m) {
    if (pf >= pl && nf >= nl) return {};
    PieceSpec u;
    u.lo = lo;
    u.hi = hi;
    u.kind = PieceKind::unsplit;
    u.p = std::numeric_limits<int>::max();
    for (std::size_t i = pf; i < pl; ++i) {
      if (P[i].p < u.p) {
        u.p = P[i].p;
        u.j = P[i].j;
      }
    }
    for (std::size_t i = nf; i < nl; ++i) {
      if (P[i].p < u.p) {
        u.p = P[i].p;
        u.j = -P[i].j;
      }
    }
    u.full_count = full;
    return {u};
  }

  std::vector<Seg> neg;
  std::vector<Seg> pos;
  if (coarse) {
    if (nf < nl) neg.push_back({std::max(lo, -P[nl - 1].hi), std::min(hi, -P[nf].lo), 0, 0, true});
    if (pf < pl) pos.push_back({std::max(lo, P[pf].lo), std::min(hi, P[pl - 1].hi), 0, 0, true});
  } else {
    for (std::size_t i = nl; i-- > nf;) {
      const auto& I = P[i];
      neg.push_back({std::max(lo, -I.hi), std::min(hi, -I.lo), I.p, -I.j, full_in(I, -hi, -lo)});
    }
    for (std::size_t i = pf; i < pl; ++i) {
      const auto& I = P[i];
      pos.push_back({std::max(lo, I.lo), std::min(hi, I.hi), I.p, I.j, full_in(I, lo, hi)});
    }
  }
  OuterSide left;
  OuterSide right;
  if (lo < -d) left = outer_side(g, lo, std::min(hi, -d), stop_m, -1);
  if (hi > d) right = outer_side(g, std::max(lo, d), hi, stop_p, 1);
  std::vector<PieceSpec> neg_pieces;
  std::vector<PieceSpec> pos_pieces;
  side_pieces(neg, neg_pieces, coarse ? nullptr : flags);
  side_pieces(pos, pos_pieces, coarse ? nullptr : flags);
  if (coarse) {
    for (auto& ps : neg_pieces) ps.kind = PieceKind::run;
    for (auto& ps : pos_pieces) ps.kind = PieceKind::run;
  }
  // a short outer fragment joins the adjacent inner piece (its only neighbor); the
  // neighbor never contains Lambda^±, so every such glue is flagged
  auto glue = [&](OuterSide& os, std::vector<PieceSpec>& inner, bool at_front) {
    if (!os.pending) return;
    if (inner.empty()) {
      os.fragment.flagged = true;
      if (flags) ++flags->orphans;
      if (at_front) {
        os.pieces.push_back(os.fragment);
      } else {
        os.pieces.insert(os.pieces.begin(), os.fragment);
      }
      return;
    }
    PieceSpec& nb = at_front ? inner.front() : inner.back();
    nb.lo = std::min(nb.lo, os.fragment.lo);
    nb.hi = std::max(nb.hi, os.fragment.hi);
    nb.flagged = true;
    if (flags) ++flags->glued;
  };
  glue(left, neg_pieces, true);
  glue(right, pos_pieces, false);

  std::vector<PieceSpec> out;
  out.insert(out.end(), left.pieces.begin(), left.pieces.end());
  out.insert(out.end(), neg_pieces.begin(), neg_pieces.end());
  if (center_hit) {
    PieceSpec cp;
    cp.lo = std::max(lo, -g.center);
    cp.hi = std::min(hi, g.center);
    cp.kind = PieceKind::center;
    out.push_back(cp);
  }
  out.insert(out.end(), pos_pieces.begin(), pos_pieces.end());
  out.insert(out.end(), right.pieces.begin(), right.pieces.end());
  return out;
}

// ---------------------------------------------------------------------------

PartitionEngine::PartitionEngine(const MapParams& params, PartitionOptions opts)
    : geo_(make_geometry(params, opts)), opts_(opts) {
  stage_ = initial_stage(geo_);
  start_mass_ = 1.0;
}

PartitionEngine::PartitionEngine(PartitionGeometry geo, PartitionOptions opts,
                                 LabeledInterval start, int n0)
    : geo_(std::move(geo)), opts_(opts), n_(n0) {
  start_mass_ = start.mass;
  stage_.n = n0;
  stage_.elements.push_back(std::move(start));
}

namespace {

struct ElementOutput {
  std::vector<LabeledInterval> children;
  std::vector<StoppingRecord> stops;
  std::vector<DroppedPiece> dropped;
  SubdivisionFlags flags;
  bool subdivided = false;
  std::size_t exactly_one_violations = 0;
};

double log_min_abs(double lo, double hi) {
  if (lo > 0.0) return std::log(lo);
  if (hi < 0.0) return std::log(-hi);
  return kNegInf;
}

void refine_element(const PartitionGeometry& geo, LabeledInterval e, int n, int window,
                    ElementOutput& out) {
  if (e.tag >= 0) {
    const double cr = geo.table.c[static_cast<std::size_t>(e.tag)];
    e.lo += cr;
    e.hi += cr;
    e.tag = -1;
  }
  std::vector<PieceSpec> pieces = subdivide(geo, e.lo, e.hi, &out.flags);
  if (pieces.empty()) {
    out.children.push_back(std::move(e));
    return;
  }
  if (pieces.size() == 1 && pieces.front().kind == PieceKind::unsplit) {
    const PieceSpec& u = pieces.front();
    e.bound_until = n + u.p;
    e.history.push_back({n, narrow16(u.p), narrow16(u.j), log_min_abs(e.lo, e.hi), ReturnKind::unsplit});
    if (u.full_count != 1) ++out.exactly_one_violations;
    out.children.push_back(std::move(e));
    return;
  }
  out.subdivided = true;
  const Weighted wt = weigh_pieces(geo, e, n, pieces, window, true);
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const PieceSpec& ps = pieces[i];
    const double mass = e.mass * wt.weights[i];
    double blo = wt.base[i];
    double bhi = wt.base[i + 1];
    if (blo > bhi) std::swap(blo, bhi);
    const double log_d = log_min_abs(ps.lo, ps.hi);
    if (ps.kind == PieceKind::stop) {
      StoppingRecord rec;
      rec.rank = 1;
      rec.S = n;
      rec.sign = ps.stop_sign;
      rec.mass = mass;
      rec.base_lo = blo;
      rec.base_hi = bhi;
      rec.history = extended(e.history, {n, narrow16(geo.N), narrow16(ps.stop_sign), log_d, ReturnKind::stop});
      out.stops.push_back(std::move(rec));
      continue;
    }
    if (ps.kind == PieceKind::center) {
      DroppedPiece dp;
      dp.n = n;
      dp.mass = mass;
      dp.center = true;
      dp.history = extended(e.history, {n, 0, 0, log_d, ReturnKind::inner});
      out.dropped.push_back(std::move(dp));
      continue;
    }
    LabeledInterval child;
    child.mass = mass;
    child.base_lo = blo;
    child.base_hi = bhi;
    child.tag = -1;
    child.lo = ps.lo;
    child.hi = ps.hi;
    child.trail = e.trail;
    child.trail_start = e.trail_start;
    child.image_sum = e.image_sum;
    child.alive = e.alive;
    child.gap_order = e.gap_order;
    child.flagged = e.flagged || ps.flagged;
    if (ps.kind == PieceKind::outer) {
      child.bound_until = n;
      child.history = extended(e.history, {n, 0, 0, log_d, ReturnKind::outer});
    } else {
      child.bound_until = n + ps.p;
      child.history = extended(e.history, {n, narrow16(ps.p), narrow16(ps.j), log_d, ReturnKind::inner});
      if (ps.full_count != 1) ++out.exactly_one_violations;
    }
    out.children.push_back(std::move(child));
  }
}

}  // namespace

void PartitionEngine::advance() {
  const int n = n_ + 1;
  auto& elems = stage_.elements;
  const int window = opts_.backward_window;
  const double threshold = geo_.log_delta - geo_.epsilon * n;
  const std::size_t cap = opts_.max_elements;
  StageStats st;
  st.n = n;
  std::vector<LabeledInterval> next;
  double pruned = 0.0;
  // keeps the `keep` heaviest elements (ties by position), adding the rest to `pruned`
  auto keep_heaviest = [&](std::size_t keep) {
    if (next.size() <= keep) return;
    std::vector<std::size_t> idx(next.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto cut = static_cast<std::ptrdiff_t>(next.size() - keep);
    std::nth_element(idx.begin(), idx.begin() + cut, idx.end(), [&](std::size_t x, std::size_t y) {
      return next[x].mass < next[y].mass || (next[x].mass == next[y].mass && x < y);
    });
    std::vector<char> drop(next.size(), 0);
    for (std::ptrdiff_t i = 0; i < cut; ++i) drop[idx[static_cast<std::size_t>(i)]] = 1;
    std::vector<LabeledInterval> kept;
    kept.reserve(keep);
    for (std::size_t i = 0; i < next.size(); ++i) {
      if (drop[i]) {
        pruned += next[i].mass;
      } else {
        kept.push_back(std::move(next[i]));
      }
    }
    next = std::move(kept);
  };
  for (std::size_t b = 0; b < elems.size(); b += kAdvanceBatch) {
    const std::size_t count = std::min(kAdvanceBatch, elems.size() - b);
    std::vector<ElementOutput> outs(count);
    parallel_for(count, [&](std::size_t i) {
      LabeledInterval e = std::move(elems[b + i]);
      step_forward(geo_, e, n - 1);
      if (n >= geo_.N && n >= e.bound_until) {
        refine_element(geo_, std::move(e), n, window, outs[i]);
      } else {
        outs[i].children.push_back(std::move(e));
      }
    });
    for (auto& o : outs) {
      if (o.subdivided) ++st.subdivided;
      st.glued += o.flags.glued;
      st.orphans += o.flags.orphans;
      st.partial_pieces += o.flags.partial_pieces;
      st.exactly_one_violations += o.exactly_one_violations;
      for (auto& s : o.stops) {
        stopped_mass_ += s.mass;
        ++st.stops;
        stops_.push_back(std::move(s));
      }
      for (auto& d : o.dropped) {
        dropped_mass_ += d.mass;
        dropped_.push_back(std::move(d));
      }
      for (auto& e : o.children) {
        if (e.alive) {
          const double d = distance_to_zero(geo_, e);
          if ((d > 0.0 ? std::log(d) : kNegInf) < threshold) {
            e.alive = false;
            e.gap_order = n;
            deleted_mass_ += e.mass;
            gaps_.push_back({n, e.mass, e.base_lo, e.base_hi});
          }
        }
        if (e.mass < opts_.mass_floor * start_mass_) {
          pruned += e.mass;
          continue;
        }
        next.push_back(std::move(e));
      }
    }
    if (cap > 0 && next.size() > 2 * cap) keep_heaviest(cap);
  }
  if (cap > 0) keep_heaviest(cap);
  if (pruned > 0.0) {
    dropped_mass_ += pruned;
    dropped_.push_back({n, pruned, false, {}});
  }

  elems = std::move(next);
  stage_.n = n;
  n_ = n;
  st.elements = elems.size();
  for (const auto& e : elems) st.live_mass += e.mass;
  st.stopped_mass = stopped_mass_;
  st.dropped_mass = dropped_mass_;
  st.deleted_mass = deleted_mass_;
  stats_.push_back(st);
}

void PartitionEngine::run_to(int depth) {
  while (n_ < depth) advance();
}

// ---------------------------------------------------------------------------

std::vector<StoppingRecord> stopping_families(const std::vector<StoppingRecord>& rank1, int k_max,
                                              int max_time, double mass_floor) {
  std::vector<StoppingRecord> out;
  for (std::size_t i = 0; i < rank1.size(); ++i) {
    if (rank1[i].S > max_time) continue;
    StoppingRecord r = rank1[i];
    r.rank = 1;
    r.parent = -1;
    r.template_index = static_cast<int>(i);
    out.push_back(std::move(r));
  }
  std::size_t level_begin = 0;
  for (int k = 2; k <= k_max; ++k) {
    const std::size_t level_end = out.size();
    for (std::size_t pi = level_begin; pi < level_end; ++pi) {
      for (std::size_t ti = 0; ti < rank1.size(); ++ti) {
        const StoppingRecord& tpl = rank1[ti];
        const int S = out[pi].S + tpl.S;
        const double mass = out[pi].mass * tpl.mass;
        if (S > max_time || mass < mass_floor) continue;
        StoppingRecord r;
        r.rank = k;
        r.S = S;
        r.sign = tpl.sign;
        r.mass = mass;
        // base placement is affine inside the parent and only indicative
        const double span = out[pi].base_hi - out[pi].base_lo;
        r.base_lo = out[pi].base_lo;
        r.base_hi = out[pi].base_lo + span * tpl.mass;
        r.parent = static_cast<int>(pi);
        r.template_index = static_cast<int>(ti);
        out.push_back(std::move(r));
      }
    }
    level_begin = level_end;
  }
  return out;
}

bool survives(const PartitionGeometry& geo, const std::vector<ReturnRecord>& history, int clock,
              int horizon) {
  for (const auto& r : history) {
    if (r.n > horizon) break;
    if (r.kind == ReturnKind::initial) continue;
    if (r.log_d < geo.log_delta - geo.epsilon * (clock + r.n)) return false;
  }
  return true;
}

CarveResult carve(const PartitionEngine& engine) {
  const auto& geo = engine.geometry();
  const int D = engine.n();
  CarveResult out;
  out.depth = D;
  std::vector<double> lower(static_cast<std::size_t>(D) + 1, 1.0);
  std::vector<double> upper(static_cast<std::size_t>(D) + 1, 1.0);
  const auto& stops = engine.stops();
  const auto& live = engine.stage().elements;
  const auto& dropped = engine.dropped();
  const double total = engine.start_mass();
  for (int T = D; T >= 0; --T) {
    const int L = D - T;
    double lo = 0.0;
    double hi = 0.0;
    for (const auto& s : stops) {
      if (s.S <= L) {
        if (survives(geo, s.history, T, s.S)) {
          lo += s.mass * lower[static_cast<std::size_t>(T + s.S)];
          hi += s.mass * upper[static_cast<std::size_t>(T + s.S)];
        }
      } else if (survives(geo, s.history, T, L)) {
        lo += s.mass;
        hi += s.mass;
      }
    }
    for (const auto& e : live) {
      if (survives(geo, e.history, T, L)) {
        lo += e.mass;
        hi += e.mass;
      }
    }
    for (const auto& d : dropped) {
      if (!d.center) {
        hi += d.mass;  // pruned: fate unknown
        continue;
      }
      if (d.n > L) {
        if (survives(geo, d.history, T, L)) {
          lo += d.mass;
          hi += d.mass;
        }
        continue;
      }
      const bool surely_deleted = d.center && std::log(geo.center) < geo.log_delta - geo.epsilon * (T + d.n);
      if (!surely_deleted && survives(geo, d.history, T, d.n)) hi += d.mass;
    }
    lower[static_cast<std::size_t>(T)] = lo / total;
    upper[static_cast<std::size_t>(T)] = hi / total;
  }
  out.fraction_lower = lower[0];
  out.fraction_upper = upper[0];
  out.clock_fraction = lower;
  out.gaps = engine.gaps();
  out.element_fraction.reserve(live.size());
  for (const auto& e : live) out.element_fraction.push_back(e.alive ? 1.0 : 0.0);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_gap_history(const std::vector<ReturnRecord>& h, int horizon, InvariantReport& rep) {
  for (std::size_t i = 0; i < h.size(); ++i) {
    const auto& r = h[i];
    if (r.p <= 0) continue;
    if (r.kind != ReturnKind::initial && r.kind != ReturnKind::inner && r.kind != ReturnKind::unsplit) continue;
    ++rep.checked;
    double gap;
    if (i + 1 < h.size()) {
      gap = h[i + 1].n - r.n;
    } else {
      if (horizon - r.n < 2 * r.p) continue;  // next return may still come in time
      gap = horizon + 1 - r.n;
    }
    const double ratio = gap / (2.0 * r.p);
    if (ratio > rep.worst) rep.worst = ratio;
    if (ratio > 1.0) rep.pass = false;
  }
}

}  // namespace

InvariantReport verify_bound_gap(const PartitionEngine& engine) {
  InvariantReport rep;
  rep.name = "subl";
  rep.bound = 1.0;
  const int D = engine.n();
  for (const auto& e : engine.stage().elements) check_gap_history(e.history, D, rep);
  for (const auto& s : engine.stops()) check_gap_history(s.history, s.S, rep);
  for (const auto& d : engine.dropped()) check_gap_history(d.history, d.n, rep);
  std::ostringstream os;
  os << "max (n_{i+1}-n_i)/(2 p_i) = " << rep.worst << " over " << rep.checked << " returns";
  rep.detail = os.str();
  return rep;
}

InvariantReport verify_bounded_sums(const PartitionEngine& engine) {
  InvariantReport rep;
  rep.name = "bdd";
  const double bound = 10.0 / engine.geometry().delta;
  rep.bound = bound;
  for (const auto& e : engine.stage().elements) {
    ++rep.checked;
    const double r = e.image_sum / bound;
    rep.worst = std::max(rep.worst, r);
    if (r > 1.0) rep.pass = false;
  }
  std::ostringstream os;
  os << "max sum|f^i omega| / (10/delta) = " << rep.worst;
  rep.detail = os.str();
  return rep;
}

InvariantReport verify_distortion(const PartitionEngine& engine, std::size_t max_elements) {
  InvariantReport rep;
  rep.name = "izo";
  const auto& geo = engine.geometry();
  const int n = engine.n();
  const double log_c_delta = std::pow(geo.delta, -3.0);
  const double r = std::exp(-geo.epsilon * geo.epsilon * geo.lambda / 3.0);
  const double log_c_eps = 10.0 * r / (1.0 - r);
  rep.bound = log_c_delta;
  const auto& elems = engine.stage().elements;
  const std::size_t step = std::max<std::size_t>(1, elems.size() / std::max<std::size_t>(1, max_elements));
  for (std::size_t i = 0; i < elems.size(); i += step) {
    const auto& e = elems[i];
    if (n < e.bound_until || e.trail_start != 0) continue;
    double lmin = std::numeric_limits<double>::infinity();
    double lmax = -lmin;
    for (int k = 0; k <= 4; ++k) {
      const double y = e.lo + (e.hi - e.lo) * k / 4.0;
      const double L = pull_back(geo, e, n, y).log_df;
      lmin = std::min(lmin, L);
      lmax = std::max(lmax, L);
    }
    if (!std::isfinite(lmax - lmin)) continue;
    const double shift = e.tag >= 0 ? geo.table.c[static_cast<std::size_t>(e.tag)] : 0.0;
    const bool inside = std::abs(e.lo + shift) < geo.delta && std::abs(e.hi + shift) < geo.delta;
    const double bound = inside ? std::min(log_c_eps, log_c_delta) : log_c_delta;
    ++rep.checked;
    const double ratio = (lmax - lmin) / bound;
    rep.worst = std::max(rep.worst, ratio);
    if (ratio > 1.0) rep.pass = false;
  }
  std::ostringstream os;
  os << "max log distortion / log C = " << rep.worst << " (log C_delta = " << log_c_delta
     << ", log C_eps = " << log_c_eps << ")";
  rep.detail = os.str();
  return rep;
}

InvariantReport verify_mass_balance(const PartitionEngine& engine) {
  InvariantReport rep;
  rep.name = "mass_balance";
  rep.bound = 1e-10;
  double total = 0.0;
  for (const auto& e : engine.stage().elements) total += e.mass;
  for (const auto& s : engine.stops()) total += s.mass;
  for (const auto& d : engine.dropped()) total += d.mass;
  rep.checked = engine.stage().elements.size() + engine.stops().size() + engine.dropped().size();
  rep.worst = std::abs(total - engine.start_mass()) / engine.start_mass();
  rep.pass = rep.worst <= rep.bound;
  std::ostringstream os;
  os << "relative mass defect " << rep.worst;
  rep.detail = os.str();
  return rep;
}

InvariantReport verify_disjoint(const PartitionEngine& engine) {
  InvariantReport rep;
  rep.name = "disjoint";
  std::vector<std::pair<double, double>> iv;
  for (const auto& e : engine.stage().elements) {
    if (std::isfinite(e.base_lo) && std::isfinite(e.base_hi) && e.base_hi > e.base_lo) {
      iv.emplace_back(e.base_lo, e.base_hi);
    }
  }
  std::sort(iv.begin(), iv.end());
  std::size_t overlaps = 0;
  for (std::size_t i = 0; i + 1 < iv.size(); ++i) {
    const double tol = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(iv[i].second);
    if (iv[i].second > iv[i + 1].first + tol) ++overlaps;
  }
  rep.checked = iv.size();
  rep.worst = static_cast<double>(overlaps);
  rep.pass = overlaps == 0;
  std::ostringstream os;
  os << overlaps << " overlaps among " << iv.size() << " resolvable elements";
  rep.detail = os.str();
  return rep;
}

}  // namespace ldplab
