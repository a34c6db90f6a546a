#include "ldplab/lemmas.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "ldplab/parallel.hpp"
#include "ldplab/partition.hpp"

namespace ldplab {

namespace {

constexpr std::size_t kChunk = 256;
constexpr std::uint64_t kStreamBase = 16;
constexpr std::size_t kMinInstances = 10;

constexpr std::array kNames{"dist",     "exp",      "exp2",     "reclem1", "reclem2",
                            "holder_a", "holder_b", "holder_c", "bdd",     "subl"};

// Running extremes of one or two checked quantities, reduced in chunk order.
struct Tally {
  double worst = std::numeric_limits<double>::quiet_NaN();
  double worst2 = std::numeric_limits<double>::quiet_NaN();
  std::size_t checked = 0;
  bool pass = true;

  void add(double v, bool upper) {
    worst = std::isnan(worst) ? v : (upper ? std::max(worst, v) : std::min(worst, v));
  }
  void add2(double v, bool upper) {
    worst2 = std::isnan(worst2) ? v : (upper ? std::max(worst2, v) : std::min(worst2, v));
  }
  void merge(const Tally& o, bool upper, bool upper2) {
    if (!std::isnan(o.worst)) add(o.worst, upper);
    if (!std::isnan(o.worst2)) add2(o.worst2, upper2);
    checked += o.checked;
    pass = pass && o.pass;
  }
};

// Runs body(rng, tally) for samples split into fixed chunks and merges in chunk order.
template <class Body>
Tally sampled(std::size_t samples, std::uint64_t seed, LemmaId id, bool upper, bool upper2,
              Body&& body) {
  const std::size_t chunks = (samples + kChunk - 1) / kChunk;
  std::vector<Tally> per(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    auto rng = chunk_rng(seed, kStreamBase + static_cast<std::uint64_t>(id), c);
    const std::size_t count = std::min(kChunk, samples - c * kChunk);
    for (std::size_t s = 0; s < count; ++s) body(rng, per[c]);
  });
  Tally out;
  for (const auto& t : per) out.merge(t, upper, upper2);
  return out;
}

void require_instances(const Tally& t, LemmaId id) {
  if (t.checked < kMinInstances) {
    std::ostringstream os;
    os << to_string(id) << ": only " << t.checked << " sampled instances satisfy the hypothesis";
    throw Error(ErrorKind::insufficient_samples, os.str());
  }
}

struct Context {
  MapParams params;
  CriticalOrbitTable table;
};

Context make_context(const MapParams& params) {
  params.validate();
  Context ctx{params, critical_table(params)};
  ctx.params = resolve_cap_n(params, ctx.table);
  return ctx;
}

int time_or(int n, int fallback) { return n >= 0 ? n : fallback; }

LemmaReport dist(const Context& ctx, const LemmaOptions& opts) {
  const int n = time_or(opts.n, 10);
  if (n < 1) throw Error(ErrorKind::validation, "dist: n must be >= 1");
  if (n > ctx.table.depth) throw Error(ErrorKind::validation, "dist: n exceeds the table depth");
  const double D = ctx.table.D[static_cast<std::size_t>(n)];
  if (!(1.0 - D < 1.0)) {
    throw Error(ErrorKind::insufficient_samples, "dist: [1 - D_n, 1] is below double resolution");
  }
  const Tally t = sampled(opts.samples, opts.seed, LemmaId::dist, true, true,
                          [&](std::mt19937_64& rng, Tally& acc) {
                            const double x = 1.0 - D * uniform01(rng);
                            const double y = 1.0 - D * uniform01(rng);
                            if (x == y) return;
                            const double lr = log_derivative(ctx.params, x, n) -
                                              log_derivative(ctx.params, y, n);
                            const double ratio = std::exp(lr);
                            const double second = std::abs(ratio - 1.0) * D / std::abs(x - y);
                            acc.add(ratio, true);
                            acc.add2(second, true);
                            acc.pass = acc.pass && ratio <= 2.0 && second <= 1.0;
                            ++acc.checked;
                          });
  require_instances(t, LemmaId::dist);
  LemmaReport r;
  r.pass = t.pass;
  r.worst = t.worst;
  r.bound = 2.0;
  r.checked = t.checked;
  std::ostringstream os;
  os << "n=" << n << " D_n=" << D << " max Df^n(x)/Df^n(y) = " << t.worst
     << ", max |ratio-1| D_n/|x-y| = " << t.worst2 << " (bound 1)";
  r.detail = os.str();
  return r;
}

// Point whose n-th iterate is close to y, obtained by pulling y back along random branches;
// nullopt if y leaves the range of f on the way.
std::optional<double> preimage(const MapParams& p, double y, int n, std::mt19937_64& rng) {
  double x = y;
  for (int k = 0; k < n; ++k) {
    const double s = (1.0 - x) / p.a;
    if (s > 1.0) return std::nullopt;
    x = (rng() & 1u ? 1.0 : -1.0) * std::sqrt(s);
  }
  return x;
}

// Expansion outside (-r, r): |Df^n x| >= r e^{rate n}, and >= e^{rate n} if f^n x lands in (-r, r).
LemmaReport expansion(const Context& ctx, const LemmaOptions& opts, LemmaId id, double radius,
                      double rate, int n) {
  LemmaReport r;
  r.bound = 0.0;
  r.upper = false;
  std::ostringstream os;
  os << "n=" << n << " radius=" << radius << " rate=" << rate;
  if (n == 0) {
    r.vacuous = true;
    r.detail = os.str() + ": vacuous (no n >= 1)";
    return r;
  }
  const double log_r = std::log(radius);
  const Tally t = sampled(
      opts.samples, opts.seed, id, false, false, [&](std::mt19937_64& rng, Tally& acc) {
        const bool land = rng() & 1u;
        double x = 2.0 * uniform01(rng) - 1.0;
        if (land) {
          const auto pre = preimage(ctx.params, radius * (2.0 * uniform01(rng) - 1.0), n, rng);
          if (!pre) return;
          x = *pre;
        }
        const std::vector<double> orbit = iterate(ctx.params, x, n);
        for (int i = 0; i < n; ++i) {
          if (std::abs(orbit[static_cast<std::size_t>(i)]) < radius) return;
        }
        const double ld = log_derivative(ctx.params, x, n);
        double margin = ld - (log_r + rate * n);
        if (std::abs(orbit.back()) < radius) {
          const double m2 = ld - rate * n;
          acc.add2(m2, false);
          margin = std::min(margin, m2);
        }
        acc.add(margin, false);
        acc.pass = acc.pass && margin >= 0.0;
        ++acc.checked;
      });
  require_instances(t, id);
  r.pass = t.pass;
  r.worst = t.worst;
  r.checked = t.checked;
  os << ": min log-margin " << t.worst;
  if (!std::isnan(t.worst2)) os << ", min log-margin for landing orbits " << t.worst2;
  r.detail = os.str();
  return r;
}

std::pair<int, int> p_range(const Context& ctx, const LemmaOptions& opts, int lowest) {
  const int hi = ctx.table.depth;
  if (opts.p > 0) {
    if (opts.p <= lowest || opts.p > hi) throw Error(ErrorKind::validation, "p outside the admissible range");
    return {opts.p, opts.p};
  }
  if (lowest + 1 > hi) throw Error(ErrorKind::validation, "depth leaves no admissible p");
  return {lowest + 1, hi};
}

LemmaReport reclem1(const Context& ctx, const LemmaOptions& opts) {
  const auto [plo, phi] = p_range(ctx, opts, 10);
  const double lambda = ctx.params.lambda;
  const Tally t = sampled(
      opts.samples, opts.seed, LemmaId::reclem1, false, false,
      [&](std::mt19937_64& rng, Tally& acc) {
        const int p = plo + static_cast<int>(rng() % static_cast<std::uint64_t>(phi - plo + 1));
        const double lo = ctx.table.delta[static_cast<std::size_t>(p)];
        const double hi = ctx.table.delta[static_cast<std::size_t>(p - 1)];
        double x = lo + (hi - lo) * uniform01(rng);
        if (rng() & 1u) x = -x;
        const double ma = log_derivative_near_critical(ctx.table, x, p) - lambda * p / 3.0;
        const double mb = 2.0 / lambda * -std::log(std::abs(x)) - p;
        acc.add(ma, false);
        acc.add2(mb, false);
        acc.pass = acc.pass && ma >= 0.0 && mb >= 0.0;
        ++acc.checked;
      });
  require_instances(t, LemmaId::reclem1);
  LemmaReport r;
  r.pass = t.pass;
  r.worst = t.worst;
  r.upper = false;
  r.checked = t.checked;
  std::ostringstream os;
  os << "p in [" << plo << "," << phi << "]: min log|Df^p x| - lambda p/3 = " << t.worst
     << ", min (2/lambda) log(1/|x|) - p = " << t.worst2;
  r.detail = os.str();
  return r;
}

LemmaReport reclem2(const Context& ctx, const LemmaOptions& opts) {
  const int n = std::min(time_or(opts.n, ctx.table.depth), ctx.table.depth);
  LemmaReport r;
  r.upper = false;
  double worst = std::numeric_limits<double>::infinity();
  for (int j = 1; j <= n; ++j) {
    const double floor_j = -ctx.params.alpha * std::sqrt(static_cast<double>(j));
    for (int i = 0; i < j; ++i) {
      const double lhs = ctx.table.log_df[static_cast<std::size_t>(j)] -
                         ctx.table.log_df[static_cast<std::size_t>(i)];
      worst = std::min(worst, lhs - floor_j);
      ++r.checked;
    }
  }
  std::ostringstream os;
  os << "0 <= i < j <= " << n;
  if (r.checked == 0) {
    r.vacuous = true;
    r.detail = os.str() + ": vacuous";
    return r;
  }
  r.worst = worst;
  r.pass = worst >= 0.0;
  os << ": min log|Df^{j-i}(c_i)| + alpha sqrt(j) = " << worst;
  r.detail = os.str();
  return r;
}

std::vector<GridInterval> grid_for(const Context& ctx, const LemmaOptions& opts) {
  const auto [plo, phi] = p_range(ctx, opts, ctx.params.cap_n);
  const IpjGrid grid(ctx.table, ctx.params.cap_n, phi);
  std::vector<GridInterval> out;
  for (const auto& I : grid.positive()) {
    if (I.p >= plo) out.push_back(I);
  }
  return out;
}

LemmaReport holder_ab(const Context& ctx, const LemmaOptions& opts, bool part_a) {
  const double eps = ctx.params.epsilon;
  LemmaReport r;
  r.upper = false;
  double worst = std::numeric_limits<double>::infinity();
  int worst_p = 0;
  for (const auto& I : grid_for(ctx, opts)) {
    double margin;
    if (part_a) {
      const double len = std::abs(image_offset_near_critical(ctx.table, I.hi, I.p) -
                                  image_offset_near_critical(ctx.table, I.lo, I.p));
      margin = std::log(len) + 5.0 * eps * I.p;
    } else {
      margin = (1.0 + eps / 3.0) * std::log(I.lo) - std::log(I.length());
    }
    if (margin < worst) {
      worst = margin;
      worst_p = I.p;
    }
    r.pass = r.pass && margin >= 0.0;
    ++r.checked;
  }
  if (r.checked < kMinInstances) {
    throw Error(ErrorKind::insufficient_samples,
                std::string(part_a ? "holder_a" : "holder_b") + ": fewer than 10 grid intervals");
  }
  r.worst = worst;
  std::ostringstream os;
  os << (part_a ? "min log|f^p I_{p,j}| + 5 eps p = " : "min (1+eps/3) log d(0,I) - log|I| = ")
     << worst << " at p=" << worst_p << " over " << r.checked << " intervals (mirrors identical)";
  r.detail = os.str();
  return r;
}

LemmaReport holder_c(const Context& ctx, const LemmaOptions& opts) {
  const std::vector<GridInterval> grid = grid_for(ctx, opts);
  const double e2 = ctx.params.epsilon * ctx.params.epsilon;
  const Tally t = sampled(
      opts.samples, opts.seed, LemmaId::holder_c, true, true, [&](std::mt19937_64& rng, Tally& acc) {
        const GridInterval& I = grid[rng() % grid.size()];
        const double x = I.lo + I.length() * uniform01(rng);
        const double y = I.lo + I.length() * uniform01(rng);
        const double gap = std::abs(image_offset_near_critical(ctx.table, x, I.p) -
                                    image_offset_near_critical(ctx.table, y, I.p));
        if (!(gap > 0.0)) return;
        const double lhs = std::abs(log_derivative_near_critical(ctx.table, x, I.p) -
                                    log_derivative_near_critical(ctx.table, y, I.p));
        const double ratio = lhs / std::exp(e2 * std::log(gap));
        acc.add(ratio, true);
        acc.pass = acc.pass && ratio <= 1.0;
        ++acc.checked;
      });
  require_instances(t, LemmaId::holder_c);
  LemmaReport r;
  r.pass = t.pass;
  r.worst = t.worst;
  r.bound = 1.0;
  r.checked = t.checked;
  std::ostringstream os;
  os << "max log(Df^p x / Df^p y) / |f^p x - f^p y|^{eps^2} = " << t.worst;
  r.detail = os.str();
  return r;
}

LemmaReport from_invariant(const InvariantReport& inv) {
  LemmaReport r;
  r.pass = inv.pass;
  r.worst = inv.worst;
  r.bound = 1.0;
  r.checked = inv.checked;
  r.detail = inv.detail;
  return r;
}

std::pair<LemmaReport, LemmaReport> partition_lemmas(const Context& ctx, const LemmaOptions& opts) {
  PartitionOptions po;
  po.depth = opts.partition_depth > 0 ? opts.partition_depth : ctx.params.depth;
  PartitionEngine engine(ctx.params, po);
  engine.run_to(po.depth);
  LemmaReport bdd = from_invariant(verify_bounded_sums(engine));
  LemmaReport subl = from_invariant(verify_bound_gap(engine));
  if (bdd.checked < kMinInstances) {
    throw Error(ErrorKind::insufficient_samples, "bdd: fewer than 10 partition elements");
  }
  if (subl.checked < kMinInstances) {
    throw Error(ErrorKind::insufficient_samples, "subl: fewer than 10 recorded returns");
  }
  return {bdd, subl};
}

LemmaReport run(LemmaId id, const Context& ctx, const LemmaOptions& opts) {
  LemmaReport r;
  switch (id) {
    case LemmaId::dist:
      r = dist(ctx, opts);
      break;
    case LemmaId::exp:
      r = expansion(ctx, opts, id, ctx.table.delta_hat(), ctx.params.lambda,
                    time_or(opts.n, ctx.table.depth));
      break;
    case LemmaId::exp2:
      r = expansion(ctx, opts, id, ctx.table.delta[static_cast<std::size_t>(ctx.params.cap_n)],
                    ctx.params.lambda / 3.0, time_or(opts.n, ctx.table.depth));
      break;
    case LemmaId::reclem1:
      r = reclem1(ctx, opts);
      break;
    case LemmaId::reclem2:
      r = reclem2(ctx, opts);
      break;
    case LemmaId::holder_a:
      r = holder_ab(ctx, opts, true);
      break;
    case LemmaId::holder_b:
      r = holder_ab(ctx, opts, false);
      break;
    case LemmaId::holder_c:
      r = holder_c(ctx, opts);
      break;
    case LemmaId::bdd:
      r = partition_lemmas(ctx, opts).first;
      break;
    case LemmaId::subl:
      r = partition_lemmas(ctx, opts).second;
      break;
  }
  r.lemma = std::string(to_string(id));
  return r;
}

}  // namespace

std::string_view to_string(LemmaId id) { return kNames[static_cast<std::size_t>(id)]; }

LemmaId lemma_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (name == kNames[i]) return static_cast<LemmaId>(i);
  }
  throw Error(ErrorKind::validation, "unknown lemma '" + std::string(name) + "'");
}

std::vector<LemmaId> all_lemmas() {
  std::vector<LemmaId> out;
  for (std::size_t i = 0; i < kNames.size(); ++i) out.push_back(static_cast<LemmaId>(i));
  return out;
}

LemmaReport verify_core_lemma(LemmaId id, const MapParams& params, const LemmaOptions& opts) {
  if (opts.samples == 0) throw Error(ErrorKind::validation, "sample_count must be >= 1");
  return run(id, make_context(params), opts);
}

std::vector<LemmaReport> verify_all_lemmas(const MapParams& params, const LemmaOptions& opts) {
  if (opts.samples == 0) throw Error(ErrorKind::validation, "sample_count must be >= 1");
  const Context ctx = make_context(params);
  std::vector<LemmaReport> out;
  auto guarded = [&](LemmaId id, auto&& fn) {
    try {
      out.push_back(fn());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::insufficient_samples) throw;
      LemmaReport r;
      r.lemma = std::string(to_string(id));
      r.pass = false;
      r.detail = e.what();
      out.push_back(r);
    }
  };
  for (LemmaId id : all_lemmas()) {
    if (id == LemmaId::bdd || id == LemmaId::subl) continue;
    guarded(id, [&] { return run(id, ctx, opts); });
  }
  std::optional<std::pair<LemmaReport, LemmaReport>> part;
  guarded(LemmaId::bdd, [&] {
    part = partition_lemmas(ctx, opts);
    part->first.lemma = "bdd";
    return part->first;
  });
  if (part) {
    part->second.lemma = "subl";
    out.push_back(part->second);
  } else {
    guarded(LemmaId::subl, [&] { return run(LemmaId::subl, ctx, opts); });
  }
  return out;
}

}  // namespace ldplab
