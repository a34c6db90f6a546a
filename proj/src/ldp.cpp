#include "ldplab/ldp.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ldplab/error.hpp"
#include "ldplab/parallel.hpp"

namespace ldplab {

namespace {

constexpr std::uint64_t kStreamSample = 0;
constexpr std::uint64_t kStreamDeviation = 1;
constexpr std::uint64_t kStreamCgf = 2;
constexpr std::size_t kChunk = 4096;  // starts per chunk in the deviation/CGF drivers

constexpr int kShadowLength = 256;

// Uniform start on [-1, 1] followed by burn_in iterates.
ShadowedOrbit mu_start(const std::vector<double>& critical, double a, std::mt19937_64& rng, int burn_in) {
  ShadowedOrbit orb(critical, a, -1.0 + 2.0 * uniform01(rng));
  for (int i = 0; i < burn_in; ++i) orb.step();
  return orb;
}

void check_sampling(const MapParams& params, int burn_in) {
  params.validate();
  if (burn_in < 0) throw Error(ErrorKind::validation, "burn_in must be >= 0");
}

std::vector<int> normalized_grid(std::vector<int> n_grid) {
  if (n_grid.empty()) throw Error(ErrorKind::validation, "n_grid must not be empty");
  std::sort(n_grid.begin(), n_grid.end());
  n_grid.erase(std::unique(n_grid.begin(), n_grid.end()), n_grid.end());
  if (n_grid.front() < 1) throw Error(ErrorKind::validation, "n_grid entries must be >= 1");
  return n_grid;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double intercept_se = 0.0;
};

// Weighted least squares y = intercept + slope x with weights 1/var. Standard errors take
// the larger of the model-based value and the residual-based value.
LineFit weighted_line(const std::vector<double>& x, const std::vector<double>& y,
                      const std::vector<double>& var) {
  LineFit f;
  const std::size_t n = x.size();
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / var[i];
    sw += w;
    sx += w * x[i];
    sy += w * y[i];
  }
  const double xm = sx / sw, ym = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / var[i];
    sxx += w * (x[i] - xm) * (x[i] - xm);
    sxy += w * (x[i] - xm) * (y[i] - ym);
  }
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = ym - f.slope * xm;
  double slope_var = sxx > 0.0 ? 1.0 / sxx : 0.0;
  double icpt_var = 1.0 / sw + xm * xm * slope_var;
  if (n > 2) {
    double chi2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      chi2 += r * r / var[i];
    }
    const double scale = std::max(1.0, chi2 / static_cast<double>(n - 2));
    slope_var *= scale;
    icpt_var *= scale;
  }
  f.slope_se = std::sqrt(slope_var);
  f.intercept_se = std::sqrt(icpt_var);
  return f;
}

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> v(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
  return v;
}

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (xs.empty() || x < xs.front() - 1e-12 || x > xs.back() + 1e-12) return std::nan("");
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  if (it == xs.begin()) return ys.front();
  if (it == xs.end()) return ys.back();
  const auto i = static_cast<std::size_t>(it - xs.begin());
  const double w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
  return ys[i - 1] + w * (ys[i] - ys[i - 1]);
}

}  // namespace

std::vector<double> sample_mu(const MapParams& params, std::size_t count, int burn_in,
                              std::uint64_t seed) {
  check_sampling(params, burn_in);
  const auto critical = critical_orbit(params.a, kShadowLength);
  std::vector<double> out(count);
  const std::size_t starts = (count + kOrbitBlock - 1) / kOrbitBlock;
  parallel_for(starts, [&](std::size_t s) {
    auto rng = chunk_rng(seed, kStreamSample, s);
    auto orb = mu_start(critical, params.a, rng, burn_in);
    const std::size_t end = std::min(count, (s + 1) * kOrbitBlock);
    for (std::size_t i = s * kOrbitBlock; i < end; ++i) {
      out[i] = orb.x();
      orb.step();
    }
  });
  return out;
}

BirkhoffEstimate birkhoff_mean(const MapParams& params, const Observable& phi, std::size_t count,
                               int burn_in, std::uint64_t seed) {
  check_sampling(params, burn_in);
  const auto critical = critical_orbit(params.a, kShadowLength);
  BirkhoffEstimate est;
  est.points = count;
  if (count == 0) return est;
  const std::size_t starts = (count + kOrbitBlock - 1) / kOrbitBlock;
  std::vector<double> sums(starts);
  std::vector<std::size_t> lens(starts);
  parallel_for(starts, [&](std::size_t s) {
    auto rng = chunk_rng(seed, kStreamSample, s);
    auto orb = mu_start(critical, params.a, rng, burn_in);
    const std::size_t len = std::min(count, (s + 1) * kOrbitBlock) - s * kOrbitBlock;
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      acc += phi(orb.x());
      orb.step();
    }
    sums[s] = acc;
    lens[s] = len;
  });
  const double total = std::accumulate(sums.begin(), sums.end(), 0.0);
  est.mean = total / static_cast<double>(count);
  if (starts > 1) {
    double ss = 0.0;
    for (std::size_t s = 0; s < starts; ++s) {
      const double d = sums[s] / static_cast<double>(lens[s]) - est.mean;
      ss += d * d;
    }
    est.stderr_ = std::sqrt(ss / static_cast<double>(starts - 1) / static_cast<double>(starts));
  }
  return est;
}

RateSeries deviation_rate(const MapParams& params, const std::vector<Threshold>& thresholds,
                          std::vector<int> n_grid, std::size_t samples, std::uint64_t seed,
                          int burn_in) {
  check_sampling(params, burn_in);
  const auto critical = critical_orbit(params.a, kShadowLength);
  if (thresholds.empty()) throw Error(ErrorKind::validation, "deviation_rate: need >= 1 threshold");
  if (samples == 0) throw Error(ErrorKind::validation, "deviation_rate: samples must be >= 1");
  n_grid = normalized_grid(std::move(n_grid));
  const std::size_t cells = n_grid.size();
  const std::size_t d = thresholds.size();
  const int n_max = n_grid.back();

  const std::size_t chunks = (samples + kChunk - 1) / kChunk;
  std::vector<std::vector<std::size_t>> chunk_hits(chunks, std::vector<std::size_t>(cells, 0));
  parallel_for(chunks, [&](std::size_t c) {
    auto rng = chunk_rng(seed, kStreamDeviation, c);
    const std::size_t end = std::min(samples, (c + 1) * kChunk);
    std::vector<double> sums(d);
    for (std::size_t s = c * kChunk; s < end; ++s) {
      auto orb = mu_start(critical, params.a, rng, burn_in);
      std::fill(sums.begin(), sums.end(), 0.0);
      std::size_t cell = 0;
      for (int n = 1; n <= n_max; ++n) {
        for (std::size_t j = 0; j < d; ++j) sums[j] += thresholds[j].phi(orb.x());
        orb.step();
        if (n == n_grid[cell]) {
          bool hit = true;
          for (std::size_t j = 0; j < d && hit; ++j) hit = sums[j] / n >= thresholds[j].b;
          if (hit) ++chunk_hits[c][cell];
          ++cell;
        }
      }
    }
  });

  RateSeries rs;
  for (const auto& t : thresholds) {
    rs.ids.push_back(t.phi.id);
    rs.thresholds.push_back(t.b);
  }
  rs.n_grid = n_grid;
  rs.sample_size = samples;
  rs.seed = seed;
  rs.hits.assign(cells, 0);
  for (const auto& ch : chunk_hits) {
    for (std::size_t i = 0; i < cells; ++i) rs.hits[i] += ch[i];
  }
  const double N = static_cast<double>(samples);
  std::vector<double> fx, fy, fv;
  for (std::size_t i = 0; i < cells; ++i) {
    const double n = n_grid[i];
    const auto k = static_cast<double>(rs.hits[i]);
    if (rs.hits[i] == 0) {
      const double upper = -std::expm1(std::log(0.05) / N);  // 1 - 0.05^{1/N}
      rs.values.push_back(std::log(upper) / n);
      rs.ci_lo.push_back(-std::numeric_limits<double>::infinity());
      rs.ci_hi.push_back(std::log(upper) / n);
      rs.censored.push_back(true);
      continue;
    }
    const double p = k / N;
    const double lo = boost::math::ibeta_inv(k, N - k + 1.0, 0.025);
    const double hi = rs.hits[i] == samples ? 1.0 : boost::math::ibeta_inv(k + 1.0, N - k, 0.975);
    rs.values.push_back(std::log(p) / n);
    rs.ci_lo.push_back(std::log(lo) / n);
    rs.ci_hi.push_back(std::log(hi) / n);
    rs.censored.push_back(false);
    fx.push_back(n);
    fy.push_back(std::log(p));
    fv.push_back(std::max((1.0 - p) / (N * p), 1.0 / (N * N)));
  }
  if (fx.empty()) {
    throw Error(ErrorKind::all_censored,
                "deviation_rate: no hits at any n (thresholds too extreme for the sample budget)");
  }
  if (fx.size() == 1) {
    rs.fit = {fy[0] / fx[0], 0.0, std::sqrt(fv[0]) / fx[0]};
  } else {
    const auto lf = weighted_line(fx, fy, fv);
    rs.fit = {lf.slope, lf.intercept, lf.slope_se};
  }
  return rs;
}

CgfCurve pressure_cgf(const MapParams& params, const Observable& phi, std::vector<double> t_grid,
                      std::vector<int> n_grid, std::size_t samples, std::uint64_t seed,
                      int burn_in) {
  check_sampling(params, burn_in);
  const auto critical = critical_orbit(params.a, kShadowLength);
  if (samples < 2) throw Error(ErrorKind::validation, "pressure_cgf: samples must be >= 2");
  if (t_grid.empty()) throw Error(ErrorKind::validation, "pressure_cgf: empty t grid");
  n_grid = normalized_grid(std::move(n_grid));
  std::sort(t_grid.begin(), t_grid.end());
  const std::size_t cells = n_grid.size();
  const int n_max = n_grid.back();

  // sums[i * samples + s] = S_{n_i} phi along start s.
  std::vector<double> sums(cells * samples);
  const std::size_t chunks = (samples + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    auto rng = chunk_rng(seed, kStreamCgf, c);
    const std::size_t end = std::min(samples, (c + 1) * kChunk);
    for (std::size_t s = c * kChunk; s < end; ++s) {
      auto orb = mu_start(critical, params.a, rng, burn_in);
      double acc = 0.0;
      std::size_t cell = 0;
      for (int n = 1; n <= n_max; ++n) {
        acc += phi(orb.x());
        orb.step();
        if (n == n_grid[cell]) sums[cell++ * samples + s] = acc;
      }
    }
  });

  CgfCurve cv;
  cv.t_grid = t_grid;
  cv.n_grid = n_grid;
  const double N = static_cast<double>(samples);
  {
    double acc = 0.0;
    for (std::size_t s = 0; s < samples; ++s) acc += sums[(cells - 1) * samples + s];
    cv.sample_mean = acc / N / n_grid.back();
  }
  std::vector<std::vector<double>> var(cells, std::vector<double>(t_grid.size()));
  cv.per_n.assign(cells, std::vector<double>(t_grid.size()));
  cv.ess.assign(t_grid.size(), N);
  for (std::size_t i = 0; i < cells; ++i) {
    const double* S = sums.data() + i * samples;
    for (std::size_t j = 0; j < t_grid.size(); ++j) {
      const double t = t_grid[j];
      if (t == 0.0) {
        cv.per_n[i][j] = 0.0;
        var[i][j] = 1.0 / (N * N);
        continue;
      }
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < samples; ++s) mx = std::max(mx, t * S[s]);
      double w1 = 0.0, w2 = 0.0;
      for (std::size_t s = 0; s < samples; ++s) {
        const double w = std::exp(t * S[s] - mx);
        w1 += w;
        w2 += w * w;
      }
      const double mean = w1 / N;
      const double sd2 = std::max(0.0, w2 / N - mean * mean);
      const double n = n_grid[i];
      cv.per_n[i][j] = (mx + std::log(mean)) / n;
      var[i][j] = std::max(sd2 / (mean * mean) / N / (n * n), 1.0 / (N * N));
      if (i + 1 == cells) cv.ess[j] = w1 * w1 / w2;
    }
  }
  cv.p.resize(t_grid.size());
  cv.stderr_.resize(t_grid.size());
  for (std::size_t j = 0; j < t_grid.size(); ++j) {
    if (t_grid[j] == 0.0) {
      cv.p[j] = 0.0;
      cv.stderr_[j] = 0.0;
      continue;
    }
    if (cells == 1) {
      cv.p[j] = cv.per_n[0][j];
      cv.stderr_[j] = std::sqrt(var[0][j]);
    } else {
      std::vector<double> x, y, v;
      for (std::size_t i = 0; i < cells; ++i) {
        x.push_back(1.0 / n_grid[i]);
        y.push_back(cv.per_n[i][j]);
        v.push_back(var[i][j]);
      }
      const auto lf = weighted_line(x, y, v);
      cv.p[j] = lf.intercept;
      cv.stderr_[j] = lf.intercept_se;
    }
    if (cv.ess[j] < 100.0) {
      std::ostringstream msg;
      msg << "effective sample size " << cv.ess[j] << " < 100 at t=" << t_grid[j];
      cv.warnings.push_back(msg.str());
    }
  }
  for (std::size_t j = 1; j + 1 < t_grid.size(); ++j) {
    const double left = (cv.p[j] - cv.p[j - 1]) / (t_grid[j] - t_grid[j - 1]);
    const double right = (cv.p[j + 1] - cv.p[j]) / (t_grid[j + 1] - t_grid[j]);
    if (right < left - 1e-9) cv.convex = false;
  }
  return cv;
}

std::pair<std::size_t, std::size_t> reliable_range(const CgfCurve& curve, double min_ess) {
  const auto& t = curve.t_grid;
  if (t.empty()) return {0, 0};
  std::size_t mid = 0;
  for (std::size_t j = 1; j < t.size(); ++j) {
    if (std::abs(t[j]) < std::abs(t[mid])) mid = j;
  }
  std::size_t first = mid, last = mid + 1;
  while (first > 0 && curve.ess[first - 1] >= min_ess) --first;
  while (last < t.size() && curve.ess[last] >= min_ess) ++last;
  return {first, last};
}

ConvexRepair convex_repair(const std::vector<double>& t, const std::vector<double>& p) {
  const std::size_t n = t.size();
  ConvexRepair out{p, 0.0};
  if (n < 3) return out;
  // Pool-adjacent-violators on the secant slopes, weighted by interval length.
  struct Block {
    double slope, weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double w = t[i + 1] - t[i];
    blocks.push_back({(p[i + 1] - p[i]) / w, w, 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].slope > blocks.back().slope) {
      const Block b = blocks.back();
      blocks.pop_back();
      Block& a = blocks.back();
      a.slope = (a.slope * a.weight + b.slope * b.weight) / (a.weight + b.weight);
      a.weight += b.weight;
      a.count += b.count;
    }
  }
  std::vector<double> slopes;
  for (const auto& b : blocks) slopes.insert(slopes.end(), b.count, b.slope);
  std::size_t anchor = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs(t[i]) < std::abs(t[anchor])) anchor = i;
  }
  out.values[anchor] = p[anchor];
  for (std::size_t i = anchor; i + 1 < n; ++i) {
    out.values[i + 1] = out.values[i] + slopes[i] * (t[i + 1] - t[i]);
  }
  for (std::size_t i = anchor; i > 0; --i) {
    out.values[i - 1] = out.values[i] - slopes[i - 1] * (t[i] - t[i - 1]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.magnitude = std::max(out.magnitude, std::abs(out.values[i] - p[i]));
  }
  return out;
}

LegendreResult legendre_transform(const std::vector<double>& t_grid, const std::vector<double>& p,
                                  const std::vector<double>& s_grid) {
  if (t_grid.size() != p.size() || t_grid.size() < 2) {
    throw Error(ErrorKind::validation, "legendre_transform: need matching grids of size >= 2");
  }
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    if (!(t_grid[i] > t_grid[i - 1])) {
      throw Error(ErrorKind::validation, "legendre_transform: t grid must be strictly increasing");
    }
  }
  const auto repaired = convex_repair(t_grid, p);
  if (repaired.magnitude > 1e-3) {
    throw Error(ErrorKind::non_convex, "legendre_transform: convexity repair of " +
                                           std::to_string(repaired.magnitude) + " exceeds 1e-3");
  }
  LegendreResult out;
  out.s_grid = s_grid;
  out.repair_magnitude = repaired.magnitude;
  const auto& q = repaired.values;
  for (double s : s_grid) {
    std::size_t best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < t_grid.size(); ++j) {
      const double v = t_grid[j] * s - q[j];
      if (v > best_v) {
        best_v = v;
        best = j;
      }
    }
    out.rate.push_back(best_v);
    out.argmax_t.push_back(t_grid[best]);
    out.endpoint.push_back(best == 0 || best + 1 == t_grid.size());
  }
  return out;
}

ConcaveHull::ConcaveHull(std::vector<double> t, std::vector<double> f) {
  std::vector<std::size_t> idx(t.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
    return t[x] != t[y] ? t[x] < t[y] : f[x] > f[y];
  });
  for (std::size_t i : idx) {
    if (!std::isfinite(t[i]) || !std::isfinite(f[i])) continue;
    if (!t_.empty() && t[i] == t_.back()) continue;  // keep the highest point per t
    while (t_.size() >= 2) {
      const std::size_t k = t_.size();
      const double cross = (t_[k - 1] - t_[k - 2]) * (f[i] - f_[k - 2]) -
                           (f_[k - 1] - f_[k - 2]) * (t[i] - t_[k - 2]);
      if (cross >= 0.0) {
        t_.pop_back();
        f_.pop_back();
      } else {
        break;
      }
    }
    t_.push_back(t[i]);
    f_.push_back(f[i]);
  }
}

std::optional<double> ConcaveHull::operator()(double t) const {
  const double v = interpolate(t_, f_, t);
  if (std::isnan(v)) return std::nullopt;
  return v;
}

double ConcaveHull::t_min() const { return t_.empty() ? std::nan("") : t_.front(); }
double ConcaveHull::t_max() const { return t_.empty() ? std::nan("") : t_.back(); }

std::optional<double> ConcaveHull::max_from(double lo) const {
  if (t_.empty() || lo > t_.back() + 1e-12) return std::nullopt;
  double best = -std::numeric_limits<double>::infinity();
  if (lo >= t_.front()) best = *(*this)(std::min(lo, t_.back()));
  for (std::size_t i = 0; i < t_.size(); ++i) {
    if (t_[i] >= lo) best = std::max(best, f_[i]);
  }
  return best;
}

RateEnvelope variational_envelope(const MapParams& params, const Observable& phi,
                                  const std::vector<double>& t_grid,
                                  const std::vector<HorseshoeSpec>& specs, int period_max,
                                  const LegendreResult* legendre) {
  params.validate();
  if (specs.empty()) throw Error(ErrorKind::validation, "variational_envelope: no horseshoe specs");
  RateEnvelope env;
  env.t_grid = t_grid;
  const double core_lo = quad_map(params.a, 1.0);
  for (const auto& spec : specs) {
    Interval window{std::isnan(spec.window_lo) ? core_lo : spec.window_lo,
                    std::isnan(spec.window_hi) ? 1.0 : spec.window_hi};
    const auto h = find_horseshoe(params, spec.m, window, 2);
    const auto tree = cylinders(h, spec.k);
    auto s_grid = spec.s_grid.empty() ? linspace(-4.0, 4.0, 81) : spec.s_grid;
    for (const auto& pt : pressure_curve(h, tree, phi, s_grid)) {
      env.raw_t.push_back(pt.t);
      env.raw_f.push_back(pt.free_energy);
      env.upper_from_horseshoe.push_back(true);
    }
  }
  const ConcaveHull upper(env.raw_t, env.raw_f);
  std::vector<double> missing;
  for (double t : t_grid) {
    const auto v = upper(t);
    if (!v) missing.push_back(t);
    env.upper.push_back(v.value_or(std::nan("")));
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "variational_envelope: no measure reaches t =";
    for (double t : missing) msg << ' ' << t;
    throw Error(ErrorKind::coverage, msg.str());
  }
  std::vector<double> lt, lf;
  if (period_max > 0) {
    for (const auto& mu : periodic_orbit_survey(params, period_max, {phi})) {
      lt.push_back(mu.observable_means.at(phi.id));
      lf.push_back(mu.free_energy);
    }
  }
  const ConcaveHull lower(lt, lf);
  for (double t : t_grid) env.lower.push_back(lower(t).value_or(std::nan("")));
  for (double t : t_grid) {
    env.legendre.push_back(legendre ? -interpolate(legendre->s_grid, legendre->rate, t)
                                    : std::nan(""));
  }
  return env;
}

CrosscheckReport ldp_crosscheck(const MapParams& params, const Observable& phi, double b,
                                CrosscheckBudgets budgets) {
  params.validate();
  CrosscheckReport rep;
  if (budgets.n_grid.size() < 2 || budgets.cgf_n_grid.empty()) {
    rep.inconclusive = true;
    rep.message = "n_grid too short to fit a rate";
    return rep;
  }
  if (budgets.cgf_t_grid.empty()) budgets.cgf_t_grid = linspace(-1.0, 1.0, 81);
  if (budgets.horseshoes.empty()) {
    HorseshoeSpec spec;
    spec.k = 14;
    budgets.horseshoes.push_back(spec);
  }
  try {
    rep.series = deviation_rate(params, {Threshold{phi, b}}, budgets.n_grid, budgets.samples,
                                budgets.seed, budgets.burn_in);
    rep.empirical = rep.series.fit.rate;
    rep.empirical_err = rep.series.fit.stderr_;

    const auto h_specs = budgets.horseshoes;
    std::vector<double> raw_t, raw_f;
    const double core_lo = quad_map(params.a, 1.0);
    for (const auto& spec : h_specs) {
      Interval window{std::isnan(spec.window_lo) ? core_lo : spec.window_lo,
                      std::isnan(spec.window_hi) ? 1.0 : spec.window_hi};
      const auto h = find_horseshoe(params, spec.m, window, 2);
      const auto tree = cylinders(h, spec.k);
      const auto s_grid = spec.s_grid.empty() ? linspace(-4.0, 4.0, 81) : spec.s_grid;
      // Finite-k bias: compare against the same curve at half depth.
      const auto half = cylinders(h, std::max(1, spec.k / 2));
      const auto full_curve = pressure_curve(h, tree, phi, s_grid);
      const auto half_curve = pressure_curve(h, half, phi, s_grid);
      std::vector<double> ht, hf;
      for (const auto& pt : half_curve) {
        ht.push_back(pt.t);
        hf.push_back(pt.free_energy);
      }
      for (const auto& pt : full_curve) {
        raw_t.push_back(pt.t);
        raw_f.push_back(pt.free_energy);
      }
      const ConcaveHull hh(ht, hf), fh(raw_t, raw_f);
      const auto a = hh.max_from(b), c = fh.max_from(b);
      if (a && c) rep.variational_err = std::max(rep.variational_err, std::abs(*a - *c));
    }
    const ConcaveHull upper(raw_t, raw_f);
    const auto vmax = upper.max_from(b);
    if (!vmax) throw Error(ErrorKind::coverage, "no horseshoe measure reaches t >= b");
    rep.variational = *vmax;

    const auto cgf = pressure_cgf(params, phi, budgets.cgf_t_grid, budgets.cgf_n_grid,
                                  budgets.cgf_samples, budgets.seed + 1, budgets.burn_in);
    const double s = std::max(b, cgf.sample_mean);
    const auto [first, last] = reliable_range(cgf);
    if (last - first < 3) throw Error(ErrorKind::coverage, "fewer than 3 CGF points with effective sample size >= 100");
    const std::vector<double> tt(cgf.t_grid.begin() + first, cgf.t_grid.begin() + last);
    const std::vector<double> pp(cgf.p.begin() + first, cgf.p.begin() + last);
    const auto lt = legendre_transform(tt, pp, {s});
    if (lt.endpoint[0]) throw Error(ErrorKind::coverage, "Legendre maximizer on the boundary of the reliable t-range");
    rep.legendre = -lt.rate[0];
    const auto it = std::find(tt.begin(), tt.end(), lt.argmax_t[0]);
    rep.legendre_err = cgf.stderr_[first + static_cast<std::size_t>(it - tt.begin())] + lt.repair_magnitude;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::all_censored || e.kind() == ErrorKind::coverage) {
      rep.inconclusive = true;
      rep.message = e.what();
      return rep;
    }
    throw;
  }
  const double combined = 2.0 * std::sqrt(rep.empirical_err * rep.empirical_err +
                                          rep.variational_err * rep.variational_err +
                                          rep.legendre_err * rep.legendre_err);
  rep.tolerance = std::max(budgets.tol_floor, combined);
  rep.pass = std::abs(rep.empirical - rep.variational) <= rep.tolerance &&
             std::abs(rep.legendre - rep.variational) <= rep.tolerance;
  rep.message = rep.pass ? "sandwich holds" : "sandwich violated";
  return rep;
}

}  // namespace ldplab
