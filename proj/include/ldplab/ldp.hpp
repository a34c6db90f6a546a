#pragma once

// Monte Carlo deviation probabilities under mu, the cumulant generating function,
// Legendre transforms, and variational rate envelopes built from thermo measures.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ldplab/map_core.hpp"
#include "ldplab/observable.hpp"
#include "ldplab/thermo.hpp"

namespace ldplab {

inline constexpr int kDefaultBurnIn = 1000;
inline constexpr int kOrbitBlock = 1000;  ///< points emitted per uniform start in sample_mu

/// Birkhoff sampling of mu: uniform starts on [-1, 1], burn_in discarded iterates, then
/// kOrbitBlock consecutive orbit points per start. Independent across starts only.
std::vector<double> sample_mu(const MapParams& params, std::size_t count, int burn_in,
                              std::uint64_t seed);

struct BirkhoffEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;  ///< from the spread of per-start block means
  std::size_t points = 0;
};

/// Birkhoff average of phi over count sampled points (streamed, not stored).
BirkhoffEstimate birkhoff_mean(const MapParams& params, const Observable& phi, std::size_t count,
                               int burn_in, std::uint64_t seed);

struct Threshold {
  Observable phi;
  double b = 0.0;
};

struct RateFit {
  double rate = 0.0;
  double intercept = 0.0;
  double stderr_ = 0.0;
};

struct RateSeries {
  std::vector<std::string> ids;
  std::vector<double> thresholds;
  std::vector<int> n_grid;
  std::vector<std::size_t> hits;
  std::vector<double> values;  ///< (1/n) log p_hat; censored cells hold (1/n) log upper
  std::vector<double> ci_lo;
  std::vector<double> ci_hi;
  std::vector<bool> censored;
  RateFit fit;  ///< slope of log p_hat against n over uncensored cells
  std::size_t sample_size = 0;
  std::uint64_t seed = 0;
};

/// Fraction of independent mu-starts with (1/n) S_n phi_j >= b_j for all j. Each start runs
/// one orbit to max(n_grid) and is scored at every n. Zero-hit cells are censored with the
/// one-sided Clopper-Pearson 95% upper bound. Throws all_censored when every cell is empty.
RateSeries deviation_rate(const MapParams& params, const std::vector<Threshold>& thresholds,
                          std::vector<int> n_grid, std::size_t samples, std::uint64_t seed,
                          int burn_in = kDefaultBurnIn);

struct CgfCurve {
  std::vector<double> t_grid;
  std::vector<int> n_grid;
  std::vector<std::vector<double>> per_n;  ///< per_n[i][j] = (1/n_i) log mean exp(t_j S_{n_i})
  std::vector<double> p;                   ///< extrapolated in 1/n
  std::vector<double> stderr_;
  std::vector<double> ess;  ///< effective sample size at the largest n
  double sample_mean = 0.0;  ///< empirical mean of phi over the scored blocks
  bool convex = true;
  std::vector<std::string> warnings;
};

CgfCurve pressure_cgf(const MapParams& params, const Observable& phi, std::vector<double> t_grid,
                      std::vector<int> n_grid, std::size_t samples, std::uint64_t seed,
                      int burn_in = kDefaultBurnIn);

/// Indices [first, last) of the contiguous block of grid points around t = 0 whose
/// effective sample size is at least min_ess; outside it the estimate is carried by a
/// handful of orbits and saturates.
std::pair<std::size_t, std::size_t> reliable_range(const CgfCurve& curve, double min_ess = 100.0);

/// Convexity repair: secant slopes made non-decreasing by weighted isotonic regression,
/// then re-integrated from the grid point nearest t = 0.
struct ConvexRepair {
  std::vector<double> values;
  double magnitude = 0.0;  ///< max |repaired - input|
};
ConvexRepair convex_repair(const std::vector<double>& t, const std::vector<double>& p);

struct LegendreResult {
  std::vector<double> s_grid;
  std::vector<double> rate;      ///< I(s) = max_t (t s - p(t))
  std::vector<double> argmax_t;
  std::vector<bool> endpoint;    ///< max attained at a grid boundary
  double repair_magnitude = 0.0;
};

/// Throws non_convex when the required repair exceeds 1e-3.
LegendreResult legendre_transform(const std::vector<double>& t_grid, const std::vector<double>& p,
                                  const std::vector<double>& s_grid);

/// Upper concave hull of scattered (t, F) points, evaluated at t; nullopt outside the hull.
class ConcaveHull {
 public:
  ConcaveHull(std::vector<double> t, std::vector<double> f);
  std::optional<double> operator()(double t) const;
  double t_min() const;
  double t_max() const;
  bool empty() const { return t_.empty(); }
  /// max of the hull over [lo, +inf); nullopt when lo lies beyond the hull.
  std::optional<double> max_from(double lo) const;
  const std::vector<double>& vertices_t() const { return t_; }
  const std::vector<double>& vertices_f() const { return f_; }

 private:
  std::vector<double> t_;
  std::vector<double> f_;
};

struct HorseshoeSpec {
  int m = 1;
  double window_lo = std::nan("");  ///< NaN means the core end f^2 0
  double window_hi = std::nan("");  ///< NaN means f 0
  int k = 10;
  std::vector<double> s_grid;
};

struct RateEnvelope {
  std::vector<double> t_grid;
  std::vector<double> upper;     ///< concave hull of tilted horseshoe free energies
  std::vector<double> lower;     ///< concave hull of periodic-orbit free energies (NaN: uncovered)
  std::vector<double> legendre;  ///< -I(t) from a CGF transform (NaN when not supplied)
  std::vector<double> raw_t;     ///< every contributing upper point
  std::vector<double> raw_f;
  std::vector<bool> upper_from_horseshoe;
};

/// Throws coverage listing t-grid points outside every horseshoe's tilted range.
RateEnvelope variational_envelope(const MapParams& params, const Observable& phi,
                                  const std::vector<double>& t_grid,
                                  const std::vector<HorseshoeSpec>& specs, int period_max,
                                  const LegendreResult* legendre = nullptr);

struct CrosscheckBudgets {
  std::vector<int> n_grid{50, 100, 150, 200};
  std::size_t samples = 1000000;
  int burn_in = kDefaultBurnIn;
  std::uint64_t seed = 1;
  std::vector<int> cgf_n_grid{100, 200};
  std::size_t cgf_samples = 200000;
  std::vector<double> cgf_t_grid;  ///< default: -1..1 step 0.025
  std::vector<HorseshoeSpec> horseshoes;  ///< default: m=1 on the core, k=14, s in [-4, 4]
  int period_max = 12;
  double tol_floor = 0.05;
};

struct CrosscheckReport {
  double empirical = 0.0;
  double empirical_err = 0.0;
  double variational = 0.0;
  double variational_err = 0.0;
  double legendre = 0.0;
  double legendre_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  bool inconclusive = false;
  std::string message;
  RateSeries series;
};

/// Compares the fitted deviation rate of {(1/n) S_n phi >= b}, the max over t >= b of the
/// variational envelope, and -I(b) from the CGF. Censoring and coverage problems come back
/// as inconclusive, never as a failed sandwich.
CrosscheckReport ldp_crosscheck(const MapParams& params, const Observable& phi, double b,
                                CrosscheckBudgets budgets);

}  // namespace ldplab
