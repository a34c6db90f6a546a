#pragma once

// Quadratic family f_a(x) = 1 - a x^2 on [-1, 1]: orbits, log-space derivative
// cocycles, the critical-orbit distortion schedule (D_n, delta_p), bound
// periods and the I_{p,j} return grid.
//
// Everything here is double precision. Iterated orbits are pseudo-orbits and
// all checks are statements about the computed quantities.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "ldplab/error.hpp"

namespace ldplab {

inline constexpr double kDefaultLambda = 0.9 * std::numbers::ln2;
inline constexpr double kDefaultAlpha = 0.01;
inline constexpr double kDefaultEpsilon = 0.01;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct MapParams {
  double a = 2.0;
  double lambda = kDefaultLambda;
  double alpha = kDefaultAlpha;
  double epsilon = kDefaultEpsilon;
  int cap_n = 0;  ///< grid start index N; 0 selects the default rule
  int depth = 200;

  /// Throws Error(validation) naming the first violated invariant. cap_n == 0
  /// is accepted (resolved later by resolve_cap_n).
  void validate() const;

  bool constants_overridden() const {
    return lambda != kDefaultLambda || alpha != kDefaultAlpha;
  }
};

inline double quad_map(double a, double x) { return 1.0 - a * x * x; }

/// c_0 = f(0), c_1, ..., c_{length-1}.
std::vector<double> critical_orbit(double a, int length);

/// Forward orbit that detours through shadowing coordinates after a pass close to 0: the
/// point is carried as c_r + e until |e| is large again. Plain iteration would round f(x)
/// onto c_0 for |x| below ~1e-8 and lose the separation (at a = 2 the orbit is then
/// absorbed at the fixed point -1).
class ShadowedOrbit {
 public:
  static constexpr double kEnter = 1e-3;
  static constexpr double kExit = 1e-3;

  /// critical must come from critical_orbit(a, .) and outlive the orbit.
  ShadowedOrbit(const std::vector<double>& critical, double a, double x)
      : c_(&critical), a_(a), x_(x) {}

  double x() const { return x_; }

  void step() {
    const auto& c = *c_;
    if (r_ < 0) {
      if (std::abs(x_) < kEnter && c.size() > 1) {
        e_ = -a_ * x_ * x_;
        r_ = 0;
        x_ = c[0] + e_;
      } else {
        x_ = 1.0 - a_ * x_ * x_;
      }
      return;
    }
    e_ = -a_ * e_ * (2.0 * c[static_cast<std::size_t>(r_)] + e_);
    ++r_;
    x_ = c[static_cast<std::size_t>(r_)] + e_;
    if (std::abs(e_) > kExit || static_cast<std::size_t>(r_) + 1 >= c.size()) r_ = -1;
  }

 private:
  const std::vector<double>* c_;
  double a_;
  double x_;
  double e_ = 0.0;
  int r_ = -1;
};

/// Orbit x, f(x), ..., f^n(x). Values within 1e-12 outside [-1, 1] are clamped;
/// anything further out raises domain_escape.
std::vector<double> iterate(const MapParams& params, double x, int n);

/// sum_{i<n} log|Df(f^i x)| accumulated left to right; -inf if an iterate is 0.
double log_derivative(const MapParams& params, double x, int n);

struct CriticalOrbitTable {
  double a = 0.0;
  double epsilon = 0.0;
  int depth = 0;
  std::vector<double> c;        ///< c[n] = f^n(c_0), c_0 = f(0); n = 0..depth
  std::vector<double> log_df;   ///< log|Df^n(c_0)|, n = 0..depth
  std::vector<double> log_d;    ///< log d_n = log|c_n| - log|Df^n(c_0)|, n = 0..depth-1
  std::vector<double> log_D;    ///< log D_n, n = 1..depth (index 0 unused)
  std::vector<double> D;        ///< D_n as a double (may underflow for deep n)
  std::vector<double> log_delta;///< log delta_p, p = 1..depth (index 0 unused)
  std::vector<double> delta;    ///< delta_p as a double

  double delta_hat() const { return delta.at(10); }
  double log_delta_hat() const { return log_delta.at(10); }
};

/// Builds the schedule to params.depth. Throws degenerate_orbit if some
/// c_n == 0 exactly within depth.
CriticalOrbitTable critical_table(const MapParams& params);

/// Default N: smallest N > 10 with delta_N <= 1e-3, capped at depth.
int default_cap_n(const CriticalOrbitTable& table);

/// Returns params with cap_n resolved (if 0) and validated against the table.
MapParams resolve_cap_n(const MapParams& params, const CriticalOrbitTable& table);

/// The unique p with delta_p <= |x| < delta_{p-1}; requires 0 < |x| < delta_hat.
int bound_period(const CriticalOrbitTable& table, double x);

struct BoundReturn {
  int n = 0;  ///< return index n_k
  int p = 0;  ///< bound period p_k
};

struct BoundFreeItinerary {
  std::vector<BoundReturn> entries;
  int horizon = 0;
};

BoundFreeItinerary itinerary(const MapParams& params, const CriticalOrbitTable& table,
                             double x, int n);

// ---------------------------------------------------------------------------
// I_{p,j} grid.

struct GridInterval {
  int p = 0;
  int j = 0;       ///< signed: negative for mirrored intervals
  double lo = 0.0; ///< [lo, hi) for j > 0, (lo, hi] for j < 0
  double hi = 0.0;

  double length() const { return hi - lo; }
  double distance_to_zero() const { return j > 0 ? lo : -hi; }
};

/// Equal-length subdivision of [delta_p, delta_{p-1}) into floor(e^{3 eps p})
/// pieces for N < p <= p_max, indexed right to left, plus mirrors.
class IpjGrid {
 public:
  IpjGrid(const CriticalOrbitTable& table, int cap_n, int p_max);

  int cap_n() const { return cap_n_; }
  int p_max() const { return p_max_; }
  double delta() const { return delta_n_; }            ///< delta_N
  double inner_radius() const { return delta_pmax_; }  ///< delta_{p_max}

  /// Positive intervals ordered by increasing position (p_max first, I_{N+1,1} last).
  std::span<const GridInterval> positive() const { return positive_; }
  /// All intervals, I_{p,j} and mirrors, in increasing position.
  std::vector<GridInterval> all() const;

  static int pieces(double epsilon, int p);

  /// Lambda^+ = I_{N,1}: rightmost piece of [delta_N, delta_{N-1}).
  GridInterval lambda_plus() const { return lambda_plus_; }
  GridInterval lambda_minus() const;

  /// Grid interval containing y (|y| in [delta_{p_max}, delta_N)), if any.
  std::optional<GridInterval> locate(double y) const;

 private:
  int cap_n_;
  int p_max_;
  double delta_n_;
  double delta_pmax_;
  std::vector<GridInterval> positive_;
  GridInterval lambda_plus_;
};

// ---------------------------------------------------------------------------
// Shadowing coordinates: a point near the critical orbit is carried as the
// offset e from c_r, which keeps the separation exact while |e| << |c_r|.

/// Next offset: f(c_r + e) - c_{r+1}.
inline double shadow_step(double a, double c_r, double e) { return -a * e * (2.0 * c_r + e); }

/// Offset of f(x) from c_0 for x near 0.
inline double shadow_start(double a, double x) { return -a * x * x; }

/// log|Df^n(x)| for x close to 0, evaluated along the critical-orbit offsets
/// (accurate even when f(x) rounds to 1). Requires n <= table.depth + 1.
double log_derivative_near_critical(const CriticalOrbitTable& table, double x, int n);

/// f^n(x) - c_{n-1} for x close to 0, n >= 1.
double image_offset_near_critical(const CriticalOrbitTable& table, double x, int n);

}  // namespace ldplab
