#pragma once

// Horseshoes for g = f^m, symbolic cylinders, periodic-orbit and cylinder-weighted
// measures, tilted pressure curves, and their spreads to f-invariant measures.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ldplab/map_core.hpp"
#include "ldplab/observable.hpp"

namespace ldplab {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

/// One full branch: inverse maps J onto L, forward maps L onto J.
struct Branch {
  Interval domain;
  std::function<double(double)> inverse;
  std::function<double(double)> forward;
  std::function<double(double)> log_dg;  ///< log|Dg| on the domain
};

struct Horseshoe {
  int m = 1;
  Interval window;  ///< J
  std::vector<Branch> branches;
  /// Base map step used for Birkhoff sums of f-observables (f itself, or g for toys).
  std::function<double(double)> base_step;
  /// |Dg^n| >= c kappa^n, estimated from cylinder lengths at depth 1..3.
  double expansion_c = 1.0;
  double expansion_kappa = 1.0;
  double min_log_dg = 0.0;  ///< sampled min of log|Dg| over the branches
  bool disjoint = true;     ///< closed branch domains pairwise disjoint
  bool interior = true;     ///< every domain inside the open window
  bool uniformly_expanding = true;

  std::size_t q() const { return branches.size(); }
};

/// Laps of f^m over J whose image covers J, each shrunk to the exact sub-lap mapped onto J.
/// Throws not_found when fewer than q_min such branches exist.
Horseshoe find_horseshoe(const MapParams& params, int m, Interval window, std::size_t q_min = 2);

/// Piecewise-linear full-branch toy on [0, |J|): branch i has slope slopes[i] and the
/// domains are laid out left to right without gaps.
Horseshoe linear_horseshoe(const std::vector<double>& slopes, double window_length = 1.0);

struct Cylinder {
  std::uint64_t code = 0;  ///< word a_0..a_{k-1} in base q, a_0 most significant
  Interval interval;
  double periodic_point = 0.0;  ///< fixed point of g^k inside the cylinder
};

/// All words of length k. Cylinder of word w is psi_{a_0} o ... o psi_{a_{k-1}}(J).
struct CylinderTree {
  int depth = 0;
  std::size_t q = 0;
  std::vector<Cylinder> words;  ///< ordered by code
  double window_length = 1.0;
  /// levels[j] holds the intervals of all words of length j + 1, indexed by code.
  std::vector<std::vector<Interval>> levels;

  std::vector<int> word(std::uint64_t code) const;
  std::uint64_t rotate(std::uint64_t code) const;  ///< a_0 a_1.. -> a_1 .. a_0
};

CylinderTree cylinders(const Horseshoe& h, int k, std::size_t budget = 1000000);

enum class MeasureKind { periodic_orbit, nu_k, spread };
std::string to_string(MeasureKind kind);

struct MeasureApprox {
  MeasureKind kind = MeasureKind::periodic_orbit;
  std::vector<double> points;
  std::vector<double> weights;
  int m = 1;  ///< g = f^m for nu_k; 1 otherwise
  double entropy_lb = 0.0;
  double lyapunov = 0.0;  ///< integral of log|Df| (f-measures) or Phi (g-measures)
  /// f-measures: mean of phi. g-measures: mean of the Birkhoff sum S_m phi.
  std::map<std::string, double> observable_means;
  double free_energy = 0.0;
};

/// nu_k: weights proportional to |L_w| spread evenly over each word's periodic orbit.
/// free_energy carries the proxy (1/k) log sum |L_w| / |J|.
MeasureApprox equilibrium_nu_k(const Horseshoe& h, const CylinderTree& tree,
                               const std::vector<Observable>& observables = {});

struct PressurePoint {
  double s = 0.0;
  double p = 0.0;            ///< (1/k) log sum |L_w|/|J| exp(s B_w)
  double t = 0.0;            ///< tilted mean of phi per f step
  double free_energy = 0.0;  ///< entropy proxy minus Lyapunov of the tilted measure, per f step
};

/// B_w is the Birkhoff sum of phi along the f-orbit of the period-k point of w (k*m terms).
std::vector<PressurePoint> pressure_curve(const Horseshoe& h, const CylinderTree& tree,
                                          const Observable& phi, std::vector<double> s_grid);

MeasureApprox spread_measure(const Horseshoe& h, const MeasureApprox& nu);

/// Periodic orbits of f with minimal period <= period_max (<= 24), one measure per orbit.
/// Orbits through the critical point are skipped (their Lyapunov exponent is -inf).
std::vector<MeasureApprox> periodic_orbit_survey(const MapParams& params, int period_max,
                                                 const std::vector<Observable>& observables = {});

/// min over sampled words w and letters a of |L_{w a}| / (|L_w| |L_a| / |J|).
double cylinder_ratio_bound(const CylinderTree& tree);

}  // namespace ldplab
