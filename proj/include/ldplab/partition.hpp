#pragma once

// Refining partitions of Lambda = Lambda^- u Lambda^+, stopping times, the carved set,
// the induced map with its return times, and the tower built on it.
//
// Only Lambda^+ is iterated: f(-x) = f(x), so the partition of Lambda^- is the mirror
// image with identical images for n >= 1. Masses are fractions of |Lambda^+| and are
// carried multiplicatively (base coordinates underflow long before the partition is
// deep). A stopped piece restarts as a copy of Lambda^+ (its future is the pull-back of
// the Lambda^+ partition); mass fractions are pulled back affinely.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ldplab/map_core.hpp"

namespace ldplab {

struct PartitionOptions {
  int depth = 36;                   ///< last stage of the exact engine
  int p_max = 0;                    ///< 0: max(depth, smallest p with delta_p <= delta e^{-eps depth})
  std::size_t max_elements = 300000;  ///< beyond this, the lightest elements are pruned
  double mass_floor = 0.0;          ///< elements lighter than this (fraction of Lambda^+) are pruned
  int backward_window = 0;          ///< 0: full backward walk
};

enum class ReturnKind : std::uint8_t { initial, inner, outer, stop, unsplit };
std::string to_string(ReturnKind kind);

/// One event in an element's history: a free time n at which its ancestor's image met
/// (-delta, delta), or the stop that restarted it.
struct ReturnRecord {
  int n = 0;
  std::int16_t p = 0;  ///< bound period attached at n (0 when none makes sense)
  std::int16_t j = 0;  ///< signed grid index of the containing full interval (0 if none)
  double log_d = 0.0;  ///< log d(0, f^n omega) for the piece that was kept
  ReturnKind kind = ReturnKind::inner;
};

struct TrailStep {
  std::int16_t tag = -1;  ///< -1: absolute image, r >= 0: offset from c_r
  std::int8_t sign = 1;   ///< sign of the image points when absolute
};

/// The tracked state of one partition element omega at time n.
struct LabeledInterval {
  double mass = 1.0;  ///< |omega| / |Lambda^+|
  double base_lo = 0.0;
  double base_hi = 0.0;
  int tag = -1;        ///< representation of the current image
  double lo = 0.0;     ///< f^n omega = [lo, hi] (absolute) or c_tag + [lo, hi]
  double hi = 0.0;
  int bound_until = 0;  ///< bound at times t < bound_until
  std::vector<TrailStep> trail;  ///< per-time representation, times trail_start .. n-1
  int trail_start = 0;
  std::vector<ReturnRecord> history;
  double image_sum = 0.0;  ///< sum_{i<n} |f^i omega| (inherited from ancestors: an upper bound)
  bool alive = true;       ///< still inside Omega_n
  int gap_order = 0;       ///< step at which it was deleted (0 while alive)
  bool flagged = false;    ///< produced by a tie-break or a partial-interval merge
};

struct StoppingRecord {
  int rank = 1;
  int S = 0;
  int sign = 1;
  double mass = 0.0;  ///< fraction of |Lambda^+|
  double base_lo = 0.0;
  double base_hi = 0.0;
  int parent = -1;  ///< index of the rank-(k-1) record it was pulled back into
  int template_index = -1;  ///< rank-1 record whose pull-back it is
  std::vector<ReturnRecord> history;  ///< returns before the stop
};

struct DroppedPiece {
  int n = 0;
  double mass = 0.0;
  bool center = true;  ///< false: all elements pruned at step n, merged, without history
  std::vector<ReturnRecord> history;
};

struct GapRecord {
  int order = 0;
  double mass = 0.0;
  double base_lo = 0.0;
  double base_hi = 0.0;
};

struct StageStats {
  int n = 0;
  std::size_t elements = 0;
  std::size_t subdivided = 0;
  std::size_t stops = 0;
  double live_mass = 0.0;     ///< mass still being refined
  double stopped_mass = 0.0;  ///< cumulative
  double dropped_mass = 0.0;  ///< cumulative: center pieces and pruning
  double deleted_mass = 0.0;  ///< cumulative mass of gaps among live elements
  std::size_t glued = 0;
  std::size_t orphans = 0;
  std::size_t partial_pieces = 0;
  std::size_t exactly_one_violations = 0;
};

/// Shared geometry: schedule, grid, Lambda^+, the 3 Lambda^± covers.
struct PartitionGeometry {
  CriticalOrbitTable table;
  int N = 0;
  int p_max = 0;
  double a = 2.0;
  double epsilon = 0.0;
  double lambda = 0.0;
  double log_delta = 0.0;
  double delta = 0.0;       ///< delta_N
  double center = 0.0;      ///< delta_{p_max}
  double lambda_lo = 0.0;   ///< Lambda^+ = [lambda_lo, lambda_hi)
  double lambda_hi = 0.0;
  double lambda_len = 0.0;
  std::vector<GridInterval> positive;  ///< grid intervals in increasing position

  double cover_lo() const { return 0.5 * (lambda_lo + lambda_hi) - 1.5 * lambda_len; }
  double cover_hi() const { return 0.5 * (lambda_lo + lambda_hi) + 1.5 * lambda_len; }
};

PartitionGeometry make_geometry(const MapParams& params, const PartitionOptions& opts);

/// Lambda^+ at time 0: bound with period N.
LabeledInterval lambda_plus_element(const PartitionGeometry& geo);

struct PartitionStage {
  int n = 0;
  std::vector<LabeledInterval> elements;  ///< live (not stopped) elements of Lambda^+ only
  /// Both halves in increasing base position (Lambda^- mirrored), masses as fractions of |Lambda|.
  std::vector<LabeledInterval> both_sides() const;
};

/// Stage 0: {Lambda^+, Lambda^-}, both bound with bound period N.
PartitionStage initial_stage(const PartitionGeometry& geo);

/// Exact stage-by-stage refinement of Lambda^+.
class PartitionEngine {
 public:
  PartitionEngine(const MapParams& params, PartitionOptions opts = {});
  /// Starts from a single element (used for sub-simulations of one partition element).
  PartitionEngine(PartitionGeometry geo, PartitionOptions opts, LabeledInterval start, int n0);

  const PartitionGeometry& geometry() const { return geo_; }
  const PartitionOptions& options() const { return opts_; }
  int n() const { return n_; }
  const PartitionStage& stage() const { return stage_; }
  const std::vector<StoppingRecord>& stops() const { return stops_; }
  const std::vector<DroppedPiece>& dropped() const { return dropped_; }
  const std::vector<GapRecord>& gaps() const { return gaps_; }
  const std::vector<StageStats>& stats() const { return stats_; }
  double start_mass() const { return start_mass_; }

  /// Refines stage n into stage n+1.
  void advance();
  void run_to(int depth);

 private:
  PartitionGeometry geo_;
  PartitionOptions opts_;
  int n_ = 0;
  double start_mass_ = 1.0;
  PartitionStage stage_;
  std::vector<StoppingRecord> stops_;
  std::vector<DroppedPiece> dropped_;
  std::vector<GapRecord> gaps_;
  std::vector<StageStats> stats_;
  double stopped_mass_ = 0.0;
  double dropped_mass_ = 0.0;
  double deleted_mass_ = 0.0;
};

// ---------------------------------------------------------------------------
// Element-level mechanics shared by the exact engine and the lineage sampler.

enum class PieceKind { inner, outer, stop, center, unsplit, run };

struct PieceSpec {
  double lo = 0.0;  ///< absolute image coordinates at the subdivision time
  double hi = 0.0;
  PieceKind kind = PieceKind::inner;
  int p = 0;
  int j = 0;
  int stop_sign = 0;
  int full_count = 0;
  bool flagged = false;
};

struct SubdivisionFlags {
  std::size_t glued = 0;
  std::size_t orphans = 0;
  std::size_t partial_pieces = 0;
};

/// Pieces of a free element at time n. Empty when the image misses (-delta, delta);
/// a single unsplit piece when the rule leaves the element whole. coarse = true reports
/// each side's inner pieces as one `run` block.
std::vector<PieceSpec> subdivide(const PartitionGeometry& geo, double lo, double hi,
                                 SubdivisionFlags* flags = nullptr, bool coarse = false);

/// Pushes the element's image from time n to n+1 and appends the trail step of time n.
void step_forward(const PartitionGeometry& geo, LabeledInterval& e, int n);

/// log|Df^n| at the image point y (element's current representation) and the base point
/// when the walk reaches time 0. window = 0 walks the whole trail.
struct BackwardResult {
  double log_df = 0.0;
  double base = 0.0;
  bool reached_base = false;
  double anchor = 0.0;  ///< coordinate where the walk stopped (representation anchor_tag)
  int anchor_tag = -1;
};
BackwardResult pull_back(const PartitionGeometry& geo, const LabeledInterval& e, int n, double y,
                         int window = 0);

/// log of the length of the pull-back of [y_lo, y_hi] (element's current representation) to the start
/// of the walk; the endpoint difference is carried through every inverse branch in
/// rationalized form, so relative precision survives arbitrarily deep walks.
double log_pull_back_length(const PartitionGeometry& geo, const LabeledInterval& e, int n, double y_lo,
                        double y_hi, int window = 0);

/// Relative Lebesgue weights of the pieces inside omega (pulled-back lengths, normalized to
/// sum 1). With a finite window the density at the window start is taken as uniform.
std::vector<double> piece_weights(const PartitionGeometry& geo, const LabeledInterval& e, int n,
                                  const std::vector<PieceSpec>& pieces, int window = 0);

double distance_to_zero(const PartitionGeometry& geo, const LabeledInterval& e);
double image_length(const LabeledInterval& e);

// ---------------------------------------------------------------------------
// Stopping families, carving, invariants.

/// Rank-k records by pulling rank-1 records back into each other (affine masses), keeping
/// S_k <= max_time and mass >= mass_floor.
std::vector<StoppingRecord> stopping_families(const std::vector<StoppingRecord>& rank1, int k_max,
                                              int max_time, double mass_floor = 1e-12);

struct CarveResult {
  int depth = 0;
  double fraction_lower = 0.0;  ///< |Omega_depth| / |Lambda|, unknown futures counted as deleted
  double fraction_upper = 0.0;  ///< unknown futures counted as kept
  std::vector<double> clock_fraction;  ///< c(T): surviving fraction of a Lambda^+ copy started at T
  std::vector<GapRecord> gaps;          ///< deletions observed by the engine (clock 0)
  std::vector<double> element_fraction; ///< final-stage elements: 1 kept, 0 deleted
};

/// Omega_depth for the whole of Lambda, combining the engine's clock-0 deletions with the
/// clock-shifted deletions of restarted copies.
CarveResult carve(const PartitionEngine& engine);

/// true if every history entry with n <= horizon clears the threshold at clock T.
bool survives(const PartitionGeometry& geo, const std::vector<ReturnRecord>& history, int clock,
              int horizon);

struct InvariantReport {
  std::string name;
  bool pass = true;
  double worst = 0.0;  ///< worst observed ratio to the bound (<= 1 passes) or worst margin
  double bound = 0.0;
  std::size_t checked = 0;
  std::string detail;
};

/// n_{i+1} - n_i <= 2 p_i on every history (including pending returns at the horizon).
InvariantReport verify_bound_gap(const PartitionEngine& engine);
/// sum_{i<n} |f^i omega| <= 10 / delta on every element.
InvariantReport verify_bounded_sums(const PartitionEngine& engine);
/// Sampled log(Df^n(x)/Df^n(y)) against log C_delta and log C_eps.
InvariantReport verify_distortion(const PartitionEngine& engine, std::size_t max_elements = 2000);
/// Live + stopped + dropped masses reproduce |Lambda^+| to 1e-10 relative.
InvariantReport verify_mass_balance(const PartitionEngine& engine);
/// Live elements are pairwise disjoint in base coordinates (where resolvable).
InvariantReport verify_disjoint(const PartitionEngine& engine);

// ---------------------------------------------------------------------------
// Long-horizon statistics by sampling single lineages with Lebesgue weights.

struct LineageOptions {
  std::size_t samples = 4000;
  int horizon = 20000;        ///< absolute time budget per lineage
  int check_horizon = 1500;   ///< horizon for deciding f^R x in Omega_infty
  int backward_window = 32;
  std::uint64_t seed = 1;
};

struct Lineage {
  std::vector<int> stops;        ///< absolute stopping times S_1 < S_2 < ...
  std::vector<int> stop_signs;
  std::vector<int> return_times; ///< absolute times of returns (inner/unsplit pieces)
  std::vector<double> return_log_d;
  int end = 0;                   ///< time reached
  bool truncated = false;        ///< ran into an unresolvable center piece
};

/// Follows one point's element from `start` at time n0 (Lebesgue-weighted choices).
Lineage sample_lineage(const PartitionGeometry& geo, LabeledInterval start, int n0, int horizon,
                       int window, std::mt19937_64& rng);

struct ExpFit {
  double rate = 0.0;       ///< slope of log mass against n
  double intercept = 0.0;
  double stderr_ = 0.0;
  int n_lo = 0;
  int n_hi = 0;
};

struct InducedMap {
  std::vector<int> n_grid;          ///< tail abscissae
  std::vector<double> tail;         ///< |{R > n}| / |Lambda|
  std::vector<double> tail_given_omega;  ///< nu_0(R > n) with nu_0 = Lebesgue on Omega
  std::vector<std::size_t> counts;  ///< samples with R > n
  std::vector<int> r_values;        ///< R of every resolved carved sample (sorted)
  std::vector<int> r_signs;
  double carved_fraction = 0.0;     ///< sampled |Omega_H| / |Lambda|
  double unresolved_fraction = 0.0; ///< of carved samples
  double regular_return_fraction = 0.0;  ///< R reached after >= 1 gap
  double plus_fraction = 0.5;       ///< share of branches landing on Lambda^+
  int min_r = 0;
  ExpFit fit;
  std::size_t samples = 0;
  std::size_t carved_samples = 0;
  int horizon = 0;
};

/// Return time R via regular returns, sampled over Lambda. Throws unresolved_mass when more
/// than 20% of the carved samples have no determined R within the horizon.
InducedMap induce(const PartitionGeometry& geo, const LineageOptions& opts);

struct Tower {
  std::vector<double> level_mass;  ///< nu_0(R > l), l = 0..
  std::vector<double> mu_hat;      ///< hat mu(Delta_l)
  double mean_return = 0.0;        ///< nu_0(R) by summing levels
  double mean_return_direct = 0.0; ///< nu_0(R) from the R sample
  double rho = 0.0;                ///< hat mu(Delta_0)
  double c1 = 0.0;                 ///< min density of hat mu against |p_1 A| over Lambda^±
  double c2 = 0.0;
  double plus_weight = 0.5;        ///< nu_0(Omega^+) after the Krylov-Bogolyubov steps
  int kb_steps = 3;
};

Tower build_tower(const InducedMap& induced, int kb_steps = 3);

struct EscapeTail {
  int m = 0;
  std::vector<int> n_values;
  std::vector<double> mass;  ///< |{S >= m + n | omega}|
  double unresolved = 0.0;
  double c_fit = 0.0;
  double zeta_fit = 0.0;
  ExpFit fit;
};

/// Conditional tail of the next stopping time of a free element omega at time m.
/// Throws insufficient_depth when more than 20% of omega stays unresolved on the range.
EscapeTail escape_tail(const PartitionGeometry& geo, const LabeledInterval& omega, int m,
                       int n_lo, int n_hi, const LineageOptions& opts);

struct QuickFall {
  double fraction = 0.0;  ///< |omega'| / |omega~|
  int r = 0;
  int window_hi = 0;
  double bound = 0.0;     ///< e^{-eps^{1/3} n}
  bool pass = false;
};

/// Searches the stopping decomposition of omega~ (an element of the stage at time n) for
/// the heaviest piece mapped onto Lambda^± at some r in [n, (1 + eps^{1/3}) n].
/// carved_fraction scales a stopped piece to its part inside Omega_infty.
QuickFall quick_fall(const PartitionGeometry& geo, const LabeledInterval& omega, int n,
                     double carved_fraction, const PartitionOptions& opts);

/// Least-squares line through (n, log mass) for positive masses.
ExpFit fit_exponential(const std::vector<int>& n, const std::vector<double>& mass);

}  // namespace ldplab
