#pragma once

// Finite-depth certificates for the hypotheses on the critical orbit:
//   A2  |Df^n(f0)| >= e^{lambda n}
//   A3  |f^n 0|    >= e^{-alpha sqrt(n)}
//   A4  topological mixing on [f^2 0, f0], certified by interval covering.
// A report is a statement "to depth n", never about all n.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ldplab/map_core.hpp"

namespace ldplab {

struct ConditionReport {
  std::string condition;  ///< "A2", "A3" or "A4"
  int depth_checked = 0;
  bool pass = true;
  double worst_margin = 0.0;
  int worst_n = 0;
  std::vector<double> margin_series;
  bool no_data = false;
};

ConditionReport check_A2(const MapParams& params, bool keep_series = true);
ConditionReport check_A3(const MapParams& params, bool keep_series = true);

/// Smallest m <= m_max with f^m([lo, hi]) covering [f^2 0, f0]. The image of an
/// interval is pushed forward exactly: a fold at 0 contributes the endpoint f(0).
std::optional<int> covering_time(double a, double lo, double hi, int m_max);

/// Tiles [f^2 0, f0] with probes of width probe_width; margin = m_max - covering time
/// (-inf when a probe never covers). worst_n holds the worst probe's covering time.
ConditionReport check_A4(const MapParams& params, int m_max, double probe_width);

struct ScanRow {
  double a = 0.0;
  bool a2_pass = false;
  bool a3_pass = false;
  double a2_margin = 0.0;
  double a3_margin = 0.0;
};

struct ScanResult {
  std::vector<ScanRow> rows;
  std::vector<double> survivors;
  double surviving_fraction = 0.0;
};

/// Grid a_lo, a_lo + step, ... <= a_hi. on_row (if set) is invoked in grid order,
/// which lets callers stream rows to disk; rows whose a is in skip are not recomputed.
ScanResult scan_parameters(double a_lo, double a_hi, double grid_step, const MapParams& tmpl,
                           const std::function<void(const ScanRow&)>& on_row = {},
                           const std::vector<double>& skip = {});

}  // namespace ldplab
