#include "ldplab/conditions.hpp"

#include <algorithm>
#include <cmath>

#include "ldplab/parallel.hpp"

namespace ldplab {

namespace {

void record(ConditionReport& r, int n, double margin, bool keep_series) {
  if (keep_series) r.margin_series.push_back(margin);
  if (r.worst_n == 0 || margin < r.worst_margin) {
    r.worst_margin = margin;
    r.worst_n = n;
  }
}

ConditionReport empty_report(const char* name) {
  ConditionReport r;
  r.condition = name;
  r.no_data = true;
  r.pass = true;
  return r;
}

}  // namespace

ConditionReport check_A2(const MapParams& params, bool keep_series) {
  if (params.depth <= 0) return empty_report("A2");
  ConditionReport r;
  r.condition = "A2";
  r.depth_checked = params.depth;
  double y = quad_map(params.a, 0.0);  // c_0
  double log_df = 0.0;
  for (int n = 1; n <= params.depth; ++n) {
    log_df += y == 0.0 ? kNegInf : std::log(std::abs(2.0 * params.a * y));
    y = quad_map(params.a, y);
    record(r, n, log_df / n - params.lambda, keep_series);
  }
  r.pass = r.worst_margin >= 0.0;
  return r;
}

ConditionReport check_A3(const MapParams& params, bool keep_series) {
  if (params.depth <= 0) return empty_report("A3");
  ConditionReport r;
  r.condition = "A3";
  r.depth_checked = params.depth;
  double y = 0.0;
  for (int n = 1; n <= params.depth; ++n) {
    y = quad_map(params.a, y);  // f^n 0
    const double margin = (y == 0.0 ? kNegInf : std::log(std::abs(y))) +
                          params.alpha * std::sqrt(static_cast<double>(n));
    record(r, n, margin, keep_series);
  }
  r.pass = r.worst_margin >= 0.0;
  return r;
}

std::optional<int> covering_time(double a, double lo, double hi, int m_max) {
  const double core_lo = quad_map(a, 1.0);  // f^2 0
  const double core_hi = 1.0;               // f 0
  constexpr double tol = 1e-14;
  for (int m = 0; m <= m_max; ++m) {
    if (lo <= core_lo + tol && hi >= core_hi - tol) return m;
    const double flo = quad_map(a, lo);
    const double fhi = quad_map(a, hi);
    double nlo = std::min(flo, fhi);
    double nhi = std::max(flo, fhi);
    if (lo <= 0.0 && hi >= 0.0) nhi = 1.0;
    lo = nlo;
    hi = nhi;
  }
  return std::nullopt;
}

ConditionReport check_A4(const MapParams& params, int m_max, double probe_width) {
  const double core_lo = quad_map(params.a, 1.0);
  const double core_len = 1.0 - core_lo;
  if (m_max < 1) throw Error(ErrorKind::validation, "check_A4: m_max must be >= 1");
  if (!(probe_width > 0.0) || probe_width > core_len * (1.0 + 1e-12)) {
    throw Error(ErrorKind::validation, "check_A4: need 0 < probe_width <= |f^2 0 - f 0|");
  }
  ConditionReport r;
  r.condition = "A4";
  r.depth_checked = m_max;
  const auto probes = std::max<long>(1, static_cast<long>(std::floor(core_len / probe_width + 1e-9)));
  for (long i = 0; i < probes; ++i) {
    const double lo = core_lo + static_cast<double>(i) * probe_width;
    const double hi = std::min(1.0, lo + probe_width);
    const auto t = covering_time(params.a, lo, hi, m_max);
    const double margin = t ? static_cast<double>(m_max - *t) : kNegInf;
    r.margin_series.push_back(margin);
    if (i == 0 || margin < r.worst_margin) {
      r.worst_margin = margin;
      r.worst_n = t ? *t : -1;
    }
  }
  r.pass = r.worst_margin >= 0.0;
  return r;
}

ScanResult scan_parameters(double a_lo, double a_hi, double grid_step, const MapParams& tmpl,
                           const std::function<void(const ScanRow&)>& on_row,
                           const std::vector<double>& skip) {
  if (a_lo > a_hi) throw Error(ErrorKind::validation, "scan: a_lo must be <= a_hi");
  if (!(grid_step > 0.0)) throw Error(ErrorKind::validation, "scan: grid_step must be positive");
  ScanResult out;
  if (a_lo == a_hi) return out;
  std::vector<double> grid;
  for (long i = 0;; ++i) {
    const double a = a_lo + static_cast<double>(i) * grid_step;
    if (a > a_hi + grid_step * 1e-9) break;
    const double clamped = std::min(a, a_hi);
    const bool skipped = std::any_of(skip.begin(), skip.end(), [&](double s) {
      return std::abs(s - clamped) <= grid_step * 1e-6;
    });
    if (!skipped) grid.push_back(clamped);
  }
  out.rows.resize(grid.size());
  // Blocks keep memory of in-flight work bounded and let on_row stream results.
  constexpr std::size_t block = 256;
  for (std::size_t start = 0; start < grid.size(); start += block) {
    const std::size_t len = std::min(block, grid.size() - start);
    parallel_for(len, [&](std::size_t k) {
      const std::size_t i = start + k;
      MapParams p = tmpl;
      p.a = grid[i];
      const auto r2 = check_A2(p, false);
      const auto r3 = check_A3(p, false);
      out.rows[i] = ScanRow{grid[i], r2.pass, r3.pass, r2.worst_margin, r3.worst_margin};
    });
    for (std::size_t i = start; i < start + len; ++i) {
      if (on_row) on_row(out.rows[i]);
      if (out.rows[i].a2_pass && out.rows[i].a3_pass) out.survivors.push_back(out.rows[i].a);
    }
  }
  out.surviving_fraction =
      out.rows.empty() ? 0.0 : static_cast<double>(out.survivors.size()) / out.rows.size();
  return out;
}

}  // namespace ldplab
