#include "app.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <cstdio>
#include <sstream>

#include "CLI11.hpp"
#include "ldplab/conditions.hpp"
#include "ldplab/error.hpp"
#include "ldplab/ldp.hpp"
#include "ldplab/lemmas.hpp"
#include "ldplab/parallel.hpp"
#include "ldplab/partition.hpp"
#include "ldplab/thermo.hpp"

#ifndef LDPLAB_VERSION
#define LDPLAB_VERSION "0.0.0"
#endif

namespace ldplab::app {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

const std::string kVersion = std::string("v") + LDPLAB_VERSION;

json range(double lo, double hi, double step) { return json{{"lo", lo}, {"hi", hi}, {"step", step}}; }

Error invalid(const std::string& what) { return Error(ErrorKind::validation, what); }

// ---------------------------------------------------------------------------
// Formatting: shortest round-trip decimal, '.' separator, independent of the locale.

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (v == 0.0) return "0";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string num(long long v) { return std::to_string(v); }
std::string num(int v) { return std::to_string(v); }
std::string num(std::size_t v) { return std::to_string(v); }
std::string flag(bool v) { return v ? "1" : "0"; }

ojson finite_or_null(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

// ---------------------------------------------------------------------------
// Run context and artifact writers.

struct Context {
  std::string subcommand;
  json config;
  std::string hash;
  fs::path dir;
  bool csv = true;
  bool json_out = true;
  std::vector<std::string> artifacts;
  std::ostream* out = nullptr;
};

class CsvWriter {
 public:
  CsvWriter(Context& ctx, const std::string& name, const std::vector<std::string>& header)
      : enabled_(ctx.csv) {
    if (!enabled_) return;
    file_.open(ctx.dir / name, std::ios::binary | std::ios::trunc);
    if (!file_) throw Error(ErrorKind::validation, "cannot write " + (ctx.dir / name).string());
    file_ << "# manifest " << ctx.hash << '\n';
    row(header);
    ctx.artifacts.push_back(name);
  }

  void row(const std::vector<std::string>& cells) {
    if (!enabled_) return;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) file_ << ',';
      file_ << cells[i];
    }
    file_ << '\n';
  }

 private:
  bool enabled_;
  std::ofstream file_;
};

void write_json(Context& ctx, const std::string& name, const ojson& body) {
  if (!ctx.json_out) return;
  ojson doc;
  doc["manifest_hash"] = ctx.hash;
  for (const auto& [k, v] : body.items()) doc[k] = v;
  std::ofstream f(ctx.dir / name, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::validation, "cannot write " + (ctx.dir / name).string());
  f << doc.dump(2) << '\n';
  ctx.artifacts.push_back(name);
}

// ---------------------------------------------------------------------------
// Config access.

const json& at(const json& cfg, const std::string& dotted) {
  const json* node = &cfg;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) node = &node->at(part);
  return *node;
}

double getd(const json& cfg, const std::string& key) { return at(cfg, key).get<double>(); }
int geti(const json& cfg, const std::string& key) { return at(cfg, key).get<int>(); }
std::size_t getz(const json& cfg, const std::string& key) {
  const auto v = at(cfg, key).get<long long>();
  if (v < 0) throw invalid(key + " must be >= 0");
  return static_cast<std::size_t>(v);
}

std::vector<double> grid_of(const json& cfg, const std::string& key) {
  const double lo = getd(cfg, key + ".lo");
  const double hi = getd(cfg, key + ".hi");
  const double step = getd(cfg, key + ".step");
  if (!(step > 0.0) || !(hi >= lo)) throw invalid(key + ": need lo <= hi and step > 0");
  const long long count = std::llround((hi - lo) / step) + 1;
  if (count > 100000) throw invalid(key + ": more than 100000 grid points");
  std::vector<double> v;
  for (long long i = 0; i < count; ++i) v.push_back(lo + step * static_cast<double>(i));
  return v;
}

std::vector<int> ints_of(const json& cfg, const std::string& key) {
  return at(cfg, key).get<std::vector<int>>();
}

MapParams params_of(const json& cfg) {
  MapParams p;
  p.a = getd(cfg, "params.a");
  p.lambda = getd(cfg, "params.lambda");
  p.alpha = getd(cfg, "params.alpha");
  p.epsilon = getd(cfg, "params.epsilon");
  p.cap_n = geti(cfg, "params.capN");
  p.depth = geti(cfg, "params.depth");
  return p;
}

Interval window_of(const json& cfg, const MapParams& p) {
  const auto& w = at(cfg, "task.window");
  const double lo = w.at("lo").is_null() ? quad_map(p.a, 1.0) : w.at("lo").get<double>();
  const double hi = w.at("hi").is_null() ? 1.0 : w.at("hi").get<double>();
  if (!(lo < hi)) throw invalid("task.window: need lo < hi");
  return {lo, hi};
}

Observable observable_of(const json& cfg, const MapParams& p) {
  return builtin_observable(at(cfg, "task.observable").get<std::string>(), p.a);
}

PartitionOptions partition_options(const json& cfg) {
  PartitionOptions po;
  po.depth = geti(cfg, "budgets.partition_depth");
  po.max_elements = getz(cfg, "budgets.max_elements");
  if (po.depth < 1) throw invalid("budgets.partition_depth must be >= 1");
  return po;
}

LineageOptions lineage_options(const json& cfg) {
  LineageOptions lo;
  lo.samples = getz(cfg, "budgets.lineages");
  lo.horizon = geti(cfg, "budgets.horizon");
  lo.check_horizon = geti(cfg, "budgets.check_horizon");
  lo.backward_window = geti(cfg, "budgets.backward_window");
  lo.seed = at(cfg, "budgets.seed").get<std::uint64_t>();
  return lo;
}

std::uint64_t seed_of(const json& cfg) { return at(cfg, "budgets.seed").get<std::uint64_t>(); }

ojson report_json(const ConditionReport& r) {
  return ojson{{"condition", r.condition},     {"pass", r.pass},
               {"depth_checked", r.depth_checked}, {"worst_margin", finite_or_null(r.worst_margin)},
               {"worst_n", r.worst_n},          {"no_data", r.no_data}};
}

ojson invariant_json(const InvariantReport& r) {
  return ojson{{"name", r.name},       {"pass", r.pass},       {"worst", finite_or_null(r.worst)},
               {"bound", finite_or_null(r.bound)}, {"checked", r.checked}, {"detail", r.detail}};
}

ojson fit_json(const ExpFit& f) {
  return ojson{{"rate", f.rate}, {"intercept", f.intercept}, {"stderr", f.stderr_},
               {"n_lo", f.n_lo}, {"n_hi", f.n_hi}};
}

ojson measure_json(const MeasureApprox& m) {
  ojson means = ojson::object();
  for (const auto& [k, v] : m.observable_means) means[k] = v;
  return ojson{{"kind", to_string(m.kind)},
               {"m", m.m},
               {"atoms", m.points.size()},
               {"entropy_lb", m.entropy_lb},
               {"lyapunov", m.lyapunov},
               {"free_energy", m.free_energy},
               {"observable_means", means}};
}

// ---------------------------------------------------------------------------
// Subcommands.

int cmd_check(Context& ctx, const MapParams& p) {
  const auto a2 = check_A2(p);
  const auto a3 = check_A3(p);
  const auto a4 = check_A4(p, geti(ctx.config, "task.a4_m_max"), getd(ctx.config, "task.a4_probe"));
  CsvWriter csv(ctx, "conditions.csv", {"n", "a2_margin", "a3_margin"});
  const std::size_t rows = std::max(a2.margin_series.size(), a3.margin_series.size());
  for (std::size_t i = 0; i < rows; ++i) {
    csv.row({num(i + 1), i < a2.margin_series.size() ? num(a2.margin_series[i]) : "nan",
             i < a3.margin_series.size() ? num(a3.margin_series[i]) : "nan"});
  }
  write_json(ctx, "conditions.json", ojson{{"reports", {report_json(a2), report_json(a3), report_json(a4)}}});
  for (const auto* r : {&a2, &a3, &a4}) {
    *ctx.out << r->condition << ' ' << (r->pass ? "pass" : "fail") << " margin=" << num(r->worst_margin)
             << " n=" << r->worst_n << '\n';
  }
  return kOk;
}

int cmd_scan(Context& ctx, const MapParams& p) {
  CsvWriter csv(ctx, "scan.csv", {"a", "a2_pass", "a3_pass", "a2_margin", "a3_margin"});
  const auto res = scan_parameters(getd(ctx.config, "task.scan.lo"), getd(ctx.config, "task.scan.hi"),
                                   getd(ctx.config, "task.scan.step"), p, [&](const ScanRow& r) {
                                     csv.row({num(r.a), flag(r.a2_pass), flag(r.a3_pass), num(r.a2_margin),
                                              num(r.a3_margin)});
                                   });
  write_json(ctx, "scan.json", ojson{{"rows", res.rows.size()},
                                     {"survivors", res.survivors.size()},
                                     {"surviving_fraction", res.surviving_fraction}});
  *ctx.out << "scan: " << res.survivors.size() << " of " << res.rows.size() << " parameters survive\n";
  return kOk;
}

int cmd_table(Context& ctx, const MapParams& p) {
  const auto t = critical_table(p);
  auto cell = [](const std::vector<double>& v, int n, int from) {
    return n >= from && static_cast<std::size_t>(n) < v.size() ? num(v[static_cast<std::size_t>(n)]) : "nan";
  };
  CsvWriter csv(ctx, "table.csv", {"n", "c", "log_df", "log_d", "log_D", "log_delta", "delta"});
  for (int n = 0; n <= t.depth; ++n) {
    csv.row({num(n), cell(t.c, n, 0), cell(t.log_df, n, 0), cell(t.log_d, n, 0), cell(t.log_D, n, 1),
             cell(t.log_delta, n, 1), cell(t.delta, n, 1)});
  }
  const int N = default_cap_n(t);
  write_json(ctx, "table.json", ojson{{"depth", t.depth}, {"default_N", N}, {"delta_hat", t.delta_hat()}});
  *ctx.out << "table: depth " << t.depth << ", default N " << N << '\n';
  return kOk;
}

int cmd_partition(Context& ctx, const MapParams& p) {
  const PartitionOptions po = partition_options(ctx.config);
  PartitionEngine engine(p, po);
  engine.run_to(po.depth);
  CsvWriter csv(ctx, "stages.csv",
                {"n", "elements", "subdivided", "stops", "live_mass", "stopped_mass", "dropped_mass",
                 "deleted_mass", "glued", "orphans", "partial_pieces", "exactly_one_violations"});
  for (const auto& s : engine.stats()) {
    csv.row({num(s.n), num(s.elements), num(s.subdivided), num(s.stops), num(s.live_mass), num(s.stopped_mass),
             num(s.dropped_mass), num(s.deleted_mass), num(s.glued), num(s.orphans), num(s.partial_pieces),
             num(s.exactly_one_violations)});
  }
  const CarveResult carved = carve(engine);
  std::vector<InvariantReport> inv{verify_mass_balance(engine), verify_disjoint(engine),
                                   verify_bound_gap(engine), verify_bounded_sums(engine),
                                   verify_distortion(engine)};
  ojson invs = ojson::array();
  bool all = true;
  for (const auto& r : inv) {
    invs.push_back(invariant_json(r));
    all = all && r.pass;
  }
  const auto& g = engine.geometry();
  write_json(ctx, "ledger.json",
             ojson{{"geometry",
                    {{"N", g.N}, {"p_max", g.p_max}, {"delta", g.delta}, {"lambda_lo", g.lambda_lo},
                     {"lambda_hi", g.lambda_hi}}},
                   {"depth", po.depth},
                   {"carved_fraction_lower", carved.fraction_lower},
                   {"carved_fraction_upper", carved.fraction_upper},
                   {"stops", engine.stops().size()},
                   {"gaps", engine.gaps().size()},
                   {"dropped", engine.dropped().size()},
                   {"invariants", invs}});
  *ctx.out << "partition: depth " << po.depth << ", carved fraction in [" << num(carved.fraction_lower) << ", "
           << num(carved.fraction_upper) << "], invariants " << (all ? "pass" : "fail") << '\n';
  return all ? kOk : kComputation;
}

InducedMap run_induce(Context& ctx, const MapParams& p) {
  const auto geo = make_geometry(p, partition_options(ctx.config));
  return induce(geo, lineage_options(ctx.config));
}

void write_tail(Context& ctx, const InducedMap& im) {
  CsvWriter csv(ctx, "tail.csv", {"n", "mass", "log_mass"});
  for (std::size_t i = 0; i < im.n_grid.size(); ++i) {
    csv.row({num(im.n_grid[i]), num(im.tail[i]), num(im.tail[i] > 0.0 ? std::log(im.tail[i]) : std::nan(""))});
  }
}

int cmd_induce(Context& ctx, const MapParams& p) {
  const InducedMap im = run_induce(ctx, p);
  write_tail(ctx, im);
  std::map<int, std::size_t> hist;
  for (int r : im.r_values) ++hist[r];
  CsvWriter rcsv(ctx, "returns.csv", {"r", "count"});
  for (const auto& [r, c] : hist) rcsv.row({num(r), num(c)});
  double mean_r = 0.0;
  for (int r : im.r_values) mean_r += r;
  if (!im.r_values.empty()) mean_r /= static_cast<double>(im.r_values.size());
  write_json(ctx, "induce.json",
             ojson{{"samples", im.samples},
                   {"carved_samples", im.carved_samples},
                   {"horizon", im.horizon},
                   {"carved_fraction", im.carved_fraction},
                   {"unresolved_fraction", im.unresolved_fraction},
                   {"regular_return_fraction", im.regular_return_fraction},
                   {"plus_fraction", im.plus_fraction},
                   {"min_r", im.min_r},
                   {"mean_r", mean_r},
                   {"fit", fit_json(im.fit)}});
  *ctx.out << "induce: carved " << num(im.carved_fraction) << ", unresolved " << num(im.unresolved_fraction)
           << ", tail rate " << num(im.fit.rate) << '\n';
  return kOk;
}

int cmd_tower(Context& ctx, const MapParams& p) {
  const InducedMap im = run_induce(ctx, p);
  const Tower t = build_tower(im, geti(ctx.config, "budgets.kb_steps"));
  CsvWriter csv(ctx, "tower.csv", {"level", "level_mass", "mu_hat"});
  for (std::size_t l = 0; l < t.level_mass.size(); ++l) {
    csv.row({num(l), num(t.level_mass[l]), l < t.mu_hat.size() ? num(t.mu_hat[l]) : "nan"});
  }
  write_json(ctx, "tower.json",
             ojson{{"mean_return", t.mean_return},
                   {"mean_return_direct", t.mean_return_direct},
                   {"rho", t.rho},
                   {"c1", t.c1},
                   {"c2", t.c2},
                   {"plus_weight", t.plus_weight},
                   {"kb_steps", t.kb_steps},
                   {"levels", t.level_mass.size()}});
  *ctx.out << "tower: " << t.level_mass.size() << " levels, mean return " << num(t.mean_return) << '\n';
  return kOk;
}

int cmd_horseshoe(Context& ctx, const MapParams& p) {
  const Horseshoe h = find_horseshoe(p, geti(ctx.config, "budgets.m"), window_of(ctx.config, p));
  const CylinderTree tree = cylinders(h, geti(ctx.config, "budgets.k"));
  CsvWriter csv(ctx, "cylinders.csv", {"code", "word", "lo", "hi", "length", "periodic_point"});
  for (const auto& c : tree.words) {
    std::string word;
    for (int a : tree.word(c.code)) {
      if (!word.empty()) word += '.';
      word += std::to_string(a);
    }
    csv.row({num(static_cast<std::size_t>(c.code)), word, num(c.interval.lo), num(c.interval.hi),
             num(c.interval.length()), num(c.periodic_point)});
  }
  ojson branches = ojson::array();
  for (const auto& b : h.branches) branches.push_back({b.domain.lo, b.domain.hi});
  write_json(ctx, "horseshoe.json",
             ojson{{"m", h.m},
                   {"q", h.q()},
                   {"window", {h.window.lo, h.window.hi}},
                   {"branches", branches},
                   {"expansion_c", h.expansion_c},
                   {"expansion_kappa", h.expansion_kappa},
                   {"min_log_dg", h.min_log_dg},
                   {"disjoint", h.disjoint},
                   {"interior", h.interior},
                   {"uniformly_expanding", h.uniformly_expanding},
                   {"k", tree.depth},
                   {"cylinder_ratio_bound", cylinder_ratio_bound(tree)}});
  *ctx.out << "horseshoe: m=" << h.m << " q=" << h.q() << '\n';
  return kOk;
}

int cmd_equilibrium(Context& ctx, const MapParams& p) {
  const Observable phi = observable_of(ctx.config, p);
  const Horseshoe h = find_horseshoe(p, geti(ctx.config, "budgets.m"), window_of(ctx.config, p));
  const CylinderTree tree = cylinders(h, geti(ctx.config, "budgets.k"));
  const MeasureApprox nu = equilibrium_nu_k(h, tree, {phi});
  const MeasureApprox spread = spread_measure(h, nu);
  const auto orbits = periodic_orbit_survey(p, geti(ctx.config, "budgets.period_max"), {phi});
  CsvWriter csv(ctx, "orbits.csv", {"period", "point", "lyapunov", "free_energy", "mean"});
  double worst = spread.free_energy;
  for (const auto& o : orbits) {
    csv.row({num(o.points.size()), num(o.points.front()), num(o.lyapunov), num(o.free_energy),
             num(o.observable_means.at(phi.id))});
    worst = std::max(worst, o.free_energy);
  }
  write_json(ctx, "equilibrium.json",
             ojson{{"observable", phi.id},
                   {"nu_k", measure_json(nu)},
                   {"spread", measure_json(spread)},
                   {"periodic_orbits", orbits.size()},
                   {"max_free_energy", worst}});
  *ctx.out << "equilibrium: proxy " << num(nu.free_energy) << ", spread free energy " << num(spread.free_energy)
           << ", " << orbits.size() << " periodic orbits\n";
  return kOk;
}

CgfCurve run_cgf(Context& ctx, const MapParams& p, const Observable& phi) {
  const auto& c = ctx.config;
  return pressure_cgf(p, phi, grid_of(c, "budgets.t_grid"), ints_of(c, "budgets.cgf_n_grid"),
                      getz(c, "budgets.cgf_samples"), seed_of(c) + 1, geti(c, "budgets.burn_in"));
}

int cmd_pressure(Context& ctx, const MapParams& p) {
  const Observable phi = observable_of(ctx.config, p);
  const Horseshoe h = find_horseshoe(p, geti(ctx.config, "budgets.m"), window_of(ctx.config, p));
  const CylinderTree tree = cylinders(h, geti(ctx.config, "budgets.k"));
  const auto curve = pressure_curve(h, tree, phi, grid_of(ctx.config, "budgets.s_grid"));
  CsvWriter hcsv(ctx, "pressure.csv", {"s", "p", "t", "free_energy"});
  for (const auto& pt : curve) hcsv.row({num(pt.s), num(pt.p), num(pt.t), num(pt.free_energy)});
  const CgfCurve cgf = run_cgf(ctx, p, phi);
  CsvWriter ccsv(ctx, "cgf.csv", {"t", "P", "stderr"});
  for (std::size_t j = 0; j < cgf.t_grid.size(); ++j) ccsv.row({num(cgf.t_grid[j]), num(cgf.p[j]), num(cgf.stderr_[j])});
  write_json(ctx, "pressure.json",
             ojson{{"observable", phi.id},
                   {"cgf_convex", cgf.convex},
                   {"sample_mean", cgf.sample_mean},
                   {"warnings", cgf.warnings}});
  *ctx.out << "pressure: " << curve.size() << " horseshoe points, " << cgf.t_grid.size() << " CGF points"
           << (cgf.convex ? "" : " (CGF not convex)") << '\n';
  return kOk;
}

void write_rate(Context& ctx, const RateSeries& rs) {
  CsvWriter csv(ctx, "rate.csv", {"n", "estimate", "ci_lo", "ci_hi", "censored", "hits"});
  for (std::size_t i = 0; i < rs.n_grid.size(); ++i) {
    csv.row({num(rs.n_grid[i]), num(rs.values[i]), num(rs.ci_lo[i]), num(rs.ci_hi[i]), flag(rs.censored[i]),
             num(rs.hits[i])});
  }
}

int cmd_rate(Context& ctx, const MapParams& p) {
  const auto& c = ctx.config;
  const Observable phi = observable_of(c, p);
  const RateSeries rs = deviation_rate(p, {Threshold{phi, getd(c, "task.threshold")}}, ints_of(c, "budgets.n_grid"),
                                       getz(c, "budgets.samples"), seed_of(c), geti(c, "budgets.burn_in"));
  write_rate(ctx, rs);
  write_json(ctx, "rate.json", ojson{{"observable", phi.id},
                                     {"threshold", getd(c, "task.threshold")},
                                     {"samples", rs.sample_size},
                                     {"rate", rs.fit.rate},
                                     {"intercept", rs.fit.intercept},
                                     {"stderr", rs.fit.stderr_}});
  *ctx.out << "rate: " << num(rs.fit.rate) << " +- " << num(rs.fit.stderr_) << '\n';
  return kOk;
}

HorseshoeSpec horseshoe_spec(const json& c) {
  HorseshoeSpec spec;
  spec.m = geti(c, "budgets.m");
  spec.k = geti(c, "budgets.k");
  const auto& w = at(c, "task.window");
  if (!w.at("lo").is_null()) spec.window_lo = w.at("lo").get<double>();
  if (!w.at("hi").is_null()) spec.window_hi = w.at("hi").get<double>();
  spec.s_grid = grid_of(c, "budgets.s_grid");
  return spec;
}

int cmd_envelope(Context& ctx, const MapParams& p) {
  const auto& c = ctx.config;
  const Observable phi = observable_of(c, p);
  const auto t_env = grid_of(c, "task.envelope_t");
  std::optional<LegendreResult> lt;
  if (getz(c, "budgets.cgf_samples") > 0) {
    const CgfCurve cgf = run_cgf(ctx, p, phi);
    const auto [first, last] = reliable_range(cgf);
    if (last - first >= 2) {
      lt = legendre_transform({cgf.t_grid.begin() + first, cgf.t_grid.begin() + last},
                              {cgf.p.begin() + first, cgf.p.begin() + last}, t_env);
    }
  }
  const RateEnvelope env = variational_envelope(p, phi, t_env, {horseshoe_spec(c)}, geti(c, "budgets.period_max"),
                                                lt ? &*lt : nullptr);
  CsvWriter csv(ctx, "envelope.csv", {"t", "upper", "lower", "legendre"});
  for (std::size_t i = 0; i < env.t_grid.size(); ++i) {
    csv.row({num(env.t_grid[i]), num(env.upper[i]), num(env.lower[i]), num(env.legendre[i])});
  }
  write_json(ctx, "envelope.json", ojson{{"observable", phi.id}, {"raw_points", env.raw_t.size()}});
  *ctx.out << "envelope: " << env.t_grid.size() << " points\n";
  return kOk;
}

int cmd_crosscheck(Context& ctx, const MapParams& p) {
  const auto& c = ctx.config;
  const Observable phi = observable_of(c, p);
  CrosscheckBudgets b;
  b.n_grid = ints_of(c, "budgets.n_grid");
  b.samples = getz(c, "budgets.samples");
  b.burn_in = geti(c, "budgets.burn_in");
  b.seed = seed_of(c);
  b.cgf_n_grid = ints_of(c, "budgets.cgf_n_grid");
  b.cgf_samples = getz(c, "budgets.cgf_samples");
  b.cgf_t_grid = grid_of(c, "budgets.t_grid");
  b.horseshoes = {horseshoe_spec(c)};
  b.period_max = geti(c, "budgets.period_max");
  b.tol_floor = getd(c, "budgets.tol_floor");
  const double threshold = getd(c, "task.threshold");
  const CrosscheckReport rep = ldp_crosscheck(p, phi, threshold, b);
  if (!rep.series.n_grid.empty()) write_rate(ctx, rep.series);
  write_json(ctx, "crosscheck.json",
             ojson{{"observable", phi.id},
                   {"threshold", threshold},
                   {"empirical", rep.empirical},
                   {"empirical_err", rep.empirical_err},
                   {"variational", rep.variational},
                   {"variational_err", rep.variational_err},
                   {"legendre", rep.legendre},
                   {"legendre_err", rep.legendre_err},
                   {"tolerance", rep.tolerance},
                   {"pass", rep.pass},
                   {"inconclusive", rep.inconclusive},
                   {"message", rep.message}});
  *ctx.out << "crosscheck: empirical " << num(rep.empirical) << ", variational " << num(rep.variational)
           << ", legendre " << num(rep.legendre) << ", tolerance " << num(rep.tolerance) << ": " << rep.message
           << '\n';
  if (rep.inconclusive) return kInconclusive;
  return rep.pass ? kOk : kComputation;
}

int cmd_lemmas(Context& ctx, const MapParams& p) {
  const auto& c = ctx.config;
  LemmaOptions o;
  o.samples = getz(c, "budgets.lemma_samples");
  o.seed = seed_of(c);
  o.partition_depth = geti(c, "budgets.partition_depth");
  const std::string which = at(c, "task.lemma").get<std::string>();
  std::vector<LemmaReport> reports;
  if (which == "all") {
    reports = verify_all_lemmas(p, o);
  } else {
    reports.push_back(verify_core_lemma(lemma_from_string(which), p, o));
  }
  CsvWriter csv(ctx, "lemmas.csv", {"lemma", "pass", "vacuous", "worst", "bound", "relation", "checked"});
  ojson rows = ojson::array();
  bool all = true;
  for (const auto& r : reports) {
    csv.row({r.lemma, flag(r.pass), flag(r.vacuous), num(r.worst), num(r.bound), r.upper ? "le" : "ge",
             num(r.checked)});
    rows.push_back(ojson{{"lemma", r.lemma},
                         {"pass", r.pass},
                         {"vacuous", r.vacuous},
                         {"worst", finite_or_null(r.worst)},
                         {"bound", finite_or_null(r.bound)},
                         {"relation", r.upper ? "le" : "ge"},
                         {"checked", r.checked},
                         {"detail", r.detail}});
    all = all && r.pass;
    *ctx.out << r.lemma << ' ' << (r.pass ? "pass" : "FAIL") << " worst=" << num(r.worst) << '\n';
  }
  write_json(ctx, "lemmas.json", ojson{{"all_pass", all}, {"rows", rows}});
  return all ? kOk : kComputation;
}

using Command = std::function<int(Context&, const MapParams&)>;

const std::vector<std::pair<std::string, std::pair<std::string, Command>>>& registry() {
  static const std::vector<std::pair<std::string, std::pair<std::string, Command>>> r{
      {"check", {"A2/A3/A4 certificates to the configured depth", cmd_check}},
      {"scan", {"A2/A3 over a parameter grid", cmd_scan}},
      {"table", {"critical-orbit schedule dump", cmd_table}},
      {"partition", {"partition stages, carve bounds and invariants", cmd_partition}},
      {"induce", {"induced map return-time tail", cmd_induce}},
      {"tower", {"tower levels over the induced map", cmd_tower}},
      {"horseshoe", {"horseshoe and cylinder tree", cmd_horseshoe}},
      {"equilibrium", {"equilibrium proxies and periodic orbits", cmd_equilibrium}},
      {"pressure", {"tilted pressure curve and empirical CGF", cmd_pressure}},
      {"rate", {"Monte Carlo deviation rate", cmd_rate}},
      {"envelope", {"variational rate envelope", cmd_envelope}},
      {"crosscheck", {"empirical, variational and Legendre rates side by side", cmd_crosscheck}},
      {"verify-lemmas", {"every lemma verifier as a pass/fail matrix", cmd_lemmas}},
  };
  return r;
}

// Leaves of the default config, by dotted path.
void leaves(const json& node, const std::string& prefix, std::vector<std::string>& out) {
  for (const auto& [k, v] : node.items()) {
    const std::string path = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      leaves(v, path, out);
    } else {
      out.push_back(path);
    }
  }
}

// Checks v against the type of the default slot and returns the value to store.
json typed(const json& slot, const json& v, const std::string& path) {
  auto integral = [](const json& x) {
    return x.is_number_integer() || (x.is_number_float() && std::isfinite(x.get<double>()) &&
                                      x.get<double>() == std::floor(x.get<double>()) &&
                                      std::abs(x.get<double>()) < 9.0e15);
  };
  auto as_int = [](const json& x) {
    if (x.is_number_unsigned()) return json(x.get<std::uint64_t>());
    if (x.is_number_integer()) return json(x.get<long long>());
    return json(static_cast<long long>(x.get<double>()));
  };
  if (slot.is_null()) {
    if (v.is_null()) return v;
    if (v.is_number()) return json(v.get<double>());
    throw invalid(path + " must be a number or null");
  }
  if (slot.is_number_integer()) {
    if (!integral(v)) throw invalid(path + " must be an integer");
    return as_int(v);
  }
  if (slot.is_number_float()) {
    if (!v.is_number()) throw invalid(path + " must be a number");
    return json(v.get<double>());
  }
  if (slot.is_boolean()) {
    if (!v.is_boolean()) throw invalid(path + " must be true or false");
    return v;
  }
  if (slot.is_string()) {
    if (!v.is_string()) throw invalid(path + " must be a string");
    return v;
  }
  if (slot.is_array()) {
    if (!v.is_array()) throw invalid(path + " must be an array");
    json out = json::array();
    const json proto = slot.empty() ? json(0.0) : slot.front();
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(typed(proto, v[i], path + "[" + std::to_string(i) + "]"));
    return out;
  }
  throw invalid(path + ": unsupported slot");
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation:
      return kValidation;
    case ErrorKind::inconclusive:
    case ErrorKind::all_censored:
    case ErrorKind::coverage:
      return kInconclusive;
    default:
      return kComputation;
  }
}

}  // namespace

json default_config() {
  json c;
  c["params"] = {{"a", 2.0},          {"lambda", kDefaultLambda}, {"alpha", kDefaultAlpha},
                 {"epsilon", kDefaultEpsilon}, {"capN", 0},           {"depth", 200}};
  c["budgets"] = {{"seed", 1},
                  {"samples", 1000000},
                  {"n_grid", {50, 100, 150, 200}},
                  {"burn_in", kDefaultBurnIn},
                  {"cgf_samples", 200000},
                  {"cgf_n_grid", {100, 200}},
                  {"t_grid", range(-1.0, 1.0, 0.025)},
                  {"s_grid", range(-4.0, 4.0, 0.1)},
                  {"k", 10},
                  {"m", 1},
                  {"period_max", 12},
                  {"tol_floor", 0.05},
                  {"partition_depth", 30},
                  {"max_elements", 300000},
                  {"lineages", 1000},
                  {"horizon", 20000},
                  {"check_horizon", 1500},
                  {"backward_window", 32},
                  {"kb_steps", 3},
                  {"lemma_samples", 1000}};
  c["task"] = {{"observable", "x"},
               {"threshold", 0.1},
               {"window", {{"lo", nullptr}, {"hi", nullptr}}},
               {"lemma", "all"},
               {"scan", range(1.99, 2.0, 1e-3)},
               {"envelope_t", range(-0.4, 0.4, 0.05)},
               {"a4_m_max", 64},
               {"a4_probe", 0.05}};
  c["outputs"] = {{"directory", "out"}, {"formats", {"csv", "json"}}};
  return c;
}

void merge_config(json& dst, const json& src, const std::string& prefix) {
  if (!src.is_object()) throw invalid((prefix.empty() ? std::string("config") : prefix) + " must be an object");
  for (const auto& [k, v] : src.items()) {
    const std::string path = prefix.empty() ? k : prefix + "." + k;
    if (!dst.contains(k)) throw invalid("unknown config key '" + path + "'");
    json& slot = dst[k];
    if (slot.is_object()) {
      merge_config(slot, v, path);
    } else {
      slot = typed(slot, v, path);
    }
  }
}

void apply_override(json& config, const std::string& key, const std::string& value) {
  std::string path = key;
  if (key.find('.') == std::string::npos) {
    std::vector<std::string> all;
    leaves(config, "", all);
    std::vector<std::string> hits;
    for (const auto& l : all) {
      const auto dot = l.rfind('.');
      if (l.substr(dot == std::string::npos ? 0 : dot + 1) == key) hits.push_back(l);
    }
    if (hits.empty()) throw invalid("unknown option --" + key);
    if (hits.size() > 1) throw invalid("ambiguous option --" + key + "; use the dotted name");
    path = hits.front();
  }
  json v = json::parse(value, nullptr, false);
  if (v.is_discarded()) v = value;
  // rebuild the nested object for merge_config so unknown keys are rejected uniformly
  json patch = v;
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  const json* slot = &config;
  for (const auto& part : parts) {
    if (!slot->is_object() || !slot->contains(part)) throw invalid("unknown config key '" + path + "'");
    slot = &slot->at(part);
  }
  if (slot->is_string() && !patch.is_string()) patch = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge_config(config, patch);
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const std::string& subcommand, const json& config) {
  json hashed = config;
  hashed.erase("outputs");
  return fnv1a_hex(json{{"subcommand", subcommand}, {"config", hashed}, {"version", kVersion}}.dump());
}

std::vector<std::string> subcommands() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  // Dotted overrides are peeled off before CLI11 sees the command line.
  static const std::vector<std::string> known{"--config", "--out", "--seed", "--threads", "--help"};
  std::vector<std::string> cli{args.empty() ? std::string("ldplab") : args.front()};
  std::vector<std::pair<std::string, std::string>> overrides;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0 || a.size() == 2) {
      cli.push_back(a);
      continue;
    }
    const auto eq = a.find('=');
    const std::string name = a.substr(0, eq);
    if (std::find(known.begin(), known.end(), name) != known.end()) {
      cli.push_back(a);
      continue;
    }
    if (eq != std::string::npos) {
      overrides.emplace_back(name.substr(2), a.substr(eq + 1));
    } else if (i + 1 < args.size()) {
      overrides.emplace_back(name.substr(2), args[++i]);
    } else {
      err << "error: option " << a << " needs a value\n";
      return kValidation;
    }
  }

  CLI::App app{"ldplab: finite-depth experiments on the quadratic family"};
  app.set_version_flag("--version", kVersion);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  app.add_option("--config", config_path, "JSON config or an emitted manifest");
  app.add_option("--out", out_dir, "output directory (outputs.directory)");
  app.add_option("--seed", seed, "base seed (budgets.seed)");
  app.add_option("--threads", threads, "worker cap, 0 = all cores");
  app.require_subcommand(1, 1);
  app.footer("Any config value can be set with --<dotted.name> VALUE, e.g. --params.epsilon 0.01 or --a 1.99.");
  for (const auto& [name, entry] : registry()) app.add_subcommand(name, entry.first)->fallthrough();

  std::vector<const char*> argv;
  for (const auto& s : cli) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::Success&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
  const std::string subcommand = app.get_subcommands().front()->get_name();

  Context ctx;
  ctx.subcommand = subcommand;
  ctx.out = &out;
  try {
    ctx.config = default_config();
    if (!config_path.empty()) {
      std::ifstream f(config_path, std::ios::binary);
      if (!f) throw invalid("cannot read config " + config_path);
      json doc = json::parse(f, nullptr, false);
      if (doc.is_discarded()) throw invalid("config " + config_path + " is not valid JSON");
      if (doc.is_object() && doc.contains("config_hash") && doc.contains("config")) doc = doc["config"];
      merge_config(ctx.config, doc);
    }
    for (const auto& [k, v] : overrides) apply_override(ctx.config, k, v);
    if (seed) ctx.config["budgets"]["seed"] = *seed;
    if (!out_dir.empty()) ctx.config["outputs"]["directory"] = out_dir;
    const MapParams params = params_of(ctx.config);
    params.validate();
    for (const auto& f : ctx.config["outputs"]["formats"]) {
      if (f != "csv" && f != "json") throw invalid("outputs.formats: unknown format " + f.dump());
    }
    const auto& formats = ctx.config["outputs"]["formats"];
    ctx.csv = std::find(formats.begin(), formats.end(), "csv") != formats.end();
    ctx.json_out = std::find(formats.begin(), formats.end(), "json") != formats.end();
    ctx.hash = config_hash(subcommand, ctx.config);
    ctx.dir = ctx.config["outputs"]["directory"].get<std::string>();
    std::error_code ec;
    fs::create_directories(ctx.dir, ec);
    if (ec) throw invalid("cannot create " + ctx.dir.string() + ": " + ec.message());
    set_max_threads(threads);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }

  int code = kOk;
  std::string message;
  try {
    const auto it = std::find_if(registry().begin(), registry().end(),
                                 [&](const auto& r) { return r.first == subcommand; });
    code = it->second.second(ctx, params_of(ctx.config));
  } catch (const Error& e) {
    message = e.what();
    code = exit_code_for(e.kind());
  } catch (const std::exception& e) {
    message = e.what();
    code = kComputation;
  }
  if (!message.empty()) err << "error: " << message << '\n';

  ojson manifest;
  manifest["manifest_hash"] = ctx.hash;
  manifest["tool"] = "ldplab";
  manifest["version"] = kVersion;
  manifest["subcommand"] = subcommand;
  manifest["config_hash"] = ctx.hash;
  manifest["seed"] = ctx.config["budgets"]["seed"];
  manifest["config"] = ojson::parse(ctx.config.dump());
  manifest["artifacts"] = ctx.artifacts;
  manifest["exit_code"] = code;
  if (!message.empty()) manifest["error"] = message;
  std::ofstream mf(ctx.dir / "manifest.json", std::ios::binary | std::ios::trunc);
  mf << manifest.dump(2) << '\n';
  return code;
}

}  // namespace ldplab::app
