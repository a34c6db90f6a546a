#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "app.hpp"
#include "ldplab/conditions.hpp"
#include "ldplab/error.hpp"
#include "ldplab/ldp.hpp"
#include "ldplab/lemmas.hpp"
#include "ldplab/map_core.hpp"
#include "ldplab/partition.hpp"
#include "ldplab/thermo.hpp"

namespace py = pybind11;
using namespace ldplab;

namespace {

MapParams make_params(double a, double lambda, double alpha, double epsilon, int cap_n, int depth) {
  MapParams p;
  p.a = a;
  p.lambda = lambda;
  p.alpha = alpha;
  p.epsilon = epsilon;
  p.cap_n = cap_n;
  p.depth = depth;
  p.validate();
  return p;
}

py::dict condition_dict(const ConditionReport& r) {
  py::dict d;
  d["condition"] = r.condition;
  d["pass"] = r.pass;
  d["depth_checked"] = r.depth_checked;
  d["worst_margin"] = r.worst_margin;
  d["worst_n"] = r.worst_n;
  d["margin_series"] = r.margin_series;
  d["no_data"] = r.no_data;
  return d;
}

py::dict measure_dict(const MeasureApprox& m) {
  py::dict d;
  d["kind"] = to_string(m.kind);
  d["points"] = m.points;
  d["weights"] = m.weights;
  d["m"] = m.m;
  d["entropy_lb"] = m.entropy_lb;
  d["lyapunov"] = m.lyapunov;
  d["observable_means"] = m.observable_means;
  d["free_energy"] = m.free_energy;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Quadratic-map dynamics, thermodynamic proxies and large-deviation estimators";

  static py::exception<Error> error(m, "LdplabError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetObject(error.ptr(), py::make_tuple(std::string(to_string(e.kind())), e.what()).ptr());
    }
  });

  py::class_<MapParams>(m, "MapParams")
      .def(py::init(&make_params), py::arg("a") = 2.0, py::arg("lambda_") = kDefaultLambda,
           py::arg("alpha") = kDefaultAlpha, py::arg("epsilon") = kDefaultEpsilon, py::arg("cap_n") = 0,
           py::arg("depth") = 200)
      .def_readwrite("a", &MapParams::a)
      .def_readwrite("lambda_", &MapParams::lambda)
      .def_readwrite("alpha", &MapParams::alpha)
      .def_readwrite("epsilon", &MapParams::epsilon)
      .def_readwrite("cap_n", &MapParams::cap_n)
      .def_readwrite("depth", &MapParams::depth)
      .def("validate", &MapParams::validate);

  m.def("critical_orbit", &critical_orbit, py::arg("a"), py::arg("length"));
  m.def(
      "critical_table",
      [](const MapParams& p) {
        const auto t = critical_table(p);
        py::dict d;
        d["c"] = t.c;
        d["log_df"] = t.log_df;
        d["log_d"] = t.log_d;
        d["log_D"] = t.log_D;
        d["D"] = t.D;
        d["log_delta"] = t.log_delta;
        d["delta"] = t.delta;
        d["default_N"] = default_cap_n(t);
        return d;
      },
      py::arg("params"));
  m.def("check_A2", [](const MapParams& p) { return condition_dict(check_A2(p)); }, py::arg("params"));
  m.def("check_A3", [](const MapParams& p) { return condition_dict(check_A3(p)); }, py::arg("params"));
  m.def(
      "check_A4", [](const MapParams& p, int m_max, double w) { return condition_dict(check_A4(p, m_max, w)); },
      py::arg("params"), py::arg("m_max") = 64, py::arg("probe_width") = 0.05);

  m.def(
      "sample_mu",
      [](const MapParams& p, std::size_t count, int burn_in, std::uint64_t seed) {
        py::gil_scoped_release release;
        return sample_mu(p, count, burn_in, seed);
      },
      py::arg("params"), py::arg("count"), py::arg("burn_in") = kDefaultBurnIn, py::arg("seed") = 1);
  m.def(
      "birkhoff_mean",
      [](const MapParams& p, const std::string& phi, std::size_t count, int burn_in, std::uint64_t seed) {
        BirkhoffEstimate e;
        {
          py::gil_scoped_release release;
          e = birkhoff_mean(p, builtin_observable(phi, p.a), count, burn_in, seed);
        }
        return py::make_tuple(e.mean, e.stderr_);
      },
      py::arg("params"), py::arg("observable"), py::arg("count"), py::arg("burn_in") = kDefaultBurnIn,
      py::arg("seed") = 1);

  m.def(
      "deviation_rate",
      [](const MapParams& p, const std::string& phi, double b, std::vector<int> n_grid, std::size_t samples,
         std::uint64_t seed) {
        RateSeries r;
        {
          py::gil_scoped_release release;
          r = deviation_rate(p, {{builtin_observable(phi, p.a), b}}, std::move(n_grid), samples, seed);
        }
        py::dict d;
        d["n"] = r.n_grid;
        d["estimate"] = r.values;
        d["ci_lo"] = r.ci_lo;
        d["ci_hi"] = r.ci_hi;
        d["censored"] = r.censored;
        d["hits"] = r.hits;
        d["rate"] = r.fit.rate;
        d["rate_stderr"] = r.fit.stderr_;
        return d;
      },
      py::arg("params"), py::arg("observable"), py::arg("threshold"), py::arg("n_grid"), py::arg("samples"),
      py::arg("seed") = 1);
  m.def(
      "pressure_cgf",
      [](const MapParams& p, const std::string& phi, std::vector<double> t_grid, std::vector<int> n_grid,
         std::size_t samples, std::uint64_t seed) {
        CgfCurve c;
        {
          py::gil_scoped_release release;
          c = pressure_cgf(p, builtin_observable(phi, p.a), std::move(t_grid), std::move(n_grid), samples, seed);
        }
        const auto [first, last] = reliable_range(c);
        py::dict d;
        d["t"] = c.t_grid;
        d["p"] = c.p;
        d["stderr"] = c.stderr_;
        d["ess"] = c.ess;
        d["reliable"] = py::make_tuple(first, last);
        d["convex"] = c.convex;
        return d;
      },
      py::arg("params"), py::arg("observable"), py::arg("t_grid"), py::arg("n_grid"), py::arg("samples"),
      py::arg("seed") = 1);
  m.def(
      "legendre_transform",
      [](const std::vector<double>& t, const std::vector<double>& p, const std::vector<double>& s) {
        const auto r = legendre_transform(t, p, s);
        py::dict d;
        d["s"] = r.s_grid;
        d["rate"] = r.rate;
        d["argmax_t"] = r.argmax_t;
        d["endpoint"] = r.endpoint;
        d["repair_magnitude"] = r.repair_magnitude;
        return d;
      },
      py::arg("t_grid"), py::arg("p"), py::arg("s_grid"));
  m.def(
      "ldp_crosscheck",
      [](const MapParams& p, const std::string& phi, double b, std::size_t samples, std::size_t cgf_samples,
         std::uint64_t seed) {
        CrosscheckBudgets budgets;
        budgets.samples = samples;
        budgets.cgf_samples = cgf_samples;
        budgets.seed = seed;
        CrosscheckReport r;
        {
          py::gil_scoped_release release;
          r = ldp_crosscheck(p, builtin_observable(phi, p.a), b, budgets);
        }
        py::dict d;
        d["empirical"] = r.empirical;
        d["empirical_err"] = r.empirical_err;
        d["variational"] = r.variational;
        d["variational_err"] = r.variational_err;
        d["legendre"] = r.legendre;
        d["legendre_err"] = r.legendre_err;
        d["tolerance"] = r.tolerance;
        d["pass"] = r.pass;
        d["inconclusive"] = r.inconclusive;
        d["message"] = r.message;
        return d;
      },
      py::arg("params"), py::arg("observable"), py::arg("threshold"), py::arg("samples") = 1000000,
      py::arg("cgf_samples") = 200000, py::arg("seed") = 1);

  m.def(
      "linear_toy_free_energy",
      [](const std::vector<double>& slopes, int k) {
        const Horseshoe h = linear_horseshoe(slopes);
        return equilibrium_nu_k(h, cylinders(h, k)).free_energy;
      },
      py::arg("slopes"), py::arg("k") = 10);
  m.def(
      "horseshoe_branches",
      [](const MapParams& p, int m_iter, double lo, double hi) {
        const Horseshoe h = find_horseshoe(p, m_iter, {lo, hi});
        std::vector<std::pair<double, double>> out;
        for (const auto& b : h.branches) out.emplace_back(b.domain.lo, b.domain.hi);
        return out;
      },
      py::arg("params"), py::arg("m"), py::arg("lo"), py::arg("hi"));
  m.def(
      "periodic_orbits",
      [](const MapParams& p, int period_max) {
        py::list out;
        for (const auto& o : periodic_orbit_survey(p, period_max, {builtin_observable("x", p.a)})) {
          out.append(measure_dict(o));
        }
        return out;
      },
      py::arg("params"), py::arg("period_max"));

  m.def(
      "verify_lemma",
      [](const std::string& name, const MapParams& p, std::size_t samples, std::uint64_t seed) {
        LemmaOptions o;
        o.samples = samples;
        o.seed = seed;
        const auto r = verify_core_lemma(lemma_from_string(name), p, o);
        py::dict d;
        d["lemma"] = r.lemma;
        d["pass"] = r.pass;
        d["vacuous"] = r.vacuous;
        d["worst"] = r.worst;
        d["bound"] = r.bound;
        d["relation"] = r.upper ? "le" : "ge";
        d["checked"] = r.checked;
        return d;
      },
      py::arg("lemma"), py::arg("params"), py::arg("samples") = 1000, py::arg("seed") = 1);
  m.def(
      "carved_fraction",
      [](const MapParams& p, int depth) {
        PartitionOptions po;
        po.depth = depth;
        PartitionEngine engine(p, po);
        engine.run_to(depth);
        const CarveResult c = carve(engine);
        return py::make_tuple(c.fraction_lower, c.fraction_upper);
      },
      py::arg("params"), py::arg("depth"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> full{"ldplab"};
        full.insert(full.end(), args.begin(), args.end());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = app::run(full, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
