// Python bindings: symbols built from JSON term lists, the calculus operations,
// the square root of the Laplacian and the experiment commands.

#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pdo/calculus.hpp"
#include "pdo/config.hpp"
#include "pdo/errors.hpp"
#include "pdo/experiments.hpp"
#include "pdo/laplacian.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

pdo::Point to_point(const py::object& o) {
  if (py::isinstance<py::float_>(o) || py::isinstance<py::int_>(o)) return {o.cast<double>()};
  return o.cast<std::vector<double>>();
}

std::vector<double> periods(const py::object& o, int dim) {
  if (o.is_none()) return std::vector<double>(dim, 2 * M_PI);
  if (py::isinstance<py::float_>(o) || py::isinstance<py::int_>(o)) return std::vector<double>(dim, o.cast<double>());
  return o.cast<std::vector<double>>();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "pseudodifferential symbol calculus on periodic manifolds";

  static py::exception<pdo::Error> base(m, "PdoError", PyExc_RuntimeError);
  static py::exception<pdo::Error> invalid(m, "ConfigInvalid", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const pdo::Error& e) {
      if (e.kind() == pdo::ErrorKind::ConfigInvalid)
        invalid(e.what());
      else
        base(e.what());
    }
  });

  py::class_<pdo::ManifoldModel>(m, "Manifold")
      .def_static(
          "from_json", [](const std::string& s) { return pdo::manifold_from_json(json::parse(s)); }, py::arg("spec"))
      .def_static("flat", &pdo::ManifoldModel::flat, py::arg("dim"), py::arg("period") = 2 * M_PI)
      .def_readonly("dim", &pdo::ManifoldModel::dim)
      .def_readonly("period", &pdo::ManifoldModel::period)
      .def_readwrite("kappa", &pdo::ManifoldModel::kappa);

  py::class_<pdo::MetricModel>(m, "MetricModel")
      .def_static(
          "from_json", [](const std::string& s) { return pdo::metric_model_from_json(json::parse(s)); },
          py::arg("spec"))
      .def_property_readonly("dim", &pdo::MetricModel::dim)
      .def_readonly("manifold", &pdo::MetricModel::base)
      .def("density", [](const pdo::MetricModel& mm, const py::object& x) { return mm.density(to_point(x)); });

  py::class_<pdo::Expansion>(m, "Expansion")
      .def_static(
          "from_json",
          [](const std::string& s, int dim, const py::object& period) {
            return pdo::expansion_from_json(json::parse(s), dim, periods(period, dim));
          },
          py::arg("terms"), py::arg("dim") = 1, py::arg("period") = py::none())
      .def(
          "__call__", [](const pdo::Expansion& E, const py::object& x, const py::object& xi) {
            return E(to_point(x), to_point(xi));
          },
          py::arg("x"), py::arg("xi"))
      .def_property_readonly("dim", &pdo::Expansion::dim)
      .def_property_readonly("tau", &pdo::Expansion::tau)
      .def_property_readonly("kappa", &pdo::Expansion::kappa)
      .def_property_readonly("leading_order", &pdo::Expansion::leading_order)
      .def_property_readonly("remainder_order", &pdo::Expansion::remainder_order)
      .def_property_readonly("orders",
                             [](const pdo::Expansion& E) {
                               std::vector<double> o;
                               for (const auto& t : E.terms()) o.push_back(t.order);
                               return o;
                             })
      .def("__len__", [](const pdo::Expansion& E) { return E.terms().size(); });

  py::class_<pdo::PTable>(m, "PTable");

  m.def(
      "p_table",
      [](const pdo::ManifoldModel& M, const std::vector<std::vector<double>>& points, int order) {
        return pdo::p_table(M, M.kappa, points, order);
      },
      py::arg("manifold"), py::arg("points"), py::arg("order"));
  m.def("compose_flat", &pdo::compose_flat, py::arg("a"), py::arg("b"), py::arg("K"));
  m.def("compose_global", &pdo::compose_global, py::arg("a"), py::arg("b"), py::arg("manifold"), py::arg("p"),
        py::arg("K"));
  m.def("change_tau", &pdo::change_tau, py::arg("symbol"), py::arg("tau"), py::arg("manifold"), py::arg("K"));
  m.def("adjoint_symbol", &pdo::adjoint_symbol, py::arg("symbol"), py::arg("manifold"), py::arg("K"));
  m.def(
      "sqrt_symbol",
      [](const pdo::MetricModel& mm, const std::string& nu, int K) {
        const auto P = pdo::perturbation_from_json(json::parse(nu), mm.dim(), mm.base.period);
        return pdo::sqrt_symbol(mm, P, K).expansion;
      },
      py::arg("metric"), py::arg("nu") = "0", py::arg("K") = 3);

  m.def("commands", [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& c : pdo::commands()) out.emplace_back(c.name, c.help);
    return out;
  });
  m.def("acceptance_criteria", [] {
    std::vector<std::pair<int, std::string>> out;
    for (const auto& c : pdo::acceptance_criteria()) out.emplace_back(c.id, c.title);
    return out;
  });
  m.def(
      "run_command",
      [](const std::string& name, const std::string& config) {
        const auto cfg = pdo::parse_config(json::parse(config));
        pdo::Report r("");
        {
          py::gil_scoped_release nogil;
          r = pdo::run_command(name, cfg);
        }
        return pdo::summary_json(r, cfg).dump();
      },
      py::arg("name"), py::arg("config") = "{}");
  m.attr("__version__") = pdo::module_version();
}
