#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sinkdesc/experiment.hpp"
#include "sinkdesc/io.hpp"

namespace py = pybind11;
using namespace sinkdesc;

namespace {

CostKind parse_cost(const std::string& name) {
  if (name == "sqeuclidean") return CostKind::SquaredEuclideanHalf;
  if (name == "euclidean") return CostKind::Euclidean;
  throw Error(ErrorKind::InvalidArgument, "unknown cost '" + name + "' (expected sqeuclidean or euclidean)");
}

WeightRule parse_rule(const std::string& name) {
  if (name == "harmonic") return WeightRule::Harmonic;
  if (name == "two_over_t_plus_two") return WeightRule::TwoOverTPlusTwo;
  throw Error(ErrorKind::InvalidArgument, "unknown weight rule '" + name + "'");
}

py::list trace_to_list(const DescentTrace& trace) {
  py::list out;
  for (const auto& r : trace.records) {
    py::dict d;
    d["objective"] = r.objective;
    d["ksbd"] = r.ksbd;
    d["step_size"] = r.step_size;
    d["sinkhorn_sweeps"] = r.sinkhorn_sweeps;
    d["wall_ms"] = r.wall_ms;
    out.append(d);
  }
  return out;
}

py::tuple result_to_tuple(const DescentResult& r) { return py::make_tuple(r.final, trace_to_list(r.trace)); }

}  // namespace

PYBIND11_MODULE(sinkdesc, m) {
  m.doc() = "Sinkhorn Descent for Sinkhorn-divergence barycenters";
  m.attr("__version__") = std::string(library_version());

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  py::class_<Box>(m, "Box")
      .def(py::init([](Vector lower, Vector upper) { return Box{std::move(lower), std::move(upper)}; }),
           py::arg("lower"), py::arg("upper"))
      .def_static("cube", &Box::cube, py::arg("dim"), py::arg("half_width"))
      .def_readonly("lower", &Box::lower)
      .def_readonly("upper", &Box::upper)
      .def_property_readonly("radius", &Box::radius);

  py::class_<DiscreteMeasure>(m, "DiscreteMeasure")
      .def(py::init([](Matrix points, std::optional<Vector> weights) {
             return DiscreteMeasure(std::move(points), std::move(weights));
           }),
           py::arg("points"), py::arg("weights") = py::none())
      .def_property_readonly("points", &DiscreteMeasure::points)
      .def_property_readonly("weights", &DiscreteMeasure::weights)
      .def_property_readonly("size", &DiscreteMeasure::size)
      .def_property_readonly("dim", &DiscreteMeasure::dim)
      .def("__len__", &DiscreteMeasure::size)
      .def("__eq__", &DiscreteMeasure::operator==);

  py::class_<GroundCost>(m, "GroundCost")
      .def(py::init([](const std::string& kind, double radius) { return GroundCost(parse_cost(kind), radius); }),
           py::arg("kind"), py::arg("domain_radius"))
      .def_static("for_box",
                  [](const std::string& kind, const Box& box) { return GroundCost::for_box(parse_cost(kind), box); },
                  py::arg("kind"), py::arg("box"))
      .def_property_readonly("bound", &GroundCost::bound)
      .def_property_readonly("lipschitz", &GroundCost::lipschitz);

  py::class_<SinkhornConfig>(m, "SinkhornConfig")
      .def(py::init([](double gamma, double tolerance, int max_iterations, double damping) {
             SinkhornConfig c{gamma, tolerance, max_iterations, damping};
             c.validate();
             return c;
           }),
           py::arg("gamma") = 1.0, py::arg("tolerance") = 1e-9, py::arg("max_iterations") = 100000,
           py::arg("symmetric_damping") = 0.5)
      .def_readwrite("gamma", &SinkhornConfig::gamma)
      .def_readwrite("tolerance", &SinkhornConfig::tolerance)
      .def_readwrite("max_iterations", &SinkhornConfig::max_iterations)
      .def_readwrite("symmetric_damping", &SinkhornConfig::symmetric_damping);

  py::class_<SinkhornPotentials>(m, "SinkhornPotentials")
      .def_readonly("f", &SinkhornPotentials::f)
      .def_readonly("g", &SinkhornPotentials::g)
      .def_readonly("iterations_used", &SinkhornPotentials::iterations_used)
      .def_readonly("residual", &SinkhornPotentials::residual)
      .def_readonly("dual_value", &SinkhornPotentials::dual_value);

  m.def("solve_potentials",
        [](const DiscreteMeasure& a, const DiscreteMeasure& b, const GroundCost& cost, const SinkhornConfig& cfg) {
          return solve_potentials(a, b, cost, cfg);
        },
        py::arg("alpha"), py::arg("beta"), py::arg("cost"), py::arg("config"));
  m.def("ot_gamma", &ot_gamma, py::arg("alpha"), py::arg("beta"), py::arg("cost"), py::arg("config"));
  m.def("sinkhorn_divergence", &sinkhorn_divergence, py::arg("alpha"), py::arg("beta"), py::arg("cost"),
        py::arg("config"));

  py::class_<BarycenterProblem>(m, "BarycenterProblem")
      .def(py::init([](std::vector<DiscreteMeasure> sources, double gamma, const Box& domain, double bandwidth) {
             BarycenterProblem p{std::move(sources), GroundCost::for_box(CostKind::SquaredEuclideanHalf, domain),
                                 RbfKernel(bandwidth), gamma, domain};
             p.validate();
             return p;
           }),
           py::arg("sources"), py::arg("gamma"), py::arg("domain"), py::arg("bandwidth"))
      .def_readonly("sources", &BarycenterProblem::sources)
      .def_readonly("gamma", &BarycenterProblem::gamma)
      .def_readonly("domain", &BarycenterProblem::domain)
      .def_property_readonly("bandwidth", [](const BarycenterProblem& p) { return p.kernel.bandwidth(); });

  m.def("objective",
        [](const DiscreteMeasure& alpha, const BarycenterProblem& problem, const SinkhornConfig& cfg) {
          return BarycenterObjective(problem, cfg).value(alpha);
        },
        py::arg("alpha"), py::arg("problem"), py::arg("config"));
  m.def("functional_gradient",
        [](const DiscreteMeasure& alpha, const BarycenterProblem& problem, const SinkhornConfig& cfg) {
          const DescentDirection d = functional_gradient(alpha, problem, cfg);
          return py::make_tuple(d.xi, d.ds);
        },
        py::arg("alpha"), py::arg("problem"), py::arg("config"));
  m.def("ksbd",
        [](const DiscreteMeasure& alpha, const BarycenterProblem& problem, const SinkhornConfig& cfg) {
          return ksbd(alpha, functional_gradient(alpha, problem, cfg), problem.kernel);
        },
        py::arg("alpha"), py::arg("problem"), py::arg("config"));
  m.def("default_step_size", [](const BarycenterProblem& p) { return default_step_size(p, p.dim()); },
        py::arg("problem"));

  m.def("run_sd",
        [](const DiscreteMeasure& initial, const BarycenterProblem& problem, double step_size, int max_steps,
           double tolerance, bool backtracking, double ksbd_stop, std::uint64_t seed, int minibatch) {
          DescentConfig cfg;
          cfg.step_size = step_size;
          cfg.max_steps = max_steps;
          cfg.backtracking = backtracking;
          cfg.ksbd_stop = ksbd_stop;
          cfg.seed = seed;
          cfg.minibatch = minibatch;
          cfg.sinkhorn.gamma = problem.gamma;
          cfg.sinkhorn.tolerance = tolerance;
          const DescentResult r = [&] {
            py::gil_scoped_release release;
            return run_sd(initial, problem, cfg);
          }();
          return result_to_tuple(r);
        },
        py::arg("initial"), py::arg("problem"), py::arg("step_size") = 0.1, py::arg("max_steps") = 30,
        py::arg("tolerance") = 1e-6, py::arg("backtracking") = true, py::arg("ksbd_stop") = 0.0,
        py::arg("seed") = 0, py::arg("minibatch") = 0);

  m.def("run_fw",
        [](const DiscreteMeasure& initial, const BarycenterProblem& problem, int steps, int grid_resolution,
           const std::string& weight_rule, double tolerance) {
          FwConfig cfg;
          cfg.steps = steps;
          cfg.grid_resolution = grid_resolution;
          cfg.weight_rule = parse_rule(weight_rule);
          cfg.sinkhorn.gamma = problem.gamma;
          cfg.sinkhorn.tolerance = tolerance;
          const DescentResult r = [&] {
            py::gil_scoped_release release;
            return run_fw(initial, problem, cfg);
          }();
          return result_to_tuple(r);
        },
        py::arg("initial"), py::arg("problem"), py::arg("steps") = 100, py::arg("grid_resolution") = 64,
        py::arg("weight_rule") = "two_over_t_plus_two", py::arg("tolerance") = 1e-6);

  m.def("run_experiment",
        [](const std::filesystem::path& spec_path, std::optional<std::filesystem::path> output_dir,
           const std::string& method) {
          ExperimentSpec spec =
              ExperimentSpec::from_json(nlohmann::json::parse(read_file(spec_path)), spec_path.parent_path());
          if (output_dir) spec.output_dir = *output_dir;
          if (method == "fw") spec.method = Method::FrankWolfe;
          else if (method != "sd") throw Error(ErrorKind::InvalidArgument, "method must be sd or fw");
          const DescentResult r = [&] {
            py::gil_scoped_release release;
            return run_experiment(spec);
          }();
          return result_to_tuple(r);
        },
        py::arg("spec"), py::arg("output_dir") = py::none(), py::arg("method") = "sd");

  m.def("read_measure_csv", &read_measure_csv, py::arg("path"));
  m.def("write_measure_csv", &write_measure_csv, py::arg("path"), py::arg("measure"));
  m.def("median_heuristic_bandwidth", &median_heuristic_bandwidth, py::arg("measure"));
  m.def("generate_uniform", &generate_uniform, py::arg("seed"), py::arg("n_points"), py::arg("box"));
}
