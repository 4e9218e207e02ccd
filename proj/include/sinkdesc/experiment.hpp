#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sinkdesc/descent.hpp"
#include "sinkdesc/frank_wolfe.hpp"

namespace sinkdesc {

std::string_view library_version();

enum class ExperimentName { Ellipses, Sketch, Gaussians, Custom };
enum class Method { SinkhornDescent, FrankWolfe };

std::string_view to_string(ExperimentName name);
std::string_view to_string(Method method);

struct ExperimentSpec {
  ExperimentName name = ExperimentName::Custom;
  /// Experiment-specific knobs (counts, dimensions, paths, ...).
  nlohmann::json parameters = nlohmann::json::object();
  DescentConfig descent;
  std::filesystem::path output_dir;
  Method method = Method::SinkhornDescent;

  /// Parses the JSON spec file layout; relative paths resolve against `base_dir`.
  static ExperimentSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;
};

struct ExperimentSetup {
  BarycenterProblem problem;
  DiscreteMeasure initial;
};

ExperimentSetup build_experiment(const ExperimentSpec& spec);

/// Means of n sources on a sphere of radius `spread` with centroid exactly at the origin.
Matrix symmetric_means(std::uint64_t seed, int n_sources, int dim, double spread);

/// FW settings read from the spec parameters (grid_resolution, fw_steps, weight_rule).
FwConfig fw_config_from(const ExperimentSpec& spec);

struct RunSummary {
  double wall_ms = 0.0;
};

/// Writes particles.csv, trace.csv, run.json and, for d = 2, scatter.svg.
void write_run(const std::filesystem::path& output_dir, const DiscreteMeasure& final, const DescentTrace& trace,
               const ExperimentSpec& spec, const BarycenterProblem& problem, const RunSummary& summary = {});

/// Builds, runs the configured method, and writes the run directory.
DescentResult run_experiment(const ExperimentSpec& spec, const StepObserver& observer = {});

/// 800x800 SVG: sources in gray, particles in color, viewport = domain box.
std::string render_scatter_svg(const std::vector<DiscreteMeasure>& sources, const DiscreteMeasure& particles,
                               const Box& box);

}  // namespace sinkdesc
