#pragma once

// Configuration-driven experiment runner: problem and reference setup,
// replicated optimizer runs, aggregation and CSV output.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sglscv/optim.hpp"
#include "sglscv/parallel.hpp"
#include "sglscv/problems.hpp"

namespace sglscv::experiment {

using Vector = Eigen::VectorXd;

struct ProblemConfig {
  std::string kind = "diffusion_1d";  // diffusion_1d | advdiff_5d | quadratic_toy
  problems::DiffusionSpec diffusion;
  problems::AdvDiffSpec advdiff;
  std::uint64_t toy_seed = 1;
  int toy_dim = 4;
  double toy_beta = 0.1;
  double toy_noise = 1.0;

  bool operator==(const ProblemConfig&) const = default;
};

struct ReferenceConfig {
  std::string kind = "full_gradient";  // analytic | file | full_gradient | none
  int points = 50;                     // Gauss points per parameter dimension
  std::string solver = "direct";       // direct | descent
  double tau = 0.5;                    // descent only
  std::size_t iterations = 20000;      // descent only
  std::string path;                    // file only: whitespace separated nodal values

  bool operator==(const ReferenceConfig&) const = default;
};

struct StepConfig {
  std::string rule = "constant";  // constant | robbins_monro | power | memory_linked
  double a = 0.1;
  double b = 0.0;

  optim::StepSchedule build() const;
  bool operator==(const StepConfig&) const = default;
};

struct SpaceConfig {
  std::string index_set = "total_degree";  // total_degree | hyperbolic_cross | full_tensor
  std::string schedule = "explicit";       // explicit | algebraic | exponential
  std::vector<int> levels;                 // index-set parameter per stage
  std::vector<std::size_t> starts;         // switch iterations; empty = earliest feasible
  std::vector<std::size_t> memory;         // records per stage; empty = derived below
  double memory_factor = 0.0;              // memory = factor * |Lambda|
  double memory_r = 1.0;                   // else from the sampling inequality with this r
  std::string measure = "arcsine";         // reference | arcsine | optimal
  double s = 0.25;                         // algebraic / exponential schedules
  double eta = 1.0;
  double c_mu = 1.0;
  std::size_t condition_every = 1;
  bool warmup = false;

  bool operator==(const SpaceConfig&) const = default;
};

struct RunConfig {
  std::string label;
  std::string method;  // sgd | adam | saga | full_gradient | sglscv
  StepConfig step;
  SpaceConfig space;
  int points = 20;  // saga / full_gradient: Gauss points per dimension
  double beta1 = 0.9;
  double beta2 = 0.99;
  std::size_t iterations = 0;  // 0 inherits the experiment budget

  bool operator==(const RunConfig&) const = default;
};

struct Aggregation {
  enum class Mode { geometric_mean, ema };
  Mode mode = Mode::geometric_mean;
  double lambda = 0.01;

  std::string tag() const;
  bool operator==(const Aggregation&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ProblemConfig problem;
  ReferenceConfig reference;
  std::size_t replicates = 40;
  std::uint64_t seed = 1;
  std::size_t iterations = 20000;
  std::size_t record_every = 10;
  Aggregation aggregation;
  std::vector<RunConfig> runs;
  std::string output = ".";

  bool operator==(const ExperimentConfig&) const = default;
};

/// Strict parse: unknown keys, wrong types and invalid values throw
/// std::invalid_argument naming the offending key path.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Full serialization; parse_config(serialize(c)) == c.
std::string serialize(const ExperimentConfig& config, int indent = 2);

std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

std::unique_ptr<problems::ControlProblem> make_problem(const ProblemConfig& config);
/// Reference control for the error column; empty for kind "none".
Vector make_reference(const problems::ControlProblem& problem, const ProblemConfig& pc, const ReferenceConfig& rc);
optim::SpaceSchedule make_schedule(const problems::ControlProblem& problem, const SpaceConfig& sc,
                                   std::size_t iterations);

struct ResultTable {
  std::string label;
  std::string aggregation;
  std::size_t replicates = 0;
  std::vector<optim::TraceRow> rows;
};

/// Rowwise aggregation of replicate traces on a shared recording grid. The
/// error is averaged geometrically; ema then smooths it along the rows with
/// weight 1 - (1 - lambda)^(iteration gap). Other columns are averaged.
ResultTable aggregate(const std::vector<optim::OptimizerTrace>& traces, const Aggregation& mode);

/// Replicates of one run; replicate r uses stream index r of the master seed.
std::vector<optim::OptimizerTrace> run_replicates(const problems::ControlProblem& problem, const RunConfig& run,
                                                  const ExperimentConfig& config, const Vector& reference,
                                                  Exec ex = Exec::parallel);

struct ExperimentResult {
  Vector reference;
  std::vector<ResultTable> tables;
};

ExperimentResult run_experiment(const ExperimentConfig& config, Exec ex = Exec::parallel);

/// Writes `table` with a '#' header block (serialized config, seed, label) to
/// a temporary file and renames it over `path`.
void write_csv(const std::filesystem::path& path, const ResultTable& table, const ExperimentConfig& config);
/// One file per run: <output>/<name>_<label>.csv. Returns the paths.
std::vector<std::filesystem::path> write_results(const ExperimentConfig& config, const ExperimentResult& result);

struct CheckResult {
  std::string name;
  bool passed;
  std::string detail;
};
std::vector<std::string> check_modules();
/// Fast invariant checks of one module.
std::vector<CheckResult> self_check(const std::string& module);

}  // namespace sglscv::experiment
