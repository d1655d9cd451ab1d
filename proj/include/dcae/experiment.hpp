#pragma once

// Benchmark orchestration behind the dcae_bench tool: configuration, the
// key-value config file format, and head-to-head solver runs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dcae/data_io.hpp"
#include "dcae/diagnostics.hpp"
#include "dcae/solvers.hpp"

namespace dcae {

namespace exit_code {
inline constexpr int kSuccess = 0;
inline constexpr int kConfig = 2;
inline constexpr int kData = 3;
inline constexpr int kSolver = 4;
inline constexpr int kInvariant = 5;
}  // namespace exit_code

struct SyntheticSpec {
  std::size_t m = 50;
  std::size_t n = 40;
  std::size_t t_true = 3;
  double density = 0.5;
  double noise_sd = 0.0;

  bool operator==(const SyntheticSpec&) const = default;
};

/// "m,n,t_true,density,noise_sd"
SyntheticSpec parse_synthetic(const std::string& text);
std::string format_synthetic(const SyntheticSpec& spec);

struct ExperimentConfig {
  // [data]
  std::optional<std::filesystem::path> data_path;
  RatingFormat format = RatingFormat::DoubleColon;
  std::optional<SyntheticSpec> synthetic;
  double train_fraction = 0.7;
  // [model]
  std::size_t rank = 5;
  double lambda = 0.1;
  double theta = 5.0;
  double c1 = 3.0;
  double L = 1.0;
  double l = 1.0;
  // [solver]
  double delta = 0.9999;
  double eta = 0.9;
  double mu0 = 1.0;
  std::size_t max_linesearch_trials = 50;
  std::size_t max_iters = 1000;
  std::optional<double> time_budget_s;
  double tol = 1e-8;
  std::optional<double> gamma;
  std::vector<Variant> variants{Variant::DCA, Variant::IDCA, Variant::DCAE};
  // [run]
  std::size_t repeats = 1;
  std::uint64_t seed = 42;
  std::filesystem::path out_dir = "out";
  std::size_t parallel_repeats = 1;
  // Write measured wall time; false writes 0 so outputs are byte-stable.
  bool timing = true;

  bool operator==(const ExperimentConfig&) const = default;

  /// Throws ConfigError.
  void validate() const;
  SolverConfig solver_config() const;
};

/// Sectioned key-value text:
///
///   [section]
///   key = value     # comment
///
/// Empty values mean "unset" for optional keys. Unknown keys are errors.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one `section.key = value` assignment; CLI overrides go through here.
void set_config_value(ExperimentConfig& config, const std::string& dotted_key,
                      const std::string& value);

void write_config(std::ostream& out, const ExperimentConfig& config);

/// The defaults in config file format.
std::string print_defaults();

std::vector<Variant> parse_variant_list(const std::string& text);

struct ExperimentResult {
  std::vector<RunSummary> runs;  // ordered by (repeat, variant)
  std::vector<AggregateSummary> aggregates;
  std::size_t total_violations = 0;
};

/// Runs every (variant, repeat) job and writes trace_<variant>_<rep>.csv,
/// summary.csv, aggregate.csv, summary.json, split manifests and the ID
/// map into config.out_dir. Throws on errors.
ExperimentResult execute_experiment(const ExperimentConfig& config, std::ostream& log);

/// execute_experiment with errors mapped to exit codes.
int run_experiment(const ExperimentConfig& config, std::ostream& log);

}  // namespace dcae
