#ifndef CRNEP_CONFIG_HPP
#define CRNEP_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crnep/em.hpp"
#include "crnep/ep.hpp"
#include "crnep/model.hpp"
#include "crnep/ssa.hpp"

namespace crnep {

inline constexpr int kConfigSchemaVersion = 1;

/// How observations are produced when no observation file is given.
struct SimulationSpec {
  std::optional<StateVector> x0;  // drawn from the initial law when absent
  int num_observations = 20;
  std::vector<double> times;      // overrides num_observations when non-empty
};

/// `em.learn` block; rate indices are 1-based as in the model file order.
struct LearnSpec {
  bool theta0 = false;
  bool all_rates = false;
  std::vector<int> rates;
  bool H = false;
  bool Sigma = false;
};

/**
 * One run, read from a JSON file. Relative paths are resolved against the
 * directory holding the config file.
 */
struct RunConfig {
  std::filesystem::path model_path;
  std::optional<std::filesystem::path> observations_path;
  SimulationSpec simulation;
  Eigen::MatrixXd H;
  Eigen::MatrixXd Sigma;
  double horizon = 0.0;
  double grid_step = 0.01;
  std::uint64_t seed = 0;
  EPConfig ep;
  EmConfig em;  // mask is filled by resolve_mask once the network is known
  std::optional<Eigen::VectorXd> em_initial_rates;  // learning starts from the model rates otherwise
  LearnSpec learn;
  // Sites for `infer --mode filter|smooth`: "zero", "adf", or a sites CSV path.
  std::string filter_sites = "zero";
  Eigen::VectorXi oracle_caps;
  std::optional<int> oracle_max_total;
  long oracle_backward_max_states = 20000;
  std::filesystem::path output_dir = "out";
};

/// Throws ValidationError on schema problems and IoError on unreadable files.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);

/// Learn mask from the config's `em.learn` block, sized for the network.
LearnMask resolve_mask(const RunConfig& cfg, const ReactionNetwork& net);

/// Seed streams; every random draw of a simulated run comes from the config
/// seed through one of these (see derive_seed).
enum SeedStream : std::uint64_t { kInitialState = 0, kTrajectory = 1, kObsTimes = 2, kObsNoise = 3 };

struct SimulatedData {
  JumpTrajectory trajectory;
  ObservationSet observations;
};

/// Trajectory and observations described by the config's `simulation` block.
SimulatedData simulate_data(const RunConfig& cfg, const ReactionNetwork& net);

/// Parses "3,4,5" into caps.
Eigen::VectorXi parse_caps(const std::string& text);

}  // namespace crnep

#endif  // CRNEP_CONFIG_HPP
