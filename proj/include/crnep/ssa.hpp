#ifndef CRNEP_SSA_HPP
#define CRNEP_SSA_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "crnep/model.hpp"

namespace crnep {

/// Piecewise-constant, right-continuous sample path on [0, horizon].
struct JumpTrajectory {
  std::vector<double> jump_times;    // strictly increasing, in (0, horizon]
  std::vector<StateVector> states;   // states[0] = x0, states[q+1] after jump q
  double horizon = 0.0;
};

/// Linear-Gaussian measurement model y = H x + noise, noise ~ N(0, Sigma).
class ObservationModel {
 public:
  /// Throws ValidationError unless Sigma is symmetric with eigenvalues above
  /// `eigen_floor`.
  ObservationModel(Eigen::MatrixXd H, Eigen::MatrixXd Sigma, double eigen_floor = 1e-14);

  const Eigen::MatrixXd& H() const { return H_; }
  const Eigen::MatrixXd& Sigma() const { return Sigma_; }
  /// Lower Cholesky factor of Sigma.
  const Eigen::MatrixXd& chol() const { return chol_; }
  int obs_dim() const { return static_cast<int>(H_.rows()); }
  int state_dim() const { return static_cast<int>(H_.cols()); }

  /// log N(y | H x, Sigma).
  double log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& x) const;

 private:
  Eigen::MatrixXd H_;
  Eigen::MatrixXd Sigma_;
  Eigen::MatrixXd chol_;
  double log_det_ = 0.0;
};

struct ObservationSet {
  std::vector<double> times;             // strictly increasing in (0, T]
  std::vector<Eigen::VectorXd> values;   // one m-vector per time
  ObservationModel obs_model;

  int size() const { return static_cast<int>(times.size()); }
};

/// Checks times, dimensions; throws ValidationError.
void validate(const ObservationSet& obs, double horizon);

/// Doob-Gillespie direct method. Deterministic for a fixed seed.
JumpTrajectory simulate(const ReactionNetwork& net, const StateVector& x0, double horizon,
                        std::uint64_t seed);

/// State of the last jump at or before t (right-continuous).
StateVector state_at(const JumpTrajectory& traj, double t);

/// y_i = H x(t_i) + L z_i with L the Cholesky factor of Sigma.
ObservationSet observe(const JumpTrajectory& traj, const ObservationModel& obs_model,
                       const std::vector<double>& times, std::uint64_t seed);

/// Draw x0 from the product-Poisson initial law exp(initial_log_rates).
StateVector sample_initial_state(const ReactionNetwork& net, std::uint64_t seed);

/// `count` distinct sorted times drawn uniformly on (0, horizon].
std::vector<double> random_observation_times(int count, double horizon, std::uint64_t seed);

// CSV persistence. Trajectory: `time,<species...>` with rows at t=0, every
// jump, and t=T. Observations: `time,y_1..y_m`.
void write_trajectory_csv(const JumpTrajectory& traj, const std::vector<std::string>& species,
                          const std::filesystem::path& path);
JumpTrajectory read_trajectory_csv(const std::filesystem::path& path);
void write_observations_csv(const ObservationSet& obs, const std::filesystem::path& path);
/// Observation model is not part of the file and must be supplied.
ObservationSet read_observations_csv(const std::filesystem::path& path,
                                     const ObservationModel& obs_model);

}  // namespace crnep

#endif  // CRNEP_SSA_HPP
