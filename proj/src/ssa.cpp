#include "crnep/ssa.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "crnep/csv.hpp"
#include "crnep/errors.hpp"
#include "crnep/rng.hpp"

namespace crnep {

ObservationModel::ObservationModel(Eigen::MatrixXd H, Eigen::MatrixXd Sigma, double eigen_floor)
    : H_(std::move(H)), Sigma_(std::move(Sigma)) {
  const auto m = H_.rows();
  if (m == 0 || H_.cols() == 0) throw ValidationError("observation matrix H is empty");
  if (Sigma_.rows() != m || Sigma_.cols() != m)
    throw ValidationError("Sigma must be " + std::to_string(m) + "x" + std::to_string(m));
  if (!H_.allFinite() || !Sigma_.allFinite())
    throw ValidationError("observation model has non-finite entries");
  const double scale = std::max(1.0, Sigma_.cwiseAbs().maxCoeff());
  if ((Sigma_ - Sigma_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ValidationError("Sigma is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Sigma_);
  if (eig.eigenvalues().minCoeff() <= eigen_floor)
    throw ValidationError("Sigma is not positive definite (smallest eigenvalue " +
                          std::to_string(eig.eigenvalues().minCoeff()) + ")");
  Eigen::LLT<Eigen::MatrixXd> llt(Sigma_);
  if (llt.info() != Eigen::Success) throw ValidationError("Cholesky factorization of Sigma failed");
  chol_ = llt.matrixL();
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
}

double ObservationModel::log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& x) const {
  const Eigen::VectorXd r = y - H_ * x;
  const Eigen::VectorXd z = chol_.triangularView<Eigen::Lower>().solve(r);
  const double m = static_cast<double>(H_.rows());
  return -0.5 * z.squaredNorm() - 0.5 * (m * std::log(2.0 * M_PI) + log_det_);
}

void validate(const ObservationSet& obs, double horizon) {
  if (obs.times.size() != obs.values.size())
    throw ValidationError("observation times and values differ in length");
  double prev = 0.0;
  for (std::size_t i = 0; i < obs.times.size(); ++i) {
    const double t = obs.times[i];
    if (!(t > prev) || t > horizon)
      throw ValidationError("observation time " + std::to_string(i + 1) +
                            " must be increasing and inside (0, " + std::to_string(horizon) +
                            "]");
    if (obs.values[i].size() != obs.obs_model.obs_dim())
      throw ValidationError("observation " + std::to_string(i + 1) + " has dimension " +
                            std::to_string(obs.values[i].size()) + ", expected " +
                            std::to_string(obs.obs_model.obs_dim()));
    prev = t;
  }
}

JumpTrajectory simulate(const ReactionNetwork& net, const StateVector& x0, double horizon,
                        std::uint64_t seed) {
  if (!(horizon > 0.0)) throw ValidationError("simulation horizon must be positive");
  if (x0.size() != net.num_species())
    throw ValidationError("initial state has " + std::to_string(x0.size()) +
                          " entries, network has " + std::to_string(net.num_species()) +
                          " species");
  if ((x0.array() < 0).any()) throw ValidationError("initial state has negative counts");

  Rng rng(seed);
  JumpTrajectory traj;
  traj.horizon = horizon;
  traj.states.push_back(x0);
  StateVector x = x0;
  const int k = net.num_reactions();
  std::vector<double> a(k);
  double t = 0.0;
  while (true) {
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
      a[j] = propensity(net, x, j);
      total += a[j];
    }
    if (total <= 0.0) break;
    t += rng.exponential(total);
    if (t > horizon) break;
    const double target = rng.uniform() * total;
    int chosen = k - 1;
    double cum = 0.0;
    for (int j = 0; j < k; ++j) {
      cum += a[j];
      if (target < cum) {
        chosen = j;
        break;
      }
    }
    // Rounding can land on a zero-propensity tail reaction.
    while (a[chosen] <= 0.0) --chosen;
    x += net.change_matrix().col(chosen);
    traj.jump_times.push_back(t);
    traj.states.push_back(x);
  }
  return traj;
}

StateVector state_at(const JumpTrajectory& traj, double t) {
  if (t < 0.0 || t > traj.horizon)
    throw ValidationError("time " + std::to_string(t) + " outside trajectory horizon [0, " +
                          std::to_string(traj.horizon) + "]");
  const auto it = std::upper_bound(traj.jump_times.begin(), traj.jump_times.end(), t);
  return traj.states[static_cast<std::size_t>(it - traj.jump_times.begin())];
}

ObservationSet observe(const JumpTrajectory& traj, const ObservationModel& obs_model,
                       const std::vector<double>& times, std::uint64_t seed) {
  if (obs_model.state_dim() != traj.states.front().size())
    throw ValidationError("H has " + std::to_string(obs_model.state_dim()) +
                          " columns, trajectory has " +
                          std::to_string(traj.states.front().size()) + " species");
  Rng rng(seed);
  ObservationSet obs{times, {}, obs_model};
  const int m = obs_model.obs_dim();
  for (double t : times) {
    if (!(t > 0.0) || t > traj.horizon)
      throw ValidationError("observation time " + std::to_string(t) +
                            " outside trajectory horizon (0, " + std::to_string(traj.horizon) +
                            "]");
    const Eigen::VectorXd x = state_at(traj, t).cast<double>();
    Eigen::VectorXd z(m);
    for (int r = 0; r < m; ++r) z[r] = rng.normal();
    obs.values.push_back(obs_model.H() * x + obs_model.chol() * z);
  }
  validate(obs, traj.horizon);
  return obs;
}

StateVector sample_initial_state(const ReactionNetwork& net, std::uint64_t seed) {
  Rng rng(seed);
  StateVector x(net.num_species());
  for (int i = 0; i < net.num_species(); ++i)
    x[i] = static_cast<int>(rng.poisson(std::exp(net.initial_log_rates()[i])));
  return x;
}

std::vector<double> random_observation_times(int count, double horizon, std::uint64_t seed) {
  if (count < 0) throw ValidationError("observation count must be non-negative");
  Rng rng(seed);
  std::set<double> times;
  while (static_cast<int>(times.size()) < count) times.insert(horizon * (1.0 - rng.uniform()));
  return {times.begin(), times.end()};
}

void write_trajectory_csv(const JumpTrajectory& traj, const std::vector<std::string>& species,
                          const std::filesystem::path& path) {
  std::vector<std::string> header{"time"};
  header.insert(header.end(), species.begin(), species.end());
  csv::Writer w(path, header);
  auto row = [&](double t, const StateVector& x) {
    w.field(t);
    for (int i = 0; i < x.size(); ++i) w.field(x[i]);
    w.end_row();
  };
  row(0.0, traj.states.front());
  for (std::size_t q = 0; q < traj.jump_times.size(); ++q) row(traj.jump_times[q], traj.states[q + 1]);
  row(traj.horizon, traj.states.back());
}

JumpTrajectory read_trajectory_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  if (table.header.empty() || table.header.front() != "time")
    throw ValidationError(path.string() + ": first column must be 'time'");
  if (table.rows.size() < 2) throw ValidationError(path.string() + ": needs t=0 and t=T rows");
  const auto n = static_cast<int>(table.header.size()) - 1;
  auto parse_state = [&](const std::vector<std::string>& row) {
    StateVector x(n);
    for (int i = 0; i < n; ++i) x[i] = static_cast<int>(csv::to_int(row[i + 1]));
    return x;
  };
  JumpTrajectory traj;
  traj.states.push_back(parse_state(table.rows.front()));
  for (std::size_t r = 1; r + 1 < table.rows.size(); ++r) {
    traj.jump_times.push_back(csv::to_double(table.rows[r][0]));
    traj.states.push_back(parse_state(table.rows[r]));
  }
  traj.horizon = csv::to_double(table.rows.back()[0]);
  return traj;
}

void write_observations_csv(const ObservationSet& obs, const std::filesystem::path& path) {
  std::vector<std::string> header{"time"};
  for (int r = 0; r < obs.obs_model.obs_dim(); ++r) header.push_back("y_" + std::to_string(r + 1));
  csv::Writer w(path, header);
  for (int i = 0; i < obs.size(); ++i) {
    w.field(obs.times[i]);
    for (int r = 0; r < obs.values[i].size(); ++r) w.field(obs.values[i][r]);
    w.end_row();
  }
}

ObservationSet read_observations_csv(const std::filesystem::path& path,
                                     const ObservationModel& obs_model) {
  const auto table = csv::read(path);
  if (table.header.empty() || table.header.front() != "time")
    throw ValidationError(path.string() + ": first column must be 'time'");
  const auto m = static_cast<int>(table.header.size()) - 1;
  if (m != obs_model.obs_dim())
    throw ValidationError(path.string() + ": has " + std::to_string(m) +
                          " observation columns, H has " + std::to_string(obs_model.obs_dim()) +
                          " rows");
  ObservationSet obs{{}, {}, obs_model};
  for (const auto& row : table.rows) {
    obs.times.push_back(csv::to_double(row[0]));
    Eigen::VectorXd y(m);
    for (int r = 0; r < m; ++r) y[r] = csv::to_double(row[r + 1]);
    obs.values.push_back(std::move(y));
  }
  return obs;
}

}  // namespace crnep
