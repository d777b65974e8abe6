#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include <gtest/gtest.h>

#include "crnep/errors.hpp"
#include "crnep/rng.hpp"
#include "crnep/ssa.hpp"
#include "networks.hpp"

namespace crnep {
namespace {

// Kolmogorov-Smirnov statistic of a sample against Exponential(rate).
double ks_exponential(std::vector<double> sample, double rate) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t q = 0; q < sample.size(); ++q) {
    const double F = 1.0 - std::exp(-rate * sample[q]);
    d = std::max({d, (q + 1) / n - F, F - q / n});
  }
  return d;
}

TEST(Simulate, AbsorbingStateHasNoJumps) {
  auto net = testnet::make({"X"}, {{1}}, {{0}}, {1.0}, {0.0});
  auto traj = simulate(net, StateVector{{0}}, 5.0, 3);
  EXPECT_TRUE(traj.jump_times.empty());
  ASSERT_EQ(traj.states.size(), 1u);
  EXPECT_EQ(state_at(traj, 5.0), StateVector{{0}});
}

TEST(Simulate, PureBirthMeanCount) {
  auto net = testnet::pure_birth(2.0);
  const int runs = 10000;
  double sum = 0.0;
  for (int s = 0; s < runs; ++s)
    sum += state_at(simulate(net, StateVector{{0}}, 3.0, derive_seed(11, s)), 3.0)[0];
  EXPECT_NEAR(sum / runs, 6.0, 3.0 * std::sqrt(6.0 / runs));
}

TEST(Simulate, SameSeedSamePath) {
  auto net = testnet::lotka_volterra();
  auto a = simulate(net, StateVector{{50, 100}}, 5.0, 42);
  auto b = simulate(net, StateVector{{50, 100}}, 5.0, 42);
  EXPECT_EQ(a.jump_times, b.jump_times);
  ASSERT_EQ(a.states.size(), b.states.size());
  for (std::size_t q = 0; q < a.states.size(); ++q) EXPECT_EQ(a.states[q], b.states[q]);
  auto c = simulate(net, StateVector{{50, 100}}, 5.0, 43);
  EXPECT_NE(a.jump_times, c.jump_times);
}

TEST(Simulate, PathIsValid) {
  auto net = testnet::lotka_volterra();
  auto traj = simulate(net, StateVector{{50, 100}}, 3.0, 5);
  ASSERT_EQ(traj.states.size(), traj.jump_times.size() + 1);
  for (std::size_t q = 0; q < traj.jump_times.size(); ++q) {
    EXPECT_GT(traj.jump_times[q], q == 0 ? 0.0 : traj.jump_times[q - 1]);
    EXPECT_LE(traj.jump_times[q], 3.0);
    const Eigen::VectorXi step = traj.states[q + 1] - traj.states[q];
    bool matches = false;
    for (int j = 0; j < net.num_reactions(); ++j) matches |= step == change_vector(net, j);
    EXPECT_TRUE(matches) << "jump " << q;
    EXPECT_TRUE((traj.states[q + 1].array() >= 0).all());
  }
}

TEST(Simulate, ConservationLawHoldsAlongPaths) {
  auto net = testnet::closed_loop();
  for (int s = 0; s < 20; ++s) {
    auto traj = simulate(net, StateVector{{3, 1, 0, 2}}, 20.0, s);
    for (const auto& x : traj.states) EXPECT_EQ(x.sum(), 6);
  }
}

TEST(Simulate, WaitingTimesAreExponential) {
  auto net = testnet::lotka_volterra();
  const StateVector x0{{30, 20}};
  double total = 0.0;
  for (int j = 0; j < net.num_reactions(); ++j) total += propensity(net, x0, j);
  std::vector<double> waits;
  for (int s = 0; s < 5000; ++s) {
    auto traj = simulate(net, x0, 10.0, derive_seed(99, s));
    ASSERT_FALSE(traj.jump_times.empty());
    waits.push_back(traj.jump_times.front());
  }
  // Asymptotic Kolmogorov critical value at significance 0.01.
  EXPECT_LT(ks_exponential(waits, total), 1.6276 / std::sqrt(5000.0));
}

TEST(Simulate, ReactionChoiceFrequencies) {
  auto net = testnet::lotka_volterra();
  const StateVector x0{{30, 20}};
  Eigen::VectorXd p(3);
  for (int j = 0; j < 3; ++j) p[j] = propensity(net, x0, j);
  p /= p.sum();
  const int runs = 6000;
  Eigen::VectorXd count = Eigen::VectorXd::Zero(3);
  for (int s = 0; s < runs; ++s) {
    auto traj = simulate(net, x0, 10.0, derive_seed(7, s));
    const Eigen::VectorXi step = traj.states[1] - traj.states[0];
    for (int j = 0; j < 3; ++j)
      if (step == change_vector(net, j)) count[j] += 1.0;
  }
  for (int j = 0; j < 3; ++j)
    EXPECT_NEAR(count[j] / runs, p[j], 4.0 * std::sqrt(p[j] * (1 - p[j]) / runs)) << j;
}

TEST(Simulate, RejectsBadInput) {
  auto net = testnet::birth_death();
  EXPECT_THROW(simulate(net, StateVector{{1}}, 0.0, 1), ValidationError);
  EXPECT_THROW(simulate(net, StateVector{{1, 2}}, 1.0, 1), ValidationError);
}

TEST(StateAt, CadlagConvention) {
  JumpTrajectory traj;
  traj.horizon = 4.0;
  traj.jump_times = {1.0, 2.5};
  traj.states = {StateVector{{0}}, StateVector{{1}}, StateVector{{2}}};
  EXPECT_EQ(state_at(traj, 0.0)[0], 0);
  EXPECT_EQ(state_at(traj, 0.999)[0], 0);
  EXPECT_EQ(state_at(traj, 1.0)[0], 1);
  EXPECT_EQ(state_at(traj, 2.5)[0], 2);
  EXPECT_EQ(state_at(traj, 4.0)[0], 2);
  EXPECT_THROW(state_at(traj, 4.5), ValidationError);
  EXPECT_THROW(state_at(traj, -0.1), ValidationError);
}

TEST(Observe, TinyNoiseReproducesState) {
  auto net = testnet::closed_loop();
  auto traj = simulate(net, StateVector{{2, 2, 1, 3}}, 10.0, 8);
  Eigen::MatrixXd H(1, 4);
  H << 0, 0, 0, 1;
  ObservationModel om(H, Eigen::MatrixXd::Constant(1, 1, 1e-12));
  std::vector<double> times{0.5, 2.0, 7.25, 10.0};
  auto obs = observe(traj, om, times, 4);
  for (std::size_t i = 0; i < times.size(); ++i)
    EXPECT_NEAR(obs.values[i][0], state_at(traj, times[i])[3], 1e-5);
}

TEST(Observe, OnlySelectedSpeciesMatters) {
  Eigen::MatrixXd H(1, 4);
  H << 0, 0, 0, 1;
  ObservationModel om(H, Eigen::MatrixXd::Identity(1, 1));
  JumpTrajectory a, b;
  a.horizon = b.horizon = 1.0;
  a.states = {StateVector{{5, 1, 9, 2}}};
  b.states = {StateVector{{0, 7, 3, 2}}};
  auto ya = observe(a, om, {0.5, 1.0}, 17);
  auto yb = observe(b, om, {0.5, 1.0}, 17);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(ya.values[i], yb.values[i]);
}

TEST(Observe, NoiseCovarianceMatchesSigma) {
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd S(2, 2);
  S << 2.0, 0.5, 0.5, 1.0;
  ObservationModel om(H, S);
  JumpTrajectory traj;
  traj.horizon = 1.0;
  traj.states = {StateVector{{3, 4}}};
  const int runs = 10000;
  std::vector<Eigen::VectorXd> noise;
  for (int s = 0; s < runs; ++s)
    noise.push_back(observe(traj, om, {1.0}, derive_seed(5, s)).values[0] - Eigen::Vector2d(3, 4));
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& e : noise) mean += e;
  mean /= runs;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& e : noise) cov += (e - mean) * (e - mean).transpose();
  cov /= runs - 1;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      const double se = std::sqrt((S(r, r) * S(c, c) + S(r, c) * S(r, c)) / runs);
      EXPECT_NEAR(cov(r, c), S(r, c), 5.0 * se) << r << "," << c;
    }
}

TEST(Observe, RejectsTimesOutsideHorizon) {
  JumpTrajectory traj;
  traj.horizon = 1.0;
  traj.states = {StateVector{{1}}};
  ObservationModel om(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1));
  EXPECT_THROW(observe(traj, om, {0.5, 1.5}, 1), ValidationError);
}

TEST(ObservationModel, RejectsIndefiniteSigma) {
  Eigen::MatrixXd S(2, 2);
  S << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(ObservationModel(Eigen::MatrixXd::Identity(2, 2), S), ValidationError);
  Eigen::MatrixXd A(2, 2);
  A << 1.0, 0.1, 0.0, 1.0;
  EXPECT_THROW(ObservationModel(Eigen::MatrixXd::Identity(2, 2), A), ValidationError);
}

TEST(ObservationTimes, SortedInsideHorizon) {
  auto t = random_observation_times(50, 3.0, 12);
  ASSERT_EQ(t.size(), 50u);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_GT(t[i], i == 0 ? 0.0 : t[i - 1]);
    EXPECT_LE(t[i], 3.0);
  }
}

TEST(Csv, TrajectoryAndObservationsRoundTrip) {
  auto net = testnet::lotka_volterra();
  auto traj = simulate(net, StateVector{{50, 100}}, 2.0, 9);
  const auto dir = std::filesystem::temp_directory_path() / "crnep_test_ssa";
  std::filesystem::create_directories(dir);
  write_trajectory_csv(traj, net.species_names(), dir / "traj.csv");
  auto back = read_trajectory_csv(dir / "traj.csv");
  EXPECT_EQ(back.horizon, traj.horizon);
  for (double t : {0.0, 0.3, 1.1, 2.0}) EXPECT_EQ(state_at(back, t), state_at(traj, t));

  ObservationModel om(Eigen::MatrixXd::Identity(2, 2), 4.0 * Eigen::MatrixXd::Identity(2, 2));
  auto obs = observe(traj, om, {0.5, 1.5}, 3);
  write_observations_csv(obs, dir / "obs.csv");
  auto obs2 = read_observations_csv(dir / "obs.csv", om);
  ASSERT_EQ(obs2.size(), 2);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(obs2.times[i], obs.times[i]);
    EXPECT_TRUE(obs2.values[i].isApprox(obs.values[i], 1e-15));
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace crnep
