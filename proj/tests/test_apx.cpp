#include <cmath>
#include <filesystem>
#include <memory>

#include <gtest/gtest.h>

#include "crnep/apx.hpp"
#include "crnep/ep.hpp"
#include "crnep/errors.hpp"
#include "crnep/exact.hpp"
#include "networks.hpp"

namespace crnep {
namespace {

ObservationSet scalar_obs(std::vector<double> times, std::vector<double> ys, double var) {
  std::vector<Eigen::VectorXd> values;
  for (double y : ys) values.push_back(Eigen::VectorXd::Constant(1, y));
  return ObservationSet{std::move(times), std::move(values),
                        ObservationModel(Eigen::MatrixXd::Identity(1, 1),
                                         Eigen::MatrixXd::Constant(1, 1, var))};
}

std::vector<Eigen::VectorXd> zero_sites(int count, int n) {
  return std::vector<Eigen::VectorXd>(static_cast<std::size_t>(count), Eigen::VectorXd::Zero(n));
}

double max_rel_mean_error(const NaturalParamPath& path, const TimeGrid& grid,
                          const StateSpaceBox& box, const std::vector<Eigen::VectorXd>& probs) {
  double worst = 0.0;
  for (int k = 0; k < grid.size(); ++k) {
    const auto exact = moments(box, probs[k]).mean;
    const auto apx = path.mean(k);
    worst = std::max(worst, ((apx - exact).array().abs() / exact.array()).maxCoeff());
  }
  return worst;
}

TEST(InitialParams, AreTheInitialLogRates) {
  auto net = testnet::make({"A", "B"}, {{1, 0}}, {{0, 1}}, {1.0}, {0.2, -1.0});
  EXPECT_EQ(initial_params(net), Eigen::Vector2d(0.2, -1.0));
  auto flat = testnet::make({"A"}, {{1}}, {{0}}, {1.0}, {0.0});
  EXPECT_EQ(initial_params(flat)[0], 0.0);
}

TEST(InitialParams, MatchProjectionOfTruncatedInitialLaw) {
  auto net = testnet::isomerization();
  Eigen::VectorXi caps(2);
  caps << 40, 40;
  auto box = std::make_shared<const StateSpaceBox>(caps);
  auto projected = project_poisson(truncated_poisson(box, net.initial_log_rates()));
  EXPECT_LT((projected - initial_params(net)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(PredictDrift, Birth) {
  auto net = testnet::pure_birth(3.0);
  EXPECT_NEAR(predict_drift(net, Eigen::VectorXd::Constant(1, std::log(2.0)))[0], 1.5, 1e-15);
}

TEST(PredictDrift, Degradation) {
  auto net = testnet::make({"X"}, {{1}}, {{0}}, {0.7}, {0.0});
  for (double th : {-3.0, 0.0, 2.5})
    EXPECT_NEAR(predict_drift(net, Eigen::VectorXd::Constant(1, th))[0], -0.7, 1e-14);
}

TEST(PredictDrift, PredationTerm) {
  auto net = testnet::make({"Prey", "Predator"}, {{1, 1}}, {{0, 2}}, {0.01}, {0.0, 0.0});
  auto d = predict_drift(net, Eigen::Vector2d(std::log(10.0), std::log(5.0)));
  EXPECT_NEAR(d[0], -0.05, 1e-15);
  EXPECT_NEAR(d[1], 0.10, 1e-15);
}

TEST(SmootherDrift, EqualsPredictDriftOnDiagonal) {
  auto net = testnet::lotka_volterra();
  Eigen::Vector2d th(std::log(40.0), std::log(90.0));
  EXPECT_LT((smoother_drift(net, th, th) - predict_drift(net, th)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SmootherDrift, Degradation) {
  const double c = 0.3;
  auto net = testnet::make({"X"}, {{1}}, {{0}}, {c}, {0.0});
  auto d = smoother_drift(net, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, std::log(2.0)));
  EXPECT_NEAR(d[0], -2.0 * c, 1e-15);
}

TEST(SmootherDrift, MatchesBackwardRatesOnABox) {
  // Plug product-Poisson filter and smoother laws into the exact backward
  // equation on a box and project the mean derivative.
  const double k = 0.8;
  auto net = testnet::conversion(k);
  Eigen::VectorXi caps(2);
  caps << 45, 45;
  auto box = std::make_shared<const StateSpaceBox>(caps);
  auto gen = build_generator(net, box);
  const Eigen::Vector2d th(std::log(5.0), std::log(3.0));
  const Eigen::Vector2d ths(std::log(4.0), std::log(4.5));
  const auto pi = truncated_poisson(box, th).probs;
  const auto pis = truncated_poisson(box, ths).probs;
  Eigen::Vector2d dmean = Eigen::Vector2d::Zero();
  for (const auto& tr : gen.transitions) {
    const Eigen::Vector2d nu = (box->state(tr.to) - box->state(tr.from)).cast<double>();
    dmean += tr.rate * pi[tr.from] * pis[tr.to] / pi[tr.to] * nu;
  }
  const Eigen::Vector2d numeric = dmean.array() / ths.array().exp();
  EXPECT_LT((smoother_drift(net, ths, th) - numeric).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ToGaussian, Basics) {
  auto g = to_gaussian(Eigen::VectorXd::Zero(3));
  EXPECT_EQ(g.mean, Eigen::VectorXd::Ones(3));
  EXPECT_TRUE(g.cov.isIdentity());
  auto g4 = to_gaussian(Eigen::VectorXd::Constant(1, std::log(4.0)));
  EXPECT_NEAR(g4.mean[0], 4.0, 1e-15);
  EXPECT_NEAR(g4.cov(0, 0), 4.0, 1e-15);
}

TEST(ToGaussian, MatchesTruncatedPoissonMoments) {
  Eigen::VectorXi caps(2);
  caps << 60, 60;
  auto box = std::make_shared<const StateSpaceBox>(caps);
  const Eigen::Vector2d th(std::log(6.5), std::log(2.2));
  auto g = to_gaussian(th);
  auto m = moments(truncated_poisson(box, th));
  EXPECT_LT((g.mean - m.mean).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((g.cov - m.cov).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(MomentMatchUpdate, ScalarArithmetic) {
  ObservationModel om(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1));
  auto xi = moment_match_update(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 2.0), om);
  EXPECT_NEAR(xi[0], std::log(1.5), 1e-15);
}

TEST(MomentMatchUpdate, ZeroInnovation) {
  Eigen::MatrixXd H(1, 2);
  H << 1.0, 2.0;
  ObservationModel om(H, Eigen::MatrixXd::Constant(1, 1, 0.7));
  const Eigen::Vector2d th(std::log(3.0), std::log(1.5));
  auto xi = moment_match_update(th, H * th.array().exp().matrix(), om);
  EXPECT_LT(xi.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MomentMatchUpdate, TruncatesAtFloor) {
  ObservationModel om(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1));
  auto xi = moment_match_update(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, -10.0), om);
  EXPECT_NEAR(xi[0], std::log(1e-6), 1e-12);
}

TEST(MomentMatchUpdate, SecondUpdateShrinksInnovation) {
  Eigen::MatrixXd H(1, 2);
  H << 0.0, 1.0;
  ObservationModel om(H, Eigen::MatrixXd::Constant(1, 1, 2.0));
  const Eigen::Vector2d th(std::log(3.0), std::log(4.0));
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 9.0);
  const Eigen::VectorXd th1 = th + moment_match_update(th, y, om);
  const Eigen::VectorXd th2 = th1 + moment_match_update(th1, y, om);
  const double r0 = std::abs(y[0] - std::exp(th[1]));
  const double r1 = std::abs(y[0] - std::exp(th1[1]));
  const double r2 = std::abs(y[0] - std::exp(th2[1]));
  EXPECT_LT(r1, r0);
  EXPECT_LT(r2, r1);
  EXPECT_NEAR(th1[0], th[0], 1e-15);  // unobserved and uncorrelated
}

TEST(IntegrateFilter, NoReactionsIsConstant) {
  ReactionNetwork net({"A", "B"}, Eigen::MatrixXi(2, 0), Eigen::MatrixXi(2, 0),
                      Eigen::VectorXd(0), Eigen::Vector2d(0.4, -0.3));
  auto grid = make_grid(2.0, 0.1, {0.7});
  auto path = integrate_filter(net, grid, zero_sites(1, 2));
  for (const auto& v : path.values) EXPECT_EQ(v, net.initial_log_rates());
}

TEST(IntegrateFilter, DegradationDecaysExactly) {
  const double c = 0.9;
  auto net = testnet::make({"X"}, {{1}}, {{0}}, {c}, {std::log(20.0)});
  auto grid = make_grid(5.0, 0.01, {});
  auto path = integrate_filter(net, grid, zero_sites(0, 1));
  for (int k = 0; k < grid.size(); ++k)
    EXPECT_NEAR(path.mean(k)[0], 20.0 * std::exp(-c * grid.times[k]), 1e-8) << k;
}

TEST(IntegrateFilter, ResetAddsSite) {
  auto net = testnet::birth_death();
  auto grid = make_grid(3.0, 0.05, {1.0, 2.0});
  std::vector<Eigen::VectorXd> sites{Eigen::VectorXd::Constant(1, 0.3),
                                     Eigen::VectorXd::Constant(1, -0.2)};
  auto path = integrate_filter(net, grid, sites);
  for (int i = 0; i < 2; ++i) {
    const int node = grid.obs_nodes[i];
    EXPECT_NEAR(path.values[node][0] - path.left_limits[i][0], sites[i][0], 1e-14);
    EXPECT_EQ(path.left_value(node), path.left_limits[i]);
  }
}

TEST(IntegrateFilter, ResetRespectsMeanFloor) {
  auto net = testnet::birth_death();
  auto grid = make_grid(2.0, 0.05, {1.0});
  auto path = integrate_filter(net, grid, {Eigen::VectorXd::Constant(1, -25.0)});
  EXPECT_NEAR(path.values[grid.obs_nodes[0]][0], std::log(1e-6), 1e-12);
}

TEST(IntegrateFilter, ClampsHugeParameters) {
  auto net = testnet::make({"X"}, {{1}}, {{0}}, {0.1}, {40.0});
  auto grid = make_grid(1.0, 0.1, {});
  ApxDiagnostics diag;
  auto path = integrate_filter(net, grid, zero_sites(0, 1), {}, &diag);
  EXPECT_LE(path.values.front()[0], 30.0);
  EXPECT_GT(diag.clamp_events, 0);
}

TEST(IntegrateFilter, MeanSpaceConsistency) {
  auto net = testnet::lotka_volterra();
  auto grid = make_grid(2.0, 0.001, {});
  auto path = integrate_filter(net, grid, zero_sites(0, 2));
  for (int k = 100; k + 1 < grid.size(); k += 300) {
    const Eigen::Vector2d fd = (path.mean(k + 1) - path.mean(k - 1)) / (2 * 0.001);
    Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
    const auto lam = path.mean(k);
    for (int j = 0; j < net.num_reactions(); ++j) {
      double rate = net.rates()[j];
      for (int i = 0; i < 2; ++i) rate *= std::pow(lam[i], net.substrate_stoich()(i, j));
      rhs += rate * net.change_matrix().col(j).cast<double>();
    }
    EXPECT_LT((fd - rhs).cwiseAbs().maxCoeff(), 1e-4 * (1 + rhs.cwiseAbs().maxCoeff())) << k;
  }
}

TEST(IntegrateFilter, ClosedLoopConservesTotalMean) {
  auto net = testnet::closed_loop();
  auto grid = make_grid(10.0, 0.01, {2.0, 5.5});
  std::vector<Eigen::VectorXd> sites{Eigen::Vector4d(0, 0, 0, 0.4), Eigen::Vector4d(0, 0, 0, -0.6)};
  auto path = integrate_filter(net, grid, sites);
  const double tol = 1e-6;
  double total = path.mean(0).sum();
  for (int k = 1; k < grid.size(); ++k) {
    const int i = grid.obs_at_node[k];
    const double before = i >= 0 ? path.left_limits[i].array().exp().sum() : path.mean(k).sum();
    EXPECT_NEAR(before, total, tol) << k;
    total = path.mean(k).sum();
  }
}

TEST(IntegrateFilter, MonomolecularMeansAreExact) {
  auto net = testnet::isomerization();
  Eigen::VectorXi caps(2);
  caps << 40, 40;
  auto box = std::make_shared<const StateSpaceBox>(caps);
  auto grid = make_grid(4.0, 0.01, {});
  auto path = integrate_filter(net, grid, zero_sites(0, 2));
  auto gen = build_generator(net, box);
  auto p = truncated_poisson(box, net.initial_log_rates());
  double worst = 0.0;
  for (int k = 0; k < grid.size(); k += 50) {
    auto pk = master_solve(gen, p, grid.times[k]);
    worst = std::max(worst, (path.mean(k) - moments(pk).mean).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-4);
}

class BirthDeathOracle : public ::testing::Test {
 protected:
  void SetUp() override {
    net = std::make_unique<ReactionNetwork>(testnet::birth_death());
    obs = std::make_unique<ObservationSet>(scalar_obs({1.2, 4.5, 8.0}, {7.4, 6.1, 11.8}, 1.0));
    grid = make_grid(10.0, 0.01, obs->times);
    Eigen::VectorXi caps(1);
    caps << 60;
    box = std::make_shared<const StateSpaceBox>(caps);
    gen = std::make_unique<Generator>(build_generator(*net, box));
  }
  std::unique_ptr<ReactionNetwork> net;
  std::unique_ptr<ObservationSet> obs;
  TimeGrid grid;
  BoxPtr box;
  std::unique_ptr<Generator> gen;
};

TEST_F(BirthDeathOracle, AdfFilterTracksExactFilter) {
  auto adf = assumed_density_filter(*net, grid, *obs);
  auto exact = exact_filter(*gen, truncated_poisson(box, net->initial_log_rates()), grid, *obs);
  EXPECT_LT(max_rel_mean_error(adf, grid, *box, exact.post), 0.05);
}

TEST_F(BirthDeathOracle, EpSmootherTracksExactSmoother) {
  auto ep = ep_run(*net, *obs, grid);
  ASSERT_TRUE(ep.converged);
  auto exact = exact_filter(*gen, truncated_poisson(box, net->initial_log_rates()), grid, *obs);
  auto beta = exact_smoother_beta(*gen, exact, *obs);
  EXPECT_LT(max_rel_mean_error(ep.smoother, grid, *box, beta.probs), 0.05);
}

TEST_F(BirthDeathOracle, SmootherEndsAtFilterAndMatchesItAfterLastObservation) {
  auto adf = assumed_density_filter(*net, grid, *obs);
  auto smoother = integrate_smoother(*net, adf);
  EXPECT_EQ(smoother.values.back(), adf.values.back());
  for (int k = grid.obs_nodes.back(); k < grid.size(); ++k)
    EXPECT_LT((smoother.values[k] - adf.values[k]).cwiseAbs().maxCoeff(), 1e-8) << k;
}

TEST(IntegrateSmoother, NoObservationsReturnsFilter) {
  auto net = testnet::lotka_volterra();
  auto grid = make_grid(5.0, 0.01, {});
  auto filter = integrate_filter(net, grid, zero_sites(0, 2));
  auto smoother = integrate_smoother(net, filter);
  double worst = 0.0;
  for (int k = 0; k < grid.size(); ++k)
    worst = std::max(worst, (smoother.values[k] - filter.values[k]).cwiseAbs().maxCoeff());
  EXPECT_LT(worst, 1e-8);
}

TEST(PathCsv, RoundTrip) {
  auto net = testnet::birth_death();
  auto obs = scalar_obs({0.5, 1.5}, {6.0, 4.0}, 1.0);
  auto grid = make_grid(2.0, 0.1, obs.times);
  auto path = assumed_density_filter(net, grid, obs);
  const auto file = std::filesystem::temp_directory_path() / "crnep_test_path.csv";
  write_path_csv(path, file);
  auto back = read_path_csv(file);
  ASSERT_EQ(back.grid.times, path.grid.times);
  EXPECT_EQ(back.grid.obs_nodes, path.grid.obs_nodes);
  for (int k = 0; k < grid.size(); ++k) EXPECT_EQ(back.values[k], path.values[k]);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(back.left_limits[i], path.left_limits[i]);
  std::filesystem::remove(file);
}

}  // namespace
}  // namespace crnep
