#include <filesystem>

#include <gtest/gtest.h>

#include "crnep/config.hpp"
#include "crnep/errors.hpp"

namespace crnep {
namespace {

const std::filesystem::path kBase = "/base";

const char* kMinimal = R"({
  "schema_version": 1,
  "model": "m.json",
  "horizon": 5,
  "obs_model": {"H": [[1, 0]], "Sigma": [[2]]}
})";

TEST(ParseConfig, MinimalUsesDefaults) {
  auto cfg = parse_config(kMinimal, kBase);
  EXPECT_EQ(cfg.model_path, kBase / "m.json");
  EXPECT_EQ(cfg.horizon, 5.0);
  EXPECT_EQ(cfg.grid_step, 0.01);
  EXPECT_EQ(cfg.ep.damping, 0.5);
  EXPECT_EQ(cfg.ep.max_iterations, 100);
  EXPECT_EQ(cfg.ep.tolerance, 1e-6);
  EXPECT_EQ(cfg.ep.apx.eps_lambda, 1e-6);
  EXPECT_EQ(cfg.ep.apx.clamp, 30.0);
  EXPECT_EQ(cfg.output_dir, kBase / "out");
  EXPECT_FALSE(cfg.observations_path.has_value());
  EXPECT_EQ(cfg.H.rows(), 1);
  EXPECT_EQ(cfg.H.cols(), 2);
}

TEST(ParseConfig, FullBlock) {
  auto cfg = parse_config(R"({
    "schema_version": 1,
    "model": "/abs/model.json",
    "observations": "data/obs.csv",
    "horizon": 10, "grid_step": 0.02, "seed": 17,
    "obs_model": {"H": [[0, 1]], "Sigma": [[0.5]]},
    "simulation": {"x0": [3, 4], "times": [1, 2, 3]},
    "ep": {"damping": 0.25, "tolerance": 1e-8, "max_iterations": 300},
    "apx": {"eps_lambda": 1e-5, "clamp": 20},
    "em": {"max_iterations": 7, "bound_tol": 1e-9, "estep": "single", "warm_start": false,
           "initial_rates": [0.1, 0.2], "learn": {"theta0": true, "rates": [2], "Sigma": true}},
    "oracle": {"caps": [10, 12], "max_total": 15, "backward_route_max_states": 500},
    "output": "results"
  })",
                          kBase);
  EXPECT_EQ(cfg.model_path, "/abs/model.json");
  EXPECT_EQ(*cfg.observations_path, kBase / "data/obs.csv");
  EXPECT_EQ(cfg.seed, 17u);
  EXPECT_EQ(*cfg.simulation.x0, (Eigen::VectorXi{{3, 4}}));
  EXPECT_EQ(cfg.simulation.times, (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(cfg.ep.damping, 0.25);
  EXPECT_EQ(cfg.ep.max_iterations, 300);
  EXPECT_EQ(cfg.ep.apx.eps_lambda, 1e-5);
  EXPECT_EQ(cfg.em.max_iterations, 7);
  EXPECT_FALSE(cfg.em.full_ep);
  EXPECT_FALSE(cfg.em.warm_start);
  EXPECT_EQ(*cfg.em_initial_rates, Eigen::Vector2d(0.1, 0.2));
  EXPECT_TRUE(cfg.learn.theta0);
  EXPECT_TRUE(cfg.learn.Sigma);
  EXPECT_FALSE(cfg.learn.H);
  EXPECT_EQ(cfg.learn.rates, std::vector<int>{2});
  EXPECT_EQ(cfg.oracle_caps, (Eigen::VectorXi{{10, 12}}));
  EXPECT_EQ(*cfg.oracle_max_total, 15);
  EXPECT_EQ(cfg.oracle_backward_max_states, 500);
  EXPECT_EQ(cfg.output_dir, kBase / "results");
}

TEST(ParseConfig, Rejections) {
  EXPECT_THROW(parse_config("{", kBase), ValidationError);
  EXPECT_THROW(parse_config(R"({"model": "m", "horizon": 1,
      "obs_model": {"H": [[1]], "Sigma": [[1]]}})", kBase), ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 2, "model": "m", "horizon": 1,
      "obs_model": {"H": [[1]], "Sigma": [[1]]}})", kBase), ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "model": "m", "horizon": -1,
      "obs_model": {"H": [[1]], "Sigma": [[1]]}})", kBase), ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "model": "m", "horizon": 1,
      "obs_model": {"H": [[1]], "Sigma": [[-1]]}})", kBase), ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "model": "m", "horizon": 1,
      "obs_model": {"H": [[1]], "Sigma": [[1]]}, "ep": {"damping": 0}})", kBase), ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "model": "m", "horizon": 1,
      "obs_model": {"H": [[1]], "Sigma": [[1]]}, "ep": {"damping": "half"}})", kBase),
               ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "model": "m", "horizon": 1,
      "obs_model": {"H": [[1, 2], [3]], "Sigma": [[1]]}})", kBase), ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "model": "m", "horizon": 1,
      "obs_model": {"H": [[1]], "Sigma": [[1]]}, "em": {"estep": "gibbs"}})", kBase),
               ValidationError);
}

TEST(LoadConfig, MissingFileIsIoError) {
  EXPECT_THROW(load_config("/nonexistent/config.json"), IoError);
}

TEST(ResolveMask, AllAndIndexed) {
  auto net = load_model(std::filesystem::path(CRNEP_SOURCE_DIR) / "models/motility.json");
  auto cfg = load_config(std::filesystem::path(CRNEP_SOURCE_DIR) / "configs/motility.json");
  auto mask = resolve_mask(cfg, net);
  ASSERT_EQ(mask.rates.size(), 12u);
  for (int j = 0; j < 12; ++j) EXPECT_EQ(mask.rate(j), j == 2 || j == 8 || j == 9) << j;

  cfg.learn.all_rates = true;
  mask = resolve_mask(cfg, net);
  for (int j = 0; j < 12; ++j) EXPECT_TRUE(mask.rate(j));

  cfg.learn.rates = {13};
  EXPECT_THROW(resolve_mask(cfg, net), ValidationError);
}

TEST(BundledConfigs, AllParse) {
  const auto dir = std::filesystem::path(CRNEP_SOURCE_DIR) / "configs";
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    auto cfg = load_config(entry.path());
    auto net = load_model(cfg.model_path);
    EXPECT_EQ(cfg.H.cols(), net.num_species()) << entry.path();
    EXPECT_NO_THROW(resolve_mask(cfg, net)) << entry.path();
  }
}

TEST(ParseCaps, Lists) {
  EXPECT_EQ(parse_caps("3,4,5"), (Eigen::VectorXi{{3, 4, 5}}));
  EXPECT_THROW(parse_caps("3,x"), ValidationError);
  EXPECT_THROW(parse_caps("-1"), ValidationError);
  EXPECT_THROW(parse_caps(""), ValidationError);
}

}  // namespace
}  // namespace crnep
