#include "crnep/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "crnep/errors.hpp"
#include "crnep/rng.hpp"

namespace crnep {

namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

Eigen::MatrixXd matrix_from(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty()) throw ValidationError(name + " must be a non-empty 2-D array");
  const auto rows = j.size();
  if (!j[0].is_array() || j[0].empty()) throw ValidationError(name + " must be a 2-D array");
  const auto cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw ValidationError(name + " rows must all have " + std::to_string(cols) + " entries");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  try {
    if (!j.contains("schema_version"))
      throw ValidationError("config needs \"schema_version\": " +
                            std::to_string(kConfigSchemaVersion));
    if (j.at("schema_version").get<int>() != kConfigSchemaVersion)
      throw ValidationError("unsupported schema_version " + j.at("schema_version").dump() +
                            " (expected " + std::to_string(kConfigSchemaVersion) + ")");
    if (!j.contains("model")) throw ValidationError("config needs a \"model\" path");
    cfg.model_path = resolve(base_dir, j.at("model").get<std::string>());
    if (j.contains("observations"))
      cfg.observations_path = resolve(base_dir, j.at("observations").get<std::string>());
    if (!j.contains("horizon")) throw ValidationError("config needs \"horizon\"");
    cfg.horizon = j.at("horizon").get<double>();
    if (!(cfg.horizon > 0.0)) throw ValidationError("horizon must be positive");
    read_opt(j, "grid_step", cfg.grid_step);
    if (!(cfg.grid_step > 0.0)) throw ValidationError("grid_step must be positive");
    read_opt(j, "seed", cfg.seed);

    if (!j.contains("obs_model")) throw ValidationError("config needs an \"obs_model\" block");
    const auto& om = j.at("obs_model");
    cfg.H = matrix_from(om.at("H"), "obs_model.H");
    cfg.Sigma = matrix_from(om.at("Sigma"), "obs_model.Sigma");
    ObservationModel check(cfg.H, cfg.Sigma);  // validates shape and definiteness

    if (j.contains("simulation")) {
      const auto& s = j.at("simulation");
      if (s.contains("x0")) {
        const auto v = s.at("x0").get<std::vector<int>>();
        cfg.simulation.x0 = Eigen::Map<const Eigen::VectorXi>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
      read_opt(s, "num_observations", cfg.simulation.num_observations);
      read_opt(s, "times", cfg.simulation.times);
      if (cfg.simulation.num_observations < 0)
        throw ValidationError("simulation.num_observations must be non-negative");
    }

    if (j.contains("ep")) {
      const auto& e = j.at("ep");
      read_opt(e, "damping", cfg.ep.damping);
      read_opt(e, "tolerance", cfg.ep.tolerance);
      read_opt(e, "max_iterations", cfg.ep.max_iterations);
    }
    if (j.contains("apx")) {
      const auto& a = j.at("apx");
      read_opt(a, "clamp", cfg.ep.apx.clamp);
      read_opt(a, "eps_lambda", cfg.ep.apx.eps_lambda);
    }
    if (j.contains("em")) {
      const auto& e = j.at("em");
      read_opt(e, "max_iterations", cfg.em.max_iterations);
      read_opt(e, "bound_tol", cfg.em.bound_tol);
      read_opt(e, "warm_start", cfg.em.warm_start);
      if (e.contains("estep")) {
        const auto mode = e.at("estep").get<std::string>();
        if (mode != "ep" && mode != "single")
          throw ValidationError("em.estep must be \"ep\" or \"single\"");
        cfg.em.full_ep = mode == "ep";
      }
      if (e.contains("initial_rates")) {
        const auto v = e.at("initial_rates").get<std::vector<double>>();
        cfg.em_initial_rates =
            Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
      if (e.contains("learn")) {
        const auto& l = e.at("learn");
        read_opt(l, "theta0", cfg.learn.theta0);
        read_opt(l, "H", cfg.learn.H);
        read_opt(l, "Sigma", cfg.learn.Sigma);
        if (l.contains("rates")) {
          const auto& r = l.at("rates");
          if (r.is_string() && r.get<std::string>() == "all")
            cfg.learn.all_rates = true;
          else if (r.is_boolean())
            cfg.learn.all_rates = r.get<bool>();
          else
            cfg.learn.rates = r.get<std::vector<int>>();
        }
      }
    }
    if (j.contains("infer")) read_opt(j.at("infer"), "filter_sites", cfg.filter_sites);
    if (cfg.filter_sites != "zero" && cfg.filter_sites != "adf")
      cfg.filter_sites = resolve(base_dir, cfg.filter_sites).string();
    if (j.contains("oracle")) {
      const auto& o = j.at("oracle");
      if (o.contains("caps")) {
        const auto v = o.at("caps").get<std::vector<int>>();
        cfg.oracle_caps = Eigen::Map<const Eigen::VectorXi>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
      if (o.contains("max_total")) cfg.oracle_max_total = o.at("max_total").get<int>();
      read_opt(o, "backward_route_max_states", cfg.oracle_backward_max_states);
    }
    if (j.contains("output")) cfg.output_dir = resolve(base_dir, j.at("output").get<std::string>());
    else cfg.output_dir = base_dir / "out";
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config field has the wrong type: ") + e.what());
  }
  validate(cfg.ep);
  if (cfg.em.max_iterations < 1) throw ValidationError("em.max_iterations must be at least 1");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

LearnMask resolve_mask(const RunConfig& cfg, const ReactionNetwork& net) {
  LearnMask m;
  m.theta0 = cfg.learn.theta0;
  m.H = cfg.learn.H;
  m.Sigma = cfg.learn.Sigma;
  m.rates.assign(static_cast<std::size_t>(net.num_reactions()), cfg.learn.all_rates);
  for (int r : cfg.learn.rates) {
    if (r < 1 || r > net.num_reactions())
      throw ValidationError("em.learn.rates index " + std::to_string(r) + " outside 1.." +
                            std::to_string(net.num_reactions()));
    m.rates[static_cast<std::size_t>(r - 1)] = true;
  }
  return m;
}

SimulatedData simulate_data(const RunConfig& cfg, const ReactionNetwork& net) {
  if (cfg.H.cols() != net.num_species())
    throw ValidationError("obs_model.H has " + std::to_string(cfg.H.cols()) +
                          " columns, model has " + std::to_string(net.num_species()) + " species");
  const StateVector x0 = cfg.simulation.x0
                             ? *cfg.simulation.x0
                             : sample_initial_state(net, derive_seed(cfg.seed, kInitialState));
  if (x0.size() != net.num_species())
    throw ValidationError("simulation.x0 has " + std::to_string(x0.size()) + " entries, model has " +
                          std::to_string(net.num_species()) + " species");
  JumpTrajectory traj = simulate(net, x0, cfg.horizon, derive_seed(cfg.seed, kTrajectory));
  const auto times = cfg.simulation.times.empty()
                         ? random_observation_times(cfg.simulation.num_observations, cfg.horizon,
                                                    derive_seed(cfg.seed, kObsTimes))
                         : cfg.simulation.times;
  ObservationSet obs =
      observe(traj, ObservationModel(cfg.H, cfg.Sigma), times, derive_seed(cfg.seed, kObsNoise));
  validate(obs, cfg.horizon);
  return {std::move(traj), std::move(obs)};
}

Eigen::VectorXi parse_caps(const std::string& text) {
  std::vector<int> caps;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      caps.push_back(v);
    } catch (const std::exception&) {
      throw ValidationError("--caps expects a comma list of non-negative integers, got \"" +
                            text + "\"");
    }
  }
  if (caps.empty()) throw ValidationError("--caps is empty");
  return Eigen::Map<const Eigen::VectorXi>(caps.data(), static_cast<Eigen::Index>(caps.size()));
}

}  // namespace crnep
