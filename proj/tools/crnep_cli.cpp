// Command line front end: simulate, infer, learn, oracle, compare.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crnep/apx.hpp"
#include "crnep/config.hpp"
#include "crnep/csv.hpp"
#include "crnep/em.hpp"
#include "crnep/ep.hpp"
#include "crnep/errors.hpp"
#include "crnep/exact.hpp"
#include "crnep/model.hpp"
#include "crnep/ssa.hpp"

namespace fs = std::filesystem;
using namespace crnep;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

constexpr double kTruncationWarning = 1e-4;

struct Overrides {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<double> grid_step;
  std::optional<double> damping;
  std::optional<int> max_iter;
  std::optional<double> tol;
  std::optional<std::string> caps;
};

enum class Command { Simulate, Infer, Learn, Oracle };

struct Run {
  RunConfig cfg;
  ReactionNetwork net;
  ObservationSet obs;
  std::optional<JumpTrajectory> traj;
  TimeGrid grid;
};

RunConfig load_with_overrides(const Overrides& o, Command cmd) {
  RunConfig cfg = load_config(o.config);
  if (o.out) cfg.output_dir = *o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.grid_step) {
    if (!(*o.grid_step > 0.0)) throw ValidationError("--grid-step must be positive");
    cfg.grid_step = *o.grid_step;
  }
  if (o.damping) cfg.ep.damping = *o.damping;
  if (o.max_iter) {
    if (cmd == Command::Learn) cfg.em.max_iterations = *o.max_iter;
    else cfg.ep.max_iterations = *o.max_iter;
  }
  if (o.tol) {
    if (cmd == Command::Learn) cfg.em.bound_tol = *o.tol;
    else cfg.ep.tolerance = *o.tol;
  }
  if (o.caps) cfg.oracle_caps = parse_caps(*o.caps);
  validate(cfg.ep);
  if (cfg.em.max_iterations < 1) throw ValidationError("--max-iter must be at least 1");
  if (!(cfg.em.bound_tol >= 0.0)) throw ValidationError("--tol must be non-negative");
  return cfg;
}

Run prepare(const Overrides& o, Command cmd) {
  RunConfig cfg = load_with_overrides(o, cmd);
  ReactionNetwork net = load_model(cfg.model_path);
  if (cfg.H.cols() != net.num_species())
    throw ValidationError("obs_model.H has " + std::to_string(cfg.H.cols()) +
                          " columns, model has " + std::to_string(net.num_species()) + " species");
  ObservationModel om(cfg.H, cfg.Sigma);
  std::optional<JumpTrajectory> traj;
  ObservationSet obs{{}, {}, om};
  if (cfg.observations_path && cmd != Command::Simulate) {
    obs = read_observations_csv(*cfg.observations_path, om);
    validate(obs, cfg.horizon);
  } else {
    auto data = simulate_data(cfg, net);
    traj = std::move(data.trajectory);
    obs = std::move(data.observations);
  }
  TimeGrid grid = make_grid(cfg.horizon, cfg.grid_step, obs.times);
  fs::create_directories(cfg.output_dir);
  return Run{std::move(cfg), std::move(net), std::move(obs), std::move(traj), std::move(grid)};
}

void write_json(const ordered_json& doc, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + file.string());
}

ordered_json matrix_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------- commands

int cmd_simulate(const Overrides& o) {
  const Run run = prepare(o, Command::Simulate);
  write_trajectory_csv(*run.traj, run.net.species_names(), run.cfg.output_dir / "trajectory.csv");
  write_observations_csv(run.obs, run.cfg.output_dir / "observations.csv");
  std::cout << "wrote " << (run.cfg.output_dir / "trajectory.csv").string() << " ("
            << run.traj->jump_times.size() << " jumps) and "
            << (run.cfg.output_dir / "observations.csv").string() << " (" << run.obs.size()
            << " observations)\n";
  return 0;
}

std::vector<Eigen::VectorXd> filter_mode_sites(const Run& run) {
  const int N = run.obs.size();
  const int n = run.net.num_species();
  const std::string& spec = run.cfg.filter_sites;
  if (spec == "zero") return std::vector<Eigen::VectorXd>(static_cast<std::size_t>(N), Eigen::VectorXd::Zero(n));
  if (spec == "adf") {
    const auto adf = assumed_density_filter(run.net, run.grid, run.obs, run.cfg.ep.apx);
    std::vector<Eigen::VectorXd> sites;
    for (int i = 0; i < N; ++i)
      sites.push_back(adf.values[run.grid.obs_nodes[i]] - adf.left_limits[i]);
    return sites;
  }
  const SiteBank bank = read_sites_csv(spec);
  if (static_cast<int>(bank.xi.size()) != N)
    throw ValidationError(spec + " holds " + std::to_string(bank.xi.size()) + " sites, there are " +
                          std::to_string(N) + " observations");
  for (const auto& xi : bank.xi)
    if (xi.size() != n) throw ValidationError(spec + ": sites must have " + std::to_string(n) + " entries");
  return bank.xi;
}

int cmd_infer(const Overrides& o, const std::string& mode) {
  const Run run = prepare(o, Command::Infer);
  const fs::path& out = run.cfg.output_dir;
  write_observations_csv(run.obs, out / "observations.csv");
  if (mode == "ep") {
    const EPResult res = ep_run(run.net, run.obs, run.grid, run.cfg.ep);
    write_path_csv(res.filter, out / "filter_path.csv");
    write_path_csv(res.smoother, out / "smoother_path.csv");
    write_sites_csv(res.sites, out / "sites.csv");
    write_ep_log_csv(res, out / "ep_log.csv");
    if (!res.converged)
      std::cerr << "warning: EP stopped after " << res.iterations
                << " iterations without reaching the tolerance (last residual "
                << (res.residuals.empty() ? 0.0 : res.residuals.back()) << ")\n";
    std::cout << "EP " << (res.converged ? "converged" : "stopped") << " after " << res.iterations
              << " iterations; outputs in " << out.string() << "\n";
    return 0;
  }
  SiteBank bank;
  bank.xi = filter_mode_sites(run);
  const auto filter = integrate_filter(run.net, run.grid, bank.xi, run.cfg.ep.apx);
  write_path_csv(filter, out / "filter_path.csv");
  write_sites_csv(bank, out / "sites.csv");
  if (mode == "smooth")
    write_path_csv(integrate_smoother(run.net, filter, run.cfg.ep.apx), out / "smoother_path.csv");
  std::cout << "wrote " << mode << " outputs to " << out.string() << "\n";
  return 0;
}

int cmd_learn(const Overrides& o) {
  Run run = prepare(o, Command::Learn);
  const fs::path& out = run.cfg.output_dir;
  write_observations_csv(run.obs, out / "observations.csv");
  ReactionNetwork start = run.net;
  if (run.cfg.em_initial_rates) {
    if (run.cfg.em_initial_rates->size() != start.num_reactions())
      throw ValidationError("em.initial_rates needs " + std::to_string(start.num_reactions()) + " entries");
    start = start.with_rates(*run.cfg.em_initial_rates);
  }
  EmConfig em = run.cfg.em;
  em.mask = resolve_mask(run.cfg, start);
  const EmResult res = em_run(start, run.obs, run.grid, run.cfg.ep, em);
  write_trace_csv(res, out / "learning_trace.csv");
  save_model(apply_params(start, res.params), out / "learned_model.json");
  ordered_json om;
  om["H"] = matrix_json(res.params.H);
  om["Sigma"] = matrix_json(res.params.Sigma);
  write_json(om, out / "learned_obs_model.json");
  if (!res.converged)
    std::cerr << "warning: EM used all " << em.max_iterations
              << " iterations without meeting the bound tolerance\n";
  std::cout << "EM " << (res.converged ? "converged" : "stopped") << " after " << res.trace.size()
            << " iterations; outputs in " << out.string() << "\n";
  return 0;
}

// Means exp(theta) of a path at every node.
std::vector<Eigen::VectorXd> path_means(const NaturalParamPath& path) {
  std::vector<Eigen::VectorXd> m;
  for (int k = 0; k < path.grid.size(); ++k) m.push_back(path.mean(k));
  return m;
}

std::vector<Eigen::VectorXd> exact_means(const StateSpaceBox& box, const std::vector<Eigen::VectorXd>& probs) {
  std::vector<Eigen::VectorXd> m;
  for (const auto& p : probs) m.push_back(moments(box, p).mean);
  return m;
}

struct MeanError {
  double rmse = 0.0;
  double max_abs = 0.0;
};

MeanError compare_means(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
  MeanError e;
  double sq = 0.0;
  long count = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const Eigen::VectorXd d = a[k] - b[k];
    sq += d.squaredNorm();
    count += d.size();
    e.max_abs = std::max(e.max_abs, d.cwiseAbs().maxCoeff());
  }
  e.rmse = count > 0 ? std::sqrt(sq / static_cast<double>(count)) : 0.0;
  return e;
}

int cmd_oracle(const Overrides& o) {
  const Run run = prepare(o, Command::Oracle);
  const RunConfig& cfg = run.cfg;
  const fs::path& out = cfg.output_dir;
  if (cfg.oracle_caps.size() == 0) throw ValidationError("oracle needs caps (--caps or oracle.caps)");
  if (cfg.oracle_caps.size() != run.net.num_species())
    throw ValidationError("caps have " + std::to_string(cfg.oracle_caps.size()) +
                          " entries, model has " + std::to_string(run.net.num_species()) + " species");
  std::vector<LinearConstraint> constraints;
  if (cfg.oracle_max_total)
    constraints.push_back({Eigen::VectorXi::Ones(run.net.num_species()), 0, *cfg.oracle_max_total});
  const auto box = std::make_shared<const StateSpaceBox>(cfg.oracle_caps, constraints);
  write_observations_csv(run.obs, out / "observations.csv");

  const Eigen::VectorXd theta0 = run.net.initial_log_rates();
  const double truncated = std::max(0.0, 1.0 - poisson_mass_in_box(*box, theta0));
  const TruncatedDistribution p0 = truncated_poisson(box, theta0);
  const Generator gen = build_generator(run.net, box);
  const ExactOptions eopts;
  const auto filter = exact_filter(gen, p0, run.grid, run.obs, eopts);
  const auto smoother = exact_smoother_beta(gen, filter, run.obs, eopts);

  std::vector<std::string> warnings;
  ordered_json route_tv = nullptr;
  long cap_events = 0;
  if (box->size() <= cfg.oracle_backward_max_states) {
    const auto backward = exact_smoother_backward(gen, filter, eopts);
    cap_events = backward.rate_cap_events;
    double tv = 0.0;
    for (int k = 0; k < run.grid.size(); ++k)
      tv = std::max(tv, total_variation(backward.probs[k], smoother.probs[k]));
    route_tv = tv;
  } else {
    warnings.push_back("backward-rate route skipped: " + std::to_string(box->size()) +
                       " states exceed oracle.backward_route_max_states");
  }
  if (filter.dropped_rate_mass > kTruncationWarning)
    warnings.push_back("caps too small: dropped rate mass " + csv::format(filter.dropped_rate_mass));
  if (truncated > kTruncationWarning)
    warnings.push_back("caps too small: initial law loses mass " + csv::format(truncated));

  const auto adf = assumed_density_filter(run.net, run.grid, run.obs, cfg.ep.apx);
  const EPResult ep = ep_run(run.net, run.obs, run.grid, cfg.ep);
  if (!ep.converged) warnings.push_back("EP did not reach its tolerance in " + std::to_string(ep.iterations) + " iterations");

  std::vector<Eigen::VectorXd> exact_filter_means;
  for (int k = 0; k < run.grid.size(); ++k) exact_filter_means.push_back(moments(*box, filter.post[k]).mean);
  const MeanError ferr = compare_means(path_means(adf), exact_filter_means);
  const MeanError serr = compare_means(path_means(ep.smoother), exact_means(*box, smoother.probs));

  write_moments_csv(run.grid, *box, filter.post, out / "oracle_filter.csv");
  write_moments_csv(run.grid, *box, smoother.probs, out / "oracle_smoother.csv");
  write_path_csv(ep.smoother, out / "smoother_path.csv");

  ordered_json report;
  report["model"] = cfg.model_path.string();
  report["caps"] = std::vector<int>(cfg.oracle_caps.data(), cfg.oracle_caps.data() + cfg.oracle_caps.size());
  report["filter_rmse"] = ferr.rmse;
  report["smoother_rmse"] = serr.rmse;
  report["max_abs_mean_error"] = serr.max_abs;
  report["route_tv"] = route_tv;
  report["dropped_rate_mass"] = filter.dropped_rate_mass;
  report["initial_truncated_mass"] = truncated;
  report["rate_cap_events"] = cap_events;
  report["states"] = box->size();
  report["warnings"] = warnings;
  write_json(report, out / "report.json");
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::cout << report.dump(2) << "\n";
  return 0;
}

// Columns `mean_*` of a path or moments CSV at grid nodes (pre_update rows skipped).
struct MeanTable {
  std::vector<double> times;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

MeanTable read_means(const fs::path& file) {
  const auto table = csv::read(file);
  if (table.header.empty() || table.header.front() != "time")
    throw ValidationError(file.string() + ": first column must be 'time'");
  int pre = -1;
  std::vector<int> cols;
  MeanTable m;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (table.header[c] == "pre_update") pre = static_cast<int>(c);
    if (table.header[c].rfind("mean_", 0) == 0) {
      cols.push_back(static_cast<int>(c));
      m.columns.push_back(table.header[c]);
    }
  }
  if (cols.empty()) throw ValidationError(file.string() + " has no mean_* columns");
  for (const auto& row : table.rows) {
    if (pre >= 0 && csv::to_int(row[static_cast<std::size_t>(pre)]) != 0) continue;
    m.times.push_back(csv::to_double(row[0]));
    std::vector<double> v;
    for (int c : cols) v.push_back(csv::to_double(row[static_cast<std::size_t>(c)]));
    m.rows.push_back(std::move(v));
  }
  return m;
}

int cmd_compare(const fs::path& a_file, const fs::path& b_file, const std::optional<std::string>& out) {
  const MeanTable a = read_means(a_file);
  const MeanTable b = read_means(b_file);
  if (a.columns != b.columns)
    throw ValidationError("files have different mean columns");
  if (a.times.size() != b.times.size())
    throw ValidationError("files have " + std::to_string(a.times.size()) + " and " +
                          std::to_string(b.times.size()) + " grid rows");
  double sq = 0.0, worst = 0.0;
  long count = 0;
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    if (std::abs(a.times[k] - b.times[k]) > 1e-9 * std::max(1.0, std::abs(a.times[k])))
      throw ValidationError("grids differ at row " + std::to_string(k + 1) + " (t = " +
                            csv::format(a.times[k]) + " vs " + csv::format(b.times[k]) + ")");
    for (std::size_t c = 0; c < a.columns.size(); ++c) {
      const double d = a.rows[k][c] - b.rows[k][c];
      sq += d * d;
      worst = std::max(worst, std::abs(d));
      ++count;
    }
  }
  ordered_json doc;
  doc["rows"] = a.times.size();
  doc["columns"] = a.columns;
  doc["rmse"] = count > 0 ? std::sqrt(sq / static_cast<double>(count)) : 0.0;
  doc["max_abs_error"] = worst;
  if (out) {
    fs::path file(*out);
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    write_json(doc, file);
  }
  std::cout << doc.dump(2) << "\n";
  return 0;
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)")->required();
  cmd->add_option("--out", o.out, "Output directory (overrides the config)");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--grid-step", o.grid_step, "Integration grid step");
}

void add_inference(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--damping", o.damping, "EP damping in (0, 1]");
  cmd->add_option("--max-iter", o.max_iter, "Iteration cap");
  cmd->add_option("--tol", o.tol, "Convergence tolerance");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inference for latent chemical reaction networks"};
  app.require_subcommand(1);
  Overrides o;

  auto* sim = app.add_subcommand("simulate", "Sample a trajectory and noisy observations");
  add_common(sim, o);

  std::string mode = "ep";
  auto* infer = app.add_subcommand("infer", "Approximate filtering, smoothing or EP");
  add_common(infer, o);
  add_inference(infer, o);
  infer->add_option("--mode", mode, "filter, smooth or ep")
      ->check(CLI::IsMember({"filter", "smooth", "ep"}));

  auto* learn = app.add_subcommand("learn", "Approximate EM parameter learning");
  add_common(learn, o);
  add_inference(learn, o);

  auto* oracle = app.add_subcommand("oracle", "Exact inference on a truncated state space");
  add_common(oracle, o);
  add_inference(oracle, o);
  oracle->add_option("--caps", o.caps, "Per-species copy-number caps, e.g. 40,40");

  std::string cmp_a, cmp_b;
  std::optional<std::string> cmp_out;
  auto* compare = app.add_subcommand("compare", "Compare posterior means of two path CSVs");
  compare->add_option("first", cmp_a, "Path or moments CSV")->required();
  compare->add_option("second", cmp_b, "Path or moments CSV")->required();
  compare->add_option("--out", cmp_out, "Write the comparison JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o);
    if (infer->parsed()) return cmd_infer(o, mode);
    if (learn->parsed()) return cmd_learn(o);
    if (oracle->parsed()) return cmd_oracle(o);
    if (compare->parsed()) return cmd_compare(cmp_a, cmp_b, cmp_out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitValidation;
}
