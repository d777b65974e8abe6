#include "crnep/ep.hpp"

#include <cmath>
#include <sstream>

#include "crnep/csv.hpp"
#include "crnep/errors.hpp"

namespace crnep {

void validate(const EPConfig& config) {
  if (!(config.damping > 0.0 && config.damping <= 1.0))
    throw ValidationError("EP damping must lie in (0, 1]");
  if (config.max_iterations < 1) throw ValidationError("EP needs at least one iteration");
  if (!(config.tolerance > 0.0)) throw ValidationError("EP tolerance must be positive");
}

EPResult ep_run(const ReactionNetwork& net, const ObservationSet& obs, const TimeGrid& grid,
                const EPConfig& config, const std::vector<Eigen::VectorXd>& initial_sites) {
  validate(config);
  validate(obs, grid.horizon());
  if (obs.obs_model.state_dim() != net.num_species())
    throw ValidationError("observation matrix H has " + std::to_string(obs.obs_model.state_dim()) +
                          " columns, network has " + std::to_string(net.num_species()) +
                          " species");
  const int N = obs.size();
  const int n = net.num_species();
  EPResult res;
  if (initial_sites.empty()) {
    res.sites.xi.assign(static_cast<std::size_t>(N), Eigen::VectorXd::Zero(n));
  } else {
    if (static_cast<int>(initial_sites.size()) != N)
      throw ValidationError("expected " + std::to_string(N) + " initial sites, got " +
                            std::to_string(initial_sites.size()));
    for (const auto& xi : initial_sites)
      if (xi.size() != n || !xi.allFinite())
        throw ValidationError("initial sites must be finite vectors of length " +
                              std::to_string(n));
    res.sites.xi = initial_sites;
  }

  for (int it = 1; N > 0 && it <= config.max_iterations; ++it) {
    ApxDiagnostics diag;
    const auto filter = integrate_filter(net, grid, res.sites.xi, config.apx, &diag);
    const auto smoother = integrate_smoother(net, filter, config.apx, &diag);

    std::vector<Eigen::VectorXd> revised(static_cast<std::size_t>(N));
    double delta = 0.0;
    for (int i = 0; i < N; ++i) {
      const auto& old = res.sites.xi[static_cast<std::size_t>(i)];
      Eigen::VectorXd cav = cavity(smoother.values[grid.obs_nodes[i]], old);
      if (!cav.allFinite())
        throw NumericError("cavity for observation " + std::to_string(i + 1) +
                           " is not finite at EP iteration " + std::to_string(it));
      for (Eigen::Index d = 0; d < n; ++d) {
        if (std::abs(cav[d]) > config.apx.clamp) {
          cav[d] = std::copysign(config.apx.clamp, cav[d]);
          ++diag.clamp_events;
        }
      }
      const Eigen::VectorXd site =
          moment_match_update(cav, obs.values[i], obs.obs_model, config.apx.eps_lambda);
      revised[i] = damp(old, site, config.damping);
      delta = std::max(delta, (revised[i] - old).cwiseAbs().maxCoeff());
    }
    res.sites.xi = std::move(revised);
    res.sites.iteration = it;
    res.iterations = it;
    res.residuals.push_back(delta);
    res.log.push_back({it, delta, diag.clamp_events});
    if (!(delta <= config.divergence_limit)) {
      std::ostringstream trace;
      for (double r : res.residuals) trace << " " << r;
      throw NumericError("EP diverged at iteration " + std::to_string(it) +
                         "; residual trace:" + trace.str());
    }
    if (delta < config.tolerance) {
      res.converged = true;
      break;
    }
  }
  if (N == 0) res.converged = true;
  res.filter = integrate_filter(net, grid, res.sites.xi, config.apx);
  res.smoother = integrate_smoother(net, res.filter, config.apx);
  return res;
}

EPResult ep_run(const ReactionNetwork& net, const ObservationSet& obs, double horizon,
                double grid_step, const EPConfig& config) {
  return ep_run(net, obs, make_grid(horizon, grid_step, obs.times), config);
}

void write_sites_csv(const SiteBank& sites, const std::filesystem::path& file) {
  const auto n = sites.xi.empty() ? 0 : sites.xi.front().size();
  std::vector<std::string> header{"obs_index"};
  for (Eigen::Index d = 0; d < n; ++d) header.push_back("xi_" + std::to_string(d + 1));
  csv::Writer w(file, header);
  for (std::size_t i = 0; i < sites.xi.size(); ++i) {
    w.field(static_cast<long long>(i + 1));
    for (Eigen::Index d = 0; d < n; ++d) w.field(sites.xi[i][d]);
    w.end_row();
  }
}

SiteBank read_sites_csv(const std::filesystem::path& file) {
  const auto table = csv::read(file);
  if (table.header.empty() || table.header.front() != "obs_index")
    throw ValidationError(file.string() + ": first column must be 'obs_index'");
  const auto n = static_cast<int>(table.header.size()) - 1;
  SiteBank sites;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (csv::to_int(table.rows[r][0]) != static_cast<long long>(r + 1))
      throw ValidationError(file.string() + ": obs_index must run 1, 2, ...");
    Eigen::VectorXd xi(n);
    for (int d = 0; d < n; ++d) xi[d] = csv::to_double(table.rows[r][d + 1]);
    sites.xi.push_back(std::move(xi));
  }
  return sites;
}

void write_ep_log_csv(const EPResult& result, const std::filesystem::path& file) {
  csv::Writer w(file, {"iteration", "max_site_delta", "clamp_events"});
  for (const auto& row : result.log) {
    w.field(row.iteration);
    w.field(row.max_site_delta);
    w.field(static_cast<long long>(row.clamp_events));
    w.end_row();
  }
}

}  // namespace crnep
