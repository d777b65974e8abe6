#ifndef CRNEP_EP_HPP
#define CRNEP_EP_HPP

#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "crnep/apx.hpp"
#include "crnep/grid.hpp"
#include "crnep/model.hpp"
#include "crnep/ssa.hpp"

namespace crnep {

/// One natural-parameter increment per observation.
struct SiteBank {
  std::vector<Eigen::VectorXd> xi;
  int iteration = 0;
};

struct EPConfig {
  double damping = 0.5;  // in (0, 1]
  int max_iterations = 100;
  double tolerance = 1e-6;  // on max_i ||xi_i^new - xi_i^old||_inf
  double divergence_limit = 1e6;
  ApxOptions apx;
};

struct EPIterationLog {
  int iteration;
  double max_site_delta;
  long clamp_events;
};

struct EPResult {
  bool converged = false;
  int iterations = 0;
  SiteBank sites;
  NaturalParamPath filter;
  NaturalParamPath smoother;
  std::vector<double> residuals;  // one per iteration
  std::vector<EPIterationLog> log;
};

inline Eigen::VectorXd cavity(const Eigen::VectorXd& theta_smooth_at_ti, const Eigen::VectorXd& xi) {
  return theta_smooth_at_ti - xi;
}

inline Eigen::VectorXd damp(const Eigen::VectorXd& old_site, const Eigen::VectorXd& revised,
                            double eps) {
  return (1.0 - eps) * old_site + eps * revised;
}

void validate(const EPConfig& config);

/**
 * Synchronous EP. Every iteration reruns the filter with the current sites and
 * the smoother on top of it, then revises all sites from that one smoother
 * pass. The returned paths are recomputed with the final sites.
 *
 * Sites start from `initial_sites` when given (one per observation), from zero
 * otherwise.
 *
 * Throws NumericError when the residual exceeds `divergence_limit` or a cavity
 * is not finite.
 */
EPResult ep_run(const ReactionNetwork& net, const ObservationSet& obs, const TimeGrid& grid,
                const EPConfig& config = {},
                const std::vector<Eigen::VectorXd>& initial_sites = {});
EPResult ep_run(const ReactionNetwork& net, const ObservationSet& obs, double horizon,
                double grid_step, const EPConfig& config = {});

/// `obs_index,xi_1..xi_n` (obs_index starts at 1).
void write_sites_csv(const SiteBank& sites, const std::filesystem::path& file);
SiteBank read_sites_csv(const std::filesystem::path& file);
/// `iteration,max_site_delta,clamp_events`.
void write_ep_log_csv(const EPResult& result, const std::filesystem::path& file);

}  // namespace crnep

#endif  // CRNEP_EP_HPP
