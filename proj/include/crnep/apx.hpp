#ifndef CRNEP_APX_HPP
#define CRNEP_APX_HPP

#include <filesystem>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "crnep/grid.hpp"
#include "crnep/model.hpp"
#include "crnep/ssa.hpp"

namespace crnep {

/**
 * Product-Poisson family q(x|theta) = prod_i Pois(x_i | exp(theta_i)).
 *
 * Base measure prod 1/x_i!, sufficient statistic x, log-partition
 * sum_i exp(theta_i), Fisher matrix diag(exp(theta)).
 */
namespace poisson_family {
inline Eigen::VectorXd mean(const Eigen::VectorXd& theta) { return theta.array().exp(); }
inline double log_partition(const Eigen::VectorXd& theta) { return theta.array().exp().sum(); }
inline Eigen::MatrixXd fisher(const Eigen::VectorXd& theta) {
  return theta.array().exp().matrix().asDiagonal();
}
}  // namespace poisson_family

struct ApxOptions {
  double clamp = 30.0;       // theta components kept in [-clamp, clamp]
  double eps_lambda = 1e-6;  // floor on updated Poisson means
};

/// Counters surfaced in logs; never affect results.
struct ApxDiagnostics {
  long clamp_events = 0;
};

/**
 * Time-gridded natural parameters.
 *
 * `values[k]` is the right-continuous value at node k (post-update at an
 * observation node); `left_limits[i]` is theta(t_i^-) for observation i.
 */
struct NaturalParamPath {
  TimeGrid grid;
  std::vector<Eigen::VectorXd> values;
  std::vector<Eigen::VectorXd> left_limits;

  /// Left limit at a node: the stored left limit at observation nodes, the
  /// node value elsewhere.
  const Eigen::VectorXd& left_value(int node) const {
    const int i = grid.obs_at_node[node];
    return i >= 0 ? left_limits[i] : values[node];
  }
  Eigen::VectorXd mean(int node) const { return values[node].array().exp(); }
};

Eigen::VectorXd initial_params(const ReactionNetwork& net);

/// d theta/dt = F(theta)^{-1} sum_j c_j nu_j exp(sum_i substrate_ij theta_i).
Eigen::VectorXd predict_drift(const ReactionNetwork& net, const Eigen::VectorXd& theta);

/// d theta~/dt = F(theta~)^{-1} sum_j c_j nu_j exp(substrate_j . theta~) exp(nu_j . (theta~ - theta)).
Eigen::VectorXd smoother_drift(const ReactionNetwork& net, const Eigen::VectorXd& theta_smooth,
                               const Eigen::VectorXd& theta_filter);

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Moment-matched Gaussian of q(x|theta): mean exp(theta), covariance diag(exp(theta)).
GaussianMoments to_gaussian(const Eigen::VectorXd& theta);

/**
 * Approximate conjugate update of a product-Poisson prior by a linear-Gaussian
 * observation. Returns the site xi with theta* = theta + xi, where
 * exp(theta*) is the Kalman-updated mean floored at eps_lambda.
 */
Eigen::VectorXd moment_match_update(const Eigen::VectorXd& theta, const Eigen::VectorXd& y,
                                    const ObservationModel& obs_model, double eps_lambda = 1e-6);

/// Site to add at observation i given the left-limit parameter theta(t_i^-).
using SiteFn = std::function<Eigen::VectorXd(int obs_index, const Eigen::VectorXd& theta_minus)>;

/**
 * Classical RK4 on every grid interval; theta(t_i) = theta(t_i^-) + site,
 * with the updated means floored at eps_lambda.
 *
 * The steps are taken on the means exp(theta), where the equation is the
 * mass-action rate equation. An interval is split into equal substeps when
 * the step times the largest per-capita loss rate exceeds 0.5.
 */
NaturalParamPath integrate_filter(const ReactionNetwork& net, const TimeGrid& grid,
                                  const Eigen::VectorXd& theta0, const SiteFn& site,
                                  const ApxOptions& opts = {}, ApxDiagnostics* diag = nullptr);

/// Filter driven by fixed sites (one per observation).
NaturalParamPath integrate_filter(const ReactionNetwork& net, const TimeGrid& grid,
                                  const std::vector<Eigen::VectorXd>& sites,
                                  const ApxOptions& opts = {}, ApxDiagnostics* diag = nullptr);

/// Assumed-density filter: each reset applies moment_match_update at theta(t_i^-).
NaturalParamPath assumed_density_filter(const ReactionNetwork& net, const TimeGrid& grid,
                                        const ObservationSet& obs, const ApxOptions& opts = {},
                                        ApxDiagnostics* diag = nullptr);

/**
 * Backward RK4 for the smoother from theta~(T) = theta(T), stepped on the
 * means as in the filter.
 *
 * Inside an interval the filter is recomputed at its substep points from the
 * post-update value at the left node and evaluated between them by cubic
 * Hermite interpolation. The smoother uses the same substeps, refined where
 * its own loss rate requires. The smoother path is continuous, so its left
 * limits equal its node values.
 */
NaturalParamPath integrate_smoother(const ReactionNetwork& net, const NaturalParamPath& filter,
                                    const ApxOptions& opts = {}, ApxDiagnostics* diag = nullptr);

/// `time,theta_1..n,mean_1..n,pre_update`; a pre_update=1 row precedes every
/// observation node.
void write_path_csv(const NaturalParamPath& path, const std::filesystem::path& file);
NaturalParamPath read_path_csv(const std::filesystem::path& file);

}  // namespace crnep

#endif  // CRNEP_APX_HPP
