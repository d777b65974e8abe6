#ifndef CRNEP_EXACT_HPP
#define CRNEP_EXACT_HPP

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "crnep/grid.hpp"
#include "crnep/model.hpp"
#include "crnep/ssa.hpp"

namespace crnep {

/// lo <= weights . x <= hi.
struct LinearConstraint {
  Eigen::VectorXi weights;
  long lo = 0;
  long hi = 0;
};

/**
 * Finite state space: the box 0 <= x_i <= caps_i, optionally cut down by
 * linear constraints.
 *
 * Without constraints the flat index is the mixed-radix code of x. With
 * constraints the admissible codes are kept sorted and looked up by binary
 * search.
 */
class StateSpaceBox {
 public:
  explicit StateSpaceBox(Eigen::VectorXi caps, std::vector<LinearConstraint> constraints = {});

  /// States with 0 <= x_i and sum_i x_i <= max_total.
  static StateSpaceBox simplex(int num_species, int max_total);

  int dim() const { return static_cast<int>(caps_.size()); }
  long size() const { return size_; }
  const Eigen::VectorXi& caps() const { return caps_; }
  const std::vector<LinearConstraint>& constraints() const { return constraints_; }

  StateVector state(long index) const;
  /// Flat index of x, or -1 when x lies outside.
  long index(const StateVector& x) const;
  bool contains(const StateVector& x) const { return index(x) >= 0; }

 private:
  long code_of(const StateVector& x) const;
  StateVector decode(long code) const;
  bool admissible(const StateVector& x) const;

  Eigen::VectorXi caps_;
  std::vector<LinearConstraint> constraints_;
  std::vector<long> stride_;
  std::vector<long> codes_;  // empty when unconstrained
  long size_ = 0;
};

using BoxPtr = std::shared_ptr<const StateSpaceBox>;

struct TruncatedDistribution {
  BoxPtr box;
  Eigen::VectorXd probs;

  void normalize();
};

/// Product-Poisson law with log-means theta restricted to the box, renormalized.
TruncatedDistribution truncated_poisson(const BoxPtr& box, const Eigen::VectorXd& theta);
/// Mass of the untruncated product-Poisson law that falls inside the box.
double poisson_mass_in_box(const StateSpaceBox& box, const Eigen::VectorXd& theta);
TruncatedDistribution point_mass(const BoxPtr& box, const StateVector& x);

struct Transition {
  long from;
  long to;
  int reaction;
  double rate;
};

/**
 * Column-major generator L with dp/dt = L p on the box.
 *
 * Transitions that would leave the box are dropped (reflecting truncation);
 * `dropped_rate[s]` is the total rate removed at state s.
 */
struct Generator {
  BoxPtr box;
  Eigen::SparseMatrix<double> L;
  std::vector<Transition> transitions;
  Eigen::VectorXd dropped_rate;
  double max_exit_rate = 0.0;
};

Generator build_generator(const ReactionNetwork& net, const BoxPtr& box);

struct ExactOptions {
  int substeps = 2;              // minimum RK4 steps per grid interval
  double max_step_rate = 0.25;   // RK4 step * max exit rate is kept below this
  int backward_steps = 2;        // Lobatto steps per interval in the backward route
  double ratio_floor = 1e-300;   // filter probabilities floored before forming ratios
  double rate_cap = 1e12;        // cap on backward rates
};

/// RK4 steps used on an interval of length h. A multiple of 2 * backward_steps.
int interval_substeps(const Generator& gen, double h, const ExactOptions& opts);

/// Integrates dp/dt = L p for `duration` with fixed RK4 steps.
TruncatedDistribution master_solve(const Generator& gen, const TruncatedDistribution& p0,
                                   double duration, const ExactOptions& opts = {});

/// Log-likelihood of observation i at every state of the box.
using LogLikelihoodFn = std::function<Eigen::VectorXd(int obs_index)>;

LogLikelihoodFn gaussian_log_likelihood(const StateSpaceBox& box, const ObservationSet& obs);

/**
 * Exact filter on a grid. `post[k]` is the right-continuous value at node k;
 * `pre[i]` is the left limit at observation i.
 */
struct ExactFilterResult {
  TimeGrid grid;
  BoxPtr box;
  std::vector<Eigen::VectorXd> post;
  std::vector<Eigen::VectorXd> pre;
  double log_evidence = 0.0;
  double dropped_rate_mass = 0.0;  // time integral of the expected dropped rate

  const Eigen::VectorXd& left_value(int node) const {
    const int i = grid.obs_at_node[node];
    return i >= 0 ? pre[i] : post[node];
  }
};

ExactFilterResult exact_filter(const Generator& gen, const TruncatedDistribution& p0,
                               const TimeGrid& grid, const LogLikelihoodFn& loglik,
                               const ExactOptions& opts = {});
ExactFilterResult exact_filter(const Generator& gen, const TruncatedDistribution& p0,
                               const TimeGrid& grid, const ObservationSet& obs,
                               const ExactOptions& opts = {});

struct ExactSmootherResult {
  TimeGrid grid;
  BoxPtr box;
  std::vector<Eigen::VectorXd> probs;  // continuous in time
  long rate_cap_events = 0;
};

/**
 * Smoother from the backward rates r * pi(a) / pi(b), integrated in reversed
 * time with the three-stage Lobatto IIIC method (the equation is stiff where
 * the filter mass is small).
 */
ExactSmootherResult exact_smoother_backward(const Generator& gen, const ExactFilterResult& filter,
                                            const ExactOptions& opts = {});

/// beta(t_k^+) at every node and beta(t_i^-) at every observation; scaled to max 1.
struct BackwardFilterResult {
  std::vector<Eigen::VectorXd> right;
  std::vector<Eigen::VectorXd> left;
};

BackwardFilterResult backward_filter(const Generator& gen, const TimeGrid& grid,
                                     const LogLikelihoodFn& loglik, const ExactOptions& opts = {});

/// Smoother as normalize(pi * beta) at every node.
ExactSmootherResult exact_smoother_beta(const Generator& gen, const ExactFilterResult& filter,
                                        const LogLikelihoodFn& loglik,
                                        const ExactOptions& opts = {});
ExactSmootherResult exact_smoother_beta(const Generator& gen, const ExactFilterResult& filter,
                                        const ObservationSet& obs, const ExactOptions& opts = {});

/// theta_i = log E[X_i]; throws NumericError on a zero mean.
Eigen::VectorXd project_poisson(const TruncatedDistribution& dist);

struct StateMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
StateMoments moments(const TruncatedDistribution& dist);
StateMoments moments(const StateSpaceBox& box, const Eigen::VectorXd& probs);

double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/**
 * Rate-only EM with exact posteriors. One iteration computes, per reaction,
 * the expected number of firings over the expected integrated propensity
 * (trapezoid on the grid), with the posterior taken from the filter and
 * the backward filter.
 */
struct ExactEmResult {
  std::vector<Eigen::VectorXd> rate_trace;  // starts with the initial rates
  std::vector<double> log_evidence;         // per iteration, before the update
  bool converged = false;
};

ExactEmResult exact_rate_em(const ReactionNetwork& net, const BoxPtr& box, const TimeGrid& grid,
                            const ObservationSet& obs, int max_iter, double rel_tol,
                            const ExactOptions& opts = {});

/// `time,mean_1..n,var_1..n` at every grid node.
void write_moments_csv(const TimeGrid& grid, const StateSpaceBox& box,
                       const std::vector<Eigen::VectorXd>& probs,
                       const std::filesystem::path& file);
/// `time,flat_index,prob` for every node and state.
void write_distribution_csv(const TimeGrid& grid, const std::vector<Eigen::VectorXd>& probs,
                            const std::filesystem::path& file);

}  // namespace crnep

#endif  // CRNEP_EXACT_HPP
