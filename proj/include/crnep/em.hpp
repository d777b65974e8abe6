#ifndef CRNEP_EM_HPP
#define CRNEP_EM_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crnep/apx.hpp"
#include "crnep/ep.hpp"
#include "crnep/model.hpp"
#include "crnep/ssa.hpp"

namespace crnep {

/**
 * Expected sufficient statistics of the approximate posterior.
 *
 * gamma_hat_j = 1/T int c_old exp(sub_j . th~) c_old exp(nu_j . (th~ - th)) dt
 * lambda_hat_j = 1/T int c_old exp(sub_j . th~) dt
 * M_XY = 1/N sum y_i m_i^T, M_XX = 1/N sum diag(m_i) + m_i m_i^T,
 * M_YY = 1/N sum y_i y_i^T, with m_i = exp(th~(t_i)).
 */
struct SummaryStats {
  Eigen::VectorXd gamma_hat;
  Eigen::VectorXd lambda_hat;
  Eigen::MatrixXd M_XX;  // n x n
  Eigen::MatrixXd M_XY;  // m x n
  Eigen::MatrixXd M_YY;  // m x m
  Eigen::VectorXd theta0_smoothed;
  Eigen::VectorXd c_old;
  double horizon = 0.0;
  int num_obs = 0;

  bool has_observations() const { return num_obs > 0; }
};

struct LearnableParams {
  Eigen::VectorXd theta0;
  Eigen::VectorXd rates;
  Eigen::MatrixXd H;
  Eigen::MatrixXd Sigma;
};

struct LearnMask {
  bool theta0 = false;
  std::vector<bool> rates;  // one flag per reaction; empty means none
  bool H = false;
  bool Sigma = false;

  static LearnMask all(int num_reactions);
  bool rate(int j) const { return j < static_cast<int>(rates.size()) && rates[j]; }
  bool empty() const;
};

LearnableParams params_of(const ReactionNetwork& net, const ObservationModel& obs_model);

/// Trapezoid rule on the shared grid, using the filter's inside limits on each interval.
SummaryStats summary_stats(const ReactionNetwork& net, const NaturalParamPath& filter,
                           const NaturalParamPath& smoother, const ObservationSet& obs);

/**
 * Closed-form coordinate-wise maximizers, applied in the order theta0, c, H,
 * Sigma (Sigma uses the new H). Sigma is symmetrized and its eigenvalues are
 * floored at `sigma_floor`. Reactions with c_old = 0 stay at 0.
 */
LearnableParams mstep(const SummaryStats& stats, const LearnableParams& current,
                      const LearnMask& mask, double sigma_floor = 1e-9);

struct BoundTerms {
  double initial = 0.0;
  double rates = 0.0;
  double observations = 0.0;
  double total() const { return initial + rates + observations; }
};

/// Parameter-dependent part of the evidence bound (additive constant omitted).
BoundTerms bound_terms(const LearnableParams& params, const SummaryStats& stats);

struct EmConfig {
  int max_iterations = 50;
  double bound_tol = 1e-8;  // stop when the M-step gain <= bound_tol * (1 + |bound|)
  LearnMask mask;
  bool full_ep = true;  // otherwise a single filter/smoother pass per E-step
  bool warm_start = true;  // each EP run starts from the previous iteration's sites
  double sigma_floor = 1e-9;
};

struct EmTraceRow {
  int em_iter;
  double bound_pre;  // at the E-step's paths, before the M-step
  double bound;      // at the same paths, after the M-step
  LearnableParams params;  // after the M-step
};

struct EmResult {
  std::vector<EmTraceRow> trace;
  LearnableParams params;
  bool converged = false;
};

EmResult em_run(const ReactionNetwork& net, const ObservationSet& obs, const TimeGrid& grid,
                const EPConfig& ep_config, const EmConfig& em_config);

/// Network and observation model carrying the given parameters.
ReactionNetwork apply_params(const ReactionNetwork& net, const LearnableParams& params);

/// `em_iter,bound,bound_pre,theta0_1..n,c_1..k,H_r_c...,Sigma_r_c...` (row-major).
void write_trace_csv(const EmResult& result, const std::filesystem::path& file);

}  // namespace crnep

#endif  // CRNEP_EM_HPP
