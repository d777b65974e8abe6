#include "crnep/em.hpp"

#include <cmath>
#include <limits>

#include "crnep/csv.hpp"
#include "crnep/errors.hpp"

namespace crnep {

LearnMask LearnMask::all(int num_reactions) {
  LearnMask m;
  m.theta0 = true;
  m.rates.assign(static_cast<std::size_t>(num_reactions), true);
  m.H = true;
  m.Sigma = true;
  return m;
}

bool LearnMask::empty() const {
  if (theta0 || H || Sigma) return false;
  for (bool r : rates)
    if (r) return false;
  return true;
}

LearnableParams params_of(const ReactionNetwork& net, const ObservationModel& obs_model) {
  return {net.initial_log_rates(), net.rates(), obs_model.H(), obs_model.Sigma()};
}

ReactionNetwork apply_params(const ReactionNetwork& net, const LearnableParams& params) {
  return net.with_rates(params.rates).with_initial_log_rates(params.theta0);
}

SummaryStats summary_stats(const ReactionNetwork& net, const NaturalParamPath& filter,
                           const NaturalParamPath& smoother, const ObservationSet& obs) {
  const auto& grid = smoother.grid;
  if (filter.grid.size() != grid.size())
    throw ValidationError("filter and smoother paths live on different grids");
  const int K = net.num_reactions();
  const Eigen::MatrixXd sub = net.substrate_stoich().cast<double>();
  const Eigen::MatrixXd nu = net.change_matrix().cast<double>();
  const Eigen::VectorXd& c = net.rates();

  SummaryStats st;
  st.c_old = c;
  st.horizon = grid.horizon();
  st.theta0_smoothed = smoother.values.front();
  Eigen::VectorXd G = Eigen::VectorXd::Zero(K);  // int exp(sub.th~) exp(nu.(th~ - th)) dt
  Eigen::VectorXd I = Eigen::VectorXd::Zero(K);  // int exp(sub.th~) dt
  auto add = [&](const Eigen::VectorXd& ts, const Eigen::VectorXd& tf, double w) {
    const Eigen::VectorXd base = (sub.transpose() * ts).array().exp();
    const Eigen::VectorXd tilt = (nu.transpose() * (ts - tf)).array().exp();
    I += w * base;
    G += w * base.cwiseProduct(tilt);
  };
  for (int k = 0; k + 1 < grid.size(); ++k) {
    const double h = 0.5 * (grid.times[k + 1] - grid.times[k]);
    add(smoother.values[k], filter.values[k], h);
    add(smoother.values[k + 1], filter.left_value(k + 1), h);
  }
  const double T = st.horizon;
  st.gamma_hat = c.cwiseProduct(c).cwiseProduct(G) / T;
  st.lambda_hat = c.cwiseProduct(I) / T;

  const int N = obs.size();
  st.num_obs = N;
  const int n = net.num_species();
  const int m = obs.obs_model.obs_dim();
  st.M_XX = Eigen::MatrixXd::Zero(n, n);
  st.M_XY = Eigen::MatrixXd::Zero(m, n);
  st.M_YY = Eigen::MatrixXd::Zero(m, m);
  if (N == 0) return st;
  if (static_cast<int>(grid.obs_nodes.size()) != N)
    throw ValidationError("grid and observation set disagree on the number of observations");
  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd mean = smoother.values[grid.obs_nodes[i]].array().exp();
    const Eigen::VectorXd& y = obs.values[i];
    st.M_XX += Eigen::MatrixXd(mean.asDiagonal()) + mean * mean.transpose();
    st.M_XY += y * mean.transpose();
    st.M_YY += y * y.transpose();
  }
  st.M_XX /= N;
  st.M_XY /= N;
  st.M_YY /= N;
  return st;
}

namespace {

Eigen::MatrixXd residual_second_moment(const SummaryStats& st, const Eigen::MatrixXd& H) {
  return st.M_YY - st.M_XY * H.transpose() - H * st.M_XY.transpose() +
         H * st.M_XX * H.transpose();
}

}  // namespace

LearnableParams mstep(const SummaryStats& stats, const LearnableParams& current,
                      const LearnMask& mask, double sigma_floor) {
  LearnableParams next = current;
  if (mask.theta0) next.theta0 = stats.theta0_smoothed;

  for (int j = 0; j < static_cast<int>(current.rates.size()); ++j) {
    if (!mask.rate(j) || stats.c_old[j] == 0.0) continue;
    if (!(stats.lambda_hat[j] > 0.0))
      throw NumericError("rate update for reaction " + std::to_string(j + 1) +
                         ": integrated propensity is zero");
    next.rates[j] = stats.gamma_hat[j] / stats.lambda_hat[j];
  }

  if (!stats.has_observations()) return next;
  if (mask.H) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(stats.M_XX);
    if (!lu.isInvertible() || lu.rcond() < 1e-14)
      throw NumericError(
          "M_XX is singular: H is not identifiable; add observations or fix H");
    next.H = stats.M_XY * lu.inverse();
  }
  if (mask.Sigma) {
    Eigen::MatrixXd S = residual_second_moment(stats, next.H);
    S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(sigma_floor);
    next.Sigma = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
    next.Sigma = 0.5 * (next.Sigma + next.Sigma.transpose());
  }
  return next;
}

BoundTerms bound_terms(const LearnableParams& params, const SummaryStats& stats) {
  BoundTerms b;
  const Eigen::VectorXd& ts = stats.theta0_smoothed;
  for (Eigen::Index i = 0; i < ts.size(); ++i) {
    const double et = std::exp(ts[i]);
    b.initial -= std::exp(params.theta0[i]) - et + et * (ts[i] - params.theta0[i]);
  }

  const double T = stats.horizon;
  for (Eigen::Index j = 0; j < params.rates.size(); ++j) {
    const double c_old = stats.c_old[j];
    if (c_old == 0.0) continue;
    const double c = params.rates[j];
    if (!(c > 0.0)) return {b.initial, -std::numeric_limits<double>::infinity(), 0.0};
    b.rates += (T / c_old) * (stats.gamma_hat[j] * std::log(c) - stats.lambda_hat[j] * c);
  }

  if (stats.has_observations()) {
    Eigen::LLT<Eigen::MatrixXd> llt(params.Sigma);
    if (llt.info() != Eigen::Success) throw NumericError("Sigma is not positive definite");
    const double m = static_cast<double>(params.Sigma.rows());
    const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    const Eigen::MatrixXd R = residual_second_moment(stats, params.H);
    const double tr = llt.solve(R).trace();
    const double N = stats.num_obs;
    b.observations = -0.5 * N * (m * std::log(2.0 * M_PI) + logdet) - 0.5 * N * tr;
  }
  return b;
}

EmResult em_run(const ReactionNetwork& net, const ObservationSet& obs, const TimeGrid& grid,
                const EPConfig& ep_config, const EmConfig& em_config) {
  if (em_config.max_iterations < 1) throw ValidationError("EM needs at least one iteration");
  EmResult res;
  res.params = params_of(net, obs.obs_model);
  std::vector<Eigen::VectorXd> sites;
  for (int it = 1; it <= em_config.max_iterations; ++it) {
    const ReactionNetwork cur = apply_params(net, res.params);
    const ObservationSet cur_obs{obs.times, obs.values,
                                 ObservationModel(res.params.H, res.params.Sigma)};
    NaturalParamPath filter, smoother;
    try {
      if (em_config.full_ep) {
        auto ep = ep_run(cur, cur_obs, grid, ep_config, sites);
        if (em_config.warm_start) sites = ep.sites.xi;
        filter = std::move(ep.filter);
        smoother = std::move(ep.smoother);
      } else {
        filter = assumed_density_filter(cur, grid, cur_obs, ep_config.apx);
        smoother = integrate_smoother(cur, filter, ep_config.apx);
      }
    } catch (const NumericError& e) {
      throw NumericError("E-step of EM iteration " + std::to_string(it) + ": " + e.what());
    }
    const auto stats = summary_stats(cur, filter, smoother, cur_obs);
    const double pre = bound_terms(res.params, stats).total();
    LearnableParams next = mstep(stats, res.params, em_config.mask, em_config.sigma_floor);
    const double post = bound_terms(next, stats).total();
    res.params = std::move(next);
    res.trace.push_back({it, pre, post, res.params});
    if (post - pre <= em_config.bound_tol * (1.0 + std::abs(post))) {
      res.converged = true;
      break;
    }
  }
  return res;
}

void write_trace_csv(const EmResult& result, const std::filesystem::path& file) {
  const auto& p0 = result.params;
  std::vector<std::string> header{"em_iter", "bound", "bound_pre"};
  for (Eigen::Index i = 0; i < p0.theta0.size(); ++i)
    header.push_back("theta0_" + std::to_string(i + 1));
  for (Eigen::Index j = 0; j < p0.rates.size(); ++j) header.push_back("c_" + std::to_string(j + 1));
  for (Eigen::Index r = 0; r < p0.H.rows(); ++r)
    for (Eigen::Index c = 0; c < p0.H.cols(); ++c)
      header.push_back("H_" + std::to_string(r + 1) + "_" + std::to_string(c + 1));
  for (Eigen::Index r = 0; r < p0.Sigma.rows(); ++r)
    for (Eigen::Index c = 0; c < p0.Sigma.cols(); ++c)
      header.push_back("Sigma_" + std::to_string(r + 1) + "_" + std::to_string(c + 1));
  csv::Writer w(file, header);
  for (const auto& row : result.trace) {
    w.field(row.em_iter);
    w.field(row.bound);
    w.field(row.bound_pre);
    const auto& p = row.params;
    for (Eigen::Index i = 0; i < p.theta0.size(); ++i) w.field(p.theta0[i]);
    for (Eigen::Index j = 0; j < p.rates.size(); ++j) w.field(p.rates[j]);
    for (Eigen::Index r = 0; r < p.H.rows(); ++r)
      for (Eigen::Index c = 0; c < p.H.cols(); ++c) w.field(p.H(r, c));
    for (Eigen::Index r = 0; r < p.Sigma.rows(); ++r)
      for (Eigen::Index c = 0; c < p.Sigma.cols(); ++c) w.field(p.Sigma(r, c));
    w.end_row();
  }
}

}  // namespace crnep
