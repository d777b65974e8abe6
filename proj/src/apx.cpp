#include "crnep/apx.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "crnep/csv.hpp"
#include "crnep/errors.hpp"

namespace crnep {

namespace {

void clamp_in_place(Eigen::VectorXd& theta, const ApxOptions& opts, ApxDiagnostics* diag) {
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (theta[i] > opts.clamp) {
      theta[i] = opts.clamp;
      if (diag) ++diag->clamp_events;
    } else if (theta[i] < -opts.clamp) {
      theta[i] = -opts.clamp;
      if (diag) ++diag->clamp_events;
    }
  }
}

std::string interval_name(double a, double b) {
  std::ostringstream ss;
  ss << "[" << a << ", " << b << "]";
  return ss.str();
}

// The integrators work on the means lambda = exp(theta). In these coordinates
// the filter equation is the mass-action rate equation
//   d lambda/dt = sum_j nu_j c_j prod_i lambda_i^substrate_ij
// and the smoother equation is
//   d lambda~/dt = sum_j nu_j c_j prod_i lambda~_i^product_ij lambda_i^-nu_ij,
// both exactly equivalent to the natural-parameter forms but free of the
// exp(-theta) factor that makes the latter stiff when a mean is near zero.

double int_power(double x, int k) {
  double r = 1.0;
  for (int q = 0; q < std::abs(k); ++q) r *= x;
  return k >= 0 ? r : 1.0 / r;
}

Eigen::VectorXd filter_flux(const ReactionNetwork& net, const Eigen::VectorXd& lam) {
  const auto& sub = net.substrate_stoich();
  Eigen::VectorXd f(net.num_reactions());
  for (int j = 0; j < net.num_reactions(); ++j) {
    double v = net.rates()[j];
    for (int i = 0; i < net.num_species() && v != 0.0; ++i) v *= int_power(lam[i], sub(i, j));
    f[j] = v;
  }
  return f;
}

Eigen::VectorXd smoother_flux(const ReactionNetwork& net, const Eigen::VectorXd& lam_s,
                              const Eigen::VectorXd& lam_f) {
  const auto& prod = net.product_stoich();
  const auto& nu = net.change_matrix();
  Eigen::VectorXd g(net.num_reactions());
  for (int j = 0; j < net.num_reactions(); ++j) {
    double v = net.rates()[j];
    for (int i = 0; i < net.num_species() && v != 0.0; ++i)
      v *= int_power(lam_s[i], prod(i, j)) * int_power(lam_f[i], -nu(i, j));
    g[j] = v;
  }
  return g;
}

// Largest per-capita loss rate on the diagonal of the Jacobian, the stiffness
// measure that sets the substep length. `weights(i, j)` is the per-capita
// factor of flux j for species i.
double loss_rate(const Eigen::MatrixXd& weights, const Eigen::VectorXd& flux,
                 const Eigen::VectorXd& lam) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    double r = 0.0;
    for (Eigen::Index j = 0; j < flux.size(); ++j) r += weights(i, j) * std::abs(flux[j]);
    worst = std::max(worst, r / lam[i]);
  }
  return worst;
}

// Substeps are chosen so that step * loss rate stays below kRateStep at every
// substep point; an interval that violates this, or produces a non-positive
// mean, is redone with four times as many steps. Usually this is one step.
constexpr double kRateStep = 0.5;
constexpr int kMaxSubsteps = 1 << 20;

int substeps_for(double rate, double h) {
  const double want = std::ceil(h * rate / kRateStep);
  if (!std::isfinite(want)) return kMaxSubsteps;
  return static_cast<int>(std::clamp(want, 1.0, double(kMaxSubsteps)));
}

template <class Drift>
Eigen::VectorXd rk4_step(const Drift& f, const Eigen::VectorXd& y, double t, double h) {
  const Eigen::VectorXd k1 = f(t, y);
  const Eigen::VectorXd k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
  const Eigen::VectorXd k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
  const Eigen::VectorXd k4 = f(t + h, y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Cubic Hermite value at a + s*h from the end values and end derivatives.
Eigen::VectorXd hermite(const Eigen::VectorXd& ya, const Eigen::VectorXd& da,
                        const Eigen::VectorXd& yb, const Eigen::VectorXd& db, double h, double s) {
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * ya + (s3 - 2 * s2 + s) * h * da + (-2 * s3 + 3 * s2) * yb +
         (s3 - s2) * h * db;
}

// Keeps log(lam) inside the clamp box.
void clamp_means(Eigen::VectorXd& lam, const ApxOptions& opts, ApxDiagnostics* diag) {
  const double lo = std::exp(-opts.clamp);
  const double hi = std::exp(opts.clamp);
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam[i] < lo) {
      lam[i] = lo;
      if (diag) ++diag->clamp_events;
    } else if (lam[i] > hi) {
      lam[i] = hi;
      if (diag) ++diag->clamp_events;
    }
  }
}

Eigen::MatrixXd filter_weights(const ReactionNetwork& net) {
  // Species i loses -nu_ij copies per firing of j.
  return (-net.change_matrix().cast<double>()).cwiseMax(0.0);
}

Eigen::MatrixXd smoother_weights(const ReactionNetwork& net) {
  // Reversed time: the gain terms nu_ij > 0 become losses, with per-capita
  // derivative nu_ij * product_ij.
  const Eigen::MatrixXd nu = net.change_matrix().cast<double>();
  return nu.cwiseMax(0.0).cwiseProduct(net.product_stoich().cast<double>());
}

// Filter means at the substep points of [a, a + h], starting from lam.
std::vector<Eigen::VectorXd> filter_substeps(const ReactionNetwork& net, const Eigen::VectorXd& lam,
                                             double a, double h, const ApxOptions& opts,
                                             ApxDiagnostics* diag) {
  const Eigen::MatrixXd W = filter_weights(net);
  const Eigen::MatrixXd nu = net.change_matrix().cast<double>();
  auto drift = [&](double, const Eigen::VectorXd& l) { return Eigen::VectorXd(nu * filter_flux(net, l)); };
  for (int n = substeps_for(loss_rate(W, filter_flux(net, lam), lam), h);; n *= 4) {
    const double dt = h / n;
    std::vector<Eigen::VectorXd> pts{lam};
    ApxDiagnostics local;
    bool ok = true;
    for (int s = 0; s < n && ok; ++s) {
      Eigen::VectorXd next = rk4_step(drift, pts.back(), a + s * dt, dt);
      ok = next.allFinite() && (next.array() > 0.0).all();
      if (ok) {
        clamp_means(next, opts, &local);
        ok = dt * loss_rate(W, filter_flux(net, next), next) <= 2.0 * kRateStep;
      }
      pts.push_back(std::move(next));
    }
    if (ok) {
      if (diag) diag->clamp_events += local.clamp_events;
      return pts;
    }
    if (n >= kMaxSubsteps)
      throw NumericError("non-finite filter state on interval " + interval_name(a, a + h));
  }
}

Eigen::VectorXd to_theta(const Eigen::VectorXd& lam) { return lam.array().log(); }
Eigen::VectorXd to_lambda(const Eigen::VectorXd& theta) { return theta.array().exp(); }

}  // namespace

Eigen::VectorXd initial_params(const ReactionNetwork& net) { return net.initial_log_rates(); }

Eigen::VectorXd predict_drift(const ReactionNetwork& net, const Eigen::VectorXd& theta) {
  const auto& sub = net.substrate_stoich();
  const auto& nu = net.change_matrix();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(theta.size());
  for (int j = 0; j < net.num_reactions(); ++j) {
    const double c = net.rates()[j];
    if (c == 0.0) continue;
    const double flux = c * std::exp(sub.col(j).cast<double>().dot(theta));
    out += flux * nu.col(j).cast<double>();
  }
  return out.cwiseProduct((-theta).array().exp().matrix());
}

Eigen::VectorXd smoother_drift(const ReactionNetwork& net, const Eigen::VectorXd& theta_smooth,
                               const Eigen::VectorXd& theta_filter) {
  const auto& sub = net.substrate_stoich();
  const auto& nu = net.change_matrix();
  const Eigen::VectorXd diff = theta_smooth - theta_filter;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(theta_smooth.size());
  for (int j = 0; j < net.num_reactions(); ++j) {
    const double c = net.rates()[j];
    if (c == 0.0) continue;
    const Eigen::VectorXd nu_j = nu.col(j).cast<double>();
    const double flux = c * std::exp(sub.col(j).cast<double>().dot(theta_smooth) + nu_j.dot(diff));
    out += flux * nu_j;
  }
  return out.cwiseProduct((-theta_smooth).array().exp().matrix());
}

GaussianMoments to_gaussian(const Eigen::VectorXd& theta) {
  const Eigen::VectorXd m = theta.array().exp();
  return {m, m.asDiagonal()};
}

Eigen::VectorXd moment_match_update(const Eigen::VectorXd& theta, const Eigen::VectorXd& y,
                                    const ObservationModel& obs_model, double eps_lambda) {
  const auto& H = obs_model.H();
  if (H.cols() != theta.size() || y.size() != H.rows())
    throw ValidationError("moment_match_update: dimension mismatch");
  const Eigen::VectorXd m = theta.array().exp();
  const Eigen::MatrixXd PHt = m.asDiagonal() * H.transpose();
  const Eigen::MatrixXd S = H * PHt + obs_model.Sigma();
  const Eigen::VectorXd innovation = y - H * m;
  const Eigen::VectorXd m_new = m + PHt * S.llt().solve(innovation);
  const Eigen::VectorXd floored = m_new.cwiseMax(eps_lambda);
  return floored.array().log().matrix() - theta;
}

NaturalParamPath integrate_filter(const ReactionNetwork& net, const TimeGrid& grid,
                                  const Eigen::VectorXd& theta0, const SiteFn& site,
                                  const ApxOptions& opts, ApxDiagnostics* diag) {
  if (theta0.size() != net.num_species())
    throw ValidationError("initial parameter has wrong dimension");
  NaturalParamPath path;
  path.grid = grid;
  path.values.resize(grid.size());
  path.left_limits.resize(grid.obs_nodes.size());

  Eigen::VectorXd theta = theta0;
  clamp_in_place(theta, opts, diag);
  path.values[0] = theta;
  for (int k = 0; k + 1 < grid.size(); ++k) {
    const double a = grid.times[k];
    const double b = grid.times[k + 1];
    theta = to_theta(filter_substeps(net, to_lambda(theta), a, b - a, opts, diag).back());
    const int i = grid.obs_at_node[k + 1];
    if (i >= 0) {
      path.left_limits[i] = theta;
      const Eigen::VectorXd xi = site(i, theta);
      if (xi.size() != theta.size() || !xi.allFinite())
        throw NumericError("site " + std::to_string(i + 1) + " is not a finite " +
                           std::to_string(theta.size()) + "-vector");
      theta += xi;
      // The updated mean is truncated at eps_lambda, as in moment_match_update.
      theta = theta.cwiseMax(std::log(opts.eps_lambda));
      clamp_in_place(theta, opts, diag);
    }
    path.values[k + 1] = theta;
  }
  return path;
}

NaturalParamPath integrate_filter(const ReactionNetwork& net, const TimeGrid& grid,
                                  const std::vector<Eigen::VectorXd>& sites,
                                  const ApxOptions& opts, ApxDiagnostics* diag) {
  if (sites.size() != grid.obs_nodes.size())
    throw ValidationError("need one site per observation (" +
                          std::to_string(grid.obs_nodes.size()) + "), got " +
                          std::to_string(sites.size()));
  return integrate_filter(
      net, grid, initial_params(net),
      [&](int i, const Eigen::VectorXd&) { return sites[static_cast<std::size_t>(i)]; }, opts,
      diag);
}

NaturalParamPath assumed_density_filter(const ReactionNetwork& net, const TimeGrid& grid,
                                        const ObservationSet& obs, const ApxOptions& opts,
                                        ApxDiagnostics* diag) {
  if (static_cast<std::size_t>(obs.size()) != grid.obs_nodes.size())
    throw ValidationError("grid and observation set disagree on the number of observations");
  return integrate_filter(
      net, grid, initial_params(net),
      [&](int i, const Eigen::VectorXd& theta_minus) {
        return moment_match_update(theta_minus, obs.values[static_cast<std::size_t>(i)],
                                   obs.obs_model, opts.eps_lambda);
      },
      opts, diag);
}

NaturalParamPath integrate_smoother(const ReactionNetwork& net, const NaturalParamPath& filter,
                                    const ApxOptions& opts, ApxDiagnostics* diag) {
  const auto& grid = filter.grid;
  NaturalParamPath path;
  path.grid = grid;
  path.values.resize(grid.size());
  path.left_limits.resize(grid.obs_nodes.size());

  const Eigen::MatrixXd W = smoother_weights(net);
  const Eigen::MatrixXd nu = net.change_matrix().cast<double>();
  // Reversed time u = b - t: d lambda~/du = -nu * smoother_flux.
  auto g = [&](const Eigen::VectorXd& ls, const Eigen::VectorXd& lf) {
    return Eigen::VectorXd(-(nu * smoother_flux(net, ls, lf)));
  };
  Eigen::VectorXd lam_s = to_lambda(filter.values.back());
  path.values.back() = filter.values.back();
  for (int k = grid.size() - 2; k >= 0; --k) {
    const double a = grid.times[k];
    const double b = grid.times[k + 1];
    const double h = b - a;
    // The filter on (a, b) is recomputed at its own substep points from the
    // post-update value at a and interpolated between them (cubic Hermite in
    // the means). Its end value is the left limit at b.
    const auto pts = filter_substeps(net, to_lambda(filter.values[k]), a, h, opts, nullptr);
    const int nf = static_cast<int>(pts.size()) - 1;
    const double dtf = h / nf;
    std::vector<Eigen::VectorXd> dpts;
    for (const auto& p : pts) dpts.push_back(nu * filter_flux(net, p));
    auto filter_at = [&](double t) -> Eigen::VectorXd {
      const int j = std::clamp(static_cast<int>(std::floor(t / dtf)), 0, nf - 1);
      const double s = (t - j * dtf) / dtf;
      if (s <= 0.0) return pts[j];
      if (s >= 1.0) return pts[j + 1];
      return hermite(pts[j], dpts[j], pts[j + 1], dpts[j + 1], dtf, s);
    };
    double rate = 0.0;
    for (const auto& p : pts) rate = std::max(rate, loss_rate(W, smoother_flux(net, lam_s, p), lam_s));
    const Eigen::VectorXd start = lam_s;
    for (int refine = std::max(1, (substeps_for(rate, h) + nf - 1) / nf);; refine *= 4) {
      const int n = nf * refine;
      const double du = h / n;
      lam_s = start;
      ApxDiagnostics local;
      bool ok = true;
      for (int s = n; s > 0 && ok; --s) {
        // Step from t = s*du down to t = (s-1)*du.
        const Eigen::VectorXd f0 = filter_at(s * du);
        const Eigen::VectorXd fm = filter_at((s - 0.5) * du);
        const Eigen::VectorXd f1 = filter_at((s - 1) * du);
        const Eigen::VectorXd k1 = g(lam_s, f0);
        const Eigen::VectorXd k2 = g(lam_s + 0.5 * du * k1, fm);
        const Eigen::VectorXd k3 = g(lam_s + 0.5 * du * k2, fm);
        const Eigen::VectorXd k4 = g(lam_s + du * k3, f1);
        lam_s += (du / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        ok = lam_s.allFinite() && (lam_s.array() > 0.0).all();
        if (ok) {
          clamp_means(lam_s, opts, &local);
          ok = du * loss_rate(W, smoother_flux(net, lam_s, f1), lam_s) <= 2.0 * kRateStep;
        }
      }
      if (ok) {
        if (diag) diag->clamp_events += local.clamp_events;
        break;
      }
      if (n >= kMaxSubsteps)
        throw NumericError("non-finite smoother state on interval " + interval_name(a, b));
    }
    path.values[k] = to_theta(lam_s);
  }
  for (std::size_t i = 0; i < grid.obs_nodes.size(); ++i)
    path.left_limits[i] = path.values[grid.obs_nodes[i]];
  return path;
}

void write_path_csv(const NaturalParamPath& path, const std::filesystem::path& file) {
  const auto n = path.values.empty() ? 0 : path.values.front().size();
  std::vector<std::string> header{"time"};
  for (Eigen::Index i = 0; i < n; ++i) header.push_back("theta_" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < n; ++i) header.push_back("mean_" + std::to_string(i + 1));
  header.push_back("pre_update");
  csv::Writer w(file, header);
  auto row = [&](double t, const Eigen::VectorXd& th, int pre) {
    w.field(t);
    for (Eigen::Index i = 0; i < n; ++i) w.field(th[i]);
    for (Eigen::Index i = 0; i < n; ++i) w.field(std::exp(th[i]));
    w.field(pre);
    w.end_row();
  };
  for (int k = 0; k < path.grid.size(); ++k) {
    const int i = path.grid.obs_at_node[k];
    if (i >= 0) row(path.grid.times[k], path.left_limits[i], 1);
    row(path.grid.times[k], path.values[k], 0);
  }
}

NaturalParamPath read_path_csv(const std::filesystem::path& file) {
  const auto table = csv::read(file);
  const int pre_col = table.column("pre_update");
  const int n = (static_cast<int>(table.header.size()) - 2) / 2;
  NaturalParamPath path;
  bool pending_pre = false;
  Eigen::VectorXd pre_value;
  for (const auto& row : table.rows) {
    Eigen::VectorXd th(n);
    for (int i = 0; i < n; ++i) th[i] = csv::to_double(row[1 + i]);
    if (csv::to_int(row[pre_col]) != 0) {
      pending_pre = true;
      pre_value = th;
      continue;
    }
    const int node = path.grid.size();
    path.grid.times.push_back(csv::to_double(row[0]));
    path.grid.obs_at_node.push_back(-1);
    if (pending_pre) {
      path.grid.obs_at_node.back() = static_cast<int>(path.grid.obs_nodes.size());
      path.grid.obs_nodes.push_back(node);
      path.left_limits.push_back(pre_value);
      pending_pre = false;
    }
    path.values.push_back(std::move(th));
  }
  return path;
}

}  // namespace crnep
