#include "crnep/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SparseLU>

#include "crnep/csv.hpp"
#include "crnep/errors.hpp"

namespace crnep {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

constexpr long kMaxEnumerated = 200'000'000;
constexpr long kMaxStates = 10'000'000;

void rk4(const SpMat& A, Eigen::VectorXd& p, double dt, int steps) {
  Eigen::VectorXd k1, k2, k3, k4;
  for (int s = 0; s < steps; ++s) {
    k1 = A * p;
    k2 = A * (p + 0.5 * dt * k1);
    k3 = A * (p + 0.5 * dt * k2);
    k4 = A * (p + dt * k3);
    p += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
}

// Drops round-off negatives and renormalizes; throws when the vector is unusable.
void sanitize(Eigen::VectorXd& p, const std::string& where) {
  if (!p.allFinite()) throw NumericError("non-finite probabilities " + where);
  const double total = p.sum();
  const double worst = p.minCoeff();
  if (!(total > 0.0) || worst < -1e-6 * total)
    throw NumericError("integration failed " + where + " (mass " + std::to_string(total) +
                       ", most negative entry " + std::to_string(worst) + ")");
  p = p.cwiseMax(0.0);
  p /= p.sum();
}

std::string interval_name(double a, double b) {
  return "on [" + csv::format(a) + ", " + csv::format(b) + "]";
}

// Reversed-time generator of the smoother: forward transition a -> b with rate r
// becomes b -> a with rate r * pi(a) / pi(b).
SpMat backward_generator(const Generator& gen, const Eigen::VectorXd& pi,
                         const ExactOptions& opts, long& cap_events) {
  const long S = gen.box->size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * gen.transitions.size());
  for (const auto& tr : gen.transitions) {
    const double num = std::max(pi[tr.from], opts.ratio_floor);
    const double den = std::max(pi[tr.to], opts.ratio_floor);
    double rate = tr.rate * (num / den);
    if (!(rate <= opts.rate_cap)) {
      rate = opts.rate_cap;
      ++cap_events;
    }
    trip.emplace_back(tr.from, tr.to, rate);
    trip.emplace_back(tr.to, tr.to, -rate);
  }
  SpMat M(S, S);
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

}  // namespace

// ---------------------------------------------------------------- StateSpaceBox

StateSpaceBox::StateSpaceBox(Eigen::VectorXi caps, std::vector<LinearConstraint> constraints)
    : caps_(std::move(caps)), constraints_(std::move(constraints)) {
  if (caps_.size() == 0) throw ValidationError("state box needs at least one species");
  if ((caps_.array() < 0).any()) throw ValidationError("state box caps must be non-negative");
  for (const auto& c : constraints_)
    if (c.weights.size() != caps_.size())
      throw ValidationError("constraint has " + std::to_string(c.weights.size()) +
                            " weights, box has " + std::to_string(caps_.size()) + " species");
  stride_.resize(static_cast<std::size_t>(caps_.size()));
  long total = 1;
  for (Eigen::Index i = 0; i < caps_.size(); ++i) {
    stride_[static_cast<std::size_t>(i)] = total;
    total *= static_cast<long>(caps_[i]) + 1;
    if (total > kMaxEnumerated) throw ValidationError("state box too large to enumerate");
  }
  if (constraints_.empty()) {
    size_ = total;
  } else {
    StateVector x = StateVector::Zero(caps_.size());
    for (long code = 0; code < total; ++code) {
      if (admissible(x)) codes_.push_back(code);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x[i] < caps_[i]) {
          ++x[i];
          break;
        }
        x[i] = 0;
      }
    }
    size_ = static_cast<long>(codes_.size());
  }
  if (size_ == 0) throw ValidationError("state box constraints admit no state");
  if (size_ > kMaxStates) throw ValidationError("state box has more than 1e7 states");
}

StateSpaceBox StateSpaceBox::simplex(int num_species, int max_total) {
  return StateSpaceBox(Eigen::VectorXi::Constant(num_species, max_total),
                       {{Eigen::VectorXi::Ones(num_species), 0, max_total}});
}

bool StateSpaceBox::admissible(const StateVector& x) const {
  for (const auto& c : constraints_) {
    const long v = static_cast<long>(c.weights.dot(x));
    if (v < c.lo || v > c.hi) return false;
  }
  return true;
}

long StateSpaceBox::code_of(const StateVector& x) const {
  long code = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) code += stride_[static_cast<std::size_t>(i)] * x[i];
  return code;
}

StateVector StateSpaceBox::decode(long code) const {
  StateVector x(caps_.size());
  for (Eigen::Index i = 0; i < caps_.size(); ++i) {
    const long radix = static_cast<long>(caps_[i]) + 1;
    x[i] = static_cast<int>(code % radix);
    code /= radix;
  }
  return x;
}

StateVector StateSpaceBox::state(long index) const {
  if (index < 0 || index >= size_)
    throw ValidationError("state index " + std::to_string(index) + " outside box");
  return decode(codes_.empty() ? index : codes_[static_cast<std::size_t>(index)]);
}

long StateSpaceBox::index(const StateVector& x) const {
  if (x.size() != caps_.size()) return -1;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x[i] < 0 || x[i] > caps_[i]) return -1;
  const long code = code_of(x);
  if (codes_.empty()) return code;
  const auto it = std::lower_bound(codes_.begin(), codes_.end(), code);
  if (it == codes_.end() || *it != code) return -1;
  return static_cast<long>(it - codes_.begin());
}

// ---------------------------------------------------------------- distributions

void TruncatedDistribution::normalize() {
  const double total = probs.sum();
  if (!(total > 0.0) || !std::isfinite(total))
    throw NumericError("cannot normalize a distribution with total mass " +
                       std::to_string(total));
  probs /= total;
}

TruncatedDistribution truncated_poisson(const BoxPtr& box, const Eigen::VectorXd& theta) {
  if (theta.size() != box->dim()) throw ValidationError("theta dimension differs from box");
  const long S = box->size();
  Eigen::VectorXd logp(S);
  for (long s = 0; s < S; ++s) {
    const StateVector x = box->state(s);
    double lp = 0.0;
    for (int i = 0; i < box->dim(); ++i)
      lp += x[i] * theta[i] - std::exp(theta[i]) - std::lgamma(x[i] + 1.0);
    logp[s] = lp;
  }
  TruncatedDistribution d{box, (logp.array() - logp.maxCoeff()).exp()};
  d.normalize();
  return d;
}

double poisson_mass_in_box(const StateSpaceBox& box, const Eigen::VectorXd& theta) {
  double mass = 0.0;
  for (long s = 0; s < box.size(); ++s) {
    const StateVector x = box.state(s);
    double lp = 0.0;
    for (int i = 0; i < box.dim(); ++i)
      lp += x[i] * theta[i] - std::exp(theta[i]) - std::lgamma(x[i] + 1.0);
    mass += std::exp(lp);
  }
  return mass;
}

TruncatedDistribution point_mass(const BoxPtr& box, const StateVector& x) {
  const long s = box->index(x);
  if (s < 0) throw ValidationError("point mass state lies outside the box");
  TruncatedDistribution d{box, Eigen::VectorXd::Zero(box->size())};
  d.probs[s] = 1.0;
  return d;
}

// ---------------------------------------------------------------- generator

Generator build_generator(const ReactionNetwork& net, const BoxPtr& box) {
  if (box->dim() != net.num_species())
    throw ValidationError("box has " + std::to_string(box->dim()) + " species, network has " +
                          std::to_string(net.num_species()));
  const long S = box->size();
  Generator gen;
  gen.box = box;
  gen.dropped_rate = Eigen::VectorXd::Zero(S);
  std::vector<Eigen::Triplet<double>> trip;
  for (long s = 0; s < S; ++s) {
    const StateVector x = box->state(s);
    double exit = 0.0;
    for (int j = 0; j < net.num_reactions(); ++j) {
      const double a = propensity(net, x, j);
      if (a <= 0.0) continue;
      const long t = box->index(x + net.change_matrix().col(j));
      if (t < 0) {
        gen.dropped_rate[s] += a;
        continue;
      }
      gen.transitions.push_back({s, t, j, a});
      trip.emplace_back(t, s, a);
      trip.emplace_back(s, s, -a);
      exit += a;
    }
    gen.max_exit_rate = std::max(gen.max_exit_rate, exit);
  }
  gen.L.resize(S, S);
  gen.L.setFromTriplets(trip.begin(), trip.end());
  gen.L.makeCompressed();
  return gen;
}

int interval_substeps(const Generator& gen, double h, const ExactOptions& opts) {
  const int unit = 2 * std::max(1, opts.backward_steps);
  const double needed = std::max<double>(opts.substeps, std::ceil(h * gen.max_exit_rate /
                                                                  opts.max_step_rate));
  return unit * static_cast<int>(std::ceil(needed / unit));
}

TruncatedDistribution master_solve(const Generator& gen, const TruncatedDistribution& p0,
                                   double duration, const ExactOptions& opts) {
  if (p0.probs.size() != gen.box->size())
    throw ValidationError("initial distribution does not match the generator's box");
  if (duration < 0.0) throw ValidationError("negative integration span");
  TruncatedDistribution p{gen.box, p0.probs};
  if (duration == 0.0) return p;
  const int steps = std::max(
      opts.substeps, static_cast<int>(std::ceil(duration * gen.max_exit_rate / opts.max_step_rate)));
  rk4(gen.L, p.probs, duration / steps, steps);
  sanitize(p.probs, "in master equation over span " + csv::format(duration));
  return p;
}

// ---------------------------------------------------------------- filter

LogLikelihoodFn gaussian_log_likelihood(const StateSpaceBox& box, const ObservationSet& obs) {
  if (obs.obs_model.state_dim() != box.dim())
    throw ValidationError("observation model and box disagree on the number of species");
  const long S = box.size();
  auto table = std::make_shared<std::vector<Eigen::VectorXd>>();
  for (int i = 0; i < obs.size(); ++i) {
    Eigen::VectorXd ll(S);
    for (long s = 0; s < S; ++s)
      ll[s] = obs.obs_model.log_likelihood(obs.values[i], box.state(s).cast<double>());
    table->push_back(std::move(ll));
  }
  return [table](int i) { return (*table)[static_cast<std::size_t>(i)]; };
}

ExactFilterResult exact_filter(const Generator& gen, const TruncatedDistribution& p0,
                               const TimeGrid& grid, const LogLikelihoodFn& loglik,
                               const ExactOptions& opts) {
  if (p0.probs.size() != gen.box->size())
    throw ValidationError("initial distribution does not match the generator's box");
  ExactFilterResult res;
  res.grid = grid;
  res.box = gen.box;
  res.post.resize(grid.size());
  res.pre.resize(grid.obs_nodes.size());

  Eigen::VectorXd p = p0.probs;
  res.post[0] = p;
  for (int k = 0; k + 1 < grid.size(); ++k) {
    const double a = grid.times[k];
    const double b = grid.times[k + 1];
    const int n = interval_substeps(gen, b - a, opts);
    const double drop_a = gen.dropped_rate.dot(p);
    rk4(gen.L, p, (b - a) / n, n);
    sanitize(p, "in filter " + interval_name(a, b));
    res.dropped_rate_mass += 0.5 * (b - a) * (drop_a + gen.dropped_rate.dot(p));

    const int i = grid.obs_at_node[k + 1];
    if (i >= 0) {
      res.pre[i] = p;
      const Eigen::VectorXd ll = loglik(i);
      Eigen::VectorXd w(p.size());
      double wmax = -std::numeric_limits<double>::infinity();
      for (Eigen::Index s = 0; s < p.size(); ++s) {
        w[s] = p[s] > 0.0 ? ll[s] + std::log(p[s]) : -std::numeric_limits<double>::infinity();
        wmax = std::max(wmax, w[s]);
      }
      if (!std::isfinite(wmax))
        throw NumericError("observation " + std::to_string(i + 1) +
                           ": likelihood update is degenerate (all weights vanish)");
      p = (w.array() - wmax).exp();
      const double z = p.sum();
      p /= z;
      res.log_evidence += wmax + std::log(z);
    }
    res.post[k + 1] = p;
  }
  return res;
}

ExactFilterResult exact_filter(const Generator& gen, const TruncatedDistribution& p0,
                               const TimeGrid& grid, const ObservationSet& obs,
                               const ExactOptions& opts) {
  return exact_filter(gen, p0, grid, gaussian_log_likelihood(*gen.box, obs), opts);
}

// ---------------------------------------------------------------- smoothers

ExactSmootherResult exact_smoother_backward(const Generator& gen, const ExactFilterResult& filter,
                                            const ExactOptions& opts) {
  const auto& grid = filter.grid;
  const long S = gen.box->size();
  const int q = std::max(1, opts.backward_steps);
  // Lobatto IIIC, stages at the start, middle and end of the reversed step.
  static constexpr double A[3][3] = {{1.0 / 6, -1.0 / 3, 1.0 / 6},
                                     {1.0 / 6, 5.0 / 12, -1.0 / 12},
                                     {1.0 / 6, 2.0 / 3, 1.0 / 6}};

  ExactSmootherResult res;
  res.grid = grid;
  res.box = gen.box;
  res.probs.resize(grid.size());
  Eigen::VectorXd y = filter.post.back();
  res.probs.back() = y;

  Eigen::SparseLU<SpMat> lu;
  for (int k = grid.size() - 2; k >= 0; --k) {
    const double a = grid.times[k];
    const double b = grid.times[k + 1];
    const int n = interval_substeps(gen, b - a, opts);
    const int per_half = n / (2 * q);
    const double dt = (b - a) / n;

    // Filter at 2q+1 equally spaced points, recomputed with the filter's own steps.
    std::vector<Eigen::VectorXd> u(static_cast<std::size_t>(2 * q + 1));
    u[0] = filter.post[k];
    for (int m = 1; m <= 2 * q; ++m) {
      u[m] = u[m - 1];
      rk4(gen.L, u[m], dt, per_half);
    }
    u[2 * q] = filter.left_value(k + 1);

    const double hs = (b - a) / q;
    for (int m = q - 1; m >= 0; --m) {
      const SpMat M[3] = {backward_generator(gen, u[2 * m + 2], opts, res.rate_cap_events),
                          backward_generator(gen, u[2 * m + 1], opts, res.rate_cap_events),
                          backward_generator(gen, u[2 * m], opts, res.rate_cap_events)};
      std::vector<Eigen::Triplet<double>> trip;
      for (long s = 0; s < 3 * S; ++s) trip.emplace_back(s, s, 1.0);
      for (int j = 0; j < 3; ++j)
        for (int col = 0; col < M[j].outerSize(); ++col)
          for (SpMat::InnerIterator it(M[j], col); it; ++it)
            for (int i = 0; i < 3; ++i)
              trip.emplace_back(i * S + it.row(), j * S + col, -hs * A[i][j] * it.value());
      SpMat K(3 * S, 3 * S);
      K.setFromTriplets(trip.begin(), trip.end());
      lu.compute(K);
      if (lu.info() != Eigen::Success)
        throw NumericError("backward smoother step matrix is singular " + interval_name(a, b));
      Eigen::VectorXd rhs(3 * S);
      rhs << y, y, y;
      const Eigen::VectorXd Y = lu.solve(rhs);
      y = Y.segment(2 * S, S);
      sanitize(y, "in backward smoother " + interval_name(a, b));
    }
    res.probs[k] = y;
  }
  return res;
}

BackwardFilterResult backward_filter(const Generator& gen, const TimeGrid& grid,
                                     const LogLikelihoodFn& loglik, const ExactOptions& opts) {
  const long S = gen.box->size();
  const SpMat Lt = gen.L.transpose();
  BackwardFilterResult res;
  res.right.resize(grid.size());
  res.left.resize(grid.obs_nodes.size());
  Eigen::VectorXd beta = Eigen::VectorXd::Ones(S);
  for (int k = grid.size() - 1; k >= 0; --k) {
    res.right[k] = beta;
    const int i = grid.obs_at_node[k];
    if (i >= 0) {
      const Eigen::VectorXd ll = loglik(i);
      Eigen::VectorXd w = ll.array() + beta.array().log();
      const double wmax = w.maxCoeff();
      if (!std::isfinite(wmax))
        throw NumericError("observation " + std::to_string(i + 1) +
                           ": backward filter update is degenerate");
      beta = (w.array() - wmax).exp();
      res.left[i] = beta;
    }
    if (k == 0) break;
    const double a = grid.times[k - 1];
    const double b = grid.times[k];
    const int n = interval_substeps(gen, b - a, opts);
    rk4(Lt, beta, (b - a) / n, n);
    if (!beta.allFinite())
      throw NumericError("non-finite backward filter " + interval_name(a, b));
    beta = beta.cwiseMax(0.0);
    const double scale = beta.maxCoeff();
    if (!(scale > 0.0)) throw NumericError("backward filter vanished " + interval_name(a, b));
    beta /= scale;
  }
  return res;
}

ExactSmootherResult exact_smoother_beta(const Generator& gen, const ExactFilterResult& filter,
                                        const LogLikelihoodFn& loglik, const ExactOptions& opts) {
  const auto beta = backward_filter(gen, filter.grid, loglik, opts);
  ExactSmootherResult res;
  res.grid = filter.grid;
  res.box = gen.box;
  res.probs.resize(filter.grid.size());
  for (int k = 0; k < filter.grid.size(); ++k) {
    Eigen::VectorXd p = filter.post[k].cwiseProduct(beta.right[k]);
    const double z = p.sum();
    if (!(z > 0.0))
      throw NumericError("smoothing distribution vanished at t = " +
                         csv::format(filter.grid.times[k]));
    res.probs[k] = p / z;
  }
  return res;
}

ExactSmootherResult exact_smoother_beta(const Generator& gen, const ExactFilterResult& filter,
                                        const ObservationSet& obs, const ExactOptions& opts) {
  return exact_smoother_beta(gen, filter, gaussian_log_likelihood(*gen.box, obs), opts);
}

// ---------------------------------------------------------------- summaries

StateMoments moments(const StateSpaceBox& box, const Eigen::VectorXd& probs) {
  const int n = box.dim();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(n, n);
  for (long s = 0; s < box.size(); ++s) {
    if (probs[s] == 0.0) continue;
    const Eigen::VectorXd x = box.state(s).cast<double>();
    mean += probs[s] * x;
    second += probs[s] * x * x.transpose();
  }
  return {mean, second - mean * mean.transpose()};
}

StateMoments moments(const TruncatedDistribution& dist) { return moments(*dist.box, dist.probs); }

Eigen::VectorXd project_poisson(const TruncatedDistribution& dist) {
  const Eigen::VectorXd mean = moments(dist).mean;
  for (Eigen::Index i = 0; i < mean.size(); ++i)
    if (!(mean[i] > 0.0))
      throw NumericError("Poisson projection undefined: species " + std::to_string(i + 1) +
                         " has zero mean");
  return mean.array().log();
}

double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  return 0.5 * (p - q).cwiseAbs().sum();
}

// ---------------------------------------------------------------- exact EM

ExactEmResult exact_rate_em(const ReactionNetwork& net, const BoxPtr& box, const TimeGrid& grid,
                            const ObservationSet& obs, int max_iter, double rel_tol,
                            const ExactOptions& opts) {
  const auto loglik = gaussian_log_likelihood(*box, obs);
  const auto p0 = truncated_poisson(box, net.initial_log_rates());
  const int K = net.num_reactions();
  ExactEmResult res;
  Eigen::VectorXd c = net.rates();
  res.rate_trace.push_back(c);
  for (int it = 0; it < max_iter; ++it) {
    const auto gen = build_generator(net.with_rates(c), box);
    const auto filter = exact_filter(gen, p0, grid, loglik, opts);
    const auto beta = backward_filter(gen, grid, loglik, opts);
    res.log_evidence.push_back(filter.log_evidence);

    Eigen::VectorXd fired = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd exposure = Eigen::VectorXd::Zero(K);
    auto accumulate = [&](const Eigen::VectorXd& pi, const Eigen::VectorXd& b, double w) {
      const double z = pi.dot(b);
      for (const auto& tr : gen.transitions) {
        const double pa = pi[tr.from] * tr.rate / z;
        fired[tr.reaction] += w * pa * b[tr.to];
        exposure[tr.reaction] += w * pa * b[tr.from];
      }
    };
    for (int k = 0; k + 1 < grid.size(); ++k) {
      const double h = grid.times[k + 1] - grid.times[k];
      const int i = grid.obs_at_node[k + 1];
      accumulate(filter.post[k], beta.right[k], 0.5 * h);
      accumulate(filter.left_value(k + 1), i >= 0 ? beta.left[i] : beta.right[k + 1], 0.5 * h);
    }
    Eigen::VectorXd c_new = c;
    for (int j = 0; j < K; ++j)
      if (c[j] > 0.0 && exposure[j] > 0.0) c_new[j] = c[j] * fired[j] / exposure[j];
    const double change =
        ((c_new - c).array().abs() / c.array().max(1e-300)).maxCoeff();
    c = c_new;
    res.rate_trace.push_back(c);
    if (change < rel_tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------- dumps

void write_moments_csv(const TimeGrid& grid, const StateSpaceBox& box,
                       const std::vector<Eigen::VectorXd>& probs,
                       const std::filesystem::path& file) {
  const int n = box.dim();
  std::vector<std::string> header{"time"};
  for (int i = 0; i < n; ++i) header.push_back("mean_" + std::to_string(i + 1));
  for (int i = 0; i < n; ++i) header.push_back("var_" + std::to_string(i + 1));
  csv::Writer w(file, header);
  for (int k = 0; k < grid.size(); ++k) {
    const auto m = moments(box, probs[k]);
    w.field(grid.times[k]);
    for (int i = 0; i < n; ++i) w.field(m.mean[i]);
    for (int i = 0; i < n; ++i) w.field(m.cov(i, i));
    w.end_row();
  }
}

void write_distribution_csv(const TimeGrid& grid, const std::vector<Eigen::VectorXd>& probs,
                            const std::filesystem::path& file) {
  csv::Writer w(file, {"time", "flat_index", "prob"});
  for (int k = 0; k < grid.size(); ++k)
    for (Eigen::Index s = 0; s < probs[k].size(); ++s) {
      w.field(grid.times[k]);
      w.field(static_cast<long long>(s));
      w.field(probs[k][s]);
      w.end_row();
    }
}

}  // namespace crnep
