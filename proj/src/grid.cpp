#include "crnep/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crnep/errors.hpp"

namespace crnep {

TimeGrid make_grid(double horizon, double step, const std::vector<double>& obs_times) {
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw ValidationError("horizon must be positive and finite");
  if (!(step > 0.0) || !std::isfinite(step)) throw ValidationError("grid step must be positive");
  const double cells = std::ceil(horizon / step - 1e-9);
  if (cells > 5e7) throw ValidationError("grid step too small for the horizon");

  std::vector<double> nodes;
  const auto n_cells = static_cast<long>(cells);
  nodes.reserve(static_cast<std::size_t>(n_cells) + obs_times.size() + 1);
  for (long c = 0; c < n_cells; ++c) nodes.push_back(static_cast<double>(c) * step);
  nodes.push_back(horizon);

  double prev = 0.0;
  for (double t : obs_times) {
    if (!(t > prev) || t > horizon)
      throw ValidationError("observation times must be strictly increasing inside (0, T]");
    prev = t;
  }

  const double snap = 1e-6 * step;
  std::vector<double> merged;
  merged.reserve(nodes.size() + obs_times.size());
  std::size_t q = 0;
  for (double node : nodes) {
    while (q < obs_times.size() && obs_times[q] < node - snap) merged.push_back(obs_times[q++]);
    if (q < obs_times.size() && std::abs(obs_times[q] - node) <= snap && node != 0.0) {
      merged.push_back(obs_times[q++]);
    } else {
      if (!merged.empty() && std::abs(merged.back() - node) <= snap) continue;
      merged.push_back(node);
    }
  }
  while (q < obs_times.size()) merged.push_back(obs_times[q++]);

  TimeGrid grid;
  grid.times = std::move(merged);
  grid.obs_at_node.assign(grid.times.size(), -1);
  std::size_t k = 0;
  for (std::size_t i = 0; i < obs_times.size(); ++i) {
    while (k < grid.times.size() && grid.times[k] != obs_times[i]) ++k;
    if (k == grid.times.size()) throw ValidationError("observation time lost while building grid");
    grid.obs_nodes.push_back(static_cast<int>(k));
    grid.obs_at_node[k] = static_cast<int>(i);
  }
  return grid;
}

}  // namespace crnep
