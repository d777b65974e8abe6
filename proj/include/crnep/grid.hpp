#ifndef CRNEP_GRID_HPP
#define CRNEP_GRID_HPP

#include <vector>

namespace crnep {

/**
 * Uniform time grid on [0, T] with every observation time inserted as a node.
 *
 * A uniform node closer than 1e-6 * step to an observation time is replaced by
 * it, so no interval degenerates.
 */
struct TimeGrid {
  std::vector<double> times;     // strictly increasing, times.front() == 0, back() == T
  std::vector<int> obs_nodes;    // node index of observation i
  std::vector<int> obs_at_node;  // observation index at a node, or -1

  int size() const { return static_cast<int>(times.size()); }
  double horizon() const { return times.back(); }
  int num_intervals() const { return size() - 1; }
};

TimeGrid make_grid(double horizon, double step, const std::vector<double>& obs_times);

}  // namespace crnep

#endif  // CRNEP_GRID_HPP
