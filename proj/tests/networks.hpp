// Small networks shared by the test binaries.
#ifndef CRNEP_TESTS_NETWORKS_HPP
#define CRNEP_TESTS_NETWORKS_HPP

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crnep/model.hpp"

namespace crnep::testnet {

inline ReactionNetwork make(std::vector<std::string> species,
                            const std::vector<std::vector<int>>& substrates,
                            const std::vector<std::vector<int>>& products,
                            std::vector<double> rates, std::vector<double> theta0) {
  const int n = static_cast<int>(species.size());
  const int k = static_cast<int>(rates.size());
  Eigen::MatrixXi sub(n, k), pro(n, k);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < n; ++i) {
      sub(i, j) = substrates[j][i];
      pro(i, j) = products[j][i];
    }
  return ReactionNetwork(std::move(species), sub, pro,
                         Eigen::Map<Eigen::VectorXd>(rates.data(), k),
                         Eigen::Map<Eigen::VectorXd>(theta0.data(), n));
}

// 0 -> X at rate b, X -> 0 at rate d per molecule.
inline ReactionNetwork birth_death(double b = 1.0, double d = 0.1, double mean0 = 5.0) {
  return make({"X"}, {{0}, {1}}, {{1}, {0}}, {b, d}, {std::log(mean0)});
}

inline ReactionNetwork pure_birth(double c) { return make({"X"}, {{0}}, {{1}}, {c}, {-30.0}); }

// Prey growth, predation, predator death.
inline ReactionNetwork lotka_volterra(double c1 = 1.0, double c2 = 0.005, double c3 = 0.6) {
  return make({"Prey", "Predator"}, {{1, 0}, {1, 1}, {0, 1}}, {{2, 0}, {0, 2}, {0, 0}},
              {c1, c2, c3}, {std::log(50.0), std::log(100.0)});
}

// X1 -> X2 -> X3 -> X4 -> X1.
inline ReactionNetwork closed_loop(std::vector<double> rates = {0.8, 0.5, 0.6, 0.4}) {
  return make({"X1", "X2", "X3", "X4"},
              {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}},
              {{0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {1, 0, 0, 0}}, std::move(rates),
              {std::log(2.0), std::log(1.5), std::log(1.5), 0.0});
}

// A -> B and B -> A.
inline ReactionNetwork isomerization(double kf = 0.7, double kb = 0.3) {
  return make({"A", "B"}, {{1, 0}, {0, 1}}, {{0, 1}, {1, 0}}, {kf, kb},
              {std::log(4.0), std::log(2.0)});
}

// A -> B only.
inline ReactionNetwork conversion(double k = 0.5) {
  return make({"A", "B"}, {{1, 0}}, {{0, 1}}, {k}, {std::log(6.0), std::log(1.0)});
}

}  // namespace crnep::testnet

#endif  // CRNEP_TESTS_NETWORKS_HPP
