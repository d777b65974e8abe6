#ifndef CRNEP_MODEL_HPP
#define CRNEP_MODEL_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace crnep {

/// Copy numbers of every species, x in N_0^n.
using StateVector = Eigen::VectorXi;

/// Integer weights a with a^T nu_j = 0 for every reaction j.
struct ConservationLaw {
  Eigen::VectorXi weights;
};

/**
 * A chemical reaction network with mass-action kinetics.
 *
 * Rates are stored in the absorbed form c_j, i.e. the substrate factorials are
 * already folded into the constant, so that the propensity is
 * c_j * prod_i (x_i)_{substrate_ij} with falling factorials.
 *
 * Immutable after construction.
 */
class ReactionNetwork {
 public:
  ReactionNetwork(std::vector<std::string> species_names,
                  Eigen::MatrixXi substrate_stoich,
                  Eigen::MatrixXi product_stoich,
                  Eigen::VectorXd rates,
                  Eigen::VectorXd initial_log_rates);

  int num_species() const { return static_cast<int>(species_names_.size()); }
  int num_reactions() const { return static_cast<int>(rates_.size()); }

  const std::vector<std::string>& species_names() const { return species_names_; }
  const Eigen::MatrixXi& substrate_stoich() const { return substrate_; }
  const Eigen::MatrixXi& product_stoich() const { return product_; }
  /// nu = product - substrate, n x k.
  const Eigen::MatrixXi& change_matrix() const { return change_; }
  const Eigen::VectorXd& rates() const { return rates_; }
  const Eigen::VectorXd& initial_log_rates() const { return initial_log_rates_; }

  /// Copy with different rate constants (same structure).
  ReactionNetwork with_rates(const Eigen::VectorXd& rates) const;
  ReactionNetwork with_initial_log_rates(const Eigen::VectorXd& theta0) const;

  int species_index(const std::string& name) const;

 private:
  std::vector<std::string> species_names_;
  Eigen::MatrixXi substrate_;
  Eigen::MatrixXi product_;
  Eigen::MatrixXi change_;
  Eigen::VectorXd rates_;
  Eigen::VectorXd initial_log_rates_;
};

/// (m)_r = m!/(m-r)!; zero when r > m, one when r == 0.
std::int64_t falling_factorial(std::int64_t m, std::int64_t r);

/// Mass-action propensity lambda_j(x) = c_j prod_i (x_i)_{substrate_ij}.
double propensity(const ReactionNetwork& net, const StateVector& x, int j);

/// Change vector nu_j = product_{.j} - substrate_{.j}.
Eigen::VectorXi change_vector(const ReactionNetwork& net, int j);

/**
 * Integer basis of the left null space of the change matrix.
 *
 * Each returned law is primitive (gcd of entries is 1) with its first nonzero
 * entry positive. Basis vectors with an entry outside [-search_radius,
 * search_radius] are dropped.
 */
std::vector<ConservationLaw> conservation_laws(const ReactionNetwork& net, int search_radius = 3);

/// Parse the model JSON schema used by the command line tool.
ReactionNetwork load_model(const std::filesystem::path& path);
ReactionNetwork parse_model_json(const std::string& text);
std::string model_to_json(const ReactionNetwork& net);
void save_model(const ReactionNetwork& net, const std::filesystem::path& path);

}  // namespace crnep

#endif  // CRNEP_MODEL_HPP
