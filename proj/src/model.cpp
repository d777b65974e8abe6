#include "crnep/model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "crnep/errors.hpp"

namespace crnep {

ReactionNetwork::ReactionNetwork(std::vector<std::string> species_names,
                                 Eigen::MatrixXi substrate_stoich,
                                 Eigen::MatrixXi product_stoich,
                                 Eigen::VectorXd rates,
                                 Eigen::VectorXd initial_log_rates)
    : species_names_(std::move(species_names)),
      substrate_(std::move(substrate_stoich)),
      product_(std::move(product_stoich)),
      rates_(std::move(rates)),
      initial_log_rates_(std::move(initial_log_rates)) {
  const auto n = static_cast<Eigen::Index>(species_names_.size());
  const auto k = rates_.size();
  if (substrate_.rows() != n || product_.rows() != n || substrate_.cols() != k ||
      product_.cols() != k) {
    throw ValidationError("stoichiometry matrices must be " + std::to_string(n) + "x" +
                          std::to_string(k));
  }
  if (initial_log_rates_.size() != n) {
    throw ValidationError("initial_log_rates must have one entry per species");
  }
  if ((substrate_.array() < 0).any() || (product_.array() < 0).any()) {
    throw ValidationError("stoichiometric coefficients must be non-negative");
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(rates_[j] >= 0.0) || !std::isfinite(rates_[j])) {
      throw ValidationError("rate of reaction " + std::to_string(j + 1) +
                            " must be finite and non-negative");
    }
  }
  if (!initial_log_rates_.allFinite()) {
    throw ValidationError("initial_log_rates must be finite");
  }
  change_ = product_ - substrate_;
  for (Eigen::Index j = 0; j < k; ++j) {
    if ((change_.col(j).array() == 0).all()) {
      throw ValidationError("reaction " + std::to_string(j + 1) + " does not change the state");
    }
  }
  for (std::size_t a = 0; a < species_names_.size(); ++a) {
    for (std::size_t b = a + 1; b < species_names_.size(); ++b) {
      if (species_names_[a] == species_names_[b]) {
        throw ValidationError("duplicate species name '" + species_names_[a] + "'");
      }
    }
  }
}

ReactionNetwork ReactionNetwork::with_rates(const Eigen::VectorXd& rates) const {
  return ReactionNetwork(species_names_, substrate_, product_, rates, initial_log_rates_);
}

ReactionNetwork ReactionNetwork::with_initial_log_rates(const Eigen::VectorXd& theta0) const {
  return ReactionNetwork(species_names_, substrate_, product_, rates_, theta0);
}

int ReactionNetwork::species_index(const std::string& name) const {
  for (std::size_t i = 0; i < species_names_.size(); ++i) {
    if (species_names_[i] == name) return static_cast<int>(i);
  }
  throw ValidationError("unknown species '" + name + "'");
}

std::int64_t falling_factorial(std::int64_t m, std::int64_t r) {
  if (r > m) return 0;
  std::int64_t out = 1;
  for (std::int64_t q = 0; q < r; ++q) out *= (m - q);
  return out;
}

double propensity(const ReactionNetwork& net, const StateVector& x, int j) {
  const auto& sub = net.substrate_stoich();
  double value = net.rates()[j];
  for (int i = 0; i < net.num_species(); ++i) {
    const int r = sub(i, j);
    if (r == 0) continue;
    if (x[i] < r) return 0.0;
    value *= static_cast<double>(falling_factorial(x[i], r));
  }
  return value;
}

Eigen::VectorXi change_vector(const ReactionNetwork& net, int j) {
  return net.change_matrix().col(j);
}

namespace {

std::int64_t gcd_of(const std::vector<std::int64_t>& v) {
  std::int64_t g = 0;
  for (auto e : v) g = std::gcd(g, e < 0 ? -e : e);
  return g;
}

void make_primitive(std::vector<std::int64_t>& v) {
  const auto g = gcd_of(v);
  if (g > 1) {
    for (auto& e : v) e /= g;
  }
}

}  // namespace

std::vector<ConservationLaw> conservation_laws(const ReactionNetwork& net, int search_radius) {
  const int n = net.num_species();
  const int k = net.num_reactions();
  // Rows of nu^T; fraction-free reduction to reduced row echelon form.
  std::vector<std::vector<std::int64_t>> rows(k, std::vector<std::int64_t>(n));
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < n; ++i) rows[j][i] = net.change_matrix()(i, j);

  std::vector<int> pivot_cols;
  int r = 0;
  for (int c = 0; c < n && r < k; ++c) {
    int p = -1;
    for (int q = r; q < k; ++q) {
      if (rows[q][c] != 0) {
        p = q;
        break;
      }
    }
    if (p < 0) continue;
    std::swap(rows[r], rows[p]);
    for (int q = 0; q < k; ++q) {
      if (q == r || rows[q][c] == 0) continue;
      const auto a = rows[r][c];
      const auto b = rows[q][c];
      for (int i = 0; i < n; ++i) rows[q][i] = rows[q][i] * a - rows[r][i] * b;
      make_primitive(rows[q]);
    }
    make_primitive(rows[r]);
    pivot_cols.push_back(c);
    ++r;
  }

  std::vector<bool> is_pivot(n, false);
  for (int c : pivot_cols) is_pivot[c] = true;

  std::vector<ConservationLaw> laws;
  for (int f = 0; f < n; ++f) {
    if (is_pivot[f]) continue;
    std::int64_t scale = 1;
    for (std::size_t q = 0; q < pivot_cols.size(); ++q) {
      const auto piv = std::abs(rows[q][pivot_cols[q]]);
      scale = std::lcm(scale, piv);
    }
    std::vector<std::int64_t> a(n, 0);
    a[f] = scale;
    for (std::size_t q = 0; q < pivot_cols.size(); ++q) {
      const int pc = pivot_cols[q];
      a[pc] = -rows[q][f] * (scale / rows[q][pc]);
    }
    make_primitive(a);
    for (auto e : a) {
      if (e != 0) {
        if (e < 0)
          for (auto& v : a) v = -v;
        break;
      }
    }
    bool within = true;
    for (auto e : a) within = within && std::abs(e) <= search_radius;
    if (!within) continue;
    ConservationLaw law{Eigen::VectorXi(n)};
    for (int i = 0; i < n; ++i) law.weights[i] = static_cast<int>(a[i]);
    laws.push_back(std::move(law));
  }
  return laws;
}

ReactionNetwork parse_model_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model JSON: ") + e.what());
  }
  try {
    const auto species = doc.at("species").get<std::vector<std::string>>();
    const auto& reactions = doc.at("reactions");
    const auto n = static_cast<int>(species.size());
    const auto k = static_cast<int>(reactions.size());
    auto index_of = [&](const std::string& name) {
      for (int i = 0; i < n; ++i)
        if (species[i] == name) return i;
      throw ValidationError("model JSON: reaction refers to unknown species '" + name + "'");
    };
    Eigen::MatrixXi sub = Eigen::MatrixXi::Zero(n, k);
    Eigen::MatrixXi prod = Eigen::MatrixXi::Zero(n, k);
    Eigen::VectorXd rates(k);
    for (int j = 0; j < k; ++j) {
      const auto& rx = reactions[j];
      if (rx.contains("substrates"))
        for (const auto& item : rx.at("substrates").items())
          sub(index_of(item.key()), j) += item.value().get<int>();
      if (rx.contains("products"))
        for (const auto& item : rx.at("products").items())
          prod(index_of(item.key()), j) += item.value().get<int>();
      rates[j] = rx.at("rate").get<double>();
    }
    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(n);
    if (doc.contains("initial_log_rates")) {
      const auto v = doc.at("initial_log_rates").get<std::vector<double>>();
      if (static_cast<int>(v.size()) != n)
        throw ValidationError("model JSON: initial_log_rates must have " + std::to_string(n) +
                              " entries");
      theta0 = Eigen::Map<const Eigen::VectorXd>(v.data(), n);
    }
    return ReactionNetwork(species, sub, prod, rates, theta0);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model JSON: ") + e.what());
  }
}

ReactionNetwork load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_model_json(buf.str());
}

std::string model_to_json(const ReactionNetwork& net) {
  nlohmann::ordered_json doc;
  doc["species"] = net.species_names();
  auto reactions = nlohmann::ordered_json::array();
  for (int j = 0; j < net.num_reactions(); ++j) {
    nlohmann::ordered_json rx;
    rx["substrates"] = nlohmann::ordered_json::object();
    rx["products"] = nlohmann::ordered_json::object();
    for (int i = 0; i < net.num_species(); ++i) {
      if (net.substrate_stoich()(i, j) > 0)
        rx["substrates"][net.species_names()[i]] = net.substrate_stoich()(i, j);
      if (net.product_stoich()(i, j) > 0)
        rx["products"][net.species_names()[i]] = net.product_stoich()(i, j);
    }
    rx["rate"] = net.rates()[j];
    reactions.push_back(rx);
  }
  doc["reactions"] = reactions;
  doc["initial_log_rates"] = std::vector<double>(net.initial_log_rates().data(),
                                                 net.initial_log_rates().data() + net.num_species());
  return doc.dump(2);
}

void save_model(const ReactionNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file " + path.string());
  out << model_to_json(net) << '\n';
}

}  // namespace crnep
