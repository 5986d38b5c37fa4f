#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "modcausal/admg.hpp"
#include "modcausal/distribution.hpp"

namespace modcausal {

/// Fixed values for a set of variables, kept sorted by name.
struct Assignment {
  std::vector<std::pair<std::string, int>> values;

  Assignment() = default;
  Assignment(std::initializer_list<std::pair<std::string, int>> init);
  void set(const std::string& name, int value);
  std::optional<int> get(const std::string& name) const;
  VariableSet variables() const;
  bool empty() const { return values.empty(); }
};

/// Intervention label of a dataset: fixed values, uniformly randomized
/// variables, or neither (observational).
struct InterventionSpec {
  Assignment fixed;
  VariableSet randomized;

  VariableSet variables() const { return fixed.variables().unite(randomized); }
  bool empty() const { return fixed.empty() && randomized.empty(); }
  std::string to_string() const;
  static InterventionSpec parse(const std::string& text);
};

/// Sampled rows of category indices with an intervention label.
struct Dataset {
  std::vector<std::string> variables;
  std::vector<int> cards;
  std::vector<int> cells;  // row-major, n_rows * variables.size()
  std::size_t n_rows = 0;
  InterventionSpec intervention;
  std::string provenance;  // seed note

  int at(std::size_t row, std::size_t col) const { return cells[row * variables.size() + col]; }
  int column_of(const std::string& name) const;
  bool covers(const VariableSet& s) const;
  Dataset project(const VariableSet& keep) const;
};

/// Ground-truth discrete semi-Markovian SCM. Each variable is a total
/// deterministic table of (parent values, private noise, incident confounder
/// values); each bidirected edge owns one confounder feeding exactly its two
/// endpoints.
class DiscreteScm {
 public:
  struct Noise {
    int card = 0;
    std::vector<double> probs;
  };

  DiscreteScm() = default;
  DiscreteScm(Admg graph, std::vector<int> cards, std::vector<Noise> exogenous,
              std::vector<Noise> confounders, std::vector<std::vector<int>> tables);

  const Admg& graph() const { return graph_; }
  int card(int var) const { return cards_[var]; }
  const std::vector<int>& cards() const { return cards_; }
  const Noise& exogenous(int var) const { return exo_[var]; }
  const Noise& confounder(int edge) const { return conf_[edge]; }
  const std::vector<int>& table(int var) const { return tables_[var]; }
  const std::vector<int>& incident_edges(int var) const { return incident_[var]; }

  /// Table input order for a variable: parents ascending, then private noise,
  /// then incident-edge confounders in edge order.
  std::vector<int> input_cards(int var) const;

  int evaluate(int var, const std::vector<int>& parent_vals, int exo_val,
               const std::vector<int>& conf_vals) const;

  /// Row distribution of a variable given parent and confounder values, with
  /// the private noise summed out. Strictly a function of the mechanism.
  std::vector<double> conditional_row(int var, const std::vector<int>& parent_vals,
                                      const std::vector<int>& conf_vals) const;

  std::string to_text() const;

 private:
  Admg graph_;
  std::vector<int> cards_;
  std::vector<Noise> exo_;
  std::vector<Noise> conf_;
  std::vector<std::vector<int>> tables_;
  std::vector<std::vector<int>> incident_;  // per var: bidirected edge ids
};

DiscreteScm parse_scm(const std::string& text);

/// Ancestral sampling. Intervened variables bypass their mechanism: fixed
/// values are used as-is, randomized ones are drawn uniformly per row.
Dataset scm_sample(const DiscreteScm& scm, std::size_t n, const InterventionSpec& intervention,
                   std::uint64_t seed);

/// Exact distribution over the non-intervened variables under do(intervention),
/// by summing over all exogenous configurations. `max_cost` caps the largest
/// intermediate table (cells) during elimination.
Distribution scm_exact_joint(const DiscreteScm& scm, const Assignment& intervention = {},
                             std::size_t max_cost = 100000000);

/// Exact P(y | do(x)): scm_exact_joint under do(x), marginalized to y.
/// This is the brute-force oracle all derived expectations reference.
Distribution scm_interventional_oracle(const DiscreteScm& scm, const Assignment& x,
                                       const VariableSet& y, std::size_t max_cost = 100000000);

/// Exact conditional P(target | given, do(intervention)).
Distribution scm_conditional(const DiscreteScm& scm, const VariableSet& target,
                             const VariableSet& given, const Assignment& intervention = {});

/// Random semi-Markovian instance: uniform topological-order edge insertion,
/// random bidirected pairs, strictly-positive noise vectors, surjective
/// random mechanism rows so the induced joint is strictly positive.
struct RandomScmOptions {
  int arc_count = -1;     // default: n_vars
  int latent_count = -1;  // default: n_vars / 3
  int max_card = 3;
  int confounder_card = 2;
};
DiscreteScm random_scm(int n_vars, std::uint64_t seed, RandomScmOptions opts = {});

/// Random mechanisms and noise on a fixed graph (same recipe as random_scm).
DiscreteScm random_mechanisms(const Admg& g, std::uint64_t seed, RandomScmOptions opts = {});

// Dataset file formats: CSV with a header row plus a structured-text sidecar
// manifest recording the intervention label, seed note and row count.
std::string dataset_to_csv(const Dataset& d);
std::string dataset_manifest(const Dataset& d);
Dataset dataset_from_csv(const std::string& csv_text, const std::string& manifest_text);

}  // namespace modcausal
