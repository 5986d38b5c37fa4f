#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "modcausal/admg.hpp"
#include "modcausal/distribution.hpp"
#include "modcausal/scm.hpp"

namespace modcausal {

/// Noise sizing for a learnable model. Zeros mean "use the default":
/// private-noise cardinality = the variable's cardinality, confounder
/// cardinality = product of the endpoint cardinalities (times the scale).
struct NoiseConfig {
  int exo_card = 0;
  int confounder_card = 0;
  double confounder_card_scale = 1.0;
  /// When set, the per-edge confounder priors are softmax-parametrized and
  /// learned together with the edge's endpoint mechanisms. A fixed uniform
  /// prior with product cardinality cannot represent every strictly positive
  /// pair joint (the equal-weight mixture of K products has strictly less
  /// reach than arbitrary-weight mixtures), so this defaults on.
  bool trainable_confounder_prior = true;
  double init_scale = 0.01;
};

/// Learnable causal generative model over an ADMG: one softmax-table
/// mechanism per variable reading exactly its parents, a private uniform
/// noise source, and one shared noise source per bidirected edge.
class Dcm {
 public:
  struct Mechanism {
    int e_card = 1;
    std::vector<int> row_cards;    // [parent cards..., e_card, incident u cards...]
    std::vector<double> logits;    // n_rows * card, row-major
    int out_card = 0;
    std::size_t n_rows() const { return logits.empty() ? 0 : logits.size() / out_card; }
  };
  struct Confounder {
    int card = 0;
    std::vector<double> prior_logits;  // softmax gives the prior
  };

  Dcm() = default;
  Dcm(Admg graph, std::vector<int> cards, const NoiseConfig& config, std::uint64_t seed);

  const Admg& graph() const { return graph_; }
  const std::vector<int>& cards() const { return cards_; }
  int card(int var) const { return cards_[var]; }
  const NoiseConfig& config() const { return config_; }

  const Mechanism& mechanism(int var) const { return mechs_[var]; }
  Mechanism& mechanism(int var) { return mechs_[var]; }
  const Confounder& confounder(int edge) const { return confs_[edge]; }
  Confounder& confounder(int edge) { return confs_[edge]; }
  const std::vector<int>& incident_edges(int var) const { return incident_[var]; }

  bool trainable(int var) const { return trainable_[var] != 0; }
  void set_trainable(int var, bool flag) { trainable_[var] = flag ? 1 : 0; }
  /// An edge prior is learned only while both endpoint mechanisms are.
  bool edge_prior_trainable(int edge) const;

  /// Softmax probabilities of one mechanism row.
  std::vector<double> row_probs(int var, std::size_t row) const;
  /// Mechanism row with the private noise summed out (uniform prior).
  std::vector<double> marginal_row_probs(int var, const std::vector<int>& parent_vals,
                                         const std::vector<int>& conf_vals) const;
  std::size_t row_of(int var, const std::vector<int>& parent_vals, int e_val,
                     const std::vector<int>& conf_vals) const;
  std::vector<double> confounder_prior(int edge) const;

  std::uint64_t graph_hash() const;
  std::string to_checkpoint() const;
  static Dcm from_checkpoint(const std::string& text,
                             const Admg* expected_graph = nullptr);

 private:
  Admg graph_;
  std::vector<int> cards_;
  NoiseConfig config_;
  std::vector<Mechanism> mechs_;
  std::vector<Confounder> confs_;
  std::vector<std::vector<int>> incident_;
  std::vector<char> trainable_;
};

/// Fresh model with small seeded symmetric logits; all variables trainable.
Dcm dcm_init(const Admg& g, const std::vector<int>& cards, const NoiseConfig& config,
             std::uint64_t seed);

/// Returns a copy with the trainable flag of `vars` set to `flag`.
Dcm dcm_set_trainable(const Dcm& dcm, const VariableSet& vars, bool flag);

/// Forward (ancestral) sampling. Each shared noise source is drawn once per
/// row and fed to both endpoint mechanisms. Intervened variables are set from
/// the assignment; clamped variables are copied row-by-row from the given
/// dataset columns (which must have exactly n rows).
Dataset dcm_forward_sample(const Dcm& dcm, std::size_t n, const Assignment& intervention,
                           const Dataset* clamp, std::uint64_t seed);

/// Exact Q(target | do(given_do), do(intervention)) by summing over all noise
/// configurations, restricted to the ancestors of the target. Deterministic
/// reduction order.
Distribution dcm_exact_distribution(const Dcm& dcm, const VariableSet& target,
                                    const Assignment& given_do = {},
                                    const Assignment& intervention = {},
                                    std::size_t max_cost = 100000000);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace modcausal
