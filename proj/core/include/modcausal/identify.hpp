#pragma once

#include <string>
#include <vector>

#include "modcausal/admg.hpp"
#include "modcausal/distribution.hpp"

namespace modcausal {

/// Symbolic interventional estimand, evaluable against a full observational
/// joint. Conditionals are stored as explicit quotients of marginals of P(V),
/// with no simplification.
struct Estimand {
  enum class Kind { JointTerm, MarginalSum, Product, Quotient, Unidentifiable };

  Kind kind = Kind::JointTerm;
  VariableSet vars;  // JointTerm: marginal variables; MarginalSum: summed-out variables
  std::vector<Estimand> children;  // MarginalSum: 1, Quotient: [num, den], Product: n
  VariableSet hedge_outer, hedge_inner;  // Unidentifiable witness (C-forest roots)
  VariableSet query_outcome, query_do;   // set on the root by id_algorithm

  bool identifiable() const;
  VariableSet free_variables() const;
  std::string to_sexpr() const;

  static Estimand joint_term(VariableSet vars);
  static Estimand marginal_sum(VariableSet summed, Estimand child);
  static Estimand product(std::vector<Estimand> children);
  static Estimand quotient(Estimand num, Estimand den);
  static Estimand unidentifiable(VariableSet outer, VariableSet inner);
};

/// Standard ID recursion for P_x(y) over an ADMG. Returns an evaluable
/// estimand, or an Unidentifiable value carrying the hedge witness.
Estimand id_algorithm(const Admg& g, const VariableSet& x, const VariableSet& y);

/// Evaluates an estimand against the full observational joint, returning the
/// table over (query_outcome | query_do settings), normalized per setting.
/// Throws numeric_error on zero-probability conditioning (Assumption 3) and
/// validation_error for Unidentifiable input.
Distribution evaluate_estimand(const Estimand& e, const Distribution& joint);

/// Tian c-factors from the observational joint: one P_{pa(C)}(C) per
/// c-component, via the topological-order product form. The pointwise product
/// over components reconstructs the joint.
std::vector<std::pair<VariableSet, Distribution>> tian_c_factors(const Admg& g,
                                                                 const Distribution& joint);

}  // namespace modcausal
