#pragma once

#include <string>
#include <vector>

#include "modcausal/admg.hpp"

namespace modcausal {

/// DAG over h-nodes (unions of whole c-components of the post-intervention
/// graph). An edge s -> t records that conditioning on pa(t) inside s is not
/// the same as intervening, so s must be trained before t.
struct HGraph {
  std::vector<VariableSet> hnodes;        // sorted by smallest member index
  std::vector<std::pair<int, int>> edges; // ordered hnode-index pairs, sorted
  Admg source;
  VariableSet intervention;

  int hnode_of(const std::string& var) const;
  std::string to_text() const;  // graph text over H0..Hn with membership annotations
};

/// One matching target of a stage under one dataset label: train the h-node's
/// mechanisms to match P(hnode ∪ ancestor_set | conditioning_parents, do(label)).
struct PlanDirective {
  VariableSet label;
  VariableSet ancestor_set;
  VariableSet conditioning_parents;
  bool usable = true;
  std::string note;
};

struct PlanStage {
  VariableSet hnode;
  int level = 0;
  std::vector<PlanDirective> directives;
};

/// Complete modular training plan: stages in a linear extension of the
/// H-graph partial order, with per-label directives.
struct TrainingPlan {
  Admg graph;
  std::vector<VariableSet> labels;
  HGraph hgraph;  // the observational H-graph
  std::vector<PlanStage> stages;

  std::string to_text() const;
};

TrainingPlan parse_plan(const std::string& text);

/// Builds the observational H-graph: h-nodes start as c-components, an edge
/// s -> t is added when pa(t) ∩ s is nonempty and conditioning on it differs
/// from intervening, and directed cycles are merged into single h-nodes until
/// the result is acyclic.
HGraph construct_hgraph(const Admg& g);

/// H-graph of graph_do(g, i), coarsened so every h-node contains exactly the
/// variables of one h-node of `base` (the observational H-graph). The merged
/// pieces keep the base partial order valid for every intervention.
HGraph construct_hgraph_interventional(const Admg& g, const VariableSet& i, const HGraph& base);

/// Topological levels (Kahn layering) of an acyclic H-graph. H-nodes in one
/// level are mutually unordered; ties break by smallest variable index.
std::vector<std::vector<int>> partial_order(const HGraph& h);

/// Grows the ancestor set by repeatedly adding parents of the joint until
/// rule 2 holds; terminates at the strict-ancestor set in the worst case.
VariableSet ancestor_set_greedy(const Admg& g, const VariableSet& hnode);

/// Smallest ancestor set satisfying the rule-2 condition under do(intervention),
/// found by exhaustive subset enumeration in order of (size, lexicographic).
/// Requires hnode disjoint from the intervention. Throws numeric_error when
/// the ancestor pool exceeds `cap`.
VariableSet ancestor_set_minimal(const Admg& g, const VariableSet& hnode,
                                 const VariableSet& intervention = {}, int cap = 20);

/// Builds the full plan for the given intervention labels. Throws
/// untrainable_error if some stage ends up with no usable directive.
TrainingPlan make_training_plan(const Admg& g, const std::vector<VariableSet>& labels);

}  // namespace modcausal
