#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace modcausal {

/// Raised when an input (graph text, SCM spec, plan, dataset...) fails validation.
class validation_error : public std::runtime_error {
 public:
  explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a numeric precondition breaks (zero-probability conditioning,
/// enumeration cap exceeded, NaN loss).
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a training plan cannot be executed (no usable directive).
class untrainable_error : public std::runtime_error {
 public:
  explicit untrainable_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A set of variable names. Kept sorted and unique; graph-aware code orders
/// members by node index when printing.
class VariableSet {
 public:
  VariableSet() = default;
  VariableSet(std::initializer_list<std::string> names);
  explicit VariableSet(std::vector<std::string> names);

  bool contains(const std::string& name) const;
  bool empty() const { return names_.empty(); }
  std::size_t size() const { return names_.size(); }

  void insert(const std::string& name);
  VariableSet unite(const VariableSet& other) const;
  VariableSet minus(const VariableSet& other) const;
  VariableSet intersect(const VariableSet& other) const;
  bool intersects(const VariableSet& other) const;
  bool subset_of(const VariableSet& other) const;

  const std::vector<std::string>& names() const { return names_; }
  auto begin() const { return names_.begin(); }
  auto end() const { return names_.end(); }

  bool operator==(const VariableSet& other) const = default;
  bool operator<(const VariableSet& other) const { return names_ < other.names_; }

 private:
  std::vector<std::string> names_;  // sorted, unique
};

/// Acyclic directed mixed graph: directed edges plus bidirected edges marking
/// a latent confounder between two observed variables (semi-Markovian form).
/// Immutable after construction; all operations below are pure.
class Admg {
 public:
  Admg() = default;
  /// Builds and validates. Directed part must be acyclic, no self-loops,
  /// all endpoints declared nodes, bidirected pairs distinct.
  Admg(std::vector<std::string> nodes,
       std::vector<std::pair<std::string, std::string>> directed,
       std::vector<std::pair<std::string, std::string>> bidirected);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<std::pair<int, int>>& directed_edges() const { return directed_; }
  const std::vector<std::pair<int, int>>& bidirected_edges() const { return bidirected_; }

  bool has_node(const std::string& name) const;
  int index_of(const std::string& name) const;  // throws on unknown name
  const std::string& name_of(int index) const { return nodes_.at(index); }

  const std::vector<int>& parents(int node) const { return parents_[node]; }
  const std::vector<int>& children(int node) const { return children_[node]; }
  const std::vector<int>& bidirected_neighbors(int node) const { return sib_[node]; }

  /// Node indices in a fixed topological order of the directed part.
  const std::vector<int>& topological_order() const { return topo_; }

  /// Members of `s` as sorted node indices; throws on unknown names.
  std::vector<int> indices_of(const VariableSet& s) const;
  VariableSet set_of(const std::vector<int>& indices) const;

  /// Canonical text form (sorted node/edge statements). Parsing it back
  /// yields an equal graph.
  std::string to_text() const;

  bool operator==(const Admg& other) const;

 private:
  std::vector<std::string> nodes_;
  std::map<std::string, int> index_;
  std::vector<std::pair<int, int>> directed_;    // sorted (tail, head)
  std::vector<std::pair<int, int>> bidirected_;  // sorted (min, max)
  std::vector<std::vector<int>> parents_, children_, sib_;
  std::vector<int> topo_;
};

/// Parses the one-statement-per-line graph format:
///   node A
///   A -> B
///   A <-> B
/// Undeclared endpoints are implicitly declared in first-use order.
/// `latent` statements are rejected here; use split_non_markovian for those.
Admg parse_admg(const std::string& text);

struct SplitResult {
  Admg graph;
  std::vector<std::string> warnings;  // latents dropped for having < 2 children
};

/// Parses a graph description that may declare `latent U` nodes with outgoing
/// edges into observed nodes, and replaces each latent having children
/// {c1..ck} by bidirected edges between every pair. Latents with directed
/// parents are an error; latents with fewer than two children are dropped
/// with a warning.
SplitResult split_non_markovian(const std::string& text);

/// Maximal bidirected-connected sets, partitioning the nodes. Deterministic:
/// components ordered by smallest member index, members in index order.
std::vector<VariableSet> c_components(const Admg& g);

/// Strict ancestors of `s` in graph_do(g, intervention): every node with a
/// directed path into `s` after surgery, excluding `s` itself.
VariableSet ancestors(const Admg& g, const VariableSet& s, const VariableSet& intervention = {});

/// Strict descendants of `s` in g, excluding `s` itself.
VariableSet descendants(const Admg& g, const VariableSet& s);

/// Union of directed parents of members of `s`, minus `s` itself.
VariableSet parents_of_set(const Admg& g, const VariableSet& s);

/// Graph surgery for do(i): removes directed edges into members of i and
/// bidirected edges incident to members of i.
Admg graph_do(const Admg& g, const VariableSet& i);

/// m-separation of `a` and `b` given `c`, computed by materializing one
/// latent node per bidirected edge and running d-separation on the DAG.
bool m_separated(const Admg& g, const VariableSet& a, const VariableSet& b,
                 const VariableSet& c);

/// True iff conditioning on `p` equals intervening on `p` for the joint over
/// `y`: after deleting the outgoing directed edges of `p`, `y` and `p` are
/// m-separated. Vacuously true for empty `p`.
bool conditioning_equals_do(const Admg& g, const VariableSet& y, const VariableSet& p);

/// Do-calculus rule-2 test for the joint over `y` under do(intervention):
/// with g' = graph_do(g, intervention) and p = parents_of_set(g', y), checks
/// conditioning_equals_do(g', y, p). Requires y disjoint from intervention.
bool rule2_holds(const Admg& g, const VariableSet& y, const VariableSet& intervention = {});

}  // namespace modcausal
