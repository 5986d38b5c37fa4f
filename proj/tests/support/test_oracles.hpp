#pragma once

// Test-side brute-force oracles, deliberately independent of the library's
// algorithms: d-separation by exhaustive simple-path enumeration, and
// c-component checks from first principles.

#include <functional>
#include <set>
#include <vector>

#include "modcausal/admg.hpp"

namespace test_oracles {

using modcausal::Admg;
using modcausal::VariableSet;

struct PathDag {
  int n_total;
  // adjacency with direction: edge (u, v, true) means u -> v
  std::vector<std::vector<std::pair<int, bool>>> adj;  // (neighbor, points_away_from_me)

  explicit PathDag(const Admg& g) {
    n_total = (int)g.size() + (int)g.bidirected_edges().size();
    adj.resize(n_total);
    auto add = [&](int a, int b) {  // a -> b
      adj[a].push_back({b, true});
      adj[b].push_back({a, false});
    };
    for (auto& [a, b] : g.directed_edges()) add(a, b);
    int latent = (int)g.size();
    for (auto& [a, b] : g.bidirected_edges()) {
      add(latent, a);
      add(latent, b);
      latent++;
    }
  }
};

inline std::set<int> ancestors_of(const PathDag& dag, const std::set<int>& base) {
  std::set<int> out = base;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int v = 0; v < dag.n_total; v++) {
      if (out.count(v)) continue;
      for (auto& [w, away] : dag.adj[v]) {
        if (away && out.count(w)) {  // v -> w with w already in the closure
          out.insert(v);
          changed = true;
          break;
        }
      }
    }
  }
  return out;
}

// Enumerates every simple path between the sets and checks the blocking rule
// node by node. Exponential; for small test graphs only.
inline bool dsep_by_path_enumeration(const Admg& g, const VariableSet& a, const VariableSet& b,
                                     const VariableSet& c) {
  PathDag dag(g);
  std::set<int> cond;
  for (int v : g.indices_of(c)) cond.insert(v);
  std::set<int> anc_cond = ancestors_of(dag, cond);
  std::set<int> targets;
  for (int v : g.indices_of(b)) targets.insert(v);

  // path as a list of (node, arrived_by_outgoing_edge_of_prev)
  std::vector<int> nodes;
  std::vector<bool> arrow_into;  // arrow_into[k]: edge k-1 -> k points toward node k
  std::vector<char> used(dag.n_total, 0);
  bool found_open = false;

  std::function<void(int)> dfs = [&](int v) {
    if (found_open) return;
    if (targets.count(v) && !cond.count(v) && nodes.size() > 1) {
      // check every interior node of the current path
      bool open = true;
      for (std::size_t k = 1; k + 1 < nodes.size(); k++) {
        bool collider = arrow_into[k] && !arrow_into[k + 1];
        int m = nodes[k];
        if (collider) {
          if (!anc_cond.count(m)) open = false;
        } else {
          if (cond.count(m)) open = false;
        }
      }
      if (open) {
        found_open = true;
        return;
      }
      // a path reaching b may continue through b toward another b-member,
      // but any extension has this b as interior; keep searching anyway
    }
    for (auto& [w, away] : dag.adj[v]) {
      if (used[w]) continue;
      used[w] = 1;
      nodes.push_back(w);
      arrow_into.push_back(away);
      dfs(w);
      nodes.pop_back();
      arrow_into.pop_back();
      used[w] = 0;
      if (found_open) return;
    }
  };

  for (int s : g.indices_of(a)) {
    if (cond.count(s)) continue;
    used.assign(dag.n_total, 0);
    used[s] = 1;
    nodes = {s};
    arrow_into = {false};
    dfs(s);
    if (found_open) return false;
  }
  return true;
}

// Checks the c-component partition properties directly: cover, disjoint,
// internal bidirected connectivity, pairwise maximality.
inline bool is_valid_c_component_partition(const Admg& g,
                                           const std::vector<VariableSet>& comps) {
  std::set<std::string> seen;
  for (const auto& comp : comps)
    for (const auto& v : comp) {
      if (seen.count(v)) return false;
      seen.insert(v);
    }
  if (seen.size() != g.size()) return false;
  auto linked = [&](const std::string& x, const std::string& y) {
    int a = g.index_of(x), b = g.index_of(y);
    for (int s : g.bidirected_neighbors(a))
      if (s == b) return true;
    return false;
  };
  for (const auto& comp : comps) {
    // connectivity inside the component via brute-force closure
    std::set<std::string> reach{comp.names().front()};
    bool changed = true;
    while (changed) {
      changed = false;
      for (const auto& x : comp)
        for (const auto& y : comp)
          if (reach.count(x) && !reach.count(y) && linked(x, y)) {
            reach.insert(y);
            changed = true;
          }
    }
    if (reach.size() != comp.size()) return false;
  }
  // maximality: no bidirected edge crosses two components
  for (auto& [a, b] : g.bidirected_edges()) {
    const std::string &na = g.name_of(a), &nb = g.name_of(b);
    for (const auto& comp : comps)
      if (comp.contains(na) != comp.contains(nb)) return false;
  }
  return true;
}

}  // namespace test_oracles
