#include "modcausal/hgraph.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <sstream>

namespace modcausal {

namespace {

// Prints a variable set in graph node-index order, e.g. "{D A}".
std::string set_text(const Admg& g, const VariableSet& s) {
  auto idx = g.indices_of(s);
  std::string out = "{";
  for (std::size_t i = 0; i < idx.size(); i++) {
    if (i) out += " ";
    out += g.name_of(idx[i]);
  }
  return out + "}";
}

VariableSet parse_set(const std::string& text) {
  if (text.size() < 2 || text.front() != '{' || text.back() != '}')
    throw validation_error("expected a {..} variable set, got '" + text + "'");
  std::istringstream is(text.substr(1, text.size() - 2));
  std::vector<std::string> names;
  std::string t;
  while (is >> t) names.push_back(t);
  return VariableSet(std::move(names));
}

// Sorts h-nodes by smallest member index and remaps edges accordingly.
void canonicalize(HGraph& h) {
  const Admg& g = h.source;
  std::vector<int> order(h.hnodes.size());
  for (std::size_t i = 0; i < order.size(); i++) order[i] = (int)i;
  auto min_index = [&](int node) {
    int best = (int)g.size();
    for (const auto& name : h.hnodes[node]) best = std::min(best, g.index_of(name));
    return best;
  };
  std::sort(order.begin(), order.end(), [&](int a, int b) { return min_index(a) < min_index(b); });
  std::vector<int> inv(order.size());
  for (std::size_t i = 0; i < order.size(); i++) inv[order[i]] = (int)i;
  std::vector<VariableSet> hnodes(order.size());
  for (std::size_t i = 0; i < order.size(); i++) hnodes[i] = h.hnodes[order[i]];
  std::set<std::pair<int, int>> edges;
  for (auto& [a, b] : h.edges) edges.emplace(inv[a], inv[b]);
  h.hnodes = std::move(hnodes);
  h.edges.assign(edges.begin(), edges.end());
}

// Tarjan strongly-connected components; returns component id per node with
// components numbered arbitrarily.
std::vector<int> scc_ids(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> succ(n);
  for (auto& [a, b] : edges) succ[a].push_back(b);
  std::vector<int> ids(n, -1), low(n, 0), disc(n, -1), stack;
  std::vector<char> on_stack(n, 0);
  int timer = 0, comp = 0;
  // iterative Tarjan
  struct Frame {
    int v;
    std::size_t child;
  };
  for (int root = 0; root < n; root++) {
    if (disc[root] != -1) continue;
    std::vector<Frame> frames{{root, 0}};
    disc[root] = low[root] = timer++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!frames.empty()) {
      auto& f = frames.back();
      if (f.child < succ[f.v].size()) {
        int w = succ[f.v][f.child++];
        if (disc[w] == -1) {
          disc[w] = low[w] = timer++;
          stack.push_back(w);
          on_stack[w] = 1;
          frames.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], disc[w]);
        }
      } else {
        if (low[f.v] == disc[f.v]) {
          while (true) {
            int w = stack.back();
            stack.pop_back();
            on_stack[w] = 0;
            ids[w] = comp;
            if (w == f.v) break;
          }
          comp++;
        }
        int v = f.v;
        frames.pop_back();
        if (!frames.empty()) low[frames.back().v] = std::min(low[frames.back().v], low[v]);
      }
    }
  }
  return ids;
}

// Merges the nodes of each SCC into one h-node, re-points edges, drops
// self-loops. The condensation is acyclic by construction.
void merge_cycles(HGraph& h) {
  auto ids = scc_ids((int)h.hnodes.size(), h.edges);
  int n_comp = ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end()) + 1;
  std::vector<VariableSet> merged(n_comp);
  for (std::size_t i = 0; i < h.hnodes.size(); i++) merged[ids[i]] = merged[ids[i]].unite(h.hnodes[i]);
  std::set<std::pair<int, int>> edges;
  for (auto& [a, b] : h.edges)
    if (ids[a] != ids[b]) edges.emplace(ids[a], ids[b]);
  h.hnodes = std::move(merged);
  h.edges.assign(edges.begin(), edges.end());
  canonicalize(h);
}

// Pairwise edge test of the H-graph definition: conditioning on the parents
// of t that lie inside s must equal intervening on them.
std::vector<std::pair<int, int>> hgraph_edges(const Admg& g, const std::vector<VariableSet>& hnodes) {
  std::vector<std::pair<int, int>> edges;
  for (std::size_t t = 0; t < hnodes.size(); t++) {
    VariableSet pa = parents_of_set(g, hnodes[t]);
    if (pa.empty()) continue;
    for (std::size_t s = 0; s < hnodes.size(); s++) {
      if (s == t) continue;
      VariableSet shared = pa.intersect(hnodes[s]);
      if (shared.empty()) continue;
      if (!conditioning_equals_do(g, hnodes[t], shared)) edges.emplace_back((int)s, (int)t);
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

}  // namespace

int HGraph::hnode_of(const std::string& var) const {
  for (std::size_t i = 0; i < hnodes.size(); i++)
    if (hnodes[i].contains(var)) return (int)i;
  throw validation_error("no h-node contains '" + var + "'");
}

std::string HGraph::to_text() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < hnodes.size(); i++) {
    os << "# hnode: H" << i << " =";
    for (int v : source.indices_of(hnodes[i])) os << " " << source.name_of(v);
    os << "\n";
  }
  for (std::size_t i = 0; i < hnodes.size(); i++) os << "node H" << i << "\n";
  for (auto& [a, b] : edges) os << "H" << a << " -> H" << b << "\n";
  return os.str();
}

HGraph construct_hgraph(const Admg& g) {
  HGraph h;
  h.source = g;
  h.hnodes = c_components(g);
  h.edges = hgraph_edges(g, h.hnodes);
  merge_cycles(h);
  return h;
}

HGraph construct_hgraph_interventional(const Admg& g, const VariableSet& i, const HGraph& base) {
  Admg gd = graph_do(g, i);
  // Every post-intervention c-component refines a pre-intervention one, so
  // grouping them by base h-node keeps each h-node's variables identical to
  // the base; the edge test then runs on these coarse nodes in the surgered
  // graph. Cycle merging stays as a safety net but is a no-op here.
  for (const auto& comp : c_components(gd)) {
    int owner = base.hnode_of(comp.names().front());
    if (!comp.subset_of(base.hnodes[owner]))
      throw std::logic_error("post-intervention c-component crosses base h-nodes");
  }
  HGraph aligned;
  aligned.source = g;
  aligned.intervention = i;
  aligned.hnodes = base.hnodes;
  aligned.edges = hgraph_edges(gd, aligned.hnodes);
  merge_cycles(aligned);
  return aligned;
}

std::vector<std::vector<int>> partial_order(const HGraph& h) {
  int n = (int)h.hnodes.size();
  std::vector<int> indeg(n, 0);
  std::vector<std::vector<int>> succ(n);
  for (auto& [a, b] : h.edges) {
    succ[a].push_back(b);
    indeg[b]++;
  }
  std::vector<std::vector<int>> levels;
  std::vector<int> current;
  for (int v = 0; v < n; v++)
    if (indeg[v] == 0) current.push_back(v);
  int emitted = 0;
  while (!current.empty()) {
    std::sort(current.begin(), current.end());
    levels.push_back(current);
    emitted += (int)current.size();
    std::vector<int> next;
    for (int v : current)
      for (int w : succ[v])
        if (--indeg[w] == 0) next.push_back(w);
    current = std::move(next);
  }
  if (emitted != n) throw validation_error("partial_order: H-graph has a cycle");
  return levels;
}

namespace {

// Greedy ancestor-set growth on an already-surgered graph. Members of
// `excluded` (the intervened variables) are never added: they have no open
// backdoor after surgery, so adding them cannot help.
VariableSet greedy_impl(const Admg& gd, const VariableSet& hnode, const VariableSet& excluded) {
  VariableSet acc;
  while (true) {
    VariableSet joint = hnode.unite(acc);
    if (conditioning_equals_do(gd, joint, parents_of_set(gd, joint))) return acc;
    acc = acc.unite(parents_of_set(gd, joint).minus(excluded));
  }
}

}  // namespace

VariableSet ancestor_set_greedy(const Admg& g, const VariableSet& hnode) {
  return greedy_impl(g, hnode, {});
}

VariableSet ancestor_set_minimal(const Admg& g, const VariableSet& hnode,
                                 const VariableSet& intervention, int cap) {
  if (hnode.intersects(intervention))
    throw validation_error("ancestor_set_minimal: hnode overlaps the intervention");
  Admg gd = intervention.empty() ? g : graph_do(g, intervention);
  VariableSet pool_set = ancestors(gd, hnode).minus(intervention);
  std::vector<std::string> pool(pool_set.names());  // sorted by name: lexicographic ties
  if ((int)pool.size() > cap)
    throw numeric_error("ancestor_set_minimal: " + std::to_string(pool.size()) +
                        " ancestors exceed the enumeration cap of " + std::to_string(cap));
  int n = (int)pool.size();
  for (int size = 0; size <= n; size++) {
    // lexicographic combinations of `size` pool members
    std::vector<int> pick(size);
    for (int i = 0; i < size; i++) pick[i] = i;
    while (true) {
      std::vector<std::string> names;
      for (int i : pick) names.push_back(pool[i]);
      VariableSet candidate(names);
      VariableSet joint = hnode.unite(candidate);
      if (conditioning_equals_do(gd, joint, parents_of_set(gd, joint))) return candidate;
      if (size == 0) break;
      int k = size - 1;
      while (k >= 0 && pick[k] == n - size + k) k--;
      if (k < 0) break;
      pick[k]++;
      for (int j = k + 1; j < size; j++) pick[j] = pick[j - 1] + 1;
    }
  }
  throw std::logic_error("ancestor_set_minimal: no candidate satisfied rule 2");
}

TrainingPlan make_training_plan(const Admg& g, const std::vector<VariableSet>& labels) {
  TrainingPlan plan;
  plan.graph = g;
  plan.labels = labels;
  plan.hgraph = construct_hgraph(g);
  auto levels = partial_order(plan.hgraph);

  VariableSet covered;
  for (std::size_t level = 0; level < levels.size(); level++) {
    for (int hidx : levels[level]) {
      PlanStage stage;
      stage.hnode = plan.hgraph.hnodes[hidx];
      stage.level = (int)level;
      VariableSet desc = descendants(g, stage.hnode);
      VariableSet anc = ancestors(g, stage.hnode);
      for (const auto& label : labels) {
        PlanDirective dir;
        dir.label = label;
        Admg gd = label.empty() ? g : graph_do(g, label);
        VariableSet trainable_part = stage.hnode.minus(label);
        if (label.intersects(desc.minus(anc))) {
          dir.usable = false;
          dir.note = "intervention on a strict descendant of the h-node";
        } else if (trainable_part.empty()) {
          dir.usable = false;
          dir.note = "h-node fully intervened";
        } else {
          try {
            dir.ancestor_set = ancestor_set_minimal(g, trainable_part, label);
          } catch (const numeric_error&) {
            dir.ancestor_set = greedy_impl(gd, trainable_part, label);
            dir.note = "greedy fallback (ancestor pool over enumeration cap)";
          }
          dir.conditioning_parents = parents_of_set(gd, stage.hnode.unite(dir.ancestor_set));
          if (!dir.ancestor_set.subset_of(covered)) {
            dir.usable = false;
            dir.note = "ancestor set not covered by earlier stages";
          }
        }
        stage.directives.push_back(std::move(dir));
      }
      bool any = false;
      for (const auto& d : stage.directives) any = any || d.usable;
      if (!any)
        throw untrainable_error("no usable directive for h-node " +
                                set_text(g, stage.hnode));
      plan.stages.push_back(std::move(stage));
    }
    for (int hidx : levels[level]) covered = covered.unite(plan.hgraph.hnodes[hidx]);
  }
  return plan;
}

std::string TrainingPlan::to_text() const {
  std::ostringstream os;
  os << "plan v1\ngraph:\n" << graph.to_text() << "end graph\nlabels:";
  for (const auto& l : labels) os << " " << set_text(graph, l);
  os << "\nhgraph:\n";
  for (std::size_t i = 0; i < hgraph.hnodes.size(); i++)
    os << "hnode " << i << ": " << set_text(graph, hgraph.hnodes[i]) << "\n";
  for (auto& [a, b] : hgraph.edges) os << "edge " << a << " -> " << b << "\n";
  os << "end hgraph\n";
  for (std::size_t s = 0; s < stages.size(); s++) {
    os << "stage " << s << " level " << stages[s].level << " hnode " << set_text(graph, stages[s].hnode)
       << "\n";
    for (const auto& d : stages[s].directives) {
      os << "directive label=" << set_text(graph, d.label) << " ancestors="
         << set_text(graph, d.ancestor_set) << " parents=" << set_text(graph, d.conditioning_parents)
         << " usable=" << (d.usable ? "yes" : "no");
      if (!d.note.empty()) os << " note=\"" << d.note << "\"";
      os << "\n";
    }
  }
  os << "end plan\n";
  return os.str();
}

TrainingPlan parse_plan(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "plan v1")
    throw validation_error("plan: missing 'plan v1' header");
  if (!std::getline(is, line) || line != "graph:")
    throw validation_error("plan: missing 'graph:' section");
  std::ostringstream graph_text;
  while (std::getline(is, line)) {
    if (line == "end graph") break;
    graph_text << line << "\n";
  }
  TrainingPlan plan;
  plan.graph = parse_admg(graph_text.str());
  while (std::getline(is, line)) {
    if (line.empty() || line == "end plan") continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "labels:") {
      std::string rest;
      std::getline(ls, rest);
      std::istringstream rs(rest);
      std::string tok;
      std::string pending;
      while (rs >> tok) {
        pending += (pending.empty() ? "" : " ") + tok;
        if (tok.back() == '}') {
          plan.labels.push_back(parse_set(pending));
          pending.clear();
        }
      }
    } else if (kind == "hgraph:") {
      plan.hgraph.source = plan.graph;
      while (std::getline(is, line)) {
        if (line == "end hgraph") break;
        std::istringstream hs(line);
        std::string what;
        hs >> what;
        if (what == "hnode") {
          std::string idx, rest;
          hs >> idx;  // "<i>:"
          std::getline(hs, rest);
          plan.hgraph.hnodes.push_back(parse_set(rest.substr(rest.find('{'))));
        } else if (what == "edge") {
          int a, b;
          std::string arrow;
          hs >> a >> arrow >> b;
          plan.hgraph.edges.emplace_back(a, b);
        }
      }
    } else if (kind == "stage") {
      PlanStage stage;
      std::size_t idx;
      std::string word;
      ls >> idx >> word >> stage.level >> word;  // "<i> level <l> hnode"
      std::string rest;
      std::getline(ls, rest);
      stage.hnode = parse_set(rest.substr(rest.find('{')));
      plan.stages.push_back(std::move(stage));
    } else if (kind == "directive") {
      if (plan.stages.empty()) throw validation_error("plan: directive before any stage");
      PlanDirective dir;
      std::string tok;
      while (ls >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) throw validation_error("plan: bad directive token '" + tok + "'");
        std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        while ((key == "label" || key == "ancestors" || key == "parents") && val.back() != '}') {
          std::string more;
          if (!(ls >> more)) throw validation_error("plan: unterminated set in directive");
          val += " " + more;
        }
        if (key == "note") {  // quoted, may contain spaces
          while (val.size() < 2 || val.back() != '"') {
            std::string more;
            if (!(ls >> more)) throw validation_error("plan: unterminated note in directive");
            val += " " + more;
          }
          val = val.substr(1, val.size() - 2);
        }
        if (key == "label")
          dir.label = parse_set(val);
        else if (key == "ancestors")
          dir.ancestor_set = parse_set(val);
        else if (key == "parents")
          dir.conditioning_parents = parse_set(val);
        else if (key == "usable")
          dir.usable = (val == "yes");
        else if (key == "note")
          dir.note = val;
      }
      plan.stages.back().directives.push_back(std::move(dir));
    } else {
      throw validation_error("plan: unknown statement '" + kind + "'");
    }
  }
  return plan;
}

}  // namespace modcausal
