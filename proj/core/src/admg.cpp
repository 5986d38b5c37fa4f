#include "modcausal/admg.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <sstream>

namespace modcausal {

VariableSet::VariableSet(std::initializer_list<std::string> names)
    : VariableSet(std::vector<std::string>(names)) {}

VariableSet::VariableSet(std::vector<std::string> names) : names_(std::move(names)) {
  std::sort(names_.begin(), names_.end());
  names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
}

bool VariableSet::contains(const std::string& name) const {
  return std::binary_search(names_.begin(), names_.end(), name);
}

void VariableSet::insert(const std::string& name) {
  auto it = std::lower_bound(names_.begin(), names_.end(), name);
  if (it == names_.end() || *it != name) names_.insert(it, name);
}

VariableSet VariableSet::unite(const VariableSet& other) const {
  std::vector<std::string> out;
  std::set_union(names_.begin(), names_.end(), other.names_.begin(), other.names_.end(),
                 std::back_inserter(out));
  VariableSet r;
  r.names_ = std::move(out);
  return r;
}

VariableSet VariableSet::minus(const VariableSet& other) const {
  std::vector<std::string> out;
  std::set_difference(names_.begin(), names_.end(), other.names_.begin(), other.names_.end(),
                      std::back_inserter(out));
  VariableSet r;
  r.names_ = std::move(out);
  return r;
}

VariableSet VariableSet::intersect(const VariableSet& other) const {
  std::vector<std::string> out;
  std::set_intersection(names_.begin(), names_.end(), other.names_.begin(), other.names_.end(),
                        std::back_inserter(out));
  VariableSet r;
  r.names_ = std::move(out);
  return r;
}

bool VariableSet::intersects(const VariableSet& other) const {
  return !intersect(other).empty();
}

bool VariableSet::subset_of(const VariableSet& other) const {
  return std::includes(other.names_.begin(), other.names_.end(), names_.begin(), names_.end());
}

namespace {

std::vector<int> topo_sort_or_throw(int n, const std::vector<std::pair<int, int>>& edges,
                                    const std::vector<std::string>& names) {
  std::vector<std::vector<int>> succ(n);
  std::vector<int> indeg(n, 0);
  for (auto& [a, b] : edges) {
    succ[a].push_back(b);
    indeg[b]++;
  }
  std::vector<int> order;
  order.reserve(n);
  // Kahn with an index-ordered frontier so the order is deterministic.
  std::set<int> frontier;
  for (int v = 0; v < n; v++)
    if (indeg[v] == 0) frontier.insert(v);
  while (!frontier.empty()) {
    int v = *frontier.begin();
    frontier.erase(frontier.begin());
    order.push_back(v);
    for (int w : succ[v])
      if (--indeg[w] == 0) frontier.insert(w);
  }
  if ((int)order.size() != n) {
    // Name one node on a cycle for the error message.
    for (int v = 0; v < n; v++)
      if (indeg[v] > 0)
        throw validation_error("cycle in directed edges involving node '" + names[v] + "'");
  }
  return order;
}

}  // namespace

Admg::Admg(std::vector<std::string> nodes,
           std::vector<std::pair<std::string, std::string>> directed,
           std::vector<std::pair<std::string, std::string>> bidirected)
    : nodes_(std::move(nodes)) {
  for (int i = 0; i < (int)nodes_.size(); i++) {
    if (nodes_[i].empty() || nodes_[i].find_first_of("{}=,\"#| \t") != std::string::npos)
      throw validation_error("variable name '" + nodes_[i] +
                             "' contains characters reserved by the file formats");
    if (!index_.emplace(nodes_[i], i).second)
      throw validation_error("duplicate node declaration '" + nodes_[i] + "'");
  }
  auto idx = [&](const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw validation_error("unknown variable '" + name + "'");
    return it->second;
  };
  std::set<std::pair<int, int>> dset, bset;
  for (auto& [a, b] : directed) {
    int ia = idx(a), ib = idx(b);
    if (ia == ib) throw validation_error("self-loop on '" + a + "'");
    dset.emplace(ia, ib);
  }
  for (auto& [a, b] : bidirected) {
    int ia = idx(a), ib = idx(b);
    if (ia == ib) throw validation_error("bidirected self-loop on '" + a + "'");
    bset.emplace(std::min(ia, ib), std::max(ia, ib));
  }
  directed_.assign(dset.begin(), dset.end());
  bidirected_.assign(bset.begin(), bset.end());
  int n = (int)nodes_.size();
  parents_.resize(n);
  children_.resize(n);
  sib_.resize(n);
  for (auto& [a, b] : directed_) {
    children_[a].push_back(b);
    parents_[b].push_back(a);
  }
  for (auto& [a, b] : bidirected_) {
    sib_[a].push_back(b);
    sib_[b].push_back(a);
  }
  topo_ = topo_sort_or_throw(n, directed_, nodes_);
}

bool Admg::has_node(const std::string& name) const { return index_.count(name) > 0; }

int Admg::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw validation_error("unknown variable '" + name + "'");
  return it->second;
}

std::vector<int> Admg::indices_of(const VariableSet& s) const {
  std::vector<int> out;
  out.reserve(s.size());
  for (const auto& name : s) out.push_back(index_of(name));
  std::sort(out.begin(), out.end());
  return out;
}

VariableSet Admg::set_of(const std::vector<int>& indices) const {
  std::vector<std::string> names;
  names.reserve(indices.size());
  for (int i : indices) names.push_back(nodes_.at(i));
  return VariableSet(std::move(names));
}

std::string Admg::to_text() const {
  std::ostringstream os;
  for (const auto& n : nodes_) os << "node " << n << "\n";
  for (auto& [a, b] : directed_) os << nodes_[a] << " -> " << nodes_[b] << "\n";
  for (auto& [a, b] : bidirected_) os << nodes_[a] << " <-> " << nodes_[b] << "\n";
  return os.str();
}

bool Admg::operator==(const Admg& other) const {
  return nodes_ == other.nodes_ && directed_ == other.directed_ &&
         bidirected_ == other.bidirected_;
}

namespace {

struct ParsedGraph {
  std::vector<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> directed, bidirected;
  std::vector<std::string> latents;
};

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> toks;
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

ParsedGraph parse_graph_text(const std::string& text, bool allow_latents) {
  ParsedGraph pg;
  std::set<std::string> declared;
  auto declare = [&](const std::string& name, int lineno, bool explicit_decl) {
    if (declared.count(name)) {
      if (explicit_decl)
        throw validation_error("line " + std::to_string(lineno) + ": duplicate node declaration '" +
                               name + "'");
      return;
    }
    declared.insert(name);
    pg.nodes.push_back(name);
  };
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    lineno++;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    if (toks.size() == 2 && toks[0] == "node") {
      declare(toks[1], lineno, true);
    } else if (toks.size() == 2 && toks[0] == "latent") {
      if (!allow_latents)
        throw validation_error("line " + std::to_string(lineno) +
                               ": 'latent' requires the split_non_markovian form");
      declare(toks[1], lineno, true);
      pg.latents.push_back(toks[1]);
    } else if (toks.size() == 3 && toks[1] == "->") {
      declare(toks[0], lineno, false);
      declare(toks[2], lineno, false);
      pg.directed.emplace_back(toks[0], toks[2]);
    } else if (toks.size() == 3 && toks[1] == "<->") {
      declare(toks[0], lineno, false);
      declare(toks[2], lineno, false);
      pg.bidirected.emplace_back(toks[0], toks[2]);
    } else {
      throw validation_error("line " + std::to_string(lineno) + ": malformed statement '" + line +
                             "'");
    }
  }
  return pg;
}

}  // namespace

Admg parse_admg(const std::string& text) {
  auto pg = parse_graph_text(text, /*allow_latents=*/false);
  return Admg(pg.nodes, pg.directed, pg.bidirected);
}

SplitResult split_non_markovian(const std::string& text) {
  auto pg = parse_graph_text(text, /*allow_latents=*/true);
  std::set<std::string> latent(pg.latents.begin(), pg.latents.end());
  std::map<std::string, std::vector<std::string>> latent_children;
  for (const auto& l : pg.latents) latent_children[l];
  std::vector<std::pair<std::string, std::string>> directed;
  for (auto& [a, b] : pg.directed) {
    if (latent.count(b))
      throw validation_error("latent '" + b + "' has a directed parent '" + a + "'");
    if (latent.count(a)) {
      latent_children[a].push_back(b);
    } else {
      directed.emplace_back(a, b);
    }
  }
  for (auto& [a, b] : pg.bidirected) {
    if (latent.count(a) || latent.count(b))
      throw validation_error("latent node in bidirected edge " + a + " <-> " + b);
  }
  SplitResult result;
  std::vector<std::pair<std::string, std::string>> bidirected = pg.bidirected;
  for (auto& [l, kids] : latent_children) {
    std::vector<std::string> uniq = kids;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (uniq.size() < 2) {
      result.warnings.push_back("latent '" + l + "' has fewer than 2 children; dropped");
      continue;
    }
    for (std::size_t i = 0; i < uniq.size(); i++)
      for (std::size_t j = i + 1; j < uniq.size(); j++) bidirected.emplace_back(uniq[i], uniq[j]);
  }
  std::vector<std::string> nodes;
  for (const auto& n : pg.nodes)
    if (!latent.count(n)) nodes.push_back(n);
  result.graph = Admg(nodes, directed, bidirected);
  return result;
}

std::vector<VariableSet> c_components(const Admg& g) {
  int n = (int)g.size();
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> groups;
  for (int start = 0; start < n; start++) {
    if (comp[start] >= 0) continue;
    int id = (int)groups.size();
    groups.push_back({});
    std::deque<int> queue{start};
    comp[start] = id;
    while (!queue.empty()) {
      int v = queue.front();
      queue.pop_front();
      groups[id].push_back(v);
      for (int w : g.bidirected_neighbors(v)) {
        if (comp[w] < 0) {
          comp[w] = id;
          queue.push_back(w);
        }
      }
    }
  }
  std::vector<VariableSet> out;
  out.reserve(groups.size());
  for (auto& grp : groups) {  // groups are discovered in smallest-member order
    std::sort(grp.begin(), grp.end());
    out.push_back(g.set_of(grp));
  }
  return out;
}

VariableSet ancestors(const Admg& g, const VariableSet& s, const VariableSet& intervention) {
  Admg gd = intervention.empty() ? g : graph_do(g, intervention);
  std::vector<char> seen(gd.size(), 0);
  std::deque<int> queue;
  for (int v : gd.indices_of(s)) {
    seen[v] = 1;
    queue.push_back(v);
  }
  std::vector<int> found;
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    for (int p : gd.parents(v)) {
      if (!seen[p]) {
        seen[p] = 1;
        found.push_back(p);
        queue.push_back(p);
      }
    }
  }
  std::sort(found.begin(), found.end());
  return gd.set_of(found);
}

VariableSet descendants(const Admg& g, const VariableSet& s) {
  std::vector<char> seen(g.size(), 0);
  std::deque<int> queue;
  for (int v : g.indices_of(s)) {
    seen[v] = 1;
    queue.push_back(v);
  }
  std::vector<int> found;
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    for (int c : g.children(v)) {
      if (!seen[c]) {
        seen[c] = 1;
        found.push_back(c);
        queue.push_back(c);
      }
    }
  }
  std::sort(found.begin(), found.end());
  return g.set_of(found);
}

VariableSet parents_of_set(const Admg& g, const VariableSet& s) {
  auto members = g.indices_of(s);
  std::vector<char> in(g.size(), 0);
  for (int v : members) in[v] = 1;
  std::set<int> out;
  for (int v : members)
    for (int p : g.parents(v))
      if (!in[p]) out.insert(p);
  return g.set_of(std::vector<int>(out.begin(), out.end()));
}

Admg graph_do(const Admg& g, const VariableSet& i) {
  auto targets = g.indices_of(i);
  std::vector<char> cut(g.size(), 0);
  for (int v : targets) cut[v] = 1;
  std::vector<std::pair<std::string, std::string>> directed, bidirected;
  for (auto& [a, b] : g.directed_edges())
    if (!cut[b]) directed.emplace_back(g.name_of(a), g.name_of(b));
  for (auto& [a, b] : g.bidirected_edges())
    if (!cut[a] && !cut[b]) bidirected.emplace_back(g.name_of(a), g.name_of(b));
  return Admg(g.nodes(), directed, bidirected);
}

namespace {

// d-separation reachability on the latent-materialized DAG. Latents get
// indices n..n+m-1, one per bidirected edge, with edges latent -> endpoints.
struct LatentDag {
  int n_obs = 0;
  std::vector<std::vector<int>> parents, children;

  explicit LatentDag(const Admg& g) : n_obs((int)g.size()) {
    int total = n_obs + (int)g.bidirected_edges().size();
    parents.resize(total);
    children.resize(total);
    for (auto& [a, b] : g.directed_edges()) {
      parents[b].push_back(a);
      children[a].push_back(b);
    }
    int latent = n_obs;
    for (auto& [a, b] : g.bidirected_edges()) {
      children[latent] = {a, b};
      parents[a].push_back(latent);
      parents[b].push_back(latent);
      latent++;
    }
  }
};

bool d_connected(const LatentDag& dag, const std::vector<int>& sources,
                 const std::vector<char>& target, const std::vector<char>& observed) {
  int total = (int)dag.parents.size();
  // Nodes that are observed or have an observed descendant (open colliders).
  std::vector<char> anc_obs(total, 0);
  {
    std::deque<int> queue;
    for (int v = 0; v < total; v++)
      if (observed[v]) {
        anc_obs[v] = 1;
        queue.push_back(v);
      }
    while (!queue.empty()) {
      int v = queue.front();
      queue.pop_front();
      for (int p : dag.parents[v])
        if (!anc_obs[p]) {
          anc_obs[p] = 1;
          queue.push_back(p);
        }
    }
  }
  // State (v, dir): dir 0 = entered from a child (moving up), 1 = from a parent.
  std::vector<std::array<char, 2>> visited(total, {0, 0});
  std::deque<std::pair<int, int>> queue;
  auto push = [&](int v, int dir) {
    if (!visited[v][dir]) {
      visited[v][dir] = 1;
      queue.emplace_back(v, dir);
    }
  };
  for (int s : sources) {
    if (observed[s]) continue;  // conditioning on an endpoint blocks its trails
    for (int p : dag.parents[s]) push(p, 0);
    for (int c : dag.children[s]) push(c, 1);
  }
  while (!queue.empty()) {
    auto [v, dir] = queue.front();
    queue.pop_front();
    if (!observed[v] && target[v]) return true;
    if (dir == 0) {  // arrived against an edge v -> child
      if (!observed[v]) {
        for (int p : dag.parents[v]) push(p, 0);
        for (int c : dag.children[v]) push(c, 1);
      }
    } else {  // arrived along an edge parent -> v
      if (!observed[v])
        for (int c : dag.children[v]) push(c, 1);
      if (anc_obs[v])
        for (int p : dag.parents[v]) push(p, 0);
    }
  }
  return false;
}

}  // namespace

bool m_separated(const Admg& g, const VariableSet& a, const VariableSet& b,
                 const VariableSet& c) {
  if (a.intersects(b))
    throw validation_error("m_separated: sets overlap on '" + a.intersect(b).names()[0] + "'");
  LatentDag dag(g);
  auto srcs = g.indices_of(a);
  std::vector<char> target(dag.parents.size(), 0), observed(dag.parents.size(), 0);
  for (int v : g.indices_of(b)) target[v] = 1;
  for (int v : g.indices_of(c)) observed[v] = 1;
  return !d_connected(dag, srcs, target, observed);
}

bool conditioning_equals_do(const Admg& g, const VariableSet& y, const VariableSet& p) {
  if (p.empty()) return true;
  // Delete outgoing directed edges of p, then test m-separation of y and p.
  auto pidx = g.indices_of(p);
  std::vector<char> is_p(g.size(), 0);
  for (int v : pidx) is_p[v] = 1;
  std::vector<std::pair<std::string, std::string>> directed, bidirected;
  for (auto& [a, b] : g.directed_edges())
    if (!is_p[a]) directed.emplace_back(g.name_of(a), g.name_of(b));
  for (auto& [a, b] : g.bidirected_edges()) bidirected.emplace_back(g.name_of(a), g.name_of(b));
  Admg cut(g.nodes(), directed, bidirected);
  return m_separated(cut, y, p, {});
}

bool rule2_holds(const Admg& g, const VariableSet& y, const VariableSet& intervention) {
  if (y.intersects(intervention))
    throw validation_error("rule2_holds: y overlaps the intervention set");
  Admg gd = intervention.empty() ? g : graph_do(g, intervention);
  return conditioning_equals_do(gd, y, parents_of_set(gd, y));
}

}  // namespace modcausal
