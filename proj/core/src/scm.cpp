#include "modcausal/scm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "modcausal/rng.hpp"

namespace modcausal {

Assignment::Assignment(std::initializer_list<std::pair<std::string, int>> init) {
  for (auto& [k, v] : init) set(k, v);
}

void Assignment::set(const std::string& name, int value) {
  auto it = std::lower_bound(values.begin(), values.end(), name,
                             [](const auto& kv, const std::string& n) { return kv.first < n; });
  if (it != values.end() && it->first == name)
    it->second = value;
  else
    values.insert(it, {name, value});
}

std::optional<int> Assignment::get(const std::string& name) const {
  for (auto& [k, v] : values)
    if (k == name) return v;
  return std::nullopt;
}

VariableSet Assignment::variables() const {
  std::vector<std::string> names;
  names.reserve(values.size());
  for (auto& [k, v] : values) names.push_back(k);
  return VariableSet(std::move(names));
}

std::string InterventionSpec::to_string() const {
  if (empty()) return "none";
  std::ostringstream os;
  bool first = true;
  for (auto& [k, v] : fixed.values) {
    if (!first) os << " ";
    os << k << "=" << v;
    first = false;
  }
  if (!randomized.empty()) {
    if (!first) os << " ";
    os << "randomized";
    for (const auto& n : randomized) os << " " << n;
  }
  return os.str();
}

InterventionSpec InterventionSpec::parse(const std::string& text) {
  InterventionSpec spec;
  std::istringstream is(text);
  std::string tok;
  bool in_randomized = false;
  while (is >> tok) {
    if (tok == "none") continue;
    if (tok == "randomized") {
      in_randomized = true;
      continue;
    }
    auto eq = tok.find('=');
    if (in_randomized) {
      spec.randomized.insert(tok);
    } else if (eq != std::string::npos) {
      spec.fixed.set(tok.substr(0, eq), std::stoi(tok.substr(eq + 1)));
    } else {
      throw validation_error("bad intervention token '" + tok + "'");
    }
  }
  return spec;
}

int Dataset::column_of(const std::string& name) const {
  for (std::size_t i = 0; i < variables.size(); i++)
    if (variables[i] == name) return (int)i;
  throw validation_error("dataset has no column '" + name + "'");
}

bool Dataset::covers(const VariableSet& s) const {
  for (const auto& n : s)
    if (std::find(variables.begin(), variables.end(), n) == variables.end()) return false;
  return true;
}

Dataset Dataset::project(const VariableSet& keep) const {
  Dataset out;
  std::vector<int> cols;
  for (std::size_t i = 0; i < variables.size(); i++) {
    if (keep.contains(variables[i])) {
      out.variables.push_back(variables[i]);
      out.cards.push_back(cards[i]);
      cols.push_back((int)i);
    }
  }
  out.n_rows = n_rows;
  out.intervention = intervention;
  out.provenance = provenance;
  out.cells.reserve(n_rows * cols.size());
  for (std::size_t r = 0; r < n_rows; r++)
    for (int c : cols) out.cells.push_back(at(r, c));
  return out;
}

namespace {

void check_noise(const DiscreteScm::Noise& n, const std::string& what) {
  if (n.card < 1 || (int)n.probs.size() != n.card)
    throw validation_error(what + ": bad noise cardinality");
  double sum = 0;
  for (double x : n.probs) {
    if (x < 0) throw validation_error(what + ": negative probability");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw validation_error(what + ": probabilities sum to " + std::to_string(sum));
}

}  // namespace

DiscreteScm::DiscreteScm(Admg graph, std::vector<int> cards, std::vector<Noise> exogenous,
                         std::vector<Noise> confounders, std::vector<std::vector<int>> tables)
    : graph_(std::move(graph)),
      cards_(std::move(cards)),
      exo_(std::move(exogenous)),
      conf_(std::move(confounders)),
      tables_(std::move(tables)) {
  std::size_t n = graph_.size();
  if (cards_.size() != n || exo_.size() != n || tables_.size() != n)
    throw validation_error("scm: per-variable field length mismatch");
  if (conf_.size() != graph_.bidirected_edges().size())
    throw validation_error("scm: one confounder per bidirected edge required");
  for (std::size_t v = 0; v < n; v++) {
    if (cards_[v] < 2) throw validation_error("scm: cardinality of '" + graph_.name_of((int)v) +
                                              "' must be at least 2");
    check_noise(exo_[v], "exogenous noise of '" + graph_.name_of((int)v) + "'");
  }
  for (std::size_t e = 0; e < conf_.size(); e++)
    check_noise(conf_[e], "confounder " + std::to_string(e));
  incident_.assign(n, {});
  for (std::size_t e = 0; e < graph_.bidirected_edges().size(); e++) {
    auto [a, b] = graph_.bidirected_edges()[e];
    incident_[a].push_back((int)e);
    incident_[b].push_back((int)e);
  }
  for (std::size_t v = 0; v < n; v++) {
    auto in_cards = input_cards((int)v);
    std::size_t expect = 1;
    for (int c : in_cards) expect *= c;
    if (tables_[v].size() != expect)
      throw validation_error("scm: mechanism table of '" + graph_.name_of((int)v) +
                             "' is not total (" + std::to_string(tables_[v].size()) + " of " +
                             std::to_string(expect) + " rows)");
    for (int out : tables_[v])
      if (out < 0 || out >= cards_[v])
        throw validation_error("scm: mechanism of '" + graph_.name_of((int)v) +
                               "' outputs an out-of-range category");
  }
}

std::vector<int> DiscreteScm::input_cards(int var) const {
  std::vector<int> cards;
  for (int p : graph_.parents(var)) cards.push_back(cards_[p]);
  cards.push_back(exo_[var].card);
  for (int e : incident_[var]) cards.push_back(conf_[e].card);
  return cards;
}

int DiscreteScm::evaluate(int var, const std::vector<int>& parent_vals, int exo_val,
                          const std::vector<int>& conf_vals) const {
  std::vector<int> vals = parent_vals;
  vals.push_back(exo_val);
  vals.insert(vals.end(), conf_vals.begin(), conf_vals.end());
  return tables_[var][flat_index(input_cards(var), vals)];
}

std::vector<double> DiscreteScm::conditional_row(int var, const std::vector<int>& parent_vals,
                                                 const std::vector<int>& conf_vals) const {
  std::vector<double> row(cards_[var], 0.0);
  const auto& noise = exo_[var];
  std::vector<int> vals = parent_vals;
  vals.push_back(0);
  std::size_t e_pos = vals.size() - 1;
  vals.insert(vals.end(), conf_vals.begin(), conf_vals.end());
  auto in_cards = input_cards(var);
  for (int e = 0; e < noise.card; e++) {
    vals[e_pos] = e;
    row[tables_[var][flat_index(in_cards, vals)]] += noise.probs[e];
  }
  return row;
}

Dataset scm_sample(const DiscreteScm& scm, std::size_t n, const InterventionSpec& intervention,
                   std::uint64_t seed) {
  if (n < 1) throw validation_error("scm_sample: n >= 1 required");
  const Admg& g = scm.graph();
  for (const auto& name : intervention.variables())
    (void)g.index_of(name);
  Dataset out;
  out.variables = g.nodes();
  out.cards = scm.cards();
  out.n_rows = n;
  out.intervention = intervention;
  out.provenance = "seed=" + std::to_string(seed);
  out.cells.resize(n * g.size());
  Rng rng(seed);
  std::vector<int> fixed(g.size(), -1);
  std::vector<char> randomized(g.size(), 0);
  for (auto& [name, val] : intervention.fixed.values) {
    int v = g.index_of(name);
    if (val < 0 || val >= scm.card(v))
      throw validation_error("intervention value out of range for '" + name + "'");
    fixed[v] = val;
  }
  for (const auto& name : intervention.randomized) randomized[g.index_of(name)] = 1;
  std::vector<int> conf_vals(scm.graph().bidirected_edges().size());
  std::vector<int> row(g.size());
  for (std::size_t r = 0; r < n; r++) {
    for (std::size_t e = 0; e < conf_vals.size(); e++)
      conf_vals[e] = rng.categorical(scm.confounder((int)e).probs);
    for (int v : g.topological_order()) {
      if (fixed[v] >= 0) {
        row[v] = fixed[v];
      } else if (randomized[v]) {
        row[v] = rng.uniform_int(scm.card(v));
      } else {
        std::vector<int> pa_vals;
        for (int p : g.parents(v)) pa_vals.push_back(row[p]);
        std::vector<int> uc;
        for (int e : scm.incident_edges(v)) uc.push_back(conf_vals[e]);
        int ev = rng.categorical(scm.exogenous(v).probs);
        row[v] = scm.evaluate(v, pa_vals, ev, uc);
      }
    }
    for (std::size_t c = 0; c < g.size(); c++) out.cells[r * g.size() + c] = row[c];
  }
  return out;
}

namespace {

// Sequential elimination over (observed vars, confounders): variables are
// introduced in topological order, confounders live in the table from their
// first non-intervened endpoint to their last, then get summed out.
struct EliminationTable {
  struct Dim {
    bool is_conf;
    int id;  // var index or edge index
    int card;
  };
  std::vector<Dim> dims;
  std::vector<double> table{1.0};

  int position_of(bool is_conf, int id) const {
    for (std::size_t i = 0; i < dims.size(); i++)
      if (dims[i].is_conf == is_conf && dims[i].id == id) return (int)i;
    return -1;
  }

  void add_dim(Dim d, const std::vector<double>& weights, std::size_t max_cost) {
    if (table.size() * d.card > max_cost)
      throw numeric_error("exact enumeration exceeds the configured cost cap");
    std::vector<double> next(table.size() * d.card);
    for (std::size_t i = 0; i < table.size(); i++)
      for (int c = 0; c < d.card; c++) next[i * d.card + c] = table[i] * weights[c];
    table = std::move(next);
    dims.push_back(d);
  }

  void sum_out(int pos) {
    int card = dims[pos].card;
    std::size_t inner = 1;
    for (std::size_t i = pos + 1; i < dims.size(); i++) inner *= dims[i].card;
    std::size_t outer = table.size() / (inner * card);
    std::vector<double> next(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; o++)
      for (int c = 0; c < card; c++)
        for (std::size_t i = 0; i < inner; i++)
          next[o * inner + i] += table[(o * card + c) * inner + i];
    table = std::move(next);
    dims.erase(dims.begin() + pos);
  }
};

}  // namespace

Distribution scm_exact_joint(const DiscreteScm& scm, const Assignment& intervention,
                             std::size_t max_cost) {
  const Admg& g = scm.graph();
  std::vector<int> fixed(g.size(), -1);
  for (auto& [name, val] : intervention.values) {
    int v = g.index_of(name);
    if (val < 0 || val >= scm.card(v))
      throw validation_error("intervention value out of range for '" + name + "'");
    fixed[v] = val;
  }
  int n_edges = (int)g.bidirected_edges().size();
  // For each confounder, the last non-intervened endpoint in topological order.
  std::vector<int> topo_pos(g.size());
  for (std::size_t i = 0; i < g.size(); i++) topo_pos[g.topological_order()[i]] = (int)i;
  std::vector<int> last_user(n_edges, -1);
  for (int e = 0; e < n_edges; e++) {
    auto [a, b] = g.bidirected_edges()[e];
    if (fixed[a] < 0) last_user[e] = std::max(last_user[e], topo_pos[a]);
    if (fixed[b] < 0) last_user[e] = std::max(last_user[e], topo_pos[b]);
  }

  EliminationTable elim;
  std::vector<int> coords;  // scratch
  for (int v : g.topological_order()) {
    if (fixed[v] >= 0) continue;
    for (int e : scm.incident_edges(v))
      if (elim.position_of(true, e) < 0 && last_user[e] >= 0)
        elim.add_dim({true, e, scm.confounder(e).card}, scm.confounder(e).probs, max_cost);

    // multiply in the variable's row distribution
    std::vector<EliminationTable::Dim> old_dims = elim.dims;
    if (elim.table.size() * scm.card(v) > max_cost)
      throw numeric_error("exact enumeration exceeds the configured cost cap");
    std::vector<double> next(elim.table.size() * scm.card(v));
    std::vector<int> dim_cards;
    for (auto& d : old_dims) dim_cards.push_back(d.card);
    std::vector<int> pa_pos, conf_pos;
    std::vector<int> pa_fixed;
    for (int p : g.parents(v)) {
      pa_pos.push_back(elim.position_of(false, p));
      pa_fixed.push_back(fixed[p]);
    }
    for (int e : scm.incident_edges(v)) conf_pos.push_back(elim.position_of(true, e));
    AssignmentIterator it(dim_cards);
    std::vector<int> pa_vals(pa_pos.size()), conf_vals(conf_pos.size());
    for (std::size_t flat = 0; !it.done(); it.next(), flat++) {
      for (std::size_t k = 0; k < pa_pos.size(); k++)
        pa_vals[k] = pa_pos[k] >= 0 ? it.values()[pa_pos[k]] : pa_fixed[k];
      for (std::size_t k = 0; k < conf_pos.size(); k++)
        conf_vals[k] = conf_pos[k] >= 0 ? it.values()[conf_pos[k]] : 0;
      auto row = scm.conditional_row(v, pa_vals, conf_vals);
      for (int c = 0; c < scm.card(v); c++) next[flat * scm.card(v) + c] = elim.table[flat] * row[c];
    }
    elim.table = std::move(next);
    elim.dims.push_back({false, v, scm.card(v)});

    for (int e : scm.incident_edges(v)) {
      if (last_user[e] == topo_pos[v]) {
        int pos = elim.position_of(true, e);
        if (pos >= 0) elim.sum_out(pos);
      }
    }
  }
  // any confounders never used by a non-intervened variable are already absent
  std::vector<std::string> out_vars;
  std::vector<int> out_cards;
  for (std::size_t v = 0; v < g.size(); v++) {
    if (fixed[v] < 0) {
      out_vars.push_back(g.name_of((int)v));
      out_cards.push_back(scm.card((int)v));
    }
  }
  Distribution out(out_vars, out_cards);
  // current dims are non-intervened vars in topo order; remap to node order
  std::vector<int> dim_cards;
  for (auto& d : elim.dims) dim_cards.push_back(d.card);
  std::vector<int> out_pos(elim.dims.size());
  for (std::size_t i = 0; i < elim.dims.size(); i++) {
    const std::string& name = g.name_of(elim.dims[i].id);
    out_pos[i] = (int)(std::find(out_vars.begin(), out_vars.end(), name) - out_vars.begin());
  }
  AssignmentIterator it(dim_cards);
  std::vector<int> vals(out_vars.size());
  for (std::size_t flat = 0; !it.done(); it.next(), flat++) {
    for (std::size_t i = 0; i < elim.dims.size(); i++) vals[out_pos[i]] = it.values()[i];
    out.p[flat_index(out_cards, vals)] = elim.table[flat];
  }
  return out;
}

Distribution scm_interventional_oracle(const DiscreteScm& scm, const Assignment& x,
                                       const VariableSet& y, std::size_t max_cost) {
  return scm_exact_joint(scm, x, max_cost).marginal(y);
}

Distribution scm_conditional(const DiscreteScm& scm, const VariableSet& target,
                             const VariableSet& given, const Assignment& intervention) {
  auto joint = scm_exact_joint(scm, intervention);
  return joint.marginal(target.unite(given)).condition(given);
}

DiscreteScm random_scm(int n_vars, std::uint64_t seed, RandomScmOptions opts) {
  if (n_vars < 2) throw validation_error("random_scm: n_vars >= 2 required");
  int arc_count = opts.arc_count >= 0 ? opts.arc_count : n_vars;
  int latent_count = opts.latent_count >= 0 ? opts.latent_count : n_vars / 3;
  Rng rng(seed);
  std::vector<std::string> names;
  for (int i = 0; i < n_vars; i++) names.push_back("V" + std::to_string(i + 1));
  // random topological positions
  std::vector<int> pos(n_vars);
  for (int i = 0; i < n_vars; i++) pos[i] = i;
  for (int i = n_vars - 1; i > 0; i--) std::swap(pos[i], pos[rng.uniform_int(i + 1)]);

  std::set<std::pair<int, int>> arcs;
  int max_arcs = n_vars * (n_vars - 1) / 2;
  arc_count = std::min(arc_count, max_arcs);
  while ((int)arcs.size() < arc_count) {
    int a = rng.uniform_int(n_vars), b = rng.uniform_int(n_vars);
    if (a == b) continue;
    if (pos[a] > pos[b]) std::swap(a, b);
    arcs.emplace(a, b);
  }
  std::set<std::pair<int, int>> latents;
  int max_latents = std::min(latent_count, max_arcs);
  while ((int)latents.size() < max_latents) {
    int a = rng.uniform_int(n_vars), b = rng.uniform_int(n_vars);
    if (a == b) continue;
    latents.emplace(std::min(a, b), std::max(a, b));
  }
  std::vector<std::pair<std::string, std::string>> directed, bidirected;
  for (auto& [a, b] : arcs) directed.emplace_back(names[a], names[b]);
  for (auto& [a, b] : latents) bidirected.emplace_back(names[a], names[b]);
  Admg g(names, directed, bidirected);
  return random_mechanisms(g, seed ^ 0xA5A5A5A5ULL, opts);
}

DiscreteScm random_mechanisms(const Admg& g, std::uint64_t seed, RandomScmOptions opts) {
  int n_vars = (int)g.size();
  Rng rng(seed);

  auto positive_probs = [&](int card) {
    std::vector<double> p(card);
    double sum = 0;
    for (int i = 0; i < card; i++) {
      p[i] = 0.2 + rng.next_double();
      sum += p[i];
    }
    for (int i = 0; i < card; i++) p[i] /= sum;
    // exact renormalization so the vector sums to 1 within 1e-12
    double s2 = 0;
    for (int i = 0; i + 1 < card; i++) s2 += p[i];
    p[card - 1] = 1.0 - s2;
    return p;
  };

  std::vector<int> cards(n_vars);
  for (int v = 0; v < n_vars; v++) cards[v] = 2 + rng.uniform_int(opts.max_card - 1);
  std::vector<DiscreteScm::Noise> exo(n_vars), conf(g.bidirected_edges().size());
  for (int v = 0; v < n_vars; v++) {
    exo[v].card = cards[v] + 1;
    exo[v].probs = positive_probs(exo[v].card);
  }
  for (auto& c : conf) {
    c.card = opts.confounder_card;
    c.probs = positive_probs(c.card);
  }

  std::vector<std::vector<int>> incident(n_vars);
  for (std::size_t e = 0; e < g.bidirected_edges().size(); e++) {
    auto [a, b] = g.bidirected_edges()[e];
    incident[a].push_back((int)e);
    incident[b].push_back((int)e);
  }
  std::vector<std::vector<int>> tables(n_vars);
  for (int v = 0; v < n_vars; v++) {
    int ecard = exo[v].card;
    std::size_t n_pa = 1, n_cf = 1;
    for (int p : g.parents(v)) n_pa *= cards[p];
    for (int e : incident[v]) n_cf *= conf[e].card;
    // layout: parents (slowest), e, confounders (fastest)
    tables[v].resize(n_pa * ecard * n_cf);
    for (std::size_t pa = 0; pa < n_pa; pa++) {
      for (std::size_t cf = 0; cf < n_cf; cf++) {
        // surjective noise-to-category map per context keeps the joint positive
        std::vector<int> vals(ecard);
        for (int e = 0; e < ecard; e++) vals[e] = e < cards[v] ? e : rng.uniform_int(cards[v]);
        for (int i = ecard - 1; i > 0; i--) std::swap(vals[i], vals[rng.uniform_int(i + 1)]);
        for (int e = 0; e < ecard; e++) tables[v][(pa * ecard + e) * n_cf + cf] = vals[e];
      }
    }
  }
  return DiscreteScm(g, cards, exo, conf, tables);
}

namespace {

std::string noise_to_text(const DiscreteScm::Noise& n) {
  std::ostringstream os;
  os << n.card;
  os.precision(17);
  for (double p : n.probs) os << " " << p;
  return os.str();
}

}  // namespace

std::string DiscreteScm::to_text() const {
  std::ostringstream os;
  os << "scm v1\ngraph:\n" << graph_.to_text() << "end graph\n";
  for (std::size_t v = 0; v < graph_.size(); v++)
    os << "card " << graph_.name_of((int)v) << " " << cards_[v] << "\n";
  for (std::size_t v = 0; v < graph_.size(); v++)
    os << "exo " << graph_.name_of((int)v) << " " << noise_to_text(exo_[v]) << "\n";
  for (std::size_t e = 0; e < conf_.size(); e++) {
    auto [a, b] = graph_.bidirected_edges()[e];
    os << "conf " << graph_.name_of(a) << " " << graph_.name_of(b) << " " << noise_to_text(conf_[e])
       << "\n";
  }
  for (std::size_t v = 0; v < graph_.size(); v++) {
    auto in_cards = input_cards((int)v);
    AssignmentIterator it(in_cards);
    for (; !it.done(); it.next()) {
      os << "mech " << graph_.name_of((int)v);
      std::size_t k = 0;
      for (int p : graph_.parents((int)v)) os << " " << graph_.name_of(p) << "=" << it.values()[k++];
      os << " e=" << it.values()[k++];
      for (int e : incident_[(int)v]) {
        auto [a, b] = graph_.bidirected_edges()[e];
        os << " u{" << graph_.name_of(a) << "," << graph_.name_of(b) << "}=" << it.values()[k++];
      }
      os << " -> " << tables_[v][flat_index(in_cards, it.values())] << "\n";
    }
  }
  os << "end scm\n";
  return os.str();
}

DiscreteScm parse_scm(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw validation_error("scm line " + std::to_string(lineno) + ": " + msg);
  };
  if (!std::getline(is, line) || line != "scm v1") throw validation_error("scm: missing 'scm v1' header");
  lineno = 1;
  if (!std::getline(is, line) || line != "graph:") throw validation_error("scm: missing 'graph:' section");
  lineno = 2;
  std::ostringstream graph_text;
  while (std::getline(is, line)) {
    lineno++;
    if (line == "end graph") break;
    graph_text << line << "\n";
  }
  Admg g = parse_admg(graph_text.str());

  std::map<std::string, int> cards;
  std::map<std::string, DiscreteScm::Noise> exo;
  std::map<std::pair<std::string, std::string>, DiscreteScm::Noise> conf;
  struct MechLine {
    std::map<std::string, int> parent_vals;
    int e_val = -1;
    std::map<std::pair<std::string, std::string>, int> conf_vals;
    int out = -1;
  };
  std::map<std::string, std::vector<MechLine>> mechs;

  auto parse_noise = [&](std::istringstream& ls) {
    DiscreteScm::Noise n;
    if (!(ls >> n.card)) fail("expected noise cardinality");
    n.probs.resize(n.card);
    for (int i = 0; i < n.card; i++)
      if (!(ls >> n.probs[i])) fail("expected " + std::to_string(n.card) + " probabilities");
    return n;
  };

  while (std::getline(is, line)) {
    lineno++;
    if (line.empty() || line == "end scm") continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "card") {
      std::string name;
      int c;
      if (!(ls >> name >> c)) fail("bad card line");
      cards[name] = c;
    } else if (kind == "exo") {
      std::string name;
      if (!(ls >> name)) fail("bad exo line");
      exo[name] = parse_noise(ls);
    } else if (kind == "conf") {
      std::string a, b;
      if (!(ls >> a >> b)) fail("bad conf line");
      conf[{std::min(a, b), std::max(a, b)}] = parse_noise(ls);
    } else if (kind == "mech") {
      std::string var;
      if (!(ls >> var)) fail("bad mech line");
      MechLine m;
      std::string tok;
      bool arrow = false;
      while (ls >> tok) {
        if (tok == "->") {
          arrow = true;
          if (!(ls >> m.out)) fail("missing mechanism output");
          break;
        }
        auto eq = tok.find('=');
        if (eq == std::string::npos) fail("bad mech token '" + tok + "'");
        std::string key = tok.substr(0, eq);
        int val = std::stoi(tok.substr(eq + 1));
        if (key == "e") {
          m.e_val = val;
        } else if (key.rfind("u{", 0) == 0 && key.back() == '}') {
          std::string pair = key.substr(2, key.size() - 3);
          auto comma = pair.find(',');
          if (comma == std::string::npos) fail("bad confounder key '" + key + "'");
          std::string a = pair.substr(0, comma), b = pair.substr(comma + 1);
          m.conf_vals[{std::min(a, b), std::max(a, b)}] = val;
        } else {
          m.parent_vals[key] = val;
        }
      }
      if (!arrow || m.e_val < 0) fail("mech line needs e=<val> and '-> <out>'");
      mechs[var].push_back(std::move(m));
    } else {
      fail("unknown statement '" + kind + "'");
    }
  }

  for (auto& [name, unused] : cards)
    if (!g.has_node(name)) throw validation_error("scm: card for unknown variable '" + name + "'");
  for (auto& [name, unused] : exo)
    if (!g.has_node(name)) throw validation_error("scm: exo for unknown variable '" + name + "'");
  for (auto& [pair, unused] : conf) {
    if (!g.has_node(pair.first) || !g.has_node(pair.second) ||
        std::find(g.bidirected_neighbors(g.index_of(pair.first)).begin(),
                  g.bidirected_neighbors(g.index_of(pair.first)).end(),
                  g.index_of(pair.second)) ==
            g.bidirected_neighbors(g.index_of(pair.first)).end())
      throw validation_error("scm: conf " + pair.first + " " + pair.second +
                             " does not match a bidirected edge");
  }
  for (auto& [name, unused] : mechs)
    if (!g.has_node(name)) throw validation_error("scm: mech for unknown variable '" + name + "'");
  std::vector<int> card_vec(g.size());
  std::vector<DiscreteScm::Noise> exo_vec(g.size());
  for (std::size_t v = 0; v < g.size(); v++) {
    const std::string& name = g.name_of((int)v);
    if (!cards.count(name)) throw validation_error("scm: no cardinality for '" + name + "'");
    if (!exo.count(name)) throw validation_error("scm: no exogenous noise for '" + name + "'");
    card_vec[v] = cards[name];
    exo_vec[v] = exo[name];
  }
  std::vector<DiscreteScm::Noise> conf_vec;
  for (auto& [a, b] : g.bidirected_edges()) {
    std::string na = g.name_of(a), nb = g.name_of(b);
    auto key = std::make_pair(std::min(na, nb), std::max(na, nb));
    if (!conf.count(key))
      throw validation_error("scm: no confounder noise for " + na + " <-> " + nb);
    conf_vec.push_back(conf[key]);
  }
  std::vector<std::vector<int>> incident(g.size());
  for (std::size_t e = 0; e < g.bidirected_edges().size(); e++) {
    auto [a, b] = g.bidirected_edges()[e];
    incident[a].push_back((int)e);
    incident[b].push_back((int)e);
  }
  std::vector<std::vector<int>> tables(g.size());
  for (std::size_t v = 0; v < g.size(); v++) {
    const std::string& name = g.name_of((int)v);
    std::vector<int> in_cards;
    for (int p : g.parents((int)v)) in_cards.push_back(card_vec[p]);
    in_cards.push_back(exo_vec[v].card);
    for (int e : incident[v]) in_cards.push_back(conf_vec[e].card);
    std::size_t total = 1;
    for (int c : in_cards) total *= c;
    tables[v].assign(total, -1);
    for (const auto& m : mechs[name]) {
      std::vector<int> vals;
      for (int p : g.parents((int)v)) {
        auto it = m.parent_vals.find(g.name_of(p));
        if (it == m.parent_vals.end())
          throw validation_error("scm: mech line for '" + name + "' missing parent " +
                                 g.name_of(p));
        vals.push_back(it->second);
      }
      vals.push_back(m.e_val);
      for (int e : incident[v]) {
        auto [a, b] = g.bidirected_edges()[e];
        std::string na = g.name_of(a), nb = g.name_of(b);
        auto it = m.conf_vals.find({std::min(na, nb), std::max(na, nb)});
        if (it == m.conf_vals.end())
          throw validation_error("scm: mech line for '" + name + "' missing confounder u{" + na +
                                 "," + nb + "}");
        vals.push_back(it->second);
      }
      for (std::size_t k = 0; k < vals.size(); k++)
        if (vals[k] < 0 || vals[k] >= in_cards[k])
          throw validation_error("scm: mech input out of range for '" + name + "'");
      tables[v][flat_index(in_cards, vals)] = m.out;
    }
    for (std::size_t i = 0; i < total; i++) {
      if (tables[v][i] < 0) {
        // decode the missing assignment for the error message
        std::vector<int> vals(in_cards.size());
        std::size_t rem = i;
        for (int k = (int)in_cards.size() - 1; k >= 0; k--) {
          vals[k] = (int)(rem % in_cards[k]);
          rem /= in_cards[k];
        }
        std::ostringstream os;
        os << "scm: mechanism of '" << name << "' missing assignment (";
        for (std::size_t k = 0; k < vals.size(); k++) os << (k ? "," : "") << vals[k];
        os << ")";
        throw validation_error(os.str());
      }
    }
  }
  return DiscreteScm(g, card_vec, exo_vec, conf_vec, tables);
}

std::string dataset_to_csv(const Dataset& d) {
  std::ostringstream os;
  for (std::size_t i = 0; i < d.variables.size(); i++) os << (i ? "," : "") << d.variables[i];
  os << "\n";
  for (std::size_t r = 0; r < d.n_rows; r++) {
    for (std::size_t c = 0; c < d.variables.size(); c++) os << (c ? "," : "") << d.at(r, c);
    os << "\n";
  }
  return os.str();
}

std::string dataset_manifest(const Dataset& d) {
  std::ostringstream os;
  os << "dataset v1\nrows " << d.n_rows << "\ncolumns";
  for (const auto& v : d.variables) os << " " << v;
  os << "\ncards";
  for (int c : d.cards) os << " " << c;
  os << "\nintervention " << d.intervention.to_string() << "\nprovenance " << d.provenance << "\n";
  return os.str();
}

Dataset dataset_from_csv(const std::string& csv_text, const std::string& manifest_text) {
  Dataset d;
  {
    std::istringstream is(manifest_text);
    std::string line;
    if (!std::getline(is, line) || line != "dataset v1")
      throw validation_error("dataset manifest: missing 'dataset v1' header");
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "rows") {
        ls >> d.n_rows;
      } else if (key == "columns") {
        std::string v;
        while (ls >> v) d.variables.push_back(v);
      } else if (key == "cards") {
        int c;
        while (ls >> c) d.cards.push_back(c);
      } else if (key == "intervention") {
        std::string rest;
        std::getline(ls, rest);
        d.intervention = InterventionSpec::parse(rest);
      } else if (key == "provenance") {
        std::string rest;
        std::getline(ls, rest);
        if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
        d.provenance = rest;
      }
    }
  }
  std::istringstream is(csv_text);
  std::string line;
  if (!std::getline(is, line)) throw validation_error("dataset csv: empty file");
  {
    std::vector<std::string> header;
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
    if (d.variables.empty()) d.variables = header;
    if (header != d.variables) throw validation_error("dataset csv: header/manifest mismatch");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream rs(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(rs, cell, ',')) {
      d.cells.push_back(std::stoi(cell));
      col++;
    }
    if (col != d.variables.size()) throw validation_error("dataset csv: ragged row");
  }
  std::size_t rows = d.cells.size() / d.variables.size();
  if (d.n_rows == 0) d.n_rows = rows;
  if (rows != d.n_rows) throw validation_error("dataset csv: row count does not match manifest");
  if (d.cards.empty()) {
    d.cards.assign(d.variables.size(), 0);
    for (std::size_t r = 0; r < rows; r++)
      for (std::size_t c = 0; c < d.variables.size(); c++)
        d.cards[c] = std::max(d.cards[c], d.at(r, c) + 1);
  }
  for (std::size_t r = 0; r < rows; r++)
    for (std::size_t c = 0; c < d.variables.size(); c++)
      if (d.at(r, c) < 0 || d.at(r, c) >= d.cards[c])
        throw validation_error("dataset csv: value out of range in column " + d.variables[c]);
  for (auto& [name, val] : d.intervention.fixed.values) {
    auto it = std::find(d.variables.begin(), d.variables.end(), name);
    if (it == d.variables.end()) continue;
    std::size_t col = it - d.variables.begin();
    for (std::size_t r = 0; r < rows; r++)
      if (d.at(r, col) != val)
        throw validation_error("dataset csv: intervened column " + name +
                               " is not constant at its fixed value");
  }
  return d;
}

}  // namespace modcausal
