#include "modcausal/dcm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "modcausal/rng.hpp"

namespace modcausal {

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

void softmax_into(const double* logits, int n, std::vector<double>& out) {
  out.resize(n);
  double mx = logits[0];
  for (int i = 1; i < n; i++) mx = std::max(mx, logits[i]);
  double sum = 0;
  for (int i = 0; i < n; i++) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (int i = 0; i < n; i++) out[i] /= sum;
}

}  // namespace

Dcm::Dcm(Admg graph, std::vector<int> cards, const NoiseConfig& config, std::uint64_t seed)
    : graph_(std::move(graph)), cards_(std::move(cards)), config_(config) {
  std::size_t n = graph_.size();
  if (cards_.size() != n) throw validation_error("dcm: cardinality list length mismatch");
  for (std::size_t v = 0; v < n; v++)
    if (cards_[v] < 2)
      throw validation_error("dcm: cardinality of '" + graph_.name_of((int)v) +
                             "' must be at least 2");
  incident_.assign(n, {});
  for (std::size_t e = 0; e < graph_.bidirected_edges().size(); e++) {
    auto [a, b] = graph_.bidirected_edges()[e];
    incident_[a].push_back((int)e);
    incident_[b].push_back((int)e);
  }
  Rng rng(seed);
  confs_.resize(graph_.bidirected_edges().size());
  for (std::size_t e = 0; e < confs_.size(); e++) {
    auto [a, b] = graph_.bidirected_edges()[e];
    int card = config_.confounder_card > 0
                   ? config_.confounder_card
                   : (int)std::lround(cards_[a] * cards_[b] * config_.confounder_card_scale);
    confs_[e].card = std::max(2, card);
    confs_[e].prior_logits.assign(confs_[e].card, 0.0);
  }
  mechs_.resize(n);
  for (std::size_t v = 0; v < n; v++) {
    Mechanism& m = mechs_[v];
    m.out_card = cards_[v];
    m.e_card = config_.exo_card > 0 ? config_.exo_card : cards_[v];
    for (int p : graph_.parents((int)v)) m.row_cards.push_back(cards_[p]);
    m.row_cards.push_back(m.e_card);
    for (int e : incident_[v]) m.row_cards.push_back(confs_[e].card);
    std::size_t rows = 1;
    for (int c : m.row_cards) rows *= c;
    m.logits.resize(rows * m.out_card);
    for (auto& x : m.logits) x = config_.init_scale * rng.normal();
  }
  trainable_.assign(n, 1);
}

bool Dcm::edge_prior_trainable(int edge) const {
  if (!config_.trainable_confounder_prior) return false;
  auto [a, b] = graph_.bidirected_edges()[edge];
  return trainable_[a] && trainable_[b];
}

std::vector<double> Dcm::row_probs(int var, std::size_t row) const {
  std::vector<double> out;
  softmax_into(mechs_[var].logits.data() + row * mechs_[var].out_card, mechs_[var].out_card, out);
  return out;
}

std::size_t Dcm::row_of(int var, const std::vector<int>& parent_vals, int e_val,
                        const std::vector<int>& conf_vals) const {
  std::vector<int> vals = parent_vals;
  vals.push_back(e_val);
  vals.insert(vals.end(), conf_vals.begin(), conf_vals.end());
  return flat_index(mechs_[var].row_cards, vals);
}

std::vector<double> Dcm::marginal_row_probs(int var, const std::vector<int>& parent_vals,
                                            const std::vector<int>& conf_vals) const {
  const Mechanism& m = mechs_[var];
  std::vector<double> acc(m.out_card, 0.0), row;
  for (int e = 0; e < m.e_card; e++) {
    softmax_into(m.logits.data() + row_of(var, parent_vals, e, conf_vals) * m.out_card, m.out_card,
                 row);
    for (int c = 0; c < m.out_card; c++) acc[c] += row[c];
  }
  for (int c = 0; c < m.out_card; c++) acc[c] /= m.e_card;
  return acc;
}

std::vector<double> Dcm::confounder_prior(int edge) const {
  std::vector<double> out;
  softmax_into(confs_[edge].prior_logits.data(), confs_[edge].card, out);
  return out;
}

Dcm dcm_init(const Admg& g, const std::vector<int>& cards, const NoiseConfig& config,
             std::uint64_t seed) {
  return Dcm(g, cards, config, seed);
}

Dcm dcm_set_trainable(const Dcm& dcm, const VariableSet& vars, bool flag) {
  Dcm out = dcm;
  for (const auto& name : vars) out.set_trainable(out.graph().index_of(name), flag);
  return out;
}

Dataset dcm_forward_sample(const Dcm& dcm, std::size_t n, const Assignment& intervention,
                           const Dataset* clamp, std::uint64_t seed) {
  if (n < 1) throw validation_error("dcm_forward_sample: n >= 1 required");
  const Admg& g = dcm.graph();
  std::vector<int> fixed(g.size(), -1);
  for (auto& [name, val] : intervention.values) {
    int v = g.index_of(name);
    if (val < 0 || val >= dcm.card(v))
      throw validation_error("intervention value out of range for '" + name + "'");
    fixed[v] = val;
  }
  std::vector<int> clamp_col(g.size(), -1);
  if (clamp) {
    if (clamp->n_rows != n)
      throw validation_error("dcm_forward_sample: clamp dataset has " +
                             std::to_string(clamp->n_rows) + " rows, expected " +
                             std::to_string(n));
    for (std::size_t c = 0; c < clamp->variables.size(); c++) {
      int v = g.index_of(clamp->variables[c]);
      if (fixed[v] >= 0)
        throw validation_error("dcm_forward_sample: '" + clamp->variables[c] +
                               "' is both intervened and clamped");
      clamp_col[v] = (int)c;
    }
  }
  Dataset out;
  out.variables = g.nodes();
  out.cards = dcm.cards();
  out.n_rows = n;
  InterventionSpec spec;
  spec.fixed = intervention;
  out.intervention = spec;
  out.provenance = "seed=" + std::to_string(seed);
  out.cells.resize(n * g.size());
  Rng rng(seed);
  std::vector<int> conf_vals(g.bidirected_edges().size());
  std::vector<int> row(g.size());
  for (std::size_t r = 0; r < n; r++) {
    for (std::size_t e = 0; e < conf_vals.size(); e++)
      conf_vals[e] = rng.categorical(dcm.confounder_prior((int)e));
    for (int v : g.topological_order()) {
      if (fixed[v] >= 0) {
        row[v] = fixed[v];
      } else if (clamp_col[v] >= 0) {
        row[v] = clamp->at(r, clamp_col[v]);
      } else {
        std::vector<int> pa_vals;
        for (int p : g.parents(v)) pa_vals.push_back(row[p]);
        std::vector<int> uc;
        for (int e : dcm.incident_edges(v)) uc.push_back(conf_vals[e]);
        int ev = rng.uniform_int(dcm.mechanism(v).e_card);
        row[v] = rng.categorical(dcm.row_probs(v, dcm.row_of(v, pa_vals, ev, uc)));
      }
    }
    for (std::size_t c = 0; c < g.size(); c++) out.cells[r * g.size() + c] = row[c];
  }
  return out;
}

namespace {

struct ElimTable {
  struct Dim {
    bool is_conf;
    int id;
    int card;
  };
  std::vector<Dim> dims;
  std::vector<double> table{1.0};

  int position_of(bool is_conf, int id) const {
    for (std::size_t i = 0; i < dims.size(); i++)
      if (dims[i].is_conf == is_conf && dims[i].id == id) return (int)i;
    return -1;
  }
  void add_weighted(Dim d, const std::vector<double>& weights, std::size_t max_cost) {
    if (table.size() * d.card > max_cost)
      throw numeric_error("dcm exact enumeration exceeds the configured cost cap");
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

Distribution dcm_exact_distribution(const Dcm& dcm, const VariableSet& target,
                                    const Assignment& given_do, const Assignment& intervention,
                                    std::size_t max_cost) {
  const Admg& g = dcm.graph();
  std::vector<int> fixed(g.size(), -1);
  for (const Assignment* a : {&given_do, &intervention}) {
    for (auto& [name, val] : a->values) {
      int v = g.index_of(name);
      if (val < 0 || val >= dcm.card(v))
        throw validation_error("do value out of range for '" + name + "'");
      fixed[v] = val;
    }
  }
  VariableSet do_vars = given_do.variables().unite(intervention.variables());
  if (target.intersects(do_vars))
    throw validation_error("dcm_exact_distribution: target overlaps the do set");
  for (const auto& n : target) (void)g.index_of(n);

  // Only ancestors of the target in the surgered graph affect its table.
  VariableSet relevant = ancestors(g, target, do_vars).unite(target).minus(do_vars);
  std::vector<char> keep(g.size(), 0), is_target(g.size(), 0);
  for (int v : g.indices_of(relevant)) keep[v] = 1;
  for (int v : g.indices_of(target)) is_target[v] = 1;

  int n_edges = (int)g.bidirected_edges().size();
  std::vector<int> topo_pos(g.size());
  for (std::size_t i = 0; i < g.size(); i++) topo_pos[g.topological_order()[i]] = (int)i;
  // a confounder is live for its kept, non-intervened endpoints
  std::vector<int> last_user(n_edges, -1);
  for (int e = 0; e < n_edges; e++) {
    auto [a, b] = g.bidirected_edges()[e];
    if (keep[a] && fixed[a] < 0) last_user[e] = std::max(last_user[e], topo_pos[a]);
    if (keep[b] && fixed[b] < 0) last_user[e] = std::max(last_user[e], topo_pos[b]);
  }

  ElimTable elim;
  for (int v : g.topological_order()) {
    if (!keep[v] || fixed[v] >= 0) continue;
    for (int e : dcm.incident_edges(v))
      if (elim.position_of(true, e) < 0 && last_user[e] >= 0)
        elim.add_weighted({true, e, dcm.confounder(e).card}, dcm.confounder_prior(e), max_cost);

    std::vector<ElimTable::Dim> old_dims = elim.dims;
    if (elim.table.size() * dcm.card(v) > max_cost)
      throw numeric_error("dcm exact enumeration exceeds the configured cost cap");
    std::vector<double> next(elim.table.size() * dcm.card(v));
    std::vector<int> dim_cards;
    for (auto& d : old_dims) dim_cards.push_back(d.card);
    std::vector<int> pa_pos, pa_fixed, conf_pos;
    for (int p : g.parents(v)) {
      pa_pos.push_back(elim.position_of(false, p));
      pa_fixed.push_back(fixed[p]);
      if (pa_pos.back() < 0 && fixed[p] < 0 && !keep[p])
        throw std::logic_error("dcm_exact_distribution: parent outside the ancestor closure");
    }
    for (int e : dcm.incident_edges(v)) conf_pos.push_back(elim.position_of(true, e));
    AssignmentIterator it(dim_cards);
    std::vector<int> pa_vals(pa_pos.size()), conf_vals(conf_pos.size());
    for (std::size_t flat = 0; !it.done(); it.next(), flat++) {
      for (std::size_t k = 0; k < pa_pos.size(); k++)
        pa_vals[k] = pa_pos[k] >= 0 ? it.values()[pa_pos[k]] : pa_fixed[k];
      for (std::size_t k = 0; k < conf_pos.size(); k++)
        conf_vals[k] = conf_pos[k] >= 0 ? it.values()[conf_pos[k]] : 0;
      auto row = dcm.marginal_row_probs(v, pa_vals, conf_vals);
      for (int c = 0; c < dcm.card(v); c++) next[flat * dcm.card(v) + c] = elim.table[flat] * row[c];
    }
    elim.table = std::move(next);
    elim.dims.push_back({false, v, dcm.card(v)});

    for (int e : dcm.incident_edges(v)) {
      if (last_user[e] == topo_pos[v]) {
        int pos = elim.position_of(true, e);
        if (pos >= 0) elim.sum_out(pos);
      }
    }
  }
  // sum out non-target variables, then confounders are already gone
  for (int pos = (int)elim.dims.size() - 1; pos >= 0; pos--) {
    if (elim.dims[pos].is_conf || !is_target[elim.dims[pos].id]) elim.sum_out(pos);
  }
  std::vector<std::string> out_vars;
  std::vector<int> out_cards;
  for (std::size_t v = 0; v < g.size(); v++) {
    if (is_target[v]) {
      out_vars.push_back(g.name_of((int)v));
      out_cards.push_back(dcm.card((int)v));
    }
  }
  Distribution out(out_vars, out_cards);
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

std::uint64_t Dcm::graph_hash() const {
  std::ostringstream os;
  os << graph_.to_text();
  for (int c : cards_) os << c << " ";
  return fnv1a64(os.str());
}

std::string Dcm::to_checkpoint() const {
  std::ostringstream os;
  os.precision(17);
  os << "dcmckpt v1\n";
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", (unsigned long long)graph_hash());
  os << "graph_hash " << hex << "\n";
  os << "graph:\n" << graph_.to_text() << "end graph\n";
  for (std::size_t v = 0; v < graph_.size(); v++)
    os << "card " << graph_.name_of((int)v) << " " << cards_[v] << "\n";
  os << "noise_config " << config_.exo_card << " " << config_.confounder_card << " "
     << config_.confounder_card_scale << " " << (config_.trainable_confounder_prior ? 1 : 0) << " "
     << config_.init_scale << "\n";
  for (std::size_t v = 0; v < graph_.size(); v++)
    os << "trainable " << graph_.name_of((int)v) << " " << (trainable_[v] ? 1 : 0) << "\n";
  for (std::size_t e = 0; e < confs_.size(); e++) {
    auto [a, b] = graph_.bidirected_edges()[e];
    os << "conf " << graph_.name_of(a) << " " << graph_.name_of(b) << " " << confs_[e].card;
    for (double x : confs_[e].prior_logits) os << " " << x;
    os << "\n";
  }
  for (std::size_t v = 0; v < graph_.size(); v++) {
    const Mechanism& m = mechs_[v];
    os << "mech " << graph_.name_of((int)v) << " ecard " << m.e_card << " values "
       << m.logits.size();
    for (double x : m.logits) os << " " << x;
    os << "\n";
  }
  os << "end dcmckpt\n";
  return os.str();
}

Dcm Dcm::from_checkpoint(const std::string& text, const Admg* expected_graph) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "dcmckpt v1")
    throw validation_error("checkpoint: missing 'dcmckpt v1' header");
  if (!std::getline(is, line) || line.rfind("graph_hash ", 0) != 0)
    throw validation_error("checkpoint: missing graph_hash");
  std::string stored_hash = line.substr(11);
  if (!std::getline(is, line) || line != "graph:")
    throw validation_error("checkpoint: missing graph section");
  std::ostringstream graph_text;
  while (std::getline(is, line)) {
    if (line == "end graph") break;
    graph_text << line << "\n";
  }
  Admg g = parse_admg(graph_text.str());
  std::map<std::string, int> cards;
  NoiseConfig config;
  std::map<std::string, int> trainable;
  std::map<std::pair<std::string, std::string>, std::pair<int, std::vector<double>>> confs;
  std::map<std::string, std::pair<int, std::vector<double>>> mechs;
  while (std::getline(is, line)) {
    if (line.empty() || line == "end dcmckpt") continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "card") {
      std::string name;
      int c;
      ls >> name >> c;
      cards[name] = c;
    } else if (kind == "noise_config") {
      int tp;
      ls >> config.exo_card >> config.confounder_card >> config.confounder_card_scale >> tp >>
          config.init_scale;
      config.trainable_confounder_prior = tp != 0;
    } else if (kind == "trainable") {
      std::string name;
      int f;
      ls >> name >> f;
      trainable[name] = f;
    } else if (kind == "conf") {
      std::string a, b;
      int card;
      ls >> a >> b >> card;
      std::vector<double> logits(card);
      for (auto& x : logits) ls >> x;
      confs[{std::min(a, b), std::max(a, b)}] = {card, std::move(logits)};
    } else if (kind == "mech") {
      std::string name, word;
      int ecard;
      std::size_t count;
      ls >> name >> word >> ecard >> word >> count;
      std::vector<double> logits(count);
      for (auto& x : logits) ls >> x;
      mechs[name] = {ecard, std::move(logits)};
    } else {
      throw validation_error("checkpoint: unknown statement '" + kind + "'");
    }
  }
  std::vector<int> card_vec(g.size());
  for (std::size_t v = 0; v < g.size(); v++) {
    auto it = cards.find(g.name_of((int)v));
    if (it == cards.end()) throw validation_error("checkpoint: missing cardinality");
    card_vec[v] = it->second;
  }
  // rebuild deterministically, then overwrite parameters
  Dcm dcm(g, card_vec, config, /*seed=*/0);
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", (unsigned long long)dcm.graph_hash());
  if (stored_hash != hex)
    throw validation_error("checkpoint: stored graph hash does not match its graph section");
  if (expected_graph && !(*expected_graph == g))
    throw validation_error("checkpoint: graph hash mismatch with the expected graph");
  for (std::size_t e = 0; e < dcm.confs_.size(); e++) {
    auto [a, b] = g.bidirected_edges()[e];
    auto key = std::make_pair(std::min(g.name_of(a), g.name_of(b)),
                              std::max(g.name_of(a), g.name_of(b)));
    auto it = confs.find(key);
    if (it == confs.end()) throw validation_error("checkpoint: missing confounder block");
    dcm.confs_[e].card = it->second.first;
    dcm.confs_[e].prior_logits = it->second.second;
  }
  for (std::size_t v = 0; v < g.size(); v++) {
    auto it = mechs.find(g.name_of((int)v));
    if (it == mechs.end()) throw validation_error("checkpoint: missing mechanism block");
    Dcm::Mechanism& m = dcm.mechs_[v];
    m.e_card = it->second.first;
    m.row_cards.clear();
    for (int p : g.parents((int)v)) m.row_cards.push_back(card_vec[p]);
    m.row_cards.push_back(m.e_card);
    for (int e : dcm.incident_[v]) m.row_cards.push_back(dcm.confs_[e].card);
    std::size_t rows = 1;
    for (int c : m.row_cards) rows *= c;
    if (it->second.second.size() != rows * m.out_card)
      throw validation_error("checkpoint: mechanism size mismatch for '" + g.name_of((int)v) + "'");
    m.logits = it->second.second;
    auto tr = trainable.find(g.name_of((int)v));
    dcm.trainable_[v] = tr == trainable.end() ? 1 : (tr->second ? 1 : 0);
  }
  return dcm;
}

}  // namespace modcausal
