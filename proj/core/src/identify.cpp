#include "modcausal/identify.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace modcausal {

Estimand Estimand::joint_term(VariableSet vars) {
  Estimand e;
  e.kind = Kind::JointTerm;
  e.vars = std::move(vars);
  return e;
}

Estimand Estimand::marginal_sum(VariableSet summed, Estimand child) {
  if (summed.empty()) return child;
  Estimand e;
  e.kind = Kind::MarginalSum;
  e.vars = std::move(summed);
  e.children.push_back(std::move(child));
  return e;
}

Estimand Estimand::product(std::vector<Estimand> children) {
  if (children.size() == 1) return std::move(children.front());
  Estimand e;
  e.kind = Kind::Product;
  e.children = std::move(children);
  return e;
}

Estimand Estimand::quotient(Estimand num, Estimand den) {
  Estimand e;
  e.kind = Kind::Quotient;
  e.children.push_back(std::move(num));
  e.children.push_back(std::move(den));
  return e;
}

Estimand Estimand::unidentifiable(VariableSet outer, VariableSet inner) {
  Estimand e;
  e.kind = Kind::Unidentifiable;
  e.hedge_outer = std::move(outer);
  e.hedge_inner = std::move(inner);
  return e;
}

bool Estimand::identifiable() const {
  if (kind == Kind::Unidentifiable) return false;
  for (const auto& c : children)
    if (!c.identifiable()) return false;
  return true;
}

VariableSet Estimand::free_variables() const {
  switch (kind) {
    case Kind::JointTerm:
      return vars;
    case Kind::MarginalSum:
      return children[0].free_variables().minus(vars);
    case Kind::Product:
    case Kind::Quotient: {
      VariableSet acc;
      for (const auto& c : children) acc = acc.unite(c.free_variables());
      return acc;
    }
    case Kind::Unidentifiable:
      return {};
  }
  return {};
}

namespace {

void sexpr(const Estimand& e, std::ostringstream& os) {
  switch (e.kind) {
    case Estimand::Kind::JointTerm: {
      os << "(P";
      for (const auto& v : e.vars) os << " " << v;
      os << ")";
      break;
    }
    case Estimand::Kind::MarginalSum: {
      os << "(sum (";
      bool first = true;
      for (const auto& v : e.vars) {
        if (!first) os << " ";
        os << v;
        first = false;
      }
      os << ") ";
      sexpr(e.children[0], os);
      os << ")";
      break;
    }
    case Estimand::Kind::Product: {
      os << "(*";
      for (const auto& c : e.children) {
        os << " ";
        sexpr(c, os);
      }
      os << ")";
      break;
    }
    case Estimand::Kind::Quotient: {
      os << "(/ ";
      sexpr(e.children[0], os);
      os << " ";
      sexpr(e.children[1], os);
      os << ")";
      break;
    }
    case Estimand::Kind::Unidentifiable: {
      os << "(unidentifiable :hedge (";
      bool first = true;
      for (const auto& v : e.hedge_outer) {
        if (!first) os << " ";
        os << v;
        first = false;
      }
      os << ") (";
      first = true;
      for (const auto& v : e.hedge_inner) {
        if (!first) os << " ";
        os << v;
        first = false;
      }
      os << "))";
      break;
    }
  }
}

}  // namespace

std::string Estimand::to_sexpr() const {
  std::ostringstream os;
  sexpr(*this, os);
  return os.str();
}

namespace {

// Induced subgraph on `keep`.
Admg subgraph(const Admg& g, const VariableSet& keep) {
  std::vector<std::string> nodes;
  for (const auto& n : g.nodes())
    if (keep.contains(n)) nodes.push_back(n);
  std::vector<std::pair<std::string, std::string>> directed, bidirected;
  for (auto& [a, b] : g.directed_edges())
    if (keep.contains(g.name_of(a)) && keep.contains(g.name_of(b)))
      directed.emplace_back(g.name_of(a), g.name_of(b));
  for (auto& [a, b] : g.bidirected_edges())
    if (keep.contains(g.name_of(a)) && keep.contains(g.name_of(b)))
      bidirected.emplace_back(g.name_of(a), g.name_of(b));
  return Admg(nodes, directed, bidirected);
}

VariableSet all_nodes(const Admg& g) { return VariableSet(g.nodes()); }

// Chain-rule conditional P(v | topological predecessors within scope) as a
// quotient of marginals of the running expression.
Estimand chain_term(const Estimand& current, const VariableSet& scope_vars,
                    const std::string& v, const VariableSet& predecessors) {
  VariableSet num_keep = predecessors;
  num_keep.insert(v);
  Estimand num = Estimand::marginal_sum(scope_vars.minus(num_keep), current);
  if (predecessors.empty()) return num;
  Estimand den = Estimand::marginal_sum(scope_vars.minus(predecessors), current);
  return Estimand::quotient(std::move(num), std::move(den));
}

// The ID recursion. `order` is one fixed topological order of the original
// graph; `current` is the expression for the joint over g's variables.
Estimand id_rec(const Admg& g, VariableSet y, VariableSet x, Estimand current,
                const std::vector<std::string>& order) {
  VariableSet v = all_nodes(g);

  if (x.empty()) return Estimand::marginal_sum(v.minus(y), std::move(current));

  VariableSet an_y = ancestors(g, y).unite(y);
  if (!(v == an_y)) {
    Estimand marg = Estimand::marginal_sum(v.minus(an_y), std::move(current));
    return id_rec(subgraph(g, an_y), y, x.intersect(an_y), std::move(marg), order);
  }

  VariableSet w = v.minus(x).minus(ancestors(graph_do(g, x), y).unite(y));
  if (!w.empty()) return id_rec(g, std::move(y), x.unite(w), std::move(current), order);

  Admg g_minus_x = subgraph(g, v.minus(x));
  auto comps = c_components(g_minus_x);
  if (comps.size() > 1) {
    std::vector<Estimand> factors;
    for (const auto& s : comps)
      factors.push_back(id_rec(g, s, v.minus(s), current, order));
    Estimand prod = Estimand::product(std::move(factors));
    return Estimand::marginal_sum(v.minus(y.unite(x)), std::move(prod));
  }

  const VariableSet& s = comps.front();
  auto g_comps = c_components(g);
  if (g_comps.size() == 1) return Estimand::unidentifiable(v, s);

  for (const auto& sc : g_comps) {
    if (s == sc) {
      // chain-rule factors over s from the current expression
      std::vector<Estimand> terms;
      VariableSet preds;
      for (const auto& name : order) {
        if (!v.contains(name)) continue;
        if (s.contains(name)) terms.push_back(chain_term(current, v, name, preds));
        preds.insert(name);
      }
      Estimand prod = Estimand::product(std::move(terms));
      return Estimand::marginal_sum(s.minus(y), std::move(prod));
    }
  }
  for (const auto& sc : g_comps) {
    if (s.subset_of(sc)) {
      std::vector<Estimand> terms;
      VariableSet preds;
      for (const auto& name : order) {
        if (!v.contains(name)) continue;
        if (sc.contains(name)) terms.push_back(chain_term(current, v, name, preds));
        preds.insert(name);
      }
      Estimand prod = Estimand::product(std::move(terms));
      return id_rec(subgraph(g, sc), std::move(y), x.intersect(sc), std::move(prod), order);
    }
  }
  throw std::logic_error("id_algorithm: no enclosing c-component found");
}

}  // namespace

Estimand id_algorithm(const Admg& g, const VariableSet& x, const VariableSet& y) {
  if (x.intersects(y)) throw validation_error("id_algorithm: x and y overlap");
  for (const auto& n : y) (void)g.index_of(n);
  for (const auto& n : x) (void)g.index_of(n);
  std::vector<std::string> order;
  for (int v : g.topological_order()) order.push_back(g.name_of(v));
  Estimand root = id_rec(g, y, x, Estimand::joint_term(all_nodes(g)), order);
  root.query_outcome = y;
  root.query_do = x;
  return root;
}

namespace {

// Evaluation produces tables keyed by sorted variable names with no
// conditioning axes; alignment is by name.
Distribution eval_node(const Estimand& e, const Distribution& joint) {
  switch (e.kind) {
    case Estimand::Kind::JointTerm:
      return joint.marginal(e.vars);
    case Estimand::Kind::MarginalSum: {
      Distribution child = eval_node(e.children[0], joint);
      return child.marginal(VariableSet(child.vars).minus(e.vars));
    }
    case Estimand::Kind::Product:
    case Estimand::Kind::Quotient: {
      std::vector<Distribution> parts;
      VariableSet union_vars;
      for (const auto& c : e.children) {
        parts.push_back(eval_node(c, joint));
        union_vars = union_vars.unite(VariableSet(parts.back().vars));
      }
      std::vector<std::string> vars = union_vars.names();
      std::vector<int> cards;
      for (const auto& v : vars) {
        int card = -1;
        for (const auto& part : parts)
          for (std::size_t i = 0; i < part.vars.size(); i++)
            if (part.vars[i] == v) card = part.cards[i];
        cards.push_back(card);
      }
      Distribution out(vars, cards);
      // per-part coordinate projection
      std::vector<std::vector<int>> proj(parts.size());
      for (std::size_t pi = 0; pi < parts.size(); pi++)
        for (const auto& pv : parts[pi].vars)
          proj[pi].push_back((int)(std::find(vars.begin(), vars.end(), pv) - vars.begin()));
      AssignmentIterator it(cards);
      std::vector<int> sub;
      for (std::size_t flat = 0; !it.done(); it.next(), flat++) {
        if (e.kind == Estimand::Kind::Product) {
          double acc = 1.0;
          for (std::size_t pi = 0; pi < parts.size(); pi++) {
            sub.clear();
            for (int pos : proj[pi]) sub.push_back(it.values()[pos]);
            acc *= parts[pi].p[flat_index(parts[pi].cards, sub)];
          }
          out.p[flat] = acc;
        } else {
          sub.clear();
          for (int pos : proj[0]) sub.push_back(it.values()[pos]);
          double num = parts[0].p[flat_index(parts[0].cards, sub)];
          sub.clear();
          for (int pos : proj[1]) sub.push_back(it.values()[pos]);
          double den = parts[1].p[flat_index(parts[1].cards, sub)];
          if (den <= 0) {
            if (num > 0)
              throw numeric_error(
                  "estimand evaluation: division by a zero-probability conditioning event");
            out.p[flat] = 0;
          } else {
            out.p[flat] = num / den;
          }
        }
      }
      return out;
    }
    case Estimand::Kind::Unidentifiable:
      throw validation_error("estimand is not evaluable: unidentifiable");
  }
  throw std::logic_error("eval_node: bad kind");
}

}  // namespace

Distribution evaluate_estimand(const Estimand& e, const Distribution& joint) {
  if (!e.identifiable()) throw validation_error("estimand is not evaluable: unidentifiable");
  Distribution raw = eval_node(e, joint);
  // raw ranges over a subset of query_outcome ∪ query_do; broadcast missing axes
  std::vector<std::string> out_vars = e.query_outcome.names();
  std::vector<std::string> cond_vars = e.query_do.names();
  std::vector<int> out_cards, cond_cards;
  for (const auto& v : out_vars) out_cards.push_back(joint.card_of(v));
  for (const auto& v : cond_vars) cond_cards.push_back(joint.card_of(v));
  Distribution out(out_vars, out_cards, cond_vars, cond_cards);
  // Position of each raw variable in (cond, out) coordinates. Free variables
  // beyond the query come from the rule-3 augmentation step; their value is
  // provably irrelevant, so they are pinned to category 0.
  std::vector<int> raw_pos;
  for (const auto& rv : raw.vars) {
    auto ci = std::find(cond_vars.begin(), cond_vars.end(), rv);
    if (ci != cond_vars.end()) {
      raw_pos.push_back((int)(ci - cond_vars.begin()));
    } else {
      auto oi = std::find(out_vars.begin(), out_vars.end(), rv);
      raw_pos.push_back(oi == out_vars.end()
                            ? -1
                            : (int)cond_vars.size() + (int)(oi - out_vars.begin()));
    }
  }
  AssignmentIterator cit(cond_cards);
  for (; !cit.done(); cit.next()) {
    AssignmentIterator oit(out_cards);
    double sum = 0;
    std::vector<double> cells;
    for (; !oit.done(); oit.next()) {
      std::vector<int> sub(raw.vars.size());
      for (std::size_t i = 0; i < raw.vars.size(); i++) {
        int pos = raw_pos[i];
        sub[i] = pos < 0 ? 0
                         : (pos < (int)cond_vars.size() ? cit.values()[pos]
                                                        : oit.values()[pos - cond_vars.size()]);
      }
      double val = raw.p[flat_index(raw.cards, sub)];
      cells.push_back(val);
      sum += val;
    }
    if (std::abs(sum - 1.0) > 1e-12 && sum > 0) {
      // tolerate only float dust; anything larger means a broken estimand
      if (std::abs(sum - 1.0) > 1e-9)
        throw numeric_error("estimand slice sums to " + std::to_string(sum));
    }
    if (sum <= 0) throw numeric_error("estimand slice has zero mass");
    AssignmentIterator oit2(out_cards);
    for (std::size_t k = 0; !oit2.done(); oit2.next(), k++)
      out.at(oit2.values(), cit.values()) = cells[k] / sum;
  }
  return out;
}

std::vector<std::pair<VariableSet, Distribution>> tian_c_factors(const Admg& g,
                                                                 const Distribution& joint) {
  if (joint.vars.size() != g.size() || !joint.cond_vars.empty())
    throw validation_error("tian_c_factors: joint must cover exactly the graph variables");
  std::vector<std::string> order;
  for (int v : g.topological_order()) order.push_back(g.name_of(v));

  std::vector<std::pair<VariableSet, Distribution>> out;
  for (const auto& comp : c_components(g)) {
    // predecessors of the component's members in topological order
    VariableSet scope;
    {
      VariableSet seen;
      for (const auto& name : order) {
        if (comp.contains(name)) scope = scope.unite(seen).unite(VariableSet{name});
        seen.insert(name);
      }
    }
    // chain product over members given all their predecessors
    Distribution chain;
    bool first = true;
    VariableSet preds;
    for (const auto& name : order) {
      if (comp.contains(name)) {
        VariableSet keep = preds;
        keep.insert(name);
        Distribution term = joint.marginal(keep).condition(preds);
        // flatten to an unconditioned table for multiplication
        Distribution flat_term(term.cond_vars, term.cond_cards);
        {
          std::vector<std::string> vs = term.cond_vars;
          std::vector<int> cs = term.cond_cards;
          vs.insert(vs.end(), term.vars.begin(), term.vars.end());
          cs.insert(cs.end(), term.cards.begin(), term.cards.end());
          flat_term = Distribution(vs, cs);
          flat_term.p = term.p;
        }
        if (first) {
          chain = flat_term;
          first = false;
        } else {
          // multiply, broadcasting over the union of variables
          VariableSet uv = VariableSet(chain.vars).unite(VariableSet(flat_term.vars));
          std::vector<std::string> vars = uv.names();
          std::vector<int> cards;
          for (const auto& v : vars) {
            bool found = false;
            for (std::size_t i = 0; i < chain.vars.size() && !found; i++)
              if (chain.vars[i] == v) {
                cards.push_back(chain.cards[i]);
                found = true;
              }
            for (std::size_t i = 0; i < flat_term.vars.size() && !found; i++)
              if (flat_term.vars[i] == v) {
                cards.push_back(flat_term.cards[i]);
                found = true;
              }
          }
          Distribution merged(vars, cards);
          std::vector<int> pos_a, pos_b;
          for (const auto& v : chain.vars)
            pos_a.push_back((int)(std::find(vars.begin(), vars.end(), v) - vars.begin()));
          for (const auto& v : flat_term.vars)
            pos_b.push_back((int)(std::find(vars.begin(), vars.end(), v) - vars.begin()));
          AssignmentIterator it(cards);
          std::vector<int> sub;
          for (std::size_t flat = 0; !it.done(); it.next(), flat++) {
            sub.clear();
            for (int p : pos_a) sub.push_back(it.values()[p]);
            double a = chain.p[flat_index(chain.cards, sub)];
            sub.clear();
            for (int p : pos_b) sub.push_back(it.values()[p]);
            double b = flat_term.p[flat_index(flat_term.cards, sub)];
            merged.p[flat] = a * b;
          }
          chain = std::move(merged);
        }
      }
      preds.insert(name);
    }
    // project onto (comp | pa(comp)) by joint-weighted averaging over the
    // remaining predecessors; the chain value is constant across them
    VariableSet pa = parents_of_set(g, comp);
    std::vector<std::string> cvars, pvars;
    std::vector<int> ccards, pcards;
    for (int v : g.indices_of(comp)) {
      cvars.push_back(g.name_of(v));
      ccards.push_back(joint.card_of(g.name_of(v)));
    }
    for (int v : g.indices_of(pa)) {
      pvars.push_back(g.name_of(v));
      pcards.push_back(joint.card_of(g.name_of(v)));
    }
    Distribution factor(cvars, ccards, pvars, pcards);
    Distribution weight_src = joint.marginal(scope);
    std::vector<double> wsum(factor.p.size(), 0.0);
    AssignmentIterator it(chain.cards);
    for (std::size_t flat = 0; !it.done(); it.next(), flat++) {
      std::vector<int> cvals(cvars.size()), pvals(pvars.size()), wvals(weight_src.vars.size());
      for (std::size_t i = 0; i < chain.vars.size(); i++) {
        for (std::size_t k = 0; k < cvars.size(); k++)
          if (cvars[k] == chain.vars[i]) cvals[k] = it.values()[i];
        for (std::size_t k = 0; k < pvars.size(); k++)
          if (pvars[k] == chain.vars[i]) pvals[k] = it.values()[i];
        for (std::size_t k = 0; k < weight_src.vars.size(); k++)
          if (weight_src.vars[k] == chain.vars[i]) wvals[k] = it.values()[i];
      }
      double w = weight_src.p[flat_index(weight_src.cards, wvals)];
      if (w <= 0) continue;
      std::size_t idx = flat_index(factor.cond_cards, pvals) * factor.table_size() +
                        flat_index(factor.cards, cvals);
      factor.p[idx] += w * chain.p[flat];
      wsum[idx] += w;
    }
    // the chain value is constant across predecessor extensions of one
    // (comp, pa) cell, so the weighted average recovers it exactly
    for (std::size_t i = 0; i < factor.p.size(); i++)
      factor.p[i] = wsum[i] > 0 ? factor.p[i] / wsum[i] : 0.0;
    out.emplace_back(comp, std::move(factor));
  }
  return out;
}

}  // namespace modcausal
