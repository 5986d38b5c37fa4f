#include "modcausal/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include "modcausal/rng.hpp"

namespace modcausal {

LabeledData LabeledData::from_dataset(Dataset d) {
  LabeledData out;
  out.intervention = d.intervention;
  out.rows = std::move(d);
  return out;
}

LabeledData LabeledData::from_exact(Distribution exact, InterventionSpec intervention) {
  LabeledData out;
  out.intervention = std::move(intervention);
  out.exact = std::move(exact);
  return out;
}

Distribution empirical_conditional(const Dataset& d, const VariableSet& target,
                                   const VariableSet& given) {
  if (d.n_rows == 0) throw validation_error("empirical_conditional: empty dataset");
  if (!d.covers(target) || !d.covers(given))
    throw validation_error("empirical_conditional: dataset does not cover the requested variables");
  std::vector<std::string> tvars = target.names(), gvars = given.names();
  std::vector<int> tcards, gcards, tcols, gcols;
  for (const auto& v : tvars) {
    tcols.push_back(d.column_of(v));
    tcards.push_back(d.cards[tcols.back()]);
  }
  for (const auto& v : gvars) {
    gcols.push_back(d.column_of(v));
    gcards.push_back(d.cards[gcols.back()]);
  }
  Distribution out(tvars, tcards, gvars, gcards);
  std::size_t ts = out.table_size();
  std::vector<int> tv(tcols.size()), gv(gcols.size());
  for (std::size_t r = 0; r < d.n_rows; r++) {
    for (std::size_t i = 0; i < tcols.size(); i++) tv[i] = d.at(r, tcols[i]);
    for (std::size_t i = 0; i < gcols.size(); i++) gv[i] = d.at(r, gcols[i]);
    out.p[flat_index(gcards, gv) * ts + flat_index(tcards, tv)] += 1.0;
  }
  constexpr double kSmooth = 1e-9;
  for (std::size_t s = 0; s < out.slice_count(); s++) {
    double sum = 0;
    for (std::size_t i = 0; i < ts; i++) sum += out.p[s * ts + i];
    if (sum <= 0) {
      for (std::size_t i = 0; i < ts; i++) out.p[s * ts + i] = 1.0 / (double)ts;
    } else {
      for (std::size_t i = 0; i < ts; i++)
        out.p[s * ts + i] = (out.p[s * ts + i] + kSmooth) / (sum + kSmooth * ts);
    }
  }
  return out;
}

namespace {

constexpr double kTiny = 1e-300;

// One directive compiled into a matching problem: a weighted family of target
// tables plus the plumbing to evaluate the model's interventional table for
// each conditioning slice.
struct Problem {
  std::size_t directive_index = 0;
  std::vector<int> y_vars;  // graph indices of the joint being matched
  std::vector<int> y_cards;
  std::vector<int> cond_vars;  // conditioning parents + randomized label vars
  std::vector<int> cond_cards;
  std::vector<int> fixed_vars;  // fixed-value intervention columns
  std::vector<int> fixed_vals;
  std::vector<double> target;  // [n_slices][n_cells]
  std::vector<double> weight;  // [n_slices]
  std::size_t n_cells = 1, n_slices = 1;

  std::vector<int> edges;  // bidirected edge ids whose noise is enumerated
  std::vector<int> edge_cards;
  std::size_t n_ucfg = 1;
  struct Plumb {
    int var;
    std::vector<int> pa_from_y;     // index into y_vars or -1
    std::vector<int> pa_from_cond;  // index into cond_vars or -1
    std::vector<int> pa_fixed;      // fixed value or -1
    std::vector<int> pa_cards;
    std::size_t u_size = 1;  // product of the variable's incident edge cards
  };
  std::vector<Plumb> plumb;
  std::vector<std::vector<int>> var_uflat;  // [y-var][global ucfg] -> local u flat
};

// e-marginalized row probabilities and cached softmax rows of one mechanism
struct PerVarTensors {
  std::vector<double> marg;  // [ctx * card + c], ctx = (pa, u) flat
  std::vector<double> rows;  // [row * card + c]
  int card = 0;
};

void compute_var_tensors(const Dcm& dcm, int var, PerVarTensors& t) {
  const auto& m = dcm.mechanism(var);
  int card = m.out_card, ecard = m.e_card;
  std::size_t n_rows = m.n_rows();
  t.card = card;
  t.rows.assign(n_rows * card, 0.0);
  t.marg.assign((n_rows / ecard) * card, 0.0);
  std::size_t u_size = 1;
  for (std::size_t i = 0; i < dcm.incident_edges(var).size(); i++)
    u_size *= m.row_cards[m.row_cards.size() - 1 - i];
  std::size_t pa_size = n_rows / (u_size * ecard);
  for (std::size_t row = 0; row < n_rows; row++) {
    const double* lg = m.logits.data() + row * card;
    double mx = lg[0];
    for (int c = 1; c < card; c++) mx = std::max(mx, lg[c]);
    double sum = 0;
    double* dst = t.rows.data() + row * card;
    for (int c = 0; c < card; c++) {
      dst[c] = std::exp(lg[c] - mx);
      sum += dst[c];
    }
    for (int c = 0; c < card; c++) dst[c] /= sum;
  }
  for (std::size_t pa = 0; pa < pa_size; pa++)
    for (int e = 0; e < ecard; e++)
      for (std::size_t u = 0; u < u_size; u++) {
        std::size_t row = (pa * ecard + e) * u_size + u;
        std::size_t ctx = pa * u_size + u;
        for (int c = 0; c < card; c++) t.marg[ctx * card + c] += t.rows[row * card + c] / ecard;
      }
}

void fill_from_rows(const Dcm& dcm, Problem& p, const Dataset& rows) {
  const Admg& g = dcm.graph();
  std::vector<int> y_cols, c_cols;
  for (int v : p.y_vars) y_cols.push_back(rows.column_of(g.name_of(v)));
  for (int v : p.cond_vars) c_cols.push_back(rows.column_of(g.name_of(v)));
  std::vector<double> counts(p.n_slices * p.n_cells, 0.0);
  std::vector<int> yv(y_cols.size()), cv(c_cols.size());
  for (std::size_t r = 0; r < rows.n_rows; r++) {
    for (std::size_t i = 0; i < y_cols.size(); i++) yv[i] = rows.at(r, y_cols[i]);
    for (std::size_t i = 0; i < c_cols.size(); i++) cv[i] = rows.at(r, c_cols[i]);
    counts[flat_index(p.cond_cards, cv) * p.n_cells + flat_index(p.y_cards, yv)] += 1.0;
  }
  constexpr double kSmooth = 1e-9;
  p.target.assign(counts.size(), 0.0);
  p.weight.assign(p.n_slices, 0.0);
  for (std::size_t s = 0; s < p.n_slices; s++) {
    double sum = 0;
    for (std::size_t i = 0; i < p.n_cells; i++) sum += counts[s * p.n_cells + i];
    p.weight[s] = sum / (double)rows.n_rows;
    if (sum > 0)
      for (std::size_t i = 0; i < p.n_cells; i++)
        p.target[s * p.n_cells + i] =
            (counts[s * p.n_cells + i] + kSmooth) / (sum + kSmooth * p.n_cells);
  }
}

void fill_from_exact(const Dcm& dcm, Problem& p, const Distribution& exact) {
  const Admg& g = dcm.graph();
  std::vector<int> y_pos, c_pos;  // >= 0: exact var axis; -(k+1): exact conditioning axis k
  for (int v : p.y_vars) {
    auto it = std::find(exact.vars.begin(), exact.vars.end(), g.name_of(v));
    if (it == exact.vars.end())
      throw validation_error("exact data does not cover target '" + g.name_of(v) + "'");
    y_pos.push_back((int)(it - exact.vars.begin()));
  }
  for (int v : p.cond_vars) {
    const std::string& name = g.name_of(v);
    auto it = std::find(exact.vars.begin(), exact.vars.end(), name);
    if (it != exact.vars.end()) {
      c_pos.push_back((int)(it - exact.vars.begin()));
    } else {
      auto ct = std::find(exact.cond_vars.begin(), exact.cond_vars.end(), name);
      if (ct == exact.cond_vars.end())
        throw validation_error("exact data does not cover conditioning '" + name + "'");
      c_pos.push_back(-1 - (int)(ct - exact.cond_vars.begin()));
    }
  }
  std::vector<double> mass(p.n_slices * p.n_cells, 0.0);
  double label_slices = (double)exact.slice_count();
  std::size_t ts = exact.table_size();
  std::vector<int> yv(y_pos.size()), cv(c_pos.size());
  AssignmentIterator lit(exact.cond_cards);
  for (std::size_t lflat = 0; !lit.done(); lit.next(), lflat++) {
    AssignmentIterator it(exact.cards);
    for (std::size_t flat = 0; !it.done(); it.next(), flat++) {
      double w = exact.p[lflat * ts + flat] / label_slices;
      if (w <= 0) continue;
      for (std::size_t i = 0; i < y_pos.size(); i++) yv[i] = it.values()[y_pos[i]];
      for (std::size_t i = 0; i < c_pos.size(); i++)
        cv[i] = c_pos[i] >= 0 ? it.values()[c_pos[i]] : lit.values()[-1 - c_pos[i]];
      mass[flat_index(p.cond_cards, cv) * p.n_cells + flat_index(p.y_cards, yv)] += w;
    }
  }
  p.target.assign(mass.size(), 0.0);
  p.weight.assign(p.n_slices, 0.0);
  for (std::size_t s = 0; s < p.n_slices; s++) {
    double sum = 0;
    for (std::size_t i = 0; i < p.n_cells; i++) sum += mass[s * p.n_cells + i];
    p.weight[s] = sum;
    if (sum > 0)
      for (std::size_t i = 0; i < p.n_cells; i++)
        p.target[s * p.n_cells + i] = mass[s * p.n_cells + i] / sum;
  }
}

bool build_problem(const Dcm& dcm, const PlanStage& stage, const PlanDirective& dir,
                   const LabeledData& data, FitConfig::Mode mode, Problem& p, std::string& note) {
  const Admg& g = dcm.graph();
  VariableSet label = dir.label;
  VariableSet y_set = stage.hnode.unite(dir.ancestor_set).minus(label);
  VariableSet cond_set = dir.conditioning_parents.minus(label).unite(data.intervention.randomized);
  if (y_set.empty()) {
    note = "h-node fully intervened";
    return false;
  }
  VariableSet need = y_set.unite(cond_set);
  if (mode == FitConfig::Mode::SampleBased) {
    if (!data.rows) {
      note = "no sampled rows for this label";
      return false;
    }
    if (!data.rows->covers(need)) {
      note = "dataset lacks column " +
             need.minus(VariableSet(data.rows->variables)).names().front();
      return false;
    }
  } else {
    if (!data.exact) {
      note = "no exact distribution for this label";
      return false;
    }
    VariableSet have = VariableSet(data.exact->vars).unite(VariableSet(data.exact->cond_vars));
    if (!need.subset_of(have)) {
      note = "exact data lacks " + need.minus(have).names().front();
      return false;
    }
  }

  for (int v : g.indices_of(y_set)) {
    p.y_vars.push_back(v);
    p.y_cards.push_back(dcm.card(v));
    p.n_cells *= dcm.card(v);
  }
  for (int v : g.indices_of(cond_set)) {
    p.cond_vars.push_back(v);
    p.cond_cards.push_back(dcm.card(v));
    p.n_slices *= dcm.card(v);
  }
  for (auto& [name, val] : data.intervention.fixed.values) {
    p.fixed_vars.push_back(g.index_of(name));
    p.fixed_vals.push_back(val);
  }

  std::vector<char> in_y(g.size(), 0);
  for (int v : p.y_vars) in_y[v] = 1;
  for (std::size_t e = 0; e < g.bidirected_edges().size(); e++) {
    auto [a, b] = g.bidirected_edges()[e];
    if (in_y[a] || in_y[b]) {
      p.edges.push_back((int)e);
      p.edge_cards.push_back(dcm.confounder((int)e).card);
      p.n_ucfg *= dcm.confounder((int)e).card;
    }
  }

  for (int v : p.y_vars) {
    Problem::Plumb pl;
    pl.var = v;
    for (int parent : g.parents(v)) {
      pl.pa_cards.push_back(dcm.card(parent));
      int from_y = -1, from_c = -1, fixed = -1;
      for (std::size_t i = 0; i < p.y_vars.size(); i++)
        if (p.y_vars[i] == parent) from_y = (int)i;
      for (std::size_t i = 0; i < p.cond_vars.size(); i++)
        if (p.cond_vars[i] == parent) from_c = (int)i;
      for (std::size_t i = 0; i < p.fixed_vars.size(); i++)
        if (p.fixed_vars[i] == parent) fixed = p.fixed_vals[i];
      if (from_y < 0 && from_c < 0 && fixed < 0)
        throw std::logic_error("directive parent '" + g.name_of(parent) +
                               "' is neither matched nor conditioned");
      pl.pa_from_y.push_back(from_y);
      pl.pa_from_cond.push_back(from_c);
      pl.pa_fixed.push_back(fixed);
    }
    for (int e : dcm.incident_edges(v)) pl.u_size *= dcm.confounder(e).card;
    p.plumb.push_back(std::move(pl));
  }
  p.var_uflat.assign(p.y_vars.size(), std::vector<int>(p.n_ucfg, 0));
  AssignmentIterator uit(p.edge_cards);
  for (std::size_t uflat = 0; !uit.done(); uit.next(), uflat++) {
    for (std::size_t vi = 0; vi < p.plumb.size(); vi++) {
      std::size_t local = 0;
      for (int e : dcm.incident_edges(p.plumb[vi].var)) {
        int card = dcm.confounder(e).card;
        int val = 0;
        for (std::size_t k = 0; k < p.edges.size(); k++)
          if (p.edges[k] == e) val = uit.values()[k];
        local = local * card + val;
      }
      p.var_uflat[vi][uflat] = (int)local;
    }
  }

  if (mode == FitConfig::Mode::SampleBased)
    fill_from_rows(dcm, p, *data.rows);
  else
    fill_from_exact(dcm, p, *data.exact);
  return true;
}

std::vector<Problem> compile_stage(const Dcm& model, const PlanStage& stage,
                                   const std::vector<LabeledData>& data, FitConfig::Mode mode,
                                   StageReport& report) {
  std::vector<Problem> problems;
  for (const auto& dir : stage.directives) {
    DirectiveReport dr;
    dr.label = dir.label;
    if (!dir.usable) {
      dr.note = dir.note.empty() ? "unusable" : dir.note;
      report.directives.push_back(dr);
      continue;
    }
    const LabeledData* entry = nullptr;
    for (const auto& d : data)
      if (d.label() == dir.label) entry = &d;
    if (!entry) {
      std::string label_text = "{";
      for (const auto& n : dir.label) label_text += n + " ";
      throw validation_error("no dataset provided for label " + label_text + "}");
    }
    Problem p;
    std::string note;
    if (!build_problem(model, stage, dir, *entry, mode, p, note)) {
      dr.note = note;
      report.directives.push_back(dr);
      continue;
    }
    p.directive_index = report.directives.size();
    dr.used = true;
    std::size_t unseen = 0;
    for (double w : p.weight)
      if (w <= 0) unseen++;
    if (unseen > 0)
      dr.note = std::to_string(unseen) + " of " + std::to_string(p.n_slices) +
                " conditioning slices unseen (zero weight)";
    report.directives.push_back(dr);
    problems.push_back(std::move(p));
  }
  return problems;
}

// Decodes the conditioning-slice values of `s` into cv.
void decode_slice(const Problem& p, std::size_t s, std::vector<int>& cv) {
  std::size_t rem = s;
  for (int i = (int)p.cond_cards.size() - 1; i >= 0; i--) {
    cv[i] = (int)(rem % p.cond_cards[i]);
    rem /= p.cond_cards[i];
  }
}

std::size_t parent_context(const Problem::Plumb& pl, const std::vector<int>& yv,
                           const std::vector<int>& cv) {
  std::size_t idx = 0;
  for (std::size_t k = 0; k < pl.pa_cards.size(); k++) {
    int val = pl.pa_from_y[k] >= 0
                  ? yv[pl.pa_from_y[k]]
                  : (pl.pa_from_cond[k] >= 0 ? cv[pl.pa_from_cond[k]] : pl.pa_fixed[k]);
    idx = idx * pl.pa_cards[k] + val;
  }
  return idx;
}

// Forward pass (and optionally the gradient w.r.t. marginal rows and edge
// priors) of one problem.
void eval_problem(const Dcm& dcm, const Problem& p,
                  const std::map<int, PerVarTensors>& tensors, double& ce, double& dir_tvd,
                  std::map<int, std::vector<double>>* dmarg,
                  std::map<int, std::vector<double>>* dprior) {
  std::vector<std::vector<double>> prior;
  for (int e : p.edges) prior.push_back(dcm.confounder_prior(e));
  std::vector<double> prior_prod(p.n_ucfg, 1.0);
  {
    AssignmentIterator uit(p.edge_cards);
    for (std::size_t uflat = 0; !uit.done(); uit.next(), uflat++)
      for (std::size_t e = 0; e < p.edges.size(); e++)
        prior_prod[uflat] *= prior[e][uit.values()[e]];
  }
  std::vector<int> yv(p.y_vars.size()), cv(p.cond_vars.size());
  std::vector<std::size_t> pa_flat(p.y_vars.size());
  std::vector<double> factor(p.y_vars.size());
  std::vector<double> q_cells(p.n_cells);
  std::vector<std::vector<int>> ucfg_values;
  if (dprior) {
    AssignmentIterator uit(p.edge_cards);
    for (; !uit.done(); uit.next()) ucfg_values.push_back(uit.values());
  }

  dir_tvd = 0;
  for (std::size_t s = 0; s < p.n_slices; s++) {
    if (p.weight[s] <= 0) continue;
    decode_slice(p, s, cv);
    double slice_l1 = 0;
    AssignmentIterator yit(p.y_cards);
    for (std::size_t cell = 0; !yit.done(); yit.next(), cell++) {
      for (std::size_t i = 0; i < yv.size(); i++) yv[i] = yit.values()[i];
      for (std::size_t vi = 0; vi < p.plumb.size(); vi++)
        pa_flat[vi] = parent_context(p.plumb[vi], yv, cv);
      double q = 0;
      for (std::size_t uflat = 0; uflat < p.n_ucfg; uflat++) {
        double term = prior_prod[uflat];
        for (std::size_t vi = 0; vi < p.plumb.size(); vi++) {
          const auto& pl = p.plumb[vi];
          std::size_t ctx = pa_flat[vi] * pl.u_size + p.var_uflat[vi][uflat];
          term *= tensors.at(pl.var).marg[ctx * p.y_cards[vi] + yv[vi]];
        }
        q += term;
      }
      q_cells[cell] = q;
      double t = p.target[s * p.n_cells + cell];
      slice_l1 += std::abs(t - q);
      if (t > 0) ce += -p.weight[s] * t * std::log(std::max(q, kTiny));
    }
    dir_tvd = std::max(dir_tvd, 0.5 * slice_l1);
    if (!dmarg) continue;

    AssignmentIterator yit2(p.y_cards);
    for (std::size_t cell = 0; !yit2.done(); yit2.next(), cell++) {
      double t = p.target[s * p.n_cells + cell];
      if (t <= 0) continue;
      double coef = -p.weight[s] * t / std::max(q_cells[cell], kTiny);
      for (std::size_t i = 0; i < yv.size(); i++) yv[i] = yit2.values()[i];
      for (std::size_t vi = 0; vi < p.plumb.size(); vi++)
        pa_flat[vi] = parent_context(p.plumb[vi], yv, cv);
      for (std::size_t uflat = 0; uflat < p.n_ucfg; uflat++) {
        double term = prior_prod[uflat];
        for (std::size_t vi = 0; vi < p.plumb.size(); vi++) {
          const auto& pl = p.plumb[vi];
          std::size_t ctx = pa_flat[vi] * pl.u_size + p.var_uflat[vi][uflat];
          factor[vi] = tensors.at(pl.var).marg[ctx * p.y_cards[vi] + yv[vi]];
          term *= factor[vi];
        }
        for (std::size_t vi = 0; vi < p.plumb.size(); vi++) {
          const auto& pl = p.plumb[vi];
          auto it = dmarg->find(pl.var);
          if (it == dmarg->end()) continue;
          std::size_t ctx = pa_flat[vi] * pl.u_size + p.var_uflat[vi][uflat];
          double excl;
          if (factor[vi] > kTiny) {
            excl = term / factor[vi];
          } else {
            excl = prior_prod[uflat];
            for (std::size_t vj = 0; vj < p.plumb.size(); vj++)
              if (vj != vi) excl *= factor[vj];
          }
          it->second[ctx * p.y_cards[vi] + yv[vi]] += coef * excl;
        }
        if (dprior && !p.edges.empty()) {
          for (std::size_t e = 0; e < p.edges.size(); e++) {
            auto it = dprior->find(p.edges[e]);
            if (it == dprior->end()) continue;
            double pe = prior[e][ucfg_values[uflat][e]];
            if (pe > kTiny) it->second[ucfg_values[uflat][e]] += coef * term / pe;
          }
        }
      }
    }
  }
}

struct LogitGrads {
  std::map<int, std::vector<double>> mech;   // var -> per-logit gradient
  std::map<int, std::vector<double>> prior;  // edge -> per-logit gradient
};

// Evaluates all problems; when `grads` is set, returns gradients mapped into
// logit space (through the softmax of each noise row and of each prior).
double stage_eval(const Dcm& model, std::vector<Problem>& problems,
                  const std::vector<int>& train_vars, const std::vector<int>& train_edges,
                  StageReport* report, double& max_tvd, LogitGrads* grads) {
  std::set<int> active_vars;
  for (const auto& p : problems)
    for (int v : p.y_vars) active_vars.insert(v);
  std::map<int, PerVarTensors> tensors;
  for (int v : active_vars) compute_var_tensors(model, v, tensors[v]);

  std::map<int, std::vector<double>> dmarg, dprior;
  if (grads) {
    for (int v : train_vars)
      if (active_vars.count(v)) dmarg[v].assign(tensors[v].marg.size(), 0.0);
    for (int e : train_edges) dprior[e].assign(model.confounder(e).card, 0.0);
  }

  double ce = 0;
  max_tvd = 0;
  for (auto& p : problems) {
    double dir_tvd = 0, dir_ce_before = ce;
    eval_problem(model, p, tensors, ce, dir_tvd, grads ? &dmarg : nullptr,
                 grads ? &dprior : nullptr);
    max_tvd = std::max(max_tvd, dir_tvd);
    if (report) {
      report->directives[p.directive_index].final_tvd = dir_tvd;
      report->directives[p.directive_index].final_ce = ce - dir_ce_before;
    }
  }

  if (grads) {
    for (auto& [v, gm] : dmarg) {
      const auto& mech = model.mechanism(v);
      const auto& tv = tensors[v];
      int card = mech.out_card, ecard = mech.e_card;
      std::size_t u_size = 1;
      for (std::size_t i = 0; i < model.incident_edges(v).size(); i++)
        u_size *= mech.row_cards[mech.row_cards.size() - 1 - i];
      std::size_t pa_size = mech.n_rows() / (u_size * ecard);
      auto& out = grads->mech[v];
      out.assign(mech.logits.size(), 0.0);
      for (std::size_t pa = 0; pa < pa_size; pa++)
        for (std::size_t u = 0; u < u_size; u++) {
          std::size_t ctx = pa * u_size + u;
          const double* gctx = gm.data() + ctx * card;
          bool any = false;
          for (int c = 0; c < card; c++) any = any || gctx[c] != 0;
          if (!any) continue;
          for (int e = 0; e < ecard; e++) {
            std::size_t row = (pa * ecard + e) * u_size + u;
            const double* se = tv.rows.data() + row * card;
            double dot = 0;
            for (int c = 0; c < card; c++) dot += se[c] * gctx[c];
            for (int c = 0; c < card; c++)
              out[row * card + c] = se[c] * (gctx[c] - dot) / ecard;
          }
        }
    }
    for (auto& [e, gp] : dprior) {
      auto pr = model.confounder_prior(e);
      auto& out = grads->prior[e];
      out.assign(pr.size(), 0.0);
      double dot = 0;
      for (std::size_t u = 0; u < pr.size(); u++) dot += pr[u] * gp[u];
      for (std::size_t u = 0; u < pr.size(); u++) out[u] = pr[u] * (gp[u] - dot);
    }
  }
  return ce;
}

struct AdamState {
  std::vector<double> m, v;
  void init(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
};

void adam_update(std::vector<double>& params, const std::vector<double>& grad, AdamState& st,
                 const FitConfig& cfg, double corr) {
  for (std::size_t k = 0; k < params.size(); k++) {
    st.m[k] = cfg.beta1 * st.m[k] + (1 - cfg.beta1) * grad[k];
    st.v[k] = cfg.beta2 * st.v[k] + (1 - cfg.beta2) * grad[k] * grad[k];
    params[k] -= cfg.learning_rate * corr * st.m[k] / (std::sqrt(st.v[k]) + cfg.adam_eps);
  }
}

// Limited-memory BFGS on the stage cross-entropy over the trainable logits.
// Used to polish EM solutions to tight tolerances; returns the best TVD seen.
double lbfgs_polish(Dcm& model, std::vector<Problem>& problems,
                    const std::vector<int>& train_vars, const std::vector<int>& train_edges,
                    double tol, int max_iters) {
  auto pack = [&](std::vector<double>& x) {
    x.clear();
    for (int v : train_vars) {
      const auto& lg = model.mechanism(v).logits;
      x.insert(x.end(), lg.begin(), lg.end());
    }
    for (int e : train_edges) {
      const auto& lg = model.confounder(e).prior_logits;
      x.insert(x.end(), lg.begin(), lg.end());
    }
  };
  auto unpack = [&](const std::vector<double>& x) {
    std::size_t pos = 0;
    for (int v : train_vars) {
      auto& lg = model.mechanism(v).logits;
      std::copy(x.begin() + pos, x.begin() + pos + lg.size(), lg.begin());
      pos += lg.size();
    }
    for (int e : train_edges) {
      auto& lg = model.confounder(e).prior_logits;
      std::copy(x.begin() + pos, x.begin() + pos + lg.size(), lg.begin());
      pos += lg.size();
    }
  };
  auto eval = [&](double& tvd_out, std::vector<double>* grad_out) {
    LogitGrads grads;
    double ce = stage_eval(model, problems, train_vars, train_edges, nullptr, tvd_out,
                           grad_out ? &grads : nullptr);
    if (grad_out) {
      grad_out->clear();
      for (int v : train_vars) {
        auto it = grads.mech.find(v);
        if (it != grads.mech.end())
          grad_out->insert(grad_out->end(), it->second.begin(), it->second.end());
        else
          grad_out->insert(grad_out->end(), model.mechanism(v).logits.size(), 0.0);
      }
      for (int e : train_edges) {
        auto it = grads.prior.find(e);
        if (it != grads.prior.end())
          grad_out->insert(grad_out->end(), it->second.begin(), it->second.end());
        else
          grad_out->insert(grad_out->end(), model.confounder(e).prior_logits.size(), 0.0);
      }
    }
    return ce;
  };

  std::vector<double> x, g;
  pack(x);
  double cur_tvd = 0;
  double f = eval(cur_tvd, &g);
  double best_tvd = cur_tvd;
  std::vector<double> best_x = x;

  const int history = 8;
  std::vector<std::vector<double>> s_hist, y_hist;
  std::vector<double> rho_hist;
  std::size_t n = x.size();
  std::vector<double> dir(n), x_new(n), g_new(n);
  double f_checkpoint = f;
  for (int iter = 0; iter < max_iters && best_tvd > tol; iter++) {
    if (iter % 50 == 49) {
      if (f_checkpoint - f < 1e-14) break;  // objective progress exhausted
      f_checkpoint = f;
    }
    // two-loop recursion
    dir = g;
    std::vector<double> alpha(s_hist.size());
    for (int k = (int)s_hist.size() - 1; k >= 0; k--) {
      double a = 0;
      for (std::size_t i = 0; i < n; i++) a += s_hist[k][i] * dir[i];
      a *= rho_hist[k];
      alpha[k] = a;
      for (std::size_t i = 0; i < n; i++) dir[i] -= a * y_hist[k][i];
    }
    if (!s_hist.empty()) {
      double sy = 0, yy = 0;
      const auto& s = s_hist.back();
      const auto& y = y_hist.back();
      for (std::size_t i = 0; i < n; i++) {
        sy += s[i] * y[i];
        yy += y[i] * y[i];
      }
      if (yy > 0) {
        double scale = sy / yy;
        for (std::size_t i = 0; i < n; i++) dir[i] *= scale;
      }
    }
    for (int k = 0; k < (int)s_hist.size(); k++) {
      double b = 0;
      for (std::size_t i = 0; i < n; i++) b += y_hist[k][i] * dir[i];
      b *= rho_hist[k];
      for (std::size_t i = 0; i < n; i++) dir[i] += s_hist[k][i] * (alpha[k] - b);
    }
    double g_dot_dir = 0;
    for (std::size_t i = 0; i < n; i++) g_dot_dir += g[i] * dir[i];
    if (g_dot_dir <= 0) {  // not a descent direction: reset to gradient
      dir = g;
      g_dot_dir = 0;
      for (std::size_t i = 0; i < n; i++) g_dot_dir += g[i] * g[i];
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      if (g_dot_dir <= 1e-30) break;
    }
    // backtracking line search on f
    double step = 1.0;
    double f_new = f;
    double tvd_new = cur_tvd;
    bool moved = false;
    for (int ls = 0; ls < 24; ls++) {
      for (std::size_t i = 0; i < n; i++) x_new[i] = x[i] - step * dir[i];
      unpack(x_new);
      double t = 0;
      double fn = eval(t, nullptr);
      if (std::isfinite(fn) && fn <= f - 1e-6 * step * g_dot_dir) {
        f_new = fn;
        tvd_new = t;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
    unpack(x_new);
    double t2 = 0;
    f_new = eval(t2, &g_new);
    tvd_new = t2;
    std::vector<double> s_vec(n), y_vec(n);
    double sy = 0;
    for (std::size_t i = 0; i < n; i++) {
      s_vec[i] = x_new[i] - x[i];
      y_vec[i] = g_new[i] - g[i];
      sy += s_vec[i] * y_vec[i];
    }
    if (sy > 1e-18) {
      s_hist.push_back(std::move(s_vec));
      y_hist.push_back(std::move(y_vec));
      rho_hist.push_back(1.0 / sy);
      if ((int)s_hist.size() > history) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    cur_tvd = tvd_new;
    if (cur_tvd < best_tvd) {
      best_tvd = cur_tvd;
      best_x = x;
    }
  }
  unpack(best_x);
  return best_tvd;
}

std::pair<std::vector<int>, std::vector<int>> trainable_sets(const Dcm& model) {
  std::vector<int> train_vars, train_edges;
  for (std::size_t v = 0; v < model.graph().size(); v++)
    if (model.trainable((int)v)) train_vars.push_back((int)v);
  for (std::size_t e = 0; e < model.graph().bidirected_edges().size(); e++)
    if (model.edge_prior_trainable((int)e)) train_edges.push_back((int)e);
  return {train_vars, train_edges};
}

std::vector<char> freeze_outside(Dcm& model, const VariableSet& hnode) {
  const Admg& g = model.graph();
  std::vector<char> saved(g.size());
  for (std::size_t v = 0; v < g.size(); v++) {
    saved[v] = model.trainable((int)v);
    if (!hnode.contains(g.name_of((int)v))) model.set_trainable((int)v, false);
  }
  return saved;
}

void restore_flags(Dcm& model, const std::vector<char>& saved) {
  for (std::size_t v = 0; v < saved.size(); v++) model.set_trainable((int)v, saved[v]);
}

}  // namespace

StageGradient stage_objective(const Dcm& dcm, const PlanStage& stage,
                              const std::vector<LabeledData>& data, FitConfig::Mode mode) {
  Dcm model = dcm;
  auto saved = freeze_outside(model, stage.hnode);
  StageReport report;
  report.hnode = stage.hnode;
  auto problems = compile_stage(model, stage, data, mode, report);
  if (problems.empty()) throw untrainable_error("stage_objective: no usable directive");
  auto [train_vars, train_edges] = trainable_sets(model);
  LogitGrads grads;
  StageGradient out;
  out.cross_entropy = stage_eval(model, problems, train_vars, train_edges, &report, out.max_tvd,
                                 &grads);
  const Admg& g = model.graph();
  for (auto& [v, vec] : grads.mech) out.mech_grads[g.name_of(v)] = std::move(vec);
  for (auto& [e, vec] : grads.prior) {
    auto [a, b] = g.bidirected_edges()[e];
    out.prior_grads[g.name_of(a) + "<->" + g.name_of(b)] = std::move(vec);
  }
  restore_flags(model, saved);
  return out;
}

std::pair<Dcm, StageReport> fit_stage(const Dcm& dcm_in, const PlanStage& stage,
                                      const std::vector<LabeledData>& data, const FitConfig& cfg) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();
  Dcm model = dcm_in;
  auto saved = freeze_outside(model, stage.hnode);

  StageReport report;
  report.hnode = stage.hnode;
  auto problems = compile_stage(model, stage, data, cfg.mode, report);
  if (problems.empty()) throw untrainable_error("fit_stage: no usable directive for this stage");

  auto [train_vars, train_edges] = trainable_sets(model);
  std::map<int, AdamState> adam_w, adam_p;
  for (int v : train_vars) adam_w[v].init(model.mechanism(v).logits.size());
  for (int e : train_edges) adam_p[e].init(model.confounder(e).prior_logits.size());

  double max_tvd = 0;
  double ce = stage_eval(model, problems, train_vars, train_edges, &report, max_tvd, nullptr);
  report.trace.push_back({0, max_tvd, ce});

  std::size_t step = 0;
  for (; step < cfg.max_steps && max_tvd > cfg.tolerance; step++) {
    LogitGrads grads;
    ce = stage_eval(model, problems, train_vars, train_edges, &report, max_tvd, &grads);
    if (std::isnan(ce)) throw numeric_error("fit_stage: loss became NaN (learning-rate fault)");
    if (max_tvd <= cfg.tolerance) break;
    double t = (double)(step + 1);
    double corr = std::sqrt(1.0 - std::pow(cfg.beta2, t)) / (1.0 - std::pow(cfg.beta1, t));
    for (auto& [v, grad] : grads.mech) adam_update(model.mechanism(v).logits, grad, adam_w[v], cfg, corr);
    for (auto& [e, grad] : grads.prior)
      adam_update(model.confounder(e).prior_logits, grad, adam_p[e], cfg, corr);
    if ((step + 1) % cfg.trace_every == 0) report.trace.push_back({step + 1, max_tvd, ce});
  }
  ce = stage_eval(model, problems, train_vars, train_edges, &report, max_tvd, nullptr);
  report.trace.push_back({step, max_tvd, ce});
  report.steps = step;

  restore_flags(model, saved);
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(report)};
}

std::pair<Dcm, TrainReport> modular_train(const Dcm& dcm, const TrainingPlan& plan,
                                          const std::vector<LabeledData>& data,
                                          const FitConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  Dcm model = dcm;
  TrainReport report;
  for (const auto& stage : plan.stages) {
    auto [next, stage_report] = fit_stage(model, stage, data, cfg);
    model = std::move(next);
    report.stages.push_back(std::move(stage_report));
  }
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(report)};
}

std::pair<Dcm, TrainReport> joint_train(const Dcm& dcm, const std::vector<LabeledData>& data,
                                        const FitConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  PlanStage stage;
  stage.hnode = VariableSet(dcm.graph().nodes());
  for (const auto& d : data) {
    PlanDirective dir;
    dir.label = d.label();
    dir.usable = true;
    stage.directives.push_back(std::move(dir));
  }
  auto [model, stage_report] = fit_stage(dcm, stage, data, cfg);
  TrainReport report;
  report.stages.push_back(std::move(stage_report));
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(report)};
}

namespace {

// Weighted conditional of one variable given its parents, pooled over every
// problem containing it; exact for unconfounded mechanisms.
void pooled_conditional_rows(const Dcm& dcm, const std::vector<Problem>& problems, int var,
                             std::vector<double>& row_out) {
  const Admg& g = dcm.graph();
  int card = dcm.card(var);
  std::size_t pa_size = 1;
  for (int pa : g.parents(var)) pa_size *= dcm.card(pa);
  std::vector<double> counts(pa_size * card, 0.0);
  for (const auto& p : problems) {
    int vi = -1;
    for (std::size_t i = 0; i < p.y_vars.size(); i++)
      if (p.y_vars[i] == var) vi = (int)i;
    if (vi < 0) continue;
    const auto& pl = p.plumb[vi];
    std::vector<int> yv(p.y_vars.size()), cv(p.cond_vars.size());
    for (std::size_t s = 0; s < p.n_slices; s++) {
      if (p.weight[s] <= 0) continue;
      decode_slice(p, s, cv);
      AssignmentIterator yit(p.y_cards);
      for (std::size_t cell = 0; !yit.done(); yit.next(), cell++) {
        double w = p.weight[s] * p.target[s * p.n_cells + cell];
        if (w <= 0) continue;
        for (std::size_t i = 0; i < yv.size(); i++) yv[i] = yit.values()[i];
        std::size_t idx = 0;
        for (std::size_t k = 0; k < pl.pa_cards.size(); k++) {
          int val = pl.pa_from_y[k] >= 0
                        ? yv[pl.pa_from_y[k]]
                        : (pl.pa_from_cond[k] >= 0 ? cv[pl.pa_from_cond[k]] : pl.pa_fixed[k]);
          idx = idx * pl.pa_cards[k] + val;
        }
        counts[idx * card + yv[vi]] += w;
      }
    }
  }
  row_out.assign(pa_size * card, 1.0 / card);
  for (std::size_t pa = 0; pa < pa_size; pa++) {
    double sum = 0;
    for (int c = 0; c < card; c++) sum += counts[pa * card + c];
    if (sum > 0)
      for (int c = 0; c < card; c++) row_out[pa * card + c] = counts[pa * card + c] / sum;
  }
}

void write_rows_as_logits(Dcm& model, int var, const std::vector<double>& marg) {
  auto& mech = model.mechanism(var);
  int card = mech.out_card, ecard = mech.e_card;
  std::size_t u_size = 1;
  for (std::size_t i = 0; i < model.incident_edges(var).size(); i++)
    u_size *= mech.row_cards[mech.row_cards.size() - 1 - i];
  std::size_t pa_size = mech.n_rows() / (u_size * ecard);
  for (std::size_t pa = 0; pa < pa_size; pa++)
    for (int e = 0; e < ecard; e++)
      for (std::size_t u = 0; u < u_size; u++) {
        std::size_t row = (pa * ecard + e) * u_size + u;
        std::size_t ctx = pa * u_size + u;
        for (int c = 0; c < card; c++)
          mech.logits[row * card + c] = std::log(std::max(marg[ctx * card + c], 1e-30));
      }
}

// One EM sweep over the problems; returns current cross-entropy and fills
// responsibility-weighted counts for the trainable parameters.
double em_sweep(const Dcm& model, std::vector<Problem>& problems,
                const std::map<int, PerVarTensors>& tensors,
                std::map<int, std::vector<double>>& counts,
                std::map<int, std::vector<double>>& pcounts, StageReport& report,
                double& max_tvd) {
  double ce = 0;
  max_tvd = 0;
  for (auto& p : problems) {
    std::vector<std::vector<double>> prior;
    for (int e : p.edges) prior.push_back(model.confounder_prior(e));
    std::vector<double> prior_prod(p.n_ucfg, 1.0);
    std::vector<std::vector<int>> ucfg_values;
    {
      AssignmentIterator uit(p.edge_cards);
      for (; !uit.done(); uit.next()) {
        ucfg_values.push_back(uit.values());
        for (std::size_t e = 0; e < p.edges.size(); e++)
          prior_prod[ucfg_values.size() - 1] *= prior[e][uit.values()[e]];
      }
    }
    std::vector<int> yv(p.y_vars.size()), cv(p.cond_vars.size());
    std::vector<std::size_t> pa_flat(p.y_vars.size());
    std::vector<double> terms(p.n_ucfg);
    double dir_tvd = 0, dir_ce = 0;
    for (std::size_t s = 0; s < p.n_slices; s++) {
      if (p.weight[s] <= 0) continue;
      decode_slice(p, s, cv);
      double slice_l1 = 0;
      AssignmentIterator yit(p.y_cards);
      for (std::size_t cell = 0; !yit.done(); yit.next(), cell++) {
        for (std::size_t i = 0; i < yv.size(); i++) yv[i] = yit.values()[i];
        for (std::size_t vi = 0; vi < p.plumb.size(); vi++)
          pa_flat[vi] = parent_context(p.plumb[vi], yv, cv);
        double q = 0;
        for (std::size_t uflat = 0; uflat < p.n_ucfg; uflat++) {
          double term = prior_prod[uflat];
          for (std::size_t vi = 0; vi < p.plumb.size(); vi++) {
            const auto& pl = p.plumb[vi];
            std::size_t ctx = pa_flat[vi] * pl.u_size + p.var_uflat[vi][uflat];
            term *= tensors.at(pl.var).marg[ctx * p.y_cards[vi] + yv[vi]];
          }
          terms[uflat] = term;
          q += term;
        }
        double t = p.target[s * p.n_cells + cell];
        slice_l1 += std::abs(t - q);
        if (t <= 0) continue;
        dir_ce += -p.weight[s] * t * std::log(std::max(q, kTiny));
        double base = p.weight[s] * t / std::max(q, kTiny);
        for (std::size_t uflat = 0; uflat < p.n_ucfg; uflat++) {
          double resp = base * terms[uflat];
          if (resp <= 0) continue;
          for (std::size_t vi = 0; vi < p.plumb.size(); vi++) {
            const auto& pl = p.plumb[vi];
            auto it = counts.find(pl.var);
            if (it == counts.end()) continue;
            std::size_t ctx = pa_flat[vi] * pl.u_size + p.var_uflat[vi][uflat];
            it->second[ctx * p.y_cards[vi] + yv[vi]] += resp;
          }
          for (std::size_t e = 0; e < p.edges.size(); e++) {
            auto it = pcounts.find(p.edges[e]);
            if (it != pcounts.end()) it->second[ucfg_values[uflat][e]] += resp;
          }
        }
      }
      dir_tvd = std::max(dir_tvd, 0.5 * slice_l1);
    }
    ce += dir_ce;
    max_tvd = std::max(max_tvd, dir_tvd);
    report.directives[p.directive_index].final_tvd = dir_tvd;
    report.directives[p.directive_index].final_ce = dir_ce;
  }
  return ce;
}

}  // namespace

std::pair<Dcm, StageReport> exact_fit_stage(const Dcm& dcm_in, const PlanStage& stage,
                                            const std::vector<LabeledData>& data,
                                            double tolerance) {
  auto t0 = std::chrono::steady_clock::now();
  Dcm model = dcm_in;
  auto saved = freeze_outside(model, stage.hnode);

  StageReport report;
  report.hnode = stage.hnode;
  auto problems = compile_stage(model, stage, data, FitConfig::Mode::ExactTable, report);
  if (problems.empty()) throw untrainable_error("exact_fit_stage: no usable directive");

  auto [train_vars, train_edges] = trainable_sets(model);

  std::map<int, std::vector<double>> base_rows;
  for (int v : train_vars) pooled_conditional_rows(model, problems, v, base_rows[v]);

  bool any_confounded = false;
  for (int v : train_vars)
    if (!model.incident_edges(v).empty()) any_confounded = true;

  std::set<int> active_vars;
  for (const auto& p : problems)
    for (int v : p.y_vars) active_vars.insert(v);

  // writes the closed-form rows into the model, jittered per confounder
  // context to break mixture symmetry; `mix` blends toward fully random rows
  // so later restarts explore genuinely different basins
  auto apply_base = [&](Rng* jitter, double scale, double mix = 0.0) {
    for (int v : train_vars) {
      const auto& rows = base_rows[v];
      int card = model.card(v);
      std::size_t u_size = 1;
      for (int e : model.incident_edges(v)) u_size *= model.confounder(e).card;
      std::size_t pa_size = rows.size() / card;
      std::vector<double> marg(pa_size * u_size * card);
      for (std::size_t pa = 0; pa < pa_size; pa++)
        for (std::size_t u = 0; u < u_size; u++) {
          double sum = 0;
          for (int c = 0; c < card; c++) {
            double x = rows[pa * card + c];
            if (jitter && u_size > 1) {
              x = std::max(1e-4, x * std::exp(scale * jitter->normal()));
              if (mix > 0) x = (1 - mix) * x + mix * (0.05 + jitter->next_double());
            }
            marg[(pa * u_size + u) * card + c] = x;
            sum += x;
          }
          for (int c = 0; c < card; c++) marg[(pa * u_size + u) * card + c] /= sum;
        }
      write_rows_as_logits(model, v, marg);
    }
    for (int e : train_edges) {
      auto& logits = model.confounder(e).prior_logits;
      for (std::size_t u = 0; u < logits.size(); u++)
        logits[u] = jitter ? scale * jitter->normal() : 0.0;
    }
  };

  double ce = 0, max_tvd = 0;
  auto final_eval = [&] {
    ce = stage_eval(model, problems, train_vars, train_edges, &report, max_tvd, nullptr);
  };

  if (!any_confounded) {
    apply_base(nullptr, 0);
    final_eval();
    report.trace.push_back({0, max_tvd, ce});
    report.steps = 0;
  } else {
    // one EM sweep in place; returns (ce, tvd) at the pre-update parameters
    auto em_step = [&]() {
      std::map<int, PerVarTensors> tensors;
      for (int v : active_vars) compute_var_tensors(model, v, tensors[v]);
      std::map<int, std::vector<double>> counts, pcounts;
      for (int v : train_vars)
        if (active_vars.count(v)) counts[v].assign(tensors[v].marg.size(), 0.0);
      for (int e : train_edges) pcounts[e].assign(model.confounder(e).card, 0.0);
      double cur_tvd = 0;
      double cur_ce = em_sweep(model, problems, tensors, counts, pcounts, report, cur_tvd);
      for (auto& [v, cnt] : counts) {
        int card = model.card(v);
        std::size_t n_ctx = cnt.size() / card;
        std::vector<double> marg(cnt.size());
        for (std::size_t ctx = 0; ctx < n_ctx; ctx++) {
          double sum = 0;
          for (int c = 0; c < card; c++) sum += cnt[ctx * card + c];
          if (sum > 0) {
            for (int c = 0; c < card; c++) marg[ctx * card + c] = cnt[ctx * card + c] / sum;
          } else {
            for (int c = 0; c < card; c++) marg[ctx * card + c] = tensors[v].marg[ctx * card + c];
          }
        }
        write_rows_as_logits(model, v, marg);
      }
      for (auto& [e, cnt] : pcounts) {
        auto& logits = model.confounder(e).prior_logits;
        double sum = 0;
        for (double x : cnt) sum += x;
        if (sum > 0)
          for (std::size_t u = 0; u < logits.size(); u++)
            logits[u] = std::log(std::max(cnt[u] / sum, 1e-30));
      }
      return std::pair<double, double>(cur_ce, cur_tvd);
    };

    // Parameter snapshots in log space: boundary optima (confounder values
    // with vanishing mass) sit at finite extrapolations there, and softmax
    // renormalizes whatever the acceleration proposes.
    auto snapshot = [&]() {
      std::vector<double> out;
      std::map<int, PerVarTensors> tensors;
      for (int v : train_vars) {
        if (!active_vars.count(v)) continue;
        compute_var_tensors(model, v, tensors[v]);
        for (double x : tensors[v].marg) out.push_back(std::log(std::max(x, 1e-300)));
      }
      for (int e : train_edges) {
        auto prior = model.confounder_prior(e);
        for (double x : prior) out.push_back(std::log(std::max(x, 1e-300)));
      }
      return out;
    };
    auto load = [&](const std::vector<double>& params) {
      std::size_t pos = 0;
      for (int v : train_vars) {
        if (!active_vars.count(v)) continue;
        int card = model.card(v);
        std::size_t n_ctx = model.mechanism(v).n_rows() / model.mechanism(v).e_card;
        std::vector<double> marg(n_ctx * card);
        for (std::size_t ctx = 0; ctx < n_ctx; ctx++) {
          double mx = -1e300;
          for (int c = 0; c < card; c++) mx = std::max(mx, params[pos + ctx * card + c]);
          double sum = 0;
          for (int c = 0; c < card; c++) {
            marg[ctx * card + c] = std::exp(std::max(params[pos + ctx * card + c] - mx, -690.0));
            sum += marg[ctx * card + c];
          }
          for (int c = 0; c < card; c++) marg[ctx * card + c] /= sum;
        }
        pos += n_ctx * card;
        write_rows_as_logits(model, v, marg);
      }
      for (int e : train_edges) {
        auto& logits = model.confounder(e).prior_logits;
        for (std::size_t u = 0; u < logits.size(); u++)
          logits[u] = std::max(params[pos + u], -690.0);
        pos += logits.size();
      }
    };

    // squared iterative EM acceleration with a plain-EM safeguard, then a
    // quasi-Newton polish for the slow tail
    Dcm best_model = model;
    double best_tvd = 1e300;
    std::size_t total_sweeps = 0;
    const std::size_t kMaxSweepsPerRestart = 1600;
    for (int restart = 0; restart < 6 && best_tvd > tolerance; restart++) {
      Rng jitter(0x9E3779B97F4A7C15ULL * (restart + 1) + 17);
      double scale = restart == 0 ? 0.05 : 0.25 * restart;
      double mix = restart < 2 ? 0.0 : 0.25 * (restart - 1);
      apply_base(&jitter, scale, std::min(mix, 1.0));
      double restart_best = 1e300;
      std::size_t sweeps = 0, last_gain_sweep = 0;
      auto squarem_phase = [&] {
      std::size_t phase_start = sweeps;
      while (sweeps - phase_start < kMaxSweepsPerRestart) {
        std::vector<double> theta0 = snapshot();
        auto [ce0, tvd0] = em_step();
        std::vector<double> theta1 = snapshot();
        auto [ce1, tvd1] = em_step();
        std::vector<double> theta2 = snapshot();
        sweeps += 2;
        double cur = std::min(tvd0, tvd1);
        if (cur < restart_best * 0.999) {
          restart_best = std::min(restart_best, cur);
          last_gain_sweep = sweeps;
        }
        restart_best = std::min(restart_best, cur);
        if (restart_best <= tolerance) break;
        if (sweeps - last_gain_sweep > 200) break;  // stalled: hand over to the polish

        double rr = 0, vv = 0;
        std::vector<double> accel(theta0.size());
        for (std::size_t k = 0; k < theta0.size(); k++) {
          double r = theta1[k] - theta0[k];
          double v = theta2[k] - 2 * theta1[k] + theta0[k];
          rr += r * r;
          vv += v * v;
        }
        if (vv > 1e-28) {
          double alpha = -std::sqrt(rr / vv);
          alpha = std::max(alpha, -64.0);
          if (alpha < -1.0) {
            for (std::size_t k = 0; k < theta0.size(); k++) {
              double r = theta1[k] - theta0[k];
              double v = theta2[k] - 2 * theta1[k] + theta0[k];
              accel[k] = theta0[k] - 2 * alpha * r + alpha * alpha * v;
            }
            load(accel);
            auto [ce_acc, tvd_acc] = em_step();  // stabilizing sweep
            sweeps++;
            bool reject = !std::isfinite(ce_acc) || ce_acc > ce1;
            if (reject) {
              load(theta2);  // reject the extrapolation
            } else if (tvd_acc < restart_best * 0.999) {
              restart_best = std::min(restart_best, tvd_acc);
              last_gain_sweep = sweeps;
            }
            restart_best = std::min(restart_best,
                                    std::isfinite(tvd_acc) ? tvd_acc : restart_best);
          }
        }
        if (sweeps % 64 < 3) {
          double check_tvd = 0;
          double check_ce =
              stage_eval(model, problems, train_vars, train_edges, nullptr, check_tvd, nullptr);
          report.trace.push_back({total_sweeps + sweeps, check_tvd, check_ce});
          if (check_tvd <= tolerance) {
            restart_best = check_tvd;
            break;
          }
        }
      }
      };
      // rounds of accelerated EM and quasi-Newton polish; they exploit
      // different geometry, and the stubborn instances need both
      double tail_tvd = 1e300;
      for (int round = 0; round < 8; round++) {
        squarem_phase();
        double em_tvd = 0;
        stage_eval(model, problems, train_vars, train_edges, nullptr, em_tvd, nullptr);
        tail_tvd = std::min(tail_tvd, em_tvd);
        if (tail_tvd <= tolerance) break;
        double polished = lbfgs_polish(model, problems, train_vars, train_edges, tolerance, 2500);
        sweeps += 500;
        bool improved = polished < 0.9 * tail_tvd;
        tail_tvd = std::min(tail_tvd, polished);
        if (tail_tvd <= tolerance || !improved) break;
        last_gain_sweep = sweeps;  // give the next EM phase fresh patience
      }
      total_sweeps += sweeps;
      if (tail_tvd < best_tvd) {
        best_tvd = tail_tvd;
        best_model = model;
      }
    }
    model = std::move(best_model);
    report.steps = total_sweeps;
    final_eval();
    report.trace.push_back({total_sweeps, max_tvd, ce});
  }

  restore_flags(model, saved);
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(report)};
}

std::pair<Dcm, TrainReport> modular_exact_fit(const Dcm& dcm, const TrainingPlan& plan,
                                              const std::vector<LabeledData>& data,
                                              double tolerance) {
  auto t0 = std::chrono::steady_clock::now();
  Dcm model = dcm;
  TrainReport report;
  for (const auto& stage : plan.stages) {
    auto [next, stage_report] = exact_fit_stage(model, stage, data, tolerance);
    model = std::move(next);
    report.stages.push_back(std::move(stage_report));
  }
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(report)};
}

std::vector<LabeledData> exact_data_for(const DiscreteScm& scm,
                                        const std::vector<InterventionSpec>& labels) {
  std::vector<LabeledData> out;
  const Admg& g = scm.graph();
  for (const auto& label : labels) {
    if (label.randomized.empty()) {
      out.push_back(LabeledData::from_exact(scm_exact_joint(scm, label.fixed), label));
    } else {
      std::vector<std::string> cvars = label.randomized.names();
      std::vector<int> ccards;
      for (const auto& n : cvars) ccards.push_back(scm.card(g.index_of(n)));
      std::vector<Distribution> slices;
      for (AssignmentIterator it(ccards); !it.done(); it.next()) {
        Assignment a = label.fixed;
        for (std::size_t i = 0; i < cvars.size(); i++) a.set(cvars[i], it.values()[i]);
        slices.push_back(scm_exact_joint(scm, a));
      }
      Distribution combined(slices[0].vars, slices[0].cards, cvars, ccards);
      std::size_t ts = combined.table_size();
      for (std::size_t s = 0; s < slices.size(); s++)
        std::copy(slices[s].p.begin(), slices[s].p.end(), combined.p.begin() + s * ts);
      out.push_back(LabeledData::from_exact(std::move(combined), label));
    }
  }
  return out;
}

std::string TrainReport::to_text() const {
  std::ostringstream os;
  os.precision(6);
  for (std::size_t s = 0; s < stages.size(); s++) {
    os << "stage " << s << " hnode {";
    bool first = true;
    for (const auto& v : stages[s].hnode) {
      if (!first) os << " ";
      os << v;
      first = false;
    }
    os << "} steps " << stages[s].steps << "\n";
    for (const auto& d : stages[s].directives) {
      os << "  directive label {";
      first = true;
      for (const auto& v : d.label) {
        if (!first) os << " ";
        os << v;
        first = false;
      }
      os << "} ";
      if (d.used)
        os << "tvd " << d.final_tvd << " ce " << d.final_ce;
      else
        os << "skipped (" << d.note << ")";
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace modcausal
