#include "modcausal/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace modcausal {

std::size_t flat_index(const std::vector<int>& cards, const std::vector<int>& vals) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < cards.size(); i++) idx = idx * cards[i] + vals[i];
  return idx;
}

Distribution::Distribution(std::vector<std::string> vars_in, std::vector<int> cards_in,
                           std::vector<std::string> cond_vars_in, std::vector<int> cond_cards_in)
    : vars(std::move(vars_in)),
      cards(std::move(cards_in)),
      cond_vars(std::move(cond_vars_in)),
      cond_cards(std::move(cond_cards_in)) {
  if (vars.size() != cards.size() || cond_vars.size() != cond_cards.size())
    throw validation_error("Distribution: variable/cardinality length mismatch");
  p.assign(slice_count() * table_size(), 0.0);
}

std::size_t Distribution::table_size() const {
  std::size_t s = 1;
  for (int c : cards) s *= c;
  return s;
}

std::size_t Distribution::slice_count() const {
  std::size_t s = 1;
  for (int c : cond_cards) s *= c;
  return s;
}

double& Distribution::at(const std::vector<int>& var_vals, const std::vector<int>& cond_vals) {
  return p[flat_index(cond_cards, cond_vals) * table_size() + flat_index(cards, var_vals)];
}

double Distribution::at(const std::vector<int>& var_vals, const std::vector<int>& cond_vals) const {
  return p[flat_index(cond_cards, cond_vals) * table_size() + flat_index(cards, var_vals)];
}

int Distribution::card_of(const std::string& name) const {
  for (std::size_t i = 0; i < vars.size(); i++)
    if (vars[i] == name) return cards[i];
  for (std::size_t i = 0; i < cond_vars.size(); i++)
    if (cond_vars[i] == name) return cond_cards[i];
  throw validation_error("Distribution: unknown variable '" + name + "'");
}

void Distribution::check_normalized(double tol) const {
  std::size_t ts = table_size();
  for (std::size_t s = 0; s < slice_count(); s++) {
    double sum = 0;
    for (std::size_t i = 0; i < ts; i++) sum += p[s * ts + i];
    if (std::abs(sum - 1.0) > tol)
      throw numeric_error("Distribution slice " + std::to_string(s) + " sums to " +
                          std::to_string(sum));
  }
}

void Distribution::normalize() {
  std::size_t ts = table_size();
  for (std::size_t s = 0; s < slice_count(); s++) {
    double sum = 0;
    for (std::size_t i = 0; i < ts; i++) sum += p[s * ts + i];
    if (sum > 0)
      for (std::size_t i = 0; i < ts; i++) p[s * ts + i] /= sum;
  }
}

Distribution Distribution::marginal(const VariableSet& keep) const {
  std::vector<std::string> kept_vars;
  std::vector<int> kept_cards, kept_pos;
  for (std::size_t i = 0; i < vars.size(); i++) {
    if (keep.contains(vars[i])) {
      kept_vars.push_back(vars[i]);
      kept_cards.push_back(cards[i]);
      kept_pos.push_back((int)i);
    }
  }
  Distribution out(kept_vars, kept_cards, cond_vars, cond_cards);
  std::size_t ts = table_size();
  std::vector<int> kv(kept_pos.size());
  for (std::size_t s = 0; s < slice_count(); s++) {
    AssignmentIterator it(cards);
    for (std::size_t flat = 0; !it.done(); it.next(), flat++) {
      for (std::size_t k = 0; k < kept_pos.size(); k++) kv[k] = it.values()[kept_pos[k]];
      out.p[s * out.table_size() + flat_index(kept_cards, kv)] += p[s * ts + flat];
    }
  }
  return out;
}

Distribution Distribution::condition(const VariableSet& given, std::size_t* zero_slices) const {
  std::vector<std::string> new_vars, new_cond = cond_vars;
  std::vector<int> new_cards, new_cond_cards = cond_cards, given_pos, keep_pos;
  for (std::size_t i = 0; i < vars.size(); i++) {
    if (given.contains(vars[i])) {
      new_cond.push_back(vars[i]);
      new_cond_cards.push_back(cards[i]);
      given_pos.push_back((int)i);
    } else {
      new_vars.push_back(vars[i]);
      new_cards.push_back(cards[i]);
      keep_pos.push_back((int)i);
    }
  }
  Distribution out(new_vars, new_cards, new_cond, new_cond_cards);
  std::size_t ts = table_size(), out_ts = out.table_size();
  std::vector<int> gv(given_pos.size()), kv(keep_pos.size());
  std::size_t zeros = 0;
  for (std::size_t s = 0; s < slice_count(); s++) {
    // accumulate joint mass into the output layout, then divide per new slice
    AssignmentIterator it(cards);
    for (std::size_t flat = 0; !it.done(); it.next(), flat++) {
      for (std::size_t k = 0; k < given_pos.size(); k++) gv[k] = it.values()[given_pos[k]];
      for (std::size_t k = 0; k < keep_pos.size(); k++) kv[k] = it.values()[keep_pos[k]];
      std::size_t slice = s;
      for (std::size_t k = 0; k < given_pos.size(); k++)
        slice = slice * cards[given_pos[k]] + gv[k];
      out.p[slice * out_ts + flat_index(new_cards, kv)] += p[s * ts + flat];
    }
  }
  for (std::size_t s = 0; s < out.slice_count(); s++) {
    double sum = 0;
    for (std::size_t i = 0; i < out_ts; i++) sum += out.p[s * out_ts + i];
    if (sum <= 0) {
      zeros++;
      for (std::size_t i = 0; i < out_ts; i++) out.p[s * out_ts + i] = 1.0 / (double)out_ts;
    } else {
      for (std::size_t i = 0; i < out_ts; i++) out.p[s * out_ts + i] /= sum;
    }
  }
  if (zero_slices) *zero_slices = zeros;
  return out;
}

Distribution Distribution::fix_condition(const std::string& cond_var, int value) const {
  int pos = -1;
  for (std::size_t i = 0; i < cond_vars.size(); i++)
    if (cond_vars[i] == cond_var) pos = (int)i;
  if (pos < 0) throw validation_error("fix_condition: '" + cond_var + "' is not a conditioning axis");
  std::vector<std::string> new_cond;
  std::vector<int> new_cond_cards;
  for (std::size_t i = 0; i < cond_vars.size(); i++) {
    if ((int)i == pos) continue;
    new_cond.push_back(cond_vars[i]);
    new_cond_cards.push_back(cond_cards[i]);
  }
  Distribution out(vars, cards, new_cond, new_cond_cards);
  std::size_t ts = table_size();
  AssignmentIterator it(cond_cards);
  for (; !it.done(); it.next()) {
    if (it.values()[pos] != value) continue;
    std::vector<int> rest;
    for (std::size_t i = 0; i < cond_vars.size(); i++)
      if ((int)i != pos) rest.push_back(it.values()[i]);
    std::size_t src = flat_index(cond_cards, it.values());
    std::size_t dst = flat_index(new_cond_cards, rest);
    for (std::size_t i = 0; i < ts; i++) out.p[dst * ts + i] = p[src * ts + i];
  }
  return out;
}

Distribution Distribution::reorder(const std::vector<std::string>& new_vars) const {
  if (new_vars.size() != vars.size())
    throw validation_error("reorder: variable count mismatch");
  std::vector<int> pos(new_vars.size());
  std::vector<int> new_cards(new_vars.size());
  for (std::size_t i = 0; i < new_vars.size(); i++) {
    auto it = std::find(vars.begin(), vars.end(), new_vars[i]);
    if (it == vars.end()) throw validation_error("reorder: unknown variable '" + new_vars[i] + "'");
    pos[i] = (int)(it - vars.begin());
    new_cards[i] = cards[pos[i]];
  }
  Distribution out(new_vars, new_cards, cond_vars, cond_cards);
  std::size_t ts = table_size();
  std::vector<int> nv(new_vars.size());
  for (std::size_t s = 0; s < slice_count(); s++) {
    AssignmentIterator it(cards);
    for (std::size_t flat = 0; !it.done(); it.next(), flat++) {
      for (std::size_t i = 0; i < new_vars.size(); i++) nv[i] = it.values()[pos[i]];
      out.p[s * ts + flat_index(new_cards, nv)] = p[s * ts + flat];
    }
  }
  return out;
}

}  // namespace modcausal
