#include <doctest.h>

#include <cmath>

#include "modcausal/fixtures.hpp"
#include "modcausal/identify.hpp"
#include "modcausal/metrics.hpp"
#include "modcausal/rng.hpp"
#include "modcausal/scm.hpp"

using namespace modcausal;

namespace {

// compares an evaluated estimand against the enumeration oracle at every
// intervention setting
double worst_gap(const DiscreteScm& scm, const Estimand& est, const VariableSet& x,
                 const VariableSet& y) {
  const Admg& g = scm.graph();
  Distribution joint = scm_exact_joint(scm);
  Distribution eval = evaluate_estimand(est, joint);
  std::vector<int> xi = g.indices_of(x);
  std::vector<int> cards;
  for (int v : xi) cards.push_back(scm.card(v));
  double worst = 0;
  for (AssignmentIterator it(cards); !it.done(); it.next()) {
    Assignment a;
    Distribution slice = eval;
    for (std::size_t k = 0; k < xi.size(); k++) {
      a.set(g.name_of(xi[k]), it.values()[k]);
      slice = slice.fix_condition(g.name_of(xi[k]), it.values()[k]);
    }
    Distribution oracle = scm_interventional_oracle(scm, a, y).reorder(slice.vars);
    worst = std::max(worst, tvd(oracle, slice));
  }
  return worst;
}

}  // namespace

TEST_SUITE("identify") {

TEST_CASE("unconfounded X -> Y reduces to the plain conditional") {
  Admg g = parse_admg("X -> Y\n");
  Estimand e = id_algorithm(g, VariableSet{"X"}, VariableSet{"Y"});
  REQUIRE(e.identifiable());
  CHECK(e.free_variables() == VariableSet{"X", "Y"});

  // evaluate against a hand-built joint
  Distribution joint({"X", "Y"}, {2, 2});
  joint.at({0, 0}) = 0.30;
  joint.at({0, 1}) = 0.10;
  joint.at({1, 0}) = 0.15;
  joint.at({1, 1}) = 0.45;
  Distribution result = evaluate_estimand(e, joint);
  CHECK(result.at({0}, {0}) == doctest::Approx(0.75));
  CHECK(result.at({1}, {1}) == doctest::Approx(0.75));
}

TEST_CASE("frontdoor query produces the adjustment formula") {
  DiscreteScm scm = fixtures::frontdoor();
  Estimand e = id_algorithm(scm.graph(), VariableSet{"D"}, VariableSet{"A"});
  REQUIRE(e.identifiable());
  CHECK(worst_gap(scm, e, VariableSet{"D"}, VariableSet{"A"}) < 1e-9);
  // the printed form references only observational marginals
  std::string s = e.to_sexpr();
  CHECK(s.find("unidentifiable") == std::string::npos);
  CHECK(s.find("(P") != std::string::npos);
}

TEST_CASE("bow graph is unidentifiable with a hedge witness") {
  Admg bow = parse_admg("X -> Y\nX <-> Y\n");
  Estimand e = id_algorithm(bow, VariableSet{"X"}, VariableSet{"Y"});
  CHECK_FALSE(e.identifiable());
  CHECK(e.hedge_outer == VariableSet{"X", "Y"});
  CHECK(e.hedge_inner == VariableSet{"Y"});
  CHECK_THROWS_AS(evaluate_estimand(e, Distribution({"X", "Y"}, {2, 2})), validation_error);
}

TEST_CASE("the bow witness is real: equal joints, different effects") {
  auto [m1, m2] = fixtures::bow_pair();
  CHECK(tvd(scm_exact_joint(m1), scm_exact_joint(m2)) < 1e-12);
  auto e1 = scm_interventional_oracle(m1, {{"X", 1}}, VariableSet{"Y"});
  auto e2 = scm_interventional_oracle(m2, {{"X", 1}}, VariableSet{"Y"});
  CHECK(tvd(e1, e2) > 0.4);
}

TEST_CASE("estimand soundness on random identifiable queries") {
  Rng rng(1515);
  int identified = 0;
  for (int trial = 0; trial < 60 && identified < 25; trial++) {
    DiscreteScm scm = random_scm(4 + trial % 2, 52000 + trial);
    const Admg& g = scm.graph();
    VariableSet x, y;
    for (const auto& n : g.nodes()) {
      double r = rng.next_double();
      if (r < 0.3) x.insert(n);
      else if (r < 0.6) y.insert(n);
    }
    if (x.empty() || y.empty()) continue;
    Estimand e = id_algorithm(g, x, y);
    if (!e.identifiable()) continue;
    identified++;
    CHECK_MESSAGE(worst_gap(scm, e, x, y) < 1e-9, "trial ", trial);
  }
  CHECK(identified >= 10);
}

TEST_CASE("a degenerate joint makes estimand evaluation fail loudly") {
  Admg g = parse_admg("D -> I\nI -> A\nD <-> A\n");
  Estimand e = id_algorithm(g, VariableSet{"D"}, VariableSet{"A"});
  Distribution joint({"D", "I", "A"}, {2, 2, 2});
  joint.at({0, 0, 0}) = 1.0;  // everything else has probability zero
  CHECK_THROWS_AS(evaluate_estimand(e, joint), numeric_error);
}

TEST_CASE("tian factors multiply back to the joint") {
  for (const DiscreteScm& scm :
       {fixtures::frontdoor(), fixtures::two_block(), fixtures::diamond()}) {
    const Admg& g = scm.graph();
    Distribution joint = scm_exact_joint(scm);
    auto factors = tian_c_factors(g, joint);
    CHECK(factors.size() == c_components(g).size());
    // pointwise product over components reconstructs the joint
    double worst = 0;
    AssignmentIterator it(joint.cards);
    for (std::size_t flat = 0; !it.done(); it.next(), flat++) {
      double prod = 1.0;
      for (auto& [comp, table] : factors) {
        std::vector<int> cv, pv;
        for (const auto& name : table.vars)
          for (std::size_t k = 0; k < joint.vars.size(); k++)
            if (joint.vars[k] == name) cv.push_back(it.values()[k]);
        for (const auto& name : table.cond_vars)
          for (std::size_t k = 0; k < joint.vars.size(); k++)
            if (joint.vars[k] == name) pv.push_back(it.values()[k]);
        prod *= table.at(cv, pv);
      }
      worst = std::max(worst, std::abs(prod - joint.p[flat]));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("markovian chain c-factors are the usual CPTs") {
  Admg g = parse_admg("X -> Y\n");
  DiscreteScm::Noise ex{2, {0.6, 0.4}}, ey{2, {0.8, 0.2}};
  std::vector<std::vector<int>> tables = {{0, 1}, {0, 1, 1, 0}};
  DiscreteScm scm(g, {2, 2}, {ex, ey}, {}, tables);
  auto factors = tian_c_factors(g, scm_exact_joint(scm));
  REQUIRE(factors.size() == 2);
  // first factor: P(X)
  CHECK(factors[0].first == VariableSet{"X"});
  CHECK(factors[0].second.at({1}) == doctest::Approx(0.4));
  // second factor: P(Y|X)
  CHECK(factors[1].first == VariableSet{"Y"});
  CHECK(factors[1].second.at({1}, {0}) == doctest::Approx(0.2));
  CHECK(factors[1].second.at({1}, {1}) == doctest::Approx(0.8));
}

TEST_CASE("c-factors equal the enumeration oracle's interventional tables") {
  for (int trial = 0; trial < 10; trial++) {
    DiscreteScm scm = random_scm(5, 660 + trial);
    const Admg& g = scm.graph();
    auto factors = tian_c_factors(g, scm_exact_joint(scm));
    for (auto& [comp, table] : factors) {
      VariableSet pa = parents_of_set(g, comp);
      std::vector<int> pidx = g.indices_of(pa);
      std::vector<int> cards;
      for (int v : pidx) cards.push_back(scm.card(v));
      for (AssignmentIterator it(cards); !it.done(); it.next()) {
        Assignment a;
        for (std::size_t k = 0; k < pidx.size(); k++)
          a.set(g.name_of(pidx[k]), it.values()[k]);
        Distribution oracle = scm_interventional_oracle(scm, a, comp);
        Distribution slice = table;
        for (std::size_t k = 0; k < pidx.size(); k++)
          slice = slice.fix_condition(g.name_of(pidx[k]), it.values()[k]);
        CHECK(tvd(oracle.reorder(slice.vars), slice) < 1e-9);
      }
    }
  }
}

TEST_CASE("subgraph factorization: focus-set interventionals factor over active components") {
  Rng rng(4242);
  int checked = 0;
  for (int trial = 0; trial < 14; trial++) {
    DiscreteScm scm = random_scm(5, 3100 + trial);
    const Admg& g = scm.graph();
    VariableSet focus, extra_do;
    for (const auto& n : g.nodes()) {
      double r = rng.next_double();
      if (r < 0.45) focus.insert(n);
      else if (r < 0.6) extra_do.insert(n);
    }
    if (focus.empty() || focus.size() == g.size()) continue;
    checked++;
    VariableSet action = parents_of_set(g, focus).unite(extra_do).minus(focus);
    // one representative action setting keeps the check cheap
    Assignment a;
    std::vector<int> aidx = g.indices_of(action);
    for (int v : aidx) a.set(g.name_of(v), rng.uniform_int(scm.card(v)));
    Distribution lhs = scm_exact_joint(scm, a).marginal(focus);

    // per-component factor tables P(active | do(pa(active) ∪ extra_do))
    auto comps = c_components(graph_do(g, extra_do));
    struct Factor {
      VariableSet active, parents;
      Distribution table;  // vars = active, cond = parents
    };
    std::vector<Factor> factors;
    for (const auto& comp : comps) {
      VariableSet active = comp.intersect(focus);
      if (active.empty()) continue;
      Factor f;
      f.active = active;
      f.parents = parents_of_set(g, active);
      std::vector<int> pidx = g.indices_of(f.parents);
      std::vector<std::string> pvars;
      std::vector<int> pcards;
      for (int v : pidx) {
        pvars.push_back(g.name_of(v));
        pcards.push_back(scm.card(v));
      }
      std::vector<std::string> avars;
      std::vector<int> acards;
      for (int v : g.indices_of(active)) {
        avars.push_back(g.name_of(v));
        acards.push_back(scm.card(v));
      }
      f.table = Distribution(avars, acards, pvars, pcards);
      for (AssignmentIterator pit(pcards); !pit.done(); pit.next()) {
        Assignment sub;
        for (const auto& n : extra_do.minus(active))
          if (auto val = a.get(n)) sub.set(n, *val);
        for (std::size_t k = 0; k < pvars.size(); k++) sub.set(pvars[k], pit.values()[k]);
        Distribution marg = scm_interventional_oracle(scm, sub, active).reorder(avars);
        for (AssignmentIterator ait(acards); !ait.done(); ait.next())
          f.table.at(ait.values(), pit.values()) = marg.p[flat_index(acards, ait.values())];
      }
      factors.push_back(std::move(f));
    }

    double worst = 0;
    AssignmentIterator cell(lhs.cards);
    for (std::size_t flat = 0; !cell.done(); cell.next(), flat++) {
      auto value_of = [&](const std::string& name) -> int {
        for (std::size_t k = 0; k < lhs.vars.size(); k++)
          if (lhs.vars[k] == name) return cell.values()[k];
        return *a.get(name);
      };
      double prod = 1.0;
      for (const auto& f : factors) {
        std::vector<int> av, pv;
        for (const auto& n : f.table.vars) av.push_back(value_of(n));
        for (const auto& n : f.table.cond_vars) pv.push_back(value_of(n));
        prod *= f.table.at(av, pv);
      }
      worst = std::max(worst, std::abs(lhs.p[flat] - prod));
    }
    CHECK_MESSAGE(worst < 1e-9, "trial ", trial);
  }
  CHECK(checked >= 5);
}

}  // TEST_SUITE
