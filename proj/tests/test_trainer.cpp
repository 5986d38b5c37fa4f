#include <doctest.h>

#include <cmath>

#include "modcausal/fixtures.hpp"
#include "modcausal/hgraph.hpp"
#include "modcausal/metrics.hpp"
#include "modcausal/rng.hpp"
#include "modcausal/trainer.hpp"

using namespace modcausal;

namespace {

InterventionSpec obs_label() { return InterventionSpec{}; }

std::vector<LabeledData> obs_exact(const DiscreteScm& scm) {
  return exact_data_for(scm, {obs_label()});
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("fit config validation") {
  FitConfig cfg;
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), validation_error);
  cfg.learning_rate = 0.1;
  cfg.tolerance = -1;
  CHECK_THROWS_AS(cfg.validate(), validation_error);
}

TEST_CASE("empirical_conditional basics") {
  Dataset d;
  d.variables = {"X", "Y"};
  d.cards = {2, 2};
  d.n_rows = 4;
  d.cells = {0, 0, 0, 0, 1, 1, 1, 1};
  Distribution point = empirical_conditional(d, VariableSet{"Y"}, {});
  CHECK(point.at({0}) == doctest::Approx(0.5).epsilon(1e-6));
  Distribution cond = empirical_conditional(d, VariableSet{"Y"}, VariableSet{"X"});
  CHECK(cond.at({0}, {0}) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(cond.at({1}, {1}) == doctest::Approx(1.0).epsilon(1e-6));

  Dataset empty;
  empty.variables = {"X"};
  empty.cards = {2};
  CHECK_THROWS_AS(empirical_conditional(empty, VariableSet{"X"}, {}), validation_error);
}

TEST_CASE("empirical_conditional approaches the exact joint at scale") {
  DiscreteScm scm = fixtures::frontdoor();
  Dataset d = scm_sample(scm, 100000, {}, 17);
  Distribution emp = empirical_conditional(d, VariableSet{"D", "A", "I"}, {});
  Distribution exact = scm_exact_joint(scm).reorder(emp.vars);
  CHECK(tvd(exact, emp) < 0.02);
}

TEST_CASE("exact_fit on the frontdoor plan drives both stages to optimum") {
  DiscreteScm scm = fixtures::frontdoor();
  const Admg& g = scm.graph();
  TrainingPlan plan = make_training_plan(g, {VariableSet{}});
  Dcm dcm = dcm_init(g, scm.cards(), {}, 3);
  auto [fitted, report] = modular_exact_fit(dcm, plan, obs_exact(scm), 1e-7);

  // the unconfounded mediator stage is closed-form (zero iterations)
  CHECK(report.stages[0].steps == 0);
  CHECK(report.stages[0].directives[0].final_tvd < 1e-9);
  CHECK(report.stages[1].directives[0].final_tvd < 1e-6);

  Distribution joint = scm_exact_joint(scm);
  Distribution got = dcm_exact_distribution(fitted, VariableSet(g.nodes())).reorder(joint.vars);
  CHECK(tvd(joint, got) < 1e-5);
  for (int d = 0; d < 2; d++) {
    auto oracle = scm_interventional_oracle(scm, {{"D", d}}, VariableSet{"A"});
    auto model = dcm_exact_distribution(fitted, VariableSet{"A"}, {}, Assignment{{"D", d}});
    CHECK(tvd(oracle, model) < 1e-4);
  }
}

TEST_CASE("exact_fit is idempotent once converged") {
  DiscreteScm scm = fixtures::frontdoor();
  const Admg& g = scm.graph();
  TrainingPlan plan = make_training_plan(g, {VariableSet{}});
  Dcm dcm = dcm_init(g, scm.cards(), {}, 3);
  auto data = obs_exact(scm);
  auto [fit1, r1] = modular_exact_fit(dcm, plan, data, 1e-7);
  Distribution j1 = dcm_exact_distribution(fit1, VariableSet(g.nodes()));
  auto [fit2, r2] = modular_exact_fit(fit1, plan, data, 1e-7);
  Distribution j2 = dcm_exact_distribution(fit2, VariableSet(g.nodes()));
  CHECK(tvd(j1, j2) < 1e-7);
}

TEST_CASE("freeze integrity: parameters outside the stage never move") {
  DiscreteScm scm = fixtures::frontdoor();
  const Admg& g = scm.graph();
  TrainingPlan plan = make_training_plan(g, {VariableSet{}});
  Dcm dcm = dcm_init(g, scm.cards(), {}, 3);
  FitConfig cfg;
  cfg.mode = FitConfig::Mode::ExactTable;
  cfg.max_steps = 40;
  auto data = obs_exact(scm);

  // stage 1 trains {I}: D and A must be bit-identical afterward
  auto [after1, r1] = fit_stage(dcm, plan.stages[0], data, cfg);
  CHECK(after1.mechanism(0).logits == dcm.mechanism(0).logits);
  CHECK(after1.mechanism(2).logits == dcm.mechanism(2).logits);
  CHECK(after1.confounder(0).prior_logits == dcm.confounder(0).prior_logits);
  CHECK(after1.mechanism(1).logits != dcm.mechanism(1).logits);

  // stage 2 trains {D, A}: the mediator stays frozen
  auto [after2, r2] = fit_stage(after1, plan.stages[1], data, cfg);
  CHECK(after2.mechanism(1).logits == after1.mechanism(1).logits);

  // freezing everything first turns training into a no-op
  Dcm frozen = dcm_set_trainable(dcm, VariableSet(g.nodes()), false);
  auto [still, r3] = fit_stage(frozen, plan.stages[0], data, cfg);
  for (int v = 0; v < 3; v++) CHECK(still.mechanism(v).logits == frozen.mechanism(v).logits);
}

TEST_CASE("adam fit reaches the frontdoor targets in exact mode") {
  DiscreteScm scm = fixtures::frontdoor();
  const Admg& g = scm.graph();
  TrainingPlan plan = make_training_plan(g, {VariableSet{}});
  Dcm dcm = dcm_init(g, scm.cards(), {}, 3);
  FitConfig cfg;
  cfg.mode = FitConfig::Mode::ExactTable;
  cfg.learning_rate = 0.1;
  cfg.max_steps = 3000;
  cfg.tolerance = 1e-3;
  auto data = obs_exact(scm);
  auto [m1, r1] = fit_stage(dcm, plan.stages[0], data, cfg);
  CHECK(r1.directives[0].final_tvd < 1e-3);
  cfg.tolerance = 5e-3;
  auto [m2, r2] = fit_stage(m1, plan.stages[1], data, cfg);
  CHECK(r2.directives[0].final_tvd < 5e-3);
  // the loss trace is recorded and decreasing overall
  REQUIRE(r2.trace.size() >= 2);
  CHECK(r2.trace.back().max_tvd < r2.trace.front().max_tvd);
}

TEST_CASE("two-node markovian graph: joint and modular training agree") {
  Admg g = parse_admg("X -> Y\n");
  DiscreteScm::Noise ex{3, {0.5, 0.3, 0.2}}, ey{3, {0.6, 0.25, 0.15}};
  std::vector<std::vector<int>> tables = {{0, 1, 1}, {0, 1, 1, 0, 1, 0}};
  DiscreteScm scm(g, {2, 2}, {ex, ey}, {}, tables);
  TrainingPlan plan = make_training_plan(g, {VariableSet{}});
  auto data = obs_exact(scm);
  FitConfig cfg;
  cfg.mode = FitConfig::Mode::ExactTable;
  cfg.learning_rate = 0.2;
  cfg.max_steps = 2500;
  cfg.tolerance = 1e-4;
  Dcm dcm = dcm_init(g, scm.cards(), {}, 8);
  auto [modular, mr] = modular_train(dcm, plan, data, cfg);
  auto [jointm, jr] = joint_train(dcm, data, cfg);
  Distribution truth = scm_exact_joint(scm);
  Distribution a = dcm_exact_distribution(modular, VariableSet{"X", "Y"}).reorder(truth.vars);
  Distribution b = dcm_exact_distribution(jointm, VariableSet{"X", "Y"}).reorder(truth.vars);
  CHECK(tvd(truth, a) < 1e-3);
  CHECK(tvd(truth, b) < 1e-3);
  CHECK(tvd(a, b) < 2e-3);

  // zero budget leaves parameters untouched
  FitConfig none = cfg;
  none.max_steps = 0;
  none.tolerance = 0;
  auto [unchanged, ur] = joint_train(dcm, data, none);
  CHECK(unchanged.mechanism(0).logits == dcm.mechanism(0).logits);
}

TEST_CASE("analytic gradients match central finite differences") {
  DiscreteScm scm = fixtures::frontdoor();
  const Admg& g = scm.graph();
  TrainingPlan plan = make_training_plan(g, {VariableSet{}});
  auto data = obs_exact(scm);
  Dcm dcm = dcm_init(g, scm.cards(), {}, 21);
  const PlanStage& stage = plan.stages[1];  // the confounded stage

  StageGradient sg = stage_objective(dcm, stage, data, FitConfig::Mode::ExactTable);
  REQUIRE(sg.mech_grads.count("D"));
  REQUIRE(sg.mech_grads.count("A"));
  REQUIRE(sg.prior_grads.count("D<->A"));

  const double h = 1e-4;
  Rng rng(6);
  auto check_param = [&](auto get_params, const std::vector<double>& grad) {
    for (int probe = 0; probe < 6; probe++) {
      std::size_t k = (std::size_t)rng.uniform_int((int)grad.size());
      Dcm plus = dcm, minus = dcm;
      get_params(plus)[k] += h;
      get_params(minus)[k] -= h;
      double up = stage_objective(plus, stage, data, FitConfig::Mode::ExactTable).cross_entropy;
      double dn = stage_objective(minus, stage, data, FitConfig::Mode::ExactTable).cross_entropy;
      double fd = (up - dn) / (2 * h);
      double denom = std::max({std::abs(fd), std::abs(grad[k]), 1e-8});
      CHECK_MESSAGE(std::abs(fd - grad[k]) / denom < 1e-4, "param ", k, " fd ", fd, " an ",
                    grad[k]);
    }
  };
  check_param([&](Dcm& m) -> std::vector<double>& { return m.mechanism(0).logits; },
              sg.mech_grads["D"]);
  check_param([&](Dcm& m) -> std::vector<double>& { return m.mechanism(2).logits; },
              sg.mech_grads["A"]);
  check_param([&](Dcm& m) -> std::vector<double>& { return m.confounder(0).prior_logits; },
              sg.prior_grads["D<->A"]);
}

TEST_CASE("with sharing a correlated pair is learnable; without it is not") {
  // target: strongly correlated binary pair
  Distribution target({"A", "B"}, {2, 2});
  target.at({0, 0}) = 0.48;
  target.at({0, 1}) = 0.02;
  target.at({1, 0}) = 0.02;
  target.at({1, 1}) = 0.48;

  // brute-force product floor: the best independent approximation
  double floor = 1.0;
  for (int ai = 0; ai <= 1000; ai++)
    for (int bi = 0; bi <= 1000; bi += 10) {
      double a = ai / 1000.0, b = bi / 1000.0;
      double t = 0.5 * (std::abs(target.at({0, 0}) - a * b) +
                        std::abs(target.at({0, 1}) - a * (1 - b)) +
                        std::abs(target.at({1, 0}) - (1 - a) * b) +
                        std::abs(target.at({1, 1}) - (1 - a) * (1 - b)));
      floor = std::min(floor, t);
    }
  REQUIRE(floor > 0.15);

  PlanStage stage;
  stage.hnode = VariableSet{"A", "B"};
  PlanDirective dir;
  dir.usable = true;
  stage.directives.push_back(dir);
  std::vector<LabeledData> data = {LabeledData::from_exact(target, InterventionSpec{})};

  Admg with = parse_admg("A <-> B\n");
  Dcm dcm = dcm_init(with, {2, 2}, {}, 4);
  auto [fitted, rep] = exact_fit_stage(dcm, stage, data, 1e-4);
  Distribution got = dcm_exact_distribution(fitted, VariableSet{"A", "B"}).reorder(target.vars);
  CHECK(tvd(target, got) < 0.01);

  Admg without = parse_admg("node A\nnode B\n");
  Dcm plain = dcm_init(without, {2, 2}, {}, 4);
  auto [pfit, prep] = exact_fit_stage(plain, stage, data, 1e-4);
  Distribution pgot = dcm_exact_distribution(pfit, VariableSet{"A", "B"}).reorder(target.vars);
  CHECK(tvd(target, pgot) >= floor - 1e-6);
}

TEST_CASE("multi-dataset training matches both regimes on the two-block system") {
  DiscreteScm scm = fixtures::two_block();
  const Admg& g = scm.graph();
  VariableSet z1{"Z1"};
  TrainingPlan plan = make_training_plan(g, {VariableSet{}, z1});
  InterventionSpec do_z1;
  do_z1.randomized.insert("Z1");
  auto data = exact_data_for(scm, {obs_label(), do_z1});
  Dcm dcm = dcm_init(g, scm.cards(), {}, 12);
  auto [fitted, report] = modular_exact_fit(dcm, plan, data, 1e-7);

  Distribution truth = scm_exact_joint(scm);
  Distribution got = dcm_exact_distribution(fitted, VariableSet(g.nodes())).reorder(truth.vars);
  CHECK(tvd(truth, got) < 1e-4);
  for (int v = 0; v < 2; v++) {
    Distribution po = scm_exact_joint(scm, {{"Z1", v}});
    Distribution pm =
        dcm_exact_distribution(fitted, VariableSet{"Z3", "Z2", "X1", "X2"}, {},
                               Assignment{{"Z1", v}})
            .reorder(po.vars);
    CHECK(tvd(po, pm) < 1e-4);
  }
}

TEST_CASE("sample-mode multi-dataset training with a randomized intervention") {
  DiscreteScm scm = fixtures::two_block();
  const Admg& g = scm.graph();
  TrainingPlan plan = make_training_plan(g, {VariableSet{}, VariableSet{"Z1"}});
  InterventionSpec do_z1;
  do_z1.randomized.insert("Z1");
  std::vector<LabeledData> data = {
      LabeledData::from_dataset(scm_sample(scm, 30000, {}, 5)),
      LabeledData::from_dataset(scm_sample(scm, 30000, do_z1, 6))};
  FitConfig cfg;
  cfg.mode = FitConfig::Mode::SampleBased;
  cfg.learning_rate = 0.1;
  cfg.max_steps = 1500;
  cfg.tolerance = 5e-3;
  Dcm dcm = dcm_init(g, scm.cards(), {}, 77);
  auto [trained, report] = modular_train(dcm, plan, data, cfg);
  Distribution truth = scm_exact_joint(scm);
  Distribution got = dcm_exact_distribution(trained, VariableSet(g.nodes())).reorder(truth.vars);
  CHECK(tvd(truth, got) < 0.05);
  for (int v = 0; v < 2; v++) {
    Distribution po = scm_exact_joint(scm, {{"Z1", v}});
    Distribution pm = dcm_exact_distribution(trained, VariableSet(po.vars), {},
                                             Assignment{{"Z1", v}})
                          .reorder(po.vars);
    CHECK(tvd(po, pm) < 0.05);
  }
}

TEST_CASE("reversed stage order cannot match the stage-2 joint") {
  // the planned order trains {Z1 Z2 Z3} first; reversing it forces {X1 X2}
  // to match P(x1,x2,z1,z3) against untrained ancestors, which fails
  DiscreteScm scm = fixtures::two_block();
  const Admg& g = scm.graph();
  TrainingPlan plan = make_training_plan(g, {VariableSet{}});
  REQUIRE(plan.stages.size() == 2);
  auto data = obs_exact(scm);
  VariableSet stage2_joint = plan.stages[1].hnode.unite(plan.stages[1].directives[0].ancestor_set);
  Distribution truth = scm_exact_joint(scm).marginal(stage2_joint);

  // forward: measure when the joint-matching stage concludes (it runs last)
  Dcm dcm = dcm_init(g, scm.cards(), {}, 31);
  auto [forward, fr] = modular_exact_fit(dcm, plan, data, 1e-8);
  double forward_tvd =
      tvd(truth, dcm_exact_distribution(forward, stage2_joint).reorder(truth.vars));

  // reversed: the same stage runs first; measure at the same point
  auto [after_x, xr] = exact_fit_stage(dcm, plan.stages[1], data, 1e-8);
  double reversed_tvd =
      tvd(truth, dcm_exact_distribution(after_x, stage2_joint).reorder(truth.vars));
  CHECK(reversed_tvd >= 10 * forward_tvd);
  CHECK(reversed_tvd > 0.05);  // it plateaus far from the target
}

TEST_CASE("an empty plan changes nothing") {
  DiscreteScm scm = fixtures::frontdoor();
  Dcm dcm = dcm_init(scm.graph(), scm.cards(), {}, 3);
  TrainingPlan empty;
  empty.graph = scm.graph();
  FitConfig cfg;
  auto [same, report] = modular_train(dcm, empty, {}, cfg);
  CHECK(report.stages.empty());
  for (int v = 0; v < 3; v++) CHECK(same.mechanism(v).logits == dcm.mechanism(v).logits);
}

TEST_CASE("directive with a missing label errors; uncovered columns are skipped") {
  DiscreteScm scm = fixtures::frontdoor();
  const Admg& g = scm.graph();
  TrainingPlan plan = make_training_plan(g, {VariableSet{}});
  Dcm dcm = dcm_init(g, scm.cards(), {}, 3);
  FitConfig cfg;
  cfg.mode = FitConfig::Mode::SampleBased;
  cfg.max_steps = 5;
  std::vector<LabeledData> none;
  CHECK_THROWS_AS(fit_stage(dcm, plan.stages[0], none, cfg), validation_error);

  // a dataset lacking the mediator column cannot support stage 2
  Dataset d = scm_sample(scm, 200, {}, 5).project(VariableSet{"D", "A"});
  std::vector<LabeledData> partial = {LabeledData::from_dataset(d)};
  CHECK_THROWS_AS(fit_stage(dcm, plan.stages[1], partial, cfg), untrainable_error);
}

}  // TEST_SUITE
