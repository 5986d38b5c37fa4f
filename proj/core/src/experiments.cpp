#include "modcausal/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "modcausal/fixtures.hpp"
#include "modcausal/hgraph.hpp"
#include "modcausal/identify.hpp"
#include "modcausal/metrics.hpp"

namespace modcausal {

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

void add_criterion(ExperimentReport& rep, const std::string& name, double value,
                   double threshold) {
  rep.criteria.push_back({name, value, threshold, value < threshold});
}

void append_curve(ExperimentReport& rep, const TrainReport& tr) {
  std::size_t offset = 0;
  for (const auto& stage : tr.stages) {
    std::size_t last = 0;
    for (const auto& pt : stage.trace) {
      rep.curve.push_back({offset + pt.step, pt.max_tvd, pt.cross_entropy});
      last = std::max(last, pt.step);
    }
    offset += last + 1;
  }
}

std::string set_to_string(const VariableSet& s) {
  std::string out = "{";
  bool first = true;
  for (const auto& v : s) {
    if (!first) out += " ";
    out += v;
    first = false;
  }
  return out + "}";
}

}  // namespace

bool ExperimentReport::all_passed() const {
  for (const auto& c : criteria)
    if (!c.pass) return false;
  return true;
}

std::string ExperimentReport::to_text(bool include_runtime) const {
  std::ostringstream os;
  os.precision(6);
  os << "experiment " << name << "\nconfig " << config_echo << "\n";
  for (const auto& m : metrics) os << "metric " << m.name << " tvd " << m.tvd << " kl " << m.kl << "\n";
  for (const auto& r : table_rows) os << "row " << r << "\n";
  for (const auto& n : notes) os << "note " << n << "\n";
  for (const auto& c : criteria)
    os << "criterion \"" << c.name << "\" value " << c.value << " threshold " << c.threshold << " "
       << (c.pass ? "PASS" : "FAIL") << "\n";
  if (include_runtime) os << "runtime_ms " << runtime_ms << "\n";
  return os.str();
}

std::string ExperimentReport::curve_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "step,max_tvd,cross_entropy\n";
  for (const auto& pt : curve) os << pt.step << "," << pt.max_tvd << "," << pt.cross_entropy << "\n";
  return os.str();
}

ExperimentReport run_frontdoor_experiment(const ExperimentConfig& cfg) {
  Timer timer;
  ExperimentReport rep;
  rep.name = "frontdoor";
  std::size_t n = cfg.n_samples ? cfg.n_samples : 20000;
  std::size_t steps = cfg.max_steps ? cfg.max_steps : 3000;
  rep.config_echo = "seed=" + std::to_string(cfg.seed) + " n=" + std::to_string(n) +
                    " steps=" + std::to_string(steps);

  DiscreteScm scm = fixtures::frontdoor();
  const Admg& g = scm.graph();
  TrainingPlan plan = make_training_plan(g, {VariableSet{}});

  Dataset rows = scm_sample(scm, n, {}, cfg.seed);
  std::vector<LabeledData> data = {LabeledData::from_dataset(rows)};

  FitConfig fit;
  fit.mode = FitConfig::Mode::SampleBased;
  fit.max_steps = steps;
  fit.learning_rate = 0.1;
  fit.tolerance = 2e-3;
  fit.seed = cfg.seed;
  NoiseConfig noise;
  Dcm dcm = dcm_init(g, scm.cards(), noise, cfg.seed);
  auto [trained, train_report] = modular_train(dcm, plan, data, fit);
  append_curve(rep, train_report);

  Distribution joint = scm_exact_joint(scm);
  auto oracle_da = joint.marginal(VariableSet{"D", "A"});
  auto model_da = dcm_exact_distribution(trained, VariableSet{"D", "A"});
  rep.metrics.push_back({"P(D,A) modular", tvd(oracle_da, model_da), kl(oracle_da, model_da)});
  for (int d = 0; d < 2; d++) {
    auto oracle = scm_interventional_oracle(scm, Assignment{{"D", d}}, VariableSet{"A"});
    auto model = dcm_exact_distribution(trained, VariableSet{"A"}, {}, Assignment{{"D", d}});
    rep.metrics.push_back({"P(A|do(D=" + std::to_string(d) + ")) modular", tvd(oracle, model),
                           kl(oracle, model)});
  }
  add_criterion(rep, "modular tvd P(D,A) < 0.05", rep.metrics[0].tvd, 0.05);
  add_criterion(rep, "modular tvd P(A|do(D=0)) < 0.05", rep.metrics[1].tvd, 0.05);
  add_criterion(rep, "modular tvd P(A|do(D=1)) < 0.05", rep.metrics[2].tvd, 0.05);

  // joint-training baseline at the same step budget, reported side by side
  FitConfig jfit = fit;
  jfit.max_steps = steps;
  auto [jmodel, jreport] = joint_train(dcm, data, jfit);
  auto jmodel_da = dcm_exact_distribution(jmodel, VariableSet{"D", "A"});
  rep.metrics.push_back({"P(D,A) joint-baseline", tvd(oracle_da, jmodel_da), kl(oracle_da, jmodel_da)});
  for (int d = 0; d < 2; d++) {
    auto oracle = scm_interventional_oracle(scm, Assignment{{"D", d}}, VariableSet{"A"});
    auto model = dcm_exact_distribution(jmodel, VariableSet{"A"}, {}, Assignment{{"D", d}});
    rep.metrics.push_back({"P(A|do(D=" + std::to_string(d) + ")) joint-baseline",
                           tvd(oracle, model), kl(oracle, model)});
  }

  // identification cross-check: estimand evaluation equals the enumeration oracle
  Estimand est = id_algorithm(g, VariableSet{"D"}, VariableSet{"A"});
  Distribution est_eval = evaluate_estimand(est, joint);
  double worst = 0;
  for (int d = 0; d < 2; d++) {
    auto oracle = scm_interventional_oracle(scm, Assignment{{"D", d}}, VariableSet{"A"});
    Distribution slice = est_eval.fix_condition("D", d);
    worst = std::max(worst, tvd(oracle, slice));
  }
  add_criterion(rep, "estimand equals enumeration oracle (1e-9)", worst, 1e-9);

  rep.notes.push_back("plan: " + set_to_string(plan.stages[0].hnode) + " then " +
                      set_to_string(plan.stages[1].hnode));
  rep.runtime_ms = timer.ms();
  return rep;
}

ExperimentReport run_diamond_experiment(const ExperimentConfig& cfg) {
  Timer timer;
  ExperimentReport rep;
  rep.name = "diamond";
  std::size_t n = cfg.n_samples ? cfg.n_samples : 30000;
  std::size_t steps = cfg.max_steps ? cfg.max_steps : 4000;
  rep.config_echo = "seed=" + std::to_string(cfg.seed) + " n=" + std::to_string(n) +
                    " steps=" + std::to_string(steps);

  DiscreteScm scm = fixtures::diamond();
  const Admg& g = scm.graph();
  TrainingPlan plan = make_training_plan(g, {VariableSet{}});

  bool order_ok = plan.stages.size() == 2 && plan.stages[0].hnode == VariableSet{"I2"} &&
                  plan.stages[1].hnode == VariableSet{"I1", "D", "C"};
  rep.criteria.push_back({"plan order is {I2} then {I1 D C}", order_ok ? 0.0 : 1.0, 0.5, order_ok});

  NoiseConfig noise;
  Distribution joint = scm_exact_joint(scm);
  if (cfg.include_exact_mode) {
    auto exact = exact_data_for(scm, {InterventionSpec{}});
    Dcm dcm = dcm_init(g, scm.cards(), noise, cfg.seed);
    auto [fitted, fit_report] = modular_exact_fit(dcm, plan, exact, 1e-6);
    auto model_joint = dcm_exact_distribution(fitted, VariableSet(g.nodes()));
    add_criterion(rep, "exact-mode tvd P(V) < 1e-4", tvd(joint, model_joint), 1e-4);
  }

  Dataset rows = scm_sample(scm, n, {}, cfg.seed);
  std::vector<LabeledData> data = {LabeledData::from_dataset(rows)};
  FitConfig fit;
  fit.mode = FitConfig::Mode::SampleBased;
  fit.max_steps = steps;
  fit.learning_rate = 0.1;
  fit.tolerance = 2e-3;
  fit.seed = cfg.seed;
  Dcm dcm = dcm_init(g, scm.cards(), noise, cfg.seed);
  auto [trained, train_report] = modular_train(dcm, plan, data, fit);
  append_curve(rep, train_report);

  auto model_joint = dcm_exact_distribution(trained, VariableSet(g.nodes()));
  rep.metrics.push_back({"P(V) modular(sample)", tvd(joint, model_joint), kl(joint, model_joint)});
  add_criterion(rep, "sample-mode tvd P(V) < 0.05", rep.metrics.back().tvd, 0.05);
  for (int d = 0; d < 2; d++) {
    auto oracle = scm_interventional_oracle(scm, Assignment{{"D", d}}, VariableSet{"C"});
    auto model = dcm_exact_distribution(trained, VariableSet{"C"}, {}, Assignment{{"D", d}});
    rep.metrics.push_back({"P(C|do(D=" + std::to_string(d) + "))", tvd(oracle, model),
                           kl(oracle, model)});
  }
  rep.runtime_ms = timer.ms();
  return rep;
}

ExperimentReport run_random_graph_experiment(const ExperimentConfig& cfg) {
  Timer timer;
  ExperimentReport rep;
  rep.name = "random-graphs";
  rep.config_echo = "seed=" + std::to_string(cfg.seed) + " sizes=15,25,35,50 runs=5";
  bool all_below = true;
  for (int n : {15, 25, 35, 50}) {
    double total_max = 0;
    for (int run = 0; run < 5; run++) {
      std::uint64_t seed = cfg.seed * 1000003ULL + (std::uint64_t)n * 101ULL + run;
      RandomScmOptions opts;
      DiscreteScm scm = random_scm(n, seed, opts);
      HGraph h = construct_hgraph(scm.graph());
      std::size_t largest = 0;
      for (const auto& node : h.hnodes) largest = std::max(largest, node.size());
      total_max += (double)largest;
      all_below = all_below && (int)largest <= n;
    }
    double mean = total_max / 5.0;
    std::ostringstream row;
    row << "n=" << n << " mean_max_hnode=" << mean;
    rep.table_rows.push_back(row.str());
    add_criterion(rep, "mean max h-node size < n for n=" + std::to_string(n), mean, (double)n);
  }
  rep.criteria.push_back(
      {"every max h-node size <= n", all_below ? 0.0 : 1.0, 0.5, all_below});
  rep.runtime_ms = timer.ms();
  return rep;
}

ExperimentReport run_asia_experiment(const ExperimentConfig& cfg) {
  Timer timer;
  ExperimentReport rep;
  rep.name = "asia";
  std::size_t n = cfg.n_samples ? cfg.n_samples : 40000;
  std::size_t steps = cfg.max_steps ? cfg.max_steps : 4000;
  rep.config_echo = "seed=" + std::to_string(cfg.seed) + " n=" + std::to_string(n) +
                    " steps=" + std::to_string(steps);

  DiscreteScm full = fixtures::asia_full();
  SplitResult split = split_non_markovian(fixtures::asia_observed_graph_text());
  const Admg& g = split.graph;
  TrainingPlan plan = make_training_plan(g, {VariableSet{}});

  // the only H-graph edge is from either's h-node into {lung, dysp}
  bool edge_ok = plan.hgraph.edges.size() == 1;
  for (auto& [a, b] : plan.hgraph.edges)
    edge_ok = edge_ok && plan.hgraph.hnodes[a].contains("either") &&
              plan.hgraph.hnodes[b] == VariableSet{"lung", "dysp"};
  rep.criteria.push_back(
      {"the only H-graph edge is {either} -> {lung dysp}", edge_ok ? 0.0 : 1.0, 0.5, edge_ok});

  VariableSet observed = fixtures::asia_observed_vars();
  Distribution observed_joint = scm_exact_joint(full).marginal(observed);

  std::vector<int> cards;
  for (const auto& name : g.nodes()) cards.push_back(full.card(full.graph().index_of(name)));
  NoiseConfig noise;

  auto query_oracle = [&](const std::string& target, const std::string& dovar, int v) {
    return scm_interventional_oracle(full, Assignment{{dovar, v}}, VariableSet{target});
  };

  if (cfg.include_exact_mode) {
    std::vector<LabeledData> exact = {LabeledData::from_exact(observed_joint, InterventionSpec{})};
    Dcm dcm = dcm_init(g, cards, noise, cfg.seed);
    auto [fitted, fit_report] = modular_exact_fit(dcm, plan, exact, 1e-6);
    double worst = 0;
    for (const std::string dovar : {"lung", "either"})
      for (int v = 0; v < 2; v++) {
        auto oracle = query_oracle("dysp", dovar, v);
        auto model =
            dcm_exact_distribution(fitted, VariableSet{"dysp"}, {}, Assignment{{dovar, v}});
        worst = std::max(worst, tvd(oracle, model));
      }
    add_criterion(rep, "exact-mode interventional tvd < 1e-4", worst, 1e-4);
  }

  Dataset rows = scm_sample(full, n, {}, cfg.seed).project(observed);
  std::vector<LabeledData> data = {LabeledData::from_dataset(rows)};
  FitConfig fit;
  fit.mode = FitConfig::Mode::SampleBased;
  fit.max_steps = steps;
  fit.learning_rate = 0.1;
  fit.tolerance = 2e-3;
  fit.seed = cfg.seed;
  Dcm dcm = dcm_init(g, cards, noise, cfg.seed);
  auto [trained, train_report] = modular_train(dcm, plan, data, fit);
  append_curve(rep, train_report);

  for (const std::string dovar : {"lung", "either"}) {
    double worst = 0;
    for (int v = 0; v < 2; v++) {
      auto oracle = query_oracle("dysp", dovar, v);
      auto model = dcm_exact_distribution(trained, VariableSet{"dysp"}, {}, Assignment{{dovar, v}});
      worst = std::max(worst, tvd(oracle, model));
      rep.metrics.push_back({"P(dysp|do(" + dovar + "=" + std::to_string(v) + "))",
                             tvd(oracle, model), kl(oracle, model)});
    }
    add_criterion(rep, "sample-mode tvd P(dysp|do(" + dovar + ")) < 0.05", worst, 0.05);
  }
  for (const auto& w : split.warnings) rep.notes.push_back(w);
  rep.runtime_ms = timer.ms();
  return rep;
}

ExperimentReport run_surrogate_experiment(const ExperimentConfig& cfg) {
  Timer timer;
  ExperimentReport rep;
  rep.name = "surrogate";
  std::size_t n_obs = cfg.n_samples ? cfg.n_samples : 30000;
  std::size_t n_do = cfg.n_samples ? cfg.n_samples / 3 : 10000;
  std::size_t steps = cfg.max_steps ? cfg.max_steps : 4000;
  rep.config_echo = "seed=" + std::to_string(cfg.seed) + " n_obs=" + std::to_string(n_obs) +
                    " n_do=" + std::to_string(n_do) + " steps=" + std::to_string(steps);

  DiscreteScm scm = fixtures::surrogate();
  const Admg& g = scm.graph();

  // structurally unidentifiable from the observational joint alone
  bool unid = true;
  for (const std::string target : {"Mek", "Erk", "Akt"})
    unid = unid && !id_algorithm(g, VariableSet{"PKA"}, VariableSet{target}).identifiable();
  rep.criteria.push_back(
      {"surrogate queries unidentifiable from P(V)", unid ? 0.0 : 1.0, 0.5, unid});

  VariableSet pka_label{"PKA"};
  TrainingPlan plan = make_training_plan(g, {VariableSet{}, pka_label});

  InterventionSpec do_pka;
  do_pka.fixed.set("PKA", 2);

  NoiseConfig noise;
  auto evaluate_queries = [&](const Dcm& model, double& worst) {
    worst = 0;
    for (const std::string target : {"Akt", "Erk"}) {
      auto oracle = scm_interventional_oracle(scm, do_pka.fixed, VariableSet{target});
      auto got = dcm_exact_distribution(model, VariableSet{target}, {}, do_pka.fixed);
      double t = tvd(oracle, got);
      rep.metrics.push_back({"P(" + target + "|do(PKA=2))", t, kl(oracle, got)});
      worst = std::max(worst, t);
    }
  };

  if (cfg.include_exact_mode) {
    // the interventional entry carries only the Mek margin, as in the setup
    std::vector<LabeledData> exact = {
        LabeledData::from_exact(scm_exact_joint(scm), InterventionSpec{}),
        LabeledData::from_exact(scm_exact_joint(scm, do_pka.fixed).marginal(VariableSet{"Mek"}),
                                do_pka)};
    Dcm dcm = dcm_init(g, scm.cards(), noise, cfg.seed);
    auto [fitted, fit_report] = modular_exact_fit(dcm, plan, exact, 1e-6);
    double worst = 0;
    evaluate_queries(fitted, worst);
    add_criterion(rep, "exact-mode surrogate queries tvd < 1e-4", worst, 1e-4);
    auto joint = scm_exact_joint(scm);
    auto mj = dcm_exact_distribution(fitted, VariableSet(g.nodes()));
    add_criterion(rep, "exact-mode tvd P(V) < 1e-4", tvd(joint, mj), 1e-4);
  }

  Dataset d1 = scm_sample(scm, n_obs, {}, cfg.seed);
  Dataset d2 = scm_sample(scm, n_do, do_pka, cfg.seed + 1).project(VariableSet{"Mek"});
  d2.intervention = do_pka;
  std::vector<LabeledData> data = {LabeledData::from_dataset(d1), LabeledData::from_dataset(d2)};
  FitConfig fit;
  fit.mode = FitConfig::Mode::SampleBased;
  fit.max_steps = steps;
  fit.learning_rate = 0.1;
  fit.tolerance = 2e-3;
  fit.seed = cfg.seed;
  Dcm dcm = dcm_init(g, scm.cards(), noise, cfg.seed);
  auto [trained, train_report] = modular_train(dcm, plan, data, fit);
  append_curve(rep, train_report);
  double worst = 0;
  evaluate_queries(trained, worst);
  add_criterion(rep, "sample-mode surrogate queries tvd < 0.05", worst, 0.05);
  auto joint = scm_exact_joint(scm);
  auto mj = dcm_exact_distribution(trained, VariableSet(g.nodes()));
  rep.metrics.push_back({"P(V) modular(sample)", tvd(joint, mj), kl(joint, mj)});
  add_criterion(rep, "sample-mode tvd P(V) < 0.05", rep.metrics.back().tvd, 0.05);
  rep.runtime_ms = timer.ms();
  return rep;
}

}  // namespace modcausal
