// modular-causal: command-line front end for the modular causal generative
// model toolkit. Subcommands: analyze, plan, identify, simulate, train,
// sample, evaluate, experiment.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "modcausal/dcm.hpp"
#include "modcausal/experiments.hpp"
#include "modcausal/hgraph.hpp"
#include "modcausal/identify.hpp"
#include "modcausal/metrics.hpp"
#include "modcausal/scm.hpp"
#include "modcausal/trainer.hpp"

namespace {

using namespace modcausal;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitUntrainable = 3;
constexpr int kExitNumeric = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw validation_error("cannot write '" + path + "'");
  out << content;
}

// Graph files may use latent declarations; those are split into bidirected
// edges on load.
Admg load_graph(const std::string& path) {
  std::string text = read_file(path);
  if (text.find("latent ") != std::string::npos) {
    SplitResult split = split_non_markovian(text);
    for (const auto& w : split.warnings) std::cerr << "warning: " << w << "\n";
    return split.graph;
  }
  return parse_admg(text);
}

VariableSet parse_label(const std::string& text) {
  std::vector<std::string> names;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      if (!cur.empty()) names.push_back(cur);
      cur.clear();
    } else if (!isspace((unsigned char)c)) {
      cur += c;
    }
  }
  if (!cur.empty()) names.push_back(cur);
  return VariableSet(names);
}

Assignment parse_assignment(const std::vector<std::string>& tokens) {
  Assignment a;
  for (const auto& tok : tokens) {
    auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw validation_error("expected VAR=value, got '" + tok + "'");
    a.set(tok.substr(0, eq), std::stoi(tok.substr(eq + 1)));
  }
  return a;
}

struct Query {
  VariableSet target;
  Assignment dovals;
};

Query parse_query(const std::string& text) {
  auto bar = text.find('|');
  if (bar == std::string::npos)
    throw validation_error("query must look like \"A|do(D=0)\", got '" + text + "'");
  Query q;
  q.target = parse_label(text.substr(0, bar));
  std::string rest = text.substr(bar + 1);
  auto open = rest.find("do(");
  auto close = rest.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw validation_error("query must look like \"A|do(D=0)\", got '" + text + "'");
  std::string inner = rest.substr(open + 3, close - open - 3);
  std::vector<std::string> toks;
  std::string cur;
  for (char c : inner) {
    if (c == ',') {
      toks.push_back(cur);
      cur.clear();
    } else if (!isspace((unsigned char)c)) {
      cur += c;
    }
  }
  if (!cur.empty()) toks.push_back(cur);
  q.dovals = parse_assignment(toks);
  return q;
}

void print_set(std::ostream& os, const Admg& g, const VariableSet& s) {
  os << "{";
  auto idx = g.indices_of(s);
  for (std::size_t i = 0; i < idx.size(); i++) os << (i ? " " : "") << g.name_of(idx[i]);
  os << "}";
}

FitConfig load_fit_config(const std::string& path, std::string* scm_path, NoiseConfig* noise) {
  FitConfig cfg;
  std::istringstream is(read_file(path));
  std::string line;
  if (!std::getline(is, line) || line != "config v1")
    throw validation_error("config: missing 'config v1' header");
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "mode") {
      std::string m;
      ls >> m;
      if (m == "sample")
        cfg.mode = FitConfig::Mode::SampleBased;
      else if (m == "exact")
        cfg.mode = FitConfig::Mode::ExactTable;
      else
        throw validation_error("config: mode must be sample or exact");
    } else if (key == "optimizer") {
      std::string m;
      ls >> m;
      if (m == "adam")
        cfg.optimizer = FitConfig::Optimizer::Adam;
      else if (m == "em")
        cfg.optimizer = FitConfig::Optimizer::EmRefine;
      else
        throw validation_error("config: optimizer must be adam or em");
    } else if (key == "learning_rate") {
      ls >> cfg.learning_rate;
    } else if (key == "max_steps") {
      ls >> cfg.max_steps;
    } else if (key == "tolerance") {
      ls >> cfg.tolerance;
    } else if (key == "seed") {
      ls >> cfg.seed;
    } else if (key == "scm") {
      ls >> *scm_path;
    } else if (key == "exo_card") {
      ls >> noise->exo_card;
    } else if (key == "confounder_card") {
      ls >> noise->confounder_card;
    } else if (key == "confounder_scale") {
      ls >> noise->confounder_card_scale;
    } else if (key == "trainable_prior") {
      int f;
      ls >> f;
      noise->trainable_confounder_prior = f != 0;
    } else if (key == "init_scale") {
      ls >> noise->init_scale;
    } else {
      throw validation_error("config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"modular trainer for causal generative models over ADMGs"};
  app.require_subcommand(1);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "c-components, H-graph, training order");
  std::string analyze_graph;
  analyze->add_option("graph", analyze_graph, "graph file")->required();

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "emit the canonical training plan");
  std::string plan_graph, plan_out;
  std::vector<std::string> plan_labels;
  bool plan_hgraphs = false;
  plan_cmd->add_option("graph", plan_graph, "graph file")->required();
  plan_cmd->add_option("--do", plan_labels, "intervention label (comma-separated variables)");
  plan_cmd->add_option("-o,--out", plan_out, "write the plan here instead of stdout");
  plan_cmd->add_flag("--hgraphs", plan_hgraphs, "also print the per-label H-graphs");

  // identify
  auto* ident = app.add_subcommand("identify", "symbolic identification of P(target|do(...))");
  std::string ident_graph;
  std::vector<std::string> ident_do, ident_target;
  ident->add_option("graph", ident_graph, "graph file")->required();
  ident->add_option("--do", ident_do, "intervened variable (value optional)")->required();
  ident->add_option("--target", ident_target, "outcome variable")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "sample a ground-truth SCM to CSV");
  std::string sim_scm, sim_out;
  std::size_t sim_n = 1000;
  std::uint64_t sim_seed = 1;
  std::vector<std::string> sim_do, sim_do_uniform;
  sim->add_option("scm", sim_scm, "scm spec file")->required();
  sim->add_option("-n", sim_n, "rows");
  sim->add_option("--seed", sim_seed, "rng seed");
  sim->add_option("--do", sim_do, "fixed intervention VAR=value");
  sim->add_option("--do-uniform", sim_do_uniform, "uniformly randomized intervention VAR");
  sim->add_option("-o,--out", sim_out, "output csv (manifest written alongside)")->required();

  // train
  auto* train = app.add_subcommand("train", "run a training plan against datasets");
  std::string train_plan, train_config, train_out, train_report_path;
  std::vector<std::string> train_data;
  bool train_joint = false;
  train->add_option("plan", train_plan, "plan file")->required();
  train->add_option("data", train_data, "dataset csv files (manifest sidecars expected)")
      ->required();
  train->add_option("--config", train_config, "fit config file")->required();
  train->add_option("-o,--out", train_out, "checkpoint output path")->required();
  train->add_option("--report", train_report_path, "write the training report here");
  train->add_flag("--joint-baseline", train_joint, "train all mechanisms together instead");

  // sample
  auto* sample = app.add_subcommand("sample", "sample a trained model");
  std::string sample_ckpt, sample_out;
  std::size_t sample_n = 1000;
  std::uint64_t sample_seed = 1;
  std::vector<std::string> sample_do;
  sample->add_option("checkpoint", sample_ckpt, "checkpoint file")->required();
  sample->add_option("-n", sample_n, "rows");
  sample->add_option("--seed", sample_seed, "rng seed");
  sample->add_option("--do", sample_do, "intervention VAR=value");
  sample->add_option("-o,--out", sample_out, "output csv (stdout when omitted)");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "compare a checkpoint against an SCM oracle");
  std::string eval_ckpt, eval_scm;
  std::vector<std::string> eval_queries;
  double eval_fail_above = -1;
  eval->add_option("checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("scm", eval_scm, "ground-truth scm spec")->required();
  eval->add_option("--queries", eval_queries, "queries like \"A|do(D=0)\"")->required();
  eval->add_option("--fail-above", eval_fail_above, "exit 4 if any query TVD exceeds this");

  // experiment
  auto* exp = app.add_subcommand("experiment", "run one of the built-in studies");
  std::string exp_name, exp_config, exp_out;
  exp->add_option("name", exp_name, "frontdoor|diamond|random-graphs|asia|surrogate")->required();
  exp->add_option("--config", exp_config, "experiment config file");
  exp->add_option("-o,--out", exp_out, "directory for report + curve csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*analyze) {
    Admg g = load_graph(analyze_graph);
    auto comps = c_components(g);
    std::cout << "c-components:\n";
    for (const auto& c : comps) {
      std::cout << "  ";
      print_set(std::cout, g, c);
      std::cout << "\n";
    }
    HGraph h = construct_hgraph(g);
    std::cout << "h-graph:\n";
    for (std::size_t i = 0; i < h.hnodes.size(); i++) {
      std::cout << "  H" << i << " = ";
      print_set(std::cout, g, h.hnodes[i]);
      std::cout << "\n";
    }
    for (auto& [a, b] : h.edges) std::cout << "  H" << a << " -> H" << b << "\n";
    std::cout << "training order:\n";
    auto levels = partial_order(h);
    for (std::size_t l = 0; l < levels.size(); l++) {
      std::cout << "  level " << l << ":";
      for (int idx : levels[l]) {
        std::cout << " ";
        print_set(std::cout, g, h.hnodes[idx]);
      }
      std::cout << "\n";
    }
    return kExitOk;
  }

  if (*plan_cmd) {
    Admg g = load_graph(plan_graph);
    std::vector<VariableSet> labels = {VariableSet{}};
    for (const auto& text : plan_labels) {
      VariableSet label = parse_label(text);
      if (!label.empty()) labels.push_back(label);
    }
    TrainingPlan plan = make_training_plan(g, labels);
    std::string text = plan.to_text();
    if (plan_hgraphs) {
      std::ostringstream extra;
      for (const auto& label : labels) {
        extra << "# H-graph for label ";
        print_set(extra, g, label);
        extra << "\n";
        HGraph h = label.empty() ? plan.hgraph
                                 : construct_hgraph_interventional(g, label, plan.hgraph);
        extra << h.to_text();
      }
      text += extra.str();
    }
    if (plan_out.empty())
      std::cout << text;
    else
      write_file(plan_out, text);
    return kExitOk;
  }

  if (*ident) {
    Admg g = load_graph(ident_graph);
    VariableSet x, y;
    for (auto tok : ident_do) {
      auto eq = tok.find('=');
      x.insert(eq == std::string::npos ? tok : tok.substr(0, eq));
    }
    for (const auto& tok : ident_target) y = y.unite(parse_label(tok));
    Estimand e = id_algorithm(g, x, y);
    if (!e.identifiable()) {
      std::cout << "UNIDENTIFIABLE " << e.to_sexpr() << "\n";
      return kExitUntrainable;
    }
    std::cout << e.to_sexpr() << "\n";
    return kExitOk;
  }

  if (*sim) {
    DiscreteScm scm = parse_scm(read_file(sim_scm));
    InterventionSpec spec;
    spec.fixed = parse_assignment(sim_do);
    for (const auto& v : sim_do_uniform) spec.randomized.insert(v);
    Dataset d = scm_sample(scm, sim_n, spec, sim_seed);
    write_file(sim_out, dataset_to_csv(d));
    write_file(sim_out + ".manifest", dataset_manifest(d));
    std::cout << "wrote " << d.n_rows << " rows to " << sim_out << "\n";
    return kExitOk;
  }

  if (*train) {
    TrainingPlan plan = parse_plan(read_file(train_plan));
    std::string scm_path;
    NoiseConfig noise;
    FitConfig cfg = load_fit_config(train_config, &scm_path, &noise);
    std::vector<LabeledData> data;
    std::map<std::string, int> cards;
    for (const auto& path : train_data) {
      Dataset d = dataset_from_csv(read_file(path), read_file(path + ".manifest"));
      for (std::size_t i = 0; i < d.variables.size(); i++)
        cards[d.variables[i]] = std::max(cards[d.variables[i]], d.cards[i]);
      data.push_back(LabeledData::from_dataset(std::move(d)));
    }
    if (cfg.mode == FitConfig::Mode::ExactTable) {
      if (scm_path.empty())
        throw validation_error("exact mode needs 'scm <path>' in the config");
      DiscreteScm scm = parse_scm(read_file(scm_path));
      std::vector<InterventionSpec> specs;
      for (const auto& d : data) specs.push_back(d.intervention);
      data = exact_data_for(scm, specs);
      for (std::size_t v = 0; v < scm.graph().size(); v++)
        cards[scm.graph().name_of((int)v)] = scm.card((int)v);
    }
    std::vector<int> card_vec;
    for (const auto& name : plan.graph.nodes()) {
      auto it = cards.find(name);
      if (it == cards.end())
        throw validation_error("no dataset provides the cardinality of '" + name + "'");
      card_vec.push_back(it->second);
    }
    Dcm dcm = dcm_init(plan.graph, card_vec, noise, cfg.seed);
    Dcm trained;
    TrainReport report;
    if (train_joint) {
      std::tie(trained, report) = joint_train(dcm, data, cfg);
    } else if (cfg.optimizer == FitConfig::Optimizer::EmRefine) {
      std::tie(trained, report) = modular_exact_fit(dcm, plan, data, cfg.tolerance);
    } else {
      std::tie(trained, report) = modular_train(dcm, plan, data, cfg);
    }
    write_file(train_out, trained.to_checkpoint());
    std::string report_text = report.to_text();
    if (!train_report_path.empty()) write_file(train_report_path, report_text);
    std::cout << report_text << "checkpoint written to " << train_out << "\n";
    return kExitOk;
  }

  if (*sample) {
    Dcm dcm = Dcm::from_checkpoint(read_file(sample_ckpt));
    Assignment dovals = parse_assignment(sample_do);
    Dataset d = dcm_forward_sample(dcm, sample_n, dovals, nullptr, sample_seed);
    std::string csv = dataset_to_csv(d);
    if (sample_out.empty()) {
      std::cout << csv;
    } else {
      write_file(sample_out, csv);
      write_file(sample_out + ".manifest", dataset_manifest(d));
    }
    return kExitOk;
  }

  if (*eval) {
    Dcm dcm = Dcm::from_checkpoint(read_file(eval_ckpt));
    DiscreteScm scm = parse_scm(read_file(eval_scm));
    if (!(scm.graph() == dcm.graph()))
      throw validation_error("checkpoint and scm disagree on the graph");
    double worst = 0;
    for (const auto& qtext : eval_queries) {
      Query q = parse_query(qtext);
      Distribution oracle = scm_interventional_oracle(scm, q.dovals, q.target);
      Distribution model = dcm_exact_distribution(dcm, q.target, {}, q.dovals);
      double t = tvd(oracle, model);
      worst = std::max(worst, t);
      std::cout << qtext << " tvd " << t << " kl " << kl(oracle, model) << "\n";
    }
    if (eval_fail_above >= 0 && worst > eval_fail_above) {
      std::cerr << "numeric failure: worst tvd " << worst << " exceeds " << eval_fail_above
                << "\n";
      return kExitNumeric;
    }
    return kExitOk;
  }

  if (*exp) {
    ExperimentConfig cfg;
    if (!exp_config.empty()) {
      std::istringstream is(read_file(exp_config));
      std::string line;
      while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "seed")
          ls >> cfg.seed;
        else if (key == "samples")
          ls >> cfg.n_samples;
        else if (key == "steps")
          ls >> cfg.max_steps;
        else if (key == "exact") {
          int f;
          ls >> f;
          cfg.include_exact_mode = f != 0;
        } else
          throw validation_error("experiment config: unknown key '" + key + "'");
      }
    }
    cfg.out_dir = exp_out;
    ExperimentReport rep;
    if (exp_name == "frontdoor")
      rep = run_frontdoor_experiment(cfg);
    else if (exp_name == "diamond")
      rep = run_diamond_experiment(cfg);
    else if (exp_name == "random-graphs")
      rep = run_random_graph_experiment(cfg);
    else if (exp_name == "asia")
      rep = run_asia_experiment(cfg);
    else if (exp_name == "surrogate")
      rep = run_surrogate_experiment(cfg);
    else
      throw validation_error("unknown experiment '" + exp_name + "'");
    std::cout << rep.to_text();
    if (!exp_out.empty()) {
      std::filesystem::create_directories(exp_out);
      write_file(exp_out + "/" + rep.name + "_report.txt", rep.to_text());
      write_file(exp_out + "/" + rep.name + "_curve.csv", rep.curve_csv());
    }
    return rep.all_passed() ? kExitOk : kExitNumeric;
  }

  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const untrainable_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUntrainable;
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
