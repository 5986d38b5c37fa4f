#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modcausal/trainer.hpp"

namespace modcausal {

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t n_samples = 0;  // 0: experiment default
  std::size_t max_steps = 0;  // 0: experiment default
  bool include_exact_mode = true;
  std::string out_dir;  // when nonempty, the CLI writes report + curve files
};

struct MetricRow {
  std::string name;
  double tvd = 0;
  double kl = 0;
};

struct CriterionRow {
  std::string name;
  double value = 0;
  double threshold = 0;
  bool pass = false;
};

struct ExperimentReport {
  std::string name;
  std::string config_echo;  // seed and sizes; rerunning with these reproduces the tables
  std::vector<MetricRow> metrics;
  std::vector<CriterionRow> criteria;
  std::vector<std::string> notes;
  std::vector<std::string> table_rows;  // free-form extra rows (study tables)
  std::vector<TracePoint> curve;
  double runtime_ms = 0;

  bool all_passed() const;
  std::string to_text(bool include_runtime = true) const;
  std::string curve_csv() const;
};

ExperimentReport run_frontdoor_experiment(const ExperimentConfig& cfg);
ExperimentReport run_diamond_experiment(const ExperimentConfig& cfg);
ExperimentReport run_random_graph_experiment(const ExperimentConfig& cfg);
ExperimentReport run_asia_experiment(const ExperimentConfig& cfg);
ExperimentReport run_surrogate_experiment(const ExperimentConfig& cfg);

}  // namespace modcausal
