#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "modcausal/dcm.hpp"
#include "modcausal/hgraph.hpp"
#include "modcausal/scm.hpp"

namespace modcausal {

struct FitConfig {
  enum class Mode { SampleBased, ExactTable };
  enum class Optimizer { Adam, EmRefine };

  double learning_rate = 0.05;  // adapted for softmax tables
  std::size_t max_steps = 4000;
  double tolerance = 1e-3;  // stop when every directive's TVD is below this
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  Mode mode = Mode::SampleBased;
  Optimizer optimizer = Optimizer::Adam;
  std::uint64_t seed = 0;
  std::size_t trace_every = 25;
  int em_restarts = 4;

  void validate() const {
    if (!(learning_rate > 0)) throw validation_error("FitConfig: learning_rate must be positive");
    if (tolerance < 0) throw validation_error("FitConfig: tolerance must be nonnegative");
  }
};

/// Training data for one intervention label: sampled rows or an exact
/// distribution whose conditioning axes are the label's randomized variables.
struct LabeledData {
  InterventionSpec intervention;
  std::optional<Dataset> rows;
  std::optional<Distribution> exact;

  VariableSet label() const { return intervention.variables(); }
  static LabeledData from_dataset(Dataset d);
  static LabeledData from_exact(Distribution exact, InterventionSpec intervention);
};

struct TracePoint {
  std::size_t step = 0;
  double max_tvd = 0;
  double cross_entropy = 0;
};

struct DirectiveReport {
  VariableSet label;
  bool used = false;
  std::string note;
  double final_tvd = 0;
  double final_ce = 0;
};

struct StageReport {
  VariableSet hnode;
  std::size_t steps = 0;
  std::vector<DirectiveReport> directives;
  std::vector<TracePoint> trace;
  double wall_ms = 0;
};

struct TrainReport {
  std::vector<StageReport> stages;
  double wall_ms = 0;
  std::string to_text() const;
};

/// Frequency table of target given `given`, with additive smoothing 1e-9 on
/// nonempty conditioning slices; empty slices come out uniform (they carry
/// zero weight in training and are reported there).
Distribution empirical_conditional(const Dataset& d, const VariableSet& target,
                                   const VariableSet& given);

/// Stage objective value and analytic gradient in logit space, exposed so the
/// gradients can be verified against finite differences.
struct StageGradient {
  double cross_entropy = 0;
  double max_tvd = 0;
  std::map<std::string, std::vector<double>> mech_grads;   // per trainable variable
  std::map<std::string, std::vector<double>> prior_grads;  // per trainable edge "A<->B"
};
StageGradient stage_objective(const Dcm& dcm, const PlanStage& stage,
                              const std::vector<LabeledData>& data, FitConfig::Mode mode);

/// Fits the mechanisms of stage.hnode against every usable directive, holding
/// everything else frozen. Returns the updated model and the stage report
/// (per-step divergence trace included).
std::pair<Dcm, StageReport> fit_stage(const Dcm& dcm, const PlanStage& stage,
                                      const std::vector<LabeledData>& data,
                                      const FitConfig& cfg);

/// Runs fit_stage for every stage of the plan in order.
std::pair<Dcm, TrainReport> modular_train(const Dcm& dcm, const TrainingPlan& plan,
                                          const std::vector<LabeledData>& data,
                                          const FitConfig& cfg);

/// Baseline: one stage over all variables matching the full joint per label.
std::pair<Dcm, TrainReport> joint_train(const Dcm& dcm, const std::vector<LabeledData>& data,
                                        const FitConfig& cfg);

/// Solves the stage's matching problems to numerical optimality: closed-form
/// rows for unconfounded mechanisms, EM refinement (with restarts) for
/// mechanisms sharing confounder noise. Expects exact-mode data.
std::pair<Dcm, StageReport> exact_fit_stage(const Dcm& dcm, const PlanStage& stage,
                                            const std::vector<LabeledData>& data,
                                            double tolerance = 1e-8);

/// exact_fit_stage over every stage of the plan, in order.
std::pair<Dcm, TrainReport> modular_exact_fit(const Dcm& dcm, const TrainingPlan& plan,
                                              const std::vector<LabeledData>& data,
                                              double tolerance = 1e-8);

/// Exact-mode data helper: the full label family of exact distributions for
/// a ground-truth SCM (observational plus one entry per intervention label).
std::vector<LabeledData> exact_data_for(const DiscreteScm& scm,
                                        const std::vector<InterventionSpec>& labels);

}  // namespace modcausal
