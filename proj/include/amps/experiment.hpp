#pragma once

// Replayable experiments: a declarative plan names the model, the agent
// layout, the strategies and the seeds; running it yields one trial per
// (strategy, seed) with its metrics.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "amps/data.hpp"
#include "amps/eval.hpp"
#include "amps/network.hpp"

namespace amps {

/// Library version plus the source revision it was built from.
std::string version_string();

enum class ModelKind { Gmm, Lda, Lfm };
std::string to_string(ModelKind m);
/// Throws ConfigError for unknown names.
ModelKind parse_model(const std::string& name);

struct GmmDataSettings {
  std::size_t n_train = 30;
  std::size_t n_test = 1000;
  GmmTruth truth;
};

struct LdaDataSettings {
  std::size_t n_train = 500;
  std::size_t n_test = 100;
  std::size_t doc_length = 50;
  double topic_concentration = 0.1;
  double doc_concentration = 0.5;
};

/// One strategy column of an experiment. Agent layout and the streaming
/// window may override the plan's defaults, so one plan can compare
/// A x B configurations.
struct StrategyRun {
  std::string label;
  Strategy strategy = Strategy::Naive;
  std::optional<std::size_t> agents;
  std::optional<std::size_t> subbatches;
  std::optional<std::size_t> concurrency;
};

struct ExperimentPlan {
  ModelKind model = ModelKind::Gmm;
  /// Template for every trial; strategy, master seed and threads are set
  /// per trial.
  ExperimentConfig base;
  std::vector<StrategyRun> strategies;
  std::vector<std::uint64_t> seeds;
  GmmDataSettings gmm_data;
  LdaDataSettings lda_data;
  LfmGenOptions lfm_data;
  LdaEvalOptions lda_eval;
  LfmEvalOptions lfm_eval;

  void validate() const;
};

/// Parses a JSON plan. A RunRecord is accepted too: its "config" member is
/// used. Errors are ConfigError naming the field.
ExperimentPlan parse_plan(const std::string& json_text);
ExperimentPlan load_plan(const std::filesystem::path& path);
/// Complete JSON echo with every default filled in.
std::string plan_to_json(const ExperimentPlan& plan, int indent = 2);

struct TrialData {
  TrainingData train;
  /// GMM points, LDA corpus or LFM rows held out for evaluation.
  TrainingData test;
  /// Ground-truth component parameters (means as a K x 1 column, topics,
  /// or binary features).
  RowMatrix truth;
  std::uint64_t data_seed = 0;
  std::uint64_t master_seed = 0;
};

TrialData make_trial_data(const ExperimentPlan& plan, std::uint64_t seed);

/// LDA adds document counts, the rest leave them zero.
struct Metrics {
  double test_ll = 0.0;
  /// Permutation-aligned distance to the true component parameters.
  double param_error = 0.0;
  std::size_t skipped_docs = 0;
};

Metrics evaluate(const ExperimentPlan& plan, const TrialData& data, const FactorizedPosterior& posterior);

struct TrialResult {
  std::string label;
  Strategy strategy = Strategy::Naive;
  std::uint64_t seed = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t master_seed = 0;
  std::size_t agents = 0;
  std::size_t subbatches = 0;
  Metrics metrics;
  /// Sum of the merge objectives; NaN for strategies without a merge.
  double objective = 0.0;
  /// Every merge objective trace is non-decreasing.
  bool objective_monotone = true;
  Timing timing;
};

/// The config a trial runs with.
ExperimentConfig trial_config(const ExperimentPlan& plan, const StrategyRun& run, std::uint64_t master_seed);

TrialResult run_trial(const ExperimentPlan& plan, const StrategyRun& run, const TrialData& data);

struct ExperimentOutcome {
  ExperimentPlan plan;
  /// Ordered by strategy (plan order), then seed.
  std::vector<TrialResult> trials;
};

/// Trials run on up to `threads` workers; the output never depends on it.
ExperimentOutcome run_experiment(const ExperimentPlan& plan, std::size_t threads = 1);

/// Columns: model,strategy,seed,agents,subbatches,test_ll,param_error,
/// objective,objective_monotone,skipped_docs. No timings, so reruns match
/// byte for byte.
void write_csv(std::ostream& out, const ExperimentOutcome& outcome);
void write_run_record(std::ostream& out, const ExperimentOutcome& outcome);

std::string posterior_to_json(const FactorizedPosterior& posterior, int indent = 2);

}  // namespace amps
