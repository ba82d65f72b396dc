#pragma once

// Deterministic simulation of decentralized agents. Each agent fits its own
// shard, broadcasts its posterior once, and a designated merger combines the
// survivors' messages. Asynchrony is an explicit delivery schedule, so runs
// are reproducible while still showing order effects in the streaming
// baseline.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "amps/corpus.hpp"
#include "amps/merge.hpp"
#include "amps/models.hpp"
#include "amps/posterior.hpp"

namespace amps {

using ModelSpec = std::variant<GmmSpec, LdaSpec, LfmSpec>;

/// Training items: GMM points, LDA documents, or LFM observation rows.
using TrainingData = std::variant<std::vector<double>, Corpus, RowMatrix>;

enum class Strategy {
  Naive,
  AmpsSwap,
  AmpsMatching,
  AmpsExhaustive,
  SdaStream,
  AmpsHierarchical,
  /// Single fit on the pooled data; the reference point.
  Batch,
};

std::string to_string(Strategy s);
/// Throws ConfigError for unknown names.
Strategy parse_strategy(const std::string& name);

enum class ShardRule { Contiguous, Random };

struct Schedule {
  /// Order in which broadcasts reach the merger. Empty means agent order.
  std::vector<std::size_t> delivery;
  /// Streaming commit order as (agent, subbatch) events; each agent's
  /// subbatches must appear in increasing order. Empty means round-robin
  /// over subbatches, agents in delivery order.
  std::vector<std::pair<std::size_t, std::size_t>> commits;
  /// Streaming jobs in flight at once: job t reads the shared state holding
  /// the first t - concurrency + 1 commits (and always its own agent's
  /// earlier ones). Zero means one per surviving agent, so a single round
  /// of the baseline is the naive merge.
  std::size_t concurrency = 0;
  /// Agents that never broadcast or commit.
  std::set<std::size_t> failed;
};

struct ExperimentConfig {
  ModelSpec model = GmmSpec{};
  std::size_t agents = 1;
  std::size_t subbatches = 1;
  Strategy strategy = Strategy::AmpsMatching;
  ShardRule shard_rule = ShardRule::Contiguous;
  std::uint64_t master_seed = 0;
  Schedule schedule;
  FitOptions fit;
  std::size_t swap_restarts = 10;
  /// Optimizer used at both levels of the hierarchical merge.
  MergeMethod hierarchical_method = MergeMethod::Matching;
  /// Worker threads for agent fits; results never depend on it.
  std::size_t threads = 1;
  /// Agent that performs the merge; must survive.
  std::size_t merger = 0;

  /// Throws ConfigError naming the offending field.
  void validate(std::size_t n_items) const;
};

struct AgentMessage {
  std::size_t sender = 0;
  FactorizedPosterior posterior;
};

/// shards[agent][subbatch] lists item indices. Every item lands in exactly
/// one cell; cells are as even as the item count allows.
using Shards = std::vector<std::vector<std::vector<std::size_t>>>;
Shards assign_shards(std::size_t n_items, std::size_t agents, std::size_t subbatches, ShardRule rule,
                     std::uint64_t master_seed);

std::size_t item_count(const TrainingData& data);
FactorizedPosterior model_prior(const ModelSpec& spec);
/// Fits the model to the listed items. Throws ShapeMismatch when the data
/// kind does not match the model.
FitResult fit_items(const ModelSpec& spec, const TrainingData& data, const std::vector<std::size_t>& items,
                    const FactorizedPosterior& prior, const FitOptions& options);

struct Timing {
  double fit_seconds = 0.0;
  double merge_seconds = 0.0;
};

struct DecentralizedResult {
  FactorizedPosterior prior;
  /// Survivors' broadcasts in delivery order.
  std::vector<AgentMessage> messages;
  MergeResult merge;
  Timing timing;
};

/// Each surviving agent fits its whole shard and broadcasts once; the merger
/// combines the messages with the configured strategy (naive or one of the
/// AMPS optimizers). Fit failures surface as AgentError.
DecentralizedResult run_decentralized(const ExperimentConfig& config, const TrainingData& data);

struct StreamResult {
  FactorizedPosterior posterior;
  /// Commit events in the order applied.
  std::vector<std::pair<std::size_t, std::size_t>> commits;
  Timing timing;
};

/// Streaming baseline: one shared natural-parameter state; each subbatch
/// job fits with its snapshot of the shared state as prior and commits
/// lambda_new - lambda_prior. No permutation alignment anywhere.
StreamResult run_sda_baseline(const ExperimentConfig& config, const TrainingData& data);

struct HierarchicalResult {
  /// Per surviving agent, the merge of its own subbatch posteriors.
  std::vector<MergeResult> level1;
  MergeResult level2;
  Timing timing;
};

HierarchicalResult run_amps_hierarchical(const ExperimentConfig& config, const TrainingData& data);

struct StrategyOutcome {
  FactorizedPosterior posterior;
  /// Merge groups with their objective traces; empty for batch and stream.
  std::vector<GroupMerge> groups;
  Timing timing;
};

/// Dispatches on config.strategy.
StrategyOutcome run_strategy(const ExperimentConfig& config, const TrainingData& data);

}  // namespace amps
