#include "amps/network.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <numeric>

#include "amps/errors.hpp"
#include "amps/random.hpp"
#include "parallel.hpp"

namespace amps {

namespace {

using detail::parallel_for;

// Stream tags for seeds that are not per (agent, subbatch). Agent ids stay
// far below these.
constexpr std::uint64_t kShardTag = 0x5348'4152'4400ULL;
constexpr std::uint64_t kMergeTag = 0x4d45'5247'4500ULL;
constexpr std::uint64_t kBatchTag = 0x4241'5443'4800ULL;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename F>
auto tagged(std::size_t agent, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const AgentError&) {
    throw;
  } catch (const std::exception& e) {
    throw AgentError(agent, e.what());
  }
}

std::vector<std::size_t> delivery_order(const ExperimentConfig& config) {
  std::vector<std::size_t> order = config.schedule.delivery;
  if (order.empty()) {
    order.resize(config.agents);
    std::iota(order.begin(), order.end(), 0);
  }
  std::erase_if(order, [&](std::size_t a) { return config.schedule.failed.contains(a); });
  return order;
}

std::vector<std::size_t> concat(const std::vector<std::vector<std::size_t>>& cells) {
  std::vector<std::size_t> out;
  for (const auto& c : cells) out.insert(out.end(), c.begin(), c.end());
  std::sort(out.begin(), out.end());
  return out;
}

FitOptions seeded(const FitOptions& base, std::uint64_t seed) {
  FitOptions o = base;
  o.seed = seed;
  return o;
}

MergeResult merge_messages(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
                           std::optional<MergeMethod> method, std::uint64_t seed, std::size_t swap_restarts) {
  if (method) {
    AmpsOptions opts;
    opts.method = *method;
    opts.seed = seed;
    opts.swap_restarts = swap_restarts;
    return amps_merge(prior, locals, opts);
  }
  MergeResult out;
  out.merged = naive_merge(prior, locals);
  const std::size_t n = locals.size();
  for (const auto& group : prior.symmetry_groups) {
    GroupMerge g;
    g.group = group;
    g.perms = PermutationSet::identity(n, prior.group_components(group));
    g.objective = amps_objective(prior, locals, g.perms, group);
    g.trace.push_back({0, g.objective});
    out.objective += g.objective;
    out.groups.push_back(std::move(g));
  }
  return out;
}

std::optional<MergeMethod> merge_method(Strategy s) {
  switch (s) {
    case Strategy::Naive: return std::nullopt;
    case Strategy::AmpsSwap: return MergeMethod::Swap;
    case Strategy::AmpsMatching: return MergeMethod::Matching;
    case Strategy::AmpsExhaustive: return MergeMethod::Exhaustive;
    default: throw ConfigError("strategy", to_string(s) + " is not a one-shot merge strategy");
  }
}

template <typename T>
std::vector<T> subset_of(const std::vector<T>& v, const std::vector<std::size_t>& items) {
  std::vector<T> out;
  out.reserve(items.size());
  for (std::size_t i : items) out.push_back(v.at(i));
  return out;
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Naive: return "naive";
    case Strategy::AmpsSwap: return "amps_swap";
    case Strategy::AmpsMatching: return "amps_matching";
    case Strategy::AmpsExhaustive: return "amps_exhaustive";
    case Strategy::SdaStream: return "sda_stream";
    case Strategy::AmpsHierarchical: return "amps_hierarchical";
    case Strategy::Batch: return "batch";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& name) {
  for (Strategy s : {Strategy::Naive, Strategy::AmpsSwap, Strategy::AmpsMatching, Strategy::AmpsExhaustive,
                     Strategy::SdaStream, Strategy::AmpsHierarchical, Strategy::Batch})
    if (to_string(s) == name) return s;
  throw ConfigError("strategy", "unknown strategy '" + name + "'");
}

void ExperimentConfig::validate(std::size_t n_items) const {
  if (agents < 1) throw ConfigError("agents", "must be at least 1");
  if (subbatches < 1) throw ConfigError("subbatches", "must be at least 1");
  if (threads < 1) throw ConfigError("threads", "must be at least 1");
  if (n_items < agents * subbatches)
    throw ConfigError("agents", "fewer data items than agent subbatches");
  try {
    std::visit([](const auto& spec) { spec.validate(); }, model);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("model", e.what());
  }
  for (std::size_t a : schedule.failed)
    if (a >= agents) throw ConfigError("schedule.failed", "agent id out of range");
  if (schedule.failed.size() >= agents) throw ConfigError("schedule.failed", "no surviving agents");
  if (merger >= agents) throw ConfigError("merger", "agent id out of range");
  if (schedule.failed.contains(merger)) throw ConfigError("merger", "the merging agent is in the failure set");
  if (!schedule.delivery.empty() && !is_permutation(schedule.delivery, agents))
    throw ConfigError("schedule.delivery", "must be a permutation of the agent ids");
  if (!schedule.commits.empty()) {
    std::vector<std::size_t> next(agents, 0);
    std::size_t expected = 0;
    for (const auto& [a, b] : schedule.commits) {
      if (a >= agents || b >= subbatches) throw ConfigError("schedule.commits", "event out of range");
      if (schedule.failed.contains(a)) continue;
      if (b != next[a]) throw ConfigError("schedule.commits", "subbatches of an agent must commit in order");
      ++next[a];
      ++expected;
    }
    if (expected != (agents - schedule.failed.size()) * subbatches)
      throw ConfigError("schedule.commits", "every surviving (agent, subbatch) must commit exactly once");
  }
}

Shards assign_shards(std::size_t n_items, std::size_t agents, std::size_t subbatches, ShardRule rule,
                     std::uint64_t master_seed) {
  std::vector<std::size_t> order(n_items);
  std::iota(order.begin(), order.end(), 0);
  if (rule == ShardRule::Random) {
    Rng rng(derive_seed(master_seed, kShardTag));
    rng.shuffle(order);
  }
  const std::size_t cells = agents * subbatches;
  Shards shards(agents, std::vector<std::vector<std::size_t>>(subbatches));
  for (std::size_t c = 0; c < cells; ++c) {
    auto& cell = shards[c / subbatches][c % subbatches];
    cell.assign(order.begin() + static_cast<std::ptrdiff_t>(c * n_items / cells),
                order.begin() + static_cast<std::ptrdiff_t>((c + 1) * n_items / cells));
    std::sort(cell.begin(), cell.end());
  }
  return shards;
}

std::size_t item_count(const TrainingData& data) {
  struct {
    std::size_t operator()(const std::vector<double>& v) const { return v.size(); }
    std::size_t operator()(const Corpus& c) const { return c.size(); }
    std::size_t operator()(const RowMatrix& m) const { return static_cast<std::size_t>(m.rows()); }
  } count;
  return std::visit(count, data);
}

FactorizedPosterior model_prior(const ModelSpec& spec) {
  struct {
    FactorizedPosterior operator()(const GmmSpec& s) const { return gmm_prior(s); }
    FactorizedPosterior operator()(const LdaSpec& s) const { return lda_prior(s); }
    FactorizedPosterior operator()(const LfmSpec& s) const { return lfm_prior(s); }
  } make;
  return std::visit(make, spec);
}

FitResult fit_items(const ModelSpec& spec, const TrainingData& data, const std::vector<std::size_t>& items,
                    const FactorizedPosterior& prior, const FitOptions& options) {
  if (const auto* s = std::get_if<GmmSpec>(&spec)) {
    const auto* points = std::get_if<std::vector<double>>(&data);
    if (!points) throw ShapeMismatch("fit_items: GMM needs scalar points");
    return fit_gmm_vb(subset_of(*points, items), *s, prior, options);
  }
  if (const auto* s = std::get_if<LdaSpec>(&spec)) {
    const auto* corpus = std::get_if<Corpus>(&data);
    if (!corpus) throw ShapeMismatch("fit_items: LDA needs a corpus");
    return fit_lda_vb(corpus->subset(items), *s, prior, options);
  }
  const auto* s = std::get_if<LfmSpec>(&spec);
  const auto* obs = std::get_if<RowMatrix>(&data);
  if (!obs) throw ShapeMismatch("fit_items: LFM needs an observation matrix");
  RowMatrix rows(static_cast<Eigen::Index>(items.size()), obs->cols());
  for (std::size_t i = 0; i < items.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = obs->row(items[i]);
  return fit_lfm_vb(rows, *s, prior, options);
}

DecentralizedResult run_decentralized(const ExperimentConfig& config, const TrainingData& data) {
  const std::size_t n_items = item_count(data);
  config.validate(n_items);
  const auto method = merge_method(config.strategy);
  const Shards shards = assign_shards(n_items, config.agents, config.subbatches, config.shard_rule,
                                      config.master_seed);
  const std::vector<std::size_t> order = delivery_order(config);

  DecentralizedResult out;
  out.prior = model_prior(config.model);
  out.messages.resize(order.size());
  const auto fit_start = Clock::now();
  parallel_for(order.size(), config.threads, [&](std::size_t i) {
    const std::size_t a = order[i];
    out.messages[i] = tagged(a, [&] {
      FitResult fit = fit_items(config.model, data, concat(shards[a]), out.prior,
                                seeded(config.fit, derive_seed(config.master_seed, a, 0)));
      fit.posterior.validate();
      return AgentMessage{a, std::move(fit.posterior)};
    });
  });
  out.timing.fit_seconds = seconds_since(fit_start);

  // The merger works on an immutable snapshot of what it received.
  std::vector<FactorizedPosterior> received;
  received.reserve(out.messages.size());
  for (const auto& m : out.messages) received.push_back(m.posterior);
  const auto merge_start = Clock::now();
  out.merge = tagged(config.merger, [&] {
    return merge_messages(out.prior, received, method, derive_seed(config.master_seed, kMergeTag),
                          config.swap_restarts);
  });
  out.timing.merge_seconds = seconds_since(merge_start);
  return out;
}

StreamResult run_sda_baseline(const ExperimentConfig& config, const TrainingData& data) {
  const std::size_t n_items = item_count(data);
  config.validate(n_items);
  const Shards shards = assign_shards(n_items, config.agents, config.subbatches, config.shard_rule,
                                      config.master_seed);
  const std::vector<std::size_t> order = delivery_order(config);

  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  if (config.schedule.commits.empty()) {
    for (std::size_t b = 0; b < config.subbatches; ++b)
      for (std::size_t a : order) jobs.emplace_back(a, b);
  } else {
    for (const auto& job : config.schedule.commits)
      if (!config.schedule.failed.contains(job.first)) jobs.push_back(job);
  }
  const std::size_t window = config.schedule.concurrency ? config.schedule.concurrency : order.size();

  // reads[t]: number of commits visible to job t.
  std::vector<std::size_t> reads(jobs.size());
  std::vector<std::optional<std::size_t>> last_commit(config.agents);
  for (std::size_t t = 0; t < jobs.size(); ++t) {
    std::size_t r = t + 1 > window ? t + 1 - window : 0;
    if (const auto& prev = last_commit[jobs[t].first]) r = std::max(r, *prev + 1);
    reads[t] = r;
    last_commit[jobs[t].first] = t;
  }

  StreamResult out;
  std::vector<FactorizedPosterior> states{model_prior(config.model)};
  states.reserve(jobs.size() + 1);
  std::vector<FactorizedPosterior> fitted(jobs.size());
  const auto start = Clock::now();
  // Jobs whose snapshot already exists run together; commits then apply
  // strictly in schedule order.
  for (std::size_t t = 0; t < jobs.size();) {
    std::size_t end = t;
    while (end < jobs.size() && reads[end] <= t) ++end;
    parallel_for(end - t, config.threads, [&](std::size_t i) {
      const auto [a, b] = jobs[t + i];
      fitted[t + i] = tagged(a, [&] {
        FitResult fit = fit_items(config.model, data, shards[a][b], states[reads[t + i]],
                                  seeded(config.fit, derive_seed(config.master_seed, a, b)));
        fit.posterior.validate();
        return std::move(fit.posterior);
      });
    });
    for (std::size_t j = t; j < end; ++j) {
      FactorizedPosterior next = states.back();
      const FactorizedPosterior& snapshot = states[reads[j]];
      for (auto& [name, factor] : next.factors)
        factor.rows += fitted[j].at(name).rows - snapshot.at(name).rows;
      tagged(jobs[j].first, [&] { next.validate(); });
      states.push_back(std::move(next));
      out.commits.push_back(jobs[j]);
    }
    t = end;
  }
  out.timing.fit_seconds = seconds_since(start);
  out.posterior = std::move(states.back());
  return out;
}

HierarchicalResult run_amps_hierarchical(const ExperimentConfig& config, const TrainingData& data) {
  const std::size_t n_items = item_count(data);
  config.validate(n_items);
  const Shards shards = assign_shards(n_items, config.agents, config.subbatches, config.shard_rule,
                                      config.master_seed);
  const std::vector<std::size_t> order = delivery_order(config);
  const FactorizedPosterior prior = model_prior(config.model);

  HierarchicalResult out;
  out.level1.resize(order.size());
  std::vector<double> merge_seconds(order.size(), 0.0);
  const auto start = Clock::now();
  // Each agent runs its subbatches in serial, then merges them locally.
  parallel_for(order.size(), config.threads, [&](std::size_t i) {
    const std::size_t a = order[i];
    out.level1[i] = tagged(a, [&] {
      std::vector<FactorizedPosterior> locals;
      for (std::size_t b = 0; b < config.subbatches; ++b) {
        FitResult fit = fit_items(config.model, data, shards[a][b], prior,
                                  seeded(config.fit, derive_seed(config.master_seed, a, b)));
        fit.posterior.validate();
        locals.push_back(std::move(fit.posterior));
      }
      const auto m0 = Clock::now();
      MergeResult r = merge_messages(prior, locals, config.hierarchical_method,
                                     derive_seed(config.master_seed, kMergeTag, a + 1), config.swap_restarts);
      merge_seconds[i] = seconds_since(m0);
      return r;
    });
  });
  const double level1_seconds = seconds_since(start);
  double level1_merge = 0.0;
  for (double s : merge_seconds) level1_merge += s;

  std::vector<FactorizedPosterior> agent_results;
  for (const auto& r : out.level1) agent_results.push_back(r.merged);
  const auto m0 = Clock::now();
  out.level2 = tagged(config.merger, [&] {
    return merge_messages(prior, agent_results, config.hierarchical_method,
                          derive_seed(config.master_seed, kMergeTag), config.swap_restarts);
  });
  out.timing.merge_seconds = level1_merge + seconds_since(m0);
  out.timing.fit_seconds = std::max(0.0, level1_seconds - level1_merge);
  return out;
}

StrategyOutcome run_strategy(const ExperimentConfig& config, const TrainingData& data) {
  StrategyOutcome out;
  switch (config.strategy) {
    case Strategy::Batch: {
      const std::size_t n = item_count(data);
      config.validate(n);
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), 0);
      const auto start = Clock::now();
      FitResult fit = fit_items(config.model, data, all, model_prior(config.model),
                                seeded(config.fit, derive_seed(config.master_seed, kBatchTag)));
      out.timing.fit_seconds = seconds_since(start);
      out.posterior = std::move(fit.posterior);
      return out;
    }
    case Strategy::SdaStream: {
      StreamResult r = run_sda_baseline(config, data);
      out.posterior = std::move(r.posterior);
      out.timing = r.timing;
      return out;
    }
    case Strategy::AmpsHierarchical: {
      HierarchicalResult r = run_amps_hierarchical(config, data);
      out.posterior = std::move(r.level2.merged);
      out.groups = std::move(r.level2.groups);
      out.timing = r.timing;
      return out;
    }
    default: {
      DecentralizedResult r = run_decentralized(config, data);
      out.posterior = std::move(r.merge.merged);
      out.groups = std::move(r.merge.groups);
      out.timing = r.timing;
      return out;
    }
  }
}

}  // namespace amps
