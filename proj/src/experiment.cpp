#include "amps/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "amps/errors.hpp"
#include "amps/random.hpp"
#include "parallel.hpp"

#ifndef AMPS_VERSION
#define AMPS_VERSION "0.1.0"
#endif

namespace amps {

using nlohmann::json;

namespace {

constexpr std::uint64_t kTestTag = 0x5445'5354'0000ULL;
constexpr std::uint64_t kSplitTag = 0x5350'4c49'5400ULL;
constexpr std::uint64_t kNetworkTag = 0x4e45'5400'0000ULL;
constexpr std::uint64_t kEvalTag = 0x4556'414c'0000ULL;

// Strict view of one JSON object: reads record which keys were used so that
// finish() can reject the rest.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return as<T>(raw(key), field(key));
  }

  template <typename T>
  static T as(const json& v, const std::string& name) {
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
          throw ConfigError(name, "expected a non-negative integer");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(name, "expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(name, "expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name, e.what());
    }
  }

  Reader child(const std::string& key) { return Reader(raw(key), field(key)); }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.contains(key)) throw ConfigError(field(key), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string method_name(MergeMethod m) {
  switch (m) {
    case MergeMethod::Swap: return "swap";
    case MergeMethod::Matching: return "matching";
    case MergeMethod::Exhaustive: return "exhaustive";
  }
  return "unknown";
}

MergeMethod parse_method(const std::string& s, const std::string& field) {
  for (MergeMethod m : {MergeMethod::Swap, MergeMethod::Matching, MergeMethod::Exhaustive})
    if (method_name(m) == s) return m;
  throw ConfigError(field, "unknown merge method '" + s + "'");
}

std::string holdout_name(LfmHoldout h) { return h == LfmHoldout::OneOfD ? "one_of_d" : "pixel_fraction"; }

LfmHoldout parse_holdout(const std::string& s, const std::string& field) {
  if (s == "one_of_d") return LfmHoldout::OneOfD;
  if (s == "pixel_fraction") return LfmHoldout::PixelFraction;
  throw ConfigError(field, "unknown holdout mode '" + s + "'");
}

std::vector<double> number_list(const json& v, const std::string& field) {
  if (!v.is_array()) throw ConfigError(field, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(Reader::as<double>(x, field));
  return out;
}

std::vector<std::size_t> index_list(const json& v, const std::string& field) {
  if (!v.is_array()) throw ConfigError(field, "expected an array of integers");
  std::vector<std::size_t> out;
  for (const auto& x : v) out.push_back(Reader::as<std::size_t>(x, field));
  return out;
}

void read_gmm(Reader r, ExperimentPlan& plan) {
  GmmSpec spec;
  spec.components = r.get("components", spec.components);
  spec.component_variance = r.get("component_variance", spec.component_variance);
  spec.prior_mean = r.get("prior_mean", spec.prior_mean);
  spec.prior_variance = r.get("prior_variance", spec.prior_variance);
  spec.dirichlet_prior = r.has("dirichlet_prior") ? number_list(r.raw("dirichlet_prior"), r.field("dirichlet_prior"))
                                                  : std::vector<double>(spec.components, 1.0);
  auto& d = plan.gmm_data;
  d.n_train = r.get("n_train", d.n_train);
  d.n_test = r.get("n_test", d.n_test);
  if (r.has("true_means")) d.truth.means = number_list(r.raw("true_means"), r.field("true_means"));
  if (r.has("true_weights")) d.truth.weights = number_list(r.raw("true_weights"), r.field("true_weights"));
  d.truth.variance = r.get("true_variance", d.truth.variance);
  r.finish();
  plan.base.model = spec;
}

void read_lda(Reader r, ExperimentPlan& plan) {
  LdaSpec spec;
  spec.topics = r.get("topics", spec.topics);
  spec.vocabulary = r.get("vocabulary", spec.vocabulary);
  spec.topic_word_prior = r.get("topic_word_prior", spec.topic_word_prior);
  spec.doc_topic_prior = r.get("doc_topic_prior", spec.doc_topic_prior);
  spec.local_max_iters = r.get("local_max_iters", spec.local_max_iters);
  spec.local_tol = r.get("local_tol", spec.local_tol);
  auto& d = plan.lda_data;
  d.n_train = r.get("n_train", d.n_train);
  d.n_test = r.get("n_test", d.n_test);
  d.doc_length = r.get("doc_length", d.doc_length);
  d.topic_concentration = r.get("topic_concentration", d.topic_concentration);
  d.doc_concentration = r.get("doc_concentration", d.doc_concentration);
  plan.lda_eval.holdout_fraction = r.get("holdout_fraction", plan.lda_eval.holdout_fraction);
  plan.lda_eval.fold_in_iters = r.get("fold_in_iters", plan.lda_eval.fold_in_iters);
  plan.lda_eval.doc_topic_prior = spec.doc_topic_prior;
  r.finish();
  plan.base.model = spec;
}

void read_lfm(Reader r, ExperimentPlan& plan) {
  LfmSpec spec;
  spec.features = r.get("features", spec.features);
  spec.dim = r.get("dim", spec.dim);
  spec.feature_prior_variance = r.get("feature_prior_variance", spec.feature_prior_variance);
  spec.beta_a = r.get("beta_a", spec.beta_a);
  spec.beta_b = r.get("beta_b", spec.beta_b);
  spec.noise_variance = r.get("noise_variance", spec.noise_variance);
  spec.damping = r.get("damping", spec.damping);
  auto& d = plan.lfm_data;
  d.features = spec.features;
  d.dim = spec.dim;
  d.n_train = r.get("n_train", d.n_train);
  d.n_test = r.get("n_test", d.n_test);
  d.noise_variance = r.get("true_noise_variance", d.noise_variance);
  plan.lfm_eval.mode = parse_holdout(r.get<std::string>("holdout", holdout_name(plan.lfm_eval.mode)),
                                     r.field("holdout"));
  plan.lfm_eval.fraction = r.get("holdout_fraction", plan.lfm_eval.fraction);
  plan.lfm_eval.inference_iters = r.get("inference_iters", plan.lfm_eval.inference_iters);
  plan.lfm_eval.noise_variance = spec.noise_variance;
  r.finish();
  plan.base.model = spec;
}

StrategyRun read_strategy(const json& v, const std::string& field) {
  StrategyRun run;
  if (v.is_string()) {
    run.label = v.get<std::string>();
    try {
      run.strategy = parse_strategy(run.label);
    } catch (const ConfigError& e) {
      throw ConfigError(field, e.what());
    }
    return run;
  }
  Reader r(v, field);
  if (!r.has("name")) throw ConfigError(field + ".name", "missing");
  const std::string name = r.get<std::string>("name", "");
  try {
    run.strategy = parse_strategy(name);
  } catch (const ConfigError& e) {
    throw ConfigError(r.field("name"), e.what());
  }
  run.label = r.get<std::string>("label", name);
  if (r.has("agents")) run.agents = r.get<std::size_t>("agents", 0);
  if (r.has("subbatches")) run.subbatches = r.get<std::size_t>("subbatches", 0);
  if (r.has("concurrency")) run.concurrency = r.get<std::size_t>("concurrency", 0);
  r.finish();
  return run;
}

std::vector<std::uint64_t> read_seeds(const json& v, const std::string& field) {
  std::vector<std::uint64_t> seeds;
  if (v.is_array()) {
    for (const auto& s : v) seeds.push_back(Reader::as<std::uint64_t>(s, field));
    return seeds;
  }
  Reader r(v, field);
  const auto first = r.get<std::uint64_t>("first", 1);
  const auto count = r.get<std::size_t>("count", 0);
  r.finish();
  for (std::size_t i = 0; i < count; ++i) seeds.push_back(first + i);
  return seeds;
}

ExperimentPlan read_plan(const json& root) {
  const json& j = root.is_object() && root.contains("config") ? root.at("config") : root;
  Reader r(j, "");
  ExperimentPlan plan;
  if (!r.has("model")) throw ConfigError("model", "missing");
  plan.model = parse_model(r.get<std::string>("model", ""));
  auto& c = plan.base;
  c.agents = r.get("agents", c.agents);
  c.subbatches = r.get("subbatches", c.subbatches);
  c.merger = r.get("merger", c.merger);
  c.swap_restarts = r.get("swap_restarts", c.swap_restarts);
  c.hierarchical_method = parse_method(r.get<std::string>("hierarchical_method", method_name(c.hierarchical_method)),
                                       "hierarchical_method");
  const std::string rule = r.get<std::string>("shard_rule", "contiguous");
  if (rule == "contiguous") c.shard_rule = ShardRule::Contiguous;
  else if (rule == "random") c.shard_rule = ShardRule::Random;
  else throw ConfigError("shard_rule", "expected 'contiguous' or 'random'");

  if (r.has("fit")) {
    Reader f = r.child("fit");
    c.fit.max_iters = f.get("max_iters", c.fit.max_iters);
    c.fit.tol = f.get("tol", c.fit.tol);
    c.fit.restarts = f.get("restarts", c.fit.restarts);
    f.finish();
  }
  if (r.has("schedule")) {
    Reader s = r.child("schedule");
    if (s.has("delivery")) c.schedule.delivery = index_list(s.raw("delivery"), s.field("delivery"));
    if (s.has("failed")) {
      const auto failed = index_list(s.raw("failed"), s.field("failed"));
      c.schedule.failed = {failed.begin(), failed.end()};
    }
    if (s.has("commits")) {
      const json& events = s.raw("commits");
      if (!events.is_array()) throw ConfigError(s.field("commits"), "expected an array of [agent, subbatch]");
      for (const auto& e : events) {
        const auto pair = index_list(e, s.field("commits"));
        if (pair.size() != 2) throw ConfigError(s.field("commits"), "expected [agent, subbatch] pairs");
        c.schedule.commits.emplace_back(pair[0], pair[1]);
      }
    }
    c.schedule.concurrency = s.get("concurrency", c.schedule.concurrency);
    s.finish();
  }

  if (!r.has("strategies")) throw ConfigError("strategies", "missing");
  const json& strategies = r.raw("strategies");
  if (!strategies.is_array()) throw ConfigError("strategies", "expected an array");
  for (const auto& s : strategies) plan.strategies.push_back(read_strategy(s, "strategies"));
  if (!r.has("seeds")) throw ConfigError("seeds", "missing");
  plan.seeds = read_seeds(r.raw("seeds"), "seeds");

  const std::string section = to_string(plan.model);
  for (const char* other : {"gmm", "lda", "lfm"})
    if (section != other && r.has(other))
      throw ConfigError(other, "section does not match model '" + section + "'");
  const json empty = json::object();
  Reader model = r.has(section) ? r.child(section) : Reader(empty, section);
  switch (plan.model) {
    case ModelKind::Gmm: read_gmm(std::move(model), plan); break;
    case ModelKind::Lda: read_lda(std::move(model), plan); break;
    case ModelKind::Lfm: read_lfm(std::move(model), plan); break;
  }
  r.finish();
  plan.validate();
  return plan;
}

json strategy_json(const StrategyRun& run) {
  json j{{"name", to_string(run.strategy)}, {"label", run.label}};
  if (run.agents) j["agents"] = *run.agents;
  if (run.subbatches) j["subbatches"] = *run.subbatches;
  if (run.concurrency) j["concurrency"] = *run.concurrency;
  return j;
}

json plan_json(const ExperimentPlan& plan) {
  const auto& c = plan.base;
  json j;
  j["model"] = to_string(plan.model);
  j["agents"] = c.agents;
  j["subbatches"] = c.subbatches;
  j["merger"] = c.merger;
  j["swap_restarts"] = c.swap_restarts;
  j["hierarchical_method"] = method_name(c.hierarchical_method);
  j["shard_rule"] = c.shard_rule == ShardRule::Random ? "random" : "contiguous";
  j["fit"] = {{"max_iters", c.fit.max_iters}, {"tol", c.fit.tol}, {"restarts", c.fit.restarts}};
  json commits = json::array();
  for (const auto& [a, b] : c.schedule.commits) commits.push_back({a, b});
  j["schedule"] = {{"delivery", c.schedule.delivery},
                   {"commits", commits},
                   {"concurrency", c.schedule.concurrency},
                   {"failed", std::vector<std::size_t>(c.schedule.failed.begin(), c.schedule.failed.end())}};
  json strategies = json::array();
  for (const auto& s : plan.strategies) strategies.push_back(strategy_json(s));
  j["strategies"] = strategies;
  j["seeds"] = plan.seeds;
  switch (plan.model) {
    case ModelKind::Gmm: {
      const auto& s = std::get<GmmSpec>(c.model);
      const auto& d = plan.gmm_data;
      j["gmm"] = {{"components", s.components},         {"component_variance", s.component_variance},
                  {"prior_mean", s.prior_mean},         {"prior_variance", s.prior_variance},
                  {"dirichlet_prior", s.dirichlet_prior}, {"n_train", d.n_train},
                  {"n_test", d.n_test},                 {"true_means", d.truth.means},
                  {"true_weights", d.truth.weights},    {"true_variance", d.truth.variance}};
      break;
    }
    case ModelKind::Lda: {
      const auto& s = std::get<LdaSpec>(c.model);
      const auto& d = plan.lda_data;
      j["lda"] = {{"topics", s.topics},
                  {"vocabulary", s.vocabulary},
                  {"topic_word_prior", s.topic_word_prior},
                  {"doc_topic_prior", s.doc_topic_prior},
                  {"local_max_iters", s.local_max_iters},
                  {"local_tol", s.local_tol},
                  {"n_train", d.n_train},
                  {"n_test", d.n_test},
                  {"doc_length", d.doc_length},
                  {"topic_concentration", d.topic_concentration},
                  {"doc_concentration", d.doc_concentration},
                  {"holdout_fraction", plan.lda_eval.holdout_fraction},
                  {"fold_in_iters", plan.lda_eval.fold_in_iters}};
      break;
    }
    case ModelKind::Lfm: {
      const auto& s = std::get<LfmSpec>(c.model);
      const auto& d = plan.lfm_data;
      j["lfm"] = {{"features", s.features},
                  {"dim", s.dim},
                  {"feature_prior_variance", s.feature_prior_variance},
                  {"beta_a", s.beta_a},
                  {"beta_b", s.beta_b},
                  {"noise_variance", s.noise_variance},
                  {"damping", s.damping},
                  {"n_train", d.n_train},
                  {"n_test", d.n_test},
                  {"true_noise_variance", d.noise_variance},
                  {"holdout", holdout_name(plan.lfm_eval.mode)},
                  {"holdout_fraction", plan.lfm_eval.fraction},
                  {"inference_iters", plan.lfm_eval.inference_iters}};
      break;
    }
  }
  return j;
}

std::string g17(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string version_string() { return "amps " AMPS_VERSION; }

std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::Gmm: return "gmm";
    case ModelKind::Lda: return "lda";
    case ModelKind::Lfm: return "lfm";
  }
  return "unknown";
}

ModelKind parse_model(const std::string& name) {
  for (ModelKind m : {ModelKind::Gmm, ModelKind::Lda, ModelKind::Lfm})
    if (to_string(m) == name) return m;
  throw ConfigError("model", "unknown model '" + name + "'");
}

void ExperimentPlan::validate() const {
  if (strategies.empty()) throw ConfigError("strategies", "at least one strategy is required");
  if (seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  std::set<std::string> labels;
  for (const auto& s : strategies)
    if (!labels.insert(s.label).second) throw ConfigError("strategies", "duplicate label '" + s.label + "'");
  std::size_t n_train = 0;
  switch (model) {
    case ModelKind::Gmm: {
      const auto* spec = std::get_if<GmmSpec>(&base.model);
      if (!spec) throw ConfigError("model", "spec does not match model gmm");
      if (gmm_data.truth.means.size() != spec->components || gmm_data.truth.weights.size() != spec->components)
        throw ConfigError("gmm.true_means", "truth must have one entry per component");
      if (gmm_data.n_test == 0) throw ConfigError("gmm.n_test", "must be positive");
      n_train = gmm_data.n_train;
      break;
    }
    case ModelKind::Lda:
      if (!std::holds_alternative<LdaSpec>(base.model)) throw ConfigError("model", "spec does not match model lda");
      if (lda_data.n_test == 0) throw ConfigError("lda.n_test", "must be positive");
      if (lda_data.doc_length < 2) throw ConfigError("lda.doc_length", "must be at least 2");
      if (!(lda_data.topic_concentration > 0.0)) throw ConfigError("lda.topic_concentration", "must be positive");
      if (!(lda_data.doc_concentration > 0.0)) throw ConfigError("lda.doc_concentration", "must be positive");
      if (!(lda_eval.holdout_fraction > 0.0 && lda_eval.holdout_fraction < 1.0))
        throw ConfigError("lda.holdout_fraction", "must lie in (0, 1)");
      n_train = lda_data.n_train;
      break;
    case ModelKind::Lfm:
      if (!std::holds_alternative<LfmSpec>(base.model)) throw ConfigError("model", "spec does not match model lfm");
      if (lfm_data.n_test == 0) throw ConfigError("lfm.n_test", "must be positive");
      if (!(lfm_eval.fraction > 0.0 && lfm_eval.fraction < 1.0))
        throw ConfigError("lfm.holdout_fraction", "must lie in (0, 1)");
      if (lfm_data.dim < 2) throw ConfigError("lfm.dim", "must be at least 2");
      n_train = lfm_data.n_train;
      break;
  }
  for (const auto& s : strategies) trial_config(*this, s, 0).validate(n_train);
}

ExperimentPlan parse_plan(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", e.what());
  }
  return read_plan(root);
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_plan(buf.str());
}

std::string plan_to_json(const ExperimentPlan& plan, int indent) { return plan_json(plan).dump(indent); }

TrialData make_trial_data(const ExperimentPlan& plan, std::uint64_t seed) {
  TrialData out;
  out.data_seed = seed;
  out.master_seed = derive_seed(seed, kNetworkTag);
  switch (plan.model) {
    case ModelKind::Gmm: {
      const auto& d = plan.gmm_data;
      GmmDataset train = gen_gmm(seed, d.n_train, d.truth);
      out.train = std::move(train.points);
      out.test = gen_gmm(derive_seed(seed, kTestTag), d.n_test, d.truth).points;
      out.truth = Eigen::Map<const RowMatrix>(d.truth.means.data(), static_cast<Eigen::Index>(d.truth.means.size()), 1);
      break;
    }
    case ModelKind::Lda: {
      const auto& spec = std::get<LdaSpec>(plan.base.model);
      const auto& d = plan.lda_data;
      LdaDataset all = gen_lda(seed, spec.topics, spec.vocabulary, d.n_train + d.n_test, d.doc_length,
                               d.topic_concentration, d.doc_concentration);
      auto [train, test] = split_docs(all.corpus, d.n_test, derive_seed(seed, kSplitTag));
      out.train = std::move(train);
      out.test = std::move(test);
      out.truth = std::move(all.truth.topics);
      break;
    }
    case ModelKind::Lfm: {
      LfmDataset ds = gen_lfm(seed, plan.lfm_data);
      out.train = std::move(ds.train);
      out.test = std::move(ds.test);
      out.truth = std::move(ds.truth.features);
      break;
    }
  }
  return out;
}

Metrics evaluate(const ExperimentPlan& plan, const TrialData& data, const FactorizedPosterior& posterior) {
  Metrics m;
  switch (plan.model) {
    case ModelKind::Gmm: {
      const auto& spec = std::get<GmmSpec>(plan.base.model);
      m.test_ll = gmm_test_ll(posterior, std::get<std::vector<double>>(data.test), spec.component_variance);
      const std::vector<double> means = gmm_component_means(posterior);
      m.param_error = aligned_mean_error(means, std::span<const double>(data.truth.data(), data.truth.size()));
      break;
    }
    case ModelKind::Lda: {
      LdaEvalOptions opts = plan.lda_eval;
      opts.seed = derive_seed(data.data_seed, kEvalTag);
      const HeldOutLikelihood h = lda_predictive_ll(posterior, std::get<Corpus>(data.test), opts);
      m.test_ll = h.per_word;
      m.skipped_docs = h.skipped_docs;
      m.param_error = feature_error_2norm(lda_topic_means(posterior), data.truth);
      break;
    }
    case ModelKind::Lfm: {
      LfmEvalOptions opts = plan.lfm_eval;
      opts.seed = derive_seed(data.data_seed, kEvalTag);
      m.test_ll = lfm_predictive_ll(posterior, std::get<RowMatrix>(data.test), opts);
      m.param_error = feature_error_2norm(lfm_feature_means(posterior), data.truth);
      break;
    }
  }
  return m;
}

ExperimentConfig trial_config(const ExperimentPlan& plan, const StrategyRun& run, std::uint64_t master_seed) {
  ExperimentConfig c = plan.base;
  c.strategy = run.strategy;
  c.master_seed = master_seed;
  c.threads = 1;
  if (run.agents) c.agents = *run.agents;
  if (run.subbatches) c.subbatches = *run.subbatches;
  if (run.concurrency) c.schedule.concurrency = *run.concurrency;
  return c;
}

TrialResult run_trial(const ExperimentPlan& plan, const StrategyRun& run, const TrialData& data) {
  const ExperimentConfig config = trial_config(plan, run, data.master_seed);
  StrategyOutcome outcome = run_strategy(config, data.train);
  TrialResult t;
  t.label = run.label;
  t.strategy = run.strategy;
  t.seed = data.data_seed;
  t.data_seed = data.data_seed;
  t.master_seed = data.master_seed;
  t.agents = config.agents;
  t.subbatches = config.subbatches;
  t.metrics = evaluate(plan, data, outcome.posterior);
  t.timing = outcome.timing;
  if (outcome.groups.empty()) {
    t.objective = std::numeric_limits<double>::quiet_NaN();
  } else {
    t.objective = 0.0;
    for (const auto& g : outcome.groups) {
      t.objective += g.objective;
      for (std::size_t i = 1; i < g.trace.size(); ++i)
        if (g.trace[i].objective < g.trace[i - 1].objective) t.objective_monotone = false;
    }
  }
  return t;
}

ExperimentOutcome run_experiment(const ExperimentPlan& plan, std::size_t threads) {
  plan.validate();
  ExperimentOutcome out;
  out.plan = plan;
  std::vector<TrialData> data(plan.seeds.size());
  detail::parallel_for(plan.seeds.size(), threads, [&](std::size_t i) { data[i] = make_trial_data(plan, plan.seeds[i]); });
  const std::size_t n_seeds = plan.seeds.size();
  out.trials.resize(plan.strategies.size() * n_seeds);
  detail::parallel_for(out.trials.size(), threads, [&](std::size_t i) {
    out.trials[i] = run_trial(plan, plan.strategies[i / n_seeds], data[i % n_seeds]);
  });
  return out;
}

void write_csv(std::ostream& out, const ExperimentOutcome& outcome) {
  out << "model,strategy,seed,agents,subbatches,test_ll,param_error,objective,objective_monotone,skipped_docs\n";
  const std::string model = to_string(outcome.plan.model);
  for (const auto& t : outcome.trials) {
    out << model << ',' << t.label << ',' << t.seed << ',' << t.agents << ',' << t.subbatches << ','
        << g17(t.metrics.test_ll) << ',' << g17(t.metrics.param_error) << ',' << g17(t.objective) << ','
        << (t.objective_monotone ? 1 : 0) << ',' << t.metrics.skipped_docs << '\n';
  }
}

void write_run_record(std::ostream& out, const ExperimentOutcome& outcome) {
  json record;
  record["version"] = version_string();
  record["config"] = plan_json(outcome.plan);
  record["lda_heldout_estimator"] = "fold-in variational inference, plug-in posterior means";
  json trials = json::array();
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_label;
  for (const auto& t : outcome.trials) {
    trials.push_back({{"strategy", t.label},
                      {"method", to_string(t.strategy)},
                      {"seed", t.seed},
                      {"data_seed", t.data_seed},
                      {"master_seed", t.master_seed},
                      {"agents", t.agents},
                      {"subbatches", t.subbatches},
                      {"metrics",
                       {{"test_ll", number_or_null(t.metrics.test_ll)},
                        {"param_error", number_or_null(t.metrics.param_error)},
                        {"objective", number_or_null(t.objective)},
                        {"objective_monotone", t.objective_monotone},
                        {"skipped_docs", t.metrics.skipped_docs}}},
                      {"timing", {{"fit_seconds", t.timing.fit_seconds}, {"merge_seconds", t.timing.merge_seconds}}}});
    by_label[t.label].first.push_back(t.metrics.test_ll);
    by_label[t.label].second.push_back(t.metrics.param_error);
  }
  record["trials"] = trials;
  auto summary_json = [](const std::vector<double>& v) {
    const Summary s = summarize(v);
    return json{{"median", s.median}, {"q25", s.q25}, {"q75", s.q75}, {"min", s.min}, {"max", s.max}};
  };
  json summary = json::object();
  for (const auto& [label, values] : by_label)
    summary[label] = {{"test_ll", summary_json(values.first)}, {"param_error", summary_json(values.second)}};
  record["summary"] = summary;
  out << record.dump(2) << '\n';
}

std::string posterior_to_json(const FactorizedPosterior& posterior, int indent) {
  json factors = json::object();
  for (const auto& [name, f] : posterior.factors) {
    json rows = json::array();
    for (Eigen::Index k = 0; k < f.rows.rows(); ++k) {
      const auto r = row_span(f.rows, k);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    factors[name] = {{"family", f.family.name()},
                     {"layout", f.layout == Layout::Joint ? "joint" : "per_row"},
                     {"natural", rows}};
  }
  return json{{"factors", factors}, {"symmetry_groups", posterior.symmetry_groups}}.dump(indent);
}

}  // namespace amps
