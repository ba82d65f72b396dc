// amps: generate data, fit models, run decentralized experiments, self-test.
//
// Exit codes: 0 success, 1 runtime or check failure, 2 usage or config error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "amps/data.hpp"
#include "amps/errors.hpp"
#include "amps/experiment.hpp"
#include "amps/expfam.hpp"
#include "amps/network.hpp"
#include "amps/selftest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw amps::Error("cannot write " + path.string());
  return out;
}

std::size_t resolve_threads(std::optional<std::size_t> flag) {
  if (flag) return std::max<std::size_t>(1, *flag);
  if (const char* env = std::getenv("AMPS_THREADS")) {
    try {
      return std::max<std::size_t>(1, std::stoul(env));
    } catch (const std::exception&) {
      throw UsageError("AMPS_THREADS must be a positive integer");
    }
  }
  return 1;
}

amps::ModelKind model_arg(const std::string& name) {
  try {
    return amps::parse_model(name);
  } catch (const amps::ConfigError&) {
    throw UsageError("unknown model '" + name + "' (expected gmm, lda or lfm)");
  }
}

// Plan used for data settings and model specs; defaults when no config.
amps::ExperimentPlan plan_for(amps::ModelKind model, const std::string& config) {
  if (!config.empty()) {
    amps::ExperimentPlan plan = amps::load_plan(config);
    if (plan.model != model) throw amps::ConfigError("model", "config is for " + amps::to_string(plan.model));
    return plan;
  }
  return amps::parse_plan(json{{"model", amps::to_string(model)}, {"strategies", {"batch"}}, {"seeds", {1}}}.dump());
}

void write_column(const fs::path& path, const std::vector<double>& v) {
  amps::RowMatrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  auto out = open_out(path);
  amps::write_matrix(out, m);
}

void write_matrix_file(const fs::path& path, const amps::RowMatrix& m) {
  auto out = open_out(path);
  amps::write_matrix(out, m);
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

int cmd_gen(const std::string& model_name, std::uint64_t seed, const fs::path& out, const std::string& config) {
  const amps::ModelKind model = model_arg(model_name);
  const amps::ExperimentPlan plan = plan_for(model, config);
  fs::create_directories(out);
  switch (model) {
    case amps::ModelKind::Gmm: {
      const auto& d = plan.gmm_data;
      const amps::GmmDataset ds = amps::gen_gmm(seed, d.n_train, d.truth);
      write_column(out / "points.txt", ds.points);
      std::vector<double> labels(ds.labels.begin(), ds.labels.end());
      write_column(out / "labels.txt", labels);
      write_json(out / "truth.json", {{"seed", seed},
                                      {"means", ds.truth.means},
                                      {"weights", ds.truth.weights},
                                      {"variance", ds.truth.variance}});
      break;
    }
    case amps::ModelKind::Lda: {
      const auto& spec = std::get<amps::LdaSpec>(plan.base.model);
      const auto& d = plan.lda_data;
      const amps::LdaDataset ds = amps::gen_lda(seed, spec.topics, spec.vocabulary, d.n_train + d.n_test,
                                                d.doc_length, d.topic_concentration, d.doc_concentration);
      auto bow = open_out(out / "corpus.bow");
      amps::write_bow(bow, ds.corpus);
      write_matrix_file(out / "truth_topics.txt", ds.truth.topics);
      write_matrix_file(out / "truth_doc_topics.txt", ds.truth.doc_topics);
      write_json(out / "truth.json", {{"seed", seed},
                                      {"topics", spec.topics},
                                      {"vocabulary", spec.vocabulary},
                                      {"documents", ds.corpus.size()},
                                      {"topic_concentration", d.topic_concentration},
                                      {"doc_concentration", d.doc_concentration}});
      break;
    }
    case amps::ModelKind::Lfm: {
      const amps::LfmDataset ds = amps::gen_lfm(seed, plan.lfm_data);
      write_matrix_file(out / "train.txt", ds.train);
      write_matrix_file(out / "test.txt", ds.test);
      write_matrix_file(out / "truth_features.txt", ds.truth.features);
      write_matrix_file(out / "truth_assignments.txt", ds.truth.assignments);
      write_json(out / "truth.json",
                 {{"seed", seed}, {"weights", ds.truth.weights}, {"noise_variance", ds.truth.noise_variance}});
      break;
    }
  }
  std::cout << "wrote " << model_name << " dataset to " << out.string() << '\n';
  return 0;
}

amps::RowMatrix read_matrix_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw amps::Error("cannot open " + path.string());
  return amps::read_matrix(in);
}

int cmd_fit(const std::string& model_name, const fs::path& data_path, std::uint64_t seed, const fs::path& out,
            const std::string& config) {
  const amps::ModelKind model = model_arg(model_name);
  const amps::ExperimentPlan plan = plan_for(model, config);
  amps::TrainingData data;
  switch (model) {
    case amps::ModelKind::Gmm: {
      const amps::RowMatrix m = read_matrix_file(data_path);
      if (m.cols() != 1) throw amps::ShapeMismatch("GMM data must have one value per line");
      data = std::vector<double>(m.data(), m.data() + m.size());
      break;
    }
    case amps::ModelKind::Lda:
      data = amps::load_bow(data_path, std::get<amps::LdaSpec>(plan.base.model).vocabulary);
      break;
    case amps::ModelKind::Lfm: data = read_matrix_file(data_path); break;
  }
  std::vector<std::size_t> items(amps::item_count(data));
  for (std::size_t i = 0; i < items.size(); ++i) items[i] = i;
  amps::FitOptions opts = plan.base.fit;
  opts.seed = seed;
  const amps::FitResult fit =
      amps::fit_items(plan.base.model, data, items, amps::model_prior(plan.base.model), opts);
  json record = json::parse(amps::posterior_to_json(fit.posterior));
  record["elbo"] = fit.elbo;
  record["iterations"] = fit.iterations;
  record["converged"] = fit.converged;
  record["version"] = amps::version_string();
  if (out.empty()) {
    std::cout << record.dump(2) << '\n';
  } else {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_json(out, record);
    std::cout << "wrote posterior to " << out.string() << '\n';
  }
  return 0;
}

int cmd_experiment(const std::string& config, const fs::path& out, std::size_t threads) {
  if (config.empty()) throw UsageError("experiment requires --config");
  const amps::ExperimentPlan plan = amps::load_plan(config);
  const amps::ExperimentOutcome outcome = amps::run_experiment(plan, threads);
  fs::create_directories(out);
  {
    auto csv = open_out(out / "results.csv");
    amps::write_csv(csv, outcome);
    auto rec = open_out(out / "run_record.json");
    amps::write_run_record(rec, outcome);
  }
  std::cout << "ran " << outcome.trials.size() << " trials; wrote " << (out / "results.csv").string() << " and "
            << (out / "run_record.json").string() << '\n';
  return 0;
}

int cmd_selftest(std::uint64_t seed, bool inject_fault) {
  amps::expfam::testing::set_log_partition_fault(inject_fault);
  const auto results = amps::run_selftest(seed);
  bool ok = true;
  double total = 0.0;
  for (const auto& r : results) {
    std::printf("%-4s %-36s %7zu checks %9.3f s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.checks,
                r.seconds);
    if (!r.passed) std::printf("     %s\n", r.detail.c_str());
    ok = ok && r.passed;
    total += r.seconds;
  }
  std::printf("%s in %.3f s\n", ok ? "all suites passed" : "selftest FAILED", total);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized variational inference with symmetry-aware posterior merging"};
  app.set_version_flag("--version", amps::version_string());
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string out, config, model, data_path;
  std::optional<std::size_t> threads;
  bool inject_fault = false;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("model", model, "gmm, lda or lfm")->required();
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--config", config, "Experiment config supplying data settings");

  auto* fit = app.add_subcommand("fit", "Batch variational fit of one dataset");
  fit->add_option("model", model, "gmm, lda or lfm")->required();
  fit->add_option("--data", data_path, "Points, bag-of-words or observation file")->required();
  fit->add_option("--seed", seed, "Initialization seed");
  fit->add_option("--out", out, "Posterior JSON path (stdout if omitted)");
  fit->add_option("--config", config, "Experiment config supplying the model spec");

  auto* exp = app.add_subcommand("experiment", "Run a decentralized experiment");
  exp->add_option("--config", config, "Experiment config or run record")->required();
  exp->add_option("--out", out, "Output directory")->required();
  exp->add_option("--threads", threads, "Worker threads (default AMPS_THREADS or 1)");

  auto* self = app.add_subcommand("selftest", "Run the invariant suites");
  self->add_option("--seed", seed, "Seed for the randomized checks");
  self->add_flag("--inject-fault", inject_fault, "Corrupt the log-partition to check that the suites notice");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen(model, seed, out, config);
    if (*fit) return cmd_fit(model, data_path, seed, out, config);
    if (*exp) return cmd_experiment(config, out, resolve_threads(threads));
    if (*self) return cmd_selftest(seed, inject_fault);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const amps::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
