#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "spgrpo/errors.hpp"
#include "spgrpo_app/app.hpp"

namespace spgrpo::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string num(double v) { return json(v).dump(); }

std::string checkpoint_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06zu.ckpt", step);
  return buf;
}

void write_train_logs(const fs::path& dir, const grpo::TrainLog& log,
                      const rewards::RewardSuite& suite) {
  std::ostringstream jsonl, csv;
  grpo::write_log_jsonl(jsonl, log);
  grpo::write_log_csv(csv, log, suite);
  write_text(dir / "train_log.jsonl", jsonl.str());
  write_text(dir / "train_log.csv", csv.str());
}

void run_pretrain(const RunConfig& config, std::ostream& log) {
  const fs::path out = config.output_dir;
  const auto result = pretrain_policy(config);
  numerics::save_checkpoint(out / "policy.ckpt", result.policy.to_checkpoint());
  std::ostringstream csv;
  csv << "step,loss\n";
  for (std::size_t s = 0; s < result.loss_curve.size(); ++s) {
    csv << s << ',' << num(result.loss_curve[s]) << '\n';
  }
  write_text(out / "pretrain_loss.csv", csv.str());
  if (!result.loss_curve.empty()) {
    log << "pretrain: final batch loss " << result.loss_curve.back() << '\n';
  }
}

void run_calibrate(const RunConfig& config, std::ostream& log) {
  const fs::path out = config.output_dir;
  const auto policy = obtain_policy(config, log);
  const auto cal = run_calibration(policy, config);
  json doc;
  doc["term_ids"] = cal.term_ids;
  doc["thresholds"] = cal.calibration.thresholds;
  doc["warnings"] = cal.calibration.warnings;
  doc["steps"] = config.calibrate.steps;
  doc["smoothing_window"] = config.calibrate.smoothing_window;
  doc["fraction"] = config.calibrate.fraction;
  write_text(out / "thresholds.json", doc.dump(2) + "\n");

  std::ostringstream csv;
  csv << "step";
  for (const auto& id : cal.term_ids) csv << ',' << id;
  csv << '\n';
  for (std::size_t s = 0; s < config.calibrate.steps; ++s) {
    csv << s;
    for (const auto& curve : cal.curves) csv << ',' << num(curve[s]);
    csv << '\n';
  }
  write_text(out / "calibration_curves.csv", csv.str());
  for (const auto& w : cal.calibration.warnings) log << "calibrate: warning: " << w << '\n';
  for (std::size_t j = 0; j < cal.term_ids.size(); ++j) {
    log << "calibrate: " << cal.term_ids[j] << " threshold " << cal.calibration.thresholds[j]
        << '\n';
  }
}

void run_train(const RunConfig& config, std::ostream& log) {
  const fs::path out = config.output_dir;
  const auto policy = obtain_policy(config, log);
  const auto tc = config.train_config();
  grpo::Trainer trainer(policy, tc);
  if (config.checkpoint_interval > 0) fs::create_directories(out / "checkpoints");
  try {
    for (std::size_t s = 0; s < tc.num_steps; ++s) {
      const auto rec = trainer.step();
      const std::size_t done = s + 1;
      if (config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0) {
        numerics::save_checkpoint(out / "checkpoints" / checkpoint_name(done),
                                  trainer.policy().to_checkpoint());
      }
      if (done % 25 == 0 || done == tc.num_steps) {
        log << "train: step " << done << "/" << tc.num_steps << " mixed " << rec.mixed_mean
            << " objective " << rec.objective << '\n';
      }
    }
  } catch (...) {
    write_train_logs(out, trainer.log(), tc.suite);
    throw;
  }
  write_train_logs(out, trainer.log(), tc.suite);
  numerics::save_checkpoint(out / "policy.ckpt", trainer.policy().to_checkpoint());
}

void run_eval(const RunConfig& config, std::ostream& log) {
  const fs::path out = config.output_dir;
  const auto policy = obtain_policy(config, log);
  const auto st = grpo::evaluate_policy(policy, config.rewards, config.sde,
                                        config.eval.samples_per_class, config.seed);
  json doc;
  doc["num_samples"] = st.num_samples;
  doc["flagged"] = st.flagged;
  doc["seed"] = config.seed;
  json terms = json::array();
  for (std::size_t j = 0; j < st.term_ids.size(); ++j) {
    std::vector<double> per_class;
    for (const auto& row : st.per_class_mean) per_class.push_back(row[j]);
    terms.push_back({{"id", st.term_ids[j]},
                     {"mean", st.mean[j]},
                     {"std", st.std[j]},
                     {"min", st.min[j]},
                     {"max", st.max[j]},
                     {"per_class_mean", per_class}});
  }
  doc["terms"] = terms;
  write_text(out / "eval_stats.json", doc.dump(2) + "\n");

  std::ostringstream csv;
  csv << "term,mean,std,min,max\n";
  for (std::size_t j = 0; j < st.term_ids.size(); ++j) {
    csv << st.term_ids[j] << ',' << num(st.mean[j]) << ',' << num(st.std[j]) << ','
        << num(st.min[j]) << ',' << num(st.max[j]) << '\n';
  }
  write_text(out / "eval_stats.csv", csv.str());
  for (std::size_t j = 0; j < st.term_ids.size(); ++j) {
    log << "eval: " << st.term_ids[j] << " mean " << st.mean[j] << '\n';
  }
}

void run_audit(const RunConfig& config, std::ostream& log) {
  const fs::path out = config.output_dir;
  std::ifstream in(config.audit.input);
  if (!in) throw ConfigError("audit.input: cannot open " + config.audit.input);
  const auto items = audit::read_items_csv(in);
  audit::AuditOptions opt;
  opt.k = config.audit.k;
  opt.seed = config.seed;
  opt.max_iters = config.audit.max_iters;
  const auto report = audit::audit(items, opt);
  write_text(out / "audit_report.json", audit::report_json(report) + "\n");
  std::ostringstream csv;
  audit::write_report_csv(csv, report);
  write_text(out / "audit_clusters.csv", csv.str());
  log << "audit: " << report.k << " clusters, inter-cluster CoV ";
  if (report.inter_cluster_cov) {
    log << *report.inter_cluster_cov << "%\n";
  } else {
    log << "n/a\n";
  }
}

void write_failure(const RunConfig& config, const std::string& kind, const std::string& what) {
  try {
    json doc;
    doc["mode"] = to_string(config.mode);
    doc["error"] = kind;
    doc["message"] = what;
    write_text(fs::path(config.output_dir) / "failure.json", doc.dump(2) + "\n");
  } catch (...) {
  }
}

}  // namespace

flow::PretrainResult pretrain_policy(const RunConfig& config) {
  numerics::RandomSource root(config.seed, 1);
  auto init_rng = root.split(0);
  auto data_rng = root.split(1);
  auto fit_rng = root.split(2);
  auto policy = flow::FlowPolicy::create(config.dims(), config.policy.hidden, init_rng);
  const auto data = config.dataset_spec().generate(config.dataset.size, data_rng);
  return flow::pretrain_flow_matching(std::move(policy), data, config.pretrain, fit_rng);
}

flow::FlowPolicy obtain_policy(const RunConfig& config, std::ostream& log) {
  if (!config.policy.checkpoint.empty()) {
    auto policy =
        flow::FlowPolicy::from_checkpoint(numerics::load_checkpoint(config.policy.checkpoint));
    if (!(policy.dims() == config.dims())) {
      throw ConfigError("policy.checkpoint: " + config.policy.checkpoint +
                        " does not match the policy section dimensions");
    }
    log << "policy: loaded " << config.policy.checkpoint << '\n';
    return policy;
  }
  log << "policy: pretraining for " << config.pretrain.steps << " steps\n";
  const fs::path out = config.output_dir;
  const auto result = pretrain_policy(config);
  numerics::save_checkpoint(out / "pretrained.ckpt", result.policy.to_checkpoint());
  std::ostringstream csv;
  csv << "step,loss\n";
  for (std::size_t s = 0; s < result.loss_curve.size(); ++s) {
    csv << s << ',' << num(result.loss_curve[s]) << '\n';
  }
  write_text(out / "pretrain_loss.csv", csv.str());
  return result.policy;
}

CalibrationRun run_calibration(const flow::FlowPolicy& policy, const RunConfig& config) {
  CalibrationRun run;
  for (std::size_t j = 0; j < config.rewards.size(); ++j) {
    auto tc = config.train_config();
    auto term = config.rewards.terms[j];
    term.stage = 1;
    tc.suite.terms = {term};
    tc.cerm.thresholds = {config.cerm.thresholds.empty() ? 0.0 : config.cerm.thresholds[0]};
    tc.num_steps = config.calibrate.steps;
    const auto result = grpo::train(policy, tc);
    run.term_ids.push_back(term.id);
    run.curves.push_back(grpo::term_mean_curve(result.log, 0));
  }
  run.calibration = cerm::calibrate_thresholds(run.curves, config.calibrate.smoothing_window,
                                               config.calibrate.fraction);
  return run;
}

int run(const RunConfig& input, std::ostream& log) {
  RunConfig config = input;
  try {
    fs::create_directories(config.output_dir);
    if (config.mode == Mode::kTrain && !config.thresholds_file.empty()) {
      config.cerm.thresholds = read_thresholds_file(config.thresholds_file);
      config.cerm.validate(config.rewards.size());
      log << "cerm: thresholds from " << config.thresholds_file << '\n';
    }
    write_text(fs::path(config.output_dir) / "resolved_config.json", resolved_config_json(config));
    write_text(fs::path(config.output_dir) / "seed.txt", std::to_string(config.seed) + "\n");
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    write_failure(config, "io", e.what());
    return 2;
  }

  try {
    switch (config.mode) {
      case Mode::kPretrain: run_pretrain(config, log); break;
      case Mode::kCalibrate: run_calibrate(config, log); break;
      case Mode::kTrain: run_train(config, log); break;
      case Mode::kEval: run_eval(config, log); break;
      case Mode::kAudit: run_audit(config, log); break;
    }
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    write_failure(config, "config", e.what());
    return 1;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    write_failure(config, "runtime", e.what());
    return 2;
  }
  return 0;
}

int main_entry(int argc, char** argv, std::ostream& log) {
  CLI::App cli{"Self-paced GRPO toy trainer"};
  std::string mode;
  std::string config_path;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  cli.add_option("mode", mode, "pretrain, calibrate, train, eval or audit");
  cli.add_option("-c,--config", config_path, "JSON run config")->check(CLI::ExistingFile);
  cli.add_option("-o,--output", output_dir, "Output directory (overrides output_dir)");
  cli.add_option("--seed", seed, "Run seed (overrides seed)");
  cli.add_option("--set", overrides, "Dotted-path override, e.g. train.learning_rate=1e-4");
  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return 1;
  }
  if (!mode.empty()) overrides.insert(overrides.begin(), "mode=\"" + mode + "\"");
  if (!output_dir.empty()) overrides.push_back("output_dir=" + json(output_dir).dump());
  if (seed) overrides.push_back("seed=" + std::to_string(*seed));

  RunConfig config;
  try {
    config = load_run_config(config_path.empty() ? std::nullopt
                                                 : std::optional<fs::path>(config_path),
                             overrides);
  } catch (const Error& e) {
    log << "config error: " << e.what() << '\n';
    return 1;
  }
  return run(config, log);
}

}  // namespace spgrpo::app
