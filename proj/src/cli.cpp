#include "coadapt/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "coadapt/config.hpp"
#include "coadapt/error.hpp"
#include "coadapt/generator.hpp"
#include "coadapt/metrics.hpp"
#include "coadapt/reward.hpp"
#include "coadapt/service.hpp"
#include "coadapt/session_log.hpp"
#include "coadapt/training.hpp"

namespace fs = std::filesystem;

namespace coadapt {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::WriteError, "cannot open " + path.string());
  out << text;
  if (!out) fail(ErrorCode::WriteError, "failed writing " + path.string());
}

nlohmann::json tasks_json(const std::vector<SessionTask>& tasks) {
  auto out = nlohmann::json::array();
  for (const auto& t : tasks) {
    out.push_back({{"id", t.id}, {"initial", t.initial}, {"target", t.target}, {"seed", t.seed}});
  }
  return out;
}

std::vector<SessionTask> tasks_from_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, "cannot open " + path.string());
  std::vector<SessionTask> tasks;
  try {
    for (const auto& t : nlohmann::json::parse(in)) {
      tasks.push_back({t.at("id").get<std::string>(), t.at("initial").get<std::string>(),
                       t.at("target").get<std::string>(), t.at("seed").get<std::uint64_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return tasks;
}

AppConfig config_or_default(const std::string& path) {
  return path.empty() ? AppConfig{} : load_config(path);
}

struct GenerateArgs {
  std::string prompt;
  std::string out = "generate_out";
  std::string config;
};

int run_generate(const GenerateArgs& a) {
  const AppConfig cfg = config_or_default(a.config);
  const Prompt prompt = tokenize(a.prompt, cfg.session.vocabulary());
  const Generation g = generate(prompt, cfg.session.generator);
  const fs::path out(a.out);
  fs::create_directories(out);
  render_png(g.image, out / "image.png");
  nlohmann::json dump = attention_to_json(g.attention);
  dump["tokens_text"] = prompt.text();
  write_text(out / "attention.json", dump.dump() + "\n");
  std::cout << nlohmann::json{{"prompt", prompt.text()}, {"clip_score", clip_score(g.image, prompt)}}.dump() << "\n";
  return 0;
}

struct SimulateArgs {
  int n = 10;
  std::uint64_t seed = 7;
  std::string policy;
  std::string out = "simulate_out";
  std::string config;
  bool no_injection = false;
  bool no_refine = false;
  bool greedy = false;
  unsigned threads = 0;
};

int run_simulate(const SimulateArgs& a) {
  const AppConfig cfg = config_or_default(a.config);
  const auto tasks = TaskSampler(a.seed).sample_many(static_cast<std::size_t>(a.n));
  std::optional<PolicyParams> policy;
  if (!a.policy.empty()) policy = load_checkpoint(a.policy).policy;
  ArmSpec arm;
  arm.name = policy ? "policy" : "oracle";
  arm.policy = policy ? &*policy : nullptr;
  arm.greedy = a.greedy;
  arm.use_injection = !a.no_injection;
  arm.refine = !a.no_refine;

  std::vector<SessionLog> logs;
  const EvalReport report = evaluate(arm, tasks, cfg.session, &logs, a.threads);
  const fs::path out(a.out);
  const fs::path log_dir = out / "logs";
  for (const auto& log : logs) save_log(log, log_dir);
  write_text(out / "tasks.json", tasks_json(tasks).dump(2) + "\n");
  write_report(report, out / "report.csv", out / "summary.json");
  std::cout << report.summary_json().dump(2) << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::optional<int> episodes;
  std::optional<std::uint64_t> seed;
  std::string out = "checkpoint.json";
  std::string report = "training_report.json";
};

int run_train(const TrainArgs& a) {
  AppConfig cfg = config_or_default(a.config);
  if (a.episodes) cfg.train.episodes = *a.episodes;
  if (a.seed) cfg.train.seed = *a.seed;
  cfg.train.validate();
  TrainingOptions opts;
  opts.abort_checkpoint = a.out + ".abort.json";
  const TrainingResult result = train_policy(cfg.train, cfg.session, TaskSampler(cfg.train.seed), opts);
  save_checkpoint(make_checkpoint(result, cfg.train, cfg.session), a.out);
  write_text(a.report, result.report.to_json().dump(2) + "\n");
  const auto& eps = result.report.episodes;
  nlohmann::json summary = {{"episodes", eps.size()}, {"checkpoint", a.out}, {"report", a.report}};
  if (eps.size() >= 5) {
    summary["first_quintile_rounds"] = result.report.mean_rounds(0, eps.size() / 5);
    summary["last_quintile_rounds"] = result.report.mean_rounds(eps.size() - eps.size() / 5, eps.size());
  }
  std::cout << summary.dump(2) << "\n";
  return 0;
}

struct EvalArgs {
  std::string logs;
  std::string tasks;
  std::string config;
  std::string csv;
  std::string json;
};

int run_eval(const EvalArgs& a) {
  const AppConfig cfg = config_or_default(a.config);
  const auto logs = load_logs(a.logs);
  std::vector<SessionTask> tasks;
  if (!a.tasks.empty()) tasks = tasks_from_file(a.tasks);
  const EvalReport report = evaluate_logs(logs, a.logs, tasks, cfg.session);
  if (!a.csv.empty()) write_text(a.csv, report.csv());
  if (!a.json.empty()) write_text(a.json, report.summary_json().dump(2) + "\n");
  std::cout << report.summary_json().dump(2) << "\n";
  return 0;
}

struct MiArgs {
  std::string logs;
  std::string config;
};

int run_mi(const MiArgs& a) {
  const AppConfig cfg = config_or_default(a.config);
  const auto logs = load_logs(a.logs);
  if (logs.empty()) fail(ErrorCode::EmptyInput, "no session logs in " + a.logs);
  const double mi = mi_report(logs, a.logs, cfg.session);
  std::cout << nlohmann::json{{"sessions", logs.size()}, {"mi_nats", mi}}.dump() << "\n";
  return 0;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string policy;
  std::string log_dir;
  std::string config;
  int idle_minutes = 30;
};

int run_serve(const ServeArgs& a) {
  const AppConfig cfg = config_or_default(a.config);
  ServiceOptions opts;
  opts.session = cfg.session;
  if (!a.policy.empty()) opts.policy = load_checkpoint(a.policy).policy;
  if (!a.log_dir.empty()) opts.log_dir = a.log_dir;
  opts.idle_timeout = std::chrono::minutes(a.idle_minutes);
  SessionService service(std::move(opts));
  const int port = resolve_port(a.port);
  if (!serve(service, a.host, port)) {
    fail(ErrorCode::WriteError, "cannot listen on " + a.host + ":" + std::to_string(port));
  }
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Co-adaptive prompt refinement toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate_cmd = app.add_subcommand("generate", "Render a prompt to a PNG plus an attention dump");
  generate_cmd->add_option("--prompt", gen.prompt, "Prompt text")->required();
  generate_cmd->add_option("--out", gen.out, "Output directory");
  generate_cmd->add_option("--config", gen.config, "JSON config file");

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run simulated sessions and write logs and a report");
  simulate_cmd->add_option("--n", sim.n, "Number of sessions")->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--seed", sim.seed, "Task seed");
  simulate_cmd->add_option("--policy", sim.policy, "Checkpoint file; top-ranked proposals when omitted");
  simulate_cmd->add_option("--out", sim.out, "Output directory");
  simulate_cmd->add_option("--config", sim.config, "JSON config file");
  simulate_cmd->add_flag("--no-injection", sim.no_injection, "Regenerate from scratch each round");
  simulate_cmd->add_flag("--no-refine", sim.no_refine, "Apply edits without reward ascent");
  simulate_cmd->add_flag("--greedy", sim.greedy, "Take the most probable strategy");
  simulate_cmd->add_option("--threads", sim.threads, "Worker threads (0 = all cores)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the strategy policy with PPO");
  train_cmd->add_option("--config", tr.config, "JSON config file");
  train_cmd->add_option("--episodes", tr.episodes, "Override the episode count")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", tr.seed, "Override the master seed");
  train_cmd->add_option("--out", tr.out, "Checkpoint path");
  train_cmd->add_option("--report", tr.report, "Training report path");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Summarize a directory of session logs");
  eval_cmd->add_option("--logs", ev.logs, "Log directory")->required();
  eval_cmd->add_option("--tasks", ev.tasks, "tasks.json with targets for SSIM");
  eval_cmd->add_option("--config", ev.config, "JSON config file");
  eval_cmd->add_option("--csv", ev.csv, "Per-session CSV output");
  eval_cmd->add_option("--json", ev.json, "Summary JSON output");

  MiArgs mi;
  auto* mi_cmd = app.add_subcommand("mi", "Gaussian MI between prompt and image embeddings over logs");
  mi_cmd->add_option("--logs", mi.logs, "Log directory")->required();
  mi_cmd->add_option("--config", mi.config, "JSON config file");

  ServeArgs sv;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP service for live sessions");
  serve_cmd->add_option("--host", sv.host, "Listen address");
  serve_cmd->add_option("--port", sv.port, "Listen port (COADAPT_PORT overrides)");
  serve_cmd->add_option("--policy", sv.policy, "Checkpoint file for suggestion probabilities");
  serve_cmd->add_option("--log-dir", sv.log_dir, "Directory for finished session logs");
  serve_cmd->add_option("--config", sv.config, "JSON config file");
  serve_cmd->add_option("--idle-minutes", sv.idle_minutes, "Evict sessions idle this long")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*generate_cmd) return run_generate(gen);
    if (*simulate_cmd) return run_simulate(sim);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*mi_cmd) return run_mi(mi);
    if (*serve_cmd) return run_serve(sv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<std::string> copy = args;
  std::vector<char*> argv;
  for (auto& a : copy) argv.push_back(a.data());
  argv.push_back(nullptr);
  return cli_main(static_cast<int>(copy.size()), argv.data());
}

}  // namespace coadapt
