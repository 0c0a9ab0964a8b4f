// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "coadapt/cli.hpp"
#include "coadapt/config.hpp"
#include "coadapt/metrics.hpp"
#include "coadapt/reward.hpp"
#include "coadapt/rng.hpp"
#include "coadapt/training.hpp"
#include "oracles.hpp"

using namespace coadapt;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(name, ok, detail);
  } catch (const std::exception& e) {
    report(name, false, std::string("threw ") + e.what());
  }
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::pair<bool, std::string> mi_oracle() {
  const auto t0 = Clock::now();
  const auto half = oracle::correlated_normals(0.5, 10000, 101);
  const auto none = oracle::correlated_normals(0.0, 10000, 202);
  const double mi_half = empirical_mi(half.x, half.y);
  const double mi_none = empirical_mi(none.x, none.y);
  const double secs = seconds_since(t0);
  const bool ok = std::abs(mi_half - 0.14384) <= 0.02 && std::abs(mi_none) <= 0.01 && secs < 5.0;
  return {ok, fmt("rho=0.5 -> %.5f (closed form %.5f), rho=0 -> %.5f, %.3fs", mi_half,
                  oracle::gaussian_mi_1d(0.5), mi_none, secs)};
}

std::pair<bool, std::string> replay() {
  ReplayPool pool(2, 0.0, 1e-12);
  for (double d : {1.0, 3.0}) {
    Transition t;
    t.delta = d;
    pool.push(t);
  }
  Rng rng(5);
  const auto batch = sample_batch(pool, 100000, 0.4, rng);
  double low = 0;
  for (auto i : batch.indices) low += (i == 0);
  const double f0 = low / 1e5;
  const double f1 = 1.0 - f0;
  bool monotone = true;
  for (double delta : {0.05, 0.5, 2.0, 10.0}) {
    for (double lambda : {0.001, 0.01, 0.1, 0.5}) {
      double last = priority(delta, 0.0, lambda, 0.01);
      for (int age = 1; age <= 50; ++age) {
        const double p = priority(delta, age, lambda, 0.01);
        if (!(p < last)) monotone = false;
        last = p;
      }
    }
  }
  const bool ok = std::abs(f0 - 0.25) <= 0.01 && std::abs(f1 - 0.75) <= 0.01 && monotone;
  return {ok, fmt("frequencies {%.4f, %.4f}, priority strictly decreasing in age on grid: %s", f0, f1, monotone ? "yes" : "no")};
}

std::pair<bool, std::string> ppo_contract() {
  int exact = 0;
  int total = 0;
  for (double r : {0.5, 1.0, 1.2, 1.5}) {
    for (double a : {-1.0, 1.0}) {
      const double clipped = std::max(0.8, std::min(1.2, r));
      const double expected = std::min(r * a, clipped * a);
      exact += std::abs(ppo_objective(r, a, 0.2) - expected) <= 1e-12;
      ++total;
    }
  }
  const double td = td_error(0.5, 0.9, 0.1, 0.2);
  const bool ok = exact == total && std::abs(td - 0.58) <= 1e-12;
  return {ok, fmt("%d/%d surrogate cases exact, td_error=%.12f", exact, total, td)};
}

std::pair<bool, std::string> gradient_checks() {
  double worst_policy = 0;
  double worst_value = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = oracle::random_grad_case(seed * 7919 + 1);
    worst_policy = std::max(worst_policy, oracle::policy_update_error(g));
    worst_value = std::max(worst_value, oracle::value_update_error(g));
  }
  const bool ok = worst_policy < 1e-4 && worst_value < 1e-4;
  return {ok, fmt("max relative error over 20 seeds: policy %.2e, value %.2e", worst_policy, worst_value)};
}

std::pair<bool, std::string> edit_identities() {
  SessionConfig cfg;
  const Vocabulary vocab = cfg.vocabulary();
  const Prompt p = tokenize("a misty forest with a tiny owl", vocab);
  const Generation base = generate(p, cfg.generator);

  EditController swap;
  swap.mode = EditKind::WordSwap;
  swap.tau_inj = cfg.generator.steps;
  const auto injected = regenerate_with_controller(p, base.attention, swap, cfg.generator);
  const bool injection_exact = injected.generation.image == base.image &&
                               encode_png(injected.generation.image) == encode_png(base.image);

  const SessionState s0 = new_session("a misty forest with a tiny owl", 3, cfg);
  bool reweight_noop = true;
  for (bool inject : {true, false}) {
    const SessionState s1 = step_round(s0, Reweight{2, 1.0}, {inject, false, ""}, cfg);
    reweight_noop = reweight_noop && s1.current.image == s0.current.image && s1.prompt == s0.prompt &&
                    s1.rewards.back() == s0.rewards.back();
  }

  const Prompt q = tokenize("a misty meadow with a tiny owl", vocab);
  const Generation other = generate(q, cfg.generator);
  bool add_identity = true;
  for (int t = 0; t < cfg.generator.steps; ++t) {
    const AttentionMap out = edit_add_phrase(base.attention.maps[t], other.attention.maps[t],
                                             AlignmentMap::identity(p.size()));
    add_identity = add_identity && out == base.attention.maps[t];
  }
  return {injection_exact && reweight_noop && add_identity,
          fmt("unchanged-prompt injection byte-exact: %s, reweight c=1 no-op: %s, identity add_phrase: %s",
              injection_exact ? "yes" : "no", reweight_noop ? "yes" : "no", add_identity ? "yes" : "no")};
}

std::pair<bool, std::string> ascent_suite() {
  const double c1 = ascend_scale(0.0, [](double c) { return -(c - 1) * (c - 1); }, 0.4, 50);
  const double c5 = ascend_scale(0.0, [](double c) { return -(c - 5) * (c - 5); }, 0.4, 50);
  const double cm5 = ascend_scale(0.0, [](double c) { return -(c + 5) * (c + 5); }, 0.4, 50);

  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  AttentionMap target(16, 5);
  AttentionMap m(16, 5);
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    target.data()[i] = u(gen);
    m.data()[i] = u(gen);
  }
  for (Eigen::Index r = 0; r < 16; ++r) {
    target.row(r) /= target.row(r).sum();
    m.row(r) /= m.row(r).sum();
  }
  const auto reward = [&](const AttentionMap& x) { return -(x - target).squaredNorm(); };
  const double start = (m - target).norm();
  double last = start;
  bool strict = true;
  for (int step = 0; step < 20; ++step) {
    m = ascend_map(m, reward, 0.2, 1, {32, static_cast<std::uint64_t>(step)});
    const double d = (m - target).norm();
    strict = strict && d < last;
    last = d;
  }
  const bool ok = std::abs(c1 - 1.0) <= 1e-3 && c5 == 2.0 && cm5 == -2.0 && strict;
  return {ok, fmt("c*=%.6f on -(c-1)^2, %.3f on -(c-5)^2, %.3f on -(c+5)^2, map distance %.4f -> %.4f strictly "
                  "decreasing: %s",
                  c1, c5, cm5, start, last, strict ? "yes" : "no")};
}

std::pair<bool, std::string> trained_vs_untrained(const fs::path& config_path) {
  const AppConfig app = load_config(config_path);
  const auto t0 = Clock::now();
  const TrainingResult trained = train_policy(app.train, app.session, TaskSampler(app.train.seed));
  const double train_secs = seconds_since(t0);

  const auto tasks = TaskSampler(app.train.seed + 1000).sample_many(200);
  const PolicyParams uniform = PolicyParams::zeros(StateFeatures::length(app.session.generator.dim));
  const ArmSpec a{"trained", &trained.policy, false, true, true};
  const ArmSpec b{"untrained", &uniform, false, true, true};
  const auto [ra, rb] = compare_policies(a, b, tasks, app.session);
  const SignTest st = sign_test(ra.rounds(), rb.rounds());
  const bool ok = ra.mean_rounds < rb.mean_rounds && st.p_value < 0.05 && train_secs < 1800.0;
  return {ok, fmt("mean rounds trained %.3f (sd %.3f) vs untrained %.3f (sd %.3f), %d wins / %d losses / %d ties, "
                  "p=%.3g, %d episodes in %.0fs",
                  ra.mean_rounds, ra.sd_rounds, rb.mean_rounds, rb.sd_rounds, st.wins, st.losses, st.ties,
                  st.p_value, app.train.episodes, train_secs)};
}

std::pair<bool, std::string> injection_vs_none() {
  const SessionConfig cfg;
  const auto tasks = TaskSampler(4242).sample_many(200);
  const ArmSpec with{"injection", nullptr, true, true, true};
  const ArmSpec without{"no_injection", nullptr, true, false, true};
  const auto [ra, rb] = compare_policies(with, without, tasks, cfg);
  const SignTest st = sign_test(ra.rounds(), rb.rounds());
  const bool ok = ra.mean_rounds < rb.mean_rounds && st.p_value < 0.05;
  return {ok, fmt("mean rounds with injection %.3f vs without %.3f, %d wins / %d losses / %d ties, p=%.3g",
                  ra.mean_rounds, rb.mean_rounds, st.wins, st.losses, st.ties, st.p_value)};
}

std::pair<bool, std::string> ssim_suite() {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ToyImage x(32, 32, 3);
  ToyImage y(32, 32, 3);
  for (double& v : x.pixels) v = u(gen);
  for (double& v : y.pixels) v = u(gen);
  const bool identity = ssim(x, x) == 1.0;
  const double c1 = 0.01 * 0.01;
  const double constants = ssim(ToyImage(32, 32, 3, 0.0), ToyImage(32, 32, 3, 1.0));
  const bool constant_ok = std::abs(constants - c1 / (1 + c1)) <= 1e-8;
  const bool symmetric = ssim(x, y) == ssim(y, x);

  const Generation g = generate(tokenize("a serene blue lake at dusk", Vocabulary(7)), GeneratorConfig{});
  std::vector<double> means;
  for (double sigma : {0.01, 0.05, 0.1}) {
    std::normal_distribution<double> z(0.0, sigma);
    double total = 0;
    for (int k = 0; k < 50; ++k) {
      ToyImage noisy = g.image;
      for (double& v : noisy.pixels) v = std::clamp(v + z(gen), 0.0, 1.0);
      total += ssim(g.image, noisy);
    }
    means.push_back(total / 50);
  }
  const bool monotone = means[0] > means[1] && means[1] > means[2];
  const bool ok = identity && constant_ok && symmetric && monotone;
  return {ok, fmt("ssim(x,x)=1: %s, constants %.10f vs %.10f, symmetric: %s, noise means %.4f > %.4f > %.4f",
                  identity ? "yes" : "no", constants, c1 / (1 + c1), symmetric ? "yes" : "no", means[0], means[1],
                  means[2])};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::pair<bool, std::string> determinism() {
  const fs::path root = fs::temp_directory_path() / "coadapt_acceptance_determinism";
  fs::remove_all(root);
  const fs::path a = root / "a";
  const fs::path b = root / "b";
  const int ca = cli_main({"coadapt", "simulate", "--n", "5", "--seed", "7", "--out", a.string()});
  const int cb = cli_main({"coadapt", "simulate", "--n", "5", "--seed", "7", "--out", b.string()});
  if (ca != 0 || cb != 0) return {false, fmt("simulate exit codes %d, %d", ca, cb)};
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    if (!fs::exists(b / rel) || slurp(entry.path()) != slurp(b / rel)) {
      return {false, "differs at " + rel.string()};
    }
    ++files;
  }
  std::size_t files_b = 0;
  for (const auto& entry : fs::recursive_directory_iterator(b)) files_b += entry.is_regular_file();
  const bool ok = files == files_b && files > 0;
  fs::remove_all(root);
  return {ok, fmt("%zu files byte-identical across two runs", files)};
}

std::pair<bool, std::string> termination() {
  Rng rng(2718);
  const auto tasks = TaskSampler(31415).sample_many(60);
  int checked = 0;
  int violations = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    SessionConfig cfg;
    cfg.n_max = 1 + static_cast<int>(rng.index(10));
    cfg.tau_stop = rng.uniform(0.6, 1.0);
    cfg.ascent_steps = 2;
    const PolicyParams uniform = PolicyParams::zeros(StateFeatures::length(cfg.generator.dim));
    RunOptions opts;
    opts.policy = i % 2 ? &uniform : nullptr;
    opts.use_injection = i % 3 != 0;
    const auto out = run_session(tasks[i], opts, cfg);
    const auto& s = out.state;
    bool ok = s.terminal() && s.round >= 1 && s.round <= cfg.n_max;
    for (int k = 1; k < s.round; ++k) ok = ok && s.rewards[k] < cfg.tau_stop;
    if (s.status == SessionStatus::AcceptedByThreshold) {
      ok = ok && s.rewards.back() >= cfg.tau_stop;
    } else {
      ok = ok && s.status == SessionStatus::ExhaustedRounds && s.round == cfg.n_max;
    }
    violations += !ok;
    ++checked;
  }
  return {violations == 0, fmt("%d random sessions, %d violations of the budget or first-crossing rule", checked,
                               violations)};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path config = argc > 1 ? fs::path(argv[1]) : fs::path(COADAPT_SOURCE_DIR) / "configs" / "desk.json";
  criterion("mi_oracle", mi_oracle);
  criterion("replay_sampling", replay);
  criterion("ppo_unit_contract", ppo_contract);
  criterion("gradient_checks", gradient_checks);
  criterion("edit_identities", edit_identities);
  criterion("ascent_suite", ascent_suite);
  criterion("trained_vs_untrained_rounds", [&] { return trained_vs_untrained(config); });
  criterion("injection_vs_none_rounds", injection_vs_none);
  criterion("ssim_suite", ssim_suite);
  criterion("simulate_determinism", determinism);
  criterion("session_termination", termination);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
