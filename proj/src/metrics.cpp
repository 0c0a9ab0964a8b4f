#include "coadapt/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "coadapt/error.hpp"

namespace fs = std::filesystem;

namespace coadapt {

namespace {

std::vector<int> window_starts(int extent, int window) {
  std::vector<int> starts;
  if (extent <= window) return {0};
  for (int s = 0; s + window <= extent; s += kSsimStride) starts.push_back(s);
  if (starts.back() + window < extent) starts.push_back(extent - window);
  return starts;
}

}  // namespace

double ssim(const ToyImage& a, const ToyImage& b) {
  if (!a.same_shape(b)) fail(ErrorCode::DimError, "ssim needs images of the same shape");
  if (a.pixels.empty()) fail(ErrorCode::DimError, "ssim of empty images");
  const double c1 = kSsimK1 * kSsimK1;
  const double c2 = kSsimK2 * kSsimK2;
  const int wh = std::min(kSsimWindow, a.height);
  const int ww = std::min(kSsimWindow, a.width);
  const auto ys = window_starts(a.height, wh);
  const auto xs = window_starts(a.width, ww);
  const double n = static_cast<double>(wh * ww);

  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y0 : ys) {
      for (int x0 : xs) {
        double ma = 0.0, mb = 0.0;
        for (int y = y0; y < y0 + wh; ++y) {
          for (int x = x0; x < x0 + ww; ++x) {
            ma += a.at(y, x, c);
            mb += b.at(y, x, c);
          }
        }
        ma /= n;
        mb /= n;
        double va = 0.0, vb = 0.0, cov = 0.0;
        for (int y = y0; y < y0 + wh; ++y) {
          for (int x = x0; x < x0 + ww; ++x) {
            const double da = a.at(y, x, c) - ma;
            const double db = b.at(y, x, c) - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
          }
        }
        va /= n;
        vb /= n;
        cov /= n;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
    }
  }
  return total / static_cast<double>(a.channels * ys.size() * xs.size());
}

RoundsStats rounds_stats(const std::vector<int>& rounds) {
  if (rounds.empty()) fail(ErrorCode::EmptyInput, "no sessions to summarize");
  RoundsStats s;
  for (int r : rounds) s.mean += r;
  s.mean /= static_cast<double>(rounds.size());
  if (rounds.size() > 1) {
    double ss = 0.0;
    for (int r : rounds) ss += (r - s.mean) * (r - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(rounds.size() - 1));
  }
  return s;
}

RoundsStats rounds_stats(const std::vector<SessionLog>& logs) {
  std::vector<int> rounds;
  for (const auto& log : logs) rounds.push_back(log.rounds.empty() ? 0 : log.rounds.back().round);
  return rounds_stats(rounds);
}

std::vector<int> EvalReport::rounds() const {
  std::vector<int> out;
  for (const auto& r : rows) out.push_back(r.rounds);
  return out;
}

nlohmann::json EvalReport::summary_json() const {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& r : rows) seeds.push_back({{"task_id", r.task_id}, {"seed", r.seed}});
  return {{"arm", arm},
          {"sessions", rows.size()},
          {"mean_rounds", mean_rounds},
          {"sd_rounds", sd_rounds},
          {"mean_final_reward", mean_final_reward},
          {"mean_ssim_to_target", mean_ssim ? nlohmann::json(*mean_ssim) : nlohmann::json(nullptr)},
          {"seeds", std::move(seeds)}};
}

std::string EvalReport::csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "task_id,seed,rounds,final_reward,ssim_to_target,status\n";
  for (const auto& r : rows) {
    out << r.task_id << ',' << r.seed << ',' << r.rounds << ',' << r.final_reward << ',';
    if (r.ssim_to_target) out << *r.ssim_to_target;
    out << ',' << r.status << '\n';
  }
  return out.str();
}

bool EvalReport::operator==(const EvalReport& other) const {
  if (rows.size() != other.rows.size()) return false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& x = rows[i];
    const auto& y = other.rows[i];
    if (x.task_id != y.task_id || x.seed != y.seed || x.rounds != y.rounds ||
        x.final_reward != y.final_reward || x.ssim_to_target != y.ssim_to_target || x.status != y.status) {
      return false;
    }
  }
  return true;
}

EvalReport summarize(std::string arm, std::vector<EvalRow> rows) {
  EvalReport report;
  report.arm = std::move(arm);
  report.rows = std::move(rows);
  if (report.rows.empty()) fail(ErrorCode::EmptyInput, "no sessions to summarize");
  const auto stats = rounds_stats(report.rounds());
  report.mean_rounds = stats.mean;
  report.sd_rounds = stats.sd;
  double reward = 0.0;
  double ssim_sum = 0.0;
  std::size_t ssim_count = 0;
  for (const auto& r : report.rows) {
    reward += r.final_reward;
    if (r.ssim_to_target) {
      ssim_sum += *r.ssim_to_target;
      ++ssim_count;
    }
  }
  report.mean_final_reward = reward / static_cast<double>(report.rows.size());
  if (ssim_count > 0) report.mean_ssim = ssim_sum / static_cast<double>(ssim_count);
  return report;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

EvalReport evaluate(const ArmSpec& arm, const std::vector<SessionTask>& tasks, const SessionConfig& cfg,
                    std::vector<SessionLog>* logs, unsigned threads) {
  if (tasks.empty()) fail(ErrorCode::EmptyInput, "no tasks to evaluate");
  std::vector<EvalRow> rows(tasks.size());
  std::vector<SessionLog> out_logs(logs ? tasks.size() : 0);
  RunOptions run;
  run.policy = arm.policy;
  run.greedy = arm.greedy;
  run.use_injection = arm.use_injection;
  run.refine = arm.refine;
  parallel_for(tasks.size(), threads, [&](std::size_t i) {
    const SimulatedUser user = make_user(tasks[i].target, cfg);
    const SessionOutcome outcome = run_session(user, tasks[i], run, cfg);
    const auto& s = outcome.state;
    rows[i] = EvalRow{tasks[i].id, tasks[i].seed, s.round, s.rewards.back(),
                      ssim(s.current.image, user.target_generation.image), to_string(s.status)};
    if (logs) out_logs[i] = make_log(s);
  });
  if (logs) *logs = std::move(out_logs);
  return summarize(arm.name, std::move(rows));
}

std::pair<EvalReport, EvalReport> compare_policies(const ArmSpec& a, const ArmSpec& b,
                                                   const std::vector<SessionTask>& tasks,
                                                   const SessionConfig& cfg, unsigned threads) {
  EvalReport ra = evaluate(a, tasks, cfg, nullptr, threads);
  EvalReport rb = evaluate(b, tasks, cfg, nullptr, threads);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (ra.rows[i].seed != rb.rows[i].seed || ra.rows[i].task_id != rb.rows[i].task_id) {
      fail(ErrorCode::NumericsError, "paired arms diverged in task seeds");
    }
  }
  return {std::move(ra), std::move(rb)};
}

EvalReport evaluate_logs(const std::vector<SessionLog>& logs, const fs::path& dir,
                         const std::vector<SessionTask>& tasks, const SessionConfig& cfg) {
  if (logs.empty()) fail(ErrorCode::EmptyInput, "no session logs in " + dir.string());
  std::map<std::string, const SessionTask*> by_id;
  for (const auto& t : tasks) by_id[t.id] = &t;
  std::vector<EvalRow> rows;
  for (const auto& log : logs) {
    EvalRow row;
    row.task_id = log.id;
    row.rounds = log.rounds.empty() ? 0 : log.rounds.back().round;
    row.final_reward = log.rounds.empty() ? 0.0 : log.rounds.back().clip_score;
    row.status = log.status;
    const auto it = by_id.find(log.id);
    if (it != by_id.end()) {
      row.seed = it->second->seed;
      if (!log.rounds.empty()) {
        const ToyImage target = make_user(it->second->target, cfg).target_generation.image;
        row.ssim_to_target = ssim(read_png(dir / log.rounds.back().image_path), target);
      }
    }
    rows.push_back(std::move(row));
  }
  return summarize("logs", std::move(rows));
}

SignTest sign_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) fail(ErrorCode::DimError, "sign test needs paired samples");
  SignTest t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) {
      ++t.wins;
    } else if (a[i] > b[i]) {
      ++t.losses;
    } else {
      ++t.ties;
    }
  }
  const int n = t.wins + t.losses;
  if (n == 0) return t;
  // P(X >= wins) for X ~ Binomial(n, 1/2).
  double p = 0.0;
  for (int k = t.wins; k <= n; ++k) {
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
  }
  t.p_value = std::min(1.0, p);
  return t;
}

SignTest sign_test(const std::vector<int>& a, const std::vector<int>& b) {
  return sign_test(std::vector<double>(a.begin(), a.end()), std::vector<double>(b.begin(), b.end()));
}

void write_report(const EvalReport& report, const fs::path& csv_path, const fs::path& json_path) {
  for (const auto& [path, text] : {std::pair{csv_path, report.csv()},
                                   std::pair{json_path, report.summary_json().dump(2) + "\n"}}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::WriteError, "cannot open " + path.string());
    out << text;
    if (!out) fail(ErrorCode::WriteError, "failed writing " + path.string());
  }
}

}  // namespace coadapt
