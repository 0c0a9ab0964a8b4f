#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coadapt/image.hpp"
#include "coadapt/rl.hpp"
#include "coadapt/session.hpp"
#include "coadapt/session_log.hpp"
#include "json.hpp"

namespace coadapt {

inline constexpr int kSsimWindow = 8;
inline constexpr int kSsimStride = 4;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Mean SSIM over 8x8 windows at stride 4 (dynamic range 1), averaged over channels.
double ssim(const ToyImage& a, const ToyImage& b);

struct RoundsStats {
  double mean = 0.0;
  double sd = 0.0;  // sample SD, 0 for a single log
};

/// Statistics of the terminal round index of each log. Throws EmptyInput.
RoundsStats rounds_stats(const std::vector<SessionLog>& logs);
RoundsStats rounds_stats(const std::vector<int>& rounds);

struct EvalRow {
  std::string task_id;
  std::uint64_t seed = 0;
  int rounds = 0;
  double final_reward = 0.0;
  std::optional<double> ssim_to_target;
  std::string status;
};

struct EvalReport {
  std::string arm;
  std::vector<EvalRow> rows;
  double mean_rounds = 0.0;
  double sd_rounds = 0.0;
  double mean_final_reward = 0.0;
  std::optional<double> mean_ssim;

  std::vector<int> rounds() const;
  nlohmann::json summary_json() const;
  std::string csv() const;
  bool operator==(const EvalReport& other) const;
};

EvalReport summarize(std::string arm, std::vector<EvalRow> rows);

struct ArmSpec {
  std::string name = "arm";
  const PolicyParams* policy = nullptr;  // null: top-ranked proposal every round
  bool greedy = false;
  bool use_injection = true;
  bool refine = true;
};

/// Runs every task under the arm, in parallel across tasks. Rows keep the
/// task order and each task's seed, so two arms over one task list are paired.
EvalReport evaluate(const ArmSpec& arm, const std::vector<SessionTask>& tasks, const SessionConfig& cfg,
                    std::vector<SessionLog>* logs = nullptr, unsigned threads = 0);

std::pair<EvalReport, EvalReport> compare_policies(const ArmSpec& a, const ArmSpec& b,
                                                   const std::vector<SessionTask>& tasks,
                                                   const SessionConfig& cfg, unsigned threads = 0);

/// Report over saved logs; SSIM is filled when a target text is known for the id.
EvalReport evaluate_logs(const std::vector<SessionLog>& logs, const std::filesystem::path& dir,
                         const std::vector<SessionTask>& tasks, const SessionConfig& cfg);

struct SignTest {
  int wins = 0;    // pairs where a < b
  int losses = 0;  // pairs where a > b
  int ties = 0;
  double p_value = 1.0;  // one-sided, H1: a tends to be smaller
};

/// Exact binomial sign test with ties dropped.
SignTest sign_test(const std::vector<int>& a, const std::vector<int>& b);
SignTest sign_test(const std::vector<double>& a, const std::vector<double>& b);

void write_report(const EvalReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path);

}  // namespace coadapt
