#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coadapt/rl.hpp"
#include "coadapt/session.hpp"
#include "json.hpp"

namespace coadapt {

/// Deterministic task generator: a target of distinct content words and an
/// initial prompt that drops a suffix of it and swaps some kept words.
class TaskSampler {
 public:
  TaskSampler(std::uint64_t seed, int min_len = 3, int max_len = 5);

  SessionTask sample(std::size_t index) const;
  std::vector<SessionTask> sample_many(std::size_t count, std::size_t offset = 0) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  int min_len_;
  int max_len_;
};

struct EpisodeStats {
  int episode = 0;
  int rounds = 0;
  double mean_reward = 0.0;
  double final_reward = 0.0;
  std::string status;
  double policy_objective = 0.0;
  double value_loss = 0.0;
};

struct TrainingReport {
  std::vector<EpisodeStats> episodes;

  /// Mean rounds over episodes [from, to).
  double mean_rounds(std::size_t from, std::size_t to) const;
  nlohmann::json to_json() const;
};

struct TrainingOptions {
  bool use_injection = true;
  bool refine = true;
  // Written when a numerical failure aborts the run.
  std::optional<std::string> abort_checkpoint;
};

struct TrainingResult {
  PolicyParams policy;
  ValueParams value;
  TrainingReport report;
};

TrainingResult train_policy(const TrainConfig& train, const SessionConfig& session,
                            const TaskSampler& sampler, const TrainingOptions& opts = {});

Checkpoint make_checkpoint(const TrainingResult& result, const TrainConfig& train,
                           const SessionConfig& session);

}  // namespace coadapt
