#include "coadapt/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coadapt/error.hpp"
#include "coadapt/rng.hpp"

namespace coadapt {

namespace {

// Builtin words before this index are function words.
constexpr std::size_t kFirstContentWord = 7;

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

TaskSampler::TaskSampler(std::uint64_t seed, int min_len, int max_len)
    : seed_(seed), min_len_(min_len), max_len_(max_len) {
  if (min_len < 2 || max_len < min_len) fail(ErrorCode::OutOfRange, "task lengths need 2 <= min <= max");
}

SessionTask TaskSampler::sample(std::size_t index) const {
  const std::uint64_t task_seed = combine_seed(seed_, index);
  Rng rng(task_seed);
  const auto& words = Vocabulary::builtin_words();
  std::vector<std::string> pool(words.begin() + kFirstContentWord, words.end());
  // Partial Fisher-Yates gives distinct words.
  const auto len = static_cast<std::size_t>(min_len_) + rng.index(static_cast<std::size_t>(max_len_ - min_len_ + 1));
  for (std::size_t i = 0; i < pool.size() - 1; ++i) {
    std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
  }
  std::vector<std::string> target(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(len));

  const std::size_t max_drop = std::min<std::size_t>(2, len - 2);
  const std::size_t drop = rng.index(max_drop + 1);
  std::vector<std::string> initial(target.begin(), target.end() - static_cast<std::ptrdiff_t>(drop));
  const std::size_t max_swaps = std::min<std::size_t>(2, initial.size());
  const std::size_t swaps = 1 + rng.index(max_swaps);
  std::vector<std::size_t> positions(initial.size());
  std::iota(positions.begin(), positions.end(), 0);
  for (std::size_t i = 0; i < swaps; ++i) {
    std::swap(positions[i], positions[i + rng.index(positions.size() - i)]);
    // Replacement words come from the unused tail of the shuffled pool.
    initial[positions[i]] = pool[len + i];
  }

  SessionTask task;
  task.id = "task-" + std::to_string(index);
  task.initial = join(initial);
  task.target = join(target);
  task.seed = task_seed;
  return task;
}

std::vector<SessionTask> TaskSampler::sample_many(std::size_t count, std::size_t offset) const {
  std::vector<SessionTask> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample(offset + i));
  return out;
}

double TrainingReport::mean_rounds(std::size_t from, std::size_t to) const {
  to = std::min(to, episodes.size());
  if (from >= to) fail(ErrorCode::EmptyInput, "no episodes in range");
  double total = 0.0;
  for (std::size_t i = from; i < to; ++i) total += episodes[i].rounds;
  return total / static_cast<double>(to - from);
}

nlohmann::json TrainingReport::to_json() const {
  auto rows = nlohmann::json::array();
  for (const auto& e : episodes) {
    rows.push_back({{"episode", e.episode},
                    {"rounds", e.rounds},
                    {"mean_reward", e.mean_reward},
                    {"final_reward", e.final_reward},
                    {"status", e.status},
                    {"policy_objective", e.policy_objective},
                    {"value_loss", e.value_loss}});
  }
  return {{"episodes", std::move(rows)}};
}

TrainingResult train_policy(const TrainConfig& train, const SessionConfig& session,
                            const TaskSampler& sampler, const TrainingOptions& opts) {
  train.validate();
  session.validate();
  const int features = StateFeatures::length(session.generator.dim);
  TrainingResult result{PolicyParams::zeros(features), ValueParams::zeros(features), {}};
  // The KL term pulls toward the parameters frozen at the start of training.
  const PolicyParams reference = result.policy;
  ReplayPool pool(train.pool_capacity, train.lambda, train.epsilon_priority);
  Rng rng(combine_seed(train.seed, 0xba7c4));

  auto abort = [&](const std::string& what) {
    if (opts.abort_checkpoint) save_checkpoint(make_checkpoint(result, train, session), *opts.abort_checkpoint);
    fail(ErrorCode::NumericsError, what);
  };

  for (int ep = 0; ep < train.episodes; ++ep) {
    SessionTask task = sampler.sample(static_cast<std::size_t>(ep));
    task.seed = combine_seed(task.seed, train.seed);
    RunOptions run;
    run.policy = &result.policy;
    run.use_injection = opts.use_injection;
    run.refine = opts.refine;
    run.value = &result.value;
    run.gamma = train.gamma;
    SessionOutcome outcome = run_session(task, run, session);
    for (auto& t : outcome.transitions) pool.push(std::move(t));

    EpisodeStats stats;
    stats.episode = ep;
    stats.rounds = outcome.state.round;
    const auto& rewards = outcome.state.rewards;
    stats.final_reward = rewards.back();
    stats.mean_reward = std::accumulate(rewards.begin() + 1, rewards.end(), 0.0) /
                        static_cast<double>(std::max<std::size_t>(1, rewards.size() - 1));
    stats.status = to_string(outcome.state.status);

    const double beta = anneal_beta(static_cast<std::size_t>(ep), static_cast<std::size_t>(train.episodes), train.beta0);
    for (int u = 0; u < train.updates_per_episode; ++u) {
      SampledBatch batch = sample_batch(pool, train.batch, beta, rng);
      for (std::size_t i = 0; i < batch.indices.size(); ++i) {
        const double delta = recompute_delta(result.value, batch.transitions[i], train.gamma);
        batch.transitions[i].delta = delta;
        pool.set_delta(batch.indices[i], delta);
      }
      PolicyUpdate pu;
      ValueUpdate vu;
      try {
        pu = update_policy(result.policy, reference, batch.transitions, batch.weights, train);
        vu = update_value(result.value, batch.transitions, train, batch.weights);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NumericsError) throw;
        abort(e.what());
      }
      if (!pu.params.all_finite() || !vu.params.weights.allFinite() || !std::isfinite(vu.params.bias)) {
        abort("non-finite parameters at episode " + std::to_string(ep));
      }
      result.policy = std::move(pu.params);
      result.value = std::move(vu.params);
      stats.policy_objective = pu.objective;
      stats.value_loss = vu.loss;
    }
    result.report.episodes.push_back(stats);
  }
  return result;
}

Checkpoint make_checkpoint(const TrainingResult& result, const TrainConfig& train,
                           const SessionConfig& session) {
  nlohmann::json config = {{"train", to_json(train)}, {"session", to_json(session)}};
  const std::string hash = config_hash(config);
  return Checkpoint{result.policy, result.value, std::move(config), hash};
}

}  // namespace coadapt
