#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "coadapt/prompt.hpp"
#include "coadapt/rng.hpp"
#include "json.hpp"

namespace coadapt {

inline constexpr int kNumActions = kNumEditKinds;

/// [prompt embedding, image embedding, last reward, round / N_max]
struct StateFeatures {
  Eigen::VectorXd values;

  static StateFeatures assemble(const Eigen::VectorXd& prompt_embedding,
                                const Eigen::VectorXd& image_embedding, double last_reward,
                                double round_fraction);
  static int length(int dim) { return 2 * dim + 2; }
};

struct Transition {
  StateFeatures state;
  int action = 0;
  double reward = 0.0;
  StateFeatures next_state;
  // Terminal transitions bootstrap from terminal_value instead of V(next_state).
  bool terminal = false;
  double terminal_value = 0.0;
  double delta = 0.0;
  std::uint64_t inserted_at = 0;
  double old_logprob = 0.0;
};

struct TrainConfig {
  double gamma = 0.95;
  double eps_clip = 0.2;
  double lr = 5e-5;        // policy ascent rate
  double value_lr = 5e-5;  // TD descent rate
  std::size_t batch = 256;
  int ppo_epochs = 4;
  double value_coef = 2.2;
  double kl_coef = 0.3;
  double lambda = 0.01;
  double epsilon_priority = 0.01;
  double beta0 = 0.4;
  int episodes = 12000;
  std::size_t pool_capacity = 8192;
  int updates_per_episode = 1;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

double td_error(double reward, double gamma, double v_s, double v_next);
/// One-step advantage; the same formula as td_error.
double advantage(double reward, double gamma, double v_s, double v_next);
/// exp(-lambda * age) * |delta| + epsilon
double priority(double delta, double age_steps, double lambda, double epsilon);
/// Linear ramp from beta0 at step 0 to 1 at step == total.
double anneal_beta(std::size_t step, std::size_t total, double beta0);
/// min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv)
double ppo_objective(double ratio, double adv, double eps_clip);

/// Bounded replay memory with forgetting-curve priorities. Not thread-safe;
/// callers hold exclusive access during push/sample.
class ReplayPool {
 public:
  ReplayPool(std::size_t capacity, double lambda, double epsilon);

  void push(Transition t);
  /// Advances the global clock without inserting.
  void advance(std::uint64_t steps) { clock_ += steps; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t clock() const { return clock_; }
  const Transition& at(std::size_t i) const { return entries_.at(i); }
  void set_delta(std::size_t i, double delta) { entries_.at(i).delta = delta; }

  double age(std::size_t i) const;
  double priority_of(std::size_t i) const;
  std::vector<double> priorities() const;

 private:
  std::size_t capacity_;
  double lambda_;
  double epsilon_;
  std::uint64_t clock_ = 0;
  std::deque<Transition> entries_;
};

struct SampledBatch {
  std::vector<std::size_t> indices;
  std::vector<Transition> transitions;
  std::vector<double> weights;  // (n * P_i)^-beta normalized by the batch max
};

/// k draws with replacement, probability proportional to priority.
SampledBatch sample_batch(const ReplayPool& pool, std::size_t k, double beta, Rng& rng);

struct PolicyParams {
  Eigen::MatrixXd weights;  // actions x features
  Eigen::VectorXd bias;

  static PolicyParams zeros(int features);
  static PolicyParams random(int features, double scale, std::uint64_t seed);
  PolicyParams& operator+=(const PolicyParams& o);
  PolicyParams operator*(double s) const;
  bool operator==(const PolicyParams& o) const { return weights == o.weights && bias == o.bias; }
  bool all_finite() const { return weights.allFinite() && bias.allFinite(); }
};

struct ValueParams {
  Eigen::VectorXd weights;
  double bias = 0.0;

  static ValueParams zeros(int features);
  bool operator==(const ValueParams& o) const { return weights == o.weights && bias == o.bias; }
};

Eigen::VectorXd action_probabilities(const PolicyParams& policy, const StateFeatures& s);
double value_of(const ValueParams& value, const StateFeatures& s);
/// V(s') for non-terminal transitions, terminal_value otherwise.
double bootstrap_value(const ValueParams& value, const Transition& t);
double recompute_delta(const ValueParams& value, const Transition& t, double gamma);

struct ActionChoice {
  int action = 0;
  double logprob = 0.0;
};

ActionChoice policy_action(const PolicyParams& policy, const StateFeatures& s, Rng& rng);
ActionChoice greedy_action(const PolicyParams& policy, const StateFeatures& s);

/// Importance-weighted clipped surrogate minus kl_coef * KL(pi || reference),
/// averaged over the batch. Advantages are the transitions' stored deltas.
double policy_objective(const PolicyParams& policy, const PolicyParams& reference,
                        std::span<const Transition> batch, std::span<const double> weights,
                        const TrainConfig& cfg);
PolicyParams policy_gradient(const PolicyParams& policy, const PolicyParams& reference,
                             std::span<const Transition> batch, std::span<const double> weights,
                             const TrainConfig& cfg);

struct PolicyUpdate {
  PolicyParams params;
  double objective = 0.0;  // at the updated parameters
};

/// cfg.ppo_epochs gradient-ascent passes with rate cfg.lr.
PolicyUpdate update_policy(const PolicyParams& policy, const PolicyParams& reference,
                           std::span<const Transition> batch, std::span<const double> weights,
                           const TrainConfig& cfg);

/// value_coef * weighted mean of delta^2, deltas recomputed from `value`.
double value_loss(const ValueParams& value, std::span<const Transition> batch,
                  std::span<const double> weights, const TrainConfig& cfg);
ValueParams value_gradient(const ValueParams& value, std::span<const Transition> batch,
                           std::span<const double> weights, const TrainConfig& cfg);

struct ValueUpdate {
  ValueParams params;
  double loss = 0.0;  // at the updated parameters
};

/// One gradient-descent step with rate cfg.value_lr. Empty weights mean all ones.
ValueUpdate update_value(const ValueParams& value, std::span<const Transition> batch,
                         const TrainConfig& cfg, std::span<const double> weights = {});

struct Checkpoint {
  PolicyParams policy;
  ValueParams value;
  nlohmann::json config;
  std::string config_hash;
};

std::string config_hash(const nlohmann::json& config);
nlohmann::json to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace coadapt
