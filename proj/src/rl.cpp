#include "coadapt/rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "coadapt/error.hpp"

namespace coadapt {

StateFeatures StateFeatures::assemble(const Eigen::VectorXd& prompt_embedding,
                                      const Eigen::VectorXd& image_embedding, double last_reward,
                                      double round_fraction) {
  StateFeatures s;
  const Eigen::Index d = prompt_embedding.size();
  s.values.resize(d + image_embedding.size() + 2);
  s.values << prompt_embedding, image_embedding, last_reward, std::clamp(round_fraction, 0.0, 1.0);
  return s;
}

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail(ErrorCode::OutOfRange, "gamma must be in [0, 1]");
  if (!(eps_clip > 0.0)) fail(ErrorCode::OutOfRange, "eps_clip must be > 0");
  if (!(beta0 > 0.0 && beta0 <= 1.0)) fail(ErrorCode::OutOfRange, "beta0 must be in (0, 1]");
  if (!(lr > 0.0 && value_lr > 0.0)) fail(ErrorCode::OutOfRange, "learning rates must be > 0");
  if (batch < 1 || ppo_epochs < 1 || pool_capacity < 1 || episodes < 0 || updates_per_episode < 0) {
    fail(ErrorCode::OutOfRange, "batch, epochs, capacity must be >= 1 and episodes >= 0");
  }
  if (!(lambda >= 0.0) || !(epsilon_priority > 0.0)) {
    fail(ErrorCode::OutOfRange, "lambda must be >= 0 and epsilon_priority > 0");
  }
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"gamma", cfg.gamma},
          {"eps_clip", cfg.eps_clip},
          {"lr", cfg.lr},
          {"value_lr", cfg.value_lr},
          {"batch", cfg.batch},
          {"ppo_epochs", cfg.ppo_epochs},
          {"value_coef", cfg.value_coef},
          {"kl_coef", cfg.kl_coef},
          {"lambda", cfg.lambda},
          {"epsilon_priority", cfg.epsilon_priority},
          {"beta0", cfg.beta0},
          {"episodes", cfg.episodes},
          {"pool_capacity", cfg.pool_capacity},
          {"updates_per_episode", cfg.updates_per_episode},
          {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    read("gamma", base.gamma);
    read("eps_clip", base.eps_clip);
    read("lr", base.lr);
    read("value_lr", base.value_lr);
    read("batch", base.batch);
    read("ppo_epochs", base.ppo_epochs);
    read("value_coef", base.value_coef);
    read("kl_coef", base.kl_coef);
    read("lambda", base.lambda);
    read("epsilon_priority", base.epsilon_priority);
    read("beta0", base.beta0);
    read("episodes", base.episodes);
    read("pool_capacity", base.pool_capacity);
    read("updates_per_episode", base.updates_per_episode);
    read("seed", base.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("train config: ") + e.what());
  }
  base.validate();
  return base;
}

double td_error(double reward, double gamma, double v_s, double v_next) {
  return reward + gamma * v_next - v_s;
}

double advantage(double reward, double gamma, double v_s, double v_next) {
  return td_error(reward, gamma, v_s, v_next);
}

double priority(double delta, double age_steps, double lambda, double epsilon) {
  return std::exp(-lambda * age_steps) * std::abs(delta) + epsilon;
}

double anneal_beta(std::size_t step, std::size_t total, double beta0) {
  if (total == 0) return 1.0;
  const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
  return beta0 + (1.0 - beta0) * frac;
}

double ppo_objective(double ratio, double adv, double eps_clip) {
  const double clipped = std::clamp(ratio, 1.0 - eps_clip, 1.0 + eps_clip);
  return std::min(ratio * adv, clipped * adv);
}

ReplayPool::ReplayPool(std::size_t capacity, double lambda, double epsilon)
    : capacity_(capacity), lambda_(lambda), epsilon_(epsilon) {
  if (capacity_ == 0) fail(ErrorCode::OutOfRange, "replay capacity must be >= 1");
  if (!(epsilon_ > 0.0) || !(lambda_ >= 0.0)) {
    fail(ErrorCode::OutOfRange, "replay needs lambda >= 0 and epsilon > 0");
  }
}

void ReplayPool::push(Transition t) {
  t.inserted_at = clock_++;
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(std::move(t));
}

double ReplayPool::age(std::size_t i) const {
  // The most recent insertion has age 0.
  return static_cast<double>(clock_ - 1 - entries_.at(i).inserted_at);
}

double ReplayPool::priority_of(std::size_t i) const {
  return priority(entries_.at(i).delta, age(i), lambda_, epsilon_);
}

std::vector<double> ReplayPool::priorities() const {
  std::vector<double> out(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) out[i] = priority_of(i);
  return out;
}

SampledBatch sample_batch(const ReplayPool& pool, std::size_t k, double beta, Rng& rng) {
  if (pool.empty()) fail(ErrorCode::EmptyPool, "cannot sample from an empty replay pool");
  if (k == 0) fail(ErrorCode::OutOfRange, "batch size must be >= 1");
  const auto prios = pool.priorities();
  double total = 0.0;
  for (double p : prios) total += p;
  const double n = static_cast<double>(pool.size());

  SampledBatch batch;
  batch.indices.reserve(k);
  for (std::size_t draw = 0; draw < k; ++draw) batch.indices.push_back(rng.categorical(prios));
  double max_weight = 0.0;
  for (std::size_t idx : batch.indices) {
    const double w = std::pow(n * prios[idx] / total, -beta);
    batch.weights.push_back(w);
    max_weight = std::max(max_weight, w);
    batch.transitions.push_back(pool.at(idx));
  }
  for (double& w : batch.weights) w /= max_weight;
  return batch;
}

PolicyParams PolicyParams::zeros(int features) {
  return {Eigen::MatrixXd::Zero(kNumActions, features), Eigen::VectorXd::Zero(kNumActions)};
}

PolicyParams PolicyParams::random(int features, double scale, std::uint64_t seed) {
  Rng rng(seed);
  PolicyParams p = zeros(features);
  for (Eigen::Index i = 0; i < p.weights.size(); ++i) p.weights.data()[i] = scale * rng.normal();
  for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias[i] = scale * rng.normal();
  return p;
}

PolicyParams& PolicyParams::operator+=(const PolicyParams& o) {
  weights += o.weights;
  bias += o.bias;
  return *this;
}

PolicyParams PolicyParams::operator*(double s) const { return {weights * s, bias * s}; }

ValueParams ValueParams::zeros(int features) { return {Eigen::VectorXd::Zero(features), 0.0}; }

namespace {

Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return (z.array() - lse).matrix();
}

Eigen::VectorXd logits(const PolicyParams& policy, const StateFeatures& s) {
  if (s.values.size() != policy.weights.cols()) {
    fail(ErrorCode::DimError, "state features do not match policy width");
  }
  return policy.weights * s.values + policy.bias;
}

double weight_at(std::span<const double> weights, std::size_t i) {
  return weights.empty() ? 1.0 : weights[i];
}

void check_batch(std::span<const Transition> batch, std::span<const double> weights) {
  if (batch.empty()) fail(ErrorCode::EmptyPool, "update needs a non-empty batch");
  if (!weights.empty() && weights.size() != batch.size()) {
    fail(ErrorCode::DimError, "importance weights do not match the batch");
  }
}

}  // namespace

Eigen::VectorXd action_probabilities(const PolicyParams& policy, const StateFeatures& s) {
  return log_softmax(logits(policy, s)).array().exp().matrix();
}

double value_of(const ValueParams& value, const StateFeatures& s) {
  if (s.values.size() != value.weights.size()) {
    fail(ErrorCode::DimError, "state features do not match value width");
  }
  return value.weights.dot(s.values) + value.bias;
}

double bootstrap_value(const ValueParams& value, const Transition& t) {
  return t.terminal ? t.terminal_value : value_of(value, t.next_state);
}

double recompute_delta(const ValueParams& value, const Transition& t, double gamma) {
  return td_error(t.reward, gamma, value_of(value, t.state), bootstrap_value(value, t));
}

ActionChoice policy_action(const PolicyParams& policy, const StateFeatures& s, Rng& rng) {
  const Eigen::VectorXd logp = log_softmax(logits(policy, s));
  const Eigen::VectorXd p = logp.array().exp().matrix();
  const int a = static_cast<int>(rng.categorical(std::span<const double>(p.data(), p.size())));
  return {a, logp[a]};
}

ActionChoice greedy_action(const PolicyParams& policy, const StateFeatures& s) {
  const Eigen::VectorXd logp = log_softmax(logits(policy, s));
  Eigen::Index best = 0;
  logp.maxCoeff(&best);
  return {static_cast<int>(best), logp[best]};
}

double policy_objective(const PolicyParams& policy, const PolicyParams& reference,
                        std::span<const Transition> batch, std::span<const double> weights,
                        const TrainConfig& cfg) {
  check_batch(batch, weights);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch[i];
    const Eigen::VectorXd logp = log_softmax(logits(policy, t.state));
    const Eigen::VectorXd logq = log_softmax(logits(reference, t.state));
    const double ratio = std::exp(logp[t.action] - t.old_logprob);
    const double kl = (logp.array().exp() * (logp - logq).array()).sum();
    total += weight_at(weights, i) * ppo_objective(ratio, t.delta, cfg.eps_clip) - cfg.kl_coef * kl;
  }
  return total / static_cast<double>(batch.size());
}

PolicyParams policy_gradient(const PolicyParams& policy, const PolicyParams& reference,
                             std::span<const Transition> batch, std::span<const double> weights,
                             const TrainConfig& cfg) {
  check_batch(batch, weights);
  PolicyParams grad = PolicyParams::zeros(static_cast<int>(policy.weights.cols()));
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch[i];
    const Eigen::VectorXd logp = log_softmax(logits(policy, t.state));
    const Eigen::VectorXd p = logp.array().exp().matrix();
    const Eigen::VectorXd logq = log_softmax(logits(reference, t.state));
    const double ratio = std::exp(logp[t.action] - t.old_logprob);
    const double adv = t.delta;

    Eigen::VectorXd dz = Eigen::VectorXd::Zero(kNumActions);
    // min(r A, clip(r) A) follows r A unless the clip bound is the active branch.
    const bool passes = (adv > 0.0 && ratio < 1.0 + cfg.eps_clip) ||
                        (adv < 0.0 && ratio > 1.0 - cfg.eps_clip);
    if (passes) {
      Eigen::VectorXd dlogp = -p;
      dlogp[t.action] += 1.0;
      dz += weight_at(weights, i) * adv * ratio * dlogp;
    }
    const Eigen::VectorXd log_ratio = logp - logq;
    const double kl = p.dot(log_ratio);
    dz -= cfg.kl_coef * (p.array() * (log_ratio.array() - kl)).matrix();

    dz *= inv_b;
    grad.weights += dz * t.state.values.transpose();
    grad.bias += dz;
  }
  return grad;
}

PolicyUpdate update_policy(const PolicyParams& policy, const PolicyParams& reference,
                           std::span<const Transition> batch, std::span<const double> weights,
                           const TrainConfig& cfg) {
  PolicyUpdate out{policy, 0.0};
  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    const PolicyParams grad = policy_gradient(out.params, reference, batch, weights, cfg);
    if (!grad.all_finite()) fail(ErrorCode::NumericsError, "non-finite policy gradient");
    out.params += grad * cfg.lr;
  }
  out.objective = policy_objective(out.params, reference, batch, weights, cfg);
  if (!std::isfinite(out.objective)) fail(ErrorCode::NumericsError, "non-finite policy objective");
  return out;
}

double value_loss(const ValueParams& value, std::span<const Transition> batch,
                  std::span<const double> weights, const TrainConfig& cfg) {
  check_batch(batch, weights);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double d = recompute_delta(value, batch[i], cfg.gamma);
    total += weight_at(weights, i) * d * d;
  }
  return cfg.value_coef * total / static_cast<double>(batch.size());
}

ValueParams value_gradient(const ValueParams& value, std::span<const Transition> batch,
                           std::span<const double> weights, const TrainConfig& cfg) {
  check_batch(batch, weights);
  ValueParams grad = ValueParams::zeros(static_cast<int>(value.weights.size()));
  const double scale = 2.0 * cfg.value_coef / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch[i];
    const double d = recompute_delta(value, t, cfg.gamma);
    // d(delta)/dw = gamma * s' (when bootstrapping from V) - s
    Eigen::VectorXd ddelta = -t.state.values;
    double dbias = -1.0;
    if (!t.terminal) {
      ddelta += cfg.gamma * t.next_state.values;
      dbias += cfg.gamma;
    }
    const double coeff = scale * weight_at(weights, i) * d;
    grad.weights += coeff * ddelta;
    grad.bias += coeff * dbias;
  }
  return grad;
}

ValueUpdate update_value(const ValueParams& value, std::span<const Transition> batch,
                         const TrainConfig& cfg, std::span<const double> weights) {
  const ValueParams grad = value_gradient(value, batch, weights, cfg);
  if (!grad.weights.allFinite() || !std::isfinite(grad.bias)) {
    fail(ErrorCode::NumericsError, "non-finite value gradient");
  }
  ValueUpdate out;
  out.params.weights = value.weights - cfg.value_lr * grad.weights;
  out.params.bias = value.bias - cfg.value_lr * grad.bias;
  out.loss = value_loss(out.params, batch, weights, cfg);
  return out;
}

std::string config_hash(const nlohmann::json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json to_json(const Checkpoint& ckpt) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index a = 0; a < ckpt.policy.weights.rows(); ++a) {
    std::vector<double> row(static_cast<std::size_t>(ckpt.policy.weights.cols()));
    for (Eigen::Index f = 0; f < ckpt.policy.weights.cols(); ++f) row[f] = ckpt.policy.weights(a, f);
    rows.push_back(row);
  }
  const auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"format", "coadapt-checkpoint"},
          {"version", 1},
          {"features", ckpt.policy.weights.cols()},
          {"config_hash", config_hash(ckpt.config)},
          {"config", ckpt.config},
          {"policy", {{"weights", rows}, {"bias", vec(ckpt.policy.bias)}}},
          {"value", {{"weights", vec(ckpt.value.weights)}, {"bias", ckpt.value.bias}}}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "coadapt-checkpoint" || j.at("version") != 1) {
      fail(ErrorCode::ParseError, "unsupported checkpoint format");
    }
    const int features = j.at("features").get<int>();
    Checkpoint c;
    c.config = j.at("config");
    c.config_hash = j.at("config_hash").get<std::string>();
    if (c.config_hash != config_hash(c.config)) fail(ErrorCode::ParseError, "checkpoint config hash mismatch");
    c.policy = PolicyParams::zeros(features);
    const auto& rows = j.at("policy").at("weights");
    if (rows.size() != kNumActions) fail(ErrorCode::ParseError, "checkpoint policy has wrong action count");
    for (int a = 0; a < kNumActions; ++a) {
      const auto row = rows.at(a).get<std::vector<double>>();
      if (static_cast<int>(row.size()) != features) fail(ErrorCode::ParseError, "policy row width");
      for (int f = 0; f < features; ++f) c.policy.weights(a, f) = row[f];
    }
    const auto bias = j.at("policy").at("bias").get<std::vector<double>>();
    const auto vw = j.at("value").at("weights").get<std::vector<double>>();
    if (bias.size() != kNumActions || static_cast<int>(vw.size()) != features) {
      fail(ErrorCode::ParseError, "checkpoint vector sizes");
    }
    c.policy.bias = Eigen::Map<const Eigen::VectorXd>(bias.data(), kNumActions);
    c.value.weights = Eigen::Map<const Eigen::VectorXd>(vw.data(), features);
    c.value.bias = j.at("value").at("bias").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::WriteError, "cannot open " + path);
  out << to_json(ckpt).dump(2) << '\n';
  if (!out) fail(ErrorCode::WriteError, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ParseError, "cannot open " + path);
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::ParseError, path + ": " + e.what());
  }
}

}  // namespace coadapt
