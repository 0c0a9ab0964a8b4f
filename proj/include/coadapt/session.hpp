#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coadapt/generator.hpp"
#include "coadapt/prompt.hpp"
#include "coadapt/rl.hpp"
#include "json.hpp"

namespace coadapt {

struct SessionConfig {
  GeneratorConfig generator;
  std::uint64_t vocab_seed = 7;
  double tau_stop = 0.92;
  int n_max = 10;
  int tau_inj = 5;  // injected steps for a word swap
  int ascent_steps = 6;
  int coords_per_step = 32;
  double eta_map = 5.0;
  double eta_align = 5.0;
  double eta_c = 2.0;

  void validate() const;
  Vocabulary vocabulary() const { return Vocabulary(vocab_seed, generator.dim); }
};

nlohmann::json to_json(const SessionConfig& cfg);
SessionConfig session_config_from_json(const nlohmann::json& j, SessionConfig base = {});

enum class SessionStatus { Active, AcceptedByThreshold, ExhaustedRounds, AcceptedByUser };

const char* to_string(SessionStatus status);
SessionStatus session_status_from_string(const std::string& text);

struct RoundRecord {
  int round = 0;
  std::string feedback;
  EditOp edit;
  double clip_score = 0.0;
  ToyImage image;
};

struct SessionState {
  std::string id;
  int round = 0;
  Prompt prompt;
  Generation current;
  std::vector<double> rewards;
  SessionStatus status = SessionStatus::Active;
  std::uint64_t seed = 0;
  // Prompt the reward is scored against; the current prompt when unset.
  std::optional<Prompt> intent;
  std::string initial_prompt;
  std::vector<RoundRecord> history;

  SessionState(std::string id, Prompt prompt) : id(std::move(id)), prompt(std::move(prompt)) {}

  bool terminal() const { return status != SessionStatus::Active; }
  const Prompt& reward_reference() const { return intent ? *intent : prompt; }
};

SessionState new_session(const std::string& text, std::uint64_t seed, const SessionConfig& cfg,
                         std::optional<Prompt> intent = std::nullopt, std::string id = "session");

struct StepOptions {
  bool use_injection = true;
  // Refine the edit parameters by reward ascent before rendering.
  bool refine = false;
  std::string feedback;
};

SessionState step_round(const SessionState& state, const EditOp& edit, const StepOptions& opts,
                        const SessionConfig& cfg);

/// Marks an active session as accepted by its user.
SessionState accept_session(const SessionState& state);

struct SimulatedUser {
  Prompt target;
  Generation target_generation;
};

SimulatedUser make_user(const std::string& target_text, const SessionConfig& cfg);

struct Proposal {
  EditOp edit;
  std::string feedback;
};

/// Ranked candidates, at most one per strategy, in the order word swap,
/// add phrase, re-weight. The re-weight candidate is always present.
std::vector<Proposal> propose_edits(const SimulatedUser& user, const SessionState& state);

StateFeatures state_features(const SessionState& state, const SessionConfig& cfg);

struct SessionTask {
  std::string id;
  std::string initial;
  std::string target;
  std::uint64_t seed = 0;
};

struct RunOptions {
  const PolicyParams* policy = nullptr;  // null: always take the top-ranked proposal
  bool greedy = false;
  bool use_injection = true;
  bool refine = true;
  const ValueParams* value = nullptr;    // set to record TD errors on transitions
  double gamma = 0.95;
};

struct SessionOutcome {
  SessionState state;
  std::vector<Transition> transitions;
};

SessionOutcome run_session(const SessionTask& task, const RunOptions& opts, const SessionConfig& cfg);
SessionOutcome run_session(const SimulatedUser& user, const SessionTask& task, const RunOptions& opts,
                           const SessionConfig& cfg);

/// Value of holding reward r until the horizon: r * (1 + gamma + ... + gamma^(remaining - 1)).
double frozen_return(double reward, double gamma, int remaining_rounds);

}  // namespace coadapt
