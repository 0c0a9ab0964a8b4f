#include "coadapt/session.hpp"

#include <algorithm>
#include <cmath>

#include "coadapt/error.hpp"
#include "coadapt/reward.hpp"
#include "coadapt/rng.hpp"

namespace coadapt {

void SessionConfig::validate() const {
  generator.validate();
  if (n_max < 1) fail(ErrorCode::OutOfRange, "n_max must be >= 1");
  if (tau_inj < 0 || tau_inj > generator.steps) {
    fail(ErrorCode::OutOfRange, "tau_inj must lie in [0, steps]");
  }
  if (ascent_steps < 0 || coords_per_step < 1) fail(ErrorCode::OutOfRange, "bad ascent settings");
  if (!std::isfinite(tau_stop)) fail(ErrorCode::OutOfRange, "tau_stop must be finite");
}

nlohmann::json to_json(const SessionConfig& cfg) {
  const auto& g = cfg.generator;
  return {{"height", g.height},
          {"width", g.width},
          {"channels", g.channels},
          {"steps", g.steps},
          {"dim", g.dim},
          {"generator_seed", g.seed},
          {"temperature", g.temperature},
          {"vocab_seed", cfg.vocab_seed},
          {"tau_stop", cfg.tau_stop},
          {"n_max", cfg.n_max},
          {"tau_inj", cfg.tau_inj},
          {"ascent_steps", cfg.ascent_steps},
          {"coords_per_step", cfg.coords_per_step},
          {"eta_map", cfg.eta_map},
          {"eta_align", cfg.eta_align},
          {"eta_c", cfg.eta_c}};
}

SessionConfig session_config_from_json(const nlohmann::json& j, SessionConfig base) {
  auto& g = base.generator;
  try {
    g.height = j.value("height", g.height);
    g.width = j.value("width", g.width);
    g.channels = j.value("channels", g.channels);
    g.steps = j.value("steps", g.steps);
    g.dim = j.value("dim", g.dim);
    g.seed = j.value("generator_seed", g.seed);
    g.temperature = j.value("temperature", g.temperature);
    base.vocab_seed = j.value("vocab_seed", base.vocab_seed);
    base.tau_stop = j.value("tau_stop", base.tau_stop);
    base.n_max = j.value("n_max", base.n_max);
    base.tau_inj = j.value("tau_inj", base.tau_inj);
    base.ascent_steps = j.value("ascent_steps", base.ascent_steps);
    base.coords_per_step = j.value("coords_per_step", base.coords_per_step);
    base.eta_map = j.value("eta_map", base.eta_map);
    base.eta_align = j.value("eta_align", base.eta_align);
    base.eta_c = j.value("eta_c", base.eta_c);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("session config: ") + e.what());
  }
  base.validate();
  return base;
}

const char* to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::Active: return "active";
    case SessionStatus::AcceptedByThreshold: return "accepted_by_threshold";
    case SessionStatus::ExhaustedRounds: return "exhausted_rounds";
    case SessionStatus::AcceptedByUser: return "accepted_by_user";
  }
  return "unknown";
}

SessionStatus session_status_from_string(const std::string& text) {
  for (auto s : {SessionStatus::Active, SessionStatus::AcceptedByThreshold,
                 SessionStatus::ExhaustedRounds, SessionStatus::AcceptedByUser}) {
    if (text == to_string(s)) return s;
  }
  fail(ErrorCode::ParseError, "unknown session status '" + text + "'");
}

SessionState new_session(const std::string& text, std::uint64_t seed, const SessionConfig& cfg,
                         std::optional<Prompt> intent, std::string id) {
  cfg.validate();
  SessionState state(std::move(id), tokenize(text, cfg.vocabulary()));
  state.seed = seed;
  state.intent = std::move(intent);
  state.initial_prompt = state.prompt.text();
  state.current = generate(state.prompt, cfg.generator);
  state.rewards.push_back(clip_score(state.current.image, state.reward_reference()));
  return state;
}

namespace {

double clamp_scale(double c) { return std::clamp(c, -2.0, 2.0); }

}  // namespace

SessionState step_round(const SessionState& state, const EditOp& edit, const StepOptions& opts,
                        const SessionConfig& cfg) {
  if (state.terminal()) fail(ErrorCode::SessionClosed, "session '" + state.id + "' is closed");
  Prompt next = apply_edit(state.prompt, edit);
  const Prompt& reference = state.intent ? *state.intent : next;
  const ImageReward reward = [&reference](const ToyImage& img) {
    // An ascent probe may black out the image; score it as the worst case.
    try {
      return clip_score(img, reference);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateEmbedding) throw;
      return -1.0;
    }
  };

  Generation generation;
  if (opts.use_injection) {
    EditController ctrl;
    ctrl.tau_inj = cfg.tau_inj;
    ctrl.eta_map = cfg.eta_map;
    ctrl.eta_align = cfg.eta_align;
    ctrl.eta_c = cfg.eta_c;
    ctrl.ascent_steps = opts.refine ? cfg.ascent_steps : 0;
    ctrl.coords_per_step = cfg.coords_per_step;
    ctrl.seed = combine_seed(state.seed, static_cast<std::uint64_t>(state.round + 1));
    double previous_weight = 1.0;
    switch (kind_of(edit)) {
      case EditKind::WordSwap:
        if (next.size() == state.prompt.size()) {
          ctrl.mode = EditKind::WordSwap;
        } else {
          ctrl.mode = EditKind::AddPhrase;
          ctrl.alignment = compute_alignment(state.prompt, next);
        }
        break;
      case EditKind::AddPhrase:
        ctrl.mode = EditKind::AddPhrase;
        ctrl.alignment = compute_alignment(state.prompt, next);
        break;
      case EditKind::Reweight: {
        // The prompt weight is absolute; the stored maps already carry the
        // previous weight, so they are scaled by the ratio.
        const auto& rw = std::get<Reweight>(edit);
        previous_weight = state.prompt.weight(rw.index);
        ctrl.mode = EditKind::Reweight;
        ctrl.j_star = rw.index;
        ctrl.scale = previous_weight != 0.0 ? clamp_scale(rw.scale / previous_weight) : rw.scale;
        break;
      }
    }
    auto controlled = regenerate_with_controller(next, state.current.attention, ctrl, cfg.generator,
                                                 opts.refine ? reward : ImageReward{});
    if (opts.refine && ctrl.ascent_steps > 0) {
      // Refinement must not score below the edit as requested.
      EditController literal = ctrl;
      literal.ascent_steps = 0;
      auto plain = regenerate_with_controller(next, state.current.attention, literal, cfg.generator);
      if (reward(plain.generation.image) > reward(controlled.generation.image)) controlled = std::move(plain);
    }
    generation = std::move(controlled.generation);
    if (ctrl.mode == EditKind::Reweight && controlled.applied.scale != ctrl.scale) {
      auto weights = next.weights();
      const double base = previous_weight != 0.0 ? previous_weight : 1.0;
      weights[ctrl.j_star] = clamp_scale(base * controlled.applied.scale);
      next = Prompt(next.tokens(), std::move(weights));
    }
  } else {
    generation = generate(next, cfg.generator);
  }

  SessionState out = state;
  out.round = state.round + 1;
  out.prompt = std::move(next);
  const double score = clip_score(generation.image, out.reward_reference());
  out.current = std::move(generation);
  out.rewards.push_back(score);
  out.history.push_back(RoundRecord{out.round, opts.feedback, edit, score, out.current.image});
  if (score >= cfg.tau_stop) {
    out.status = SessionStatus::AcceptedByThreshold;
  } else if (out.round >= cfg.n_max) {
    out.status = SessionStatus::ExhaustedRounds;
  }
  return out;
}

SessionState accept_session(const SessionState& state) {
  if (state.terminal()) fail(ErrorCode::SessionClosed, "session '" + state.id + "' is closed");
  SessionState out = state;
  out.status = SessionStatus::AcceptedByUser;
  return out;
}

SimulatedUser make_user(const std::string& target_text, const SessionConfig& cfg) {
  Prompt target = tokenize(target_text, cfg.vocabulary());
  Generation g = generate(target, cfg.generator);
  return SimulatedUser{std::move(target), std::move(g)};
}

namespace {

std::string quoted(const std::vector<Token>& tokens, std::size_t from, std::size_t to) {
  std::string out = "'";
  for (std::size_t i = from; i < to; ++i) {
    if (i > from) out += ' ';
    out += tokens[i].surface;
  }
  return out + "'";
}

}  // namespace

std::vector<Proposal> propose_edits(const SimulatedUser& user, const SessionState& state) {
  if (state.terminal()) fail(ErrorCode::SessionClosed, "session '" + state.id + "' is closed");
  const Prompt& current = state.prompt;
  const Prompt& target = user.target;
  const auto& cur = current.tokens();
  const auto& tgt = target.tokens();
  const AlignmentMap align = compute_alignment(current, target);

  std::optional<Proposal> swap;
  std::optional<Proposal> add;
  // Walk the gaps between matched anchors: current [ci, cj) against target [ti, tj).
  std::size_t ci = 0;
  std::size_t ti = 0;
  for (std::size_t k = 0; k <= tgt.size() && !(swap && add); ++k) {
    const bool end = k == tgt.size();
    if (!end && !align.entries[k]) continue;
    const std::size_t cj = end ? cur.size() : *align.entries[k];
    const std::size_t tj = k;
    const std::size_t u = cj - ci;
    const std::size_t v = tj - ti;
    if (!swap && u > 0 && v > 0) {
      swap = Proposal{WordSwap{ci, {tgt[ti]}},
                      "replace " + quoted(cur, ci, ci + 1) + " with " + quoted(tgt, ti, ti + 1)};
    }
    if (!add && v > u) {
      std::vector<Token> phrase(tgt.begin() + static_cast<std::ptrdiff_t>(ti + u),
                                tgt.begin() + static_cast<std::ptrdiff_t>(tj));
      add = Proposal{AddPhrase{cj, phrase}, "add " + quoted(tgt, ti + u, tj)};
    }
    ci = cj + 1;
    ti = tj + 1;
  }

  const Eigen::VectorXd have = state.current.attention.token_mass();
  const Eigen::VectorXd want = user.target_generation.attention.token_mass();
  std::optional<std::size_t> best_i;
  std::size_t best_k = 0;
  double best_gap = -1.0;
  for (std::size_t k = 0; k < align.size(); ++k) {
    if (!align.entries[k]) continue;
    const std::size_t i = *align.entries[k];
    const double gap = std::abs(want(static_cast<Eigen::Index>(k)) - have(static_cast<Eigen::Index>(i)));
    if (gap > best_gap) {
      best_gap = gap;
      best_i = i;
      best_k = k;
    }
  }
  Proposal reweight{Reweight{0, current.weight(0)}, "keep the emphasis"};
  if (best_i) {
    const double h = have(static_cast<Eigen::Index>(*best_i));
    const double w = want(static_cast<Eigen::Index>(best_k));
    const double ratio = h > 1e-12 && w > 0.0 ? w / h : 1.0;
    const double c = std::clamp(current.weight(*best_i) * ratio, -2.0, 2.0);
    reweight = Proposal{Reweight{*best_i, c},
                        std::string(c >= current.weight(*best_i) ? "emphasize " : "tone down ") +
                            quoted(cur, *best_i, *best_i + 1)};
  }

  std::vector<Proposal> out;
  if (swap) out.push_back(std::move(*swap));
  if (add) out.push_back(std::move(*add));
  out.push_back(std::move(reweight));
  return out;
}

StateFeatures state_features(const SessionState& state, const SessionConfig& cfg) {
  return StateFeatures::assemble(prompt_embedding(state.prompt),
                                 image_embedding(state.current.image, cfg.generator.dim),
                                 state.rewards.back(),
                                 static_cast<double>(state.round) / cfg.n_max);
}

double frozen_return(double reward, double gamma, int remaining_rounds) {
  if (remaining_rounds <= 0) return 0.0;
  if (gamma == 1.0) return reward * remaining_rounds;
  return reward * (1.0 - std::pow(gamma, remaining_rounds)) / (1.0 - gamma);
}

SessionOutcome run_session(const SessionTask& task, const RunOptions& opts, const SessionConfig& cfg) {
  return run_session(make_user(task.target, cfg), task, opts, cfg);
}

SessionOutcome run_session(const SimulatedUser& user, const SessionTask& task, const RunOptions& opts,
                           const SessionConfig& cfg) {
  SessionOutcome outcome{new_session(task.initial, task.seed, cfg, user.target, task.id), {}};
  SessionState& state = outcome.state;
  Rng rng(combine_seed(task.seed, 0x9011c7));

  // Bounded by n_max: every step advances the round and step_round closes the
  // session once the round reaches n_max.
  while (!state.terminal()) {
    const auto proposals = propose_edits(user, state);
    const StateFeatures s = state_features(state, cfg);
    const Proposal* chosen = &proposals.front();
    ActionChoice choice{static_cast<int>(kind_of(chosen->edit)), 0.0};
    if (opts.policy) {
      choice = opts.greedy ? greedy_action(*opts.policy, s) : policy_action(*opts.policy, s, rng);
      for (const auto& p : proposals) {
        if (static_cast<int>(kind_of(p.edit)) == choice.action) {
          chosen = &p;
          break;
        }
      }
    }
    state = step_round(state, chosen->edit,
                       StepOptions{opts.use_injection, opts.refine, chosen->feedback}, cfg);

    Transition t;
    t.state = s;
    t.action = choice.action;
    t.old_logprob = choice.logprob;
    t.reward = state.rewards.back();
    t.next_state = state_features(state, cfg);
    t.terminal = state.terminal();
    if (state.status == SessionStatus::AcceptedByThreshold) {
      t.terminal_value = frozen_return(t.reward, opts.gamma, cfg.n_max - state.round);
    }
    if (opts.value) {
      t.delta = td_error(t.reward, opts.gamma, value_of(*opts.value, t.state),
                         bootstrap_value(*opts.value, t));
    }
    outcome.transitions.push_back(std::move(t));
  }
  return outcome;
}

}  // namespace coadapt
