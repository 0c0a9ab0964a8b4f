#include "coadapt/service.hpp"

#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <sstream>

#include "coadapt/error.hpp"
#include "coadapt/generator.hpp"
#include "coadapt/session_log.hpp"
#include "httplib.h"

namespace coadapt {

namespace {

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidPrompt:
    case ErrorCode::InvalidEdit:
    case ErrorCode::ParseError:
    case ErrorCode::OutOfRange:
    case ErrorCode::DegenerateEmbedding:
    case ErrorCode::ControllerMismatch:
    case ErrorCode::DimError:
      return 400;
    case ErrorCode::NotFound: return 404;
    case ErrorCode::SessionClosed: return 409;
    default: return 500;
  }
}

Response error_response(int status, const std::string& code, const std::string& message) {
  return {status, {{"error", code}, {"message", message}}};
}

nlohmann::json parse_body(const std::string& body) {
  if (body.empty()) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(body);
    if (!j.is_object()) fail(ErrorCode::ParseError, "request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::ParseError, std::string("malformed JSON: ") + e.what());
  }
}

template <typename Fn>
Response guarded(Fn fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return error_response(status_for(e.code()), to_string(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, "ParseError", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "Internal", e.what());
  }
}

}  // namespace

SessionService::SessionService(ServiceOptions options) : options_(std::move(options)) {
  options_.session.validate();
  const int features = StateFeatures::length(options_.session.generator.dim);
  policy_ = options_.policy ? *options_.policy : PolicyParams::zeros(features);
  if (policy_.weights.cols() != features) fail(ErrorCode::DimError, "policy does not match the feature length");
  const auto stamp = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
  std::ostringstream prefix;
  prefix << 's' << std::hex << stamp;
  id_prefix_ = prefix.str();
}

std::string SessionService::next_id() {
  std::lock_guard lock(id_mutex_);
  return id_prefix_ + "-" + std::to_string(++counter_);
}

std::size_t SessionService::size() const {
  std::shared_lock lock(table_mutex_);
  return table_.size();
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) {
  std::shared_lock lock(table_mutex_);
  const auto it = table_.find(id);
  if (it == table_.end()) fail(ErrorCode::NotFound, "no session '" + id + "'");
  return it->second;
}

std::size_t SessionService::evict_idle(Clock::time_point now) {
  std::unique_lock lock(table_mutex_);
  std::size_t dropped = 0;
  for (auto it = table_.begin(); it != table_.end();) {
    std::unique_lock entry_lock(it->second->mutex, std::try_to_lock);
    if (entry_lock.owns_lock() && now - it->second->last_activity > options_.idle_timeout) {
      entry_lock.unlock();
      it = table_.erase(it);
      ++dropped;
    } else {
      ++it;
    }
  }
  return dropped;
}

nlohmann::json SessionService::payload(const SessionState& state) const {
  const auto& g = options_.session.generator;
  const auto& img = state.current.image;
  return {{"id", state.id},
          {"round", state.round},
          {"status", to_string(state.status)},
          {"prompt", state.prompt.text()},
          {"tokens", to_json(state.prompt)},
          {"clip_score", state.rewards.back()},
          {"rewards", state.rewards},
          {"image", {{"h", img.height}, {"w", img.width}, {"c", img.channels}, {"data", img.pixels}}},
          {"image_png", png_data_uri(img)},
          {"attention", attention_heatmaps(state.current.attention, g)}};
}

void SessionService::persist(Entry& entry, const std::optional<nlohmann::json>& ratings) {
  if (!options_.log_dir || entry.persisted || !entry.state.terminal()) return;
  SessionLog log = make_log(entry.state);
  if (ratings) {
    log.ratings = Ratings{ratings->at("alignment").get<double>(), ratings->at("fidelity").get<double>()};
  }
  // The session already changed state; a failed save is reported, not returned.
  try {
    save_log(log, *options_.log_dir);
    entry.persisted = true;
  } catch (const Error& e) {
    std::fprintf(stderr, "could not persist session %s: %s\n", log.id.c_str(), e.what());
  }
}

Response SessionService::create_session(const std::string& body) {
  evict_idle();
  return guarded([&]() -> Response {
    const auto j = parse_body(body);
    if (!j.contains("prompt") || !j.at("prompt").is_string()) {
      fail(ErrorCode::InvalidPrompt, "field 'prompt' must be a string");
    }
    const std::uint64_t seed = j.value("seed", std::uint64_t{0});
    std::optional<SimulatedUser> user;
    std::optional<Prompt> intent;
    if (j.contains("target") && !j.at("target").is_null()) {
      user = make_user(j.at("target").get<std::string>(), options_.session);
      intent = user->target;
    }
    auto entry = std::make_shared<Entry>(
        new_session(j.at("prompt").get<std::string>(), seed, options_.session, intent, next_id()));
    entry->user = std::move(user);
    entry->last_activity = Clock::now();
    nlohmann::json out = payload(entry->state);
    {
      std::unique_lock lock(table_mutex_);
      table_.emplace(entry->state.id, entry);
    }
    return {201, std::move(out)};
  });
}

Response SessionService::get_session(const std::string& id) {
  return guarded([&]() -> Response {
    auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    entry->last_activity = Clock::now();
    return {200, payload(entry->state)};
  });
}

Response SessionService::edit(const std::string& id, const std::string& body) {
  return guarded([&]() -> Response {
    auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    entry->last_activity = Clock::now();
    if (entry->state.terminal()) fail(ErrorCode::SessionClosed, "session '" + id + "' is closed");
    const auto j = parse_body(body);
    if (!j.contains("edit")) fail(ErrorCode::InvalidEdit, "field 'edit' is required");
    const EditOp op = edit_from_json(j.at("edit"), options_.session.vocabulary());
    StepOptions opts;
    opts.use_injection = j.value("use_injection", true);
    opts.refine = j.value("refine", options_.refine_default);
    opts.feedback = j.value("feedback", describe(op));
    entry->state = step_round(entry->state, op, opts, options_.session);
    persist(*entry, std::nullopt);
    return {200, payload(entry->state)};
  });
}

Response SessionService::suggestions(const std::string& id) {
  return guarded([&]() -> Response {
    auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    entry->last_activity = Clock::now();
    const SessionState& state = entry->state;
    if (state.terminal()) fail(ErrorCode::SessionClosed, "session '" + id + "' is closed");
    // Without a configured target the current prompt stands in for it, which
    // leaves only re-weight candidates.
    const SimulatedUser user = entry->user ? *entry->user
                                           : SimulatedUser{Prompt(state.prompt.tokens()), state.current};
    const auto proposals = propose_edits(user, state);
    const Eigen::VectorXd probs = action_probabilities(policy_, state_features(state, options_.session));
    auto list = nlohmann::json::array();
    for (const auto& p : proposals) {
      const auto kind = kind_of(p.edit);
      list.push_back({{"strategy", to_string(kind)},
                      {"edit", to_json(p.edit)},
                      {"feedback", p.feedback},
                      {"probability", probs(static_cast<int>(kind))}});
    }
    nlohmann::json by_strategy = nlohmann::json::object();
    for (int k = 0; k < kNumActions; ++k) by_strategy[to_string(static_cast<EditKind>(k))] = probs(k);
    return {200, {{"id", id}, {"round", state.round}, {"probabilities", by_strategy}, {"suggestions", list}}};
  });
}

Response SessionService::accept(const std::string& id, const std::string& body) {
  return guarded([&]() -> Response {
    auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    entry->last_activity = Clock::now();
    const auto j = parse_body(body);
    std::optional<nlohmann::json> ratings;
    if (j.contains("ratings") && !j.at("ratings").is_null()) {
      ratings = j.at("ratings");
      for (const char* key : {"alignment", "fidelity"}) {
        if (!ratings->contains(key) || !ratings->at(key).is_number()) {
          fail(ErrorCode::ParseError, std::string("field 'ratings.") + key + "' must be a number");
        }
        const double v = ratings->at(key).get<double>();
        if (v < 0.0 || v > 5.0) fail(ErrorCode::OutOfRange, "ratings must lie in [0, 5]");
      }
    }
    entry->state = accept_session(entry->state);
    persist(*entry, ratings);
    return {200, payload(entry->state)};
  });
}

namespace {

void reply(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

void register_routes(httplib::Server& server, SessionService& service) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Post("/api/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.create_session(req.body));
  });
  server.Get(R"(/api/sessions/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.get_session(req.matches[1]));
  });
  server.Post(R"(/api/sessions/([^/]+)/edits)", [&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.edit(req.matches[1], req.body));
  });
  server.Get(R"(/api/sessions/([^/]+)/suggestions)",
             [&service](const httplib::Request& req, httplib::Response& res) {
               reply(res, service.suggestions(req.matches[1]));
             });
  server.Post(R"(/api/sessions/([^/]+)/accept)", [&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.accept(req.matches[1], req.body));
  });
}

bool serve(SessionService& service, const std::string& host, int port) {
  httplib::Server server;
  register_routes(server, service);
  std::fprintf(stderr, "listening on %s:%d\n", host.c_str(), port);
  return server.listen(host, port);
}

int resolve_port(int flag_port) {
  if (const char* env = std::getenv("COADAPT_PORT")) {
    char* end = nullptr;
    const long port = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && port > 0 && port < 65536) return static_cast<int>(port);
  }
  return flag_port;
}

}  // namespace coadapt
