#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "coadapt/rl.hpp"
#include "coadapt/session.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace coadapt {

struct ServiceOptions {
  SessionConfig session;
  std::optional<PolicyParams> policy;  // zero weights (uniform) when unset
  std::chrono::seconds idle_timeout{30 * 60};
  // Terminal sessions are saved here when set.
  std::optional<std::filesystem::path> log_dir;
  // Edits are applied literally unless the request asks for refinement.
  bool refine_default = false;
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

/// In-memory session table behind the HTTP API. Requests on different
/// sessions run in parallel; requests on one session serialize on its mutex.
class SessionService {
 public:
  using Clock = std::chrono::steady_clock;

  explicit SessionService(ServiceOptions options);

  Response create_session(const std::string& body);
  Response get_session(const std::string& id);
  Response edit(const std::string& id, const std::string& body);
  Response suggestions(const std::string& id);
  Response accept(const std::string& id, const std::string& body);

  /// Drops sessions idle for longer than the timeout; returns how many.
  std::size_t evict_idle(Clock::time_point now = Clock::now());
  std::size_t size() const;

  const ServiceOptions& options() const { return options_; }

 private:
  struct Entry {
    std::mutex mutex;
    SessionState state;
    std::optional<SimulatedUser> user;
    Clock::time_point last_activity;
    bool persisted = false;

    explicit Entry(SessionState s) : state(std::move(s)) {}
  };

  std::shared_ptr<Entry> find(const std::string& id);
  nlohmann::json payload(const SessionState& state) const;
  void persist(Entry& entry, const std::optional<nlohmann::json>& ratings);
  std::string next_id();

  ServiceOptions options_;
  PolicyParams policy_;
  mutable std::shared_mutex table_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> table_;
  std::mutex id_mutex_;
  std::uint64_t counter_ = 0;
  std::string id_prefix_;
};

/// Mounts the /api routes on `server`.
void register_routes(httplib::Server& server, SessionService& service);

/// Blocking listen; returns false when the socket cannot be bound.
bool serve(SessionService& service, const std::string& host, int port);

/// Port from COADAPT_PORT when set and valid, else `flag_port`.
int resolve_port(int flag_port);

}  // namespace coadapt
