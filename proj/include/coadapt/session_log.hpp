#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coadapt/image.hpp"
#include "coadapt/session.hpp"
#include "json.hpp"

namespace coadapt {

struct Ratings {
  double alignment = 0.0;  // 0-5
  double fidelity = 0.0;   // 0-5
  bool operator==(const Ratings&) const = default;
};

struct LogRound {
  int round = 0;
  std::string feedback;
  nlohmann::json edit;
  double clip_score = 0.0;
  std::string image_path;  // relative to the log's directory
  bool operator==(const LogRound&) const = default;
};

struct SessionLog {
  std::string id;
  std::string initial_prompt;
  std::vector<LogRound> rounds;
  std::string status;
  std::optional<Ratings> ratings;
  // Round images in round order; written by save_log, not part of the JSON.
  std::vector<ToyImage> images;

  /// Compares the serialized fields only.
  bool operator==(const SessionLog& other) const;
};

/// Rounds 1..t of a session; round 0 has no edit and is not logged.
SessionLog make_log(const SessionState& state);

nlohmann::json to_json(const SessionLog& log);
/// Throws ParseError naming the missing or malformed field.
SessionLog session_log_from_json(const nlohmann::json& j);

/// Writes <dir>/<id>.json and <dir>/images/<id>_r<round>.png. Throws
/// CollisionError when a log with the same id already exists in `dir`.
void save_log(const SessionLog& log, const std::filesystem::path& dir);
SessionLog load_log(const std::filesystem::path& path);
/// Every *.json log in `dir`, sorted by file name.
std::vector<SessionLog> load_logs(const std::filesystem::path& dir);

/// Rebuilds each round's (prompt embedding, image embedding) pair by replaying
/// the edits from the initial prompt and reading the round images from `dir`.
struct EmbeddingPairs {
  std::vector<Eigen::VectorXd> prompts;
  std::vector<Eigen::VectorXd> images;
};
EmbeddingPairs collect_pairs(const SessionLog& log, const std::filesystem::path& dir,
                             const SessionConfig& cfg);
EmbeddingPairs collect_pairs(const SessionState& state, const SessionConfig& cfg);

/// Empirical Gaussian MI over the pooled pairs; needs >= dim + 2 pairs.
double mi_report(const EmbeddingPairs& pairs);
double mi_report(const std::vector<SessionLog>& logs, const std::filesystem::path& dir,
                 const SessionConfig& cfg);

}  // namespace coadapt
