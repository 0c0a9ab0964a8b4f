#include "coadapt/session_log.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "coadapt/error.hpp"
#include "coadapt/reward.hpp"

namespace fs = std::filesystem;

namespace coadapt {

bool SessionLog::operator==(const SessionLog& other) const {
  return id == other.id && initial_prompt == other.initial_prompt && rounds == other.rounds &&
         status == other.status && ratings == other.ratings;
}

SessionLog make_log(const SessionState& state) {
  SessionLog log;
  log.id = state.id;
  log.initial_prompt = state.initial_prompt;
  log.status = to_string(state.status);
  for (const auto& r : state.history) {
    LogRound round;
    round.round = r.round;
    round.feedback = r.feedback;
    round.edit = to_json(r.edit);
    round.clip_score = r.clip_score;
    round.image_path = "images/" + state.id + "_r" + std::to_string(r.round) + ".png";
    log.rounds.push_back(std::move(round));
    log.images.push_back(r.image);
  }
  return log;
}

nlohmann::json to_json(const SessionLog& log) {
  auto rounds = nlohmann::json::array();
  for (const auto& r : log.rounds) {
    rounds.push_back({{"round", r.round},
                      {"feedback", r.feedback},
                      {"edit", r.edit},
                      {"clip_score", r.clip_score},
                      {"image_path", r.image_path}});
  }
  nlohmann::json ratings = nullptr;
  if (log.ratings) ratings = {{"alignment", log.ratings->alignment}, {"fidelity", log.ratings->fidelity}};
  return {{"id", log.id},
          {"initial_prompt", log.initial_prompt},
          {"rounds", std::move(rounds)},
          {"status", log.status},
          {"ratings", std::move(ratings)}};
}

namespace {

const nlohmann::json& require_field(const nlohmann::json& j, const std::string& name,
                                    const std::string& where) {
  if (!j.is_object() || !j.contains(name)) {
    fail(ErrorCode::ParseError, "missing field '" + where + name + "'");
  }
  return j.at(name);
}

template <typename T>
T typed_field(const nlohmann::json& j, const std::string& name, const std::string& where) {
  const auto& v = require_field(j, name, where);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::ParseError, "field '" + where + name + "' has the wrong type");
  }
}

}  // namespace

SessionLog session_log_from_json(const nlohmann::json& j) {
  SessionLog log;
  log.id = typed_field<std::string>(j, "id", "");
  log.initial_prompt = typed_field<std::string>(j, "initial_prompt", "");
  log.status = typed_field<std::string>(j, "status", "");
  session_status_from_string(log.status);
  const auto& rounds = require_field(j, "rounds", "");
  if (!rounds.is_array()) fail(ErrorCode::ParseError, "field 'rounds' must be an array");
  int previous = 0;
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    const std::string where = "rounds[" + std::to_string(i) + "].";
    const auto& r = rounds[i];
    LogRound round;
    round.round = typed_field<int>(r, "round", where);
    round.feedback = typed_field<std::string>(r, "feedback", where);
    round.edit = require_field(r, "edit", where);
    typed_field<std::string>(round.edit, "type", where + "edit.");
    round.clip_score = typed_field<double>(r, "clip_score", where);
    round.image_path = typed_field<std::string>(r, "image_path", where);
    if (round.round <= previous) fail(ErrorCode::ParseError, "field '" + where + "round' is out of order");
    if (round.clip_score < -1.0 || round.clip_score > 1.0) {
      fail(ErrorCode::ParseError, "field '" + where + "clip_score' is outside [-1, 1]");
    }
    previous = round.round;
    log.rounds.push_back(std::move(round));
  }
  const auto& ratings = require_field(j, "ratings", "");
  if (!ratings.is_null()) {
    Ratings r{typed_field<double>(ratings, "alignment", "ratings."),
              typed_field<double>(ratings, "fidelity", "ratings.")};
    for (double v : {r.alignment, r.fidelity}) {
      if (v < 0.0 || v > 5.0) fail(ErrorCode::ParseError, "ratings must lie in [0, 5]");
    }
    log.ratings = r;
  }
  return log;
}

void save_log(const SessionLog& log, const fs::path& dir) {
  if (log.id.empty() || log.id.find_first_of("/\\") != std::string::npos || log.id.front() == '.') {
    fail(ErrorCode::WriteError, "log id '" + log.id + "' is not a valid file name");
  }
  const fs::path file = dir / (log.id + ".json");
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) fail(ErrorCode::WriteError, "cannot create " + (dir / "images").string() + ": " + ec.message());
  if (fs::exists(file)) fail(ErrorCode::CollisionError, "log id '" + log.id + "' already exists in " + dir.string());
  if (!log.images.empty() && log.images.size() != log.rounds.size()) {
    fail(ErrorCode::WriteError, "log has " + std::to_string(log.images.size()) + " images for " +
                                    std::to_string(log.rounds.size()) + " rounds");
  }
  for (std::size_t i = 0; i < log.images.size(); ++i) render_png(log.images[i], dir / log.rounds[i].image_path);
  std::ofstream out(file, std::ios::binary);
  if (!out) fail(ErrorCode::WriteError, "cannot open " + file.string());
  out << to_json(log).dump(2) << '\n';
  if (!out) fail(ErrorCode::WriteError, "failed writing " + file.string());
}

SessionLog load_log(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::parse_error& e) {
    // The parser's message carries the line and column.
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  try {
    return session_log_from_json(j);
  } catch (const Error& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

std::vector<SessionLog> load_logs(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::NotFound, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SessionLog> logs;
  for (const auto& f : files) logs.push_back(load_log(f));
  return logs;
}

EmbeddingPairs collect_pairs(const SessionLog& log, const fs::path& dir, const SessionConfig& cfg) {
  const Vocabulary vocab = cfg.vocabulary();
  Prompt prompt = tokenize(log.initial_prompt, vocab);
  EmbeddingPairs pairs;
  for (const auto& r : log.rounds) {
    prompt = apply_edit(prompt, edit_from_json(r.edit, vocab));
    pairs.prompts.push_back(prompt_embedding(prompt));
    pairs.images.push_back(image_embedding(read_png(dir / r.image_path), cfg.generator.dim));
  }
  return pairs;
}

EmbeddingPairs collect_pairs(const SessionState& state, const SessionConfig& cfg) {
  EmbeddingPairs pairs;
  const Vocabulary vocab = cfg.vocabulary();
  Prompt prompt = tokenize(state.initial_prompt, vocab);
  for (const auto& r : state.history) {
    prompt = apply_edit(prompt, r.edit);
    pairs.prompts.push_back(prompt_embedding(prompt));
    pairs.images.push_back(image_embedding(r.image, cfg.generator.dim));
  }
  return pairs;
}

double mi_report(const EmbeddingPairs& pairs) {
  if (pairs.prompts.empty()) fail(ErrorCode::InsufficientSamples, "no rounds to pair");
  const auto dim = static_cast<std::size_t>(std::max(pairs.prompts.front().size(), pairs.images.front().size()));
  if (pairs.prompts.size() < dim + 2) {
    fail(ErrorCode::InsufficientSamples, "MI needs at least " + std::to_string(dim + 2) + " rounds, got " +
                                             std::to_string(pairs.prompts.size()));
  }
  return empirical_mi(pairs.prompts, pairs.images);
}

double mi_report(const std::vector<SessionLog>& logs, const fs::path& dir, const SessionConfig& cfg) {
  EmbeddingPairs all;
  for (const auto& log : logs) {
    auto p = collect_pairs(log, dir, cfg);
    all.prompts.insert(all.prompts.end(), p.prompts.begin(), p.prompts.end());
    all.images.insert(all.images.end(), p.images.begin(), p.images.end());
  }
  return mi_report(all);
}

}  // namespace coadapt
