#pragma once

#include <filesystem>

#include "coadapt/rl.hpp"
#include "coadapt/session.hpp"
#include "json.hpp"

namespace coadapt {

/// Config file layout: {"session": {...}, "train": {...}}; both sections are
/// optional and every key inside them is optional. Unknown keys are rejected.
struct AppConfig {
  SessionConfig session;
  TrainConfig train;
};

AppConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AppConfig& cfg);
AppConfig load_config(const std::filesystem::path& path);

}  // namespace coadapt
