#include "coadapt/config.hpp"

#include <fstream>
#include <sstream>

#include "coadapt/error.hpp"

namespace coadapt {

namespace {

void reject_unknown(const nlohmann::json& section, const nlohmann::json& known, const std::string& name) {
  if (!section.is_object()) fail(ErrorCode::ParseError, "config section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    if (!known.contains(key)) fail(ErrorCode::ParseError, "unknown config key '" + name + "." + key + "'");
  }
}

}  // namespace

AppConfig config_from_json(const nlohmann::json& j) {
  AppConfig cfg;
  reject_unknown(j, to_json(cfg), "");
  if (j.contains("session")) {
    reject_unknown(j.at("session"), to_json(cfg.session), "session");
    cfg.session = session_config_from_json(j.at("session"));
  }
  if (j.contains("train")) {
    reject_unknown(j.at("train"), to_json(cfg.train), "train");
    cfg.train = train_config_from_json(j.at("train"));
  }
  return cfg;
}

nlohmann::json to_json(const AppConfig& cfg) {
  return {{"session", to_json(cfg.session)}, {"train", to_json(cfg.train)}};
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return config_from_json(nlohmann::json::parse(buffer.str()));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

}  // namespace coadapt
