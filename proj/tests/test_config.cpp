#include <filesystem>
#include <fstream>

#include "coadapt/config.hpp"
#include "coadapt/error.hpp"
#include "doctest.h"

using namespace coadapt;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::NotFound;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults round trip") {
    const AppConfig cfg;
    CHECK(to_json(config_from_json(to_json(cfg))) == to_json(cfg));
    CHECK(to_json(config_from_json(nlohmann::json::object())) == to_json(cfg));
  }

  TEST_CASE("partial sections override only their keys") {
    const AppConfig cfg = config_from_json({{"session", {{"tau_stop", 0.5}}}, {"train", {{"episodes", 3}}}});
    CHECK(cfg.session.tau_stop == 0.5);
    CHECK(cfg.session.n_max == SessionConfig{}.n_max);
    CHECK(cfg.train.episodes == 3);
    CHECK(cfg.train.lr == TrainConfig{}.lr);
  }

  TEST_CASE("unknown keys are rejected") {
    CHECK(code_of([] { config_from_json({{"sesion", nlohmann::json::object()}}); }) == ErrorCode::ParseError);
    CHECK(code_of([] { config_from_json({{"session", {{"tau_stp", 0.5}}}}); }) == ErrorCode::ParseError);
    CHECK(code_of([] { config_from_json({{"train", 3}}); }) == ErrorCode::ParseError);
  }

  TEST_CASE("files") {
    const fs::path path = fs::temp_directory_path() / "coadapt_config_test.json";
    std::ofstream(path) << R"({"train": {"episodes": 7}})";
    CHECK(load_config(path).train.episodes == 7);
    std::ofstream(path) << "{ not json";
    CHECK(code_of([&] { load_config(path); }) == ErrorCode::ParseError);
    fs::remove(path);
    CHECK(code_of([&] { load_config(path); }) == ErrorCode::NotFound);
  }

  TEST_CASE("the shipped desk config parses") {
    const AppConfig cfg = load_config(COADAPT_SOURCE_DIR "/configs/desk.json");
    CHECK(cfg.train.episodes > 0);
  }
}
