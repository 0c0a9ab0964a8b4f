#include <cmath>
#include <filesystem>

#include "coadapt/error.hpp"
#include "coadapt/generator.hpp"
#include "coadapt/reward.hpp"
#include "doctest.h"

using namespace coadapt;
namespace fs = std::filesystem;

namespace {

const Vocabulary& vocab() {
  static const Vocabulary v(7);
  return v;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("coadapt_gen_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("generator") {
  TEST_CASE("generation is deterministic") {
    const GeneratorConfig cfg;
    const Prompt p = tokenize("a tranquil garden", vocab());
    const Generation a = generate(p, cfg);
    const Generation b = generate(p, cfg);
    CHECK(a.image == b.image);
    CHECK(a.attention == b.attention);
    CHECK(a.image.height == 32);
    CHECK(a.image.width == 32);
    CHECK(a.image.channels == 3);
    CHECK(a.attention.steps() == cfg.steps);
  }

  TEST_CASE("unedited attention rows are stochastic and pixels in range") {
    const GeneratorConfig cfg;
    const Generation g = generate(tokenize("a misty forest with a tiny owl", vocab()), cfg);
    for (const auto& m : g.attention.maps) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) CHECK(std::abs(m.row(r).sum() - 1.0) < 1e-9);
      CHECK(m.minCoeff() >= 0.0);
      CHECK(m.maxCoeff() <= 1.0);
    }
    for (double v : g.image.pixels) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("maps vary with the generation step") {
    const Generation g = generate(tokenize("a tranquil garden", vocab()), GeneratorConfig{});
    CHECK_FALSE(g.attention.maps[0] == g.attention.maps[1]);
  }

  TEST_CASE("unit reweight leaves the image unchanged") {
    const GeneratorConfig cfg;
    const Prompt p = tokenize("a tranquil garden", vocab());
    CHECK(generate(apply_edit(p, Reweight{1, 1.0}), cfg).image == generate(p, cfg).image);
  }

  TEST_CASE("injection with the unchanged prompt reproduces the generation") {
    const GeneratorConfig cfg;
    const Prompt p = tokenize("a serene blue lake", vocab());
    const Generation base = generate(p, cfg);
    EditController ctrl;
    ctrl.mode = EditKind::WordSwap;
    ctrl.tau_inj = cfg.steps;
    const auto out = regenerate_with_controller(p, base.attention, ctrl, cfg);
    CHECK(out.generation.image == base.image);
    CHECK(out.generation.attention == base.attention);
  }

  TEST_CASE("word swap with no injected steps equals plain generation") {
    const GeneratorConfig cfg;
    const Prompt p = tokenize("a serene blue lake", vocab());
    const Prompt q = apply_edit(p, WordSwap{1, vocab().tokens("vibrant")});
    EditController ctrl;
    ctrl.mode = EditKind::WordSwap;
    ctrl.tau_inj = 0;
    const auto out = regenerate_with_controller(q, generate(p, cfg).attention, ctrl, cfg);
    const Generation fresh = generate(q, cfg);
    CHECK(out.generation.image == fresh.image);
    CHECK(out.generation.attention == fresh.attention);
  }

  TEST_CASE("word swap injects the source maps before tau") {
    const GeneratorConfig cfg;
    const Prompt p = tokenize("a serene blue lake", vocab());
    const Prompt q = apply_edit(p, WordSwap{1, vocab().tokens("vibrant")});
    const Generation base = generate(p, cfg);
    const Generation fresh = generate(q, cfg);
    EditController ctrl;
    ctrl.mode = EditKind::WordSwap;
    ctrl.tau_inj = 4;
    const auto out = regenerate_with_controller(q, base.attention, ctrl, cfg);
    for (int t = 0; t < cfg.steps; ++t) {
      CHECK(out.generation.attention.maps[t] == (t < 4 ? base.attention.maps[t] : fresh.attention.maps[t]));
    }
  }

  TEST_CASE("phrase addition routes matched columns from the source") {
    const GeneratorConfig cfg;
    const Prompt p = tokenize("a tranquil garden", vocab());
    const Prompt q = tokenize("a tranquil garden with blooming flowers", vocab());
    const Generation base = generate(p, cfg);
    const Generation fresh = generate(q, cfg);
    EditController ctrl;
    ctrl.mode = EditKind::AddPhrase;
    ctrl.alignment = compute_alignment(p, q);
    const auto out = regenerate_with_controller(q, base.attention, ctrl, cfg);
    for (int t = 0; t < cfg.steps; ++t) {
      const auto& m = out.generation.attention.maps[t];
      for (int j = 0; j < 3; ++j) CHECK(m.col(j) == base.attention.maps[t].col(j));
      for (int j = 3; j < 6; ++j) CHECK(m.col(j) == fresh.attention.maps[t].col(j));
    }
  }

  TEST_CASE("reweight scales the column exactly") {
    const GeneratorConfig cfg;
    const Prompt p = tokenize("a tranquil garden", vocab());
    const Generation base = generate(p, cfg);
    EditController ctrl;
    ctrl.mode = EditKind::Reweight;
    ctrl.j_star = 2;
    ctrl.scale = -1.25;
    const auto out = regenerate_with_controller(p, base.attention, ctrl, cfg);
    for (int t = 0; t < cfg.steps; ++t) {
      const auto& m = out.generation.attention.maps[t];
      CHECK(m.col(2) == (base.attention.maps[t].col(2) * -1.25).eval());
      CHECK(m.col(0) == base.attention.maps[t].col(0));
    }
    ctrl.scale = 1.0;
    CHECK(regenerate_with_controller(p, base.attention, ctrl, cfg).generation.image == base.image);
  }

  TEST_CASE("controller mismatches are reported") {
    const GeneratorConfig cfg;
    const Prompt p = tokenize("a tranquil garden", vocab());
    const Generation base = generate(p, cfg);
    auto code_of = [&](const Prompt& q, const EditController& c, const AttentionStack& src) {
      try {
        regenerate_with_controller(q, src, c, cfg);
      } catch (const Error& e) {
        return e.code();
      }
      return ErrorCode::NotFound;
    };
    EditController swap;
    swap.mode = EditKind::WordSwap;
    swap.tau_inj = 3;
    CHECK(code_of(tokenize("a garden", vocab()), swap, base.attention) == ErrorCode::ControllerMismatch);
    AttentionStack short_stack{std::vector<AttentionMap>(base.attention.maps.begin(), base.attention.maps.begin() + 2)};
    CHECK(code_of(p, swap, short_stack) == ErrorCode::ControllerMismatch);
    EditController add;
    add.mode = EditKind::AddPhrase;
    add.alignment = AlignmentMap::identity(2);
    CHECK(code_of(p, add, base.attention) == ErrorCode::ControllerMismatch);
    EditController rw;
    rw.mode = EditKind::Reweight;
    rw.j_star = 5;
    CHECK(code_of(p, rw, base.attention) == ErrorCode::ControllerMismatch);
  }

  TEST_CASE("image embedding is unit norm and continuous") {
    const Generation g = generate(tokenize("a tranquil garden", vocab()), GeneratorConfig{});
    const auto e = image_embedding(g.image);
    CHECK(std::abs(e.norm() - 1.0) < 1e-9);
    CHECK(std::abs(e.dot(image_embedding(g.image)) - 1.0) < 1e-12);
    ToyImage nudged = g.image;
    nudged.at(5, 7, 1) += 1e-6;
    CHECK((image_embedding(nudged) - e).norm() <= 1e-4);
  }

  TEST_CASE("black image has no embedding") {
    try {
      image_embedding(ToyImage(32, 32, 3, 0.0));
      FAIL("expected DegenerateEmbedding");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateEmbedding);
    }
  }

  TEST_CASE("png quantization round trip") {
    const fs::path dir = scratch("png");
    const ToyImage black(4, 5, 3, 0.0);
    const ToyImage white(4, 5, 3, 1.0);
    render_png(black, dir / "black.png");
    render_png(white, dir / "white.png");
    for (double v : read_png(dir / "black.png").pixels) CHECK(v == 0.0);
    for (double v : read_png(dir / "white.png").pixels) CHECK(v == 1.0);

    const Generation g = generate(tokenize("a tranquil garden", vocab()), GeneratorConfig{});
    render_png(g.image, dir / "g.png");
    const ToyImage back = read_png(dir / "g.png");
    REQUIRE(back.same_shape(g.image));
    for (std::size_t i = 0; i < back.pixels.size(); ++i) {
      CHECK(std::lround(back.pixels[i] * 255.0) == std::lround(255.0 * g.image.pixels[i]));
    }
    CHECK(encode_png(g.image) == encode_png(g.image));
    CHECK_THROWS_AS(render_png(g.image, dir / "missing" / "deeper" / "x.png"), Error);
  }

  TEST_CASE("data uri is a png") {
    const std::string uri = png_data_uri(ToyImage(2, 2, 3, 0.5));
    CHECK(uri.rfind("data:image/png;base64,iVBORw0KGgo", 0) == 0);
    CHECK(base64_encode({'M', 'a', 'n'}) == "TWFu");
    CHECK(base64_encode({'M', 'a'}) == "TWE=");
    CHECK(base64_encode({'M'}) == "TQ==");
  }

  TEST_CASE("heatmaps have one entry per token") {
    const GeneratorConfig cfg;
    const Generation g = generate(tokenize("a tranquil garden", vocab()), cfg);
    const auto h = attention_heatmaps(g.attention, cfg);
    REQUIRE(h.size() == 3);
    CHECK(h[0]["data"].size() == 32u * 32u);
    const auto dump = attention_to_json(g.attention);
    CHECK(dump["maps"].size() == static_cast<std::size_t>(cfg.steps));
    CHECK(dump["maps"][0].size() == 32u * 32u * 3u);
  }

  TEST_CASE("config validation") {
    GeneratorConfig cfg;
    cfg.temperature = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = GeneratorConfig{};
    cfg.steps = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
  }
}
