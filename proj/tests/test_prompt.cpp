#include <cmath>

#include "coadapt/error.hpp"
#include "coadapt/prompt.hpp"
#include "coadapt/rng.hpp"
#include "doctest.h"

using namespace coadapt;

namespace {

const Vocabulary& vocab() {
  static const Vocabulary v(7);
  return v;
}

Prompt random_prompt(Rng& rng, std::size_t n) {
  const auto& words = Vocabulary::builtin_words();
  std::string text;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) text += ' ';
    text += words[rng.index(words.size())];
  }
  return tokenize(text, vocab());
}

bool order_preserving(const AlignmentMap& a, std::size_t old_size) {
  std::optional<std::size_t> last;
  for (const auto& e : a.entries) {
    if (!e) continue;
    if (*e >= old_size) return false;
    if (last && *e <= *last) return false;
    last = e;
  }
  return true;
}

}  // namespace

TEST_SUITE("prompt") {
  TEST_CASE("tokenize splits on whitespace with unit weights") {
    const Prompt p = tokenize("a tranquil garden", vocab());
    REQUIRE(p.size() == 3);
    CHECK(p.weights() == std::vector<double>{1.0, 1.0, 1.0});
    CHECK(p.text() == "a tranquil garden");
    CHECK(tokenize("x", vocab()).size() == 1);
    CHECK(tokenize("  a   tranquil\tgarden ", vocab()).size() == 3);
  }

  TEST_CASE("tokenize is deterministic and ids follow the surface") {
    const Prompt a = tokenize("a tranquil garden zebra", vocab());
    const Prompt b = tokenize("a tranquil garden zebra", Vocabulary(7));
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.token(i).id == b.token(i).id);
      CHECK(a.token(i).embedding == b.token(i).embedding);
    }
    const Token t1 = vocab().token("garden");
    const Token t2 = vocab().token("garden");
    CHECK(t1.id == t2.id);
    CHECK(t1.embedding == t2.embedding);
  }

  TEST_CASE("token embeddings have unit norm") {
    for (const auto& w : Vocabulary::builtin_words()) {
      CHECK(std::abs(vocab().token(w).embedding.norm() - 1.0) < 1e-9);
    }
    CHECK(std::abs(vocab().token("unlisted").embedding.norm() - 1.0) < 1e-9);
  }

  TEST_CASE("empty text is rejected") {
    CHECK_THROWS_AS(tokenize("", vocab()), Error);
    try {
      tokenize("   ", vocab());
      FAIL("expected InvalidPrompt");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidPrompt);
    }
  }

  TEST_CASE("word swap replaces a span") {
    const Prompt p = tokenize("a serene blue lake", vocab());
    const Prompt q = apply_edit(p, WordSwap{1, vocab().tokens("vibrant green forest")});
    CHECK(q.text() == "a vibrant green forest");
    CHECK(p.text() == "a serene blue lake");
  }

  TEST_CASE("add phrase inserts at the position") {
    const Prompt p = tokenize("a tranquil garden", vocab());
    const Prompt q = apply_edit(p, AddPhrase{3, vocab().tokens("with blooming flowers")});
    CHECK(q.size() == 6);
    CHECK(q.text() == "a tranquil garden with blooming flowers");
    const Prompt front = apply_edit(p, AddPhrase{0, vocab().tokens("misty")});
    CHECK(front.text() == "misty a tranquil garden");
  }

  TEST_CASE("reweight sets the weight and c = 1 is the identity") {
    const Prompt p = tokenize("a tranquil garden", vocab());
    CHECK(apply_edit(p, Reweight{2, 1.0}) == p);
    const Prompt q = apply_edit(p, Reweight{2, -1.5});
    CHECK(q.weight(2) == -1.5);
    CHECK(prompt_embedding(apply_edit(p, Reweight{1, 1.0})) == prompt_embedding(p));
  }

  TEST_CASE("invalid edits are rejected") {
    const Prompt p = tokenize("a tranquil garden", vocab());
    auto code_of = [&](const EditOp& e) {
      try {
        apply_edit(p, e);
      } catch (const Error& err) {
        return err.code();
      }
      return ErrorCode::NotFound;
    };
    CHECK(code_of(WordSwap{3, vocab().tokens("lake")}) == ErrorCode::InvalidEdit);
    CHECK(code_of(WordSwap{2, vocab().tokens("blue lake")}) == ErrorCode::InvalidEdit);
    CHECK(code_of(AddPhrase{4, vocab().tokens("lake")}) == ErrorCode::InvalidEdit);
    CHECK(code_of(AddPhrase{1, {}}) == ErrorCode::InvalidEdit);
    CHECK(code_of(Reweight{3, 1.0}) == ErrorCode::InvalidEdit);
    CHECK(code_of(Reweight{0, 2.5}) == ErrorCode::InvalidEdit);
    CHECK(code_of(Reweight{0, std::nan("")}) == ErrorCode::InvalidEdit);
  }

  TEST_CASE("alignment of the insertion example") {
    const Prompt old_p = tokenize("a tranquil garden", vocab());
    const Prompt new_p = tokenize("a tranquil garden with blooming flowers", vocab());
    const AlignmentMap a = compute_alignment(old_p, new_p);
    REQUIRE(a.size() == 6);
    CHECK(a.entries[0] == std::optional<std::size_t>(0));
    CHECK(a.entries[1] == std::optional<std::size_t>(1));
    CHECK(a.entries[2] == std::optional<std::size_t>(2));
    for (std::size_t j = 3; j < 6; ++j) CHECK_FALSE(a.entries[j].has_value());
  }

  TEST_CASE("alignment of the swap example matches only the article") {
    const AlignmentMap a = compute_alignment(tokenize("a serene blue lake", vocab()),
                                             tokenize("a vibrant green forest", vocab()));
    CHECK(a.entries[0] == std::optional<std::size_t>(0));
    for (std::size_t j = 1; j < 4; ++j) CHECK_FALSE(a.entries[j].has_value());
  }

  TEST_CASE("alignment takes the leftmost match") {
    const AlignmentMap a = compute_alignment(tokenize("red red", vocab()), tokenize("red", vocab()));
    CHECK(a.entries[0] == std::optional<std::size_t>(0));
  }

  TEST_CASE("property: self alignment is the identity") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const Prompt p = random_prompt(rng, 1 + rng.index(8));
      CHECK(compute_alignment(p, p) == AlignmentMap::identity(p.size()));
    }
  }

  TEST_CASE("property: alignments are injective and order preserving") {
    Rng rng(12);
    for (int trial = 0; trial < 300; ++trial) {
      const Prompt a = random_prompt(rng, 1 + rng.index(7));
      const Prompt b = random_prompt(rng, 1 + rng.index(7));
      const AlignmentMap m = compute_alignment(a, b);
      CHECK(m.size() == b.size());
      CHECK(order_preserving(m, a.size()));
      for (std::size_t j = 0; j < m.size(); ++j) {
        if (m.entries[j]) CHECK(a.token(*m.entries[j]).id == b.token(j).id);
      }
    }
  }

  TEST_CASE("property: apply_edit is pure") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
      const Prompt p = random_prompt(rng, 2 + rng.index(5));
      const EditOp e = AddPhrase{rng.index(p.size() + 1), vocab().tokens("misty lake")};
      CHECK(apply_edit(p, e) == apply_edit(p, e));
    }
  }

  TEST_CASE("prompt embedding pooling") {
    const Prompt single = tokenize("garden", vocab());
    CHECK((prompt_embedding(single) - single.token(0).embedding).norm() < 1e-12);
    CHECK((prompt_embedding(tokenize("garden garden", vocab())) - single.token(0).embedding).norm() < 1e-12);
    const Prompt p = tokenize("a tranquil garden", vocab());
    const auto e = prompt_embedding(p);
    CHECK(std::abs(e.norm() - 1.0) < 1e-9);
    CHECK(std::abs(e.dot(prompt_embedding(p)) - 1.0) < 1e-12);
  }

  TEST_CASE("negative weights pool as zero") {
    const Prompt p = tokenize("tranquil garden", vocab());
    const Prompt q = apply_edit(p, Reweight{0, -2.0});
    CHECK((prompt_embedding(q) - p.token(1).embedding).norm() < 1e-12);
    const Prompt dead = apply_edit(apply_edit(p, Reweight{0, 0.0}), Reweight{1, -1.0});
    try {
      prompt_embedding(dead);
      FAIL("expected DegenerateEmbedding");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateEmbedding);
    }
  }

  TEST_CASE("json round trips") {
    const Prompt p = apply_edit(tokenize("a tranquil garden", vocab()), Reweight{1, 1.5});
    CHECK(prompt_from_json(to_json(p), vocab()) == p);
    const std::vector<EditOp> edits = {WordSwap{1, vocab().tokens("vibrant")},
                                       AddPhrase{3, vocab().tokens("with blooming flowers")},
                                       Reweight{2, -0.5}};
    for (const auto& e : edits) {
      const EditOp back = edit_from_json(to_json(e), vocab());
      CHECK(kind_of(back) == kind_of(e));
      CHECK(to_json(back) == to_json(e));
    }
    CHECK(to_json(edits[0])["type"] == "word_swap");
    CHECK(to_json(edits[1])["type"] == "add_phrase");
    CHECK(to_json(edits[2])["type"] == "reweight");
  }

  TEST_CASE("edit json names the missing field") {
    try {
      edit_from_json({{"type", "reweight"}, {"index", 0}}, vocab());
      FAIL("expected ParseError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ParseError);
      CHECK(std::string(e.what()).find("scale") != std::string::npos);
    }
    CHECK_THROWS_AS(edit_from_json({{"type", "delete"}}, vocab()), Error);
  }
}
