#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "coadapt/joint_space.hpp"
#include "json.hpp"

namespace coadapt {

struct Token {
  std::int64_t id = 0;
  std::string surface;
  Eigen::VectorXd embedding;  // unit norm
  TokenVisual visual;

  bool operator==(const Token& other) const { return id == other.id && surface == other.surface; }
};

/// Seed-derived vocabulary. Built-in words get their list index as id; any
/// other word gets a stable hashed id past the built-in range. Everything a
/// token carries is a pure function of (seed, surface).
class Vocabulary {
 public:
  explicit Vocabulary(std::uint64_t seed = 7, int dim = kDefaultEmbeddingDim);

  Token token(std::string_view surface) const;
  std::vector<Token> tokens(std::string_view text) const;

  std::uint64_t seed() const { return seed_; }
  int dim() const { return dim_; }

  static const std::vector<std::string>& builtin_words();

 private:
  std::uint64_t seed_;
  int dim_;
};

/// Ordered tokens with per-token weights in [-2, 2].
class Prompt {
 public:
  Prompt(std::vector<Token> tokens, std::vector<double> weights);
  explicit Prompt(std::vector<Token> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<Token>& tokens() const { return tokens_; }
  const std::vector<double>& weights() const { return weights_; }
  const Token& token(std::size_t i) const { return tokens_.at(i); }
  double weight(std::size_t i) const { return weights_.at(i); }
  std::string text() const;

  bool operator==(const Prompt& other) const {
    return tokens_ == other.tokens_ && weights_ == other.weights_;
  }

 private:
  std::vector<Token> tokens_;
  std::vector<double> weights_;
};

struct WordSwap {
  std::size_t index = 0;
  std::vector<Token> replacement;  // replaces tokens [index, index + size)
};

struct AddPhrase {
  std::size_t position = 0;  // insertion point in [0, n]
  std::vector<Token> phrase;
};

struct Reweight {
  std::size_t index = 0;
  double scale = 1.0;
};

using EditOp = std::variant<WordSwap, AddPhrase, Reweight>;

enum class EditKind { WordSwap = 0, AddPhrase = 1, Reweight = 2 };
inline constexpr int kNumEditKinds = 3;

EditKind kind_of(const EditOp& edit);
const char* to_string(EditKind kind);
std::string describe(const EditOp& edit);

/// For each new-prompt index, the matched old-prompt index or nullopt.
struct AlignmentMap {
  std::vector<std::optional<std::size_t>> entries;

  std::size_t size() const { return entries.size(); }
  bool operator==(const AlignmentMap&) const = default;

  static AlignmentMap identity(std::size_t n);
};

Prompt tokenize(std::string_view text, const Vocabulary& vocab);

Prompt apply_edit(const Prompt& prompt, const EditOp& edit);

/// Longest common subsequence on token ids, taking the leftmost match.
AlignmentMap compute_alignment(const Prompt& old_prompt, const Prompt& new_prompt);

/// Normalized weighted mean of token embeddings; negative weights pool as 0.
Eigen::VectorXd prompt_embedding(const Prompt& prompt);

nlohmann::json to_json(const Prompt& prompt);
Prompt prompt_from_json(const nlohmann::json& j, const Vocabulary& vocab);
nlohmann::json to_json(const EditOp& edit);
EditOp edit_from_json(const nlohmann::json& j, const Vocabulary& vocab);

}  // namespace coadapt
