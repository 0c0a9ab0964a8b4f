#include "coadapt/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "coadapt/error.hpp"
#include "coadapt/rng.hpp"

namespace coadapt {

namespace {

constexpr std::int64_t kHashedIdRange = 1'000'000'007;

void require(bool ok, ErrorCode code, const std::string& message) {
  if (!ok) fail(code, message);
}

Eigen::VectorXd fallback_embedding(std::uint64_t hash, int dim) {
  Rng rng(hash);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  return v.normalized();
}

}  // namespace

Vocabulary::Vocabulary(std::uint64_t seed, int dim) : seed_(seed), dim_(dim) {
  require(dim >= 1, ErrorCode::OutOfRange, "embedding dimension must be >= 1");
}

const std::vector<std::string>& Vocabulary::builtin_words() {
  static const std::vector<std::string> words = {
      "a",        "the",      "with",    "and",      "of",       "in",       "on",
      "serene",   "tranquil", "vibrant", "calm",     "misty",    "sunny",    "dark",
      "bright",   "ancient",  "quiet",   "golden",   "frozen",   "wild",     "tiny",
      "giant",    "blue",     "green",   "red",      "yellow",   "purple",   "orange",
      "white",    "black",    "silver",  "pink",     "lake",     "forest",   "garden",
      "mountain", "river",    "ocean",   "desert",   "meadow",   "valley",   "city",
      "village",  "castle",   "bridge",  "tower",    "flowers",  "blooming", "sunflower",
      "tree",     "trees",    "bear",    "cat",      "dog",      "bird",     "horse",
      "fox",      "owl",      "soup",    "croutons", "bowl",     "bread",    "apple",
      "boat",     "house",    "cabin",   "sky",      "clouds",   "moon",     "sun",
      "stars",    "snow",     "rain",    "fog",      "sunset",   "night",    "morning",
      "painting", "photo",    "sketch",  "watercolor", "portrait", "landscape", "style",
  };
  return words;
}

Token Vocabulary::token(std::string_view surface) const {
  require(!surface.empty(), ErrorCode::InvalidPrompt, "empty token surface");
  Token t;
  t.surface = std::string(surface);
  const std::uint64_t hash = hash_string(surface, seed_);
  const auto& words = builtin_words();
  const auto it = std::find(words.begin(), words.end(), surface);
  t.id = it != words.end()
             ? static_cast<std::int64_t>(it - words.begin())
             : static_cast<std::int64_t>(words.size()) +
                   static_cast<std::int64_t>(hash % static_cast<std::uint64_t>(kHashedIdRange));
  t.visual = token_visual(hash);
  try {
    t.embedding = project_image(render_visual(t.visual, kReferenceSize, kReferenceSize, 3), dim_);
  } catch (const Error&) {
    t.embedding = fallback_embedding(hash, dim_);
  }
  return t;
}

std::vector<Token> Vocabulary::tokens(std::string_view text) const {
  std::vector<Token> out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) out.push_back(token(word));
  return out;
}

Prompt::Prompt(std::vector<Token> tokens, std::vector<double> weights)
    : tokens_(std::move(tokens)), weights_(std::move(weights)) {
  require(!tokens_.empty(), ErrorCode::InvalidPrompt, "prompt needs at least one token");
  require(tokens_.size() == weights_.size(), ErrorCode::InvalidPrompt,
          "token and weight counts differ");
  for (double w : weights_) {
    require(std::isfinite(w) && w >= -2.0 && w <= 2.0, ErrorCode::InvalidPrompt,
            "token weight outside [-2, 2]");
  }
}

Prompt::Prompt(std::vector<Token> tokens)
    : Prompt(std::vector<Token>(tokens), std::vector<double>(tokens.size(), 1.0)) {}

std::string Prompt::text() const {
  std::string out;
  for (const auto& t : tokens_) {
    if (!out.empty()) out += ' ';
    out += t.surface;
  }
  return out;
}

EditKind kind_of(const EditOp& edit) { return static_cast<EditKind>(edit.index()); }

const char* to_string(EditKind kind) {
  switch (kind) {
    case EditKind::WordSwap: return "word_swap";
    case EditKind::AddPhrase: return "add_phrase";
    case EditKind::Reweight: return "reweight";
  }
  return "unknown";
}

namespace {

std::string join_surfaces(const std::vector<Token>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t.surface;
  }
  return out;
}

}  // namespace

std::string describe(const EditOp& edit) {
  struct Visitor {
    std::string operator()(const WordSwap& e) const {
      return "swap token " + std::to_string(e.index) + " for '" + join_surfaces(e.replacement) + "'";
    }
    std::string operator()(const AddPhrase& e) const {
      return "add '" + join_surfaces(e.phrase) + "' at " + std::to_string(e.position);
    }
    std::string operator()(const Reweight& e) const {
      std::ostringstream out;
      out << "reweight token " << e.index << " by " << e.scale;
      return out.str();
    }
  };
  return std::visit(Visitor{}, edit);
}

AlignmentMap AlignmentMap::identity(std::size_t n) {
  AlignmentMap a;
  a.entries.resize(n);
  for (std::size_t j = 0; j < n; ++j) a.entries[j] = j;
  return a;
}

Prompt tokenize(std::string_view text, const Vocabulary& vocab) {
  auto tokens = vocab.tokens(text);
  require(!tokens.empty(), ErrorCode::InvalidPrompt, "prompt text has no words");
  return Prompt(std::move(tokens));
}

Prompt apply_edit(const Prompt& prompt, const EditOp& edit) {
  auto tokens = prompt.tokens();
  auto weights = prompt.weights();
  const std::size_t n = tokens.size();

  if (const auto* swap = std::get_if<WordSwap>(&edit)) {
    require(!swap->replacement.empty(), ErrorCode::InvalidEdit, "word swap without replacement");
    require(swap->index < n && swap->index + swap->replacement.size() <= n, ErrorCode::InvalidEdit,
            "word swap span out of bounds");
    for (std::size_t k = 0; k < swap->replacement.size(); ++k) {
      tokens[swap->index + k] = swap->replacement[k];
      weights[swap->index + k] = 1.0;
    }
  } else if (const auto* add = std::get_if<AddPhrase>(&edit)) {
    require(!add->phrase.empty(), ErrorCode::InvalidEdit, "empty phrase");
    require(add->position <= n, ErrorCode::InvalidEdit, "insert position out of bounds");
    const auto at = static_cast<std::ptrdiff_t>(add->position);
    tokens.insert(tokens.begin() + at, add->phrase.begin(), add->phrase.end());
    weights.insert(weights.begin() + at, add->phrase.size(), 1.0);
  } else {
    const auto& rw = std::get<Reweight>(edit);
    require(rw.index < n, ErrorCode::InvalidEdit, "reweight index out of bounds");
    require(std::isfinite(rw.scale) && rw.scale >= -2.0 && rw.scale <= 2.0, ErrorCode::InvalidEdit,
            "reweight scale outside [-2, 2]");
    weights[rw.index] = rw.scale;
  }
  return Prompt(std::move(tokens), std::move(weights));
}

AlignmentMap compute_alignment(const Prompt& old_prompt, const Prompt& new_prompt) {
  const std::size_t n_old = old_prompt.size();
  const std::size_t n_new = new_prompt.size();
  // suffix[i][j] = LCS length of old[i:] and new[j:]
  std::vector<std::vector<std::size_t>> suffix(n_old + 1, std::vector<std::size_t>(n_new + 1, 0));
  for (std::size_t i = n_old; i-- > 0;) {
    for (std::size_t j = n_new; j-- > 0;) {
      suffix[i][j] = old_prompt.token(i).id == new_prompt.token(j).id
                         ? suffix[i + 1][j + 1] + 1
                         : std::max(suffix[i + 1][j], suffix[i][j + 1]);
    }
  }
  AlignmentMap map;
  map.entries.assign(n_new, std::nullopt);
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < n_old && j < n_new) {
    if (old_prompt.token(i).id == new_prompt.token(j).id && suffix[i][j] == suffix[i + 1][j + 1] + 1) {
      map.entries[j] = i;
      ++i;
      ++j;
    } else if (suffix[i + 1][j] >= suffix[i][j + 1]) {
      ++i;
    } else {
      ++j;
    }
  }
  return map;
}

Eigen::VectorXd prompt_embedding(const Prompt& prompt) {
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(prompt.token(0).embedding.size());
  double total = 0.0;
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    const double w = std::max(prompt.weight(i), 0.0);
    pooled += w * prompt.token(i).embedding;
    total += w;
  }
  if (total > 0.0) pooled /= total;
  const double norm = pooled.norm();
  if (!(norm > 1e-12)) fail(ErrorCode::DegenerateEmbedding, "prompt pools to the zero vector");
  return pooled / norm;
}

nlohmann::json to_json(const Prompt& prompt) {
  auto out = nlohmann::json::array();
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    out.push_back({{"surface", prompt.token(i).surface}, {"weight", prompt.weight(i)}});
  }
  return out;
}

namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) {
    fail(ErrorCode::ParseError, std::string("missing required field '") + name + "'");
  }
  return j.at(name);
}

std::vector<Token> tokens_field(const nlohmann::json& j, const Vocabulary& vocab) {
  const auto& arr = field(j, "tokens");
  if (!arr.is_array()) fail(ErrorCode::ParseError, "'tokens' must be an array of strings");
  std::vector<Token> out;
  for (const auto& s : arr) out.push_back(vocab.token(s.get<std::string>()));
  return out;
}

}  // namespace

Prompt prompt_from_json(const nlohmann::json& j, const Vocabulary& vocab) {
  if (!j.is_array()) fail(ErrorCode::ParseError, "prompt must be a JSON array");
  std::vector<Token> tokens;
  std::vector<double> weights;
  for (const auto& item : j) {
    tokens.push_back(vocab.token(field(item, "surface").get<std::string>()));
    weights.push_back(field(item, "weight").get<double>());
  }
  return Prompt(std::move(tokens), std::move(weights));
}

nlohmann::json to_json(const EditOp& edit) {
  auto surfaces = [](const std::vector<Token>& tokens) {
    auto arr = nlohmann::json::array();
    for (const auto& t : tokens) arr.push_back(t.surface);
    return arr;
  };
  nlohmann::json out{{"type", to_string(kind_of(edit))}};
  if (const auto* swap = std::get_if<WordSwap>(&edit)) {
    out["index"] = swap->index;
    out["tokens"] = surfaces(swap->replacement);
  } else if (const auto* add = std::get_if<AddPhrase>(&edit)) {
    out["position"] = add->position;
    out["tokens"] = surfaces(add->phrase);
  } else {
    const auto& rw = std::get<Reweight>(edit);
    out["index"] = rw.index;
    out["scale"] = rw.scale;
  }
  return out;
}

EditOp edit_from_json(const nlohmann::json& j, const Vocabulary& vocab) {
  try {
    const auto type = field(j, "type").get<std::string>();
    if (type == "word_swap") {
      return WordSwap{field(j, "index").get<std::size_t>(), tokens_field(j, vocab)};
    }
    if (type == "add_phrase") {
      return AddPhrase{field(j, "position").get<std::size_t>(), tokens_field(j, vocab)};
    }
    if (type == "reweight") {
      return Reweight{field(j, "index").get<std::size_t>(), field(j, "scale").get<double>()};
    }
    fail(ErrorCode::ParseError, "unknown edit type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("malformed edit: ") + e.what());
  }
}

}  // namespace coadapt
