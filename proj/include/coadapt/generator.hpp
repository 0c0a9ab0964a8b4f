#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "coadapt/attention.hpp"
#include "coadapt/attention_edit.hpp"
#include "coadapt/image.hpp"
#include "coadapt/prompt.hpp"
#include "json.hpp"

namespace coadapt {

struct GeneratorConfig {
  int height = 32;
  int width = 32;
  int channels = 3;
  int steps = 10;  // generation steps T_gen
  int dim = kDefaultEmbeddingDim;
  std::uint64_t seed = 0x5eed;
  double temperature = 2.0;

  void validate() const;
  int pixels() const { return height * width; }
};

struct Generation {
  ToyImage image;
  AttentionStack attention;
};

/// Fresh attention maps: row softmax of (positional + step queries) against
/// token-embedding keys, then column weighting by prompt weights (rows are
/// renormalized only when every weight is >= 0).
AttentionStack compute_attention(const Prompt& prompt, const GeneratorConfig& cfg);

/// Per-channel pixel x token signal matrices of the prompt's token visuals.
struct SignalBank {
  std::vector<AttentionMap> channels;
};
SignalBank build_signals(const Prompt& prompt, const GeneratorConfig& cfg);

/// pixel(p, c) = clamp(sum_j mean_t M_t[p, j] * signal_j(p, c), 0, 1).
ToyImage render(const SignalBank& signals, const AttentionMap& mean_map, const GeneratorConfig& cfg);
ToyImage render(const Prompt& prompt, const AttentionStack& stack, const GeneratorConfig& cfg);

Generation generate(const Prompt& prompt, const GeneratorConfig& cfg);

using ImageReward = std::function<double(const ToyImage&)>;

struct ControlledGeneration {
  Generation generation;
  EditController applied;  // controller after reward ascent (c*, decoded alignment)
};

/// Replaces each freshly computed map by Edit(fresh, source, t) according to
/// the controller mode. When `reward` is given and ascent_steps > 0 the edit
/// parameters (injected maps, alignment, or scale) are refined by ascent on it.
ControlledGeneration regenerate_with_controller(const Prompt& new_prompt,
                                                const AttentionStack& source,
                                                const EditController& ctrl,
                                                const GeneratorConfig& cfg,
                                                const ImageReward& reward = {});

/// Fixed seeded projection of 4x4 block-averaged channels, normalized.
Eigen::VectorXd image_embedding(const ToyImage& img, int dim = kDefaultEmbeddingDim);

/// {"steps", "pixels", "tokens", "maps": [[row-major floats] per step]}
nlohmann::json attention_to_json(const AttentionStack& stack);
/// Step-averaged attention per token as H x W row-major arrays.
nlohmann::json attention_heatmaps(const AttentionStack& stack, const GeneratorConfig& cfg);

}  // namespace coadapt
