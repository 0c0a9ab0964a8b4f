#include "coadapt/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "coadapt/error.hpp"
#include "coadapt/rng.hpp"

namespace coadapt {

namespace {

constexpr double kFrequencyScale = 5.0;
constexpr double kStepScale = 0.6;

// Random Fourier features of normalized pixel coordinates, one row per pixel.
Eigen::MatrixXd positional_queries(const GeneratorConfig& cfg) {
  Rng rng(combine_seed(cfg.seed, 1));
  std::vector<double> fx(cfg.dim), fy(cfg.dim), phase(cfg.dim);
  for (int k = 0; k < cfg.dim; ++k) {
    fx[k] = kFrequencyScale * rng.normal();
    fy[k] = kFrequencyScale * rng.normal();
    phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  Eigen::MatrixXd q(cfg.pixels(), cfg.dim);
  for (int y = 0; y < cfg.height; ++y) {
    const double ny = (y + 0.5) / cfg.height;
    for (int x = 0; x < cfg.width; ++x) {
      const double nx = (x + 0.5) / cfg.width;
      for (int k = 0; k < cfg.dim; ++k) {
        q(y * cfg.width + x, k) = std::sqrt(2.0) * std::cos(fx[k] * nx + fy[k] * ny + phase[k]);
      }
    }
  }
  return q;
}

Eigen::VectorXd step_query(const GeneratorConfig& cfg, int step) {
  Rng rng(combine_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(step)));
  Eigen::VectorXd s(cfg.dim);
  for (int k = 0; k < cfg.dim; ++k) s[k] = kStepScale * rng.normal();
  return s;
}

void row_softmax(AttentionMap& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

void check_source(const AttentionStack& source, const GeneratorConfig& cfg) {
  if (source.steps() != cfg.steps || source.pixels() != cfg.pixels()) {
    fail(ErrorCode::ControllerMismatch, "source attention does not match the generator config");
  }
}

AttentionMap stack_mean(const std::vector<AttentionMap>& maps) {
  AttentionMap mean = AttentionMap::Zero(maps.front().rows(), maps.front().cols());
  for (const auto& m : maps) mean += m;
  return mean / static_cast<double>(maps.size());
}

/// Keeps an alignment injective and order-preserving after argmax decoding.
AlignmentMap repair_alignment(AlignmentMap map) {
  std::optional<std::size_t> last;
  for (auto& a : map.entries) {
    if (a && last && *a <= *last) a.reset();
    if (a) last = a;
  }
  return map;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (height < 1 || width < 1 || channels < 1 || steps < 1 || dim < 1) {
    fail(ErrorCode::OutOfRange, "generator dimensions must be >= 1");
  }
  if (!(temperature > 0.0)) fail(ErrorCode::OutOfRange, "temperature must be > 0");
}

AttentionStack compute_attention(const Prompt& prompt, const GeneratorConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(prompt.size());
  Eigen::MatrixXd keys(n, cfg.dim);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& e = prompt.token(static_cast<std::size_t>(j)).embedding;
    if (e.size() != cfg.dim) fail(ErrorCode::DimError, "token embedding dimension differs from config");
    keys.row(j) = e.transpose();
  }
  const double scale = cfg.temperature / std::sqrt(static_cast<double>(cfg.dim));
  const Eigen::MatrixXd positional = positional_queries(cfg) * keys.transpose();

  const auto& weights = prompt.weights();
  const bool unit = std::all_of(weights.begin(), weights.end(), [](double w) { return w == 1.0; });
  const bool nonnegative = std::all_of(weights.begin(), weights.end(), [](double w) { return w >= 0.0; });

  AttentionStack stack;
  stack.maps.reserve(static_cast<std::size_t>(cfg.steps));
  for (int t = 0; t < cfg.steps; ++t) {
    const Eigen::RowVectorXd bias = (keys * step_query(cfg, t)).transpose();
    AttentionMap m = (positional.rowwise() + bias) * scale;
    row_softmax(m);
    if (!unit) {
      for (Eigen::Index j = 0; j < n; ++j) m.col(j) *= weights[static_cast<std::size_t>(j)];
      if (nonnegative) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
          const double sum = m.row(r).sum();
          if (sum > 0.0) m.row(r) /= sum;
        }
      }
    }
    stack.maps.push_back(std::move(m));
  }
  return stack;
}

SignalBank build_signals(const Prompt& prompt, const GeneratorConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(prompt.size());
  SignalBank bank;
  bank.channels.assign(static_cast<std::size_t>(cfg.channels), AttentionMap(cfg.pixels(), n));
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& visual = prompt.token(static_cast<std::size_t>(j)).visual;
    for (int y = 0; y < cfg.height; ++y) {
      const double ny = (y + 0.5) / cfg.height;
      for (int x = 0; x < cfg.width; ++x) {
        const double nx = (x + 0.5) / cfg.width;
        for (int c = 0; c < cfg.channels; ++c) {
          bank.channels[static_cast<std::size_t>(c)](y * cfg.width + x, j) = visual.signal(nx, ny, c);
        }
      }
    }
  }
  return bank;
}

ToyImage render(const SignalBank& signals, const AttentionMap& mean_map, const GeneratorConfig& cfg) {
  ToyImage img(cfg.height, cfg.width, cfg.channels);
  for (int c = 0; c < cfg.channels; ++c) {
    const Eigen::VectorXd values =
        signals.channels[static_cast<std::size_t>(c)].cwiseProduct(mean_map).rowwise().sum();
    for (int p = 0; p < cfg.pixels(); ++p) {
      img.pixels[static_cast<std::size_t>(p) * cfg.channels + c] = std::clamp(values[p], 0.0, 1.0);
    }
  }
  return img;
}

ToyImage render(const Prompt& prompt, const AttentionStack& stack, const GeneratorConfig& cfg) {
  if (stack.steps() < 1 || stack.pixels() != cfg.pixels() ||
      stack.tokens() != static_cast<Eigen::Index>(prompt.size())) {
    fail(ErrorCode::DimError, "attention stack does not match prompt and config");
  }
  return render(build_signals(prompt, cfg), stack_mean(stack.maps), cfg);
}

Generation generate(const Prompt& prompt, const GeneratorConfig& cfg) {
  Generation g;
  g.attention = compute_attention(prompt, cfg);
  g.image = render(prompt, g.attention, cfg);
  return g;
}

ControlledGeneration regenerate_with_controller(const Prompt& new_prompt,
                                                const AttentionStack& source,
                                                const EditController& ctrl,
                                                const GeneratorConfig& cfg,
                                                const ImageReward& reward) {
  ctrl.validate(cfg.steps);
  check_source(source, cfg);
  const auto n_new = static_cast<Eigen::Index>(new_prompt.size());
  const bool refine = static_cast<bool>(reward) && ctrl.ascent_steps > 0;
  const CoordinateSampling sampling{ctrl.coords_per_step, ctrl.seed};

  const AttentionStack fresh = compute_attention(new_prompt, cfg);
  const SignalBank signals = build_signals(new_prompt, cfg);
  auto score = [&](const std::vector<AttentionMap>& maps) {
    return reward(render(signals, stack_mean(maps), cfg));
  };

  ControlledGeneration out;
  out.applied = ctrl;
  std::vector<AttentionMap> edited(static_cast<std::size_t>(cfg.steps));

  switch (ctrl.mode) {
    case EditKind::WordSwap: {
      if (source.tokens() != n_new) {
        fail(ErrorCode::ControllerMismatch, "word swap needs equal token counts");
      }
      std::vector<AttentionMap> injected(source.maps.begin(), source.maps.begin() + ctrl.tau_inj);
      if (refine && ctrl.tau_inj > 0) {
        // The injected maps are ascended jointly as one tall matrix.
        const Eigen::Index rows = cfg.pixels();
        AttentionMap tall(rows * ctrl.tau_inj, n_new);
        for (int t = 0; t < ctrl.tau_inj; ++t) tall.middleRows(t * rows, rows) = injected[t];
        std::vector<AttentionMap> probe = fresh.maps;
        auto unstack = [&](const AttentionMap& m, std::vector<AttentionMap>& maps) {
          for (int t = 0; t < ctrl.tau_inj; ++t) maps[t] = m.middleRows(t * rows, rows);
        };
        tall = ascend_map(
            tall,
            [&](const AttentionMap& m) {
              unstack(m, probe);
              return score(probe);
            },
            ctrl.eta_map, ctrl.ascent_steps, sampling);
        unstack(tall, injected);
      }
      for (int t = 0; t < cfg.steps; ++t) {
        edited[t] = t < ctrl.tau_inj ? edit_word_swap(fresh.maps[t], injected[t], t, ctrl.tau_inj)
                                     : fresh.maps[t];
      }
      break;
    }
    case EditKind::AddPhrase: {
      if (ctrl.alignment.size() != new_prompt.size()) {
        fail(ErrorCode::ControllerMismatch, "alignment length differs from the new prompt");
      }
      for (const auto& a : ctrl.alignment.entries) {
        if (a && *a >= static_cast<std::size_t>(source.tokens())) {
          fail(ErrorCode::ControllerMismatch, "alignment index past the source prompt");
        }
      }
      AlignmentMap alignment = ctrl.alignment;
      if (refine) {
        auto soft = SoftAlignment::from_hard(alignment, static_cast<std::size_t>(source.tokens()));
        std::vector<AttentionMap> probe(static_cast<std::size_t>(cfg.steps));
        soft = ascend_alignment(
            soft,
            [&](const SoftAlignment& s) {
              for (int t = 0; t < cfg.steps; ++t) {
                probe[t] = edit_add_phrase_soft(source.maps[t], fresh.maps[t], s);
              }
              return score(probe);
            },
            ctrl.eta_align, ctrl.ascent_steps, sampling);
        alignment = repair_alignment(soft.decode());
        out.applied.alignment = alignment;
      }
      for (int t = 0; t < cfg.steps; ++t) {
        edited[t] = edit_add_phrase(source.maps[t], fresh.maps[t], alignment);
      }
      break;
    }
    case EditKind::Reweight: {
      if (source.tokens() != n_new || ctrl.j_star >= new_prompt.size()) {
        fail(ErrorCode::ControllerMismatch, "re-weight column does not match the source maps");
      }
      double c = ctrl.scale;
      if (refine) {
        // Scaling is linear, so the step-averaged map is scaled directly.
        const AttentionMap mean = stack_mean(source.maps);
        c = ascend_scale(
            c,
            [&](double s) { return reward(render(signals, edit_reweight(mean, ctrl.j_star, s), cfg)); },
            ctrl.eta_c, ctrl.ascent_steps);
        out.applied.scale = c;
      }
      for (int t = 0; t < cfg.steps; ++t) edited[t] = edit_reweight(source.maps[t], ctrl.j_star, c);
      break;
    }
  }

  out.generation.image = render(signals, stack_mean(edited), cfg);
  out.generation.attention.maps = std::move(edited);
  return out;
}

Eigen::VectorXd image_embedding(const ToyImage& img, int dim) { return project_image(img, dim); }

nlohmann::json attention_to_json(const AttentionStack& stack) {
  auto maps = nlohmann::json::array();
  for (const auto& m : stack.maps) {
    maps.push_back(std::vector<double>(m.data(), m.data() + m.size()));
  }
  return {{"steps", stack.steps()},
          {"pixels", stack.pixels()},
          {"tokens", stack.tokens()},
          {"maps", std::move(maps)}};
}

nlohmann::json attention_heatmaps(const AttentionStack& stack, const GeneratorConfig& cfg) {
  auto out = nlohmann::json::array();
  if (stack.maps.empty()) return out;
  const AttentionMap mean = stack_mean(stack.maps);
  for (Eigen::Index j = 0; j < mean.cols(); ++j) {
    std::vector<double> column(static_cast<std::size_t>(mean.rows()));
    for (Eigen::Index p = 0; p < mean.rows(); ++p) column[static_cast<std::size_t>(p)] = mean(p, j);
    out.push_back({{"token", j}, {"h", cfg.height}, {"w", cfg.width}, {"data", std::move(column)}});
  }
  return out;
}

}  // namespace coadapt
