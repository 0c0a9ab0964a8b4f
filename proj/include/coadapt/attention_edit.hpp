#pragma once

#include <cstdint>
#include <functional>

#include "coadapt/attention.hpp"
#include "coadapt/prompt.hpp"

namespace coadapt {

/// Parameters of one attention edit plus the step sizes of its reward ascent.
struct EditController {
  EditKind mode = EditKind::WordSwap;
  int tau_inj = 0;          // word swap: steps t < tau_inj use the injected map
  AlignmentMap alignment;   // add phrase
  std::size_t j_star = 0;   // reweight column
  double scale = 1.0;       // reweight factor c in [-2, 2]
  double eta_map = 1.0;
  double eta_align = 1.0;
  double eta_c = 0.5;
  int ascent_steps = 0;
  int coords_per_step = 32;
  std::uint64_t seed = 0;

  /// Throws OutOfRange when a field breaks its invariant for `generation_steps`.
  void validate(int generation_steps) const;
};

/// Relaxed alignment: n_new x (n_old + 1) row-stochastic matrix; the last
/// column holds the "no source token" mass.
struct SoftAlignment {
  Eigen::MatrixXd weights;

  std::size_t new_size() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t old_size() const { return static_cast<std::size_t>(weights.cols() - 1); }

  static SoftAlignment from_hard(const AlignmentMap& map, std::size_t old_size);
  /// Per-row argmax, the last column decoding to nullopt.
  AlignmentMap decode() const;
};

/// `injected` while step < tau_inj, else `fresh`.
AttentionMap edit_word_swap(const AttentionMap& fresh, const AttentionMap& injected, int step,
                            int tau_inj);

/// Column j comes from `fresh` when A(j) is None, else from column A(j) of `source`.
AttentionMap edit_add_phrase(const AttentionMap& source, const AttentionMap& fresh,
                             const AlignmentMap& alignment);

/// Soft routing: column j = sum_k S(j,k) source(:,k) + S(j,None) fresh(:,j).
AttentionMap edit_add_phrase_soft(const AttentionMap& source, const AttentionMap& fresh,
                                  const SoftAlignment& alignment);

/// Column j_star multiplied by c; everything else untouched.
AttentionMap edit_reweight(const AttentionMap& map, std::size_t j_star, double c);

/// Euclidean projection of every row onto the probability simplex.
void project_rows_to_simplex(AttentionMap& m);
void project_rows_to_simplex(Eigen::MatrixXd& m);

using ScaleReward = std::function<double(double)>;
using MapReward = std::function<double(const AttentionMap&)>;
using AlignmentReward = std::function<double(const SoftAlignment&)>;

inline constexpr double kScaleFdStep = 1e-3;
inline constexpr double kMapFdStep = 1e-2;

/// Central-difference gradient ascent on c, clamped to [-2, 2] every step.
double ascend_scale(double c0, const ScaleReward& reward, double eta, int steps);

struct CoordinateSampling {
  int coords_per_step = 32;  // >= entry count means full gradient
  std::uint64_t seed = 0;
};

/// Coordinate-sampled central-difference ascent followed by row projection
/// onto the simplex after every step.
AttentionMap ascend_map(AttentionMap map, const MapReward& reward, double eta, int steps,
                        const CoordinateSampling& sampling);

SoftAlignment ascend_alignment(SoftAlignment alignment, const AlignmentReward& reward, double eta,
                               int steps, const CoordinateSampling& sampling);

}  // namespace coadapt
