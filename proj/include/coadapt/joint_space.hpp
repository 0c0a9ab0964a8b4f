#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>

#include "coadapt/image.hpp"

// Shared toy "joint space": tokens own a procedural visual signature, and one
// fixed projection maps coarse image statistics into the embedding space.
// Token embeddings are the projected signature of the token rendered on its
// own, so image and prompt embeddings are comparable by cosine.

namespace coadapt {

inline constexpr int kDefaultEmbeddingDim = 16;
inline constexpr int kFeatureGrid = 4;
inline constexpr int kReferenceSize = 32;

/// Gaussian blob over a colored floor; parameters are derived from a token hash.
struct TokenVisual {
  double center_x = 0.5;
  double center_y = 0.5;
  double spread = 0.15;
  std::array<double, 3> color{1.0, 1.0, 1.0};

  /// Signal intensity at normalized coordinates (x, y) in [0, 1]^2.
  double signal(double x, double y, int channel) const;
};

TokenVisual token_visual(std::uint64_t token_hash);

/// Channel means over a kFeatureGrid x kFeatureGrid partition; length 16 * C.
Eigen::VectorXd block_features(const ToyImage& img);

/// Fixed seeded D x (16 * C) projection whose rows are orthogonal to the
/// all-ones vector, so uniform gray images project to zero.
const Eigen::MatrixXd& feature_projection(int dim, int channels);

/// Normalized projection of block features; throws DegenerateEmbedding on zero.
Eigen::VectorXd project_image(const ToyImage& img, int dim);

/// The visual of one token rendered alone on the reference grid.
ToyImage render_visual(const TokenVisual& visual, int height, int width, int channels);

}  // namespace coadapt
