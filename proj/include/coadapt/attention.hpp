#pragma once

#include <Eigen/Dense>
#include <vector>

namespace coadapt {

/// Pixel x token cross-attention for one generation step (rows = pixels).
using AttentionMap = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One map per generation step.
struct AttentionStack {
  std::vector<AttentionMap> maps;

  int steps() const { return static_cast<int>(maps.size()); }
  Eigen::Index pixels() const { return maps.empty() ? 0 : maps.front().rows(); }
  Eigen::Index tokens() const { return maps.empty() ? 0 : maps.front().cols(); }

  /// Per-token attention mass averaged over steps and pixels.
  Eigen::VectorXd token_mass() const;
  /// Step-averaged map.
  AttentionMap mean_map() const;

  bool operator==(const AttentionStack& other) const;
};

}  // namespace coadapt
