#include "coadapt/joint_space.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "coadapt/error.hpp"
#include "coadapt/rng.hpp"

namespace coadapt {

namespace {
constexpr double kFloor = 0.35;
constexpr std::uint64_t kProjectionSeed = 0x70726f6a65637431ULL;
}  // namespace

double TokenVisual::signal(double x, double y, int channel) const {
  const double dx = x - center_x;
  const double dy = y - center_y;
  const double bump = std::exp(-(dx * dx + dy * dy) / (2.0 * spread * spread));
  return color[static_cast<std::size_t>(channel) % 3] * (kFloor + (1.0 - kFloor) * bump);
}

TokenVisual token_visual(std::uint64_t token_hash) {
  Rng rng(mix64(token_hash));
  TokenVisual v;
  v.center_x = rng.uniform(0.15, 0.85);
  v.center_y = rng.uniform(0.15, 0.85);
  v.spread = rng.uniform(0.08, 0.22);
  for (auto& c : v.color) c = rng.uniform(0.05, 1.0);
  return v;
}

Eigen::VectorXd block_features(const ToyImage& img) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(kFeatureGrid * kFeatureGrid * img.channels);
  for (int by = 0; by < kFeatureGrid; ++by) {
    const int y0 = by * img.height / kFeatureGrid;
    const int y1 = std::max(y0 + 1, (by + 1) * img.height / kFeatureGrid);
    for (int bx = 0; bx < kFeatureGrid; ++bx) {
      const int x0 = bx * img.width / kFeatureGrid;
      const int x1 = std::max(x0 + 1, (bx + 1) * img.width / kFeatureGrid);
      const double count = static_cast<double>((y1 - y0) * (x1 - x0));
      for (int c = 0; c < img.channels; ++c) {
        double sum = 0.0;
        for (int y = y0; y < std::min(y1, img.height); ++y) {
          for (int x = x0; x < std::min(x1, img.width); ++x) sum += img.at(y, x, c);
        }
        f[(by * kFeatureGrid + bx) * img.channels + c] = sum / count;
      }
    }
  }
  return f;
}

namespace {

Eigen::MatrixXd make_projection(int dim, int channels) {
  const int features = kFeatureGrid * kFeatureGrid * channels;
  Rng rng(combine_seed(kProjectionSeed, static_cast<std::uint64_t>(dim) * 131 + channels));
  Eigen::MatrixXd p(dim, features);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < features; ++c) p(r, c) = rng.normal();
  }
  p.colwise() -= p.rowwise().mean();
  return p / std::sqrt(static_cast<double>(features));
}

}  // namespace

const Eigen::MatrixXd& feature_projection(int dim, int channels) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, Eigen::MatrixXd> cache;
  std::lock_guard lock(mutex);
  auto [it, inserted] = cache.try_emplace({dim, channels});
  if (inserted) it->second = make_projection(dim, channels);
  return it->second;
}

Eigen::VectorXd project_image(const ToyImage& img, int dim) {
  const Eigen::VectorXd v = feature_projection(dim, img.channels) * block_features(img);
  const double norm = v.norm();
  if (!(norm > 1e-12) || !std::isfinite(norm)) {
    fail(ErrorCode::DegenerateEmbedding, "image projects to the zero vector");
  }
  return v / norm;
}

ToyImage render_visual(const TokenVisual& visual, int height, int width, int channels) {
  ToyImage img(height, width, channels);
  for (int y = 0; y < height; ++y) {
    const double ny = (y + 0.5) / height;
    for (int x = 0; x < width; ++x) {
      const double nx = (x + 0.5) / width;
      for (int c = 0; c < channels; ++c) img.at(y, x, c) = visual.signal(nx, ny, c);
    }
  }
  return img;
}

}  // namespace coadapt
