#include "coadapt/attention_edit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coadapt/error.hpp"
#include "coadapt/rng.hpp"

namespace coadapt {

Eigen::VectorXd AttentionStack::token_mass() const {
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(tokens());
  for (const auto& m : maps) mass += m.colwise().sum().transpose();
  if (!maps.empty() && pixels() > 0) mass /= static_cast<double>(steps() * pixels());
  return mass;
}

AttentionMap AttentionStack::mean_map() const {
  AttentionMap mean = AttentionMap::Zero(pixels(), tokens());
  for (const auto& m : maps) mean += m;
  if (!maps.empty()) mean /= static_cast<double>(steps());
  return mean;
}

bool AttentionStack::operator==(const AttentionStack& other) const {
  if (maps.size() != other.maps.size()) return false;
  for (std::size_t t = 0; t < maps.size(); ++t) {
    if (maps[t].rows() != other.maps[t].rows() || maps[t].cols() != other.maps[t].cols() ||
        maps[t] != other.maps[t]) {
      return false;
    }
  }
  return true;
}

void EditController::validate(int generation_steps) const {
  if (tau_inj < 0 || tau_inj > generation_steps) {
    fail(ErrorCode::OutOfRange, "tau_inj outside [0, T_gen]");
  }
  if (!(scale >= -2.0 && scale <= 2.0)) fail(ErrorCode::OutOfRange, "scale outside [-2, 2]");
  if (!(eta_map > 0.0 && eta_align > 0.0 && eta_c > 0.0)) {
    fail(ErrorCode::OutOfRange, "ascent step sizes must be positive");
  }
  if (ascent_steps < 0 || coords_per_step < 1) {
    fail(ErrorCode::OutOfRange, "ascent_steps must be >= 0 and coords_per_step >= 1");
  }
}

SoftAlignment SoftAlignment::from_hard(const AlignmentMap& map, std::size_t old_size) {
  SoftAlignment s;
  s.weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(map.size()),
                                    static_cast<Eigen::Index>(old_size + 1));
  for (std::size_t j = 0; j < map.size(); ++j) {
    const auto& a = map.entries[j];
    if (a && *a >= old_size) fail(ErrorCode::DimError, "alignment index past old prompt");
    s.weights(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(a ? *a : old_size)) = 1.0;
  }
  return s;
}

AlignmentMap SoftAlignment::decode() const {
  AlignmentMap map;
  map.entries.resize(new_size());
  for (Eigen::Index j = 0; j < weights.rows(); ++j) {
    Eigen::Index best = 0;
    weights.row(j).maxCoeff(&best);
    if (static_cast<std::size_t>(best) < old_size()) map.entries[j] = static_cast<std::size_t>(best);
  }
  return map;
}

AttentionMap edit_word_swap(const AttentionMap& fresh, const AttentionMap& injected, int step,
                            int tau_inj) {
  if (fresh.rows() != injected.rows() || fresh.cols() != injected.cols()) {
    fail(ErrorCode::DimError, "word swap maps differ in shape");
  }
  return step < tau_inj ? injected : fresh;
}

AttentionMap edit_add_phrase(const AttentionMap& source, const AttentionMap& fresh,
                             const AlignmentMap& alignment) {
  if (source.rows() != fresh.rows() ||
      static_cast<std::size_t>(fresh.cols()) != alignment.size()) {
    fail(ErrorCode::DimError, "add-phrase maps do not match the alignment");
  }
  AttentionMap out(fresh.rows(), fresh.cols());
  for (std::size_t j = 0; j < alignment.size(); ++j) {
    const auto& a = alignment.entries[j];
    const auto col = static_cast<Eigen::Index>(j);
    if (!a) {
      out.col(col) = fresh.col(col);
    } else {
      if (*a >= static_cast<std::size_t>(source.cols())) {
        fail(ErrorCode::DimError, "alignment index past source map");
      }
      out.col(col) = source.col(static_cast<Eigen::Index>(*a));
    }
  }
  return out;
}

AttentionMap edit_add_phrase_soft(const AttentionMap& source, const AttentionMap& fresh,
                                  const SoftAlignment& alignment) {
  if (source.rows() != fresh.rows() ||
      static_cast<std::size_t>(fresh.cols()) != alignment.new_size() ||
      static_cast<std::size_t>(source.cols()) != alignment.old_size()) {
    fail(ErrorCode::DimError, "soft alignment does not match the maps");
  }
  const Eigen::Index n_old = source.cols();
  AttentionMap out = source * alignment.weights.leftCols(n_old).transpose();
  out += fresh * alignment.weights.col(n_old).asDiagonal();
  return out;
}

AttentionMap edit_reweight(const AttentionMap& map, std::size_t j_star, double c) {
  if (!(c >= -2.0 && c <= 2.0)) fail(ErrorCode::OutOfRange, "re-weight scale outside [-2, 2]");
  if (j_star >= static_cast<std::size_t>(map.cols())) {
    fail(ErrorCode::DimError, "re-weight column out of range");
  }
  AttentionMap out = map;
  out.col(static_cast<Eigen::Index>(j_star)) *= c;
  return out;
}

namespace {

template <typename Row>
void project_row(Row&& row) {
  const Eigen::Index n = row.size();
  std::vector<double> sorted(row.data(), row.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) theta = candidate;
  }
  for (Eigen::Index k = 0; k < n; ++k) row[k] = std::max(row[k] - theta, 0.0);
}

template <typename Matrix>
void project_all_rows(Matrix& m) {
  // Row-major copy so each row is contiguous regardless of the storage order.
  AttentionMap rows = m;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) project_row(rows.row(r));
  m = rows;
}

double checked(double value) {
  if (!std::isfinite(value)) fail(ErrorCode::RewardError, "reward is not finite");
  return value;
}

std::vector<Eigen::Index> sample_coordinates(Eigen::Index total, int k, Rng& rng) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(total));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  if (k >= total) return all;
  // Partial Fisher-Yates: first k entries become a uniform sample.
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(total - i)));
    std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
  }
  all.resize(static_cast<std::size_t>(k));
  std::sort(all.begin(), all.end());
  return all;
}

template <typename Matrix, typename Reward>
void coordinate_ascent(Matrix& m, const Reward& reward, double eta, int steps,
                       const CoordinateSampling& sampling) {
  if (steps <= 0) return;
  checked(reward(m));
  Rng rng(sampling.seed);
  const Eigen::Index cols = m.cols();
  for (int s = 0; s < steps; ++s) {
    const auto coords = sample_coordinates(m.size(), sampling.coords_per_step, rng);
    std::vector<double> grads(coords.size());
    for (std::size_t k = 0; k < coords.size(); ++k) {
      double& entry = m(coords[k] / cols, coords[k] % cols);
      const double saved = entry;
      entry = saved + kMapFdStep;
      const double up = checked(reward(m));
      entry = saved - kMapFdStep;
      const double down = checked(reward(m));
      entry = saved;
      grads[k] = (up - down) / (2.0 * kMapFdStep);
    }
    for (std::size_t k = 0; k < coords.size(); ++k) {
      m(coords[k] / cols, coords[k] % cols) += eta * grads[k];
    }
    project_all_rows(m);
    if (!m.allFinite()) fail(ErrorCode::RewardError, "ascent produced non-finite entries");
  }
}

}  // namespace

void project_rows_to_simplex(AttentionMap& m) { project_all_rows(m); }
void project_rows_to_simplex(Eigen::MatrixXd& m) { project_all_rows(m); }

double ascend_scale(double c0, const ScaleReward& reward, double eta, int steps) {
  double c = std::clamp(c0, -2.0, 2.0);
  if (steps <= 0) return c0;
  checked(reward(c));
  for (int s = 0; s < steps; ++s) {
    const double hi = std::min(c + kScaleFdStep, 2.0);
    const double lo = std::max(c - kScaleFdStep, -2.0);
    const double grad = (checked(reward(hi)) - checked(reward(lo))) / (hi - lo);
    c = std::clamp(c + eta * grad, -2.0, 2.0);
  }
  return c;
}

AttentionMap ascend_map(AttentionMap map, const MapReward& reward, double eta, int steps,
                        const CoordinateSampling& sampling) {
  coordinate_ascent(map, reward, eta, steps, sampling);
  return map;
}

SoftAlignment ascend_alignment(SoftAlignment alignment, const AlignmentReward& reward, double eta,
                               int steps, const CoordinateSampling& sampling) {
  SoftAlignment probe = alignment;
  auto wrapped = [&](const Eigen::MatrixXd& w) {
    probe.weights = w;
    return reward(probe);
  };
  coordinate_ascent(alignment.weights, wrapped, eta, steps, sampling);
  return alignment;
}

}  // namespace coadapt
