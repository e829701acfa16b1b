#pragma once

// Reconstruction loss plus the mask-driven feature losses: intra-mask
// smoothness and (truncated) inter-mask contrast over per-mask mean features.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "igs/common.hpp"

namespace igs {

inline constexpr double kDefaultTau = 0.4;
inline constexpr double kDegeneratePairEps = 1e-8;

// One view of a mask stack: integer ids in [0, mask_count) or kNoMask.
struct MaskView {
  int width = 0;
  int height = 0;
  std::uint32_t mask_count = 0;
  std::vector<std::uint32_t> ids;          // row-major
  std::vector<std::uint32_t> mask_object;  // optional: source object per mask id

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  void validate() const {
    require(ids.size() == pixel_count(), ErrorKind::Data, "mask image size mismatch");
    for (std::uint32_t id : ids)
      require(id == kNoMask || id < mask_count, ErrorKind::Data, "mask id out of range");
  }
};

using MaskStack = std::vector<MaskView>;

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;  // same layout as the differentiated input
};

// Mean absolute error over all pixels and channels.
inline LossValue loss_rgb(const Image& rendered, const Image& target) {
  require(rendered.width == target.width && rendered.height == target.height &&
              rendered.channels == target.channels,
          ErrorKind::Usage, "loss_rgb: image shapes differ");
  LossValue out;
  out.grad.assign(rendered.data.size(), 0.0);
  if (rendered.data.empty()) return out;
  const double inv = 1.0 / static_cast<double>(rendered.data.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < rendered.data.size(); ++i) {
    const double d = rendered.data[i] - target.data[i];
    acc += std::abs(d);
    out.grad[i] = d > 0 ? inv : (d < 0 ? -inv : 0.0);
  }
  out.value = acc * inv;
  return out;
}

struct MaskMeans {
  std::vector<Feature> means;        // mask_count entries
  std::vector<std::size_t> counts;   // pixels per mask
  std::size_t masked_pixels = 0;
};

inline MaskMeans mask_means(const Image& feature_image, const MaskView& mask) {
  require(feature_image.width == mask.width && feature_image.height == mask.height &&
              feature_image.channels == static_cast<int>(kFeatureDim),
          ErrorKind::Usage, "feature image and mask dimensions differ");
  MaskMeans mm;
  mm.means.assign(mask.mask_count, Feature{});
  mm.counts.assign(mask.mask_count, 0);
  // Accumulate deviations from each mask's first pixel so that a mask of
  // identical features has a mean exactly equal to that feature.
  std::vector<Feature> shift(mask.mask_count, Feature{});
  for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
    const std::uint32_t id = mask.ids[p];
    if (id == kNoMask) continue;
    const auto f = feature_image.pixel(p);
    if (mm.counts[id] == 0)
      for (std::size_t k = 0; k < kFeatureDim; ++k) shift[id][k] = f[k];
    for (std::size_t k = 0; k < kFeatureDim; ++k) mm.means[id][k] += f[k] - shift[id][k];
    ++mm.counts[id];
    ++mm.masked_pixels;
  }
  for (std::uint32_t i = 0; i < mask.mask_count; ++i)
    if (mm.counts[i] > 0)
      for (std::size_t k = 0; k < kFeatureDim; ++k)
        mm.means[i][k] = shift[i][k] + mm.means[i][k] / static_cast<double>(mm.counts[i]);
  return mm;
}

enum class SmoothNormalization {
  MaskedPixels,  // divide by total masked pixel count
  PerMask,       // average of per-mask pixel means
  None,          // raw sum
};

// Intra-mask smoothness. The mask mean is held constant in the gradient; since
// deviations from a mean sum to zero this equals the exact gradient.
inline LossValue loss_smooth(const Image& feature_image, const MaskView& mask,
                             SmoothNormalization norm = SmoothNormalization::MaskedPixels) {
  const MaskMeans mm = mask_means(feature_image, mask);
  LossValue out;
  out.grad.assign(feature_image.data.size(), 0.0);
  if (mm.masked_pixels == 0) return out;

  std::size_t nonempty = 0;
  for (std::size_t c : mm.counts) nonempty += c > 0;
  double acc = 0.0;
  for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
    const std::uint32_t id = mask.ids[p];
    if (id == kNoMask) continue;
    double w = 1.0;
    if (norm == SmoothNormalization::MaskedPixels) w = 1.0 / static_cast<double>(mm.masked_pixels);
    if (norm == SmoothNormalization::PerMask)
      w = 1.0 / (static_cast<double>(mm.counts[id]) * static_cast<double>(nonempty));
    const auto f = feature_image.pixel(p);
    for (std::size_t k = 0; k < kFeatureDim; ++k) {
      const double d = f[k] - mm.means[id][k];
      acc += w * d * d;
      out.grad[p * kFeatureDim + k] = 2.0 * w * d;
    }
  }
  out.value = acc;
  return out;
}

struct ContrastResult {
  double value = 0.0;
  std::vector<Feature> grad;  // per mean feature
  std::size_t degenerate_pairs = 0;
};

// (1 / (m (m-1))) * sum_{i != j} [d_ij < tau] / d_ij with d_ij the squared
// distance. tau = +inf gives the untruncated form.
inline ContrastResult loss_contrast_truncated(std::span<const Feature> means, double tau = kDefaultTau) {
  require(tau > 0, ErrorKind::Usage, "tau must be positive");
  ContrastResult r;
  const std::size_t m = means.size();
  r.grad.assign(m, Feature{});
  if (m <= 1) return r;
  const double norm = 1.0 / (static_cast<double>(m) * static_cast<double>(m - 1));
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      const double d = squared_distance(means[i], means[j]);
      if (d < kDegeneratePairEps) {
        if (i < j) ++r.degenerate_pairs;
        continue;
      }
      if (!(d < tau)) continue;
      acc += 1.0 / d;
      // d/dM_i (1/d) = -2 (M_i - M_j) / d^2, mirrored for M_j
      const double s = -2.0 * norm / (d * d);
      for (std::size_t k = 0; k < kFeatureDim; ++k) {
        const double diff = means[i][k] - means[j][k];
        r.grad[i][k] += s * diff;
        r.grad[j][k] -= s * diff;
      }
    }
  }
  r.value = acc * norm;
  return r;
}

struct FeatureLossReport {
  double smooth = 0.0;
  double contrast = 0.0;
  std::size_t degenerate_pairs = 0;
  std::vector<Feature> means;  // non-empty masks only
  std::vector<double> grad;    // w.r.t. feature image, weighted sum
};

// lambda_s * smooth + lambda_c * contrast, with the contrast term chained
// through the mask means (d mean_i / d M_p = 1 / n_i).
inline FeatureLossReport feature_losses(const Image& feature_image, const MaskView& mask, double lambda_s,
                                        double lambda_c, double tau,
                                        SmoothNormalization norm = SmoothNormalization::MaskedPixels) {
  FeatureLossReport rep;
  LossValue sm = loss_smooth(feature_image, mask, norm);
  rep.smooth = sm.value;
  rep.grad = std::move(sm.grad);
  for (double& g : rep.grad) g *= lambda_s;

  const MaskMeans mm = mask_means(feature_image, mask);
  std::vector<std::uint32_t> compact(mask.mask_count, kNoMask);
  for (std::uint32_t i = 0; i < mask.mask_count; ++i)
    if (mm.counts[i] > 0) {
      compact[i] = static_cast<std::uint32_t>(rep.means.size());
      rep.means.push_back(mm.means[i]);
    }
  const ContrastResult c = loss_contrast_truncated(rep.means, tau);
  rep.contrast = c.value;
  rep.degenerate_pairs = c.degenerate_pairs;
  if (lambda_c != 0.0 && c.value != 0.0) {
    for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
      const std::uint32_t id = mask.ids[p];
      if (id == kNoMask) continue;
      const std::uint32_t ci = compact[id];
      const double inv = lambda_c / static_cast<double>(mm.counts[id]);
      for (std::size_t k = 0; k < kFeatureDim; ++k) rep.grad[p * kFeatureDim + k] += inv * c.grad[ci][k];
    }
  }
  return rep;
}

}  // namespace igs
