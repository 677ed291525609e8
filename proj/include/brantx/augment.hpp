#pragma once

// Sampling augmentation: 2x upsampled and 1/2x downsampled copies of a patch.

#include "brantx/sigcore.hpp"

namespace brantx {

// Linear interpolation onto a grid twice as dense. Output k is the input at
// position k/2; the final sample repeats the last input value.
inline Matrix upsample2x(const Matrix& patch) {
  const Index m = patch.cols();
  require(m >= 2, "upsample2x: patch needs at least 2 samples");
  Matrix out(patch.rows(), 2 * m);
  for (Index i = 0; i < m; ++i) {
    out.col(2 * i) = patch.col(i);
    out.col(2 * i + 1) = i + 1 < m ? (0.5 * (patch.col(i) + patch.col(i + 1))).eval() : patch.col(i);
  }
  return out;
}

// Anti-alias cutoff of the decimator as a fraction of the output Nyquist.
inline constexpr double kDecimationCutoff = 0.45;

// FIR anti-alias (cutoff at 0.45 of the output Nyquist) then keep every
// second sample starting at index 0.
inline Matrix downsample2x(const Matrix& patch) {
  const Index m = patch.cols();
  require(m >= 4, "downsample2x: patch needs at least 4 samples");
  // Output Nyquist is a quarter of the input rate.
  static const std::vector<double> kernel = dsp::design_lowpass(kDecimationCutoff * 0.25);
  const Matrix filtered = dsp::filter_rows(patch, kernel);
  const Index n = m / 2;
  Matrix out(patch.rows(), n);
  for (Index i = 0; i < n; ++i) out.col(i) = filtered.col(2 * i);
  return out;
}

inline PatchGrid upsample2x(const PatchGrid& grid) {
  PatchGrid out;
  out.window_sec = grid.window_sec;
  out.rate_hz = grid.rate_hz * 2;
  for (const auto& p : grid.patches) out.patches.push_back(upsample2x(p));
  return out;
}

inline PatchGrid downsample2x(const PatchGrid& grid) {
  PatchGrid out;
  out.window_sec = grid.window_sec;
  out.rate_hz = grid.rate_hz / 2;
  for (const auto& p : grid.patches) out.patches.push_back(downsample2x(p));
  return out;
}

}  // namespace brantx
