#pragma once

// One-sided periodogram used as the frequency-domain input of the EXG encoder.
//
// Normalization: with a periodic Hann window w and DFT Y of (w * x),
//
//   psd[k] = c_k |Y_k|^2 / (M * sum(w^2)),   c_k = 1 for DC and Nyquist, else 2
//
// so the bins sum to sum((w x)^2) / sum(w^2), the window-compensated mean
// power of the patch. For a stationary signal that is an unbiased estimate of
// its mean power, and a resolved sinusoid of amplitude A peaks at A^2 / 3
// regardless of M.

#include "brantx/common.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace brantx {

inline std::vector<double> hann_periodic(Index m) {
  std::vector<double> w(m);
  for (Index n = 0; n < m; ++n) w[n] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * n / m);
  return w;
}

// Window-compensated mean power sum((w x)^2) / sum(w^2) of one channel; the
// quantity the PSD bins sum to.
inline double windowed_mean_power(const Eigen::Ref<const RowVector>& x) {
  const auto w = hann_periodic(x.size());
  double num = 0, den = 0;
  for (Index n = 0; n < x.size(); ++n) {
    num += (w[n] * x[n]) * (w[n] * x[n]);
    den += w[n] * w[n];
  }
  return num / den;
}

// patch: channels x M, M >= 4. Returns channels x (M/2 + 1).
inline Matrix psd(const Matrix& patch) {
  const Index m = patch.cols();
  require(m >= 4, "psd: patch needs at least 4 samples");
  const Index bins = m / 2 + 1;
  const auto w = hann_periodic(m);
  double wsq = 0;
  for (double v : w) wsq += v * v;
  const double norm = 1.0 / (static_cast<double>(m) * wsq);

  thread_local Eigen::FFT<double> fft;
  std::vector<double> buf(m);
  std::vector<std::complex<double>> spec;
  Matrix out(patch.rows(), bins);
  for (Index c = 0; c < patch.rows(); ++c) {
    for (Index n = 0; n < m; ++n) buf[n] = w[n] * patch(c, n);
    fft.fwd(spec, buf);
    for (Index k = 0; k < bins; ++k) {
      const bool edge = k == 0 || (m % 2 == 0 && k == m / 2);
      out(c, k) = (edge ? 1.0 : 2.0) * std::norm(spec[k]) * norm;
    }
  }
  return out;
}

}  // namespace brantx
