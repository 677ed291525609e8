#pragma once

// Core signal types, preprocessing and time-window patching.

#include "brantx/common.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace brantx {

enum class Modality { EEG, EOG, ECG, EMG };

inline std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::EEG: return "EEG";
    case Modality::EOG: return "EOG";
    case Modality::ECG: return "ECG";
    case Modality::EMG: return "EMG";
  }
  return "?";
}

inline std::optional<Modality> parse_modality(std::string_view s) {
  if (s == "EEG") return Modality::EEG;
  if (s == "EOG") return Modality::EOG;
  if (s == "ECG") return Modality::ECG;
  if (s == "EMG") return Modality::EMG;
  return std::nullopt;
}

// One modality's multi-channel signal. data is channels x samples.
struct Recording {
  Modality modality = Modality::EEG;
  double rate_hz = 1.0;
  Matrix data;
  std::string subject_id;
  std::vector<std::string> channel_names;

  Index channels() const { return data.rows(); }
  Index samples() const { return data.cols(); }
  double duration_sec() const { return static_cast<double>(samples()) / rate_hz; }

  std::string channel_label(Index c) const {
    if (c < static_cast<Index>(channel_names.size())) return channel_names[c];
    return "channel " + std::to_string(c);
  }

  // Throws ValidationError if the shape, rate or values are unusable.
  void validate() const {
    require(channels() >= 1, "recording has no channels");
    require(samples() >= 1, "recording has no samples");
    require(std::isfinite(rate_hz) && rate_hz > 0, "recording rate_hz must be positive");
    require(channel_names.empty() || static_cast<Index>(channel_names.size()) == channels(),
            "channel_names has " + std::to_string(channel_names.size()) + " entries for " +
                std::to_string(channels()) + " channels");
    for (Index c = 0; c < channels(); ++c) {
      if (!data.row(c).allFinite())
        throw ValidationError("non-finite sample in " + channel_label(c));
    }
  }
};

// A recording cut into P consecutive, non-overlapping patches of M samples.
// Each patch is channels x M.
struct PatchGrid {
  std::vector<Matrix> patches;
  double window_sec = 0;
  double rate_hz = 0;

  Index count() const { return static_cast<Index>(patches.size()); }
  Index channels() const { return patches.empty() ? 0 : patches.front().rows(); }
  Index patch_length() const { return patches.empty() ? 0 : patches.front().cols(); }
};

// Simultaneously recorded EEG and EXG with an optional class label.
struct LabeledPair {
  Recording eeg;
  Recording exg;
  std::optional<int> label;
  std::string pair_id;

  void validate() const {
    eeg.validate();
    exg.validate();
    require(eeg.subject_id == exg.subject_id,
            "pair " + pair_id + ": EEG and EXG subject ids differ");
    const double slow_period = 1.0 / std::min(eeg.rate_hz, exg.rate_hz);
    require(std::abs(eeg.duration_sec() - exg.duration_sec()) <= slow_period + 1e-12,
            "pair " + pair_id + ": EEG duration " + std::to_string(eeg.duration_sec()) +
                " s and EXG duration " + std::to_string(exg.duration_sec()) +
                " s differ by more than one sample period");
  }
};

// Per-channel z-score with the population (1/N) standard deviation.
// Channels whose std falls below eps become all zeros.
inline Recording zscore(const Recording& rec, double eps = 1e-8) {
  Recording out = rec;
  const double n = static_cast<double>(rec.samples());
  for (Index c = 0; c < rec.channels(); ++c) {
    auto row = rec.data.row(c);
    if (!row.allFinite()) throw ValidationError("zscore: non-finite sample in " + rec.channel_label(c));
    const double mean = row.sum() / n;
    const double var = (row.array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    if (sd < eps)
      out.data.row(c).setZero();
    else
      out.data.row(c) = (row.array() - mean) / sd;
  }
  return out;
}

namespace dsp {

inline constexpr int kFirTaps = 101;

// Hamming-windowed sinc low-pass with unit DC gain. cutoff is in cycles per
// sample, 0 < cutoff < 0.5.
inline std::vector<double> design_lowpass(double cutoff, int taps = kFirTaps) {
  require(taps % 2 == 1, "FIR tap count must be odd");
  require(cutoff > 0 && cutoff < 0.5, "FIR cutoff must lie in (0, 0.5) cycles/sample");
  std::vector<double> h(taps);
  const int mid = taps / 2;
  double sum = 0;
  for (int i = 0; i <= mid; ++i) {
    const double n = i - mid;
    const double sinc = n == 0 ? 2 * cutoff
                               : std::sin(2 * std::numbers::pi * cutoff * n) / (std::numbers::pi * n);
    const double w = 0.54 - 0.46 * std::cos(2 * std::numbers::pi * i / (taps - 1));
    h[i] = h[taps - 1 - i] = sinc * w;  // mirrored so the taps are exactly linear-phase
  }
  for (double v : h) sum += v;
  for (double& v : h) v /= sum;
  return h;
}

// Mirror index into [0, n) without repeating the edge sample, valid for any
// offset (the pattern repeats with period 2(n-1)).
inline Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// Zero-phase filtering with a symmetric kernel and reflection padding; the
// output has the input's length.
inline RowVector filter_symmetric(const Eigen::Ref<const RowVector>& x, const std::vector<double>& h) {
  const Index n = x.size();
  const Index taps = static_cast<Index>(h.size());
  const Index mid = taps / 2;
  RowVector padded(n + taps - 1);
  for (Index i = 0; i < padded.size(); ++i) padded[i] = x[reflect_index(i - mid, n)];
  RowVector y(n);
  for (Index t = 0; t < n; ++t) {
    double acc = 0;
    for (Index k = 0; k < taps; ++k) acc += h[k] * padded[t + k];
    y[t] = acc;
  }
  return y;
}

inline Matrix filter_rows(const Matrix& x, const std::vector<double>& h) {
  Matrix y(x.rows(), x.cols());
  for (Index c = 0; c < x.rows(); ++c) y.row(c) = filter_symmetric(x.row(c), h);
  return y;
}

}  // namespace dsp

// 101-tap linear-phase low-pass at cutoff_hz.
inline Recording lowpass(const Recording& rec, double cutoff_hz) {
  require(cutoff_hz > 0, "lowpass: cutoff must be positive");
  require(cutoff_hz < rec.rate_hz / 2,
          "lowpass: cutoff " + std::to_string(cutoff_hz) + " Hz is at or above Nyquist (" +
              std::to_string(rec.rate_hz / 2) + " Hz)");
  Recording out = rec;
  out.data = dsp::filter_rows(rec.data, dsp::design_lowpass(cutoff_hz / rec.rate_hz));
  return out;
}

inline Index patch_samples(double window_sec, double rate_hz) {
  return static_cast<Index>(std::llround(window_sec * rate_hz));
}

// Split into floor(L / M) patches of M = round(window_sec * rate_hz) samples;
// the trailing remainder is dropped.
inline PatchGrid patchify(const Recording& rec, double window_sec) {
  require(window_sec > 0, "patchify: window must be positive");
  const Index m = patch_samples(window_sec, rec.rate_hz);
  require(m >= 2, "patchify: window of " + std::to_string(window_sec) + " s gives " +
                      std::to_string(m) + " samples per patch at " + std::to_string(rec.rate_hz) +
                      " Hz; need at least 2");
  const Index p = rec.samples() / m;
  require(p >= 1, "patchify: window (" + std::to_string(m) + " samples) is longer than the recording (" +
                      std::to_string(rec.samples()) + " samples), P = 0");
  PatchGrid grid;
  grid.window_sec = window_sec;
  grid.rate_hz = rec.rate_hz;
  grid.patches.reserve(p);
  for (Index j = 0; j < p; ++j) grid.patches.emplace_back(rec.data.middleCols(j * m, m));
  return grid;
}

}  // namespace brantx
