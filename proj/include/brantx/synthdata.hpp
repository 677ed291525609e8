#pragma once

// Paired EEG/EXG generator driven by a shared latent state.
//
// Each pair draws a latent class k, a frequency offset and a slow amplitude
// envelope. The EEG carries a sinusoid at 4 + 3k Hz (plus the offset); the
// EXG carries a sawtooth-like harmonic series at 2.5 + 2.5k Hz. Both follow
// the same envelope, so patches and sequences of one pair are identifiable
// across modalities. With probability 1 - correlation the EXG class is drawn
// independently of the EEG class. Every recording also contains weaker
// competing rhythms of the other classes, with amplitudes |N(0, 2 sigma)|,
// and white noise of standard deviation sigma. Labels are the EEG class.

#include "brantx/json_fields.hpp"
#include "brantx/sigcore.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

namespace brantx {

struct SynthConfig {
  int n_pairs = 300;
  int n_classes = 3;
  int eeg_channels = 4;
  int exg_channels = 2;
  double rate_eeg_hz = 128;
  double rate_exg_hz = 256;
  double duration_sec = 30;
  double correlation = 1.0;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
  int n_subjects = 20;
  Modality exg_modality = Modality::ECG;
  double window_sec = 3.0;  // only used to check that >= 2 patches exist

  static double eeg_class_hz(int k) { return 4.0 + 3.0 * k; }
  static double exg_class_hz(int k) { return 2.5 + 2.5 * k; }

  void validate() const {
    require(n_pairs >= 0, "synth: n_pairs must be non-negative");
    require(n_classes >= 2, "synth: n_classes must be at least 2");
    require(eeg_channels >= 1 && exg_channels >= 1, "synth: channel counts must be positive");
    require(rate_eeg_hz > 0 && rate_exg_hz > 0, "synth: rates must be positive");
    require(duration_sec > 0, "synth: duration must be positive");
    require(correlation >= 0 && correlation <= 1, "synth: correlation must lie in [0, 1]");
    require(noise_sigma >= 0, "synth: noise_sigma must be non-negative");
    require(n_subjects >= 1, "synth: n_subjects must be positive");
    require(eeg_class_hz(n_classes - 1) + 1 < rate_eeg_hz / 2,
            "synth: EEG class frequencies exceed the EEG Nyquist; lower n_classes or raise rate_eeg_hz");
    require(exg_class_hz(n_classes - 1) + 1 < rate_exg_hz / 2,
            "synth: EXG class frequencies exceed the EXG Nyquist; lower n_classes or raise rate_exg_hz");
    for (double rate : {rate_eeg_hz, rate_exg_hz}) {
      const Index m = patch_samples(window_sec, rate);
      require(m >= 2 && static_cast<Index>(std::floor(duration_sec * rate)) / m >= 2,
              "synth: duration and rates give fewer than 2 patches at window_sec " + std::to_string(window_sec));
    }
  }
};

inline Json to_json(const SynthConfig& c) {
  return {{"n_pairs", c.n_pairs},
          {"n_classes", c.n_classes},
          {"eeg_channels", c.eeg_channels},
          {"exg_channels", c.exg_channels},
          {"rate_eeg_hz", c.rate_eeg_hz},
          {"rate_exg_hz", c.rate_exg_hz},
          {"duration_sec", c.duration_sec},
          {"correlation", c.correlation},
          {"noise_sigma", c.noise_sigma},
          {"seed", c.seed},
          {"n_subjects", c.n_subjects},
          {"exg_modality", std::string(to_string(c.exg_modality))},
          {"window_sec", c.window_sec}};
}

inline SynthConfig synth_config_from_json(const Json& j, SynthConfig c = {}) {
  check_known_fields(j,
                     {"n_pairs", "n_classes", "eeg_channels", "exg_channels", "rate_eeg_hz", "rate_exg_hz",
                      "duration_sec", "correlation", "noise_sigma", "seed", "n_subjects", "exg_modality",
                      "window_sec"},
                     "synth config");
  read_field(j, "n_pairs", c.n_pairs);
  read_field(j, "n_classes", c.n_classes);
  read_field(j, "eeg_channels", c.eeg_channels);
  read_field(j, "exg_channels", c.exg_channels);
  read_field(j, "rate_eeg_hz", c.rate_eeg_hz);
  read_field(j, "rate_exg_hz", c.rate_exg_hz);
  read_field(j, "duration_sec", c.duration_sec);
  read_field(j, "correlation", c.correlation);
  read_field(j, "noise_sigma", c.noise_sigma);
  read_field(j, "seed", c.seed);
  read_field(j, "n_subjects", c.n_subjects);
  read_field(j, "window_sec", c.window_sec);
  if (j.contains("exg_modality")) {
    std::string tag;
    read_field(j, "exg_modality", tag);
    auto m = parse_modality(tag);
    require(m.has_value() && *m != Modality::EEG, "synth: exg_modality must be one of EOG, ECG, EMG");
    c.exg_modality = *m;
  }
  c.validate();
  return c;
}

struct SynthLatent {
  int eeg_class = 0;
  int exg_class = 0;
  double freq_offset_hz = 0;
};

struct SynthDataset {
  std::vector<LabeledPair> pairs;
  std::vector<SynthLatent> latents;
};

namespace detail {

struct Envelope {
  double freq_hz, phase, depth;
  double at(double t) const { return 1.0 + depth * std::sin(2 * std::numbers::pi * freq_hz * t + phase); }
};

inline Envelope draw_envelope(Rng& rng) {
  std::uniform_real_distribution<double> f(0.03, 0.12), ph(0, 2 * std::numbers::pi);
  const double freq = f(rng);
  return {freq, ph(rng), 0.5};
}

// Unit-amplitude sawtooth-like series (first harmonics up to 0.4 * rate).
inline double sawtooth(double fundamental_hz, double t, double phase, double rate_hz) {
  double v = 0;
  for (int m = 1; m <= 4; ++m) {
    if (m * fundamental_hz >= 0.4 * rate_hz) break;
    v += ((m % 2) ? 1.0 : -1.0) * std::sin(m * (2 * std::numbers::pi * fundamental_hz * t + phase)) / m;
  }
  return v;
}

// One modality: the pair's own rhythm for `cls` plus competing rhythms of
// the other classes.
inline Matrix synth_modality(bool eeg, int cls, double offset, const Envelope& env, Index channels, double rate,
                             Index samples, const SynthConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> gain(0.8, 1.2), phase(0, 2 * std::numbers::pi), off(-0.75, 0.75);
  std::normal_distribution<double> unit(0.0, 1.0);

  auto wave = [&](int k, double offset_hz, double t, double ph) {
    return eeg ? std::sin(2 * std::numbers::pi * (SynthConfig::eeg_class_hz(k) + offset_hz) * t + ph)
               : sawtooth(SynthConfig::exg_class_hz(k) + offset_hz, t, ph, rate);
  };

  struct Component {
    int cls;
    double amp, offset;
    Envelope env;
    std::vector<double> gains, phases;
  };
  std::vector<Component> comps;
  comps.push_back({cls, 1.0, offset, env, {}, {}});
  for (int k = 0; k < cfg.n_classes; ++k) {
    if (k == cls) continue;
    const double amp = 2.0 * cfg.noise_sigma * std::abs(unit(rng));
    const double o = off(rng);
    comps.push_back({k, amp, o, draw_envelope(rng), {}, {}});
  }
  for (auto& c : comps)
    for (Index ch = 0; ch < channels; ++ch) {
      c.gains.push_back(gain(rng));
      c.phases.push_back(phase(rng));
    }

  Matrix data(channels, samples);
  for (Index ch = 0; ch < channels; ++ch)
    for (Index n = 0; n < samples; ++n) {
      const double t = static_cast<double>(n) / rate;
      double v = 0;
      for (const auto& c : comps) {
        if (c.amp == 0) continue;
        v += c.amp * c.gains[ch] * c.env.at(t) * wave(c.cls, c.offset, t, c.phases[ch]);
      }
      data(ch, n) = v + cfg.noise_sigma * unit(rng);
    }
  return data;
}

inline std::vector<std::string> channel_names(const char* stem, Index n) {
  std::vector<std::string> out;
  for (Index i = 0; i < n; ++i) out.push_back(std::string(stem) + std::to_string(i + 1));
  return out;
}

}  // namespace detail

// Pair i is generated from its own sub-seed, so any range of pairs can be
// produced independently.
inline SynthDataset generate_with_latents(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset out;
  const Index l_eeg = static_cast<Index>(std::llround(cfg.duration_sec * cfg.rate_eeg_hz));
  const Index l_exg = static_cast<Index>(std::llround(cfg.duration_sec * cfg.rate_exg_hz));
  for (int i = 0; i < cfg.n_pairs; ++i) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    std::uniform_int_distribution<int> cls(0, cfg.n_classes - 1);
    std::bernoulli_distribution coupled(cfg.correlation);
    std::uniform_real_distribution<double> off(-0.75, 0.75);
    SynthLatent lat;
    lat.eeg_class = cls(rng);
    lat.exg_class = coupled(rng) ? lat.eeg_class : cls(rng);
    lat.freq_offset_hz = off(rng);
    const detail::Envelope env = detail::draw_envelope(rng);

    char subj[32], pid[32];
    std::snprintf(subj, sizeof subj, "subj%03d", i % cfg.n_subjects);
    std::snprintf(pid, sizeof pid, "pair%05d", i);

    LabeledPair pair;
    pair.pair_id = pid;
    pair.label = lat.eeg_class;
    pair.eeg.modality = Modality::EEG;
    pair.eeg.rate_hz = cfg.rate_eeg_hz;
    pair.eeg.subject_id = subj;
    pair.eeg.channel_names = detail::channel_names("EEG", cfg.eeg_channels);
    pair.eeg.data = detail::synth_modality(true, lat.eeg_class, lat.freq_offset_hz, env, cfg.eeg_channels,
                                           cfg.rate_eeg_hz, l_eeg, cfg, rng);
    pair.exg.modality = cfg.exg_modality;
    pair.exg.rate_hz = cfg.rate_exg_hz;
    pair.exg.subject_id = subj;
    pair.exg.channel_names = detail::channel_names(to_string(cfg.exg_modality).data(), cfg.exg_channels);
    pair.exg.data = detail::synth_modality(false, lat.exg_class, lat.freq_offset_hz, env, cfg.exg_channels,
                                           cfg.rate_exg_hz, l_exg, cfg, rng);
    out.pairs.push_back(std::move(pair));
    out.latents.push_back(lat);
  }
  return out;
}

inline std::vector<LabeledPair> generate(const SynthConfig& cfg) { return generate_with_latents(cfg).pairs; }

}  // namespace brantx
