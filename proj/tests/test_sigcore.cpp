#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <complex>
#include <numbers>

using namespace brantx;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

Recording make_recording(Matrix data, double rate, std::string subject = "s0") {
  Recording r;
  r.data = std::move(data);
  r.rate_hz = rate;
  r.subject_id = std::move(subject);
  return r;
}

// |H(f)| of an FIR kernel at f cycles/sample.
double fir_gain(const std::vector<double>& h, double f) {
  std::complex<double> acc = 0;
  for (std::size_t n = 0; n < h.size(); ++n)
    acc += h[n] * std::polar(1.0, -2 * std::numbers::pi * f * static_cast<double>(n));
  return std::abs(acc);
}

}  // namespace

TEST_CASE("zscore matches hand-computed values", "[sigcore]") {
  Matrix x(1, 4);
  x << 0, 1, 2, 3;
  const Recording z = zscore(make_recording(x, 10));
  // mean 1.5, population sd sqrt(1.25) = sqrt(5) / 2
  CHECK_THAT(z.data(0, 0), WithinAbs(-3.0 / std::sqrt(5.0), 1e-12));
  CHECK_THAT(z.data(0, 3), WithinAbs(3.0 / std::sqrt(5.0), 1e-12));
  CHECK_THAT(z.data(0, 1), WithinAbs(-1.0 / std::sqrt(5.0), 1e-12));
}

TEST_CASE("zscore gives zero mean and unit population variance per channel", "[sigcore]") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix x = bxtest::random_matrix(3, 50 + trial, rng, 4.0);
    x.row(1).array() += 17.0;
    const Recording z = zscore(make_recording(x, 100));
    for (Index c = 0; c < 3; ++c) {
      const double mean = z.data.row(c).mean();
      const double var = (z.data.row(c).array() - mean).square().mean();
      CHECK_THAT(mean, WithinAbs(0.0, 1e-12));
      CHECK_THAT(var, WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("zscore zeroes flat channels and rejects non-finite input", "[sigcore]") {
  Matrix x(2, 5);
  x.row(0).setConstant(4.2);
  x.row(1) << 1, 2, 3, 4, 5;
  const Recording z = zscore(make_recording(x, 10));
  CHECK(z.data.row(0).isZero());

  Recording bad = make_recording(x, 10);
  bad.channel_names = {"Fz", "Cz"};
  bad.data(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH(zscore(bad), ContainsSubstring("Cz"));
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("patchify cuts by time window and drops the remainder", "[sigcore]") {
  Rng rng(1);
  SECTION("128 Hz and 256 Hz give 384- and 768-sample patches at 3 s") {
    const PatchGrid a = patchify(make_recording(bxtest::random_matrix(4, 3840, rng), 128), 3.0);
    const PatchGrid b = patchify(make_recording(bxtest::random_matrix(2, 7680, rng), 256), 3.0);
    CHECK(a.count() == 10);
    CHECK(a.patch_length() == 384);
    CHECK(b.count() == 10);
    CHECK(b.patch_length() == 768);
    CHECK(a.channels() == 4);
  }
  SECTION("remainder is discarded and patches tile the start of the signal") {
    const Matrix x = bxtest::random_matrix(2, 1000, rng);
    const PatchGrid g = patchify(make_recording(x, 128), 3.0);
    REQUIRE(g.count() == 2);
    for (Index j = 0; j < g.count(); ++j) CHECK(g.patches[j] == x.middleCols(j * 384, 384));
  }
  SECTION("window longer than the recording is rejected") {
    CHECK_THROWS_WITH(patchify(make_recording(bxtest::random_matrix(1, 100, rng), 128), 3.0),
                      ContainsSubstring("P = 0"));
  }
  SECTION("window below two samples is rejected") {
    CHECK_THROWS_AS(patchify(make_recording(bxtest::random_matrix(1, 100, rng), 1), 1.0), ValidationError);
  }
}

TEST_CASE("low-pass design meets its stop band and pass band", "[sigcore]") {
  const auto h = dsp::design_lowpass(45.0 / 500.0);
  REQUIRE(h.size() == 101);
  const double stop = fir_gain(h, 100.0 / 500.0);
  CHECK(20 * std::log10(stop) <= -40.0);
  CHECK_THAT(fir_gain(h, 10.0 / 500.0), WithinAbs(1.0, 1e-3));
  CHECK_THAT(fir_gain(h, 0.0), WithinAbs(1.0, 1e-12));
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == h[h.size() - 1 - i]);
}

TEST_CASE("lowpass removes a 100 Hz tone and keeps a 10 Hz tone", "[sigcore]") {
  const double rate = 500;
  Matrix x(2, 2000);
  for (Index n = 0; n < x.cols(); ++n) {
    x(0, n) = std::sin(2 * std::numbers::pi * 100 * n / rate);
    x(1, n) = std::sin(2 * std::numbers::pi * 10 * n / rate);
  }
  const Recording y = lowpass(make_recording(x, rate), 45);
  const auto mid = Eigen::seqN(200, 1600);
  const double rms_stop = std::sqrt(y.data(0, mid).array().square().mean());
  const double rms_pass = std::sqrt(y.data(1, mid).array().square().mean());
  CHECK(rms_stop / std::sqrt(0.5) < 0.01);
  CHECK_THAT(rms_pass / std::sqrt(0.5), WithinAbs(1.0, 2e-3));
}

TEST_CASE("lowpass rejects cutoffs outside (0, Nyquist)", "[sigcore]") {
  Rng rng(0);
  const Recording r = make_recording(bxtest::random_matrix(1, 300, rng), 100);
  CHECK_THROWS_AS(lowpass(r, 50), ValidationError);
  CHECK_THROWS_AS(lowpass(r, 0), ValidationError);
  CHECK_NOTHROW(lowpass(r, 49));
}

TEST_CASE("reflect_index stays in range and mirrors without repeating edges", "[sigcore]") {
  CHECK(dsp::reflect_index(-1, 5) == 1);
  CHECK(dsp::reflect_index(-2, 5) == 2);
  CHECK(dsp::reflect_index(5, 5) == 3);
  CHECK(dsp::reflect_index(6, 5) == 2);
  for (Index n = 1; n < 7; ++n)
    for (Index i = -40; i < 40; ++i) {
      const Index r = dsp::reflect_index(i, n);
      CHECK(r >= 0);
      CHECK(r < n);
    }
}

TEST_CASE("pair validation checks subject and duration agreement", "[sigcore]") {
  Rng rng(0);
  LabeledPair p;
  p.pair_id = "p";
  p.eeg = make_recording(bxtest::random_matrix(2, 1280, rng), 128);
  p.exg = make_recording(bxtest::random_matrix(1, 2560, rng), 256);
  CHECK_NOTHROW(p.validate());
  SECTION("one slow-rate sample of slack is allowed") {
    p.exg.data = bxtest::random_matrix(1, 2562, rng);
    CHECK_NOTHROW(p.validate());
  }
  SECTION("longer mismatches are rejected") {
    p.exg.data = bxtest::random_matrix(1, 2600, rng);
    CHECK_THROWS_WITH(p.validate(), ContainsSubstring("duration"));
  }
  SECTION("different subjects are rejected") {
    p.exg.subject_id = "other";
    CHECK_THROWS_WITH(p.validate(), ContainsSubstring("subject"));
  }
}

TEST_CASE("modality tags round-trip", "[sigcore]") {
  for (Modality m : {Modality::EEG, Modality::EOG, Modality::ECG, Modality::EMG})
    CHECK(parse_modality(to_string(m)) == m);
  CHECK_FALSE(parse_modality("XYZ").has_value());
}
