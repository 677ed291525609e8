#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <fstream>

using namespace brantx;
using Catch::Matchers::ContainsSubstring;

namespace {

LabeledPair small_pair(Rng& rng, const std::string& id, std::optional<int> label) {
  LabeledPair p;
  p.pair_id = id;
  p.label = label;
  p.eeg.modality = Modality::EEG;
  p.eeg.rate_hz = 100;
  p.eeg.subject_id = "s1";
  p.eeg.channel_names = {"Fz", "Cz"};
  p.eeg.data = bxtest::random_matrix(2, 100, rng);
  p.exg.modality = Modality::ECG;
  p.exg.rate_hz = 200;
  p.exg.subject_id = "s1";
  p.exg.data = bxtest::random_matrix(1, 200, rng);
  return p;
}

DatasetError::Kind load_error_kind(const std::filesystem::path& dir) {
  try {
    load_dataset(dir);
  } catch (const DatasetError& e) {
    return e.kind();
  }
  FAIL("load_dataset accepted a corrupt dataset");
  return DatasetError::Kind::Malformed;
}

void edit_manifest(const std::filesystem::path& dir, const std::function<void(Json&)>& f) {
  Json m = Json::parse(bxtest::slurp(dir / "manifest.json"));
  f(m);
  std::ofstream(dir / "manifest.json") << m.dump(2);
}

}  // namespace

TEST_CASE("signal files are raw little-endian float32, channel-major", "[dataio]") {
  Rng rng(0);
  const auto dir = bxtest::scratch_dir("dio_layout");
  save_dataset({small_pair(rng, "a", 1)}, dir);
  CHECK(std::filesystem::file_size(dir / "signals/000000_eeg.f32") == 800);
  CHECK(std::filesystem::file_size(dir / "signals/000000_exg.f32") == 800);
  const Json m = Json::parse(bxtest::slurp(dir / "manifest.json"));
  CHECK(m.at("format") == "bx-dataset/1");
  CHECK(m.at("pairs")[0].at("eeg").at("layout") == "channel-major");
  std::filesystem::remove_all(dir);
}

TEST_CASE("datasets round-trip through float32", "[dataio]") {
  Rng rng(1);
  const auto dir = bxtest::scratch_dir("dio_round");
  const std::vector<LabeledPair> pairs{small_pair(rng, "a", 0), small_pair(rng, "b", std::nullopt)};
  save_dataset(pairs, dir);
  const auto back = load_dataset(dir / "manifest.json");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].pair_id == pairs[i].pair_id);
    CHECK(back[i].label == pairs[i].label);
    CHECK(back[i].eeg.channel_names == pairs[i].eeg.channel_names);
    CHECK(back[i].exg.modality == Modality::ECG);
    CHECK(back[i].exg.rate_hz == 200);
    const Matrix expect = pairs[i].eeg.data.cast<float>().cast<double>();
    CHECK(back[i].eeg.data == expect);
  }

  // A loaded dataset saves to identical bytes.
  const auto again = bxtest::scratch_dir("dio_round2");
  save_dataset(back, again);
  CHECK(bxtest::slurp(again / "manifest.json") == bxtest::slurp(dir / "manifest.json"));
  CHECK(bxtest::slurp(again / "signals/000001_exg.f32") == bxtest::slurp(dir / "signals/000001_exg.f32"));
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(again);
}

TEST_CASE("an empty manifest loads as an empty dataset", "[dataio]") {
  const auto dir = bxtest::scratch_dir("dio_empty");
  save_dataset({}, dir);
  CHECK(load_dataset(dir).empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt datasets are rejected with a typed error", "[dataio]") {
  Rng rng(2);
  const auto dir = bxtest::scratch_dir("dio_bad");
  auto reset = [&](LabeledPair p) {
    std::filesystem::remove_all(dir);
    save_dataset({std::move(p)}, dir);
  };

  SECTION("truncated signal file") {
    reset(small_pair(rng, "a", 0));
    std::filesystem::resize_file(dir / "signals/000000_eeg.f32", 796);
    CHECK(load_error_kind(dir) == DatasetError::Kind::SizeMismatch);
    CHECK_THROWS_WITH(load_dataset(dir), ContainsSubstring("796 bytes, expected 800"));
  }
  SECTION("unsupported format version") {
    reset(small_pair(rng, "a", 0));
    edit_manifest(dir, [](Json& m) { m["format"] = "bx-dataset/9"; });
    CHECK(load_error_kind(dir) == DatasetError::Kind::UnsupportedVersion);
  }
  SECTION("unknown modality") {
    reset(small_pair(rng, "a", 0));
    edit_manifest(dir, [](Json& m) { m["pairs"][0]["exg"]["modality"] = "EKG"; });
    CHECK(load_error_kind(dir) == DatasetError::Kind::UnknownModality);
    CHECK_THROWS_WITH(load_dataset(dir), ContainsSubstring("'EKG'"));
  }
  SECTION("mismatched durations") {
    LabeledPair p = small_pair(rng, "a", 0);
    p.exg.data = bxtest::random_matrix(1, 100, rng);  // 0.5 s against 1 s
    reset(p);
    CHECK(load_error_kind(dir) == DatasetError::Kind::InvalidRecording);
  }
  SECTION("non-finite samples") {
    LabeledPair p = small_pair(rng, "a", 0);
    p.eeg.data(1, 7) = std::numeric_limits<double>::quiet_NaN();
    reset(p);
    CHECK(load_error_kind(dir) == DatasetError::Kind::InvalidRecording);
    CHECK_THROWS_WITH(load_dataset(dir), ContainsSubstring("Cz"));
  }
  SECTION("missing fields") {
    reset(small_pair(rng, "a", 0));
    edit_manifest(dir, [](Json& m) { m["pairs"][0]["eeg"].erase("rate_hz"); });
    CHECK(load_error_kind(dir) == DatasetError::Kind::Malformed);
  }
  std::filesystem::remove_all(dir);
}
