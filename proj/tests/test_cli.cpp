#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <fstream>

using namespace brantx;
namespace fs = std::filesystem;

namespace {

int cli(const std::string& args) {
  return bxtest::run_status(std::string("\"") + BRANTX_CLI_PATH + "\" " + args + " >/dev/null 2>&1");
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

Json read_json(const fs::path& p) { return Json::parse(bxtest::slurp(p)); }

const char* kSynthArgs =
    " --n-pairs 30 --n-subjects 10 --duration 6 --rate-eeg 64 --rate-exg 128"
    " --eeg-channels 2 --exg-channels 1 --seed 1";

// Miniature model so the pipeline runs in seconds.
const char* kAlignConfig = R"({
  "model": {"d_seq": 8, "encoder": {"d_patch": 8, "conv_channels": [2, 4], "transformer_layers": 1,
            "attention_heads": 2, "ff_multiplier": 2}},
  "batch_sequences": 4, "negatives_per_anchor": 4, "max_steps": 3
})";

}  // namespace

TEST_CASE("synth output is byte-reproducible", "[cli]") {
  const auto dir = bxtest::scratch_dir("cli_synth");
  REQUIRE(cli("synth --out " + q(dir / "a") + kSynthArgs) == 0);
  REQUIRE(cli("synth --out " + q(dir / "b") + kSynthArgs) == 0);
  CHECK(bxtest::slurp(dir / "a/manifest.json") == bxtest::slurp(dir / "b/manifest.json"));
  CHECK(bxtest::slurp(dir / "a/signals/000007_exg.f32") == bxtest::slurp(dir / "b/signals/000007_exg.f32"));
  const Json ra = read_json(dir / "a/run.json"), rb = read_json(dir / "b/run.json");
  CHECK(ra.at("outputs") == rb.at("outputs"));
  CHECK(ra.at("command") == "synth");
  CHECK(ra.at("config").at("n_pairs") == 30);
  fs::remove_all(dir);
}

TEST_CASE("CLI exit codes", "[cli]") {
  const auto dir = bxtest::scratch_dir("cli_codes");
  CHECK(cli("--help") == 0);
  CHECK(cli("align --help") == 0);
  CHECK(cli("synth --out " + q(dir / "x") + " --bogus-flag 3") == 1);
  CHECK(cli("align --data " + q(dir / "missing") + " --out " + q(dir / "o")) == 1);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK(cli("synth --out " + q(dir / "x") + " --config " + q(dir / "bad.json")) == 1);
  std::ofstream(dir / "neg.json") << R"({"correlation": 2})";
  CHECK(cli("synth --out " + q(dir / "x") + " --config " + q(dir / "neg.json")) == 1);
  CHECK(cli("probe --checkpoint a --data b") == 1);  // --out is required
  fs::remove_all(dir);
}

TEST_CASE("small pipeline: synth, align, probe, eval, simmatrix, replay", "[cli]") {
  const auto dir = bxtest::scratch_dir("cli_pipe");
  const auto data = dir / "data", al = dir / "align", pr = dir / "probe";
  std::ofstream(dir / "align.json") << kAlignConfig;
  REQUIRE(cli("synth --out " + q(data) + kSynthArgs) == 0);
  REQUIRE(cli("align --data " + q(data) + " --out " + q(al) + " --config " + q(dir / "align.json") + " --seed 2") == 0);

  const Json summary = read_json(al / "align_summary.json");
  CHECK(summary.at("steps") == 3);
  CHECK(summary.at("patches") == 2);
  CHECK(summary.at("train_pairs") == 18);  // 6 of 10 subjects, 3 pairs each
  const Json run = read_json(al / "run.json");
  CHECK(run.at("inputs").at("data").at("sha256").get<std::string>().size() == 64);
  CHECK(run.at("seed") == 2);

  SECTION("exg_only probe never loads the EEG encoder") {
    REQUIRE(cli("probe --checkpoint " + q(al / "alignment.ckpt") + " --data " + q(data) + " --out " + q(pr) +
                " --mode exg_only --max-epochs 2 --hidden 8 --n-classes 3") == 0);
    const Json ps = read_json(pr / "probe_summary.json");
    CHECK(ps.at("mode") == "exg_only");
    CHECK(ps.at("eeg_encoder_loaded") == false);
    CHECK(ps.at("eeg_encoder_invocations") == 0);
    const Json rep = read_json(pr / "report.json");
    CHECK(rep.at("confusion_matrix").size() == 3);
    CHECK(bxtest::slurp(pr / "predictions.csv").rfind("pair_id,label,prediction,score_0,score_1,score_2\n", 0) == 0);

    const auto ev = dir / "eval";
    REQUIRE(cli("eval --checkpoint " + q(al / "alignment.ckpt") + " --head " + q(pr / "head.ckpt") + " --data " +
                q(data) + " --out " + q(ev)) == 0);
    CHECK(bxtest::slurp(ev / "report.json") == bxtest::slurp(pr / "report.json"));
  }

  SECTION("simmatrix writes four normalized blocks") {
    const auto sm = dir / "sim";
    REQUIRE(cli("simmatrix --checkpoint " + q(al / "alignment.ckpt") + " --data " + q(data) +
                " --pair-a pair00000 --pair-b pair00001 --out " + q(sm)) == 0);
    for (const char* b : {"eeg_a__exg_a", "eeg_a__exg_b", "eeg_b__exg_a", "eeg_b__exg_b"})
      CHECK(fs::exists(sm / (std::string("sim_") + b + ".csv")));
    const Json sj = read_json(sm / "simmatrix.json");
    CHECK(sj.contains("within_minus_cross"));
    CHECK(cli("simmatrix --checkpoint " + q(al / "alignment.ckpt") + " --data " + q(data) +
              " --pair-a nope --pair-b pair00001 --out " + q(sm)) == 1);
  }

  SECTION("replay reproduces the alignment run") {
    const auto again = dir / "again";
    REQUIRE(cli("replay --record " + q(al / "run.json") + " --out " + q(again)) == 0);
    CHECK(bxtest::slurp(again / "loss_trace.csv") == bxtest::slurp(al / "loss_trace.csv"));
    CHECK(bxtest::slurp(again / "alignment.ckpt") == bxtest::slurp(al / "alignment.ckpt"));
  }
  fs::remove_all(dir);
}
