// brantx command-line tool.
//
//   brantx synth     --out DIR [synth flags | --config synth.json]
//   brantx align     --data DIR --out DIR [--config align.json] [flags]
//   brantx probe     --checkpoint CKPT --data DIR --mode MODE --out DIR
//   brantx eval      --checkpoint CKPT --head HEAD --data DIR --out DIR
//   brantx simmatrix --checkpoint CKPT --data DIR --pair-a ID --pair-b ID --out DIR
//   brantx replay    --record run.json --out DIR
//
// Exit status: 0 success, 1 invalid input or configuration, 2 runtime failure.

#include "brantx/brantx.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace brantx;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Hashing and the reproducibility record

std::string hex(const unsigned char* p, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < n; ++i) {
    s.push_back(digits[p[i] >> 4]);
    s.push_back(digits[p[i] & 15]);
  }
  return s;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
  }
  void update(std::string_view data) { EVP_DigestUpdate(ctx_.get(), data.data(), data.size()); }
  std::string hex_digest() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned n = 0;
    EVP_DigestFinal_ex(ctx_.get(), md, &n);
    return hex(md, n);
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::string sha256_file(const fs::path& p) {
  Sha256 h;
  h.update(detail::read_file(p));
  return h.hex_digest();
}

// Digest over every regular file below `dir`, in sorted relative-path order.
std::string sha256_tree(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "run.json") files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const auto& f : files) {
    h.update(f.generic_string());
    h.update("\n");
    h.update(sha256_file(dir / f));
    h.update("\n");
  }
  return h.hex_digest();
}

std::string sha256_any(const fs::path& p) { return fs::is_directory(p) ? sha256_tree(p) : sha256_file(p); }

struct RunRecord {
  Json j;
  fs::path out;

  RunRecord(const std::string& command, const std::vector<std::string>& argv, fs::path out_dir)
      : out(std::move(out_dir)) {
    j["tool"] = "brantx";
    j["version"] = kToolVersion;
    j["command"] = command;
    j["argv"] = argv;
    j["inputs"] = Json::object();
    j["outputs"] = Json::object();
  }
  void input(const std::string& key, const fs::path& p) {
    j["inputs"][key] = {{"path", fs::absolute(p).string()}, {"sha256", sha256_any(p)}};
  }
  void output(const std::string& name) { j["outputs"][name] = sha256_any(out / name); }
  void write() const { detail::write_file(out / "run.json", j.dump(2) + "\n"); }
};

// ---------------------------------------------------------------------------
// Input helpers

void require_exists(const std::string& path, const char* what) {
  if (path.empty()) throw ValidationError(std::string("missing ") + what);
  if (!fs::exists(path)) throw ValidationError(std::string(what) + " not found: " + path);
}

Json load_json_file(const std::string& path) {
  require_exists(path, "config file");
  try {
    return Json::parse(detail::read_file(path));
  } catch (const Json::exception& e) {
    throw ValidationError(path + ": not valid JSON: " + e.what());
  }
}

std::vector<LabeledPair> load_data(const std::string& path) {
  require_exists(path, "dataset");
  return load_dataset(path);
}

void prepare_out(const fs::path& out) {
  if (out.empty()) throw ValidationError("missing --out directory");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
}

struct SplitOptions {
  std::string mode = "subject";
  std::uint64_t seed = 0;

  Json json() const { return {{"mode", mode}, {"seed", seed}, {"ratios", {3, 1, 1}}}; }
};

void add_split_options(CLI::App* app, SplitOptions& s) {
  app->add_option("--split", s.mode, "train/val/test split: subject (3:1:1 by subject) or random (3:1:1 by pair)")
      ->check(CLI::IsMember({"subject", "random"}));
  app->add_option("--split-seed", s.seed, "seed for the train/val/test split");
}

SplitIndices make_split(const std::vector<LabeledPair>& pairs, const SplitOptions& s) {
  return s.mode == "subject" ? split_subject_independent(pairs, s.seed) : split_random(pairs.size(), s.seed);
}

const std::vector<std::size_t>& pick_part(const SplitIndices& s, const std::string& part) {
  if (part == "train") return s.train;
  if (part == "val") return s.val;
  return s.test;
}

Json pair_ids(const std::vector<LabeledPair>& pairs, const std::vector<std::size_t>& idx) {
  Json a = Json::array();
  for (std::size_t i : idx) a.push_back(pairs[i].pair_id);
  return a;
}

void write_json(const fs::path& p, const Json& j) { detail::write_file(p, j.dump(2) + "\n"); }

// Model geometry shared by every pair: patches both modalities support in
// the shortest pair.
Index dataset_patch_count(const std::vector<LabeledPair>& pairs, double window_sec) {
  require(!pairs.empty(), "dataset has no pairs");
  Index p = common_patch_count(pairs.front(), window_sec);
  for (const auto& pr : pairs) p = std::min(p, common_patch_count(pr, window_sec));
  require(p >= 2, "recordings are too short: fewer than 2 patches of " + std::to_string(window_sec) + " s");
  return p;
}

void write_matrix_csv(const fs::path& path, const Matrix& m, const std::string& row_prefix,
                      const std::string& col_prefix) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "row";
  for (Index c = 0; c < m.cols(); ++c) out << ',' << col_prefix << ".p" << c;
  out << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    out << row_prefix << ".p" << r;
    for (Index c = 0; c < m.cols(); ++c) out << ',' << m(r, c);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Subcommands

struct SynthArgs {
  std::string out, config;
  SynthConfig cfg;
  std::string modality = "ECG";
};

int cmd_synth(const SynthArgs& a, CLI::App* app, const std::vector<std::string>& argv) {
  SynthConfig cfg;
  if (!a.config.empty()) cfg = synth_config_from_json(load_json_file(a.config));
  auto given = [&](const char* name) { return app->get_option(name)->count() > 0; };
  if (given("--n-pairs")) cfg.n_pairs = a.cfg.n_pairs;
  if (given("--n-classes")) cfg.n_classes = a.cfg.n_classes;
  if (given("--eeg-channels")) cfg.eeg_channels = a.cfg.eeg_channels;
  if (given("--exg-channels")) cfg.exg_channels = a.cfg.exg_channels;
  if (given("--rate-eeg")) cfg.rate_eeg_hz = a.cfg.rate_eeg_hz;
  if (given("--rate-exg")) cfg.rate_exg_hz = a.cfg.rate_exg_hz;
  if (given("--duration")) cfg.duration_sec = a.cfg.duration_sec;
  if (given("--correlation")) cfg.correlation = a.cfg.correlation;
  if (given("--noise-sigma")) cfg.noise_sigma = a.cfg.noise_sigma;
  if (given("--seed")) cfg.seed = a.cfg.seed;
  if (given("--n-subjects")) cfg.n_subjects = a.cfg.n_subjects;
  if (given("--window")) cfg.window_sec = a.cfg.window_sec;
  if (given("--exg-modality")) {
    auto m = parse_modality(a.modality);
    require(m.has_value() && *m != Modality::EEG, "--exg-modality must be EOG, ECG or EMG");
    cfg.exg_modality = *m;
  }
  cfg.validate();
  prepare_out(a.out);
  RunRecord rec("synth", argv, a.out);
  if (!a.config.empty()) rec.input("config", a.config);
  save_dataset(generate(cfg), a.out);
  rec.j["config"] = to_json(cfg);
  rec.j["seed"] = cfg.seed;
  rec.output("manifest.json");
  rec.output("signals");
  rec.write();
  std::cout << "wrote " << cfg.n_pairs << " pairs to " << a.out << "\n";
  return 0;
}

struct AlignArgs {
  std::string data, out, config, encoder = "desk";
  AlignConfig cfg;
  SplitOptions split;
};

int cmd_align(const AlignArgs& a, CLI::App* app, const std::vector<std::string>& argv) {
  ModelConfig mc;
  mc.encoder = a.encoder == "full" ? EncoderConfig{} : EncoderConfig::desk();
  AlignConfig cfg;
  if (!a.config.empty()) {
    Json j = load_json_file(a.config);
    require(j.is_object(), "align config must be a JSON object");
    if (j.contains("model")) {
      mc = model_config_from_json(j["model"], mc);
      j.erase("model");
    }
    cfg = align_config_from_json(j);
  }
  auto given = [&](const char* name) { return app->get_option(name)->count() > 0; };
  if (given("--seed")) cfg.seed = a.cfg.seed;
  if (given("--epochs")) cfg.epochs = a.cfg.epochs;
  if (given("--max-steps")) cfg.max_steps = a.cfg.max_steps;
  if (given("--lr-eeg")) cfg.lr_eeg = a.cfg.lr_eeg;
  if (given("--lr-exg")) cfg.lr_exg = a.cfg.lr_exg;
  if (given("--batch")) cfg.batch_sequences = a.cfg.batch_sequences;
  if (given("--negatives")) cfg.negatives_per_anchor = a.cfg.negatives_per_anchor;
  if (given("--symmetric")) cfg.symmetric_seq_loss = true;
  if (given("--disable-patch-align")) cfg.disable_patch_align = true;
  if (given("--disable-seq-align")) cfg.disable_seq_align = true;
  if (given("--disable-sampling-aug")) cfg.disable_sampling_aug = true;
  cfg.validate();
  mc.validate();

  const auto pairs = load_data(a.data);
  const Index patches = dataset_patch_count(pairs, mc.window_sec);
  const SplitIndices split = make_split(pairs, a.split);
  const auto train = prepare_pairs(select(pairs, split.train), mc, patches);
  const auto test = prepare_pairs(select(pairs, split.test), mc, patches);
  prepare_out(a.out);
  RunRecord rec("align", argv, a.out);
  rec.input("data", a.data);
  if (!a.config.empty()) rec.input("config", a.config);

  AlignmentModel model = AlignmentModel::with_stand_in(mc, pairs.front().eeg.channels(), pairs.front().exg.channels(),
                                                       patches, cfg.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const AlignResult res = train_align(train, model, cfg);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  save_checkpoint(a.out + "/alignment.ckpt", make_checkpoint(model, cfg, res.rng_state));
  write_loss_trace(a.out + "/loss_trace.csv", res.trace);
  Json summary{{"steps", res.steps}, {"train_pairs", train.size()}, {"test_pairs", test.size()},
               {"patches", patches},  {"train_seconds", seconds}};
  if (!res.trace.empty()) {
    summary["initial_total_loss"] = res.trace.front().total;
    summary["final_total_loss"] = res.trace.back().total;
  }
  if (static_cast<Index>(test.size()) >= 16) summary["heldout_retrieval_top1"] = retrieval_top1(test, model, 16);
  write_json(a.out + "/align_summary.json", summary);

  rec.j["config"] = {{"model", to_json(mc)}, {"align", to_json(cfg)}, {"split", a.split.json()}};
  rec.j["seed"] = cfg.seed;
  rec.output("alignment.ckpt");
  rec.output("loss_trace.csv");
  rec.write();
  std::cout << "aligned " << res.steps << " steps in " << seconds << " s";
  if (!res.trace.empty()) std::cout << ", loss " << res.trace.front().total << " -> " << res.trace.back().total;
  std::cout << "\n";
  return 0;
}

struct ProbeArgs {
  std::string checkpoint, data, out, config, mode = "linear_probe";
  ProbeConfig cfg;
  SplitOptions split;
};

int cmd_probe(const ProbeArgs& a, CLI::App* app, const std::vector<std::string>& argv) {
  ProbeConfig cfg;
  if (!a.config.empty()) cfg = probe_config_from_json(load_json_file(a.config));
  auto given = [&](const char* name) { return app->get_option(name)->count() > 0; };
  if (given("--mode") || a.config.empty()) {
    auto m = parse_probe_mode(a.mode);
    require(m.has_value(), "unknown --mode '" + a.mode + "'");
    cfg.mode = *m;
  }
  if (given("--seed")) cfg.seed = a.cfg.seed;
  if (given("--lr")) cfg.lr = a.cfg.lr;
  if (given("--lr-encoder")) cfg.lr_encoder = a.cfg.lr_encoder;
  if (given("--max-epochs")) cfg.max_epochs = a.cfg.max_epochs;
  if (given("--max-steps")) cfg.max_steps = a.cfg.max_steps;
  if (given("--batch")) cfg.batch_size = a.cfg.batch_size;
  if (given("--patience")) cfg.patience = a.cfg.patience;
  if (given("--hidden")) cfg.hidden = a.cfg.hidden;
  if (given("--n-classes")) cfg.n_classes = a.cfg.n_classes;
  cfg.validate();

  require_exists(a.checkpoint, "checkpoint");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  // exg_only never loads the EEG encoder.
  LoadedAlignment loaded = load_alignment(ck, uses_eeg(cfg.mode));
  AlignmentModel& model = loaded.model;
  const auto pairs = load_data(a.data);
  const SplitIndices split = make_split(pairs, a.split);
  const ModelConfig& mc = model.config();
  const auto train = prepare_pairs(select(pairs, split.train), mc, model.patches());
  const auto val = prepare_pairs(select(pairs, split.val), mc, model.patches());
  const auto test = prepare_pairs(select(pairs, split.test), mc, model.patches());
  prepare_out(a.out);
  RunRecord rec("probe", argv, a.out);
  rec.input("checkpoint", a.checkpoint);
  rec.input("data", a.data);
  if (!a.config.empty()) rec.input("config", a.config);

  const ProbeResult res = train_probe(train, val, model, cfg);
  save_checkpoint(a.out + "/head.ckpt", make_head_checkpoint(res.head, cfg, &model));

  {
    std::ofstream h(a.out + "/probe_history.csv");
    if (!h) throw IoError("cannot write probe_history.csv in " + a.out);
    h.precision(17);
    h << "epoch,steps,train_loss,val_accuracy,val_macro_f1\n";
    for (const auto& e : res.history)
      h << e.epoch << ',' << e.steps << ',' << e.train_loss << ',' << e.val_accuracy << ',' << e.val_macro_f1 << '\n';
  }
  const ClassifyResult out = classify(test, model, res.head, cfg.mode);
  write_json(a.out + "/report.json", to_json(out.report));
  write_predictions_csv(a.out + "/predictions.csv", out.predictions);
  const Json summary{{"mode", std::string(to_string(cfg.mode))},
                     {"steps", res.steps},
                     {"best_epoch", res.best_epoch},
                     {"best_val_macro_f1", res.best_val_macro_f1},
                     {"test_accuracy", out.report.accuracy},
                     {"train_pairs", train.size()},
                     {"val_pairs", val.size()},
                     {"test_pairs", test.size()},
                     {"eeg_encoder_loaded", model.has_eeg()},
                     {"eeg_encoder_invocations", model.has_eeg() ? model.eeg().invocations() : 0}};
  write_json(a.out + "/probe_summary.json", summary);

  rec.j["config"] = {{"probe", to_json(cfg)}, {"split", a.split.json()}};
  rec.j["seed"] = cfg.seed;
  for (const char* f : {"head.ckpt", "report.json", "predictions.csv", "probe_history.csv"}) rec.output(f);
  rec.write();
  std::cout << to_string(cfg.mode) << ": test accuracy " << out.report.accuracy << ", kappa " << out.report.kappa
            << " (" << res.steps << " steps)\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, head, data, out, part = "test";
  SplitOptions split;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  require_exists(a.checkpoint, "checkpoint");
  require_exists(a.head, "head checkpoint");
  const Checkpoint head_ck = load_checkpoint(a.head);
  const LoadedHead head = load_head(head_ck);
  LoadedAlignment loaded = load_alignment(load_checkpoint(a.checkpoint), uses_eeg(head.probe.mode));
  apply_encoder_tensors(loaded.model, head_ck);
  const auto pairs = load_data(a.data);
  std::vector<std::size_t> idx;
  if (a.part == "all") {
    idx.resize(pairs.size());
    std::iota(idx.begin(), idx.end(), 0);
  } else {
    idx = pick_part(make_split(pairs, a.split), a.part);
  }
  const auto prepared = prepare_pairs(select(pairs, idx), loaded.model.config(), loaded.model.patches());
  prepare_out(a.out);
  RunRecord rec("eval", argv, a.out);
  rec.input("checkpoint", a.checkpoint);
  rec.input("head", a.head);
  rec.input("data", a.data);
  const ClassifyResult r = classify(prepared, loaded.model, head.head, head.probe.mode);
  write_json(a.out + "/report.json", to_json(r.report));
  write_predictions_csv(a.out + "/predictions.csv", r.predictions);
  rec.j["config"] = {{"part", a.part}, {"split", a.split.json()}, {"mode", std::string(to_string(head.probe.mode))}};
  rec.j["seed"] = a.split.seed;
  rec.output("report.json");
  rec.output("predictions.csv");
  rec.write();
  std::cout << "accuracy " << r.report.accuracy << ", macro-F1 " << r.report.macro_f1 << ", kappa " << r.report.kappa
            << " on " << prepared.size() << " pairs\n";
  return 0;
}

struct SimArgs {
  std::string checkpoint, data, out, pair_a, pair_b;
};

int cmd_simmatrix(const SimArgs& a, const std::vector<std::string>& argv) {
  require_exists(a.checkpoint, "checkpoint");
  LoadedAlignment loaded = load_alignment(load_checkpoint(a.checkpoint));
  const auto pairs = load_data(a.data);
  auto find = [&](const std::string& id) -> const LabeledPair& {
    for (const auto& p : pairs)
      if (p.pair_id == id) return p;
    throw ValidationError("pair id '" + id + "' not found in " + a.data);
  };
  const auto& model = loaded.model;
  const PreparedPair pa = prepare_pair(find(a.pair_a), model.config(), model.patches());
  const PreparedPair pb = prepare_pair(find(a.pair_b), model.config(), model.patches());
  prepare_out(a.out);
  RunRecord rec("simmatrix", argv, a.out);
  rec.input("checkpoint", a.checkpoint);
  rec.input("data", a.data);
  const SimilarityBlocks s = similarity_matrix(pa, pb, model);
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string name = "sim_" + s.names[i] + ".csv";
    write_matrix_csv(fs::path(a.out) / name, s.normalized[i], s.rows[i], s.cols[i]);
    rec.output(name);
  }
  const double contrast = similarity_contrast(s);
  write_json(a.out + "/simmatrix.json", {{"pair_a", a.pair_a},
                                         {"pair_b", a.pair_b},
                                         {"blocks", s.names},
                                         {"within_minus_cross", contrast}});
  rec.j["config"] = {{"pair_a", a.pair_a}, {"pair_b", a.pair_b}};
  rec.j["seed"] = nullptr;
  rec.write();
  std::cout << "within-pair diagonal minus cross-pair mean: " << contrast << "\n";
  return 0;
}

int run(std::vector<std::string> argv);

int cmd_replay(const std::string& record, const std::string& out) {
  const Json j = load_json_file(record);
  require(j.contains("argv") && j["argv"].is_array(), record + " has no argv");
  auto args = j["argv"].get<std::vector<std::string>>();
  require(!args.empty() && args.front() != "replay", record + " does not describe a replayable run");
  bool replaced = false;
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--out") {
      args[i + 1] = out;
      replaced = true;
    }
  if (!replaced) {
    args.push_back("--out");
    args.push_back(out);
  }
  return run(args);
}

// argv without the program name.
int run(std::vector<std::string> argv) {
  CLI::App app{"brantx: two-level EEG/EXG alignment, fusion probes and synthetic paired data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic paired dataset");
  synth->add_option("--out", sa.out, "output dataset directory")->required();
  synth->add_option("--config", sa.config, "JSON file with synth config fields");
  synth->add_option("--n-pairs", sa.cfg.n_pairs, "number of EEG/EXG pairs")->capture_default_str();
  synth->add_option("--n-classes", sa.cfg.n_classes, "number of latent classes")->capture_default_str();
  synth->add_option("--eeg-channels", sa.cfg.eeg_channels)->capture_default_str();
  synth->add_option("--exg-channels", sa.cfg.exg_channels)->capture_default_str();
  synth->add_option("--rate-eeg", sa.cfg.rate_eeg_hz, "EEG sampling rate (Hz)")->capture_default_str();
  synth->add_option("--rate-exg", sa.cfg.rate_exg_hz, "EXG sampling rate (Hz)")->capture_default_str();
  synth->add_option("--duration", sa.cfg.duration_sec, "seconds per recording")->capture_default_str();
  synth->add_option("--correlation", sa.cfg.correlation, "probability that EXG follows the EEG class")
      ->capture_default_str();
  synth->add_option("--noise-sigma", sa.cfg.noise_sigma, "white-noise standard deviation")->capture_default_str();
  synth->add_option("--seed", sa.cfg.seed)->capture_default_str();
  synth->add_option("--n-subjects", sa.cfg.n_subjects, "subjects assigned round-robin")->capture_default_str();
  synth->add_option("--window", sa.cfg.window_sec, "patch window used for the >= 2 patch check")
      ->capture_default_str();
  synth->add_option("--exg-modality", sa.modality, "EOG, ECG or EMG")->capture_default_str();

  AlignArgs aa;
  auto* align = app.add_subcommand("align", "train the EXG encoder against the EEG encoder");
  align->add_option("--data", aa.data, "dataset directory or manifest")->required();
  align->add_option("--out", aa.out, "output directory")->required();
  align->add_option("--config", aa.config, "JSON file with align config fields and an optional \"model\" object");
  align->add_option("--encoder", aa.encoder, "encoder width preset when no model config is given")
      ->check(CLI::IsMember({"desk", "full"}))
      ->capture_default_str();
  align->add_option("--seed", aa.cfg.seed);
  align->add_option("--epochs", aa.cfg.epochs);
  align->add_option("--max-steps", aa.cfg.max_steps, "step cap, 0 for none");
  align->add_option("--lr-eeg", aa.cfg.lr_eeg);
  align->add_option("--lr-exg", aa.cfg.lr_exg);
  align->add_option("--batch", aa.cfg.batch_sequences, "sequences per batch");
  align->add_option("--negatives", aa.cfg.negatives_per_anchor, "patch negatives per anchor");
  align->add_flag("--symmetric", "symmetric sequence-level loss");
  align->add_flag("--disable-patch-align");
  align->add_flag("--disable-seq-align");
  align->add_flag("--disable-sampling-aug");
  add_split_options(align, aa.split);

  ProbeArgs pa;
  auto* probe = app.add_subcommand("probe", "train a fusion head on an alignment checkpoint");
  probe->add_option("--checkpoint", pa.checkpoint, "alignment checkpoint")->required();
  probe->add_option("--data", pa.data, "dataset directory or manifest")->required();
  probe->add_option("--out", pa.out, "output directory")->required();
  probe->add_option("--config", pa.config, "JSON file with probe config fields");
  probe->add_option("--mode", pa.mode, "linear_probe, finetune, eeg_only or exg_only")
      ->check(CLI::IsMember({"linear_probe", "finetune", "eeg_only", "exg_only"}))
      ->capture_default_str();
  probe->add_option("--seed", pa.cfg.seed);
  probe->add_option("--lr", pa.cfg.lr, "head learning rate");
  probe->add_option("--lr-encoder", pa.cfg.lr_encoder, "encoder learning rate (finetune)");
  probe->add_option("--max-epochs", pa.cfg.max_epochs);
  probe->add_option("--max-steps", pa.cfg.max_steps, "step cap, 0 for none");
  probe->add_option("--batch", pa.cfg.batch_size);
  probe->add_option("--patience", pa.cfg.patience, "epochs without validation macro-F1 gain before stopping");
  probe->add_option("--hidden", pa.cfg.hidden, "classifier hidden width");
  probe->add_option("--n-classes", pa.cfg.n_classes, "0 infers from labels");
  add_split_options(probe, pa.split);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate a trained head");
  eval->add_option("--checkpoint", ea.checkpoint, "alignment checkpoint")->required();
  eval->add_option("--head", ea.head, "head checkpoint written by probe")->required();
  eval->add_option("--data", ea.data, "dataset directory or manifest")->required();
  eval->add_option("--out", ea.out, "output directory")->required();
  eval->add_option("--part", ea.part, "which split to score")
      ->check(CLI::IsMember({"train", "val", "test", "all"}))
      ->capture_default_str();
  add_split_options(eval, ea.split);

  SimArgs si;
  auto* sim = app.add_subcommand("simmatrix", "patch similarity blocks between two pairs");
  sim->add_option("--checkpoint", si.checkpoint, "alignment checkpoint")->required();
  sim->add_option("--data", si.data, "dataset directory or manifest")->required();
  sim->add_option("--pair-a", si.pair_a)->required();
  sim->add_option("--pair-b", si.pair_b)->required();
  sim->add_option("--out", si.out, "output directory")->required();

  std::string record, replay_out;
  auto* replay = app.add_subcommand("replay", "rerun the command recorded in a run.json");
  replay->add_option("--record", record, "run.json written by an earlier run")->required();
  replay->add_option("--out", replay_out, "output directory for the rerun")->required();

  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  if (synth->parsed()) return cmd_synth(sa, synth, argv);
  if (align->parsed()) return cmd_align(aa, align, argv);
  if (probe->parsed()) return cmd_probe(pa, probe, argv);
  if (eval->parsed()) return cmd_eval(ea, argv);
  if (sim->parsed()) return cmd_simmatrix(si, argv);
  if (replay->parsed()) return cmd_replay(record, replay_out);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return 2;
  }
}
