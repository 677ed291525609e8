#pragma once

// Two-level EEG/EXG alignment.
//
// Patch level: EEG patch p[i,j] is the anchor, the simultaneous EXG patch
// q[i,j] the positive, and K negatives are drawn without replacement from
// EXG patches of *other* sequences in the batch. Sequence level: each
// sequence's P patch embeddings are flattened and projected to D_s, and the
// S x S similarity matrix is scored row-wise against its diagonal. Both use
// InfoNCE with the positive included in the denominator. Every level is
// evaluated against the original, 2x upsampled and 1/2x downsampled EXG, and
// the six terms are summed.

#include "brantx/augment.hpp"
#include "brantx/checkpoint.hpp"
#include "brantx/encoder.hpp"
#include "brantx/json_fields.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <vector>

namespace brantx {

// ---------------------------------------------------------------------------
// Configuration

struct AlignConfig {
  double lr_eeg = 1e-5;
  double lr_exg = 3e-4;
  int batch_sequences = 16;
  int negatives_per_anchor = 64;
  int epochs = 1;
  long max_steps = 0;  // 0: no cap
  std::uint64_t seed = 0;
  bool normalize_embeddings = true;
  bool symmetric_seq_loss = false;
  bool disable_patch_align = false;
  bool disable_seq_align = false;
  bool disable_sampling_aug = false;

  void validate() const {
    require(batch_sequences >= 2, "align: batch_sequences must be at least 2 (no negatives otherwise)");
    require(negatives_per_anchor >= 1, "align: negatives_per_anchor must be positive");
    require(epochs >= 0, "align: epochs must be non-negative");
    require(max_steps >= 0, "align: max_steps must be non-negative");
    require(lr_eeg >= 0 && lr_exg >= 0, "align: learning rates must be non-negative");
    require(!(disable_patch_align && disable_seq_align), "align: no active loss terms");
  }
};

struct ModelConfig {
  EncoderConfig encoder;
  int d_seq = 512;
  double t_patch = 0.07;
  double t_seq = 0.07;
  double window_sec = 3.0;
  double lowpass_hz = 45.0;  // <= 0 disables the low-pass

  void validate() const {
    encoder.validate();
    require(d_seq >= 1, "model: d_seq must be positive");
    require(t_patch > 0 && t_seq > 0, "model: temperatures must be positive");
    require(window_sec > 0, "model: window_sec must be positive");
  }
};

inline Json to_json(const EncoderConfig& c) {
  return {{"d_patch", c.d_patch},         {"conv_channels", c.conv_channels},
          {"conv_kernel", c.conv_kernel}, {"conv_stride", c.conv_stride},
          {"transformer_layers", c.transformer_layers}, {"attention_heads", c.attention_heads},
          {"ff_multiplier", c.ff_multiplier}, {"dropout", c.dropout},
          {"positional_encoding", c.positional_encoding}};
}

inline EncoderConfig encoder_config_from_json(const Json& j, EncoderConfig c = {}) {
  check_known_fields(j,
                     {"d_patch", "conv_channels", "conv_kernel", "conv_stride", "transformer_layers",
                      "attention_heads", "ff_multiplier", "dropout", "positional_encoding"},
                     "encoder config");
  read_field(j, "d_patch", c.d_patch);
  read_field(j, "conv_channels", c.conv_channels);
  read_field(j, "conv_kernel", c.conv_kernel);
  read_field(j, "conv_stride", c.conv_stride);
  read_field(j, "transformer_layers", c.transformer_layers);
  read_field(j, "attention_heads", c.attention_heads);
  read_field(j, "ff_multiplier", c.ff_multiplier);
  read_field(j, "dropout", c.dropout);
  read_field(j, "positional_encoding", c.positional_encoding);
  c.validate();
  return c;
}

inline Json to_json(const ModelConfig& c) {
  return {{"encoder", to_json(c.encoder)}, {"d_seq", c.d_seq},           {"t_patch", c.t_patch},
          {"t_seq", c.t_seq},              {"window_sec", c.window_sec}, {"lowpass_hz", c.lowpass_hz}};
}

inline ModelConfig model_config_from_json(const Json& j, ModelConfig c = {}) {
  check_known_fields(j, {"encoder", "d_seq", "t_patch", "t_seq", "window_sec", "lowpass_hz"}, "model config");
  if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"), c.encoder);
  read_field(j, "d_seq", c.d_seq);
  read_field(j, "t_patch", c.t_patch);
  read_field(j, "t_seq", c.t_seq);
  read_field(j, "window_sec", c.window_sec);
  read_field(j, "lowpass_hz", c.lowpass_hz);
  c.validate();
  return c;
}

inline Json to_json(const AlignConfig& c) {
  return {{"lr_eeg", c.lr_eeg},
          {"lr_exg", c.lr_exg},
          {"batch_sequences", c.batch_sequences},
          {"negatives_per_anchor", c.negatives_per_anchor},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"normalize_embeddings", c.normalize_embeddings},
          {"symmetric_seq_loss", c.symmetric_seq_loss},
          {"disable_patch_align", c.disable_patch_align},
          {"disable_seq_align", c.disable_seq_align},
          {"disable_sampling_aug", c.disable_sampling_aug}};
}

inline AlignConfig align_config_from_json(const Json& j, AlignConfig c = {}) {
  check_known_fields(j,
                     {"lr_eeg", "lr_exg", "batch_sequences", "negatives_per_anchor", "epochs", "max_steps",
                      "seed", "normalize_embeddings", "symmetric_seq_loss", "disable_patch_align",
                      "disable_seq_align", "disable_sampling_aug"},
                     "align config");
  read_field(j, "lr_eeg", c.lr_eeg);
  read_field(j, "lr_exg", c.lr_exg);
  read_field(j, "batch_sequences", c.batch_sequences);
  read_field(j, "negatives_per_anchor", c.negatives_per_anchor);
  read_field(j, "epochs", c.epochs);
  read_field(j, "max_steps", c.max_steps);
  read_field(j, "seed", c.seed);
  read_field(j, "normalize_embeddings", c.normalize_embeddings);
  read_field(j, "symmetric_seq_loss", c.symmetric_seq_loss);
  read_field(j, "disable_patch_align", c.disable_patch_align);
  read_field(j, "disable_seq_align", c.disable_seq_align);
  read_field(j, "disable_sampling_aug", c.disable_sampling_aug);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Preprocessing

// A pair after low-pass, z-score and patching, cut to the model's P.
struct PreparedPair {
  PatchGrid eeg;
  PatchGrid exg;
  std::optional<int> label;
  std::string pair_id;
  std::string subject_id;
};

inline Recording preprocess(const Recording& rec, double lowpass_hz) {
  Recording r = rec;
  if (lowpass_hz > 0 && lowpass_hz < rec.rate_hz / 2) r = lowpass(r, lowpass_hz);
  return zscore(r);
}

// Patch count both modalities of a pair support at this window.
inline Index common_patch_count(const LabeledPair& pair, double window_sec) {
  const Index me = patch_samples(window_sec, pair.eeg.rate_hz);
  const Index mx = patch_samples(window_sec, pair.exg.rate_hz);
  require(me >= 1 && mx >= 1, "window too short for the sampling rate");
  return std::min(pair.eeg.samples() / me, pair.exg.samples() / mx);
}

// patches <= 0 keeps every patch both modalities share.
inline PreparedPair prepare_pair(const LabeledPair& pair, const ModelConfig& cfg, Index patches = 0) {
  pair.validate();
  PreparedPair out;
  out.eeg = patchify(preprocess(pair.eeg, cfg.lowpass_hz), cfg.window_sec);
  out.exg = patchify(preprocess(pair.exg, cfg.lowpass_hz), cfg.window_sec);
  const Index common = std::min(out.eeg.count(), out.exg.count());
  const Index keep = patches > 0 ? patches : common;
  require(common >= keep, "pair " + pair.pair_id + " has " + std::to_string(common) +
                              " patches, model expects " + std::to_string(keep));
  out.eeg.patches.resize(keep);
  out.exg.patches.resize(keep);
  out.label = pair.label;
  out.pair_id = pair.pair_id;
  out.subject_id = pair.eeg.subject_id;
  return out;
}

inline std::vector<PreparedPair> prepare_pairs(const std::vector<LabeledPair>& pairs, const ModelConfig& cfg,
                                               Index patches) {
  std::vector<PreparedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(prepare_pair(p, cfg, patches));
  return out;
}

// ---------------------------------------------------------------------------
// Model

class AlignmentModel {
 public:
  AlignmentModel(ModelConfig cfg, std::shared_ptr<EegEncoder> eeg, Index eeg_channels, Index exg_channels,
                 Index patches, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        eeg_(std::move(eeg)),
        exg_(cfg_.encoder, exg_channels, mix_seed(seed, 1), "exg"),
        eeg_channels_(eeg_channels),
        patches_(patches) {
    cfg_.validate();
    require(patches_ >= 1, "model: patch count must be positive");
    if (eeg_)
      require(eeg_->output_dim() == cfg_.encoder.d_patch,
              "EEG encoder emits dimension " + std::to_string(eeg_->output_dim()) + " but the alignment head expects " +
                  std::to_string(cfg_.encoder.d_patch));
    const Index in = patches_ * cfg_.encoder.d_patch;
    Rng rng(mix_seed(seed, 2));
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    Matrix pe(cfg_.d_seq, in), px(cfg_.d_seq, in);
    for (Index i = 0; i < pe.size(); ++i) pe.data()[i] = dist(rng);
    for (Index i = 0; i < px.size(); ++i) px.data()[i] = dist(rng);
    proj_eeg_ = ag::Parameter("proj_eeg", std::move(pe));
    proj_exg_ = ag::Parameter("proj_exg", std::move(px));
  }

  // Model with the bundled stand-in EEG encoder.
  static AlignmentModel with_stand_in(const ModelConfig& cfg, Index eeg_channels, Index exg_channels,
                                      Index patches, std::uint64_t seed) {
    auto eeg = std::make_shared<TinyEegEncoder>(cfg.encoder, eeg_channels, mix_seed(seed, 0));
    return AlignmentModel(cfg, std::move(eeg), eeg_channels, exg_channels, patches, seed);
  }

  const ModelConfig& config() const { return cfg_; }
  Index patches() const { return patches_; }
  Index d_patch() const { return cfg_.encoder.d_patch; }
  Index eeg_channels() const { return eeg_channels_; }
  Index exg_channels() const { return exg_.in_channels(); }

  bool has_eeg() const { return static_cast<bool>(eeg_); }
  const EegEncoder& eeg() const {
    require(has_eeg(), "no EEG encoder is loaded");
    return *eeg_;
  }
  EegEncoder& eeg() {
    require(has_eeg(), "no EEG encoder is loaded");
    return *eeg_;
  }
  std::shared_ptr<EegEncoder> eeg_ptr() const { return eeg_; }
  void set_eeg(std::shared_ptr<EegEncoder> e) {
    require(!e || e->output_dim() == d_patch(), "EEG encoder dimension does not match the alignment head");
    eeg_ = std::move(e);
  }

  PatchEncoder& exg() { return exg_; }
  const PatchEncoder& exg() const { return exg_; }
  ag::Parameter& proj_eeg() { return proj_eeg_; }
  ag::Parameter& proj_exg() { return proj_exg_; }
  const ag::Parameter& proj_eeg() const { return proj_eeg_; }
  const ag::Parameter& proj_exg() const { return proj_exg_; }

  std::vector<ag::Parameter*> eeg_parameters() { return eeg_ ? eeg_->parameters() : std::vector<ag::Parameter*>{}; }

  // EXG encoder plus both sequence projections.
  std::vector<ag::Parameter*> exg_side_parameters() {
    auto out = exg_.parameters();
    out.push_back(&proj_eeg_);
    out.push_back(&proj_exg_);
    return out;
  }

  // All named tensors, in checkpoint order.
  std::vector<std::pair<std::string, const Matrix*>> named_tensors() const {
    std::vector<std::pair<std::string, const Matrix*>> out;
    if (eeg_)
      for (const ag::Parameter* p : std::as_const(*eeg_).parameters()) out.emplace_back("eeg." + p->name, &p->value);
    for (const ag::Parameter* p : exg_.parameters()) out.emplace_back(exg_.qualified(*p), &p->value);
    out.emplace_back("proj_eeg", &proj_eeg_.value);
    out.emplace_back("proj_exg", &proj_exg_.value);
    return out;
  }

  PatchEmbeddings encode_eeg(const PatchGrid& g) const { return eeg().encode(g); }
  PatchEmbeddings encode_exg(const PatchGrid& g) const { return exg_.encode(g); }

 private:
  ModelConfig cfg_;
  std::shared_ptr<EegEncoder> eeg_;
  PatchEncoder exg_;
  Index eeg_channels_ = 0;
  Index patches_ = 0;
  ag::Parameter proj_eeg_, proj_exg_;
};

inline PatchEmbeddings exg_encode(const PatchGrid& grid, const PatchEncoder& encoder) { return encoder.encode(grid); }
inline PatchEmbeddings eeg_encode(const PatchGrid& grid, const EegEncoder& encoder) { return encoder.encode(grid); }

// ---------------------------------------------------------------------------
// Losses

// Row r = i*P + j lists the K candidate rows (m*P + n, m != i) drawn as
// negatives for anchor r.
using NegativeTable = Eigen::MatrixXi;

inline NegativeTable sample_patch_negatives(Index sequences, Index patches, Index k, Rng& rng) {
  require(sequences >= 2, "patch InfoNCE needs at least 2 sequences");
  const Index available = (sequences - 1) * patches;
  require(k <= available, "patch InfoNCE: " + std::to_string(k) + " negatives requested but only " +
                              std::to_string(available) + " exist outside the anchor's sequence (short by " +
                              std::to_string(k - available) + ")");
  NegativeTable table(sequences * patches, k);
  std::vector<int> pool(static_cast<std::size_t>(available));
  for (Index i = 0; i < sequences; ++i)
    for (Index j = 0; j < patches; ++j) {
      std::size_t w = 0;
      for (Index m = 0; m < sequences; ++m)
        if (m != i)
          for (Index n = 0; n < patches; ++n) pool[w++] = static_cast<int>(m * patches + n);
      for (Index c = 0; c < k; ++c) {
        std::uniform_int_distribution<Index> pick(c, available - 1);
        std::swap(pool[c], pool[pick(rng)]);
        table(i * patches + j, c) = pool[c];
      }
    }
  return table;
}

// anchors, candidates: (S*P) x D_p. Mean over anchors of
// -log softmax([a.c_pos, a.c_neg...] / t)[0].
inline ag::Var patch_infonce(const ag::Var& anchors, const ag::Var& candidates, const NegativeTable& negatives,
                             double t, bool normalize) {
  require(anchors.rows() == candidates.rows() && anchors.cols() == candidates.cols(),
          "patch InfoNCE: anchor and candidate shapes differ");
  require(negatives.rows() == anchors.rows(), "patch InfoNCE: negative table does not match anchor count");
  require(t > 0, "patch InfoNCE: temperature must be positive");
  ag::Var a = normalize ? ag::l2_normalize_rows(anchors) : anchors;
  ag::Var c = normalize ? ag::l2_normalize_rows(candidates) : candidates;
  ag::Var sims = ag::scale(ag::matmul_nt(a, c), 1.0 / t);
  Eigen::MatrixXi idx(negatives.rows(), negatives.cols() + 1);
  for (Index r = 0; r < idx.rows(); ++r) {
    idx(r, 0) = static_cast<int>(r);
    idx.row(r).tail(negatives.cols()) = negatives.row(r);
  }
  return ag::cross_entropy_rows(ag::gather_cols(sims, idx), std::vector<int>(static_cast<std::size_t>(idx.rows()), 0));
}

inline double patch_infonce(const Matrix& anchors, const Matrix& candidates, const NegativeTable& negatives,
                            double t, bool normalize = true) {
  return patch_infonce(ag::constant(anchors), ag::constant(candidates), negatives, t, normalize).scalar();
}

inline double patch_infonce(const Matrix& anchors, const Matrix& candidates, Index patches, double t, Index k,
                            Rng& rng, bool normalize = true) {
  require(patches >= 1 && anchors.rows() % patches == 0, "patch InfoNCE: rows are not a multiple of P");
  const auto negs = sample_patch_negatives(anchors.rows() / patches, patches, k, rng);
  return patch_infonce(anchors, candidates, negs, t, normalize);
}

// Flattens each sequence's P x D_p block patch-major and applies proj
// (D_s x P*D_p). embeddings: (S*P) x D_p -> S x D_s.
inline ag::Var seq_project(const ag::Var& embeddings, const ag::Var& proj, Index patches) {
  require(proj.cols() == patches * embeddings.cols(),
          "seq_project: projection expects " + std::to_string(proj.cols()) + " inputs, embeddings flatten to " +
              std::to_string(patches * embeddings.cols()));
  return ag::matmul_nt(ag::flatten_groups(embeddings, patches), proj);
}

inline Vector seq_project(const Matrix& patch_embeddings, const Matrix& proj) {
  return seq_project(ag::constant(patch_embeddings), ag::constant(proj), patch_embeddings.rows()).value().row(0);
}

// Row-wise InfoNCE over the S x S similarity matrix; symmetric averages in
// the column-wise (EXG -> EEG) direction.
inline ag::Var seq_infonce(const ag::Var& eeg_seqs, const ag::Var& exg_seqs, double t, bool symmetric,
                           bool normalize) {
  require(eeg_seqs.rows() >= 2, "sequence InfoNCE needs at least 2 sequences");
  require(eeg_seqs.rows() == exg_seqs.rows() && eeg_seqs.cols() == exg_seqs.cols(),
          "sequence InfoNCE: EEG and EXG shapes differ");
  require(t > 0, "sequence InfoNCE: temperature must be positive");
  ag::Var a = normalize ? ag::l2_normalize_rows(eeg_seqs) : eeg_seqs;
  ag::Var b = normalize ? ag::l2_normalize_rows(exg_seqs) : exg_seqs;
  ag::Var sims = ag::scale(ag::matmul_nt(a, b), 1.0 / t);
  std::vector<int> diag(static_cast<std::size_t>(sims.rows()));
  std::iota(diag.begin(), diag.end(), 0);
  ag::Var rows = ag::cross_entropy_rows(sims, diag);
  if (!symmetric) return rows;
  return ag::scale(ag::add(rows, ag::cross_entropy_rows(ag::transpose(sims), diag)), 0.5);
}

inline double seq_infonce(const Matrix& eeg_seqs, const Matrix& exg_seqs, double t, bool symmetric = false,
                          bool normalize = true) {
  return seq_infonce(ag::constant(eeg_seqs), ag::constant(exg_seqs), t, symmetric, normalize).scalar();
}

struct LossTerms {
  double patch = 0, patch_up = 0, patch_down = 0;
  double seq = 0, seq_up = 0, seq_down = 0;
  double total = 0;
  ag::Var graph;  // scalar total, differentiable when tracked

  std::array<double, 6> terms() const { return {patch, patch_up, patch_down, seq, seq_up, seq_down}; }
};

// Encodes EEG once and EXG in its original, upsampled and downsampled forms,
// then sums the active patch- and sequence-level terms.
inline LossTerms total_loss(std::span<const PreparedPair* const> batch, const AlignmentModel& model,
                            const AlignConfig& cfg, Rng& rng, bool track_grad = false, bool train = false) {
  cfg.validate();
  require(batch.size() >= 2, "alignment batch needs at least 2 pairs");
  const Index p = model.patches();
  for (const PreparedPair* pr : batch)
    require(pr->eeg.count() == p && pr->exg.count() == p,
            "alignment batch is not homogeneous in P (pair " + pr->pair_id + ")");

  ForwardOptions eeg_opt{track_grad, train, &rng};
  ForwardOptions exg_opt{track_grad, train, &rng};
  std::vector<const PatchGrid*> eeg_grids, exg_grids;
  for (const PreparedPair* pr : batch) {
    eeg_grids.push_back(&pr->eeg);
    exg_grids.push_back(&pr->exg);
  }
  ag::Var eeg_emb = model.eeg().encode_batch(eeg_grids, eeg_opt);

  std::vector<ag::Var> exg_emb{model.exg().forward(exg_grids, exg_opt)};
  if (!cfg.disable_sampling_aug) {
    std::vector<PatchGrid> up, down;
    up.reserve(batch.size());
    down.reserve(batch.size());
    for (const PreparedPair* pr : batch) {
      up.push_back(upsample2x(pr->exg));
      down.push_back(downsample2x(pr->exg));
    }
    std::vector<const PatchGrid*> up_ptr, down_ptr;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      up_ptr.push_back(&up[i]);
      down_ptr.push_back(&down[i]);
    }
    exg_emb.push_back(model.exg().forward(up_ptr, exg_opt));
    exg_emb.push_back(model.exg().forward(down_ptr, exg_opt));
  }

  auto leaf = [track_grad](const ag::Parameter& prm) {
    return track_grad ? ag::param(const_cast<ag::Parameter&>(prm)) : ag::constant(prm.value);
  };

  LossTerms out;
  std::vector<ag::Var> parts;
  const Index s = static_cast<Index>(batch.size());
  if (!cfg.disable_patch_align) {
    for (std::size_t v = 0; v < exg_emb.size(); ++v) {
      const auto negs = sample_patch_negatives(s, p, cfg.negatives_per_anchor, rng);
      ag::Var l = patch_infonce(eeg_emb, exg_emb[v], negs, model.config().t_patch, cfg.normalize_embeddings);
      (v == 0 ? out.patch : v == 1 ? out.patch_up : out.patch_down) = l.scalar();
      parts.push_back(l);
    }
  }
  if (!cfg.disable_seq_align) {
    ag::Var s_eeg = seq_project(eeg_emb, leaf(model.proj_eeg()), p);
    ag::Var proj_exg = leaf(model.proj_exg());
    for (std::size_t v = 0; v < exg_emb.size(); ++v) {
      ag::Var s_exg = seq_project(exg_emb[v], proj_exg, p);
      ag::Var l = seq_infonce(s_eeg, s_exg, model.config().t_seq, cfg.symmetric_seq_loss, cfg.normalize_embeddings);
      (v == 0 ? out.seq : v == 1 ? out.seq_up : out.seq_down) = l.scalar();
      parts.push_back(l);
    }
  }
  ag::Var total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) total = ag::add(total, parts[i]);
  out.graph = total;
  out.total = total.scalar();
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct LossRecord {
  int epoch = 0;
  long step = 0;
  std::array<double, 6> terms{};
  double total = 0;
};

struct AlignResult {
  std::vector<LossRecord> trace;
  std::string rng_state;
  long steps = 0;
};

inline std::string rng_state_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void restore_rng(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (is.fail()) throw ValidationError("malformed rng state");
}

// Adam over two groups (EEG encoder at lr_eeg, everything else at lr_exg).
// Batches are reshuffled every epoch from the config seed; a trailing
// partial batch is dropped.
inline AlignResult train_align(const std::vector<PreparedPair>& data, AlignmentModel& model, const AlignConfig& cfg) {
  cfg.validate();
  require(static_cast<Index>(data.size()) >= cfg.batch_sequences,
          "align: dataset has " + std::to_string(data.size()) + " pairs, fewer than batch_sequences (" +
              std::to_string(cfg.batch_sequences) + ")");
  const Index available = (cfg.batch_sequences - 1) * model.patches();
  require(cfg.disable_patch_align || cfg.negatives_per_anchor <= available,
          "align: negatives_per_anchor (" + std::to_string(cfg.negatives_per_anchor) + ") exceeds the " +
              std::to_string(available) + " patches available outside each anchor's sequence");
  if (!cfg.disable_sampling_aug)
    for (const auto& pr : data)
      require(pr.exg.patch_length() >= 8, "align: EXG patches need at least 8 samples for sampling augmentation");

  Rng rng(cfg.seed);
  ag::Adam opt({{model.eeg_parameters(), cfg.lr_eeg}, {model.exg_side_parameters(), cfg.lr_exg}});
  AlignResult result;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_sequences);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start + bs <= order.size(); start += bs) {
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) break;
      std::vector<const PreparedPair*> batch;
      for (std::size_t i = start; i < start + bs; ++i) batch.push_back(&data[order[i]]);
      opt.zero_grad();
      LossTerms loss = total_loss(batch, model, cfg, rng, true, true);
      if (!std::isfinite(loss.total))
        throw NumericError("align: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(start / bs) + " (step " + std::to_string(result.steps) + ")");
      ag::backward(loss.graph);
      opt.step();
      result.trace.push_back({epoch, result.steps, loss.terms(), loss.total});
      ++result.steps;
    }
    if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) break;
  }
  result.rng_state = rng_state_string(rng);
  return result;
}

inline void write_loss_trace(const std::filesystem::path& path, const std::vector<LossRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "epoch,step,L_p,L_p',L_p'',L_s,L_s',L_s'',total\n";
  out.precision(17);
  for (const auto& r : trace) {
    out << r.epoch << ',' << r.step;
    for (double t : r.terms) out << ',' << t;
    out << ',' << r.total << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Checkpoints

inline Checkpoint make_checkpoint(const AlignmentModel& model, const AlignConfig& cfg, const std::string& rng_state) {
  Checkpoint ck;
  ck.meta["kind"] = "alignment";
  ck.meta["model"] = to_json(model.config());
  ck.meta["align"] = to_json(cfg);
  ck.meta["eeg_channels"] = model.eeg_channels();
  ck.meta["exg_channels"] = model.exg_channels();
  ck.meta["patches"] = model.patches();
  ck.meta["eeg_encoder"] = model.has_eeg() ? model.eeg().kind() : "none";
  ck.rng_state = rng_state;
  for (const auto& [name, m] : model.named_tensors()) ck.tensors.emplace_back(name, *m);
  return ck;
}

struct LoadedAlignment {
  AlignmentModel model;
  AlignConfig align;
  std::string rng_state;
};

// load_eeg = false leaves the model without an EEG encoder; any EEG encode
// then throws.
inline LoadedAlignment load_alignment(const Checkpoint& ck, bool load_eeg = true) {
  require(ck.meta.value("kind", "") == "alignment", "checkpoint is not an alignment checkpoint");
  const ModelConfig mc = model_config_from_json(ck.meta.at("model"));
  const AlignConfig ac = align_config_from_json(ck.meta.at("align"));
  const Index eeg_ch = ck.meta.at("eeg_channels").get<Index>();
  const Index exg_ch = ck.meta.at("exg_channels").get<Index>();
  const Index patches = ck.meta.at("patches").get<Index>();
  auto assign = [&](ag::Parameter& p, const std::string& name) {
    const Matrix& m = ck.tensor(name);
    require(m.rows() == p.value.rows() && m.cols() == p.value.cols(), "checkpoint tensor '" + name + "' has shape " +
                                                                          std::to_string(m.rows()) + "x" +
                                                                          std::to_string(m.cols()));
    p.value = m;
  };
  std::shared_ptr<EegEncoder> eeg;
  if (load_eeg) {
    require(ck.meta.value("eeg_encoder", "") == "tiny",
            "checkpoint EEG encoder kind '" + ck.meta.value("eeg_encoder", "") + "' cannot be restored from file");
    auto tiny = std::make_shared<TinyEegEncoder>(mc.encoder, eeg_ch, 0);
    for (ag::Parameter* p : tiny->parameters()) assign(*p, "eeg." + p->name);
    eeg = tiny;
  }
  AlignmentModel model(mc, eeg, eeg_ch, exg_ch, patches, 0);
  for (ag::Parameter* p : model.exg().parameters()) assign(*p, model.exg().qualified(*p));
  assign(model.proj_eeg(), "proj_eeg");
  assign(model.proj_exg(), "proj_exg");
  return {std::move(model), ac, ck.rng_state};
}

// ---------------------------------------------------------------------------
// Evaluation helpers

inline Matrix normalize_rows(const Matrix& m) {
  Vector n = m.rowwise().norm().cwiseMax(1e-12);
  return m.array().colwise() / n.array();
}

// The four P x P patch-similarity blocks between two pairs.
struct SimilarityBlocks {
  // 0: eeg_a/exg_a, 1: eeg_a/exg_b, 2: eeg_b/exg_a, 3: eeg_b/exg_b
  std::array<Matrix, 4> raw;         // cosine similarity
  std::array<Matrix, 4> normalized;  // jointly min-max scaled to [0, 1]
  std::array<std::string, 4> names;  // e.g. "eeg_a__exg_b"
  std::array<std::string, 4> rows;   // row provenance, e.g. "<pair_id>.eeg"
  std::array<std::string, 4> cols;
};

inline SimilarityBlocks similarity_matrix(const PreparedPair& a, const PreparedPair& b, const AlignmentModel& model) {
  const Matrix eeg_a = normalize_rows(model.encode_eeg(a.eeg).values);
  const Matrix eeg_b = normalize_rows(model.encode_eeg(b.eeg).values);
  const Matrix exg_a = normalize_rows(model.encode_exg(a.exg).values);
  const Matrix exg_b = normalize_rows(model.encode_exg(b.exg).values);
  SimilarityBlocks out;
  out.raw = {eeg_a * exg_a.transpose(), eeg_a * exg_b.transpose(), eeg_b * exg_a.transpose(),
             eeg_b * exg_b.transpose()};
  out.names = {"eeg_a__exg_a", "eeg_a__exg_b", "eeg_b__exg_a", "eeg_b__exg_b"};
  out.rows = {a.pair_id + ".eeg", a.pair_id + ".eeg", b.pair_id + ".eeg", b.pair_id + ".eeg"};
  out.cols = {a.pair_id + ".exg", b.pair_id + ".exg", a.pair_id + ".exg", b.pair_id + ".exg"};
  double lo = out.raw[0].minCoeff(), hi = out.raw[0].maxCoeff();
  for (const auto& m : out.raw) {
    lo = std::min(lo, m.minCoeff());
    hi = std::max(hi, m.maxCoeff());
  }
  const double span = hi - lo;
  for (std::size_t i = 0; i < 4; ++i)
    out.normalized[i] = span > 0 ? Matrix((out.raw[i].array() - lo) / span) : Matrix::Zero(out.raw[i].rows(), out.raw[i].cols());
  return out;
}

// Mean within-pair diagonal minus mean cross-pair entry, on the normalized
// blocks.
inline double similarity_contrast(const SimilarityBlocks& s) {
  const double diag = 0.5 * (s.normalized[0].diagonal().mean() + s.normalized[3].diagonal().mean());
  const double cross = 0.5 * (s.normalized[1].mean() + s.normalized[2].mean());
  return diag - cross;
}

// Sequence embeddings (S x D_s) for EEG and original EXG.
inline std::pair<Matrix, Matrix> sequence_embeddings(std::span<const PreparedPair* const> pairs,
                                                     const AlignmentModel& model) {
  std::vector<const PatchGrid*> eg, xg;
  for (const auto* p : pairs) {
    eg.push_back(&p->eeg);
    xg.push_back(&p->exg);
  }
  ag::Var e = model.eeg().encode_batch(eg);
  ag::Var x = model.exg().forward(xg);
  const Index p = model.patches();
  Matrix se = seq_project(e, ag::constant(model.proj_eeg().value), p).value();
  Matrix sx = seq_project(x, ag::constant(model.proj_exg().value), p).value();
  return {se, sx};
}

// Fraction of EEG sequences whose most similar EXG sequence within its batch
// is its own partner. Incomplete trailing batches are skipped.
inline double retrieval_top1(const std::vector<PreparedPair>& pairs, const AlignmentModel& model, Index batch = 16) {
  require(batch >= 2, "retrieval batch must hold at least 2 pairs");
  Index hits = 0, total = 0;
  for (std::size_t start = 0; start + batch <= pairs.size(); start += batch) {
    std::vector<const PreparedPair*> b;
    for (Index i = 0; i < batch; ++i) b.push_back(&pairs[start + i]);
    auto [se, sx] = sequence_embeddings(b, model);
    const Matrix sims = normalize_rows(se) * normalize_rows(sx).transpose();
    for (Index i = 0; i < batch; ++i) {
      Index best = 0;
      sims.row(i).maxCoeff(&best);
      hits += best == i;
      ++total;
    }
  }
  require(total > 0, "retrieval needs at least one full batch");
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace brantx
