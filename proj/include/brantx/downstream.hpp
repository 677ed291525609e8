#pragma once

// Attention fusion of EEG and EXG patch tokens, classification heads, probe
// training and data splits.
//
// A FusionHead scores every token with a learned query against key-projected
// tokens (single head, scaled by 1/sqrt(D)), pools the value-projected tokens
// with the softmax weights and feeds the pooled vector to a two-layer
// perceptron. Fusion sees the 2P tokens of a pair; single-modality modes
// attend over that modality's P tokens only.

#include "brantx/align.hpp"
#include "brantx/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

namespace brantx {

// ---------------------------------------------------------------------------
// Fusion head

struct FusionHead {
  ag::Parameter query;       // 1 x D
  ag::Parameter key_proj;    // D x D
  ag::Parameter value_proj;  // D x D
  ag::Parameter w1, b1;      // D x H, 1 x H
  ag::Parameter w2, b2;      // H x n, 1 x n

  Index dim() const { return query.value.cols(); }
  Index hidden() const { return w1.value.cols(); }
  int n_classes() const { return static_cast<int>(w2.value.cols()); }

  static FusionHead create(Index d, Index hidden, int n_classes, std::uint64_t seed) {
    require(d >= 1 && hidden >= 1, "fusion head: dimensions must be positive");
    require(n_classes >= 2, "fusion head: need at least 2 classes");
    Rng rng(seed);
    auto normal = [&rng](Index r, Index c, double sd) {
      std::normal_distribution<double> dist(0.0, sd);
      Matrix m(r, c);
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
      return m;
    };
    const double sd_d = 1.0 / std::sqrt(static_cast<double>(d));
    FusionHead h;
    h.query = ag::Parameter("query", normal(1, d, sd_d));
    h.key_proj = ag::Parameter("key_proj", normal(d, d, sd_d));
    h.value_proj = ag::Parameter("value_proj", normal(d, d, sd_d));
    h.w1 = ag::Parameter("w1", normal(d, hidden, sd_d));
    h.b1 = ag::Parameter("b1", Matrix::Zero(1, hidden));
    h.w2 = ag::Parameter("w2", normal(hidden, n_classes, 1.0 / std::sqrt(static_cast<double>(hidden))));
    h.b2 = ag::Parameter("b2", Matrix::Zero(1, n_classes));
    return h;
  }

  std::vector<ag::Parameter*> parameters() { return {&query, &key_proj, &value_proj, &w1, &b1, &w2, &b2}; }
  std::vector<const ag::Parameter*> parameters() const {
    return {&query, &key_proj, &value_proj, &w1, &b1, &w2, &b2};
  }
};

namespace detail {
inline ag::Var head_leaf(const ag::Parameter& p, bool track) {
  return track ? ag::param(const_cast<ag::Parameter&>(p)) : ag::constant(p.value);
}
}  // namespace detail

// tokens: (B*T) x D, T tokens per item. Returns attention logits, B x T.
inline ag::Var attention_logits(const ag::Var& tokens, Index t, const FusionHead& head, bool track = false) {
  require(t >= 1, "fusion: need at least one token (P = 0)");
  require(tokens.cols() == head.dim(), "fusion: token dimension " + std::to_string(tokens.cols()) +
                                           " does not match the head's " + std::to_string(head.dim()));
  require(tokens.rows() % t == 0, "fusion: token rows are not a multiple of the token count");
  ag::Var keys = ag::matmul(tokens, detail::head_leaf(head.key_proj, track));
  ag::Var scores = ag::matmul_nt(keys, detail::head_leaf(head.query, track));
  return ag::flatten_groups(ag::scale(scores, 1.0 / std::sqrt(static_cast<double>(head.dim()))), t);
}

// Pooled representation, B x D.
inline ag::Var fuse_tokens(const ag::Var& tokens, Index t, const FusionHead& head, bool track = false) {
  ag::Var logits = attention_logits(tokens, t, head, track);
  ag::Var values = ag::matmul(tokens, detail::head_leaf(head.value_proj, track));
  return ag::attention_pool(logits, values);
}

inline ag::Var head_logits(const ag::Var& fused, const FusionHead& head, bool track = false) {
  ag::Var h = ag::gelu(ag::add_row(ag::matmul(fused, detail::head_leaf(head.w1, track)),
                                   detail::head_leaf(head.b1, track)));
  return ag::add_row(ag::matmul(h, detail::head_leaf(head.w2, track)), detail::head_leaf(head.b2, track));
}

struct FuseResult {
  RowVector fused;    // D
  RowVector weights;  // one per token, sums to 1
};

// Attention over the rows of `tokens` (T x D).
inline FuseResult attend(const Matrix& tokens, const FusionHead& head) {
  require(tokens.rows() >= 1, "fusion: need at least one token (P = 0)");
  ag::Var tk = ag::constant(tokens);
  FuseResult r;
  r.weights = ag::softmax_rows_value(attention_logits(tk, tokens.rows(), head).value()).row(0);
  r.fused = fuse_tokens(tk, tokens.rows(), head).value().row(0);
  return r;
}

// EEG tokens first, then EXG tokens.
inline FuseResult fuse(const Matrix& eeg, const Matrix& exg, const FusionHead& head) {
  require(eeg.cols() == exg.cols(), "fusion: EEG and EXG embedding widths differ");
  require(eeg.rows() >= 1 && exg.rows() >= 1, "fusion: need at least one patch per modality (P = 0)");
  Matrix tokens(eeg.rows() + exg.rows(), eeg.cols());
  tokens << eeg, exg;
  return attend(tokens, head);
}

// ---------------------------------------------------------------------------
// Probe modes and token assembly

enum class ProbeMode { LinearProbe, Finetune, EegOnly, ExgOnly };

inline std::string_view to_string(ProbeMode m) {
  switch (m) {
    case ProbeMode::LinearProbe: return "linear_probe";
    case ProbeMode::Finetune: return "finetune";
    case ProbeMode::EegOnly: return "eeg_only";
    case ProbeMode::ExgOnly: return "exg_only";
  }
  return "?";
}

inline std::optional<ProbeMode> parse_probe_mode(std::string_view s) {
  for (ProbeMode m : {ProbeMode::LinearProbe, ProbeMode::Finetune, ProbeMode::EegOnly, ProbeMode::ExgOnly})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

inline bool uses_eeg(ProbeMode m) { return m != ProbeMode::ExgOnly; }
inline bool uses_exg(ProbeMode m) { return m != ProbeMode::EegOnly; }
inline Index tokens_per_pair(ProbeMode m, Index patches) { return uses_eeg(m) && uses_exg(m) ? 2 * patches : patches; }

// Tokens of every pair in `batch`, (B*T) x D with each pair's EEG tokens
// ahead of its EXG tokens. The EEG encoder is not touched in exg_only mode.
inline ag::Var encode_tokens(std::span<const PreparedPair* const> batch, const AlignmentModel& model, ProbeMode mode,
                             const ForwardOptions& opt = {}) {
  require(!batch.empty(), "probe: empty batch");
  const Index p = model.patches();
  std::vector<const PatchGrid*> eg, xg;
  for (const PreparedPair* pr : batch) {
    eg.push_back(&pr->eeg);
    xg.push_back(&pr->exg);
  }
  if (!uses_eeg(mode)) return model.exg().forward(xg, opt);
  ag::Var e = model.eeg().encode_batch(eg, opt);
  if (!uses_exg(mode)) return e;
  ag::Var x = model.exg().forward(xg, opt);
  std::vector<ag::Var> parts;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    parts.push_back(ag::slice_rows(e, static_cast<Index>(i) * p, p));
    parts.push_back(ag::slice_rows(x, static_cast<Index>(i) * p, p));
  }
  return ag::concat_rows(parts);
}

// Frozen tokens for every pair, T x D each.
inline std::vector<Matrix> cache_tokens(const std::vector<PreparedPair>& pairs, const AlignmentModel& model,
                                        ProbeMode mode, std::size_t chunk = 32) {
  const Index t = tokens_per_pair(mode, model.patches());
  std::vector<Matrix> out;
  out.reserve(pairs.size());
  for (std::size_t start = 0; start < pairs.size(); start += chunk) {
    std::vector<const PreparedPair*> b;
    for (std::size_t i = start; i < std::min(pairs.size(), start + chunk); ++i) b.push_back(&pairs[i]);
    const Matrix all = encode_tokens(b, model, mode).value();
    for (std::size_t i = 0; i < b.size(); ++i) out.push_back(all.middleRows(static_cast<Index>(i) * t, t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prediction and evaluation

struct Prediction {
  std::string pair_id;
  int label = -1;
  int prediction = 0;
  RowVector scores;  // class probabilities
};

struct ClassifyResult {
  std::vector<Prediction> predictions;
  EvalReport report;
};

namespace detail {
inline std::vector<Prediction> predict_from_logits(const Matrix& logits, std::span<const PreparedPair* const> batch) {
  const Matrix probs = ag::softmax_rows_value(logits);
  std::vector<Prediction> out;
  for (Index i = 0; i < logits.rows(); ++i) {
    Prediction pr;
    pr.pair_id = batch[i]->pair_id;
    pr.label = batch[i]->label.value_or(-1);
    logits.row(i).maxCoeff(&pr.prediction);
    pr.scores = probs.row(i);
    out.push_back(std::move(pr));
  }
  return out;
}
}  // namespace detail

inline std::vector<Prediction> predict(const std::vector<PreparedPair>& pairs, const AlignmentModel& model,
                                       const FusionHead& head, ProbeMode mode, std::size_t chunk = 32) {
  const Index t = tokens_per_pair(mode, model.patches());
  std::vector<Prediction> out;
  for (std::size_t start = 0; start < pairs.size(); start += chunk) {
    std::vector<const PreparedPair*> b;
    for (std::size_t i = start; i < std::min(pairs.size(), start + chunk); ++i) b.push_back(&pairs[i]);
    ag::Var logits = head_logits(fuse_tokens(encode_tokens(b, model, mode), t, head), head);
    auto part = detail::predict_from_logits(logits.value(), b);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

inline EvalReport report_from_predictions(const std::vector<Prediction>& preds, int n_classes) {
  std::vector<int> labels, guesses;
  Matrix scores(static_cast<Index>(preds.size()), n_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    require(preds[i].label >= 0, "evaluation: pair " + preds[i].pair_id + " has no label");
    labels.push_back(preds[i].label);
    guesses.push_back(preds[i].prediction);
    scores.row(static_cast<Index>(i)) = preds[i].scores;
  }
  return evaluate(labels, guesses, scores, n_classes);
}

inline ClassifyResult classify(const std::vector<PreparedPair>& pairs, const AlignmentModel& model,
                               const FusionHead& head, ProbeMode mode) {
  require(!pairs.empty(), "classify: no pairs to evaluate");
  for (const auto& p : pairs) {
    require(p.label.has_value(), "classify: pair " + p.pair_id + " has no label");
    require(*p.label >= 0 && *p.label < head.n_classes(),
            "classify: label " + std::to_string(*p.label) + " of pair " + p.pair_id + " outside [0, " +
                std::to_string(head.n_classes()) + ")");
  }
  ClassifyResult r;
  r.predictions = predict(pairs, model, head, mode);
  r.report = report_from_predictions(r.predictions, head.n_classes());
  return r;
}

inline void write_predictions_csv(const std::filesystem::path& path, const std::vector<Prediction>& preds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const Index k = preds.empty() ? 0 : preds.front().scores.size();
  out << "pair_id,label,prediction";
  for (Index c = 0; c < k; ++c) out << ",score_" << c;
  out << '\n';
  out.precision(17);
  for (const auto& p : preds) {
    out << p.pair_id << ',' << p.label << ',' << p.prediction;
    for (Index c = 0; c < p.scores.size(); ++c) out << ',' << p.scores[c];
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Probe training

struct ProbeConfig {
  ProbeMode mode = ProbeMode::LinearProbe;
  double lr = 1e-3;
  double lr_encoder = 1e-5;  // finetune only
  int max_epochs = 100;
  long max_steps = 0;  // 0: no cap
  int batch_size = 16;
  int patience = 10;  // epochs without a validation macro-F1 gain
  int hidden = 64;
  int n_classes = 0;  // 0: one more than the largest label seen
  std::uint64_t seed = 0;

  void validate() const {
    require(lr > 0, "probe: lr must be positive");
    require(lr_encoder >= 0, "probe: lr_encoder must be non-negative");
    require(max_epochs >= 1, "probe: max_epochs must be positive");
    require(max_steps >= 0, "probe: max_steps must be non-negative");
    require(batch_size >= 1, "probe: batch_size must be positive");
    require(patience >= 1, "probe: patience must be positive");
    require(hidden >= 1, "probe: hidden must be positive");
    require(n_classes == 0 || n_classes >= 2, "probe: n_classes must be 0 (infer) or at least 2");
  }
};

inline Json to_json(const ProbeConfig& c) {
  return {{"mode", std::string(to_string(c.mode))},
          {"lr", c.lr},
          {"lr_encoder", c.lr_encoder},
          {"max_epochs", c.max_epochs},
          {"max_steps", c.max_steps},
          {"batch_size", c.batch_size},
          {"patience", c.patience},
          {"hidden", c.hidden},
          {"n_classes", c.n_classes},
          {"seed", c.seed}};
}

inline ProbeConfig probe_config_from_json(const Json& j, ProbeConfig c = {}) {
  check_known_fields(j,
                     {"mode", "lr", "lr_encoder", "max_epochs", "max_steps", "batch_size", "patience", "hidden",
                      "n_classes", "seed"},
                     "probe config");
  if (j.contains("mode")) {
    std::string tag;
    read_field(j, "mode", tag);
    auto m = parse_probe_mode(tag);
    require(m.has_value(), "probe: unknown mode '" + tag + "' (linear_probe, finetune, eeg_only, exg_only)");
    c.mode = *m;
  }
  read_field(j, "lr", c.lr);
  read_field(j, "lr_encoder", c.lr_encoder);
  read_field(j, "max_epochs", c.max_epochs);
  read_field(j, "max_steps", c.max_steps);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "patience", c.patience);
  read_field(j, "hidden", c.hidden);
  read_field(j, "n_classes", c.n_classes);
  read_field(j, "seed", c.seed);
  c.validate();
  return c;
}

struct ProbeEpoch {
  int epoch = 0;
  long steps = 0;
  double train_loss = 0;
  double val_accuracy = 0;
  double val_macro_f1 = 0;
};

struct ProbeResult {
  FusionHead head;
  std::vector<ProbeEpoch> history;
  int best_epoch = -1;
  double best_val_macro_f1 = -1;
  long steps = 0;
};

inline int infer_class_count(const std::vector<PreparedPair>& a, const std::vector<PreparedPair>& b) {
  int mx = -1;
  for (const auto* v : {&a, &b})
    for (const auto& p : *v) {
      require(p.label.has_value(), "probe: pair " + p.pair_id + " has no label");
      require(*p.label >= 0, "probe: negative label on pair " + p.pair_id);
      mx = std::max(mx, *p.label);
    }
  return std::max(2, mx + 1);
}

// Trains a fusion head (and, in finetune mode, both encoders) with
// cross-entropy. After each epoch the validation macro-F1 is measured; the
// best head is kept and training stops after `patience` epochs without
// improvement. Frozen modes encode every pair once up front.
inline ProbeResult train_probe(const std::vector<PreparedPair>& train, const std::vector<PreparedPair>& val,
                               AlignmentModel& model, const ProbeConfig& cfg) {
  cfg.validate();
  require(!train.empty(), "probe: training split is empty");
  require(!val.empty(), "probe: validation split is empty");
  const ProbeMode mode = cfg.mode;
  const bool finetune = mode == ProbeMode::Finetune;
  if (uses_eeg(mode))
    require(model.has_eeg(), "probe: mode " + std::string(to_string(mode)) + " needs an EEG encoder");
  const int n_classes = cfg.n_classes > 0 ? cfg.n_classes : infer_class_count(train, val);
  for (const auto* v : {&train, &val})
    for (const auto& p : *v)
      require(p.label && *p.label >= 0 && *p.label < n_classes,
              "probe: label of pair " + p.pair_id + " outside [0, " + std::to_string(n_classes) + ")");

  Rng rng(cfg.seed);
  ProbeResult res;
  res.head = FusionHead::create(model.d_patch(), cfg.hidden, n_classes, mix_seed(cfg.seed, 3));
  FusionHead& head = res.head;

  std::vector<ag::Parameter*> encoder_params;
  if (finetune) {
    encoder_params = model.eeg_parameters();
    for (ag::Parameter* p : model.exg().parameters()) encoder_params.push_back(p);
  }
  ag::Adam opt({{head.parameters(), cfg.lr}, {encoder_params, finetune ? cfg.lr_encoder : 0.0}});

  const Index t = tokens_per_pair(mode, model.patches());
  std::vector<Matrix> cached;
  if (!finetune) cached = cache_tokens(train, model, mode);
  std::vector<Matrix> val_cached;
  if (!finetune) val_cached = cache_tokens(val, model, mode);

  auto validate_head = [&]() {
    std::vector<Prediction> preds;
    if (finetune) {
      preds = predict(val, model, head, mode);
    } else {
      Matrix all(static_cast<Index>(val.size()) * t, model.d_patch());
      for (std::size_t i = 0; i < val.size(); ++i) all.middleRows(static_cast<Index>(i) * t, t) = val_cached[i];
      std::vector<const PreparedPair*> ptrs;
      for (const auto& p : val) ptrs.push_back(&p);
      preds = detail::predict_from_logits(head_logits(fuse_tokens(ag::constant(all), t, head), head).value(), ptrs);
    }
    return report_from_predictions(preds, n_classes);
  };

  auto snapshot = [&]() {
    std::vector<Matrix> s;
    for (ag::Parameter* p : head.parameters()) s.push_back(p->value);
    for (ag::Parameter* p : encoder_params) s.push_back(p->value);
    return s;
  };
  auto restore = [&](const std::vector<Matrix>& s) {
    std::size_t i = 0;
    for (ag::Parameter* p : head.parameters()) p->value = s[i++];
    for (ag::Parameter* p : encoder_params) p->value = s[i++];
  };

  std::vector<Matrix> best;
  int since_best = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      if (cfg.max_steps > 0 && res.steps >= cfg.max_steps) break;
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<int> labels;
      ag::Var tokens;
      if (finetune) {
        std::vector<const PreparedPair*> b;
        for (std::size_t i = start; i < end; ++i) b.push_back(&train[order[i]]);
        tokens = encode_tokens(b, model, mode, ForwardOptions{true, true, &rng});
        for (const auto* p : b) labels.push_back(*p->label);
      } else {
        Matrix m(static_cast<Index>(end - start) * t, model.d_patch());
        for (std::size_t i = start; i < end; ++i) {
          m.middleRows(static_cast<Index>(i - start) * t, t) = cached[order[i]];
          labels.push_back(*train[order[i]].label);
        }
        tokens = ag::constant(std::move(m));
      }
      opt.zero_grad();
      ag::Var loss = ag::cross_entropy_rows(head_logits(fuse_tokens(tokens, t, head, true), head, true), labels);
      if (!std::isfinite(loss.scalar()))
        throw NumericError("probe: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(res.steps));
      ag::backward(loss);
      opt.step();
      loss_sum += loss.scalar();
      ++batches;
      ++res.steps;
    }
    if (batches == 0) break;
    const EvalReport r = validate_head();
    res.history.push_back({epoch, res.steps, loss_sum / static_cast<double>(batches), r.accuracy, r.macro_f1});
    if (r.macro_f1 > res.best_val_macro_f1) {
      res.best_val_macro_f1 = r.macro_f1;
      res.best_epoch = epoch;
      best = snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
    if (cfg.max_steps > 0 && res.steps >= cfg.max_steps) break;
  }
  if (!best.empty()) restore(best);
  return res;
}

// ---------------------------------------------------------------------------
// Head checkpoints

// Stores the head; finetune runs also store the updated encoder tensors.
inline Checkpoint make_head_checkpoint(const FusionHead& head, const ProbeConfig& cfg, const AlignmentModel* model) {
  Checkpoint ck;
  ck.meta["kind"] = "probe_head";
  ck.meta["probe"] = to_json(cfg);
  ck.meta["n_classes"] = head.n_classes();
  ck.meta["dim"] = head.dim();
  ck.meta["hidden"] = head.hidden();
  for (const ag::Parameter* p : head.parameters()) ck.tensors.emplace_back("head." + p->name, p->value);
  if (model && cfg.mode == ProbeMode::Finetune)
    for (const auto& [name, m] : model->named_tensors()) ck.tensors.emplace_back(name, *m);
  return ck;
}

struct LoadedHead {
  FusionHead head;
  ProbeConfig probe;
};

inline LoadedHead load_head(const Checkpoint& ck) {
  require(ck.meta.value("kind", "") == "probe_head", "checkpoint is not a probe head checkpoint");
  LoadedHead out;
  out.probe = probe_config_from_json(ck.meta.at("probe"));
  out.head = FusionHead::create(ck.meta.at("dim").get<Index>(), ck.meta.at("hidden").get<Index>(),
                                ck.meta.at("n_classes").get<int>(), 0);
  for (ag::Parameter* p : out.head.parameters()) {
    const Matrix& m = ck.tensor("head." + p->name);
    require(m.rows() == p->value.rows() && m.cols() == p->value.cols(),
            "checkpoint tensor 'head." + p->name + "' has the wrong shape");
    p->value = m;
  }
  return out;
}

// Overwrites model tensors present in `ck` (finetuned encoders).
inline void apply_encoder_tensors(AlignmentModel& model, const Checkpoint& ck) {
  auto assign = [&](ag::Parameter& p, const std::string& name) {
    if (!ck.has(name)) return;
    const Matrix& m = ck.tensor(name);
    require(m.rows() == p.value.rows() && m.cols() == p.value.cols(), "checkpoint tensor '" + name + "' has the wrong shape");
    p.value = m;
  };
  if (model.has_eeg())
    for (ag::Parameter* p : model.eeg().parameters()) assign(*p, "eeg." + p->name);
  for (ag::Parameter* p : model.exg().parameters()) assign(*p, model.exg().qualified(*p));
  assign(model.proj_eeg(), "proj_eeg");
  assign(model.proj_exg(), "proj_exg");
}

// ---------------------------------------------------------------------------
// Splits

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Integer allocation of n items to the given ratios by largest remainder;
// ties go to the earlier slot.
inline std::array<std::size_t, 3> allocate_largest_remainder(std::size_t n, const std::array<double, 3>& ratios) {
  double total = 0;
  for (double r : ratios) {
    require(r > 0, "split ratios must be positive");
    total += r;
  }
  std::array<std::size_t, 3> count{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double q = static_cast<double>(n) * ratios[i] / total;
    count[i] = static_cast<std::size_t>(std::floor(q));
    frac[i] = q - std::floor(q);
    assigned += count[i];
  }
  std::array<std::size_t, 3> idx{0, 1, 2};
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++count[idx[k % 3]];
  return count;
}

// Partitions subjects (not pairs) into train/val/test. Subjects are sorted,
// shuffled with the seed, then cut by largest-remainder counts. Pairs keep
// their input order inside each split.
inline SplitIndices split_subject_independent(const std::vector<std::string>& subject_of_pair, std::uint64_t seed,
                                              const std::array<double, 3>& ratios = {3, 1, 1}) {
  std::set<std::string> unique(subject_of_pair.begin(), subject_of_pair.end());
  require(unique.size() >= 5, "subject-independent split needs at least 5 distinct subjects, found " +
                                  std::to_string(unique.size()) + "; use the random pair split instead");
  std::vector<std::string> subjects(unique.begin(), unique.end());
  Rng rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);
  const auto count = allocate_largest_remainder(subjects.size(), ratios);
  std::map<std::string, int> slot;
  for (std::size_t i = 0; i < subjects.size(); ++i) slot[subjects[i]] = i < count[0] ? 0 : i < count[0] + count[1] ? 1 : 2;
  SplitIndices out;
  for (std::size_t i = 0; i < subject_of_pair.size(); ++i) {
    const int s = slot.at(subject_of_pair[i]);
    (s == 0 ? out.train : s == 1 ? out.val : out.test).push_back(i);
  }
  return out;
}

inline SplitIndices split_subject_independent(const std::vector<LabeledPair>& pairs, std::uint64_t seed,
                                              const std::array<double, 3>& ratios = {3, 1, 1}) {
  std::vector<std::string> subj;
  for (const auto& p : pairs) subj.push_back(p.eeg.subject_id);
  return split_subject_independent(subj, seed, ratios);
}

// Pair-level split for tasks without subject separation. Unstratified.
inline SplitIndices split_random(std::size_t n, std::uint64_t seed, const std::array<double, 3>& ratios = {3, 1, 1}) {
  require(n >= 5, "random split needs at least 5 pairs, found " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto count = allocate_largest_remainder(n, ratios);
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + count[0]);
  out.val.assign(order.begin() + count[0], order.begin() + count[0] + count[1]);
  out.test.assign(order.begin() + count[0] + count[1], order.end());
  for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

template <class T>
std::vector<T> select(const std::vector<T>& items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(items.at(i));
  return out;
}

}  // namespace brantx
