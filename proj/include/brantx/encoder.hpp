#pragma once

// Dual-domain patch encoder and the EEG-encoder plug-in contract.
//
// Per patch, a time branch convolves the raw samples and a frequency branch
// convolves the patch's PSD; each branch is a stack of strided 1-D
// convolutions with GELU, globally average-pooled over its length axis. The
// two pooled vectors are concatenated into one token per patch, sinusoidal
// positions are added, and a pre-norm Transformer mixes the P tokens of each
// sequence. Pooling makes the token independent of patch length, so the same
// weights serve original, upsampled and downsampled patches.

#include "brantx/autograd.hpp"
#include "brantx/sigcore.hpp"
#include "brantx/spectral.hpp"

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace brantx {

struct EncoderConfig {
  int d_patch = 256;
  std::vector<int> conv_channels{64, 128};
  int conv_kernel = 7;
  int conv_stride = 2;
  int transformer_layers = 2;
  int attention_heads = 4;
  int ff_multiplier = 4;
  double dropout = 0.1;
  bool positional_encoding = true;

  // Smaller widths for single-core runs; same architecture.
  static EncoderConfig desk() {
    EncoderConfig c;
    c.d_patch = 64;
    c.conv_channels = {16, 32};
    c.dropout = 0.0;
    return c;
  }

  void validate() const {
    require(!conv_channels.empty(), "encoder: conv_channels must not be empty");
    for (int c : conv_channels) require(c >= 1, "encoder: conv channel counts must be positive");
    require(conv_kernel >= 1 && conv_kernel % 2 == 1, "encoder: conv_kernel must be a positive odd integer");
    require(conv_stride >= 1, "encoder: conv_stride must be positive");
    require(transformer_layers >= 0, "encoder: transformer_layers must be non-negative");
    require(attention_heads >= 1, "encoder: attention_heads must be positive");
    require(ff_multiplier >= 1, "encoder: ff_multiplier must be positive");
    require(dropout >= 0 && dropout < 1, "encoder: dropout must lie in [0, 1)");
    require(d_patch % attention_heads == 0, "encoder: d_patch (" + std::to_string(d_patch) +
                                                ") is not divisible by attention_heads (" +
                                                std::to_string(attention_heads) + ")");
    require(d_patch == 2 * conv_channels.back(),
            "encoder: d_patch (" + std::to_string(d_patch) + ") must equal twice the last conv channel count (" +
                std::to_string(conv_channels.back()) + ")");
  }
};

// P x D_p patch representations.
struct PatchEmbeddings {
  Matrix values;

  Index patches() const { return values.rows(); }
  Index dim() const { return values.cols(); }
};

struct ForwardOptions {
  bool track_grad = false;  // build leaves that feed Parameter::grad
  bool train = false;       // enables dropout
  Rng* rng = nullptr;       // required when train && dropout > 0
};

// [P x D] sinusoidal position table.
inline Matrix sinusoidal_positions(Index patches, Index dim) {
  Matrix pe(patches, dim);
  for (Index p = 0; p < patches; ++p)
    for (Index i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(p, i) = i % 2 == 0 ? std::sin(p * rate) : std::cos(p * rate);
    }
  return pe;
}

namespace detail {

// Checks that every grid in a batch shares P, C and M.
inline void check_homogeneous(std::span<const PatchGrid* const> grids) {
  require(!grids.empty(), "encode: empty batch");
  const PatchGrid& first = *grids.front();
  require(first.count() >= 1, "encode: grid has no patches");
  for (const PatchGrid* g : grids) {
    require(g->count() == first.count(), "encode: batch mixes patch counts");
    require(g->channels() == first.channels(), "encode: batch mixes channel counts");
    require(g->patch_length() == first.patch_length(), "encode: batch mixes patch lengths");
  }
}

}  // namespace detail

class PatchEncoder {
 public:
  PatchEncoder() = default;

  PatchEncoder(EncoderConfig cfg, Index in_channels, std::uint64_t seed, std::string prefix = "exg")
      : cfg_(std::move(cfg)), in_channels_(in_channels), prefix_(std::move(prefix)) {
    cfg_.validate();
    require(in_channels >= 1, "encoder: input channel count must be positive");
    Rng rng(seed);
    const Index k = cfg_.conv_kernel;
    for (const char* branch : {"time", "freq"}) {
      Index cin = in_channels;
      for (std::size_t l = 0; l < cfg_.conv_channels.size(); ++l) {
        const Index cout = cfg_.conv_channels[l];
        const std::string base = std::string(branch) + ".conv" + std::to_string(l);
        add_normal(base + ".weight", cout, cin * k, 1.0 / std::sqrt(static_cast<double>(cin * k)), rng);
        add_zero(base + ".bias", cout, 1);
        cin = cout;
      }
    }
    const Index d = cfg_.d_patch;
    const Index ff = d * cfg_.ff_multiplier;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    for (int l = 0; l < cfg_.transformer_layers; ++l) {
      const std::string base = "layer" + std::to_string(l);
      add_ones(base + ".ln1.gain", 1, d);
      add_zero(base + ".ln1.bias", 1, d);
      for (const char* w : {"wq", "wk", "wv", "wo"}) {
        add_normal(base + ".attn." + w, d, d, sd, rng);
        add_zero(base + ".attn.b" + std::string(w).substr(1), 1, d);
      }
      add_ones(base + ".ln2.gain", 1, d);
      add_zero(base + ".ln2.bias", 1, d);
      add_normal(base + ".ff.w1", d, ff, sd, rng);
      add_zero(base + ".ff.b1", 1, ff);
      add_normal(base + ".ff.w2", ff, d, 1.0 / std::sqrt(static_cast<double>(ff)), rng);
      add_zero(base + ".ff.b2", 1, d);
    }
    add_ones("final_ln.gain", 1, d);
    add_zero("final_ln.bias", 1, d);
  }

  const EncoderConfig& config() const { return cfg_; }
  Index in_channels() const { return in_channels_; }
  Index output_dim() const { return cfg_.d_patch; }
  const std::string& prefix() const { return prefix_; }

  std::vector<ag::Parameter*> parameters() {
    std::vector<ag::Parameter*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }
  std::vector<const ag::Parameter*> parameters() const {
    std::vector<const ag::Parameter*> out;
    for (const auto& p : params_) out.push_back(&p);
    return out;
  }

  // Full parameter name as stored in checkpoints, e.g. "exg.layer0.attn.wq".
  std::string qualified(const ag::Parameter& p) const { return prefix_ + "." + p.name; }

  ag::Parameter& parameter(const std::string& local_name) { return params_.at(index_.at(local_name)); }
  const ag::Parameter& parameter(const std::string& local_name) const { return params_.at(index_.at(local_name)); }

  // Encodes a batch of grids sharing P, C and M. Returns (S*P) x D_p with
  // row s*P + j holding patch j of grid s.
  ag::Var forward(std::span<const PatchGrid* const> grids, const ForwardOptions& opt = {}) const {
    detail::check_homogeneous(grids);
    const PatchGrid& first = *grids.front();
    require(first.channels() == in_channels_, "encode: grid has " + std::to_string(first.channels()) +
                                                  " channels, encoder expects " + std::to_string(in_channels_));
    require(first.patch_length() >= 4, "encode: patches need at least 4 samples");
    require(!(opt.train && cfg_.dropout > 0) || opt.rng, "encode: training with dropout needs an rng");
    const Index s_count = static_cast<Index>(grids.size());
    const Index p_count = first.count();
    const Index n = s_count * p_count;
    const Index m = first.patch_length();
    const Index bins = m / 2 + 1;

    Matrix xt(in_channels_, n * m);
    Matrix xf(in_channels_, n * bins);
    for (Index s = 0; s < s_count; ++s)
      for (Index j = 0; j < p_count; ++j) {
        const Matrix& patch = grids[s]->patches[j];
        xt.middleCols((s * p_count + j) * m, m) = patch;
        xf.middleCols((s * p_count + j) * bins, bins) = psd(patch);
      }

    const bool track = opt.track_grad;
    ag::Var time = branch(ag::constant(std::move(xt)), n, m, "time", track);
    ag::Var freq = branch(ag::constant(std::move(xf)), n, bins, "freq", track);
    ag::Var x = ag::concat_cols(ag::transpose(time), ag::transpose(freq));

    if (cfg_.positional_encoding)
      x = ag::add(x, ag::constant(sinusoidal_positions(p_count, cfg_.d_patch).replicate(s_count, 1)));

    for (int l = 0; l < cfg_.transformer_layers; ++l) {
      const std::string base = "layer" + std::to_string(l);
      ag::Var h = ag::layer_norm_rows(x, leaf(base + ".ln1.gain", track), leaf(base + ".ln1.bias", track));
      ag::Var q = linear(h, base + ".attn.wq", base + ".attn.bq", track);
      ag::Var k = linear(h, base + ".attn.wk", base + ".attn.bk", track);
      ag::Var v = linear(h, base + ".attn.wv", base + ".attn.bv", track);
      ag::Var a = ag::grouped_attention(q, k, v, cfg_.attention_heads, p_count);
      ag::Var o = linear(a, base + ".attn.wo", base + ".attn.bo", track);
      if (opt.train) o = ag::dropout(o, cfg_.dropout, *opt.rng);
      x = ag::add(x, o);
      ag::Var h2 = ag::layer_norm_rows(x, leaf(base + ".ln2.gain", track), leaf(base + ".ln2.bias", track));
      ag::Var f = linear(ag::gelu(linear(h2, base + ".ff.w1", base + ".ff.b1", track)), base + ".ff.w2",
                         base + ".ff.b2", track);
      if (opt.train) f = ag::dropout(f, cfg_.dropout, *opt.rng);
      x = ag::add(x, f);
    }
    return ag::layer_norm_rows(x, leaf("final_ln.gain", track), leaf("final_ln.bias", track));
  }

  PatchEmbeddings encode(const PatchGrid& grid) const {
    require(grid.count() >= 1, "encode: grid has no patches");
    const PatchGrid* one[] = {&grid};
    return PatchEmbeddings{forward(one).value()};
  }

 private:
  // Gradients are scratch state, so a const encoder may still hand out
  // tracking leaves.
  ag::Var leaf(const std::string& local_name, bool track) const {
    const ag::Parameter& p = parameter(local_name);
    return track ? ag::param(const_cast<ag::Parameter&>(p)) : ag::constant(p.value);
  }

  ag::Var linear(const ag::Var& x, const std::string& w, const std::string& b, bool track) const {
    return ag::add_row(ag::matmul(x, leaf(w, track)), leaf(b, track));
  }

  ag::Var branch(ag::Var x, Index n, Index len, const char* name, bool track) const {
    const Index k = cfg_.conv_kernel;
    const Index stride = cfg_.conv_stride;
    const Index pad = k / 2;
    for (std::size_t l = 0; l < cfg_.conv_channels.size(); ++l) {
      const std::string base = std::string(name) + ".conv" + std::to_string(l);
      x = ag::gelu(ag::conv1d_segments(x, leaf(base + ".weight", track), leaf(base + ".bias", track), n, len, k,
                                       stride, pad));
      len = (len + 2 * pad - k) / stride + 1;
    }
    return ag::segment_mean(x, n);
  }

  void add(const std::string& name, Matrix value) {
    index_[name] = params_.size();
    params_.emplace_back(name, std::move(value));
  }
  void add_zero(const std::string& name, Index r, Index c) { add(name, Matrix::Zero(r, c)); }
  void add_ones(const std::string& name, Index r, Index c) { add(name, Matrix::Ones(r, c)); }
  void add_normal(const std::string& name, Index r, Index c, double sd, Rng& rng) {
    std::normal_distribution<double> dist(0.0, sd);
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    add(name, std::move(m));
  }

  EncoderConfig cfg_;
  Index in_channels_ = 0;
  std::string prefix_;
  std::vector<ag::Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

// Contract for the pre-trained EEG encoder: maps a P x C x M grid to P x D_p
// embeddings, deterministic for fixed parameters.
class EegEncoder {
 public:
  virtual ~EegEncoder() = default;

  virtual Index output_dim() const = 0;
  virtual std::string kind() const = 0;
  virtual PatchEmbeddings encode(const PatchGrid& grid) const = 0;

  // Batched path used during alignment; rows ordered as in
  // PatchEncoder::forward. Encoders without trainable parameters return
  // constants.
  virtual ag::Var encode_batch(std::span<const PatchGrid* const> grids, const ForwardOptions& opt = {}) const {
    (void)opt;
    detail::check_homogeneous(grids);
    std::vector<ag::Var> parts;
    for (const PatchGrid* g : grids) parts.push_back(ag::constant(encode(*g).values));
    return ag::concat_rows(parts);
  }

  virtual std::vector<ag::Parameter*> parameters() { return {}; }
  virtual std::vector<const ag::Parameter*> parameters() const { return {}; }

  // Number of grids this encoder has been asked to encode.
  std::size_t invocations() const { return calls_.load(); }

 protected:
  void count_calls(std::size_t n) const { calls_ += n; }

 private:
  mutable std::atomic<std::size_t> calls_{0};
};

// Bundled stand-in for the foundation EEG encoder: the same architecture as
// the EXG encoder with its own parameters.
class TinyEegEncoder final : public EegEncoder {
 public:
  TinyEegEncoder(const EncoderConfig& cfg, Index in_channels, std::uint64_t seed)
      : net_(cfg, in_channels, seed, "eeg") {}
  explicit TinyEegEncoder(PatchEncoder net) : net_(std::move(net)) {}

  Index output_dim() const override { return net_.output_dim(); }
  std::string kind() const override { return "tiny"; }

  PatchEmbeddings encode(const PatchGrid& grid) const override {
    count_calls(1);
    return net_.encode(grid);
  }

  ag::Var encode_batch(std::span<const PatchGrid* const> grids, const ForwardOptions& opt = {}) const override {
    count_calls(grids.size());
    return net_.forward(grids, opt);
  }

  std::vector<ag::Parameter*> parameters() override { return net_.parameters(); }
  std::vector<const ag::Parameter*> parameters() const override { return net_.parameters(); }

  PatchEncoder& net() { return net_; }
  const PatchEncoder& net() const { return net_; }

 private:
  PatchEncoder net_;
};

// Wraps an external model given as a function. The function's output is
// checked against the declared dimension on every call.
class FunctionEegEncoder final : public EegEncoder {
 public:
  using Fn = std::function<Matrix(const PatchGrid&)>;

  FunctionEegEncoder(Index dim, Fn fn, std::string kind = "external")
      : dim_(dim), fn_(std::move(fn)), kind_(std::move(kind)) {
    require(dim_ >= 1, "external EEG encoder: output dimension must be positive");
  }

  Index output_dim() const override { return dim_; }
  std::string kind() const override { return kind_; }

  PatchEmbeddings encode(const PatchGrid& grid) const override {
    count_calls(1);
    Matrix out = fn_(grid);
    require(out.rows() == grid.count() && out.cols() == dim_,
            "external EEG encoder returned " + std::to_string(out.rows()) + "x" + std::to_string(out.cols()) +
                ", expected " + std::to_string(grid.count()) + "x" + std::to_string(dim_));
    return PatchEmbeddings{std::move(out)};
  }

 private:
  Index dim_;
  Fn fn_;
  std::string kind_;
};

}  // namespace brantx
