#pragma once

// UNet-style encoder-decoder with a 1x1 convolutional mask head.
//
// Encoder level l has base * 2^l channels: two 3x3 convolutions with ReLU
// (plus a 1x1 projection shortcut when residual blocks are enabled), then 2x2
// max pooling. A bottleneck block follows at base * 2^depth channels. Each
// decoder level upsamples with a 2x2 stride-2 transposed convolution,
// optionally gates the matching encoder features with an additive attention
// gate, concatenates [upsampled, skip] along channels and applies two 3x3
// convolutions with ReLU. The head maps base channels to one logit per pixel.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdn/error.hpp"
#include "mdn/nn/layers.hpp"
#include "mdn/nn/tensor.hpp"

namespace mdn {

struct SegModelConfig {
  int depth = 3;
  int base_channels = 8;
  int input_size = 256;
  int in_channels = 3;
  bool use_attention = false;
  bool residual_encoder_blocks = true;

  friend bool operator==(const SegModelConfig&, const SegModelConfig&) = default;
};

inline void validate(const SegModelConfig& c) {
  require(c.depth >= 2 && c.depth <= 8, Errc::InvalidConfig, "depth must be in [2, 8]");
  require(c.base_channels >= 1, Errc::InvalidConfig, "base_channels must be >= 1");
  require(c.in_channels == 3, Errc::InvalidConfig, "in_channels must be 3");
  require(c.input_size >= 1 && c.input_size % (1 << c.depth) == 0, Errc::InvalidConfig,
          "input_size must be divisible by 2^depth");
}

inline nlohmann::json to_json(const SegModelConfig& c) {
  return {{"depth", c.depth},
          {"base_channels", c.base_channels},
          {"input_size", c.input_size},
          {"in_channels", c.in_channels},
          {"use_attention", c.use_attention},
          {"residual_encoder_blocks", c.residual_encoder_blocks}};
}

inline SegModelConfig model_config_from_json(const nlohmann::json& j, SegModelConfig c = {}) {
  try {
    if (j.contains("depth")) c.depth = j["depth"].get<int>();
    if (j.contains("base_channels")) c.base_channels = j["base_channels"].get<int>();
    if (j.contains("input_size")) c.input_size = j["input_size"].get<int>();
    if (j.contains("in_channels")) c.in_channels = j["in_channels"].get<int>();
    if (j.contains("use_attention")) c.use_attention = j["use_attention"].get<bool>();
    if (j.contains("residual_encoder_blocks"))
      c.residual_encoder_blocks = j["residual_encoder_blocks"].get<bool>();
  } catch (const nlohmann::json::exception& ex) {
    fail(Errc::ParseError, std::string("model config: ") + ex.what());
  }
  return c;
}

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t count = 0;
  double init_std = 0.0;  // 0 means zero-initialized
};

namespace nn {

struct EncoderBlock {
  Conv conv1, conv2, proj;
  bool residual = false;
};

struct AttentionGate {
  Conv theta_x, phi_g, psi;
};

struct DecoderLevel {
  UpConv up;
  AttentionGate gate;
  Conv conv1, conv2;
};

template <typename T>
struct BlockCache {
  Tensor<T> h1, out;
};

template <typename T>
struct EncoderCache {
  BlockCache<T> block;
  Tensor<T> pooled;
  std::vector<std::uint8_t> arg;
};

template <typename T>
struct DecoderCache {
  Tensor<T> up, inter, gate, gated, cat, h1, out;
};

// Per-sample activations and scratch buffers; reuse one per worker thread.
template <typename T>
struct Workspace {
  Tensor<T> input;
  std::vector<EncoderCache<T>> enc;
  BlockCache<T> bottleneck;
  std::vector<DecoderCache<T>> dec;
  Tensor<T> logits;
  Tensor<T> dlogits;  // filled by the caller before backward()

  Buffer<T> col, dcol, scratch;
  Tensor<T> tmp, g, g_next, g_h1, g_cat, g_up, g_gated, g_inter, g_psi;
  std::vector<Tensor<T>> g_skip;
};

}  // namespace nn

template <typename T>
class SegNet {
 public:
  using Scalar = T;

  explicit SegNet(SegModelConfig config, std::uint64_t seed = 0) : config_(config) {
    validate(config_);
    build_layout();
    initialize(seed);
  }

  const SegModelConfig& config() const noexcept { return config_; }
  const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<T> parameters() noexcept { return params_; }
  std::span<const T> parameters() const noexcept { return params_; }

  const ParamBlock& block(const std::string& name) const {
    for (const auto& b : blocks_)
      if (b.name == name) return b;
    fail(Errc::InvalidArgument, "no parameter block named " + name);
  }
  std::span<T> block_values(const std::string& name) {
    const auto& b = block(name);
    return std::span<T>(params_).subspan(b.offset, b.count);
  }

  nn::Workspace<T> make_workspace() const {
    nn::Workspace<T> ws;
    ws.enc.resize(std::size_t(config_.depth));
    ws.dec.resize(std::size_t(config_.depth));
    ws.g_skip.resize(std::size_t(config_.depth));
    return ws;
  }

  // Writes per-pixel logits to ws.logits. Spatial dims must be divisible by 2^depth.
  void forward(const nn::Tensor<T>& x, nn::Workspace<T>& ws) const {
    const nn::FlushDenormals ftz;
    const int div = 1 << config_.depth;
    require(x.c == config_.in_channels && x.h >= div && x.w >= div && x.h % div == 0 &&
                x.w % div == 0,
            Errc::ShapeMismatch, "input tensor shape incompatible with the model");
    if (ws.enc.size() != std::size_t(config_.depth)) ws = make_workspace();
    ws.input = x;
    const T* p = params_.data();
    const nn::Tensor<T>* cur = &ws.input;
    for (int l = 0; l < config_.depth; ++l) {
      auto& cache = ws.enc[std::size_t(l)];
      block_forward(encoders_[std::size_t(l)], *cur, cache.block, ws);
      nn::maxpool_forward(cache.block.out, cache.pooled, cache.arg);
      cur = &cache.pooled;
    }
    block_forward(bottleneck_, *cur, ws.bottleneck, ws);
    cur = &ws.bottleneck.out;
    for (int l = config_.depth - 1; l >= 0; --l) {
      const auto& L = decoders_[std::size_t(l)];
      auto& d = ws.dec[std::size_t(l)];
      nn::upconv_forward(L.up, p, *cur, d.up, ws.scratch);
      const nn::Tensor<T>* skip = &ws.enc[std::size_t(l)].block.out;
      if (config_.use_attention) {
        gate_forward(L.gate, *skip, d.up, d, ws);
        skip = &d.gated;
      }
      d.cat.reshape(d.up.c + skip->c, d.up.h, d.up.w);
      std::copy(d.up.data.begin(), d.up.data.end(), d.cat.data.begin());
      std::copy(skip->data.begin(), skip->data.end(),
                d.cat.data.begin() + std::ptrdiff_t(d.up.size()));
      nn::conv_forward(L.conv1, p, d.cat, d.h1, ws.col);
      nn::relu_inplace(d.h1);
      nn::conv_forward(L.conv2, p, d.h1, d.out, ws.col);
      nn::relu_inplace(d.out);
      cur = &d.out;
    }
    nn::conv_forward(head_, p, *cur, ws.logits, ws.col);
  }

  // Accumulates dL/dparams into `grads` given dL/dlogits in ws.dlogits.
  void backward(nn::Workspace<T>& ws, std::span<T> grads) const {
    const nn::FlushDenormals ftz;
    require(grads.size() == params_.size(), Errc::ShapeMismatch, "gradient buffer size");
    require(ws.dlogits.same_shape(ws.logits), Errc::ShapeMismatch, "dlogits shape");
    const T* p = params_.data();
    T* gr = grads.data();
    const int depth = config_.depth;

    auto& g = ws.g;
    const auto& top = ws.dec[0].out;
    g.reshape(top.c, top.h, top.w);
    g.zero();
    nn::conv_backward(head_, p, gr, top, ws.dlogits, &g, ws.col, ws.dcol);

    for (int l = 0; l < depth; ++l) {
      const auto& L = decoders_[std::size_t(l)];
      auto& d = ws.dec[std::size_t(l)];
      nn::relu_backward_inplace(d.out, g);
      ws.g_h1.reshape(d.h1.c, d.h1.h, d.h1.w);
      ws.g_h1.zero();
      nn::conv_backward(L.conv2, p, gr, d.h1, g, &ws.g_h1, ws.col, ws.dcol);
      nn::relu_backward_inplace(d.h1, ws.g_h1);
      ws.g_cat.reshape(d.cat.c, d.cat.h, d.cat.w);
      ws.g_cat.zero();
      nn::conv_backward(L.conv1, p, gr, d.cat, ws.g_h1, &ws.g_cat, ws.col, ws.dcol);

      const std::size_t up_size = d.up.size();
      ws.g_up.reshape(d.up.c, d.up.h, d.up.w);
      std::copy_n(ws.g_cat.data.begin(), up_size, ws.g_up.data.begin());
      const auto& skip = ws.enc[std::size_t(l)].block.out;
      auto& g_skip = ws.g_skip[std::size_t(l)];
      g_skip.reshape(skip.c, skip.h, skip.w);
      if (config_.use_attention) {
        ws.g_gated.reshape(skip.c, skip.h, skip.w);
        std::copy(ws.g_cat.data.begin() + std::ptrdiff_t(up_size), ws.g_cat.data.end(),
                  ws.g_gated.data.begin());
        g_skip.zero();
        gate_backward(L.gate, skip, d, ws.g_gated, g_skip, ws.g_up, gr, ws);
      } else {
        std::copy(ws.g_cat.data.begin() + std::ptrdiff_t(up_size), ws.g_cat.data.end(),
                  g_skip.data.begin());
      }
      const auto& below = l + 1 < depth ? ws.dec[std::size_t(l + 1)].out : ws.bottleneck.out;
      ws.g_next.reshape(below.c, below.h, below.w);
      ws.g_next.zero();
      nn::upconv_backward(L.up, p, gr, below, ws.g_up, &ws.g_next, ws.scratch);
      std::swap(g, ws.g_next);
    }

    // g now holds dL/d(bottleneck output).
    const auto& deepest = ws.enc[std::size_t(depth - 1)].pooled;
    ws.g_next.reshape(deepest.c, deepest.h, deepest.w);
    ws.g_next.zero();
    block_backward(bottleneck_, deepest, ws.bottleneck, g, &ws.g_next, gr, ws);
    std::swap(g, ws.g_next);

    for (int l = depth - 1; l >= 0; --l) {
      auto& cache = ws.enc[std::size_t(l)];
      auto& g_out = ws.g_skip[std::size_t(l)];
      nn::maxpool_backward_add(g, cache.arg, g_out);
      const auto& x = l > 0 ? ws.enc[std::size_t(l - 1)].pooled : ws.input;
      nn::Tensor<T>* dx = nullptr;
      if (l > 0) {
        ws.g_next.reshape(x.c, x.h, x.w);
        ws.g_next.zero();
        dx = &ws.g_next;
      }
      block_backward(encoders_[std::size_t(l)], x, cache.block, g_out, dx, gr, ws);
      if (l > 0) std::swap(g, ws.g_next);
    }
  }

  // Sigmoid probabilities for one input tensor.
  nn::Tensor<T> probabilities(const nn::Tensor<T>& x, nn::Workspace<T>& ws) const {
    forward(x, ws);
    nn::Tensor<T> out = ws.logits;
    for (auto& v : out.data) v = nn::sigmoid(v);
    return out;
  }

 private:
  void add_block(const std::string& name, std::vector<int> shape, double init_std) {
    ParamBlock b;
    b.name = name;
    b.shape = std::move(shape);
    b.count = 1;
    for (int s : b.shape) b.count *= std::size_t(s);
    b.offset = total_;
    b.init_std = init_std;
    total_ += b.count;
    blocks_.push_back(std::move(b));
  }

  nn::Conv add_conv(const std::string& name, int cin, int cout, int k, bool bias = true,
                    double gain = 2.0) {
    nn::Conv c;
    c.cin = cin;
    c.cout = cout;
    c.k = k;
    c.bias = bias;
    c.w = total_;
    const double std_dev = std::sqrt(gain / double(cin * k * k));
    add_block(name + ".weight", k == 1 ? std::vector<int>{cout, cin} : std::vector<int>{cout, cin, k, k},
              std_dev);
    if (bias) {
      c.b = total_;
      add_block(name + ".bias", {cout}, 0.0);
    }
    return c;
  }

  nn::UpConv add_upconv(const std::string& name, int cin, int cout) {
    nn::UpConv u;
    u.cin = cin;
    u.cout = cout;
    u.w = total_;
    add_block(name + ".weight", {cout, 2, 2, cin}, std::sqrt(2.0 / double(cin)));
    u.b = total_;
    add_block(name + ".bias", {cout}, 0.0);
    return u;
  }

  nn::EncoderBlock add_encoder(const std::string& name, int cin, int cout) {
    nn::EncoderBlock e;
    e.conv1 = add_conv(name + ".conv1", cin, cout, 3);
    e.conv2 = add_conv(name + ".conv2", cout, cout, 3);
    e.residual = config_.residual_encoder_blocks;
    if (e.residual) e.proj = add_conv(name + ".proj", cin, cout, 1);
    return e;
  }

  void build_layout() {
    const int base = config_.base_channels;
    int cin = config_.in_channels;
    for (int l = 0; l < config_.depth; ++l) {
      const int c = base << l;
      encoders_.push_back(add_encoder("enc" + std::to_string(l), cin, c));
      cin = c;
    }
    bottleneck_ = add_encoder("bottleneck", cin, base << config_.depth);
    decoders_.resize(std::size_t(config_.depth));
    for (int l = config_.depth - 1; l >= 0; --l) {
      const int c = base << l;
      const std::string name = "dec" + std::to_string(l);
      auto& d = decoders_[std::size_t(l)];
      d.up = add_upconv(name + ".up", c * 2, c);
      if (config_.use_attention) {
        const int inter = std::max(1, c / 2);
        d.gate.theta_x = add_conv(name + ".gate.theta_x", c, inter, 1);
        d.gate.phi_g = add_conv(name + ".gate.phi_g", c, inter, 1, false);
        d.gate.psi = add_conv(name + ".gate.psi", inter, 1, 1, true, 1.0);
      }
      d.conv1 = add_conv(name + ".conv1", 2 * c, c, 3);
      d.conv2 = add_conv(name + ".conv2", c, c, 3);
    }
    head_ = add_conv("head", base, 1, 1, true, 1.0);
    params_.assign(total_, T(0));
  }

  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto& b : blocks_) {
      if (b.init_std == 0.0) continue;
      for (std::size_t i = 0; i < b.count; ++i)
        params_[b.offset + i] = T(b.init_std * normal(rng));
    }
  }

  void block_forward(const nn::EncoderBlock& B, const nn::Tensor<T>& x, nn::BlockCache<T>& c,
                     nn::Workspace<T>& ws) const {
    const T* p = params_.data();
    nn::conv_forward(B.conv1, p, x, c.h1, ws.col);
    nn::relu_inplace(c.h1);
    nn::conv_forward(B.conv2, p, c.h1, c.out, ws.col);
    if (B.residual) {
      nn::conv_forward(B.proj, p, x, ws.tmp, ws.col);
      c.out.mat() += ws.tmp.mat();
    }
    nn::relu_inplace(c.out);
  }

  // g_out is consumed (masked in place); dx, when non-null, is accumulated into.
  void block_backward(const nn::EncoderBlock& B, const nn::Tensor<T>& x,
                      const nn::BlockCache<T>& c, nn::Tensor<T>& g_out, nn::Tensor<T>* dx,
                      T* gr, nn::Workspace<T>& ws) const {
    const T* p = params_.data();
    nn::relu_backward_inplace(c.out, g_out);
    if (B.residual) nn::conv_backward(B.proj, p, gr, x, g_out, dx, ws.col, ws.dcol);
    ws.g_h1.reshape(c.h1.c, c.h1.h, c.h1.w);
    ws.g_h1.zero();
    nn::conv_backward(B.conv2, p, gr, c.h1, g_out, &ws.g_h1, ws.col, ws.dcol);
    nn::relu_backward_inplace(c.h1, ws.g_h1);
    nn::conv_backward(B.conv1, p, gr, x, ws.g_h1, dx, ws.col, ws.dcol);
  }

  // gated = skip * sigmoid(psi(relu(theta_x(skip) + phi_g(up)))).
  void gate_forward(const nn::AttentionGate& G, const nn::Tensor<T>& skip,
                    const nn::Tensor<T>& up, nn::DecoderCache<T>& d, nn::Workspace<T>& ws) const {
    const T* p = params_.data();
    nn::conv_forward(G.theta_x, p, skip, d.inter, ws.col);
    nn::conv_forward(G.phi_g, p, up, ws.tmp, ws.col);
    d.inter.mat() += ws.tmp.mat();
    nn::relu_inplace(d.inter);
    nn::conv_forward(G.psi, p, d.inter, d.gate, ws.col);
    for (auto& v : d.gate.data) v = nn::sigmoid(v);
    d.gated.reshape(skip.c, skip.h, skip.w);
    d.gated.mat() = skip.mat().array().rowwise() * d.gate.mat().row(0).array();
  }

  void gate_backward(const nn::AttentionGate& G, const nn::Tensor<T>& skip,
                     const nn::DecoderCache<T>& d, const nn::Tensor<T>& g_gated,
                     nn::Tensor<T>& g_skip, nn::Tensor<T>& g_up, T* gr,
                     nn::Workspace<T>& ws) const {
    const T* p = params_.data();
    const auto s = d.gate.mat().row(0).array();
    g_skip.mat().array() += g_gated.mat().array().rowwise() * s;
    ws.g_psi.reshape(1, skip.h, skip.w);
    auto gp = ws.g_psi.mat().row(0).array();
    gp = (g_gated.mat().array() * skip.mat().array()).colwise().sum();
    gp = gp * s * (T(1) - s);
    ws.g_inter.reshape(d.inter.c, d.inter.h, d.inter.w);
    ws.g_inter.zero();
    nn::conv_backward(G.psi, p, gr, d.inter, ws.g_psi, &ws.g_inter, ws.col, ws.dcol);
    nn::relu_backward_inplace(d.inter, ws.g_inter);
    nn::conv_backward(G.theta_x, p, gr, skip, ws.g_inter, &g_skip, ws.col, ws.dcol);
    nn::conv_backward(G.phi_g, p, gr, d.up, ws.g_inter, &g_up, ws.col, ws.dcol);
  }

  SegModelConfig config_;
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
  nn::Buffer<T> params_;
  std::vector<nn::EncoderBlock> encoders_;
  nn::EncoderBlock bottleneck_;
  std::vector<nn::DecoderLevel> decoders_;
  nn::Conv head_;
};

}  // namespace mdn
