#pragma once

// Generator: an 8-level U-Net over raw waveforms with a dilated-convolution
// bottleneck. Each downsampling level is conv -> BN -> LeakyReLU -> decimate,
// channels growing by a fixed step per level; the bottleneck stacks three
// dilated conv blocks (r = 1, 2, 4); each upsampling level is 2x linear
// upsample -> skip concat -> conv -> BN -> LeakyReLU; a final 1x1 conv with
// Tanh maps back to one channel.
//
// Discriminator: candidate speech concatenated with the mixture, three
// strided conv/BN/LeakyReLU blocks, global average pool over time, a dense
// head and a logistic squash into (0,1).

#include <string>
#include <vector>

#include "unetgan/adam.hpp"
#include "unetgan/checkpoint.hpp"
#include "unetgan/ops.hpp"
#include "unetgan/rng.hpp"
#include "unetgan/tensor.hpp"

namespace unetgan {

struct GeneratorConfig {
  std::size_t levels = 8;
  std::size_t channel_step = 24;
  std::size_t ds_kernel = 15;
  std::size_t us_kernel = 5;
  std::size_t bottleneck_kernel = 3;
  std::vector<std::size_t> bottleneck_dilations = {1, 2, 4};
  double leaky_slope = 0.1;
  std::size_t input_length = 16384;

  void validate() const {
    if (levels == 0) throw ConfigError("generator config: levels must be >= 1");
    if (channel_step == 0) throw ConfigError("generator config: channel_step must be >= 1");
    if (ds_kernel == 0 || us_kernel == 0 || bottleneck_kernel == 0)
      throw ConfigError("generator config: kernel sizes must be >= 1");
    if (levels >= 32 || input_length % (std::size_t(1) << levels) != 0)
      throw ConfigError("generator config: input_length " + std::to_string(input_length) +
                        " must be divisible by 2^levels");
    if (bottleneck_dilations.empty())
      throw ConfigError("generator config: bottleneck_dilations must be non-empty");
    for (std::size_t i = 0; i < bottleneck_dilations.size(); ++i) {
      std::size_t r = bottleneck_dilations[i];
      if (r == 0 || (r & (r - 1)) != 0)
        throw ConfigError("generator config: bottleneck dilations must be powers of two");
      if (i > 0 && r <= bottleneck_dilations[i - 1])
        throw ConfigError("generator config: bottleneck dilations must be strictly increasing");
    }
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
      throw ConfigError("generator config: leaky_slope must lie in (0,1)");
  }

  // Downsampling-path channel schedule: step, 2*step, ..., levels*step.
  std::vector<std::size_t> ds_channels() const {
    std::vector<std::size_t> out(levels);
    for (std::size_t l = 0; l < levels; ++l) out[l] = channel_step * (l + 1);
    return out;
  }

  // Upsampling-path output channels for level l (levels-1 down to 0).
  std::size_t us_out_channels(std::size_t level) const {
    return channel_step * std::max<std::size_t>(level, 1);
  }
};

struct DiscriminatorConfig {
  std::vector<std::size_t> block_channels = {32, 64, 128};
  std::size_t kernel = 15;
  std::size_t stride = 4;
  double leaky_slope = 0.1;

  void validate() const {
    if (block_channels.empty()) throw ConfigError("discriminator config: needs >= 1 block");
    for (std::size_t i = 1; i < block_channels.size(); ++i)
      if (block_channels[i] <= block_channels[i - 1])
        throw ConfigError("discriminator config: block channels must increase");
    if (kernel == 0 || stride == 0)
      throw ConfigError("discriminator config: kernel and stride must be >= 1");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
      throw ConfigError("discriminator config: leaky_slope must lie in (0,1)");
  }
};

template <class T>
struct ConvLayer {
  Conv1dSpec spec;
  Tensor<T> weight;
  Tensor<T> bias;

  static ConvLayer make(Conv1dSpec spec, Rng& rng) {
    spec.validate();
    ConvLayer l;
    l.spec = spec;
    T bound = T(std::sqrt(1.0 / double(spec.in_channels * spec.kernel_size)));
    l.weight = Tensor<T>::uniform({spec.out_channels, spec.in_channels, spec.kernel_size}, bound,
                                  rng, true);
    l.bias = Tensor<T>::zeros({spec.out_channels}, true);
    return l;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv1d(x, spec, weight, bias); }
};

// Named views over a model's tensors; parameter names are a pure function of
// the config, which is what keeps checkpoints portable between runs.
template <class T>
struct NamedTensors {
  std::vector<std::pair<std::string, Tensor<T>>> params;
  std::vector<std::pair<std::string, std::vector<T>*>> buffers;  // BN running stats
};

namespace detail {

template <class T>
void collect_block(NamedTensors<T>& out, const std::string& prefix, ConvLayer<T>& conv,
                   BatchNormState<T>* bn) {
  out.params.emplace_back(prefix + "/w", conv.weight);
  out.params.emplace_back(prefix + "/b", conv.bias);
  if (bn) {
    out.params.emplace_back(prefix + "/bn/gamma", bn->gamma);
    out.params.emplace_back(prefix + "/bn/beta", bn->beta);
    out.buffers.emplace_back(prefix + "/bn/running_mean", &bn->running_mean);
    out.buffers.emplace_back(prefix + "/bn/running_var", &bn->running_var);
  }
}

}  // namespace detail

template <class T>
class Generator {
 public:
  GeneratorConfig cfg;
  std::vector<ConvLayer<T>> ds;
  std::vector<BatchNormState<T>> ds_bn;
  std::vector<ConvLayer<T>> bottleneck;
  std::vector<BatchNormState<T>> bottleneck_bn;
  std::vector<ConvLayer<T>> us;  // ordered deepest level first
  std::vector<BatchNormState<T>> us_bn;
  ConvLayer<T> out;

  static Generator build(const GeneratorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(Rng::derive(seed, 0xC0DE));
    Generator g;
    g.cfg = cfg;
    auto chans = cfg.ds_channels();
    std::size_t in_ch = 1;
    for (std::size_t l = 0; l < cfg.levels; ++l) {
      g.ds.push_back(ConvLayer<T>::make({in_ch, chans[l], cfg.ds_kernel, 1, 1}, rng));
      g.ds_bn.push_back(BatchNormState<T>::make(chans[l]));
      in_ch = chans[l];
    }
    for (std::size_t r : cfg.bottleneck_dilations) {
      g.bottleneck.push_back(ConvLayer<T>::make({in_ch, in_ch, cfg.bottleneck_kernel, 1, r}, rng));
      g.bottleneck_bn.push_back(BatchNormState<T>::make(in_ch));
    }
    for (std::size_t l = cfg.levels; l-- > 0;) {
      std::size_t out_ch = cfg.us_out_channels(l);
      g.us.push_back(ConvLayer<T>::make({in_ch + chans[l], out_ch, cfg.us_kernel, 1, 1}, rng));
      g.us_bn.push_back(BatchNormState<T>::make(out_ch));
      in_ch = out_ch;
    }
    g.out = ConvLayer<T>::make({in_ch, 1, 1, 1, 1}, rng);
    return g;
  }

  Tensor<T> forward(const Tensor<T>& x, BnMode mode) {
    if (x.shape().size() != 3 || x.shape()[1] != 1)
      throw ShapeError("generator: input must be [B,1,L], got " + shape_str(x.shape()));
    const std::size_t L = x.shape()[2];
    if (L == 0 || L % (std::size_t(1) << cfg.levels) != 0)
      throw ShapeError("generator: input length " + std::to_string(L) +
                       " not divisible by 2^" + std::to_string(cfg.levels));
    const T slope = T(cfg.leaky_slope);
    Tensor<T> cur = x;
    std::vector<Tensor<T>> skips;
    for (std::size_t l = 0; l < cfg.levels; ++l) {
      cur = leaky_relu(batchnorm(ds[l](cur), ds_bn[l], mode), slope);
      skips.push_back(cur);
      cur = decimate(cur);
    }
    for (std::size_t i = 0; i < bottleneck.size(); ++i)
      cur = leaky_relu(batchnorm(bottleneck[i](cur), bottleneck_bn[i], mode), slope);
    for (std::size_t i = 0; i < cfg.levels; ++i) {
      const std::size_t l = cfg.levels - 1 - i;
      cur = upsample_linear2x(cur);
      cur = concat_channels(cur, skips[l]);
      cur = leaky_relu(batchnorm(us[i](cur), us_bn[i], mode), slope);
    }
    return tanh_act(out(cur));
  }

  // Time extent at the deepest point for a given input length.
  std::size_t bottleneck_extent(std::size_t input_length) const {
    return input_length >> cfg.levels;
  }

  NamedTensors<T> named_tensors() {
    NamedTensors<T> nt;
    for (std::size_t l = 0; l < ds.size(); ++l)
      detail::collect_block(nt, "g/ds" + std::to_string(l), ds[l], &ds_bn[l]);
    for (std::size_t i = 0; i < bottleneck.size(); ++i)
      detail::collect_block(nt, "g/bottleneck" + std::to_string(i), bottleneck[i],
                            &bottleneck_bn[i]);
    for (std::size_t i = 0; i < us.size(); ++i)
      detail::collect_block(nt, "g/us" + std::to_string(cfg.levels - 1 - i), us[i], &us_bn[i]);
    detail::collect_block(nt, "g/out", out, static_cast<BatchNormState<T>*>(nullptr));
    return nt;
  }
};

template <class T>
class Discriminator {
 public:
  DiscriminatorConfig cfg;
  std::vector<ConvLayer<T>> blocks;
  std::vector<BatchNormState<T>> bn;
  Tensor<T> head_w;
  Tensor<T> head_b;

  static Discriminator build(const DiscriminatorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(Rng::derive(seed, 0xD15C));
    Discriminator d;
    d.cfg = cfg;
    std::size_t in_ch = 2;  // candidate + mixture
    for (std::size_t c : cfg.block_channels) {
      d.blocks.push_back(ConvLayer<T>::make({in_ch, c, cfg.kernel, cfg.stride, 1}, rng));
      d.bn.push_back(BatchNormState<T>::make(c));
      in_ch = c;
    }
    T bound = T(std::sqrt(1.0 / double(in_ch)));
    d.head_w = Tensor<T>::uniform({in_ch, 1}, bound, rng, true);
    d.head_b = Tensor<T>::zeros({1}, true);
    return d;
  }

  // D(x, candidate) -> per-example score strictly in (0,1).
  Tensor<T> forward(const Tensor<T>& mixture, const Tensor<T>& candidate, BnMode mode) {
    if (mixture.shape() != candidate.shape())
      throw ShapeError("discriminator: mixture " + shape_str(mixture.shape()) +
                       " vs candidate " + shape_str(candidate.shape()));
    const T slope = T(cfg.leaky_slope);
    Tensor<T> cur = concat_channels(candidate, mixture);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      cur = leaky_relu(batchnorm(blocks[i](cur), bn[i], mode), slope);
    Tensor<T> pooled = mean_over_time(cur);
    return squeeze_channel(sigmoid(linear(pooled, head_w, head_b)));
  }

  NamedTensors<T> named_tensors() {
    NamedTensors<T> nt;
    for (std::size_t i = 0; i < blocks.size(); ++i)
      detail::collect_block(nt, "d/block" + std::to_string(i), blocks[i], &bn[i]);
    nt.params.emplace_back("d/head/w", head_w);
    nt.params.emplace_back("d/head/b", head_b);
    return nt;
  }
};

// ---------------------------------------------------------------------------
// Checkpoint interop
// ---------------------------------------------------------------------------

template <class T>
void append_records(std::vector<ArrayRecord>& out, NamedTensors<T>& nt) {
  for (auto& [name, t] : nt.params) {
    ArrayRecord r{name, t.shape(), std::vector<float>(t.size())};
    for (std::size_t i = 0; i < t.size(); ++i) r.data[i] = float(t.data()[i]);
    out.push_back(std::move(r));
  }
  for (auto& [name, buf] : nt.buffers) {
    ArrayRecord r{name, {buf->size()}, std::vector<float>(buf->size())};
    for (std::size_t i = 0; i < buf->size(); ++i) r.data[i] = float((*buf)[i]);
    out.push_back(std::move(r));
  }
}

template <class T>
void restore_records(const std::map<std::string, ArrayRecord>& idx, NamedTensors<T>& nt) {
  auto fetch = [&](const std::string& name) -> const ArrayRecord& {
    auto it = idx.find(name);
    if (it == idx.end()) throw FormatError("checkpoint: missing record '" + name + "'");
    return it->second;
  };
  for (auto& [name, t] : nt.params) {
    const auto& r = fetch(name);
    if (r.shape != t.shape())
      throw FormatError("checkpoint: record '" + name + "' has shape " + shape_str(r.shape) +
                        ", model expects " + shape_str(t.shape()));
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = T(r.data[i]);
  }
  for (auto& [name, buf] : nt.buffers) {
    const auto& r = fetch(name);
    if (r.data.size() != buf->size())
      throw FormatError("checkpoint: record '" + name + "' size mismatch");
    for (std::size_t i = 0; i < buf->size(); ++i) (*buf)[i] = T(r.data[i]);
  }
}

}  // namespace unetgan
