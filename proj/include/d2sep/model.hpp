#pragma once

#include <string>
#include <vector>

#include "d2sep/conv.hpp"
#include "d2sep/gru.hpp"
#include "d2sep/tensor.hpp"

namespace d2sep {

enum class BlockVariant { dgru_dgconv, dense, residual, dgconv_dgru, conv_dgconv };

inline const char* to_string(BlockVariant v) {
  switch (v) {
    case BlockVariant::dgru_dgconv: return "dgru_dgconv";
    case BlockVariant::dense: return "dense";
    case BlockVariant::residual: return "residual";
    case BlockVariant::dgconv_dgru: return "dgconv_dgru";
    case BlockVariant::conv_dgconv: return "conv_dgconv";
  }
  return "?";
}

inline BlockVariant block_variant_from_string(const std::string& s) {
  if (s == "dgru_dgconv") return BlockVariant::dgru_dgconv;
  if (s == "dense") return BlockVariant::dense;
  if (s == "residual") return BlockVariant::residual;
  if (s == "dgconv_dgru") return BlockVariant::dgconv_dgru;
  if (s == "conv_dgconv") return BlockVariant::conv_dgconv;
  throw config_error("unknown block variant '" + s + "'");
}

struct ModelConfig {
  std::size_t freq_bins = 65;
  std::size_t channels = 64;
  std::size_t num_blocks = 2;
  std::vector<int> conv_dilations = {2, 4};
  std::vector<int> gru_dilations = {2, 2};
  int groups = 4;
  int kernel = 3;
  std::vector<std::string> sources = {"vocals", "drums", "bass", "other"};
  BlockVariant block_variant = BlockVariant::dgru_dgconv;

  static ModelConfig desk() { return ModelConfig{}; }

  static ModelConfig paper() {
    ModelConfig c;
    c.freq_bins = 2049;
    c.channels = 2048;
    c.num_blocks = 3;
    c.conv_dilations = {2, 4, 8};
    c.gru_dilations = {2, 2, 2};
    c.groups = 32;
    c.kernel = 3;
    return c;
  }

  void validate() const {
    if (freq_bins < 1 || channels < 1 || num_blocks < 0)
      throw config_error("model dims must be positive");
    if (conv_dilations.size() != num_blocks || gru_dilations.size() != num_blocks)
      throw config_error("dilation list lengths must equal num_blocks (" +
                         std::to_string(num_blocks) + ")");
    if (channels % groups != 0)
      throw config_error("channels " + std::to_string(channels) +
                         " not divisible by groups " + std::to_string(groups));
    if (block_variant != BlockVariant::conv_dgconv && channels % 2 != 0)
      throw config_error("channels must be even for the bidirectional GRU");
    if (sources.empty()) throw config_error("at least one source required");
    for (int d : conv_dilations)
      if (d < 1) throw config_error("conv dilation must be >= 1");
    for (int d : gru_dilations)
      if (d < 1) throw config_error("gru dilation must be >= 1");
  }

  std::size_t num_sources() const { return sources.size(); }

  std::size_t param_count() const {
    const auto conv_count = [](std::size_t cin, std::size_t cout, int g, int k) {
      return cout * (cin / g) * static_cast<std::size_t>(k) + 2 * cout;
    };
    std::size_t total = conv_count(freq_bins, channels, 1, kernel);
    for (std::size_t b = 0; b < num_blocks; ++b) {
      if (block_variant == BlockVariant::conv_dgconv) {
        total += conv_count(channels, channels, 1, 1);
      } else {
        const std::size_t h = channels / 2;
        total += 2 * (3 * h * channels + 3 * h * h + 6 * h);
      }
      total += conv_count(channels, channels, groups, kernel);
    }
    total += conv_count(channels, sources.size() * freq_bins, 1, kernel);
    return total;
  }
};

// Outputs of the sub-layers of one block, for inspection in tests and the
// three-way-sum identity.
template <class S>
struct BlockTrace {
  Tensor<S> first;   // GRU output (or the kernel-1 conv replacing it)
  Tensor<S> second;  // dilated grouped conv output (post-activation)
};

template <class S>
struct D2Block {
  BlockVariant variant = BlockVariant::dgru_dgconv;
  DilatedGruParams<S> gru;       // unused for conv_dgconv
  GroupedConvParams<S> mix;      // kernel-1 ungrouped conv, conv_dgconv only
  GroupedConvParams<S> conv;     // the dilated grouped convolution

  static D2Block init(Rng& rng, const ModelConfig& cfg, std::size_t index,
                      bool requires_grad = true) {
    D2Block b;
    b.variant = cfg.block_variant;
    const std::size_t c = cfg.channels;
    if (b.variant == BlockVariant::conv_dgconv) {
      b.mix = GroupedConvParams<S>::init(rng, c, c, 1, 1, 1, requires_grad);
    } else {
      b.gru = DilatedGruParams<S>::init(rng, c, c / 2, cfg.gru_dilations[index], true,
                                        requires_grad);
    }
    b.conv = GroupedConvParams<S>::init(rng, c, c, cfg.groups, cfg.kernel,
                                        cfg.conv_dilations[index], requires_grad);
    return b;
  }

  Tensor<S> forward(const Tensor<S>& x, int workers = 1,
                    BlockTrace<S>* trace = nullptr) const {
    Tensor<S> first;
    switch (variant) {
      case BlockVariant::dgru_dgconv: {
        first = dilated_gru_parallel_forward(gru, x, workers);
        Tensor<S> second = leaky_relu(conv_forward(conv, first));
        if (trace) *trace = {first, second};
        return add(add(x, first), second);
      }
      case BlockVariant::dense: {
        first = dilated_gru_parallel_forward(gru, x, workers);
        Tensor<S> second = leaky_relu(conv_forward(conv, add(x, first)));
        if (trace) *trace = {first, second};
        return add(add(x, first), second);
      }
      case BlockVariant::residual: {
        first = dilated_gru_parallel_forward(gru, x, workers);
        Tensor<S> h1 = add(x, first);
        Tensor<S> second = leaky_relu(conv_forward(conv, h1));
        if (trace) *trace = {first, second};
        return add(h1, second);
      }
      case BlockVariant::dgconv_dgru: {
        first = leaky_relu(conv_forward(conv, x));
        Tensor<S> second = dilated_gru_parallel_forward(gru, first, workers);
        if (trace) *trace = {first, second};
        return add(add(x, first), second);
      }
      case BlockVariant::conv_dgconv: {
        first = leaky_relu(conv_forward(mix, x));
        Tensor<S> second = leaky_relu(conv_forward(conv, first));
        if (trace) *trace = {first, second};
        return add(add(x, first), second);
      }
    }
    throw config_error("unhandled block variant");
  }

  std::vector<Tensor<S>> parameters() const {
    std::vector<Tensor<S>> out;
    if (variant == BlockVariant::conv_dgconv) {
      for (auto& t : mix.parameters()) out.push_back(t);
    } else {
      for (auto& t : gru.parameters()) out.push_back(t);
    }
    for (auto& t : conv.parameters()) out.push_back(t);
    return out;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    if (variant == BlockVariant::conv_dgconv) {
      for (auto& n : GroupedConvParams<S>::parameter_names()) out.push_back("mix." + n);
    } else {
      for (auto& n : DilatedGruParams<S>::parameter_names(true))
        out.push_back("gru." + n);
    }
    for (auto& n : GroupedConvParams<S>::parameter_names()) out.push_back("conv." + n);
    return out;
  }
};

// Input conv -> stack of D2 blocks -> output conv. Works on log1p-magnitude
// feature maps [D x T] and emits all sources at once as [|S|*D x T].
template <class S>
struct D2Net {
  ModelConfig config;
  GroupedConvParams<S> input_conv;
  std::vector<D2Block<S>> blocks;
  GroupedConvParams<S> output_conv;

  static D2Net init(const ModelConfig& cfg, Rng& rng, bool requires_grad = true) {
    cfg.validate();
    D2Net net;
    net.config = cfg;
    net.input_conv = GroupedConvParams<S>::init(rng, cfg.freq_bins, cfg.channels, 1,
                                                cfg.kernel, 1, requires_grad);
    for (std::size_t b = 0; b < cfg.num_blocks; ++b)
      net.blocks.push_back(D2Block<S>::init(rng, cfg, b, requires_grad));
    net.output_conv = GroupedConvParams<S>::init(
        rng, cfg.channels, cfg.sources.size() * cfg.freq_bins, 1, cfg.kernel, 1,
        requires_grad);
    return net;
  }

  static D2Net init_seeded(const ModelConfig& cfg, std::uint64_t seed,
                           bool requires_grad = true) {
    Rng rng(seed);
    return init(cfg, rng, requires_grad);
  }

  // mix_features: [D x T] -> [|S|*D x T]
  Tensor<S> forward(const Tensor<S>& mix_features, int workers = 1) const {
    if (mix_features.ndim() != 2 || mix_features.shape()[0] != config.freq_bins)
      throw shape_error("model input must be [" + std::to_string(config.freq_bins) +
                        " x T], got " + shape_string(mix_features.shape()));
    Tensor<S> y = leaky_relu(conv_forward(input_conv, mix_features));
    for (const auto& b : blocks) y = b.forward(y, workers);
    return conv_forward(output_conv, y);
  }

  std::vector<Tensor<S>> parameters() const {
    std::vector<Tensor<S>> out;
    for (auto& t : input_conv.parameters()) out.push_back(t);
    for (auto& b : blocks)
      for (auto& t : b.parameters()) out.push_back(t);
    for (auto& t : output_conv.parameters()) out.push_back(t);
    return out;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (auto& n : GroupedConvParams<S>::parameter_names())
      out.push_back("input_conv." + n);
    for (std::size_t b = 0; b < blocks.size(); ++b)
      for (auto& n : blocks[b].parameter_names())
        out.push_back("block" + std::to_string(b) + "." + n);
    for (auto& n : GroupedConvParams<S>::parameter_names())
      out.push_back("output_conv." + n);
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.size();
    return n;
  }

  // Keeps the trained input/output convolutions and the first `keep` blocks,
  // sharing parameter tensors with this model; no retraining involved.
  D2Net truncated(std::size_t keep) const {
    if (keep > blocks.size())
      throw config_error("truncate: keep " + std::to_string(keep) + " out of range [0," +
                         std::to_string(blocks.size()) + "]");
    D2Net net;
    net.config = config;
    net.config.num_blocks = keep;
    net.config.conv_dilations.assign(config.conv_dilations.begin(),
                                     config.conv_dilations.begin() + keep);
    net.config.gru_dilations.assign(config.gru_dilations.begin(),
                                    config.gru_dilations.begin() + keep);
    net.input_conv = input_conv;
    net.blocks.assign(blocks.begin(), blocks.begin() + keep);
    net.output_conv = output_conv;
    return net;
  }
};

using ModelF = D2Net<float>;

}  // namespace d2sep
