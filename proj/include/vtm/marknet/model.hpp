#pragma once

#include "vtm/image.hpp"
#include "vtm/marknet/config.hpp"
#include "vtm/marknet/grid.hpp"
#include "vtm/nn/network.hpp"

#include <span>
#include <vector>

namespace vtm::marknet {

/// Builds the detection backbone for `cfg`:
///   stem conv 1->base k3, then stride-2 stages (conv k3 s2 doubling channels, one
///   residual block of two k3 convs each) down to W/8 (W/16 when that divides
///   and the stride requires it), then lateral k1 conv + nearest x2 upsample +
///   shortcut-add from the matching stage until the map is S x S, then a k1
///   head producing 3m channels. Throws ConfigError when W/S is not a power of
///   two reachable this way.
nn::Network build_backbone(const MarknetConfig& cfg);

/// Stores/restores the config inside network metadata.
void store_config(nn::Network& net, const MarknetConfig& cfg);
MarknetConfig load_config(const nn::Network& net);

/// Stacks images into a (N, 1, W, W) tensor.
nn::Tensor4 to_batch(std::span<const Image* const> images);

/// Forward pass of a single image to its raw grid.
GridPrediction predict_grid(const nn::Network& net, const Image& image, const MarknetConfig& cfg);

}  // namespace vtm::marknet
