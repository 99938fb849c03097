#pragma once

#include "vtm/nn/network.hpp"

#include <filesystem>
#include <string>

namespace vtm::nn {

// Weight file layout (see docs/formats.md):
//
//   vtm-weights 1
//   input <c> <h> <w>
//   seed <u64>
//   layers <count>
//   layer <i> conv <in> <out> <k> <stride> <pad>
//   layer <i> leaky <slope>
//   layer <i> shortcut <source>
//   layer <i> upsample <scale>
//   layer <i> sigmoid
//   meta <key> <value...>
//   tensor <i> weight <out> <in> <k> <k>
//   tensor <i> bias <out>
//   payload <bytes>
//   end
//
// followed by exactly <bytes> bytes of little-endian IEEE-754 doubles in
// tensor declaration order. Metadata keys are sorted; no timestamps.

void write_weights(const Network& net, const std::filesystem::path& path);
std::string serialize_weights(const Network& net);

Network read_weights(const std::filesystem::path& path);
Network parse_weights(const std::string& bytes);

}  // namespace vtm::nn
