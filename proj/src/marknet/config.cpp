#include "vtm/marknet/config.hpp"

#include "vtm/errors.hpp"

#include <sstream>

namespace vtm::marknet {

void MarknetConfig::validate() const {
    if (image_size <= 0 || grid_size <= 0) throw ConfigError("image size and grid size must be positive");
    if (image_size % grid_size != 0) {
        throw ConfigError("image size " + std::to_string(image_size) + " is not divisible by grid size " +
                          std::to_string(grid_size));
    }
    if (base_channels < 1) throw ConfigError("base channel width must be positive");
    if (candidates < 1) throw ConfigError("candidates per cell must be at least 1");
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("loss weights must be non-negative");
    if (!(0.0 < band_low && band_low < band_high && band_high <= accept_threshold && accept_threshold <= 1.0)) {
        throw ConfigError("need 0 < band_low < band_high <= accept_threshold <= 1");
    }
    if (epochs < 0 || batch_size < 1) throw ConfigError("epochs must be >= 0 and batch size >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
    if (!(grad_clip >= 0.0)) throw ConfigError("grad clip must be non-negative");
}

MarknetConfig MarknetConfig::full_scale() {
    MarknetConfig cfg;
    cfg.image_size = 416;
    cfg.grid_size = 52;
    cfg.candidates = 5;
    cfg.epochs = 100;
    return cfg;
}

std::string MarknetConfig::fingerprint() const {
    std::ostringstream ss;
    ss << "W=" << image_size << " S=" << grid_size << " m=" << candidates << " base=" << base_channels << " alpha=" << alpha
       << " beta=" << beta << " epochs=" << epochs << " batch=" << batch_size << " lr=" << learning_rate
       << " momentum=" << momentum << " clip=" << grad_clip << " seed=" << seed;
    return ss.str();
}

}  // namespace vtm::marknet
