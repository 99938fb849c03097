#pragma once

#include <cstdint>
#include <string>

namespace vtm::marknet {

/// Grid-regression head and training configuration.
struct MarknetConfig {
    int image_size = 104;   ///< W, pixels per side
    int grid_size = 26;     ///< S, cells per side
    int candidates = 3;     ///< m, candidate points per cell
    int base_channels = 8;  ///< stem width; stage k has base << k channels

    double alpha = 1.0;     ///< weight of the confidence (BCE) loss
    double beta = 0.05;     ///< weight of the localization (Euclidean) loss

    double accept_threshold = 0.4;  ///< c above this is output directly
    double band_low = 0.1;          ///< evaluate band [band_low, band_high]
    double band_high = 0.4;

    int epochs = 40;
    int batch_size = 8;
    double learning_rate = 0.02;
    double momentum = 0.9;
    double grad_clip = 5.0;         ///< global gradient-norm clip; 0 disables
    std::uint64_t seed = 1;

    int stride() const { return image_size / grid_size; }

    /// Throws ConfigError on any violated constraint.
    void validate() const;

    /// W=416, S=52, m=5.
    static MarknetConfig full_scale();

    /// Stable single-line summary used in weight metadata and reports.
    std::string fingerprint() const;
};

}  // namespace vtm::marknet
