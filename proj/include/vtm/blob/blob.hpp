#pragma once

#include "vtm/image.hpp"
#include "vtm/markers.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vtm::blob {

enum class Polarity { dark_on_light, light_on_dark };

struct BlobParams {
    double threshold = 0.5;
    Polarity polarity = Polarity::dark_on_light;
    double min_area = 4.0;
    double max_area = 60.0;
    double min_circularity = 0.5;  ///< 4*pi*area / perimeter^2
    int connectivity = 8;

    /// Throws ConfigError on out-of-range fields.
    void validate() const;
    bool operator==(const BlobParams&) const = default;
};

std::string to_string(Polarity p);
Polarity parse_polarity(const std::string& text);

/// Connected-component labels of a binary mask (row-major, width x height).
/// Background is 0; components are numbered 1.. in raster order of their first pixel.
std::vector<int> label_components(const std::vector<std::uint8_t>& mask, int width, int height, int connectivity,
                                  int* count = nullptr);

/// Foreground mask after thresholding with the configured polarity.
std::vector<std::uint8_t> binarize(const Image& image, const BlobParams& params);

struct Component {
    int label = 0;
    double area = 0.0;
    double perimeter = 0.0;
    double circularity = 0.0;
    double cx = 0.0;  ///< centroid in continuous pixel coordinates (pixel centers at +0.5)
    double cy = 0.0;
};

/// Per-component statistics; perimeter is the 8-neighbor chain-code length of
/// the outer boundary (0 for a single pixel, whose circularity is taken as 1).
std::vector<Component> measure_components(const std::vector<int>& labels, int width, int height, int count);

/// threshold -> connected components -> area and circularity filters -> centroids.
/// Output sorted by (y, x); every marker has c = 1.
MarkerSet detect_blobs(const Image& image, const BlobParams& params);

/// Parameter lattice searched by tune_params.
struct BlobLattice {
    std::vector<double> thresholds{0.35, 0.45, 0.55, 0.65};
    std::vector<double> min_areas{2.0, 4.0, 6.0};
    std::vector<double> max_areas{30.0, 60.0, 120.0};
    std::vector<double> min_circularities{0.0, 0.3, 0.5, 0.7};
    std::vector<int> connectivities{4, 8};
    Polarity polarity = Polarity::dark_on_light;

    std::size_t size() const;
};

struct LabeledFrame {
    const Image* image = nullptr;
    const MarkerSet* truth = nullptr;
};

struct TuneResult {
    BlobParams params;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    bool degenerate = false;  ///< every lattice point scored F1 = 0; params are the lattice default
};

/// Exhaustive search for the lattice point with the best aggregate F1 at tau.
/// Ties keep the earliest point in lattice order. Throws InputError on an empty split.
TuneResult tune_params(const std::vector<LabeledFrame>& split, double tau, const BlobLattice& lattice = {});

}  // namespace vtm::blob
