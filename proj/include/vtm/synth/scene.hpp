#pragma once

#include "vtm/image.hpp"
#include "vtm/markers.hpp"

#include <cstdint>
#include <vector>

namespace vtm::synth {

/// A contact press: markers inside `radius` of the center move radially
/// outward by displacement * w(r), w(r) = (1 + cos(pi r / radius)) / 2, and
/// stretch along the radial axis by (1 + (squash - 1) w).
struct PressEvent {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 20.0;
    double displacement = 0.0;
    double squash = 1.0;
};

struct SceneSpec {
    int image_size = 104;
    int rows = 13;
    int cols = 13;
    double spacing = 22.0 / 3.0;  ///< lattice pitch, px
    double origin_x = 8.0;        ///< center of marker (0,0) before slide
    double origin_y = 8.0;
    double marker_radius = 2.0;
    double marker_intensity = 0.2;
    double background = 0.8;
    double noise_sigma = 0.0;
    std::vector<PressEvent> presses;
    int speck_count = 0;
    double speck_radius_min = 0.4;
    double speck_radius_max = 1.0;
    double slide_x = 0.0;
    double slide_y = 0.0;

    /// Throws ConfigError when the lattice (plus slide) does not fit with a
    /// margin of one marker radius, or other fields are out of range.
    void validate() const;

    /// 13 x 13 lattice on 104 px.
    static SceneSpec desk_default();
    /// 23 x 23 lattice (529 markers) on 416 px.
    static SceneSpec full_scale();
};

struct LabeledScene {
    Image image;
    MarkerSet truth;             ///< post-displacement centers, row-major lattice order
    std::vector<MarkerTag> tags;
    /// Ellipse geometry of every rendered marker (semi-axes and radial angle).
    std::vector<double> semi_major;
    std::vector<double> semi_minor;
    std::vector<double> angle;
};

/// Renders the scene deterministically from `seed` (noise and speck placement).
/// Markers are anti-aliased dark ellipses (4x4 supersampling) over a flat
/// background. Throws ConfigError if the spec is invalid or a displaced marker
/// leaves the image.
LabeledScene generate_scene(std::uint64_t seed, const SceneSpec& spec);

/// Mixes a 64-bit value (splitmix64 finalizer); used to derive per-scene seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace vtm::synth
