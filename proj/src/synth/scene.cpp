#include "vtm/synth/scene.hpp"

#include "vtm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace vtm::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kSupersample = 4;
constexpr double kDeformedWeight = 0.05;

struct Ellipse {
    double cx, cy, a, b, theta;
};

// Radius of the ellipse along world direction phi.
double radius_along(const Ellipse& e, double phi) {
    const double t = phi - e.theta;
    const double ca = std::cos(t) / e.a;
    const double sb = std::sin(t) / e.b;
    return 1.0 / std::sqrt(ca * ca + sb * sb);
}

void splat(const Ellipse& e, int size, std::vector<double>& coverage) {
    const double reach = std::max(e.a, e.b) + 1.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - reach)));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(e.cx + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - reach)));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(e.cy + reach)));
    const double ct = std::cos(e.theta);
    const double st = std::sin(e.theta);
    const double inv_a2 = 1.0 / (e.a * e.a);
    const double inv_b2 = 1.0 / (e.b * e.b);
    constexpr double weight = 1.0 / (kSupersample * kSupersample);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSupersample; ++sy) {
                const double py = y + (sy + 0.5) / kSupersample - e.cy;
                for (int sx = 0; sx < kSupersample; ++sx) {
                    const double px = x + (sx + 0.5) / kSupersample - e.cx;
                    const double u = px * ct + py * st;
                    const double v = -px * st + py * ct;
                    if (u * u * inv_a2 + v * v * inv_b2 <= 1.0) ++hits;
                }
            }
            if (hits) coverage[static_cast<std::size_t>(y) * size + x] += hits * weight;
        }
    }
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

void SceneSpec::validate() const {
    if (image_size <= 0 || rows <= 0 || cols <= 0) throw ConfigError("scene size and lattice dims must be positive");
    if (!(spacing > 0.0) || !(marker_radius > 0.0)) throw ConfigError("spacing and marker radius must be positive");
    const double x_first = origin_x + slide_x;
    const double y_first = origin_y + slide_y;
    const double x_last = x_first + (cols - 1) * spacing;
    const double y_last = y_first + (rows - 1) * spacing;
    if (x_first < marker_radius || y_first < marker_radius || x_last > image_size - marker_radius ||
        y_last > image_size - marker_radius) {
        throw ConfigError("lattice does not fit inside the image with a one-radius margin");
    }
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(marker_intensity) || !unit(background)) throw ConfigError("intensities must lie in [0,1]");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
    if (speck_count < 0 || !(speck_radius_min > 0.0) || speck_radius_min > speck_radius_max) {
        throw ConfigError("speck settings invalid");
    }
    for (const auto& p : presses) {
        if (!(p.radius > 0.0) || !(p.displacement >= 0.0) || !(p.squash >= 1.0)) {
            throw ConfigError("press needs radius > 0, displacement >= 0, squash >= 1");
        }
    }
}

SceneSpec SceneSpec::desk_default() { return SceneSpec{}; }

SceneSpec SceneSpec::full_scale() {
    SceneSpec s;
    s.image_size = 416;
    s.rows = 23;
    s.cols = 23;
    s.origin_x = 20.0;
    s.origin_y = 20.0;
    s.spacing = 376.0 / 22.0;
    s.marker_radius = 4.5;
    return s;
}

LabeledScene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
    spec.validate();
    const int size = spec.image_size;
    LabeledScene scene;
    std::vector<Ellipse> ellipses;
    std::vector<double> weight;
    ellipses.reserve(static_cast<std::size_t>(spec.rows * spec.cols));

    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            const double x0 = spec.origin_x + spec.slide_x + c * spec.spacing;
            const double y0 = spec.origin_y + spec.slide_y + r * spec.spacing;
            double dx = 0.0, dy = 0.0;
            double strongest = 0.0;
            double theta = 0.0;
            double squash = 1.0;
            for (const auto& p : spec.presses) {
                const double rx = x0 - p.cx;
                const double ry = y0 - p.cy;
                const double dist = std::hypot(rx, ry);
                if (dist >= p.radius) continue;
                const double w = 0.5 * (1.0 + std::cos(kPi * dist / p.radius));
                if (dist > 1e-9) {
                    dx += p.displacement * w * rx / dist;
                    dy += p.displacement * w * ry / dist;
                }
                if (w > strongest) {
                    strongest = w;
                    theta = std::atan2(ry, rx);
                    squash = p.squash;
                }
            }
            const double x = x0 + dx;
            const double y = y0 + dy;
            if (x < spec.marker_radius || y < spec.marker_radius || x > size - spec.marker_radius ||
                y > size - spec.marker_radius) {
                throw ConfigError("press displaces marker (" + std::to_string(r) + "," + std::to_string(c) +
                                  ") out of the image");
            }
            const double stretch = (squash - 1.0) * strongest;
            ellipses.push_back({x, y, spec.marker_radius * (1.0 + stretch), spec.marker_radius * (1.0 + 0.25 * stretch),
                                theta});
            weight.push_back(strongest * (std::hypot(dx, dy) > 0.0 || stretch > 0.0 ? 1.0 : 0.0));
            scene.truth.push_back({x, y, 1.0});
        }
    }

    const std::size_t n = ellipses.size();
    scene.tags.assign(n, MarkerTag::clean);
    for (std::size_t i = 0; i < n; ++i) {
        if (weight[i] >= kDeformedWeight) scene.tags[i] = MarkerTag::deformed;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double ddx = ellipses[j].cx - ellipses[i].cx;
            const double ddy = ellipses[j].cy - ellipses[i].cy;
            const double d = std::hypot(ddx, ddy);
            if (d > 2.0 * (std::max(ellipses[i].a, ellipses[j].a) + 1.0)) continue;
            const double phi = std::atan2(ddy, ddx);
            if (d < radius_along(ellipses[i], phi) + radius_along(ellipses[j], phi)) {
                scene.tags[i] = MarkerTag::overlapped;
                scene.tags[j] = MarkerTag::overlapped;
            }
        }
    }

    std::vector<double> coverage(static_cast<std::size_t>(size) * size, 0.0);
    for (const Ellipse& e : ellipses) {
        splat(e, size, coverage);
        scene.semi_major.push_back(e.a);
        scene.semi_minor.push_back(e.b);
        scene.angle.push_back(e.theta);
    }

    std::mt19937_64 rng(mix_seed(seed));
    std::uniform_real_distribution<double> upos(0.0, static_cast<double>(size));
    std::uniform_real_distribution<double> urad(spec.speck_radius_min, spec.speck_radius_max);
    for (int s = 0; s < spec.speck_count; ++s) {
        const double sx = upos(rng);
        const double sy = upos(rng);
        const double sr = urad(rng);
        splat({sx, sy, sr, sr, 0.0}, size, coverage);
    }

    scene.image = Image(size, size, spec.background);
    std::normal_distribution<double> noise(0.0, 1.0);
    auto px = scene.image.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
        const double cov = std::min(1.0, coverage[i]);
        double v = spec.background + cov * (spec.marker_intensity - spec.background);
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
        px[i] = v;
    }
    scene.image.clamp();
    return scene;
}

}  // namespace vtm::synth
