#include <doctest.h>

#include "vtm/blob/blob.hpp"
#include "vtm/errors.hpp"
#include "vtm/synth/scene.hpp"

#include <cmath>
#include <map>
#include <random>
#include <vector>

using namespace vtm;
using namespace vtm::blob;

namespace {

std::vector<int> flood_fill(const std::vector<std::uint8_t>& mask, int w, int h, int conn, int* count) {
    std::vector<int> lab(mask.size(), 0);
    int next = 0;
    for (int start = 0; start < w * h; ++start) {
        if (!mask[start] || lab[start]) continue;
        lab[start] = ++next;
        std::vector<int> stack{start};
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            const int x = p % w, y = p / w;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!dx && !dy) continue;
                    if (conn == 4 && dx && dy) continue;
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const int q = ny * w + nx;
                    if (mask[q] && !lab[q]) {
                        lab[q] = next;
                        stack.push_back(q);
                    }
                }
        }
    }
    *count = next;
    return lab;
}

Image disks(int w, const std::vector<std::pair<double, double>>& centers, double r) {
    Image img(w, w, 1.0);
    for (int y = 0; y < w; ++y)
        for (int x = 0; x < w; ++x)
            for (auto [cx, cy] : centers)
                if (std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= r) img.at(x, y) = 0.0;
    return img;
}

}  // namespace

TEST_CASE("labeling agrees with flood fill on 500 random 32x32 masks") {
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        std::mt19937_64 rng(seed);
        const double density = 0.2 + 0.5 * static_cast<double>(seed % 7) / 6.0;
        std::bernoulli_distribution on(density);
        std::vector<std::uint8_t> mask(32 * 32);
        for (auto& m : mask) m = on(rng) ? 1 : 0;
        for (int conn : {4, 8}) {
            int n_ours = 0, n_ref = 0;
            const auto ours = label_components(mask, 32, 32, conn, &n_ours);
            const auto ref = flood_fill(mask, 32, 32, conn, &n_ref);
            REQUIRE(n_ours == n_ref);
            // Both number components in raster order of first pixel.
            REQUIRE(ours == ref);
        }
    }
}

TEST_CASE("disk centroid") {
    const auto found = detect_blobs(disks(40, {{20.0, 20.0}}, 4.0), BlobParams{});
    REQUIRE(found.size() == 1);
    CHECK(std::abs(found[0].x - 20.0) < 0.5);
    CHECK(std::abs(found[0].y - 20.0) < 0.5);
    CHECK(found[0].c == 1.0);
}

TEST_CASE("symmetric component centroid is exact") {
    std::vector<std::uint8_t> mask(10 * 10, 0);
    for (int y = 3; y <= 5; ++y)
        for (int x = 2; x <= 6; ++x) mask[y * 10 + x] = 1;
    int n = 0;
    const auto lab = label_components(mask, 10, 10, 8, &n);
    const auto comps = measure_components(lab, 10, 10, n);
    REQUIRE(comps.size() == 1);
    CHECK(comps[0].cx == 4.5);
    CHECK(comps[0].cy == 4.5);
    CHECK(comps[0].area == 15.0);
}

TEST_CASE("merged pair gives one centroid between the disks") {
    const auto found = detect_blobs(disks(40, {{17.0, 20.0}, {23.0, 20.0}}, 3.6), BlobParams{0.5, Polarity::dark_on_light, 4, 200, 0.0, 8});
    REQUIRE(found.size() == 1);
    CHECK(found[0].x == doctest::Approx(20.0).epsilon(0.02));
}

TEST_CASE("a single-pixel speck fails min area 5") {
    Image img(20, 20, 1.0);
    img.at(10, 10) = 0.0;
    BlobParams p;
    p.min_area = 5;
    CHECK(detect_blobs(img, p).empty());
}

TEST_CASE("light-on-dark polarity and ordering") {
    Image img(30, 30, 0.0);
    for (auto [cx, cy] : {std::pair{20, 5}, std::pair{5, 20}, std::pair{5, 5}})
        for (int y = cy - 1; y <= cy + 1; ++y)
            for (int x = cx - 1; x <= cx + 1; ++x) img.at(x, y) = 1.0;
    BlobParams p;
    p.polarity = Polarity::light_on_dark;
    const auto found = detect_blobs(img, p);
    REQUIRE(found.size() == 3);
    CHECK(found[0].y <= found[1].y);
    CHECK(found[1].y <= found[2].y);
    CHECK(found[0].x < found[1].x);
}

TEST_CASE("param validation") {
    BlobParams p;
    p.min_area = 10;
    p.max_area = 5;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = BlobParams{};
    p.connectivity = 6;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("tuning") {
    const synth::LabeledScene scene = synth::generate_scene(1, synth::SceneSpec::desk_default());
    SUBCASE("single clean scene reaches recall 1") {
        const auto r = tune_params({{&scene.image, &scene.truth}}, 2.0);
        CHECK(r.recall == 1.0);
        CHECK(!r.degenerate);
    }
    SUBCASE("all-black images are degenerate") {
        const Image black(104, 104, 0.0);
        const auto r = tune_params({{&black, &scene.truth}}, 2.0);
        CHECK(r.degenerate);
        CHECK(r.f1 == 0.0);
        CHECK(r.params == BlobParams{});
    }
    SUBCASE("lattice of one point") {
        BlobLattice one;
        one.thresholds = {0.6};
        one.min_areas = {3};
        one.max_areas = {40};
        one.min_circularities = {0.2};
        one.connectivities = {4};
        const auto r = tune_params({{&scene.image, &scene.truth}}, 2.0, one);
        CHECK(r.params == BlobParams{0.6, Polarity::dark_on_light, 3, 40, 0.2, 4});
    }
    SUBCASE("empty split") { CHECK_THROWS_AS(tune_params({}, 2.0), InputError); }
}
