#include <doctest.h>

#include "vtm/blob/blob.hpp"
#include "vtm/errors.hpp"
#include "vtm/synth/dataset.hpp"
#include "vtm/synth/scene.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace vtm;
using namespace vtm::synth;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("vtm_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("clean scene centroids match truth within 0.3 px") {
    const LabeledScene s = generate_scene(3, SceneSpec::desk_default());
    REQUIRE(s.truth.size() == 169);
    const auto& img = s.image;
    for (const auto& m : s.truth) {
        // Darkness-weighted centroid over a window around the truth center.
        double sw = 0.0, sx = 0.0, sy = 0.0;
        for (int y = static_cast<int>(m.y) - 3; y <= static_cast<int>(m.y) + 3; ++y)
            for (int x = static_cast<int>(m.x) - 3; x <= static_cast<int>(m.x) + 3; ++x) {
                const double w = 0.8 - img.at(x, y);
                sw += w;
                sx += w * (x + 0.5);
                sy += w * (y + 0.5);
            }
        REQUIRE(std::abs(sx / sw - m.x) < 0.3);
        REQUIRE(std::abs(sy / sw - m.y) < 0.3);
    }
}

TEST_CASE("zero displacement keeps the lattice") {
    SceneSpec spec = SceneSpec::desk_default();
    spec.presses.push_back({50.0, 50.0, 25.0, 0.0, 1.0});
    const LabeledScene s = generate_scene(1, spec);
    for (int r = 0; r < spec.rows; ++r)
        for (int c = 0; c < spec.cols; ++c) {
            const auto& m = s.truth[static_cast<std::size_t>(r * spec.cols + c)];
            CHECK(m.x == doctest::Approx(spec.origin_x + c * spec.spacing));
            CHECK(m.y == doctest::Approx(spec.origin_y + r * spec.spacing));
        }
}

TEST_CASE("strong squash merges neighbours while truth keeps both") {
    SceneSpec spec = SceneSpec::desk_default();
    spec.marker_radius = 2.3;
    // Press centred just past marker (6,6): radial squash elongates markers along the radius.
    const double cx = spec.origin_x + 6 * spec.spacing;
    spec.presses.push_back({cx + 6.0, spec.origin_y + 6 * spec.spacing, 22.0, 1.0, 2.2});
    const LabeledScene s = generate_scene(2, spec);
    REQUIRE(s.truth.size() == 169);
    std::size_t overlapped = 0;
    for (auto t : s.tags) overlapped += t == MarkerTag::overlapped;
    CHECK(overlapped >= 2);
    blob::BlobParams p;
    p.max_area = 500;
    p.min_circularity = 0.0;
    const auto found = blob::detect_blobs(s.image, p);
    CHECK(found.size() < s.truth.size());
}

TEST_CASE("generation is a pure function of seed and spec") {
    SceneSpec spec = SceneSpec::desk_default();
    spec.noise_sigma = 0.03;
    spec.speck_count = 4;
    spec.presses.push_back({40.0, 60.0, 20.0, 3.0, 1.8});
    const auto a = generate_scene(11, spec);
    const auto b = generate_scene(11, spec);
    const auto c = generate_scene(12, spec);
    CHECK(std::equal(a.image.pixels().begin(), a.image.pixels().end(), b.image.pixels().begin()));
    CHECK(!std::equal(a.image.pixels().begin(), a.image.pixels().end(), c.image.pixels().begin()));
    CHECK(a.tags.size() == a.truth.size());
}

TEST_CASE("invalid specs") {
    SceneSpec spec = SceneSpec::desk_default();
    spec.rows = 20;
    CHECK_THROWS_AS(generate_scene(1, spec), ConfigError);
    spec = SceneSpec::desk_default();
    spec.presses.push_back({20.0, 52.0, 40.0, 30.0, 1.0});
    CHECK_THROWS_AS(generate_scene(1, spec), ConfigError);
}

TEST_CASE("split sizes") {
    CHECK(split_sizes(10) == std::array<std::size_t, 3>{6, 2, 2});
    CHECK(split_sizes(1000) == std::array<std::size_t, 3>{600, 200, 200});
    CHECK(split_sizes(13) == std::array<std::size_t, 3>{9, 2, 2});
}

TEST_CASE("make_dataset") {
    const fs::path a = scratch_dir("ds_a"), b = scratch_dir("ds_b");
    SpecDistribution dist;
    const DatasetManifest ma = make_dataset(10, dist, 7, a);
    const DatasetManifest mb = make_dataset(10, dist, 7, b);
    CHECK(ma.train.size() == 6);
    CHECK(ma.val.size() == 2);
    CHECK(ma.test.size() == 2);
    std::set<std::string> all(ma.train.begin(), ma.train.end());
    all.insert(ma.val.begin(), ma.val.end());
    all.insert(ma.test.begin(), ma.test.end());
    CHECK(all.size() == 10);
    write_manifest(ma, a / "manifest.json");
    write_manifest(mb, b / "manifest.json");
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
    for (const auto& e : ma.scenes) CHECK(slurp(a / "images" / (e.id + ".pgm")) == slurp(b / "images" / (e.id + ".pgm")));

    const auto back = read_manifest(a / "manifest.json");
    CHECK(back.train == ma.train);
    CHECK(back.scenes.size() == 10);

    const auto test = load_split(a, ma, Split::test);
    for (const auto& s : test) CHECK(s.truth.size() == 169);

    CHECK_THROWS_AS(make_dataset(9, dist, 7, scratch_dir("ds_c")), ConfigError);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("easy/hard partition") {
    SUBCASE("clean scene is all easy") {
        LoadedScene s;
        s.id = "c";
        const auto g = generate_scene(5, SceneSpec::desk_default());
        s.image = g.image;
        s.truth = g.truth;
        const auto p = partition_easy_hard({s}, blob::BlobParams{}, 2.0);
        CHECK(p.hard_count == 0);
        CHECK(p.easy_count == 169);
    }
    SUBCASE("merged pair puts at least one truth in hard") {
        LoadedScene s;
        s.id = "m";
        s.image = Image(40, 40, 1.0);
        s.truth = {{17.0, 20.0}, {23.0, 20.0}};
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 40; ++x)
                for (const auto& m : s.truth)
                    if (std::hypot(x + 0.5 - m.x, y + 0.5 - m.y) <= 3.6) s.image.at(x, y) = 0.0;
        blob::BlobParams p{0.5, blob::Polarity::dark_on_light, 4, 200, 0.0, 8};
        const auto part = partition_easy_hard({s}, p, 2.0);
        CHECK(part.hard_count >= 1);
        CHECK(part.easy_count + part.hard_count == 2);
    }
    SUBCASE("empty split") {
        const auto p = partition_easy_hard({}, blob::BlobParams{}, 2.0);
        CHECK(p.easy_count == 0);
        CHECK(p.hard_count == 0);
    }
}
