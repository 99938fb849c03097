#include <doctest.h>

#include "vtm/errors.hpp"
#include "vtm/mretrain/mretrain.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

using namespace vtm;
using namespace vtm::mretrain;

namespace {

std::vector<MreSample> toy(std::size_t n, std::uint64_t seed, bool random_labels) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<MreSample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& s = out[i];
        const int label = static_cast<int>(i % 2);
        const double base = label ? 7.0 : 2.0;
        for (int k = 0; k < 10; ++k) s.feature[k] = base + 2.0 * k + u(rng);
        s.feature[10] = 0.1 + 0.3 * u(rng);
        s.label = random_labels ? static_cast<int>(rng() % 2) : label;
        s.image_id = "t";
        s.candidate_index = i;
    }
    return out;
}

}  // namespace

TEST_CASE("labeling examples") {
    postproc::PostprocConfig post;
    const MarkerSet truth{{10.0, 10.0}, {60.0, 60.0}};
    SUBCASE("candidate near an unclaimed truth") {
        const auto s = label_candidates("a", {{10.4, 10.0, 0.3}}, truth, 3.0, post);
        REQUIRE(s.size() == 1);
        CHECK(s[0].label == 1);
    }
    SUBCASE("far from every truth") {
        const auto s = label_candidates("a", {{35.0, 35.0, 0.3}}, truth, 3.0, post);
        REQUIRE(s.size() == 1);
        CHECK(s[0].label == 0);
    }
    SUBCASE("truth already claimed by an accepted candidate") {
        const auto s = label_candidates("a", {{10.0, 10.0, 0.9}, {10.4, 10.0, 0.3}}, truth, 3.0, post);
        REQUIRE(s.size() == 1);
        CHECK(s[0].label == 0);
        CHECK(s[0].candidate_index == 1);
    }
    SUBCASE("every candidate below the accept threshold is emitted") {
        const auto s = label_candidates("a", {{1, 1, 0.95}, {2, 50, 0.05}, {3, 30, 0.4}, {4, 70, 0.2}}, truth, 3.0, post);
        REQUIRE(s.size() == 2);
        CHECK(s[0].feature[10] == 0.05);
        CHECK(s[1].feature[10] == 0.2);
        for (const auto& x : s) CHECK(x.feature[10] < 0.4);
    }
    SUBCASE("features use the inference context") {
        const auto s = label_candidates("a", {{1, 1, 0.95}, {2, 50, 0.05}, {3, 30, 0.4}, {4, 70, 0.2}}, truth, 3.0, post);
        REQUIRE(s.size() == 2);
        // the sub-band marker at (2, 50) is not a neighbour of the band marker
        CHECK(s[1].feature[0] == doctest::Approx(std::sqrt(1.0 + 1600.0)));
        CHECK(s[1].feature[1] == doctest::Approx(std::sqrt(9.0 + 4761.0)));
        CHECK(s[1].feature[2] == 208.0);
        // while the sub-band marker sees the full context
        CHECK(s[0].feature[0] == doctest::Approx(std::sqrt(1.0 + 400.0)));
        CHECK(s[0].feature[3] == 208.0);
    }
}

TEST_CASE("balancing 9000 vs 1000") {
    std::vector<MreSample> in(10000);
    for (std::size_t i = 0; i < in.size(); ++i) in[i].label = i % 10 == 0 ? 1 : 0;
    const auto out = balance(in, 4);
    std::size_t pos = 0;
    for (const auto& s : out) pos += static_cast<std::size_t>(s.label);
    CHECK(pos == 1000);
    CHECK(out.size() - pos == 1000);
    const double ratio = static_cast<double>(pos) / static_cast<double>(out.size() - pos);
    CHECK(ratio >= 0.9);
    CHECK(ratio <= 1.1);
    const auto again = balance(in, 4);
    REQUIRE(again.size() == out.size());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(again[i].label == out[i].label);
}

TEST_CASE("separable toy features reach 100% held-out accuracy") {
    MreTrainOptions opt;
    opt.epochs = 40;
    const auto r = train_mre(toy(2000, 1, false), opt);
    CHECK(r.heldout_accuracy == 1.0);
    CHECK(r.heldout_size == 200);
}

TEST_CASE("shuffled labels stay at chance") {
    MreTrainOptions opt;
    opt.epochs = 20;
    const auto r = train_mre(toy(6000, 2, true), opt);
    CHECK(r.heldout_accuracy > 0.45);
    CHECK(r.heldout_accuracy < 0.55);
}

TEST_CASE("training is deterministic and needs both classes") {
    MreTrainOptions opt;
    opt.epochs = 3;
    const auto a = train_mre(toy(300, 3, false), opt);
    const auto b = train_mre(toy(300, 3, false), opt);
    CHECK(a.final_loss == b.final_loss);
    auto one = toy(100, 4, false);
    for (auto& s : one) s.label = 1;
    CHECK_THROWS_AS(train_mre(one, opt), InputError);
}

TEST_CASE("sample CSV round trip") {
    const auto samples = toy(20, 5, false);
    const auto path = std::filesystem::temp_directory_path() / "vtm_mre_samples_test.csv";
    write_mre_csv(samples, path);
    const auto back = read_mre_csv(path);
    REQUIRE(back.size() == samples.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].feature == samples[i].feature);
        CHECK(back[i].label == samples[i].label);
        CHECK(back[i].candidate_index == samples[i].candidate_index);
    }
    std::filesystem::remove(path);
}
