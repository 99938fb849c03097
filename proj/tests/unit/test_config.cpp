#include <doctest.h>

#include "vtm/config/run_config.hpp"
#include "vtm/errors.hpp"

using namespace vtm;
using namespace vtm::config;

TEST_CASE("defaults round-trip through JSON") {
    const RunConfig c;
    const RunConfig back = from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(config_hash(back) == config_hash(c));
    c.validate();
}

TEST_CASE("partial documents keep defaults") {
    const RunConfig c = from_json(R"({"marknet": {"grid_size": 13}, "data": {"tau": 1.5}})");
    CHECK(c.marknet.grid_size == 13);
    CHECK(c.marknet.candidates == 3);
    CHECK(c.tau() == 1.5);
    CHECK(from_json("{}").tau() == 2.0);
}

TEST_CASE("distribution overrides merge into the defaults") {
    const RunConfig c = from_json(R"({"data": {"distribution": {"max_slide": 0.5}}})");
    CHECK(c.data.distribution.max_slide == 0.5);
    CHECK(c.data.distribution.press_radius == synth::SpecDistribution{}.press_radius);
}

TEST_CASE("bad documents") {
    CHECK_THROWS_AS(from_json(R"({"marknet": {"gridsize": 13}})"), ConfigError);
    CHECK_THROWS_AS(from_json(R"({"extra": 1})"), ConfigError);
    CHECK_THROWS_AS(from_json("[1, 2]"), ConfigError);
    CHECK_THROWS_AS(from_json("{"), ConfigError);
    CHECK_THROWS_AS(from_json(R"({"marknet": {"grid_size": "x"}})"), ConfigError);
    CHECK_THROWS_AS(from_json(R"({"marknet": {"grid_size": 25}})").validate(), ConfigError);
    CHECK_THROWS_AS(from_json(R"({"data": {"scenes": 5}})").validate(), ConfigError);
}

TEST_CASE("hash changes with content") {
    RunConfig a, b;
    b.marknet.seed = 2;
    CHECK(config_hash(a) != config_hash(b));
}
