#include <doctest.h>

#include "vtm/errors.hpp"
#include "vtm/nn/grad_check.hpp"
#include "vtm/nn/network.hpp"
#include "vtm/nn/sgd.hpp"
#include "vtm/nn/weights_io.hpp"

#include <cmath>
#include <random>

using namespace vtm::nn;

namespace {

Tensor4 random_tensor(Shape4 s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor4 t(s);
    for (double& v : t.values()) v = u(rng);
    return t;
}

double sum_loss(const Tensor4& out, Tensor4* grad) {
    double s = 0.0;
    for (double v : out.values()) s += v;
    if (grad) *grad = Tensor4(out.shape(), 1.0);
    return s;
}

// 0.5 * sum((out - target)^2) against a fixed random target.
LossFn quadratic(const Tensor4& target) {
    return [target](const Tensor4& out, Tensor4* grad) {
        double s = 0.0;
        if (grad) *grad = Tensor4(out.shape());
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = out.values()[i] - target.values()[i];
            s += 0.5 * d * d;
            if (grad) grad->values()[i] = d;
        }
        return s;
    };
}

}  // namespace

TEST_CASE("identity 1x1 conv passes input through") {
    Network net({2, 3, 3}, {LayerSpec::conv(2, 2, 1)}, 1);
    auto& p = net.params()[0];
    p.weight.fill(0.0);
    p.weight.at(0, 0, 0, 0) = 1.0;
    p.weight.at(1, 1, 0, 0) = 1.0;
    const Tensor4 x = random_tensor({1, 2, 3, 3}, 3);
    const Tensor4 y = forward(net, x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("leaky maps -2 to -0.2") {
    Network net({1, 1, 1}, {LayerSpec::leaky(0.1)}, 1);
    Tensor4 x({1, 1, 1, 1}, -2.0);
    CHECK(forward(net, x).values()[0] == doctest::Approx(-0.2).epsilon(1e-15));
}

TEST_CASE("nearest upsample copies each value into a 2x2 block") {
    Network net({1, 2, 2}, {LayerSpec::upsample(2)}, 1);
    Tensor4 x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    const Tensor4 y = forward(net, x);
    REQUIRE(y.shape() == Shape4{1, 1, 4, 4});
    const double want[4][4] = {{1, 1, 2, 2}, {1, 1, 2, 2}, {3, 3, 4, 4}, {3, 3, 4, 4}};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) CHECK(y.at(0, 0, r, c) == want[r][c]);
}

TEST_CASE("shape algebra: stride-2 halves, upsample doubles") {
    Network net({1, 8, 8},
                {LayerSpec::conv(1, 4, 3, 2), LayerSpec::leaky(), LayerSpec::upsample(2), LayerSpec::conv(4, 1, 1)}, 2);
    CHECK(net.layer_output(0) == InputShape{4, 4, 4});
    CHECK(net.layer_output(2) == InputShape{4, 8, 8});
    CHECK(net.output_shape() == InputShape{1, 8, 8});
}

TEST_CASE("chain validation names the offending layer") {
    CHECK_THROWS_AS(Network({1, 8, 8}, {LayerSpec::conv(1, 4, 3), LayerSpec::conv(3, 2, 3)}, 1), vtm::ConfigError);
    try {
        Network({1, 8, 8}, {LayerSpec::conv(1, 4, 3), LayerSpec::conv(3, 2, 3)}, 1);
    } catch (const vtm::ConfigError& e) {
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
    CHECK_THROWS_AS(Network({1, 8, 8}, {LayerSpec::conv(1, 4, 2)}, 1), vtm::ConfigError);
    CHECK_THROWS_AS(Network({1, 7, 7}, {LayerSpec::conv(1, 4, 3, 2)}, 1), vtm::ConfigError);
    CHECK_THROWS_AS(Network({1, 8, 8}, {LayerSpec::conv(1, 4, 3, 2), LayerSpec::shortcut(5)}, 1), vtm::ConfigError);
    CHECK_THROWS_AS(Network({1, 8, 8}, {LayerSpec::conv(1, 1, 3), LayerSpec::conv(1, 1, 3, 2), LayerSpec::shortcut(0)}, 1),
                    vtm::ConfigError);
}

TEST_CASE("forward rejects a mismatched input") {
    Network net({1, 8, 8}, {LayerSpec::conv(1, 2, 3)}, 1);
    CHECK_THROWS_AS(forward(net, Tensor4({1, 1, 6, 6})), vtm::ConfigError);
}

TEST_CASE("identity conv: weight gradient of sum(output) is the input sum") {
    Network net({1, 4, 4}, {LayerSpec::conv(1, 1, 1)}, 1);
    net.params()[0].weight.fill(1.0);
    const Tensor4 x = random_tensor({1, 1, 4, 4}, 9);
    Tape tape;
    const Tensor4 y = forward(net, x, &tape);
    Tensor4 g;
    sum_loss(y, &g);
    const ParamSet grads = backward(net, tape, g);
    double s = 0.0;
    for (double v : x.values()) s += v;
    CHECK(grads[0].weight.values()[0] == doctest::Approx(s).epsilon(1e-12));
    CHECK(grads[0].bias[0] == doctest::Approx(16.0));
}

TEST_CASE("zero output gradient gives zero weight gradients") {
    Network net({1, 8, 8}, {LayerSpec::conv(1, 3, 3), LayerSpec::leaky(), LayerSpec::conv(3, 2, 3, 2)}, 4);
    Tape tape;
    const Tensor4 y = forward(net, random_tensor({2, 1, 8, 8}, 5), &tape);
    const ParamSet grads = backward(net, tape, Tensor4(y.shape()));
    for (const auto& p : grads) {
        for (double v : p.weight.values()) CHECK(v == 0.0);
        for (double v : p.bias) CHECK(v == 0.0);
    }
}

TEST_CASE("backward without a recorded forward is a state error") {
    Network net({1, 4, 4}, {LayerSpec::conv(1, 1, 1)}, 1);
    Tape tape;
    CHECK_THROWS_AS(backward(net, tape, Tensor4({1, 1, 4, 4})), vtm::StateError);
}

TEST_CASE("finite-difference agreement for every layer kind over 20 seeds") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        CAPTURE(seed);
        Network net({2, 8, 8},
                    {LayerSpec::conv(2, 4, 3), LayerSpec::leaky(), LayerSpec::conv(4, 4, 3, 2), LayerSpec::leaky(),
                     LayerSpec::conv(4, 4, 3), LayerSpec::shortcut(3), LayerSpec::upsample(2), LayerSpec::shortcut(1),
                     LayerSpec::conv(4, 3, 1), LayerSpec::sigmoid()},
                    seed);
        const Tensor4 x = random_tensor({2, 2, 8, 8}, seed * 31);
        const Tensor4 target = random_tensor({2, 3, 8, 8}, seed * 37);
        GradCheckOptions opt;
        opt.max_samples = 120;
        opt.seed = seed;
        std::size_t skipped = 0;
        opt.skipped = &skipped;
        CHECK(grad_check(net, x, quadratic(target), opt) < 1e-3);
        CHECK(skipped < 12);
    }
}

TEST_CASE("kink straddles are what break central differences") {
    // seed 6 has a parameter whose +/-1e-4 passes cross a leaky kink
    Network net({2, 8, 8},
                {LayerSpec::conv(2, 4, 3), LayerSpec::leaky(), LayerSpec::conv(4, 4, 3, 2), LayerSpec::leaky(),
                 LayerSpec::conv(4, 4, 3), LayerSpec::shortcut(3), LayerSpec::upsample(2), LayerSpec::shortcut(1),
                 LayerSpec::conv(4, 3, 1), LayerSpec::sigmoid()},
                6);
    const Tensor4 x = random_tensor({2, 2, 8, 8}, 6 * 31);
    const Tensor4 target = random_tensor({2, 3, 8, 8}, 6 * 37);
    GradCheckOptions opt;
    opt.max_samples = 120;
    opt.seed = 6;
    opt.skip_kinks = false;
    CHECK(grad_check(net, x, quadratic(target), opt) > 1e-3);
    opt.epsilon = 1e-5;
    CHECK(grad_check(net, x, quadratic(target), opt) < 1e-3);
}

TEST_CASE("random two-layer net on 8x8 matches finite differences") {
    Network net({1, 8, 8}, {LayerSpec::conv(1, 3, 3), LayerSpec::leaky(), LayerSpec::conv(3, 2, 3)}, 11);
    CHECK(grad_check(net, random_tensor({1, 1, 8, 8}, 12), quadratic(random_tensor({1, 2, 8, 8}, 13))) < 1e-3);
}

TEST_CASE("linear net with quadratic loss is exact to rounding") {
    Network net({2, 4, 4}, {LayerSpec::conv(2, 2, 3), LayerSpec::conv(2, 1, 1)}, 3);
    CHECK(grad_check(net, random_tensor({1, 2, 4, 4}, 1), quadratic(random_tensor({1, 1, 4, 4}, 2))) < 1e-6);
}

TEST_CASE("grad_check preconditions") {
    Network net({1, 2, 2}, {LayerSpec::conv(1, 1, 1)}, 1);
    const Tensor4 x({1, 1, 2, 2}, 1.0);
    GradCheckOptions opt;
    opt.epsilon = 0.0;
    CHECK_THROWS_AS(grad_check(net, x, sum_loss, opt), vtm::ConfigError);
    LossFn nan_loss = [](const Tensor4& out, Tensor4* g) {
        if (g) *g = Tensor4(out.shape());
        return std::nan("");
    };
    CHECK_THROWS_AS(grad_check(net, x, nan_loss), vtm::NumericError);
}

TEST_CASE("sgd arithmetic") {
    Network net({1, 1, 1}, {LayerSpec::conv(1, 1, 1)}, 1);
    auto& w = net.params()[0].weight.values()[0];
    w = 1.0;
    ParamSet g = net.zero_like();
    g[0].weight.values()[0] = 2.0;

    SUBCASE("plain step") {
        Sgd sgd(0.1, 0.0);
        sgd.step(net, g);
        CHECK(w == doctest::Approx(0.8).epsilon(1e-15));
    }
    SUBCASE("momentum recurrence") {
        Sgd sgd(0.1, 0.9);
        sgd.step(net, g);
        const double before = w;
        sgd.step(net, g);
        CHECK(before - w == doctest::Approx(0.1 * (2.0 + 0.9 * 2.0)).epsilon(1e-14));
    }
    SUBCASE("zero gradient and zero rate leave weights unchanged") {
        Sgd sgd(0.1, 0.5);
        sgd.step(net, net.zero_like());
        CHECK(w == 1.0);
        Sgd frozen(0.0, 0.9);
        frozen.step(net, g);
        CHECK(w == 1.0);
    }
    SUBCASE("bad hyperparameters and shapes") {
        CHECK_THROWS_AS(Sgd(-0.1, 0.0), vtm::ConfigError);
        CHECK_THROWS_AS(Sgd(0.1, 1.0), vtm::ConfigError);
        Sgd sgd(0.1, 0.0);
        CHECK_THROWS_AS(sgd.step(net, ParamSet{}), vtm::ConfigError);
    }
}

TEST_CASE("weights round-trip bit-exactly") {
    Network net({1, 8, 8},
                {LayerSpec::conv(1, 2, 3), LayerSpec::leaky(0.1), LayerSpec::conv(2, 2, 3, 2), LayerSpec::upsample(2),
                 LayerSpec::shortcut(1), LayerSpec::conv(2, 1, 1), LayerSpec::sigmoid()},
                77);
    net.meta()["note"] = "two words";
    const std::string bytes = serialize_weights(net);
    const Network back = parse_weights(bytes);
    CHECK(back.layers() == net.layers());
    CHECK(back.seed() == 77);
    CHECK(back.meta().at("note") == "two words");
    CHECK(serialize_weights(back) == bytes);
    CHECK_THROWS_AS(parse_weights(bytes.substr(0, bytes.size() - 3)), vtm::InputError);
    CHECK_THROWS_AS(parse_weights("garbage"), vtm::InputError);
}

TEST_CASE("same seed gives identical initial weights") {
    auto make = [](std::uint64_t s) { return Network({1, 4, 4}, {LayerSpec::conv(1, 4, 3)}, s); };
    CHECK(serialize_weights(make(5)) == serialize_weights(make(5)));
    CHECK(serialize_weights(make(5)) != serialize_weights(make(6)));
}
