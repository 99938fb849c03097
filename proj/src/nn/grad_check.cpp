#include "vtm/nn/grad_check.hpp"

#include "vtm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vtm::nn {

namespace {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

double checked(double v) {
    if (!std::isfinite(v)) throw NumericError("loss is not finite during gradient check");
    return v;
}

std::vector<bool> leaky_signs(const Network& net, const Tape& tape) {
    std::vector<bool> out;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        if (net.layers()[i].kind != LayerKind::leaky) continue;
        for (double v : tape.activations[i].values()) out.push_back(v > 0.0);
    }
    return out;
}

}  // namespace

double grad_check(Network& net, const Tensor4& input, const LossFn& loss, const GradCheckOptions& options) {
    if (!(options.epsilon > 0.0)) throw ConfigError("gradient check epsilon must be positive");
    Tape tape;
    const Tensor4 out = forward(net, input, &tape);
    Tensor4 dout(out.shape());
    checked(loss(out, &dout));
    const ParamSet analytic = backward(net, tape, dout);

    // Flatten (param slot, is_bias, index) handles.
    struct Handle {
        std::size_t slot;
        bool bias;
        std::size_t index;
    };
    std::vector<Handle> handles;
    for (std::size_t s = 0; s < net.params().size(); ++s) {
        for (std::size_t k = 0; k < net.params()[s].weight.size(); ++k) handles.push_back({s, false, k});
        for (std::size_t k = 0; k < net.params()[s].bias.size(); ++k) handles.push_back({s, true, k});
    }
    if (options.max_samples > 0 && handles.size() > options.max_samples) {
        std::mt19937_64 rng(options.seed);
        std::shuffle(handles.begin(), handles.end(), rng);
        handles.resize(options.max_samples);
    }

    double worst = 0.0;
    std::size_t skipped = 0;
    for (const Handle& h : handles) {
        double& w = h.bias ? net.params()[h.slot].bias[h.index] : net.params()[h.slot].weight.values()[h.index];
        const double original = w;
        Tape tu, td;
        w = original + options.epsilon;
        const double up = checked(loss(forward(net, input, &tu), nullptr));
        w = original - options.epsilon;
        const double down = checked(loss(forward(net, input, &td), nullptr));
        w = original;
        if (options.skip_kinks && leaky_signs(net, tu) != leaky_signs(net, td)) {
            ++skipped;
            continue;
        }
        const double numeric = (up - down) / (2.0 * options.epsilon);
        const double a = h.bias ? analytic[h.slot].bias[h.index] : analytic[h.slot].weight.values()[h.index];
        worst = std::max(worst, relative_error(a, numeric));
    }
    if (options.skipped) *options.skipped = skipped;
    return worst;
}

double grad_check_vector(std::vector<double>& x,
                         const std::function<double(const std::vector<double>&, std::vector<double>*)>& loss,
                         double epsilon) {
    if (!(epsilon > 0.0)) throw ConfigError("gradient check epsilon must be positive");
    std::vector<double> analytic(x.size(), 0.0);
    checked(loss(x, &analytic));
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double original = x[i];
        x[i] = original + epsilon;
        const double up = checked(loss(x, nullptr));
        x[i] = original - epsilon;
        const double down = checked(loss(x, nullptr));
        x[i] = original;
        worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * epsilon)));
    }
    return worst;
}

}  // namespace vtm::nn
