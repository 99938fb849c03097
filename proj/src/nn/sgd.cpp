#include "vtm/nn/sgd.hpp"

#include "vtm/errors.hpp"

namespace vtm::nn {

Sgd::Sgd(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {
    // lr = 0 is allowed so a run can be frozen; negative rates are not.
    if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
}

void Sgd::set_learning_rate(double lr) {
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
    lr_ = lr;
}

void Sgd::step(Network& net, const ParamSet& grads) {
    ParamSet& params = net.params();
    if (grads.size() != params.size()) throw ConfigError("gradient set does not match network parameters");
    if (velocity_.empty()) velocity_ = net.zero_like();
    if (velocity_.size() != params.size()) throw ConfigError("optimizer is bound to a different network");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i].weight.values();
        auto g = grads[i].weight.values();
        auto v = velocity_[i].weight.values();
        if (g.size() != w.size() || v.size() != w.size() || grads[i].bias.size() != params[i].bias.size()) {
            throw ConfigError("gradient shape mismatch at conv " + std::to_string(i));
        }
        for (std::size_t k = 0; k < w.size(); ++k) {
            v[k] = momentum_ * v[k] + g[k];
            w[k] -= lr_ * v[k];
        }
        auto& b = params[i].bias;
        auto& vb = velocity_[i].bias;
        for (std::size_t k = 0; k < b.size(); ++k) {
            vb[k] = momentum_ * vb[k] + grads[i].bias[k];
            b[k] -= lr_ * vb[k];
        }
    }
}

}  // namespace vtm::nn
