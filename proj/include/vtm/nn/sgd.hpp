#pragma once

#include "vtm/nn/network.hpp"

namespace vtm::nn {

/// Momentum SGD: v <- momentum * v + g; w <- w - lr * v.
/// Velocity buffers are created on the first step and bound to that network's shapes.
class Sgd {
public:
    Sgd(double learning_rate, double momentum);

    void step(Network& net, const ParamSet& grads);

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr);
    double momentum() const { return momentum_; }

private:
    double lr_;
    double momentum_;
    ParamSet velocity_;
};

}  // namespace vtm::nn
