#pragma once

#include "vtm/nn/network.hpp"

#include <cstdint>
#include <functional>

namespace vtm::nn {

/// Scalar loss of a network output. Writes d(loss)/d(output) into `grad` when non-null.
using LossFn = std::function<double(const Tensor4& output, Tensor4* grad)>;

struct GradCheckOptions {
    double epsilon = 1e-4;
    /// Upper bound on checked parameters; 0 checks every weight and bias.
    std::size_t max_samples = 0;
    std::uint64_t seed = 0;
    /// Skip parameters whose +/- epsilon passes flip the sign of some leaky
    /// input: central differences are meaningless across a kink.
    bool skip_kinks = true;
    /// Receives the number of skipped parameters when non-null.
    std::size_t* skipped = nullptr;
};

/// Largest relative error |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
/// over the sampled parameters, with central differences for the numeric side.
/// The network is restored to its original weights before returning.
double grad_check(Network& net, const Tensor4& input, const LossFn& loss, const GradCheckOptions& options = {});

/// Same measure for a loss defined directly on a flat vector of reals.
double grad_check_vector(std::vector<double>& x,
                         const std::function<double(const std::vector<double>&, std::vector<double>*)>& loss,
                         double epsilon);

}  // namespace vtm::nn
