#pragma once

#include "vtm/nn/tensor.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vtm::nn {

enum class LayerKind { conv, leaky, shortcut_add, upsample_nearest, sigmoid_head };

std::string to_string(LayerKind kind);

/// One entry of a sequential layer chain. Only the fields relevant to `kind`
/// are meaningful; use the named constructors.
struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    // conv
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    // leaky
    double slope = 0.1;
    // shortcut-add: index of an earlier layer whose output is added to the previous output
    int source = -1;
    // upsample-nearest
    int scale = 2;

    static LayerSpec conv(int in, int out, int kernel, int stride = 1);
    static LayerSpec leaky(double slope = 0.1);
    static LayerSpec shortcut(int source);
    static LayerSpec upsample(int scale = 2);
    static LayerSpec sigmoid();

    bool operator==(const LayerSpec&) const = default;
};

/// Weights of one conv layer: kernel (out, in, k, k) and one bias per output channel.
struct ConvParams {
    Tensor4 weight;
    std::vector<double> bias;
};

/// Per-conv-layer parameter tensors, in layer order. Gradients use the same type.
using ParamSet = std::vector<ConvParams>;

/// Per-sample input shape (channels, height, width).
struct InputShape {
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;
    bool operator==(const InputShape&) const = default;
};

/// Sequential network with shortcut connections. Each layer consumes the
/// previous layer's output; a shortcut-add layer additionally adds the output
/// of its source layer.
class Network {
public:
    Network() = default;

    /// Validates the chain and initializes weights (He-style uniform, zero bias)
    /// from `seed`. Throws ConfigError naming the first inconsistent layer.
    Network(InputShape input, std::vector<LayerSpec> layers, std::uint64_t seed);

    const InputShape& input_shape() const { return input_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    std::uint64_t seed() const { return seed_; }

    /// Output shape (per sample) of layer i; the last one is the network output.
    const InputShape& layer_output(std::size_t i) const { return outputs_.at(i); }
    const InputShape& output_shape() const { return outputs_.back(); }

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    /// Index into params() for conv layer i; nullopt for parameterless layers.
    std::optional<std::size_t> param_index(std::size_t layer) const;

    std::size_t parameter_count() const;

    /// Free-form key/value metadata persisted with the weights.
    std::map<std::string, std::string>& meta() { return meta_; }
    const std::map<std::string, std::string>& meta() const { return meta_; }

    /// A zero-valued ParamSet with the shapes of params().
    ParamSet zero_like() const;

private:
    InputShape input_;
    std::vector<LayerSpec> layers_;
    std::vector<InputShape> outputs_;
    std::vector<int> param_slot_;
    ParamSet params_;
    std::uint64_t seed_ = 0;
    std::map<std::string, std::string> meta_;
};

/// Intermediates retained by a forward pass for the matching backward pass.
/// activations[0] is the input; activations[i + 1] is the output of layer i.
struct Tape {
    std::vector<Tensor4> activations;
    bool recorded() const { return !activations.empty(); }
    void clear() { activations.clear(); }
};

/// Runs the chain on a batch. Deterministic and free of hidden mutation, so
/// concurrent calls on a shared const Network are safe. Pass a tape to retain
/// intermediates for backward.
Tensor4 forward(const Network& net, const Tensor4& input, Tape* tape = nullptr);

/// Reverse-mode pass from d(loss)/d(output). Returns gradients shaped like the
/// parameters; if `input_grad` is given it receives d(loss)/d(input).
/// Throws StateError when the tape holds no forward pass.
ParamSet backward(const Network& net, const Tape& tape, const Tensor4& output_grad,
                  Tensor4* input_grad = nullptr);

/// Adds `src` into `dst` element-wise. Shapes must agree.
void accumulate(ParamSet& dst, const ParamSet& src);
/// Multiplies every gradient entry by `factor`.
void scale(ParamSet& grads, double factor);
bool all_finite(const ParamSet& params);

}  // namespace vtm::nn
