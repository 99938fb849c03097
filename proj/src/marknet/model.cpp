#include "vtm/marknet/model.hpp"

#include "vtm/errors.hpp"

#include <bit>
#include <cstdio>
#include <string>

namespace vtm::marknet {

namespace {

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2i(int v) { return std::countr_zero(static_cast<unsigned>(v)); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

nn::Network build_backbone(const MarknetConfig& cfg) {
    cfg.validate();
    const int stride = cfg.stride();
    if (!is_pow2(stride) || stride < 2) {
        throw ConfigError("stride W/S = " + std::to_string(stride) + " must be a power of two >= 2");
    }
    const int w = cfg.image_size;
    // Deepest stage sits at stride 8, or one level below the head when that divides W.
    int depth = std::max(3, log2i(stride) + 1);
    while (depth > log2i(stride) && depth > 1 && w % (1 << depth) != 0) --depth;
    if (w % (1 << depth) != 0 || depth < log2i(stride)) {
        throw ConfigError("image size " + std::to_string(w) + " cannot reach stride " + std::to_string(stride));
    }

    using nn::LayerSpec;
    std::vector<LayerSpec> layers;
    auto add = [&](LayerSpec s) {
        layers.push_back(s);
        return static_cast<int>(layers.size()) - 1;
    };
    auto width = [&](int level) { return cfg.base_channels << level; };

    add(LayerSpec::conv(1, width(0), 3));
    int last = add(LayerSpec::leaky());
    std::vector<int> stage_out(static_cast<std::size_t>(depth) + 1, -1);
    stage_out[0] = last;
    for (int level = 1; level <= depth; ++level) {
        const int in = width(level - 1);
        const int out = width(level);
        add(LayerSpec::conv(in, out, 3, 2));
        const int entry = add(LayerSpec::leaky());
        add(LayerSpec::conv(out, out, 3));
        add(LayerSpec::leaky());
        add(LayerSpec::conv(out, out, 3));
        add(LayerSpec::leaky());
        last = add(LayerSpec::shortcut(entry));
        stage_out[static_cast<std::size_t>(level)] = last;
    }
    int channels = width(depth);
    for (int level = depth - 1; level >= log2i(stride); --level) {
        const int target = width(level);
        add(LayerSpec::conv(channels, target, 1));
        add(LayerSpec::leaky());
        add(LayerSpec::upsample(2));
        last = add(LayerSpec::shortcut(stage_out[static_cast<std::size_t>(level)]));
        channels = target;
    }
    add(LayerSpec::conv(channels, 3 * cfg.candidates, 1));

    nn::Network net({1, static_cast<std::size_t>(w), static_cast<std::size_t>(w)}, std::move(layers), cfg.seed);
    const auto& out = net.output_shape();
    if (out.h != static_cast<std::size_t>(cfg.grid_size) || out.w != static_cast<std::size_t>(cfg.grid_size)) {
        throw ConfigError("backbone output is not S x S");
    }
    // Start every candidate at low confidence (sigma(-2) ~ 0.12) and its cell center.
    auto& head = net.params().back();
    for (int k = 0; k < cfg.candidates; ++k) head.bias[static_cast<std::size_t>(3 * k + kC)] = -2.0;
    store_config(net, cfg);
    return net;
}

void store_config(nn::Network& net, const MarknetConfig& cfg) {
    auto& m = net.meta();
    m["marknet.image_size"] = std::to_string(cfg.image_size);
    m["marknet.grid_size"] = std::to_string(cfg.grid_size);
    m["marknet.candidates"] = std::to_string(cfg.candidates);
    m["marknet.base_channels"] = std::to_string(cfg.base_channels);
    m["marknet.alpha"] = fmt(cfg.alpha);
    m["marknet.beta"] = fmt(cfg.beta);
    m["marknet.accept_threshold"] = fmt(cfg.accept_threshold);
    m["marknet.band_low"] = fmt(cfg.band_low);
    m["marknet.band_high"] = fmt(cfg.band_high);
    m["marknet.seed"] = std::to_string(cfg.seed);
}

MarknetConfig load_config(const nn::Network& net) {
    const auto& m = net.meta();
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = m.find(key);
        if (it == m.end()) throw InputError("weights lack metadata key " + key);
        return it->second;
    };
    MarknetConfig cfg;
    try {
        cfg.image_size = std::stoi(get("marknet.image_size"));
        cfg.grid_size = std::stoi(get("marknet.grid_size"));
        cfg.candidates = std::stoi(get("marknet.candidates"));
        cfg.base_channels = std::stoi(get("marknet.base_channels"));
        cfg.alpha = std::stod(get("marknet.alpha"));
        cfg.beta = std::stod(get("marknet.beta"));
        cfg.accept_threshold = std::stod(get("marknet.accept_threshold"));
        cfg.band_low = std::stod(get("marknet.band_low"));
        cfg.band_high = std::stod(get("marknet.band_high"));
        cfg.seed = std::stoull(get("marknet.seed"));
    } catch (const std::invalid_argument&) {
        throw InputError("weights carry unparsable marknet metadata");
    }
    cfg.validate();
    return cfg;
}

nn::Tensor4 to_batch(std::span<const Image* const> images) {
    if (images.empty()) throw InputError("empty image batch");
    const int w = images.front()->width();
    const int h = images.front()->height();
    nn::Tensor4 batch({images.size(), 1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    for (std::size_t n = 0; n < images.size(); ++n) {
        if (images[n]->width() != w || images[n]->height() != h) throw InputError("images in a batch differ in size");
        auto px = images[n]->pixels();
        std::copy(px.begin(), px.end(), batch.plane(n, 0));
    }
    return batch;
}

GridPrediction predict_grid(const nn::Network& net, const Image& image, const MarknetConfig& cfg) {
    if (image.width() != cfg.image_size || image.height() != cfg.image_size) {
        throw InputError("image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                         ", model expects " + std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size));
    }
    const Image* one[] = {&image};
    const nn::Tensor4 head = nn::forward(net, to_batch(one));
    return GridPrediction::from_head(head, 0, cfg.candidates);
}

}  // namespace vtm::marknet
