#include "vtm/nn/network.hpp"

#include "vtm/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>

namespace vtm::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

std::string layer_name(std::size_t i, const LayerSpec& spec) {
    return "layer " + std::to_string(i) + " (" + to_string(spec.kind) + ")";
}

std::size_t conv_out(std::size_t in, const LayerSpec& s) {
    return (in + 2 * static_cast<std::size_t>(s.padding) - static_cast<std::size_t>(s.kernel)) /
               static_cast<std::size_t>(s.stride) +
           1;
}

// Unfolds one sample's (C, H, W) map into a (C*k*k, Ho*Wo) column matrix.
void im2col(const double* x, std::size_t channels, std::size_t h, std::size_t w, const LayerSpec& s,
            std::size_t ho, std::size_t wo, double* cols) {
    const auto k = static_cast<std::size_t>(s.kernel);
    const long stride = s.stride;
    const long pad = s.padding;
    for (std::size_t c = 0; c < channels; ++c) {
        const double* xc = x + c * h * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                double* row = cols + ((c * k + ky) * k + kx) * ho * wo;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
                    double* dst = row + oy * wo;
                    if (iy < 0 || iy >= static_cast<long>(h)) {
                        std::fill(dst, dst + wo, 0.0);
                        continue;
                    }
                    const double* src = xc + static_cast<std::size_t>(iy) * w;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
                        dst[ox] = (ix < 0 || ix >= static_cast<long>(w)) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters column gradients back onto the (C, H, W) map.
void col2im(const double* cols, std::size_t channels, std::size_t h, std::size_t w, const LayerSpec& s,
            std::size_t ho, std::size_t wo, double* dx) {
    const auto k = static_cast<std::size_t>(s.kernel);
    const long stride = s.stride;
    const long pad = s.padding;
    for (std::size_t c = 0; c < channels; ++c) {
        double* dxc = dx + c * h * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double* row = cols + ((c * k + ky) * k + kx) * ho * wo;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    const double* src = row + oy * wo;
                    double* dst = dxc + static_cast<std::size_t>(iy) * w;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
                        if (ix >= 0 && ix < static_cast<long>(w)) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

bool is_pointwise(const LayerSpec& s) { return s.kernel == 1 && s.stride == 1 && s.padding == 0; }

void conv_forward(const LayerSpec& s, const ConvParams& p, const Tensor4& x, Tensor4& y) {
    const Shape4 xs = x.shape();
    const Shape4 ys = y.shape();
    const std::size_t rows = xs.c * static_cast<std::size_t>(s.kernel * s.kernel);
    const std::size_t cols_n = ys.plane();
    AlignedBuffer cols;
    if (!is_pointwise(s)) cols.resize(rows * cols_n);
    ConstMatMap wmat(p.weight.data(), static_cast<Eigen::Index>(ys.c), static_cast<Eigen::Index>(rows));
    for (std::size_t n = 0; n < xs.n; ++n) {
        const double* colptr = x.plane(n, 0);
        if (!is_pointwise(s)) {
            im2col(x.plane(n, 0), xs.c, xs.h, xs.w, s, ys.h, ys.w, cols.data());
            colptr = cols.data();
        }
        ConstMatMap cm(colptr, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols_n));
        MatMap out(y.plane(n, 0), static_cast<Eigen::Index>(ys.c), static_cast<Eigen::Index>(cols_n));
        out.noalias() = wmat * cm;
        for (std::size_t o = 0; o < ys.c; ++o) out.row(static_cast<Eigen::Index>(o)).array() += p.bias[o];
    }
}

void conv_backward(const LayerSpec& s, const ConvParams& p, const Tensor4& x, const Tensor4& dy,
                   ConvParams& grad, Tensor4* dx) {
    const Shape4 xs = x.shape();
    const Shape4 ys = dy.shape();
    const std::size_t rows = xs.c * static_cast<std::size_t>(s.kernel * s.kernel);
    const std::size_t cols_n = ys.plane();
    AlignedBuffer cols;
    AlignedBuffer dcols;
    if (!is_pointwise(s)) {
        cols.resize(rows * cols_n);
        if (dx) dcols.resize(rows * cols_n);
    }
    ConstMatMap wmat(p.weight.data(), static_cast<Eigen::Index>(ys.c), static_cast<Eigen::Index>(rows));
    MatMap gw(grad.weight.data(), static_cast<Eigen::Index>(ys.c), static_cast<Eigen::Index>(rows));
    for (std::size_t n = 0; n < xs.n; ++n) {
        const double* colptr = x.plane(n, 0);
        if (!is_pointwise(s)) {
            im2col(x.plane(n, 0), xs.c, xs.h, xs.w, s, ys.h, ys.w, cols.data());
            colptr = cols.data();
        }
        ConstMatMap cm(colptr, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols_n));
        ConstMatMap g(dy.plane(n, 0), static_cast<Eigen::Index>(ys.c), static_cast<Eigen::Index>(cols_n));
        gw.noalias() += g * cm.transpose();
        for (std::size_t o = 0; o < ys.c; ++o) grad.bias[o] += g.row(static_cast<Eigen::Index>(o)).sum();
        if (dx) {
            if (is_pointwise(s)) {
                MatMap d(dx->plane(n, 0), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols_n));
                d.noalias() += wmat.transpose() * g;
            } else {
                MatMap dc(dcols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols_n));
                dc.noalias() = wmat.transpose() * g;
                col2im(dcols.data(), xs.c, xs.h, xs.w, s, ys.h, ys.w, dx->plane(n, 0));
            }
        }
    }
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::leaky: return "leaky";
        case LayerKind::shortcut_add: return "shortcut";
        case LayerKind::upsample_nearest: return "upsample";
        case LayerKind::sigmoid_head: return "sigmoid";
    }
    return "unknown";
}

LayerSpec LayerSpec::conv(int in, int out, int kernel, int stride) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = (kernel - 1) / 2;
    return s;
}

LayerSpec LayerSpec::leaky(double slope) {
    LayerSpec s;
    s.kind = LayerKind::leaky;
    s.slope = slope;
    return s;
}

LayerSpec LayerSpec::shortcut(int source) {
    LayerSpec s;
    s.kind = LayerKind::shortcut_add;
    s.source = source;
    return s;
}

LayerSpec LayerSpec::upsample(int scale) {
    LayerSpec s;
    s.kind = LayerKind::upsample_nearest;
    s.scale = scale;
    return s;
}

LayerSpec LayerSpec::sigmoid() {
    LayerSpec s;
    s.kind = LayerKind::sigmoid_head;
    return s;
}

Network::Network(InputShape input, std::vector<LayerSpec> layers, std::uint64_t seed)
    : input_(input), layers_(std::move(layers)), seed_(seed) {
    if (input_.c == 0 || input_.h == 0 || input_.w == 0) throw ConfigError("network input dims must be positive");
    if (layers_.empty()) throw ConfigError("network needs at least one layer");
    std::mt19937_64 rng(seed);
    InputShape cur = input_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& s = layers_[i];
        const std::string name = layer_name(i, s);
        switch (s.kind) {
            case LayerKind::conv: {
                if (s.kernel < 1 || s.kernel % 2 == 0) throw ConfigError(name + ": kernel size must be odd");
                if (s.stride != 1 && s.stride != 2) throw ConfigError(name + ": stride must be 1 or 2");
                if (s.padding != (s.kernel - 1) / 2) throw ConfigError(name + ": padding must be (k-1)/2");
                if (s.in_channels <= 0 || s.out_channels <= 0) throw ConfigError(name + ": channels must be positive");
                if (static_cast<std::size_t>(s.in_channels) != cur.c) {
                    throw ConfigError(name + ": expects " + std::to_string(s.in_channels) + " input channels, got " +
                                      std::to_string(cur.c));
                }
                if (s.stride == 2 && (cur.h % 2 != 0 || cur.w % 2 != 0)) {
                    throw ConfigError(name + ": stride-2 conv needs even spatial dims");
                }
                ConvParams p;
                const auto k = static_cast<std::size_t>(s.kernel);
                p.weight = Tensor4({static_cast<std::size_t>(s.out_channels), cur.c, k, k});
                p.bias.assign(static_cast<std::size_t>(s.out_channels), 0.0);
                const double fan_in = static_cast<double>(cur.c * k * k);
                const double bound = std::sqrt(6.0 / ((1.0 + 0.01) * fan_in));
                std::uniform_real_distribution<double> dist(-bound, bound);
                for (double& v : p.weight.values()) v = dist(rng);
                param_slot_.push_back(static_cast<int>(params_.size()));
                params_.push_back(std::move(p));
                cur = {static_cast<std::size_t>(s.out_channels), conv_out(cur.h, s), conv_out(cur.w, s)};
                break;
            }
            case LayerKind::shortcut_add: {
                if (s.source < 0 || static_cast<std::size_t>(s.source) >= i) {
                    throw ConfigError(name + ": shortcut source must be an earlier layer");
                }
                if (!(outputs_[static_cast<std::size_t>(s.source)] == cur)) {
                    throw ConfigError(name + ": shortcut source layer " + std::to_string(s.source) +
                                      " has different output dims");
                }
                param_slot_.push_back(-1);
                break;
            }
            case LayerKind::upsample_nearest: {
                if (s.scale < 1) throw ConfigError(name + ": scale must be a positive integer");
                cur.h *= static_cast<std::size_t>(s.scale);
                cur.w *= static_cast<std::size_t>(s.scale);
                param_slot_.push_back(-1);
                break;
            }
            case LayerKind::leaky:
            case LayerKind::sigmoid_head:
                param_slot_.push_back(-1);
                break;
        }
        outputs_.push_back(cur);
    }
}

std::optional<std::size_t> Network::param_index(std::size_t layer) const {
    const int slot = param_slot_.at(layer);
    if (slot < 0) return std::nullopt;
    return static_cast<std::size_t>(slot);
}

std::size_t Network::parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.weight.size() + p.bias.size();
    return total;
}

ParamSet Network::zero_like() const {
    ParamSet out;
    out.reserve(params_.size());
    for (const auto& p : params_) {
        out.push_back({Tensor4(p.weight.shape()), std::vector<double>(p.bias.size(), 0.0)});
    }
    return out;
}

Tensor4 forward(const Network& net, const Tensor4& input, Tape* tape) {
    const InputShape& in = net.input_shape();
    const Shape4 xs = input.shape();
    if (xs.c != in.c || xs.h != in.h || xs.w != in.w || xs.n == 0) {
        throw ConfigError("input dims " + xs.str() + " do not match network input (" + std::to_string(in.c) + ',' +
                          std::to_string(in.h) + ',' + std::to_string(in.w) + ')');
    }
    std::vector<Tensor4> acts;
    acts.reserve(net.layers().size() + 1);
    acts.push_back(input);
    const std::size_t batch = xs.n;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const LayerSpec& s = net.layers()[i];
        const Tensor4& x = acts.back();
        const InputShape& os = net.layer_output(i);
        Tensor4 y({batch, os.c, os.h, os.w});
        switch (s.kind) {
            case LayerKind::conv:
                conv_forward(s, net.params()[*net.param_index(i)], x, y);
                break;
            case LayerKind::leaky: {
                const double* src = x.data();
                double* dst = y.data();
                for (std::size_t k = 0; k < y.size(); ++k) dst[k] = src[k] > 0.0 ? src[k] : s.slope * src[k];
                break;
            }
            case LayerKind::shortcut_add: {
                const Tensor4& other = acts[static_cast<std::size_t>(s.source) + 1];
                const double* a = x.data();
                const double* b = other.data();
                double* dst = y.data();
                for (std::size_t k = 0; k < y.size(); ++k) dst[k] = a[k] + b[k];
                break;
            }
            case LayerKind::upsample_nearest: {
                const auto f = static_cast<std::size_t>(s.scale);
                const Shape4 is = x.shape();
                for (std::size_t n = 0; n < batch; ++n) {
                    for (std::size_t c = 0; c < is.c; ++c) {
                        const double* src = x.plane(n, c);
                        double* dst = y.plane(n, c);
                        for (std::size_t oy = 0; oy < os.h; ++oy) {
                            const double* srow = src + (oy / f) * is.w;
                            double* drow = dst + oy * os.w;
                            for (std::size_t ox = 0; ox < os.w; ++ox) drow[ox] = srow[ox / f];
                        }
                    }
                }
                break;
            }
            case LayerKind::sigmoid_head: {
                const double* src = x.data();
                double* dst = y.data();
                for (std::size_t k = 0; k < y.size(); ++k) dst[k] = sigmoid(src[k]);
                break;
            }
        }
        acts.push_back(std::move(y));
    }
    Tensor4 out = acts.back();
    if (tape) tape->activations = std::move(acts);
    return out;
}

ParamSet backward(const Network& net, const Tape& tape, const Tensor4& output_grad, Tensor4* input_grad) {
    if (!tape.recorded()) throw StateError("backward called without a recorded forward pass");
    const auto& acts = tape.activations;
    if (acts.size() != net.layers().size() + 1) throw StateError("tape does not belong to this network");
    if (!(output_grad.shape() == acts.back().shape())) {
        throw ConfigError("output gradient dims " + output_grad.shape().str() + " do not match output " +
                          acts.back().shape().str());
    }
    ParamSet grads = net.zero_like();
    // grads_act[i] = d loss / d acts[i]; allocated lazily.
    std::vector<Tensor4> ga(acts.size());
    ga.back() = output_grad;
    auto grad_of = [&](std::size_t i) -> Tensor4& {
        if (ga[i].empty()) ga[i] = Tensor4(acts[i].shape());
        return ga[i];
    };
    for (std::size_t li = net.layers().size(); li-- > 0;) {
        const LayerSpec& s = net.layers()[li];
        if (ga[li + 1].empty()) {
            // Output unused downstream; contributes nothing.
            continue;
        }
        const Tensor4& dy = ga[li + 1];
        const Tensor4& x = acts[li];
        const bool need_dx = li > 0 || input_grad != nullptr;
        switch (s.kind) {
            case LayerKind::conv: {
                const std::size_t slot = *net.param_index(li);
                conv_backward(s, net.params()[slot], x, dy, grads[slot], need_dx ? &grad_of(li) : nullptr);
                break;
            }
            case LayerKind::leaky: {
                Tensor4& dx = grad_of(li);
                const double* xv = x.data();
                const double* g = dy.data();
                double* d = dx.data();
                for (std::size_t k = 0; k < dx.size(); ++k) d[k] += xv[k] > 0.0 ? g[k] : s.slope * g[k];
                break;
            }
            case LayerKind::shortcut_add: {
                Tensor4& dx = grad_of(li);
                Tensor4& dsrc = grad_of(static_cast<std::size_t>(s.source) + 1);
                const double* g = dy.data();
                double* d = dx.data();
                double* e = dsrc.data();
                for (std::size_t k = 0; k < dx.size(); ++k) {
                    d[k] += g[k];
                    e[k] += g[k];
                }
                break;
            }
            case LayerKind::upsample_nearest: {
                Tensor4& dx = grad_of(li);
                const auto f = static_cast<std::size_t>(s.scale);
                const Shape4 is = x.shape();
                const Shape4 os = dy.shape();
                for (std::size_t n = 0; n < is.n; ++n) {
                    for (std::size_t c = 0; c < is.c; ++c) {
                        const double* src = dy.plane(n, c);
                        double* dst = dx.plane(n, c);
                        for (std::size_t oy = 0; oy < os.h; ++oy) {
                            double* drow = dst + (oy / f) * is.w;
                            const double* srow = src + oy * os.w;
                            for (std::size_t ox = 0; ox < os.w; ++ox) drow[ox / f] += srow[ox];
                        }
                    }
                }
                break;
            }
            case LayerKind::sigmoid_head: {
                Tensor4& dx = grad_of(li);
                const double* yv = acts[li + 1].data();
                const double* g = dy.data();
                double* d = dx.data();
                for (std::size_t k = 0; k < dx.size(); ++k) d[k] += g[k] * yv[k] * (1.0 - yv[k]);
                break;
            }
        }
        // Free intermediate gradients as soon as they are consumed.
        if (li + 1 < ga.size() - 1) ga[li + 1] = Tensor4();
    }
    if (input_grad) *input_grad = ga[0].empty() ? Tensor4(acts[0].shape()) : std::move(ga[0]);
    return grads;
}

void accumulate(ParamSet& dst, const ParamSet& src) {
    if (dst.size() != src.size()) throw ConfigError("parameter set size mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (!(dst[i].weight.shape() == src[i].weight.shape()) || dst[i].bias.size() != src[i].bias.size()) {
            throw ConfigError("parameter shape mismatch at conv " + std::to_string(i));
        }
        auto d = dst[i].weight.values();
        auto s = src[i].weight.values();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
        for (std::size_t k = 0; k < dst[i].bias.size(); ++k) dst[i].bias[k] += src[i].bias[k];
    }
}

void scale(ParamSet& grads, double factor) {
    for (auto& p : grads) {
        for (double& v : p.weight.values()) v *= factor;
        for (double& v : p.bias) v *= factor;
    }
}

bool all_finite(const ParamSet& params) {
    for (const auto& p : params) {
        if (!p.weight.all_finite()) return false;
        for (double v : p.bias) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

}  // namespace vtm::nn
