#include "vtm/postproc/postproc.hpp"

#include "vtm/errors.hpp"
#include "vtm/marknet/grid.hpp"
#include "vtm/marknet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_map>

namespace vtm::postproc {

namespace {

constexpr std::size_t kNeighbors = 10;

}  // namespace

void PostprocConfig::validate() const {
    if (!(0.0 < band_low && band_low < band_high && band_high <= accept_threshold && accept_threshold <= 1.0)) {
        throw ConfigError("need 0 < band_low < band_high <= accept_threshold <= 1");
    }
    if (!(mre_threshold > 0.0 && mre_threshold < 1.0)) throw ConfigError("MRE threshold must lie in (0,1)");
    if (!(dedup_radius >= 0.0)) throw ConfigError("dedup radius must be non-negative");
    if (!(sentinel > 0.0)) throw ConfigError("sentinel distance must be positive");
    if (!(baseline_threshold > 0.0 && baseline_threshold < 1.0)) throw ConfigError("baseline threshold must lie in (0,1)");
}

PostprocConfig PostprocConfig::defaults_for(const marknet::MarknetConfig& cfg) {
    PostprocConfig p;
    p.accept_threshold = cfg.accept_threshold;
    p.band_low = cfg.band_low;
    p.band_high = cfg.band_high;
    p.dedup_radius = cfg.stride() / 2.0;
    p.sentinel = 2.0 * cfg.image_size;
    return p;
}

ConfidencePartition confidence_partition(const MarkerSet& candidates, const PostprocConfig& cfg) {
    ConfidencePartition out;
    for (const Marker& m : candidates) {
        if (m.c > cfg.accept_threshold) {
            out.accepted.push_back(m);
        } else if (m.c >= cfg.band_low && m.c <= cfg.band_high) {
            out.to_evaluate.push_back(m);
        } else {
            out.rejected.push_back(m);
        }
    }
    return out;
}

RationalityFeature build_feature(std::size_t target, const MarkerSet& all, double sentinel) {
    if (target >= all.size()) throw InputError("feature target index out of range");
    std::vector<double> d;
    d.reserve(all.size());
    for (std::size_t j = 0; j < all.size(); ++j) {
        if (j != target) d.push_back(distance(all[target], all[j]));
    }
    const std::size_t k = std::min(kNeighbors, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    RationalityFeature v;
    for (std::size_t i = 0; i < kNeighbors; ++i) v[i] = i < k ? d[i] : sentinel;
    v[kNeighbors] = all[target].c;
    return v;
}

RationalityFeature build_feature(const Marker& target, const MarkerSet& all, double sentinel) {
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i].x == target.x && all[i].y == target.y && all[i].c == target.c) return build_feature(i, all, sentinel);
    }
    throw InputError("feature target is not part of the predicted set");
}

MreModel::MreModel(double distance_scale, std::uint64_t seed, int hidden1, int hidden2) : scale_(distance_scale) {
    if (!(distance_scale > 0.0)) throw ConfigError("MRE distance scale must be positive");
    using nn::LayerSpec;
    net_ = nn::Network({11, 1, 1},
                       {LayerSpec::conv(11, hidden1, 1), LayerSpec::leaky(), LayerSpec::conv(hidden1, hidden2, 1),
                        LayerSpec::leaky(), LayerSpec::conv(hidden2, 1, 1), LayerSpec::sigmoid()},
                       seed);
    store_meta();
}

namespace {

std::string join17(const RationalityFeature& f) {
    std::string out;
    char buf[32];
    for (std::size_t i = 0; i < f.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", f[i]);
        if (i) out += ',';
        out += buf;
    }
    return out;
}

RationalityFeature split17(const std::string& s, const char* key) {
    RationalityFeature f{};
    std::size_t pos = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const std::size_t end = s.find(',', pos);
        if ((end == std::string::npos) != (i + 1 == f.size())) throw InputError(std::string("malformed ") + key);
        try {
            f[i] = std::stod(s.substr(pos, end - pos));
        } catch (const std::exception&) {
            throw InputError(std::string("malformed ") + key);
        }
        pos = end + 1;
    }
    return f;
}

}  // namespace

void MreModel::store_meta() {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", scale_);
    net_.meta()["mre.distance_scale"] = buf;
    net_.meta()["mre.mean"] = join17(mean_);
    net_.meta()["mre.std"] = join17(std_);
}

void MreModel::fit_standardization(std::span<const RationalityFeature> features) {
    mean_.fill(0.0);
    std_.fill(1.0);
    if (features.empty()) {
        store_meta();
        return;
    }
    const nn::Tensor4 x = to_input(features);
    const double n = static_cast<double>(features.size());
    for (std::size_t i = 0; i < 11; ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < features.size(); ++k) sum += x.at(k, i, 0, 0);
        const double mu = sum / n;
        double sq = 0.0;
        for (std::size_t k = 0; k < features.size(); ++k) sq += (x.at(k, i, 0, 0) - mu) * (x.at(k, i, 0, 0) - mu);
        mean_[i] = mu;
        std_[i] = std::max(std::sqrt(sq / n), 1e-6);
    }
    store_meta();
}

MreModel::MreModel(nn::Network net) : net_(std::move(net)) {
    const auto& in = net_.input_shape();
    if (in.c != 11 || in.h != 1 || in.w != 1) throw InputError("MRE network must take an 11-dim feature");
    const auto& out = net_.output_shape();
    if (out.c != 1 || out.h != 1 || out.w != 1 || net_.layers().back().kind != nn::LayerKind::sigmoid_head) {
        throw InputError("MRE network must end in a single sigmoid output");
    }
    auto it = net_.meta().find("mre.distance_scale");
    if (it == net_.meta().end()) throw InputError("MRE weights lack mre.distance_scale");
    scale_ = std::stod(it->second);
    if (auto m = net_.meta().find("mre.mean"); m != net_.meta().end()) mean_ = split17(m->second, "mre.mean");
    if (auto d = net_.meta().find("mre.std"); d != net_.meta().end()) std_ = split17(d->second, "mre.std");
    for (double v : std_) {
        if (!(v > 0.0)) throw InputError("mre.std must be positive");
    }
}

nn::Tensor4 MreModel::to_input(std::span<const RationalityFeature> features) const {
    nn::Tensor4 x({features.size(), 11, 1, 1});
    for (std::size_t n = 0; n < features.size(); ++n) {
        for (std::size_t i = 0; i < 11; ++i) {
            const double v = features[n][i];
            if (!std::isfinite(v)) throw InputError("rationality feature holds a non-finite value");
            x.at(n, i, 0, 0) = ((i < kNeighbors ? v / scale_ : v) - mean_[i]) / std_[i];
        }
    }
    return x;
}

void MreModel::zero() {
    for (auto& p : net_.params()) {
        p.weight.fill(0.0);
        std::fill(p.bias.begin(), p.bias.end(), 0.0);
    }
}

double mre_infer(const MreModel& model, const RationalityFeature& feature) {
    return mre_infer(model, std::span<const RationalityFeature>(&feature, 1)).front();
}

std::vector<double> mre_infer(const MreModel& model, std::span<const RationalityFeature> features) {
    if (features.empty()) return {};
    const nn::Tensor4 y = nn::forward(model.network(), model.to_input(features));
    return {y.values().begin(), y.values().end()};
}

MarkerSet dedup(const MarkerSet& markers, double radius) {
    if (!(radius >= 0.0)) throw ConfigError("dedup radius must be non-negative");
    std::vector<std::size_t> order(markers.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const Marker& ma = markers[a];
        const Marker& mb = markers[b];
        if (ma.c != mb.c) return ma.c > mb.c;
        if (ma.y != mb.y) return ma.y < mb.y;
        if (ma.x != mb.x) return ma.x < mb.x;
        return a < b;
    });
    const double cell = radius > 0.0 ? radius : 1.0;
    auto key = [cell](long long gx, long long gy) { return (gx << 32) ^ (gy & 0xffffffffLL); };
    std::unordered_map<long long, std::vector<std::size_t>> kept_cells;
    MarkerSet out;
    for (std::size_t idx : order) {
        const Marker& m = markers[idx];
        const auto gx = static_cast<long long>(std::floor(m.x / cell));
        const auto gy = static_cast<long long>(std::floor(m.y / cell));
        bool clash = false;
        for (long long dy = -1; dy <= 1 && !clash; ++dy) {
            for (long long dx = -1; dx <= 1 && !clash; ++dx) {
                auto it = kept_cells.find(key(gx + dx, gy + dy));
                if (it == kept_cells.end()) continue;
                for (std::size_t k : it->second) {
                    if (distance(out[k], m) <= radius) {
                        clash = true;
                        break;
                    }
                }
            }
        }
        if (clash) continue;
        kept_cells[key(gx, gy)].push_back(out.size());
        out.push_back(m);
    }
    return out;
}

MarkerSet candidates(const nn::Network& net, const Image& image, const marknet::MarknetConfig& cfg,
                     const PostprocConfig& post) {
    return dedup(marknet::decode(marknet::predict_grid(net, image, cfg), cfg), post.dedup_radius);
}

std::vector<LocalizedMarker> screen(const MarkerSet& deduped, const MreModel* mre, const PostprocConfig& post) {
    post.validate();
    std::vector<LocalizedMarker> out;
    if (!post.use_mre) {
        for (const Marker& m : deduped) {
            if (m.c > post.baseline_threshold) out.push_back({m, MarkerSource::direct});
        }
        return out;
    }
    if (!mre) throw ConfigError("MRE screening requested without an MRE model");
    const ConfidencePartition part = confidence_partition(deduped, post);
    MarkerSet survivors = part.accepted;
    survivors.insert(survivors.end(), part.to_evaluate.begin(), part.to_evaluate.end());
    for (const Marker& m : part.accepted) out.push_back({m, MarkerSource::direct});
    std::vector<RationalityFeature> features;
    features.reserve(part.to_evaluate.size());
    for (std::size_t i = 0; i < part.to_evaluate.size(); ++i) {
        features.push_back(build_feature(part.accepted.size() + i, survivors, post.sentinel));
    }
    const std::vector<double> ye = mre_infer(*mre, features);
    for (std::size_t i = 0; i < ye.size(); ++i) {
        if (ye[i] > post.mre_threshold) out.push_back({part.to_evaluate[i], MarkerSource::mre});
    }
    return out;
}

std::vector<LocalizedMarker> localize(const Image& image, const nn::Network& net, const MreModel* mre,
                                      const marknet::MarknetConfig& cfg, const PostprocConfig& post) {
    return screen(candidates(net, image, cfg, post), mre, post);
}

MarkerSet positions(const std::vector<LocalizedMarker>& markers) {
    MarkerSet out;
    out.reserve(markers.size());
    for (const auto& m : markers) out.push_back(m.marker);
    return out;
}

Image overlay(const Image& image, const std::vector<LocalizedMarker>& markers, int arm) {
    Image out = image;
    for (const auto& lm : markers) {
        const int cx = static_cast<int>(std::floor(lm.marker.x));
        const int cy = static_cast<int>(std::floor(lm.marker.y));
        for (int d = -arm; d <= arm; ++d) {
            for (auto [x, y] : {std::pair{cx + d, cy}, std::pair{cx, cy + d}}) {
                if (x < 0 || y < 0 || x >= out.width() || y >= out.height()) continue;
                out.at(x, y) = image.at(x, y) > 0.5 ? 0.0 : 1.0;
            }
        }
    }
    return out;
}

}  // namespace vtm::postproc
