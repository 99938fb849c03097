#include "vtm/marknet/grid.hpp"

#include "vtm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace vtm::marknet {

namespace {

constexpr double kDistanceSmoothing = 1e-12;

void check_shape(const GridPrediction& raw, const MarknetConfig& cfg) {
    if (raw.grid_size() != cfg.grid_size || raw.candidates() != cfg.candidates) {
        throw ConfigError("grid prediction is " + std::to_string(raw.grid_size()) + "x" +
                          std::to_string(raw.grid_size()) + "x" + std::to_string(raw.candidates()) +
                          ", config expects " + std::to_string(cfg.grid_size) + "x" +
                          std::to_string(cfg.grid_size) + "x" + std::to_string(cfg.candidates));
    }
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double logit_of(double p) { return std::log(p / (1.0 - p)); }

GridPrediction::GridPrediction(int grid_size, int candidates) : grid_(grid_size), m_(candidates) {
    if (grid_size <= 0 || candidates <= 0) throw ConfigError("grid size and candidates must be positive");
    raw_.assign(slots() * 3, 0.0);
}

GridPrediction GridPrediction::from_head(const nn::Tensor4& head, std::size_t n, int candidates) {
    const nn::Shape4 s = head.shape();
    if (candidates <= 0 || s.c != static_cast<std::size_t>(3 * candidates) || s.h != s.w || n >= s.n) {
        throw ConfigError("head output " + s.str() + " is not a (N, 3m, S, S) map for m=" +
                          std::to_string(candidates));
    }
    const int grid = static_cast<int>(s.h);
    GridPrediction g(grid, candidates);
    for (int k = 0; k < candidates; ++k) {
        for (int ch = 0; ch < 3; ++ch) {
            const double* plane = head.plane(n, static_cast<std::size_t>(3 * k + ch));
            for (int r = 0; r < grid; ++r) {
                for (int c = 0; c < grid; ++c) g.logit(r, c, k, ch) = plane[r * grid + c];
            }
        }
    }
    return g;
}

void GridPrediction::to_head(nn::Tensor4& head, std::size_t n) const {
    const nn::Shape4 s = head.shape();
    if (s.c != static_cast<std::size_t>(3 * m_) || s.h != static_cast<std::size_t>(grid_) ||
        s.w != static_cast<std::size_t>(grid_) || n >= s.n) {
        throw ConfigError("head tensor " + s.str() + " does not match grid prediction");
    }
    for (int k = 0; k < m_; ++k) {
        for (int ch = 0; ch < 3; ++ch) {
            double* plane = head.plane(n, static_cast<std::size_t>(3 * k + ch));
            for (int r = 0; r < grid_; ++r) {
                for (int c = 0; c < grid_; ++c) plane[r * grid_ + c] = logit(r, c, k, ch);
            }
        }
    }
}

MarkerSet decode(const GridPrediction& raw, const MarknetConfig& cfg) {
    check_shape(raw, cfg);
    const double stride = static_cast<double>(cfg.image_size) / cfg.grid_size;
    const int grid = cfg.grid_size;
    MarkerSet out;
    out.reserve(raw.slots());
    for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
            for (int k = 0; k < cfg.candidates; ++k) {
                out.push_back({sigmoid(raw.logit(r, c, k, kX)) * stride + c * stride,
                               sigmoid(raw.logit(r, c, k, kY)) * stride + r * stride,
                               sigmoid(raw.logit(r, c, k, kC))});
            }
        }
    }
    return out;
}

std::size_t TargetGrid::matched_count() const {
    return static_cast<std::size_t>(std::count(matched.begin(), matched.end(), 1));
}

TargetGrid encode_targets(const MarkerSet& markers, const GridPrediction& raw, const MarknetConfig& cfg) {
    check_shape(raw, cfg);
    const int grid = cfg.grid_size;
    const int m = cfg.candidates;
    const double stride = static_cast<double>(cfg.image_size) / grid;
    const double w = cfg.image_size;

    TargetGrid t;
    t.grid_size = grid;
    t.candidates = m;
    t.matched.assign(raw.slots(), 0);
    t.tx.assign(raw.slots(), 0.0);
    t.ty.assign(raw.slots(), 0.0);

    std::vector<std::vector<std::size_t>> per_cell(static_cast<std::size_t>(grid) * grid);
    for (std::size_t i = 0; i < markers.size(); ++i) {
        const Marker& mk = markers[i];
        if (!(mk.x >= 0.0 && mk.x < w && mk.y >= 0.0 && mk.y < w)) {
            throw InputError("marker " + std::to_string(i) + " lies outside the image");
        }
        const int col = std::min(grid - 1, static_cast<int>(mk.x / stride));
        const int row = std::min(grid - 1, static_cast<int>(mk.y / stride));
        per_cell[static_cast<std::size_t>(row) * grid + col].push_back(i);
    }

    std::vector<std::tuple<double, int, std::size_t>> pairs;
    for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
            const auto& cell = per_cell[static_cast<std::size_t>(r) * grid + c];
            if (cell.empty()) continue;
            pairs.clear();
            for (int k = 0; k < m; ++k) {
                const double px = sigmoid(raw.logit(r, c, k, kX)) * stride + c * stride;
                const double py = sigmoid(raw.logit(r, c, k, kY)) * stride + r * stride;
                for (std::size_t mi : cell) {
                    pairs.emplace_back(std::hypot(px - markers[mi].x, py - markers[mi].y), k, mi);
                }
            }
            std::sort(pairs.begin(), pairs.end());
            std::vector<unsigned char> slot_used(static_cast<std::size_t>(m), 0);
            std::vector<std::size_t> assigned;
            for (const auto& [d, k, mi] : pairs) {
                if (slot_used[static_cast<std::size_t>(k)]) continue;
                if (std::find(assigned.begin(), assigned.end(), mi) != assigned.end()) continue;
                slot_used[static_cast<std::size_t>(k)] = 1;
                assigned.push_back(mi);
                const std::size_t s = t.slot(r, c, k);
                t.matched[s] = 1;
                t.tx[s] = markers[mi].x;
                t.ty[s] = markers[mi].y;
            }
            for (std::size_t mi : cell) {
                if (std::find(assigned.begin(), assigned.end(), mi) == assigned.end()) t.unencodable.push_back(mi);
            }
        }
    }
    std::sort(t.unencodable.begin(), t.unencodable.end());
    return t;
}

LossValue loss(const GridPrediction& raw, const TargetGrid& targets, const MarknetConfig& cfg,
               std::vector<double>* grad) {
    check_shape(raw, cfg);
    if (targets.grid_size != cfg.grid_size || targets.candidates != cfg.candidates ||
        targets.matched.size() != raw.slots()) {
        throw ConfigError("target grid does not match prediction shape");
    }
    const int grid = cfg.grid_size;
    const double stride = static_cast<double>(cfg.image_size) / grid;
    const auto slots = static_cast<double>(raw.slots());
    const std::size_t matched = targets.matched_count();
    if (grad) grad->assign(raw.raw().size(), 0.0);

    LossValue out;
    for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
            for (int k = 0; k < cfg.candidates; ++k) {
                const std::size_t s = targets.slot(r, c, k);
                const double t = targets.matched[s] ? 1.0 : 0.0;
                const double zc = raw.logit(r, c, k, kC);
                out.conf += softplus(zc) - t * zc;
                if (grad) (*grad)[s * 3 + kC] = cfg.alpha * (sigmoid(zc) - t) / slots;
                if (!targets.matched[s]) continue;
                const double sx = sigmoid(raw.logit(r, c, k, kX));
                const double sy = sigmoid(raw.logit(r, c, k, kY));
                const double dx = sx * stride + c * stride - targets.tx[s];
                const double dy = sy * stride + r * stride - targets.ty[s];
                const double d = std::sqrt(dx * dx + dy * dy + kDistanceSmoothing);
                out.pos += d;
                if (grad) {
                    const double f = cfg.beta / (static_cast<double>(matched) * d);
                    (*grad)[s * 3 + kX] = f * dx * sx * (1.0 - sx) * stride;
                    (*grad)[s * 3 + kY] = f * dy * sy * (1.0 - sy) * stride;
                }
            }
        }
    }
    out.conf /= slots;
    out.pos = matched > 0 ? out.pos / static_cast<double>(matched) : 0.0;
    out.total = cfg.alpha * out.conf + cfg.beta * out.pos;
    return out;
}

}  // namespace vtm::marknet
