#pragma once

#include "vtm/markers.hpp"
#include "vtm/marknet/config.hpp"
#include "vtm/nn/tensor.hpp"

#include <cstddef>
#include <vector>

namespace vtm::marknet {

/// Raw per-candidate logits (x̂, ŷ, ĉ), laid out S x S x m x 3 with the
/// cell row varying slowest.
class GridPrediction {
public:
    GridPrediction() = default;
    GridPrediction(int grid_size, int candidates);

    int grid_size() const { return grid_; }
    int candidates() const { return m_; }
    std::size_t slots() const { return static_cast<std::size_t>(grid_) * grid_ * m_; }

    double& logit(int row, int col, int k, int channel) { return raw_[index(row, col, k, channel)]; }
    double logit(int row, int col, int k, int channel) const { return raw_[index(row, col, k, channel)]; }

    std::vector<double>& raw() { return raw_; }
    const std::vector<double>& raw() const { return raw_; }

    /// Copies sample `n` of a (N, 3m, S, S) head output; channel 3k+ch is candidate k's ch.
    static GridPrediction from_head(const nn::Tensor4& head, std::size_t n, int candidates);
    /// Writes this grid into sample `n` of a (N, 3m, S, S) tensor (inverse of from_head).
    void to_head(nn::Tensor4& head, std::size_t n) const;

private:
    std::size_t index(int row, int col, int k, int channel) const {
        return ((static_cast<std::size_t>(row) * grid_ + col) * m_ + k) * 3 + channel;
    }
    int grid_ = 0;
    int m_ = 0;
    std::vector<double> raw_;
};

enum Channel { kX = 0, kY = 1, kC = 2 };

double sigmoid(double z);
double logit_of(double p);

/// Every S*S*m candidate in (row, col, k) order, with image-scale positions
/// x = σ(x̂)·(W/S) + X_g, y = σ(ŷ)·(W/S) + Y_g and confidence c = σ(ĉ).
MarkerSet decode(const GridPrediction& raw, const MarknetConfig& cfg);

/// Per-slot training targets.
struct TargetGrid {
    int grid_size = 0;
    int candidates = 0;
    std::vector<unsigned char> matched;  ///< per slot; confidence target is 1 iff set
    std::vector<double> tx;              ///< target x in pixels (matched slots only)
    std::vector<double> ty;
    std::vector<std::size_t> unencodable;  ///< indices of markers that found no free slot

    std::size_t slot(int row, int col, int k) const {
        return (static_cast<std::size_t>(row) * grid_size + col) * candidates + k;
    }
    std::size_t matched_count() const;
};

/// Assigns each marker to its containing cell, then greedily to the free slot
/// whose current decoded position is nearest (ties by slot index, then marker
/// index). Throws InputError for markers outside [0,W)^2.
TargetGrid encode_targets(const MarkerSet& markers, const GridPrediction& raw, const MarknetConfig& cfg);

struct LossValue {
    double total = 0.0;  ///< alpha * conf + beta * pos
    double conf = 0.0;   ///< mean BCE over all slots
    double pos = 0.0;    ///< mean Euclidean distance over matched slots, 0 if none
};

/// Composite loss. When `grad` is non-null it receives d(total)/d(raw) with the
/// layout of raw.raw().
LossValue loss(const GridPrediction& raw, const TargetGrid& targets, const MarknetConfig& cfg,
               std::vector<double>* grad = nullptr);

}  // namespace vtm::marknet
