#pragma once

#include "vtm/image.hpp"
#include "vtm/markers.hpp"
#include "vtm/marknet/config.hpp"
#include "vtm/nn/network.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace vtm::postproc {

/// Thresholds and constants of the screening pipeline.
struct PostprocConfig {
    double accept_threshold = 0.4;
    double band_low = 0.1;
    double band_high = 0.4;
    double mre_threshold = 0.99;    ///< y_e must exceed this
    double dedup_radius = 2.0;      ///< px; stride / 2 by default
    double sentinel = 208.0;        ///< padding distance; 2W by default
    bool use_mre = true;
    double baseline_threshold = 0.2;  ///< MRE-disabled mode keeps c > this

    void validate() const;
    static PostprocConfig defaults_for(const marknet::MarknetConfig& cfg);
};

struct ConfidencePartition {
    MarkerSet accepted;     ///< c > accept_threshold
    MarkerSet to_evaluate;  ///< band_low <= c <= band_high
    MarkerSet rejected;     ///< everything else
};

ConfidencePartition confidence_partition(const MarkerSet& candidates, const PostprocConfig& cfg);

/// Ten smallest distances to the other markers (ascending, padded with the
/// sentinel) followed by the marker's confidence.
using RationalityFeature = std::array<double, 11>;

/// Feature of all[target] against every other entry of `all`.
RationalityFeature build_feature(std::size_t target, const MarkerSet& all, double sentinel);

/// Feature of `target`, which must occur in `all` (one matching entry is excluded).
/// Throws InputError when it does not.
RationalityFeature build_feature(const Marker& target, const MarkerSet& all, double sentinel);

/// Three fully connected layers with a logistic output, over features whose
/// distance components are divided by `distance_scale`.
class MreModel {
public:
    MreModel() = default;
    /// Fresh model with hidden widths {hidden1, hidden2}, seeded init.
    MreModel(double distance_scale, std::uint64_t seed, int hidden1 = 32, int hidden2 = 16);
    /// Wraps a loaded network (11 -> ... -> 1, sigmoid head); scale read from metadata.
    explicit MreModel(nn::Network net);

    double distance_scale() const { return scale_; }
    const nn::Network& network() const { return net_; }
    nn::Network& network() { return net_; }

    /// Network input for a batch of features: (N, 11, 1, 1), distances scaled,
    /// then every component standardized with the stored mean/std.
    nn::Tensor4 to_input(std::span<const RationalityFeature> features) const;

    /// Fits the per-component mean/std on scaled features (std floored at 1e-6).
    void fit_standardization(std::span<const RationalityFeature> features);
    const RationalityFeature& mean() const { return mean_; }
    const RationalityFeature& stddev() const { return std_; }

    /// Zeroes every weight and bias (y_e = 0.5 everywhere).
    void zero();

private:
    nn::Network net_;
    double scale_ = 1.0;
    RationalityFeature mean_{};
    RationalityFeature std_ = filled(1.0);

    static RationalityFeature filled(double v) {
        RationalityFeature f;
        f.fill(v);
        return f;
    }
    void store_meta();
};

/// y_e in (0,1) for one feature. Throws InputError on non-finite input.
double mre_infer(const MreModel& model, const RationalityFeature& feature);
std::vector<double> mre_infer(const MreModel& model, std::span<const RationalityFeature> features);

/// Greedy by descending confidence (ties by lower (y, x), then index): keep a
/// marker iff no kept marker lies within `radius`. Output in keep order.
MarkerSet dedup(const MarkerSet& markers, double radius);

/// Forward -> decode -> dedup for one image.
MarkerSet candidates(const nn::Network& net, const Image& image, const marknet::MarknetConfig& cfg,
                     const PostprocConfig& post);

/// Partition and screen deduplicated candidates. With use_mre, accepted
/// markers pass directly and evaluate-band markers pass when y_e exceeds the
/// MRE threshold; without it, every candidate with c > baseline_threshold passes.
std::vector<LocalizedMarker> screen(const MarkerSet& deduped, const MreModel* mre, const PostprocConfig& post);

/// The full two-stage pipeline for one image.
std::vector<LocalizedMarker> localize(const Image& image, const nn::Network& net, const MreModel* mre,
                                      const marknet::MarknetConfig& cfg, const PostprocConfig& post);

MarkerSet positions(const std::vector<LocalizedMarker>& markers);

/// Copy of `image` with a cross drawn at every marker (black on light pixels, white on dark).
Image overlay(const Image& image, const std::vector<LocalizedMarker>& markers, int arm = 2);

}  // namespace vtm::postproc
