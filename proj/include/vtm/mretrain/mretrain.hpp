#pragma once

#include "vtm/image.hpp"
#include "vtm/markers.hpp"
#include "vtm/marknet/config.hpp"
#include "vtm/nn/network.hpp"
#include "vtm/postproc/postproc.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vtm::mretrain {

struct MreSample {
    postproc::RationalityFeature feature{};
    int label = 0;  ///< 1 = the candidate matched a ground-truth marker
    std::string image_id;
    std::size_t candidate_index = 0;  ///< position in the image's deduplicated candidate list
};

struct Frame {
    std::string id;
    const Image* image = nullptr;
    const MarkerSet* truth = nullptr;
};

struct DatasetStats {
    std::size_t positives_raw = 0;
    std::size_t negatives_raw = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

/// Labels one image's deduplicated candidates, matching to truth within tau
/// in two rounds: accepted candidates first, then the rest against the truths
/// still free. Returns a sample for every candidate with c < accept_threshold,
/// in candidate order. Features are built against the accepted and
/// evaluate-band markers (plus the target itself when it lies below the band).
std::vector<MreSample> label_candidates(const std::string& id, const MarkerSet& deduped, const MarkerSet& truth,
                                        double tau, const postproc::PostprocConfig& post);

/// Runs decode + dedup over the frames, labels candidates below the accept threshold, and
/// downsamples the majority class (seeded) to a 1:1 ratio. Throws InputError
/// on an empty frame list or when either class is empty.
std::vector<MreSample> build_mre_dataset(const nn::Network& net, const std::vector<Frame>& frames, double tau,
                                         const marknet::MarknetConfig& cfg, const postproc::PostprocConfig& post,
                                         std::uint64_t seed, DatasetStats* stats = nullptr);

/// Keeps every minority sample and a seeded random subset of the majority of
/// equal size; original order is preserved.
std::vector<MreSample> balance(const std::vector<MreSample>& samples, std::uint64_t seed);

struct MreTrainOptions {
    int epochs = 60;
    double learning_rate = 0.05;
    double momentum = 0.9;
    int batch_size = 64;
    std::uint64_t seed = 1;
    double distance_scale = 1.0;  ///< stride of the detector the features come from
    int hidden1 = 32;
    int hidden2 = 16;
};

struct MreTrainResult {
    postproc::MreModel model;
    double heldout_accuracy = 0.0;
    std::size_t heldout_size = 0;
    double final_loss = 0.0;
};

/// Minibatch momentum SGD on binary cross-entropy with a 90/10 held-out split.
/// Throws InputError when a class is missing and NumericError on divergence.
MreTrainResult train_mre(const std::vector<MreSample>& samples, const MreTrainOptions& options);

/// CSV: d0..d9,c,label,image_id,candidate_index
void write_mre_csv(const std::vector<MreSample>& samples, const std::filesystem::path& path);
std::vector<MreSample> read_mre_csv(const std::filesystem::path& path);

}  // namespace vtm::mretrain
