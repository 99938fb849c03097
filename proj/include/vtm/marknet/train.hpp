#pragma once

#include "vtm/image.hpp"
#include "vtm/markers.hpp"
#include "vtm/marknet/config.hpp"
#include "vtm/nn/network.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace vtm::marknet {

struct LabeledImage {
    Image image;
    MarkerSet truth;
};

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double conf_loss = 0.0;
    double pos_loss = 0.0;
    double val_precision = 0.0;
    double val_recall = 0.0;
};

struct ValidationScore {
    double precision = 0.0;
    double recall = 0.0;
};

/// Scores a network snapshot on the validation split.
using Validator = std::function<ValidationScore(const nn::Network&)>;

struct TrainResult {
    nn::Network best;        ///< weights of the best validation epoch (last epoch without a validator)
    int best_epoch = 0;
    std::vector<EpochRecord> history;
};

struct TrainHooks {
    Validator validate;
    std::function<void(const EpochRecord&)> on_epoch;
    /// Starting weights; a fresh backbone is built from cfg when absent.
    std::optional<nn::Network> initial;
};

/// Minibatch momentum SGD on the composite loss with a cosine learning-rate
/// decay. Deterministic for a fixed cfg.seed. Throws InputError on an empty
/// training split and NumericError (with epoch, batch, and component losses)
/// when the loss or gradients become non-finite.
TrainResult train(const std::vector<LabeledImage>& train_set, const MarknetConfig& cfg, const TrainHooks& hooks = {});

/// CSV with columns epoch,L,L_c,L_p,val_precision,val_recall.
void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace vtm::marknet
