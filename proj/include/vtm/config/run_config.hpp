#pragma once

#include "vtm/blob/blob.hpp"
#include "vtm/marknet/config.hpp"
#include "vtm/mretrain/mretrain.hpp"
#include "vtm/synth/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace vtm::config {

struct DataSection {
    std::string root = "data";
    int scenes = 1000;
    std::uint64_t seed = 7;
    std::optional<double> tau;  ///< stride / 2 when absent
    std::size_t tune_limit = 200;
    synth::SpecDistribution distribution;
};

struct PostprocSection {
    double mre_threshold = 0.99;
    std::optional<double> dedup_radius;  ///< stride / 2 when absent
    double baseline_threshold = 0.2;
};

struct SweepSection {
    int epochs = 0;      ///< 0 = marknet.epochs
    int train_limit = 0; ///< 0 = whole train split
    std::string cache = "";
};

/// One configuration document; each member mirrors a top-level JSON section.
struct RunConfig {
    DataSection data;
    marknet::MarknetConfig marknet;
    PostprocSection postproc;
    mretrain::MreTrainOptions mre;
    blob::BlobLattice blob_lattice;
    SweepSection sweep;

    /// Throws ConfigError on any violated constraint.
    void validate() const;
    double tau() const;
    postproc::PostprocConfig postproc_config() const;
    postproc::PostprocConfig postproc_config(const marknet::MarknetConfig& cfg) const;
};

/// Canonical JSON text (stable key order).
std::string to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
RunConfig from_json(const std::string& text);
RunConfig load(const std::filesystem::path& path);

/// Hex FNV-1a of the canonical JSON.
std::string config_hash(const RunConfig& cfg);

/// Name of the environment variable holding the default config path.
inline constexpr const char* kConfigEnv = "VTM_CONFIG";

}  // namespace vtm::config
