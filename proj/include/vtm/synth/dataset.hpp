#pragma once

#include "vtm/blob/blob.hpp"
#include "vtm/synth/scene.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vtm::synth {

/// Uniform ranges scene parameters are drawn from.
struct SpecDistribution {
    SceneSpec base = SceneSpec::desk_default();
    /// Probability of 0, 1, 2, ... presses.
    std::vector<double> press_count_weights{0.15, 0.35, 0.3, 0.2};
    std::pair<double, double> press_radius{14.0, 30.0};
    std::pair<double, double> press_displacement{1.0, 4.5};
    std::pair<double, double> press_squash{1.2, 2.2};
    double press_center_margin = 12.0;
    std::pair<int, int> speck_count{0, 6};
    std::pair<double, double> noise_sigma{0.01, 0.04};
    std::pair<double, double> background{0.7, 0.9};
    std::pair<double, double> marker_intensity{0.1, 0.3};
    std::pair<double, double> marker_radius{1.7, 2.3};
    double max_slide = 1.5;

    void validate() const;
};

/// JSON text of a distribution and its inverse (all keys required).
std::string distribution_to_json(const SpecDistribution& dist);
SpecDistribution distribution_from_json_text(const std::string& text);

/// Draws a valid SceneSpec (redrawing presses that would push markers out of the image).
SceneSpec sample_spec(const SpecDistribution& dist, std::uint64_t seed);

struct SceneEntry {
    std::string id;
    std::uint64_t seed = 0;
    SceneSpec spec;
    std::size_t marker_count = 0;
};

enum class Split { train, val, test };

/// Contents of manifest.json.
struct DatasetManifest {
    std::uint64_t seed = 0;
    int image_size = 0;
    SpecDistribution distribution;
    std::vector<SceneEntry> scenes;
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;

    /// Filled by the easy/hard partition step.
    std::optional<double> tau;
    std::optional<blob::BlobParams> blob_params;
    std::optional<blob::TuneResult> blob_tuning;
    /// Per test scene: one character per truth marker, 'e' (easy) or 'h' (hard).
    std::map<std::string, std::string> difficulty;

    const std::vector<std::string>& split(Split s) const;
    const SceneEntry& scene(const std::string& id) const;
};

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Renders `n` scenes under `root` (images/<id>.pgm, labels/<id>.csv) and
/// assigns them to train/val/test at 6:2:2 by a seeded shuffle. Does not
/// write the manifest. Throws ConfigError for n < 10 and IoError for an
/// unwritable root.
DatasetManifest make_dataset(int n, const SpecDistribution& dist, std::uint64_t seed,
                             const std::filesystem::path& root);

/// 6:2:2 split sizes for n scenes (train gets the rounding remainder).
std::array<std::size_t, 3> split_sizes(std::size_t n);

/// A scene loaded back from disk.
struct LoadedScene {
    std::string id;
    Image image;
    MarkerSet truth;
    std::vector<MarkerTag> tags;
};

LoadedScene load_scene(const std::filesystem::path& root, const std::string& id);
std::vector<LoadedScene> load_split(const std::filesystem::path& root, const DatasetManifest& manifest, Split split);

struct Partition {
    /// Per scene id, a mask over its truth markers: true = hard.
    std::map<std::string, std::vector<bool>> hard;
    std::size_t easy_count = 0;
    std::size_t hard_count = 0;
};

/// Runs the blob baseline on each scene; truths it matches within tau are
/// easy, the rest hard.
Partition partition_easy_hard(const std::vector<LoadedScene>& test, const blob::BlobParams& params, double tau);

/// Writes the partition into the manifest as 'e'/'h' strings.
void annotate(DatasetManifest& manifest, const Partition& partition, double tau, const blob::TuneResult& tuning);

/// Tunes the blob baseline on the first `tune_limit` train scenes (0 = all),
/// partitions the test split with the tuned parameters, and annotates the manifest.
Partition tune_and_partition(const std::filesystem::path& root, DatasetManifest& manifest, double tau,
                             std::size_t tune_limit = 200, const blob::BlobLattice& lattice = {});

}  // namespace vtm::synth
