#pragma once

#include "vtm/blob/blob.hpp"
#include "vtm/eval/match.hpp"
#include "vtm/marknet/config.hpp"
#include "vtm/marknet/train.hpp"
#include "vtm/mretrain/mretrain.hpp"
#include "vtm/nn/network.hpp"
#include "vtm/postproc/postproc.hpp"
#include "vtm/synth/dataset.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vtm::eval {

enum class Method { blob, marknet, marknet_mre };
enum class Difficulty { easy, hard, all };

std::string to_string(Method m);
std::string to_string(Difficulty d);
/// Throws ConfigError on an unknown name.
Method parse_method(const std::string& s);
Difficulty parse_difficulty(const std::string& s);

/// Everything a method needs at inference time. Unused members may stay empty.
struct MethodModels {
    std::optional<blob::BlobParams> blob;
    const nn::Network* marknet = nullptr;
    const postproc::MreModel* mre = nullptr;
    marknet::MarknetConfig cfg;
    postproc::PostprocConfig post;
};

/// Per-scene predictions of `method`. Throws StateError when a required model is absent.
std::vector<MarkerSet> predict(Method method, const std::vector<synth::LoadedScene>& scenes, const MethodModels& models);

/// Per-scene difficulty masks ('e'/'h' strings keyed by scene id).
using DifficultyMap = std::map<std::string, std::string>;

/// Aggregated counts of `preds` against the truth subset of `difficulty`.
/// Throws InputError when a scene lacks a usable annotation (easy/hard only).
MetricsReport score(const std::vector<MarkerSet>& preds, const std::vector<synth::LoadedScene>& scenes,
                    const DifficultyMap& difficulty_map, Difficulty difficulty, double tau);

/// predict + score, with the report fingerprint filled in.
MetricsReport evaluate_method(Method method, const std::vector<synth::LoadedScene>& scenes,
                              const DifficultyMap& difficulty_map, Difficulty difficulty, double tau,
                              const MethodModels& models);

/// CSV: method,difficulty,grid_size,candidates,tau,seed,precision,recall,loss,pt,pf,t,d,note
void write_reports_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& path);
/// JSON bundle: {"format":"vtm-reports 1","reports":[...]} with nulls for undefined metrics.
void write_reports_json(const std::vector<MetricsReport>& reports, const std::filesystem::path& path);
std::string reports_json(const std::vector<MetricsReport>& reports);

/// Fixed-width text table, one row per report.
std::string format_table(const std::vector<MetricsReport>& reports);

enum class SweepAxis { grid_size, candidates };
std::string to_string(SweepAxis a);
SweepAxis parse_axis(const std::string& s);

struct SweepRow {
    int value = 0;
    std::optional<MetricsReport> report;  ///< absent when the value failed
    Difficulty difficulty = Difficulty::all;
    std::string error;
};

/// Inputs shared by every configuration of a sweep.
struct SweepContext {
    std::vector<marknet::LabeledImage> train;
    std::vector<synth::LoadedScene> val;
    std::vector<synth::LoadedScene> test;
    DifficultyMap difficulty;
    double tau = 2.0;             ///< fixed across the sweep
    Method method = Method::marknet_mre;
    mretrain::MreTrainOptions mre;
    std::optional<std::filesystem::path> cache_dir;  ///< weights reused when present
    std::function<void(const std::string&)> log;
};

/// Trains (or loads) one configuration per value and evaluates it on the easy
/// and hard subsets of the test split. Invalid values produce rows with an
/// error and the sweep continues. Rows: value-major, easy then hard.
std::vector<SweepRow> run_sweep(SweepAxis axis, const std::vector<int>& values, const marknet::MarknetConfig& base,
                                const SweepContext& ctx);

/// CSV: axis,value,difficulty,status,precision,recall,loss,pt,pf,t,note
void write_sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows, const std::filesystem::path& path);

/// Validator scoring a snapshot by decode + dedup + MRE-free screening on val.
marknet::Validator make_validator(const std::vector<synth::LoadedScene>& val, const marknet::MarknetConfig& cfg,
                                  double tau);

/// Frames view over loaded scenes.
std::vector<mretrain::Frame> frames_of(const std::vector<synth::LoadedScene>& scenes);
std::vector<marknet::LabeledImage> labeled_of(const std::vector<synth::LoadedScene>& scenes);

}  // namespace vtm::eval
