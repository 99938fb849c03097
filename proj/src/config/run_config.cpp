#include "vtm/config/run_config.hpp"

#include "vtm/errors.hpp"
#include "vtm/hash.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace vtm::config {

using nlohmann::ordered_json;

namespace {

ordered_json to_object(const RunConfig& c) {
    ordered_json j;
    j["data"] = {{"root", c.data.root},
                 {"scenes", c.data.scenes},
                 {"seed", c.data.seed},
                 {"tau", c.data.tau ? ordered_json(*c.data.tau) : ordered_json()},
                 {"tune_limit", c.data.tune_limit},
                 {"distribution", ordered_json::parse(synth::distribution_to_json(c.data.distribution))}};
    const auto& m = c.marknet;
    j["marknet"] = {{"image_size", m.image_size},
                    {"grid_size", m.grid_size},
                    {"candidates", m.candidates},
                    {"base_channels", m.base_channels},
                    {"alpha", m.alpha},
                    {"beta", m.beta},
                    {"accept_threshold", m.accept_threshold},
                    {"band_low", m.band_low},
                    {"band_high", m.band_high},
                    {"epochs", m.epochs},
                    {"batch_size", m.batch_size},
                    {"learning_rate", m.learning_rate},
                    {"momentum", m.momentum},
                    {"grad_clip", m.grad_clip},
                    {"seed", m.seed}};
    j["postproc"] = {{"mre_threshold", c.postproc.mre_threshold},
                     {"dedup_radius", c.postproc.dedup_radius ? ordered_json(*c.postproc.dedup_radius) : ordered_json()},
                     {"baseline_threshold", c.postproc.baseline_threshold}};
    j["mre"] = {{"epochs", c.mre.epochs},         {"learning_rate", c.mre.learning_rate},
                {"momentum", c.mre.momentum},     {"batch_size", c.mre.batch_size},
                {"seed", c.mre.seed},             {"hidden1", c.mre.hidden1},
                {"hidden2", c.mre.hidden2}};
    const auto& b = c.blob_lattice;
    j["blob_lattice"] = {{"thresholds", b.thresholds},
                         {"min_areas", b.min_areas},
                         {"max_areas", b.max_areas},
                         {"min_circularities", b.min_circularities},
                         {"connectivities", b.connectivities},
                         {"polarity", blob::to_string(b.polarity)}};
    j["sweep"] = {{"epochs", c.sweep.epochs}, {"train_limit", c.sweep.train_limit}, {"cache", c.sweep.cache}};
    return j;
}

void check_keys(const ordered_json& user, const ordered_json& reference, const std::string& where) {
    if (!user.is_object() || !reference.is_object()) return;
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string path = where.empty() ? it.key() : where + "." + it.key();
        if (!reference.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
        check_keys(it.value(), reference.at(it.key()), path);
    }
}

template <class T>
void get(const ordered_json& j, const char* key, T& out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <class T>
void get_opt(const ordered_json& j, const char* key, std::optional<T>& out) {
    if (j.contains(key) && !j.at(key).is_null()) {
        out = j.at(key).get<T>();
    } else {
        out.reset();
    }
}

}  // namespace

void RunConfig::validate() const {
    if (data.scenes < 10) throw ConfigError("data.scenes must be >= 10");
    if (data.tau && !(*data.tau > 0.0)) throw ConfigError("data.tau must be positive");
    data.distribution.validate();
    marknet.validate();
    postproc_config().validate();
    if (mre.epochs < 0 || mre.batch_size < 1 || mre.hidden1 < 1 || mre.hidden2 < 1) {
        throw ConfigError("mre needs epochs >= 0, batch_size >= 1 and positive hidden widths");
    }
    if (!(mre.learning_rate >= 0.0) || !(mre.momentum >= 0.0 && mre.momentum < 1.0)) {
        throw ConfigError("mre learning rate must be >= 0 and momentum in [0,1)");
    }
    if (blob_lattice.size() == 0) throw ConfigError("blob lattice must not be empty");
    if (sweep.epochs < 0 || sweep.train_limit < 0) throw ConfigError("sweep epochs and train_limit must be >= 0");
}

double RunConfig::tau() const { return data.tau ? *data.tau : marknet.stride() / 2.0; }

postproc::PostprocConfig RunConfig::postproc_config() const { return postproc_config(marknet); }

postproc::PostprocConfig RunConfig::postproc_config(const marknet::MarknetConfig& cfg) const {
    postproc::PostprocConfig p = postproc::PostprocConfig::defaults_for(cfg);
    p.mre_threshold = postproc.mre_threshold;
    if (postproc.dedup_radius) p.dedup_radius = *postproc.dedup_radius;
    p.baseline_threshold = postproc.baseline_threshold;
    return p;
}

std::string to_json(const RunConfig& cfg) { return to_object(cfg).dump(2) + "\n"; }

RunConfig from_json(const std::string& text) {
    RunConfig c;
    try {
        const ordered_json user = ordered_json::parse(text);
        if (!user.is_object()) throw ConfigError("config must be a JSON object");
        const ordered_json reference = to_object(c);
        check_keys(user, reference, "");

        const ordered_json empty = ordered_json::object();
        auto section = [&](const char* k) -> const ordered_json& { return user.contains(k) ? user.at(k) : empty; };

        const auto& d = section("data");
        get(d, "root", c.data.root);
        get(d, "scenes", c.data.scenes);
        get(d, "seed", c.data.seed);
        get_opt(d, "tau", c.data.tau);
        get(d, "tune_limit", c.data.tune_limit);
        if (d.contains("distribution")) {
            ordered_json dist = reference.at("data").at("distribution");
            dist.merge_patch(d.at("distribution"));
            c.data.distribution = synth::distribution_from_json_text(dist.dump());
        }

        const auto& m = section("marknet");
        get(m, "image_size", c.marknet.image_size);
        get(m, "grid_size", c.marknet.grid_size);
        get(m, "candidates", c.marknet.candidates);
        get(m, "base_channels", c.marknet.base_channels);
        get(m, "alpha", c.marknet.alpha);
        get(m, "beta", c.marknet.beta);
        get(m, "accept_threshold", c.marknet.accept_threshold);
        get(m, "band_low", c.marknet.band_low);
        get(m, "band_high", c.marknet.band_high);
        get(m, "epochs", c.marknet.epochs);
        get(m, "batch_size", c.marknet.batch_size);
        get(m, "learning_rate", c.marknet.learning_rate);
        get(m, "momentum", c.marknet.momentum);
        get(m, "grad_clip", c.marknet.grad_clip);
        get(m, "seed", c.marknet.seed);

        const auto& p = section("postproc");
        get(p, "mre_threshold", c.postproc.mre_threshold);
        get_opt(p, "dedup_radius", c.postproc.dedup_radius);
        get(p, "baseline_threshold", c.postproc.baseline_threshold);

        const auto& r = section("mre");
        get(r, "epochs", c.mre.epochs);
        get(r, "learning_rate", c.mre.learning_rate);
        get(r, "momentum", c.mre.momentum);
        get(r, "batch_size", c.mre.batch_size);
        get(r, "seed", c.mre.seed);
        get(r, "hidden1", c.mre.hidden1);
        get(r, "hidden2", c.mre.hidden2);

        const auto& b = section("blob_lattice");
        get(b, "thresholds", c.blob_lattice.thresholds);
        get(b, "min_areas", c.blob_lattice.min_areas);
        get(b, "max_areas", c.blob_lattice.max_areas);
        get(b, "min_circularities", c.blob_lattice.min_circularities);
        get(b, "connectivities", c.blob_lattice.connectivities);
        if (b.contains("polarity")) c.blob_lattice.polarity = blob::parse_polarity(b.at("polarity").get<std::string>());

        const auto& s = section("sweep");
        get(s, "epochs", c.sweep.epochs);
        get(s, "train_limit", c.sweep.train_limit);
        get(s, "cache", c.sweep.cache);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    return c;
}

RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a64(to_json(cfg))); }

}  // namespace vtm::config
