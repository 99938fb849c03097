#include "vtm/synth/dataset.hpp"

#include "vtm/errors.hpp"
#include "vtm/eval/match.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace vtm::synth {

using nlohmann::json;

namespace {

json to_json(const SceneSpec& s) {
    json presses = json::array();
    for (const auto& p : s.presses) {
        presses.push_back({{"cx", p.cx}, {"cy", p.cy}, {"radius", p.radius}, {"displacement", p.displacement},
                           {"squash", p.squash}});
    }
    return {{"image_size", s.image_size},
            {"rows", s.rows},
            {"cols", s.cols},
            {"spacing", s.spacing},
            {"origin_x", s.origin_x},
            {"origin_y", s.origin_y},
            {"marker_radius", s.marker_radius},
            {"marker_intensity", s.marker_intensity},
            {"background", s.background},
            {"noise_sigma", s.noise_sigma},
            {"presses", presses},
            {"speck_count", s.speck_count},
            {"speck_radius_min", s.speck_radius_min},
            {"speck_radius_max", s.speck_radius_max},
            {"slide_x", s.slide_x},
            {"slide_y", s.slide_y}};
}

SceneSpec spec_from_json(const json& j) {
    SceneSpec s;
    s.image_size = j.at("image_size").get<int>();
    s.rows = j.at("rows").get<int>();
    s.cols = j.at("cols").get<int>();
    s.spacing = j.at("spacing").get<double>();
    s.origin_x = j.at("origin_x").get<double>();
    s.origin_y = j.at("origin_y").get<double>();
    s.marker_radius = j.at("marker_radius").get<double>();
    s.marker_intensity = j.at("marker_intensity").get<double>();
    s.background = j.at("background").get<double>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    for (const auto& p : j.at("presses")) {
        s.presses.push_back({p.at("cx").get<double>(), p.at("cy").get<double>(), p.at("radius").get<double>(),
                             p.at("displacement").get<double>(), p.at("squash").get<double>()});
    }
    s.speck_count = j.at("speck_count").get<int>();
    s.speck_radius_min = j.at("speck_radius_min").get<double>();
    s.speck_radius_max = j.at("speck_radius_max").get<double>();
    s.slide_x = j.at("slide_x").get<double>();
    s.slide_y = j.at("slide_y").get<double>();
    return s;
}

json range(const std::pair<double, double>& r) { return json::array({r.first, r.second}); }

std::pair<double, double> range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json to_json(const SpecDistribution& d) {
    return {{"base", to_json(d.base)},
            {"press_count_weights", d.press_count_weights},
            {"press_radius", range(d.press_radius)},
            {"press_displacement", range(d.press_displacement)},
            {"press_squash", range(d.press_squash)},
            {"press_center_margin", d.press_center_margin},
            {"speck_count", json::array({d.speck_count.first, d.speck_count.second})},
            {"noise_sigma", range(d.noise_sigma)},
            {"background", range(d.background)},
            {"marker_intensity", range(d.marker_intensity)},
            {"marker_radius", range(d.marker_radius)},
            {"max_slide", d.max_slide}};
}

SpecDistribution distribution_from_json(const json& j) {
    SpecDistribution d;
    d.base = spec_from_json(j.at("base"));
    d.press_count_weights = j.at("press_count_weights").get<std::vector<double>>();
    d.press_radius = range_from(j.at("press_radius"));
    d.press_displacement = range_from(j.at("press_displacement"));
    d.press_squash = range_from(j.at("press_squash"));
    d.press_center_margin = j.at("press_center_margin").get<double>();
    d.speck_count = {j.at("speck_count").at(0).get<int>(), j.at("speck_count").at(1).get<int>()};
    d.noise_sigma = range_from(j.at("noise_sigma"));
    d.background = range_from(j.at("background"));
    d.marker_intensity = range_from(j.at("marker_intensity"));
    d.marker_radius = range_from(j.at("marker_radius"));
    d.max_slide = j.at("max_slide").get<double>();
    return d;
}

json to_json(const blob::BlobParams& p) {
    return {{"threshold", p.threshold},
            {"polarity", blob::to_string(p.polarity)},
            {"min_area", p.min_area},
            {"max_area", p.max_area},
            {"min_circularity", p.min_circularity},
            {"connectivity", p.connectivity}};
}

blob::BlobParams blob_from_json(const json& j) {
    blob::BlobParams p;
    p.threshold = j.at("threshold").get<double>();
    p.polarity = blob::parse_polarity(j.at("polarity").get<std::string>());
    p.min_area = j.at("min_area").get<double>();
    p.max_area = j.at("max_area").get<double>();
    p.min_circularity = j.at("min_circularity").get<double>();
    p.connectivity = j.at("connectivity").get<int>();
    return p;
}

double draw(std::mt19937_64& rng, const std::pair<double, double>& r) {
    if (r.first == r.second) return r.first;
    return std::uniform_real_distribution<double>(r.first, r.second)(rng);
}

std::string scene_id(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%05zu", i);
    return buf;
}

}  // namespace

void SpecDistribution::validate() const {
    base.validate();
    auto ordered = [](const std::pair<double, double>& r) { return r.first <= r.second; };
    if (press_count_weights.empty()) throw ConfigError("press count weights must not be empty");
    if (!ordered(press_radius) || !ordered(press_displacement) || !ordered(press_squash) || !ordered(noise_sigma) ||
        !ordered(background) || !ordered(marker_intensity) || !ordered(marker_radius) ||
        speck_count.first > speck_count.second) {
        throw ConfigError("distribution ranges must be ordered (low <= high)");
    }
    if (press_radius.first <= 0.0 || press_squash.first < 1.0 || press_displacement.first < 0.0) {
        throw ConfigError("press ranges out of bounds");
    }
}

SceneSpec sample_spec(const SpecDistribution& dist, std::uint64_t seed) {
    dist.validate();
    std::mt19937_64 rng(mix_seed(seed));
    SceneSpec s = dist.base;
    s.marker_radius = draw(rng, dist.marker_radius);
    s.marker_intensity = draw(rng, dist.marker_intensity);
    s.background = draw(rng, dist.background);
    s.noise_sigma = draw(rng, dist.noise_sigma);
    s.slide_x = draw(rng, {-dist.max_slide, dist.max_slide});
    s.slide_y = draw(rng, {-dist.max_slide, dist.max_slide});
    s.speck_count = std::uniform_int_distribution<int>(dist.speck_count.first, dist.speck_count.second)(rng);
    std::discrete_distribution<int> count_dist(dist.press_count_weights.begin(), dist.press_count_weights.end());
    const int presses = count_dist(rng);
    const double lo = dist.press_center_margin;
    const double hi = s.image_size - dist.press_center_margin;
    for (int attempt = 0; attempt < 32; ++attempt) {
        s.presses.clear();
        for (int p = 0; p < presses; ++p) {
            PressEvent e;
            e.cx = draw(rng, {lo, hi});
            e.cy = draw(rng, {lo, hi});
            e.radius = draw(rng, dist.press_radius);
            e.displacement = draw(rng, dist.press_displacement);
            e.squash = draw(rng, dist.press_squash);
            s.presses.push_back(e);
        }
        try {
            SceneSpec probe = s;
            probe.noise_sigma = 0.0;
            probe.speck_count = 0;
            generate_scene(0, probe);
            return s;
        } catch (const ConfigError&) {
            continue;
        }
    }
    s.presses.clear();
    return s;
}

const std::vector<std::string>& DatasetManifest::split(Split s) const {
    switch (s) {
        case Split::train: return train;
        case Split::val: return val;
        case Split::test: return test;
    }
    return train;
}

const SceneEntry& DatasetManifest::scene(const std::string& id) const {
    for (const auto& e : scenes) {
        if (e.id == id) return e;
    }
    throw InputError("scene '" + id + "' not in manifest");
}

std::array<std::size_t, 3> split_sizes(std::size_t n) {
    const std::size_t val = n / 5;
    const std::size_t test = n / 5;
    return {n - val - test, val, test};
}

DatasetManifest make_dataset(int n, const SpecDistribution& dist, std::uint64_t seed,
                             const std::filesystem::path& root) {
    if (n < 10) throw ConfigError("dataset needs at least 10 scenes");
    dist.validate();
    std::error_code ec;
    std::filesystem::create_directories(root / "images", ec);
    if (!ec) std::filesystem::create_directories(root / "labels", ec);
    if (ec) throw IoError("cannot create dataset directories under " + root.string() + ": " + ec.message());

    DatasetManifest m;
    m.seed = seed;
    m.image_size = dist.base.image_size;
    m.distribution = dist;
    for (int i = 0; i < n; ++i) {
        SceneEntry e;
        e.id = scene_id(static_cast<std::size_t>(i));
        e.seed = mix_seed(seed * 0x100000001B3ULL + static_cast<std::uint64_t>(i));
        e.spec = sample_spec(dist, e.seed);
        const LabeledScene scene = generate_scene(e.seed, e.spec);
        write_pgm(scene.image, root / "images" / (e.id + ".pgm"));
        write_label_csv(scene.truth, scene.tags, root / "labels" / (e.id + ".csv"));
        e.marker_count = scene.truth.size();
        m.scenes.push_back(std::move(e));
    }
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(seed ^ 0x5EED5EED5EEDULL));
    std::shuffle(order.begin(), order.end(), rng);
    const auto sizes = split_sizes(static_cast<std::size_t>(n));
    for (std::size_t k = 0; k < order.size(); ++k) {
        const std::string& id = m.scenes[order[k]].id;
        if (k < sizes[0]) {
            m.train.push_back(id);
        } else if (k < sizes[0] + sizes[1]) {
            m.val.push_back(id);
        } else {
            m.test.push_back(id);
        }
    }
    for (auto* v : {&m.train, &m.val, &m.test}) std::sort(v->begin(), v->end());
    return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    json j;
    j["format"] = "vtm-dataset 1";
    j["seed"] = m.seed;
    j["image_size"] = m.image_size;
    j["distribution"] = to_json(m.distribution);
    json scenes = json::array();
    for (const auto& e : m.scenes) {
        scenes.push_back({{"id", e.id}, {"seed", e.seed}, {"markers", e.marker_count}, {"spec", to_json(e.spec)}});
    }
    j["scenes"] = scenes;
    j["splits"] = {{"train", m.train}, {"val", m.val}, {"test", m.test}};
    j["tau"] = m.tau ? json(*m.tau) : json(nullptr);
    j["blob_params"] = m.blob_params ? to_json(*m.blob_params) : json(nullptr);
    if (m.blob_tuning) {
        j["blob_tuning"] = {{"f1", m.blob_tuning->f1},
                            {"precision", m.blob_tuning->precision},
                            {"recall", m.blob_tuning->recall},
                            {"degenerate", m.blob_tuning->degenerate}};
    } else {
        j["blob_tuning"] = nullptr;
    }
    j["difficulty"] = m.difficulty;
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << j.dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    DatasetManifest m;
    try {
        const json j = json::parse(in);
        if (j.at("format").get<std::string>() != "vtm-dataset 1") throw InputError("unsupported manifest format");
        m.seed = j.at("seed").get<std::uint64_t>();
        m.image_size = j.at("image_size").get<int>();
        m.distribution = distribution_from_json(j.at("distribution"));
        for (const auto& s : j.at("scenes")) {
            SceneEntry e;
            e.id = s.at("id").get<std::string>();
            e.seed = s.at("seed").get<std::uint64_t>();
            e.marker_count = s.at("markers").get<std::size_t>();
            e.spec = spec_from_json(s.at("spec"));
            m.scenes.push_back(std::move(e));
        }
        m.train = j.at("splits").at("train").get<std::vector<std::string>>();
        m.val = j.at("splits").at("val").get<std::vector<std::string>>();
        m.test = j.at("splits").at("test").get<std::vector<std::string>>();
        if (!j.at("tau").is_null()) m.tau = j.at("tau").get<double>();
        if (!j.at("blob_params").is_null()) m.blob_params = blob_from_json(j.at("blob_params"));
        if (j.contains("blob_tuning") && !j.at("blob_tuning").is_null()) {
            blob::TuneResult t;
            t.f1 = j["blob_tuning"].at("f1").get<double>();
            t.precision = j["blob_tuning"].at("precision").get<double>();
            t.recall = j["blob_tuning"].at("recall").get<double>();
            t.degenerate = j["blob_tuning"].at("degenerate").get<bool>();
            if (m.blob_params) t.params = *m.blob_params;
            m.blob_tuning = t;
        }
        m.difficulty = j.at("difficulty").get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
        throw InputError("malformed manifest " + path.string() + ": " + e.what());
    }
    return m;
}

LoadedScene load_scene(const std::filesystem::path& root, const std::string& id) {
    LoadedScene s;
    s.id = id;
    s.image = read_pgm(root / "images" / (id + ".pgm"));
    read_label_csv(root / "labels" / (id + ".csv"), s.truth, s.tags);
    return s;
}

std::vector<LoadedScene> load_split(const std::filesystem::path& root, const DatasetManifest& manifest, Split split) {
    std::vector<LoadedScene> out;
    for (const auto& id : manifest.split(split)) out.push_back(load_scene(root, id));
    return out;
}

Partition partition_easy_hard(const std::vector<LoadedScene>& test, const blob::BlobParams& params, double tau) {
    Partition p;
    for (const auto& s : test) {
        const MarkerSet found = blob::detect_blobs(s.image, params);
        const auto match = eval::match_predictions(found, s.truth, tau);
        std::vector<bool> hard(s.truth.size(), true);
        for (const auto& pair : match.pairs) hard[pair.truth] = false;
        const auto nh = static_cast<std::size_t>(std::count(hard.begin(), hard.end(), true));
        p.hard_count += nh;
        p.easy_count += hard.size() - nh;
        p.hard[s.id] = std::move(hard);
    }
    return p;
}

void annotate(DatasetManifest& manifest, const Partition& partition, double tau, const blob::TuneResult& tuning) {
    manifest.tau = tau;
    manifest.blob_params = tuning.params;
    manifest.blob_tuning = tuning;
    manifest.difficulty.clear();
    for (const auto& [id, mask] : partition.hard) {
        std::string s(mask.size(), 'e');
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i]) s[i] = 'h';
        }
        manifest.difficulty[id] = std::move(s);
    }
}

std::string distribution_to_json(const SpecDistribution& dist) { return to_json(dist).dump(); }

SpecDistribution distribution_from_json_text(const std::string& text) {
    try {
        return distribution_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad scene distribution: ") + e.what());
    }
}

Partition tune_and_partition(const std::filesystem::path& root, DatasetManifest& manifest, double tau,
                             std::size_t tune_limit, const blob::BlobLattice& lattice) {
    std::vector<std::string> ids = manifest.train;
    if (tune_limit > 0 && ids.size() > tune_limit) ids.resize(tune_limit);
    std::vector<LoadedScene> tune;
    for (const auto& id : ids) tune.push_back(load_scene(root, id));
    std::vector<blob::LabeledFrame> frames;
    for (const auto& s : tune) frames.push_back({&s.image, &s.truth});
    const blob::TuneResult tuning = blob::tune_params(frames, tau, lattice);
    Partition p = partition_easy_hard(load_split(root, manifest, Split::test), tuning.params, tau);
    annotate(manifest, p, tau, tuning);
    return p;
}

}  // namespace vtm::synth
