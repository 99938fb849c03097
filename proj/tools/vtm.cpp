#include "vtm/config/run_config.hpp"
#include "vtm/errors.hpp"
#include "vtm/eval/evalkit.hpp"
#include "vtm/hash.hpp"
#include "vtm/marknet/model.hpp"
#include "vtm/nn/weights_io.hpp"
#include "vtm/parallel.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace vtm;

namespace {

enum Exit { kOk = 0, kUsage = 2, kInput = 3, kNumeric = 4 };

struct Common {
    std::string config_path;
    unsigned threads = 0;
};

config::RunConfig load_config(const Common& common) {
    std::string path = common.config_path;
    if (path.empty()) {
        if (const char* env = std::getenv(config::kConfigEnv); env && *env) path = env;
    }
    return path.empty() ? config::RunConfig{} : config::load(path);
}

template <class T>
void apply(const std::optional<T>& flag, T& target) {
    if (flag) target = *flag;
}

void write_stamp(const fs::path& path, const std::string& command, const config::RunConfig& cfg, std::uint64_t seed,
                 const std::map<std::string, std::string>& extra = {}) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config_hash"] = config::config_hash(cfg);
    j["seed"] = seed;
    j["version"] = VTM_VERSION;
    j["compiler"] = __VERSION__;
    j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
    for (const auto& [k, v] : extra) j[k] = v;
    j["config"] = nlohmann::ordered_json::parse(config::to_json(cfg));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write stamp " + path.string());
    out << j.dump(2) << '\n';
}

fs::path stamp_for(const fs::path& artifact) { return fs::path(artifact.string() + ".stamp.json"); }

struct Dataset {
    fs::path root;
    synth::DatasetManifest manifest;
};

Dataset open_dataset(const std::string& root) {
    const fs::path m = fs::path(root) / "manifest.json";
    if (!fs::exists(m)) throw InputError("no dataset manifest at " + m.string());
    return {root, synth::read_manifest(m)};
}

double tau_for(const config::RunConfig& cfg, const Dataset& ds, const marknet::MarknetConfig& net_cfg) {
    if (cfg.data.tau) return *cfg.data.tau;
    if (ds.manifest.tau) return *ds.manifest.tau;
    return net_cfg.stride() / 2.0;
}

nn::Network load_marknet(const std::string& path) {
    if (path.empty()) throw ConfigError("--weights is required");
    if (!fs::exists(path)) throw InputError("weights file not found: " + path);
    return nn::read_weights(path);
}

postproc::MreModel load_mre(const std::string& path) {
    if (!fs::exists(path)) throw InputError("MRE weights file not found: " + path);
    return postproc::MreModel(nn::read_weights(path));
}

std::vector<int> parse_values(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("bad --values entry '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("--values must list at least one integer");
    return out;
}

void log(const std::string& s) { std::cerr << s << '\n'; }

// ---- gen-data

struct GenDataArgs {
    std::optional<std::string> out;
    std::optional<int> n;
    std::optional<std::uint64_t> seed;
    std::optional<double> tau;
};

int cmd_gen_data(const Common& common, const GenDataArgs& a) {
    config::RunConfig cfg = load_config(common);
    apply(a.out, cfg.data.root);
    apply(a.n, cfg.data.scenes);
    apply(a.seed, cfg.data.seed);
    if (a.tau) cfg.data.tau = *a.tau;
    if (cfg.data.scenes < 10) throw ConfigError("--n must be at least 10");
    cfg.validate();
    const fs::path root = cfg.data.root;
    synth::DatasetManifest m = synth::make_dataset(cfg.data.scenes, cfg.data.distribution, cfg.data.seed, root);
    const synth::Partition p = synth::tune_and_partition(root, m, cfg.tau(), cfg.data.tune_limit, cfg.blob_lattice);
    synth::write_manifest(m, root / "manifest.json");
    write_stamp(root / "stamp.json", "gen-data", cfg, cfg.data.seed);
    std::printf("train %zu val %zu test %zu\n", m.train.size(), m.val.size(), m.test.size());
    std::printf("blob f1 %.4f; test markers easy %zu hard %zu\n", m.blob_tuning->f1, p.easy_count, p.hard_count);
    std::printf("manifest %s\n", (root / "manifest.json").string().c_str());
    return kOk;
}

// ---- train

struct MarknetFlags {
    std::optional<int> epochs, grid_size, candidates, base_channels, batch_size;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;

    void add(CLI::App* app) {
        app->add_option("--epochs", epochs, "Training epochs");
        app->add_option("--grid-size,-S", grid_size, "Cells per side");
        app->add_option("--candidates,-m", candidates, "Candidate points per cell");
        app->add_option("--base-channels", base_channels, "Stem width");
        app->add_option("--batch-size", batch_size, "Minibatch size");
        app->add_option("--lr", lr, "Learning rate");
        app->add_option("--seed", seed, "Training seed");
    }
    void apply_to(marknet::MarknetConfig& m) const {
        apply(epochs, m.epochs);
        apply(grid_size, m.grid_size);
        apply(candidates, m.candidates);
        apply(base_channels, m.base_channels);
        apply(batch_size, m.batch_size);
        apply(lr, m.learning_rate);
        apply(seed, m.seed);
    }
};

struct TrainArgs {
    std::optional<std::string> data;
    std::string out = "marknet.weights";
    MarknetFlags flags;
};

int cmd_train(const Common& common, const TrainArgs& a) {
    config::RunConfig cfg = load_config(common);
    apply(a.data, cfg.data.root);
    a.flags.apply_to(cfg.marknet);
    cfg.validate();
    const Dataset ds = open_dataset(cfg.data.root);
    if (ds.manifest.image_size != cfg.marknet.image_size) {
        throw InputError("dataset images are " + std::to_string(ds.manifest.image_size) + " px but the config expects " +
                         std::to_string(cfg.marknet.image_size));
    }
    const auto train = synth::load_split(ds.root, ds.manifest, synth::Split::train);
    const auto val = synth::load_split(ds.root, ds.manifest, synth::Split::val);
    const double tau = tau_for(cfg, ds, cfg.marknet);
    marknet::TrainHooks hooks;
    if (!val.empty()) hooks.validate = eval::make_validator(val, cfg.marknet, tau);
    hooks.on_epoch = [](const marknet::EpochRecord& r) {
        char line[160];
        std::snprintf(line, sizeof line, "epoch %3d  L %.5f  L_c %.5f  L_p %.4f  val P %.4f R %.4f", r.epoch, r.loss,
                      r.conf_loss, r.pos_loss, r.val_precision, r.val_recall);
        log(line);
    };
    const auto result = marknet::train(eval::labeled_of(train), cfg.marknet, hooks);
    nn::write_weights(result.best, a.out);
    marknet::write_history_csv(result.history, a.out + ".history.csv");
    write_stamp(stamp_for(a.out), "train", cfg, cfg.marknet.seed, {{"data", cfg.data.root}});
    std::printf("best epoch %d; weights %s\n", result.best_epoch, a.out.c_str());
    return kOk;
}

// ---- train-mre

struct TrainMreArgs {
    std::optional<std::string> data;
    std::string weights;
    std::string out = "mre.weights";
    std::optional<int> epochs;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
};

int cmd_train_mre(const Common& common, const TrainMreArgs& a) {
    config::RunConfig cfg = load_config(common);
    apply(a.data, cfg.data.root);
    apply(a.epochs, cfg.mre.epochs);
    apply(a.lr, cfg.mre.learning_rate);
    apply(a.seed, cfg.mre.seed);
    cfg.validate();
    const nn::Network net = load_marknet(a.weights);
    const marknet::MarknetConfig mcfg = marknet::load_config(net);
    const Dataset ds = open_dataset(cfg.data.root);
    const auto val = synth::load_split(ds.root, ds.manifest, synth::Split::val);
    const double tau = tau_for(cfg, ds, mcfg);
    mretrain::DatasetStats stats;
    const auto samples = mretrain::build_mre_dataset(net, eval::frames_of(val), tau, mcfg, cfg.postproc_config(mcfg),
                                                     cfg.mre.seed, &stats);
    mretrain::write_mre_csv(samples, a.out + ".samples.csv");
    mretrain::MreTrainOptions opt = cfg.mre;
    opt.distance_scale = mcfg.stride();
    const auto result = mretrain::train_mre(samples, opt);
    nn::write_weights(result.model.network(), a.out);
    write_stamp(stamp_for(a.out), "train-mre", cfg, cfg.mre.seed, {{"weights", a.weights}});
    std::printf("candidates: %zu positive, %zu negative; balanced %zu\n", stats.positives_raw, stats.negatives_raw,
                samples.size());
    std::printf("held-out accuracy %.4f on %zu samples\n", result.heldout_accuracy, result.heldout_size);
    return kOk;
}

// ---- infer

struct InferArgs {
    std::string weights;
    std::string mre;
    std::string input;
    std::string out = "infer";
    bool no_mre = false;
    std::optional<double> conf;
};

int cmd_infer(const Common& common, const InferArgs& a) {
    config::RunConfig cfg = load_config(common);
    apply(a.conf, cfg.postproc.baseline_threshold);
    cfg.validate();
    const nn::Network net = load_marknet(a.weights);
    const marknet::MarknetConfig mcfg = marknet::load_config(net);
    postproc::PostprocConfig post = cfg.postproc_config(mcfg);
    post.use_mre = !a.no_mre;
    std::optional<postproc::MreModel> mre;
    if (post.use_mre) {
        if (a.mre.empty()) throw ConfigError("--mre is required unless --no-mre is given");
        mre = load_mre(a.mre);
    }
    if (!fs::exists(a.input)) throw InputError("input not found: " + a.input);
    std::vector<fs::path> images;
    if (fs::is_directory(a.input)) {
        for (const auto& e : fs::directory_iterator(a.input)) {
            if (e.path().extension() == ".pgm") images.push_back(e.path());
        }
        std::sort(images.begin(), images.end());
    } else {
        images.push_back(a.input);
    }
    if (images.empty()) throw InputError("no .pgm images in " + a.input);
    fs::create_directories(a.out);
    for (const auto& path : images) {
        const Image img = read_pgm(path);
        if (img.width() != mcfg.image_size || img.height() != mcfg.image_size) {
            throw InputError(path.string() + " is " + std::to_string(img.width()) + "x" +
                             std::to_string(img.height()) + ", the model expects " + std::to_string(mcfg.image_size));
        }
        const auto markers = postproc::localize(img, net, mre ? &*mre : nullptr, mcfg, post);
        const std::string stem = path.stem().string();
        write_marker_csv(markers, fs::path(a.out) / (stem + ".csv"));
        write_pgm(postproc::overlay(img, markers), fs::path(a.out) / (stem + "_overlay.pgm"));
        std::printf("%s %zu markers\n", stem.c_str(), markers.size());
    }
    write_stamp(fs::path(a.out) / "stamp.json", "infer", cfg, mcfg.seed,
                {{"weights", a.weights}, {"mre", post.use_mre ? a.mre : ""}});
    return kOk;
}

// ---- eval / compare

struct EvalArgs {
    std::optional<std::string> data;
    std::string method = "marknet-mre";
    std::string difficulty = "all";
    std::string weights;
    std::string mre;
    std::string out;
};

struct Loaded {
    Dataset ds;
    std::vector<synth::LoadedScene> test;
    std::optional<nn::Network> net;
    std::optional<postproc::MreModel> mre;
    eval::MethodModels models;
    double tau = 0.0;
};

void load_models(const config::RunConfig& cfg, const std::string& weights, const std::string& mre_path, bool need_net,
                 bool need_mre, Loaded& l) {
    l.ds = open_dataset(cfg.data.root);
    l.test = synth::load_split(l.ds.root, l.ds.manifest, synth::Split::test);
    l.models.blob = l.ds.manifest.blob_params;
    l.models.cfg = cfg.marknet;
    if (need_net) {
        l.net = load_marknet(weights);
        l.models.cfg = marknet::load_config(*l.net);
        l.models.marknet = &*l.net;
    }
    l.models.post = cfg.postproc_config(l.models.cfg);
    if (need_mre) {
        if (mre_path.empty()) throw ConfigError("--mre is required for marknet-mre");
        l.mre = load_mre(mre_path);
        l.models.mre = &*l.mre;
    }
    l.tau = tau_for(cfg, l.ds, l.models.cfg);
}

void emit(const std::vector<eval::MetricsReport>& reports, const std::string& out) {
    std::fputs(eval::format_table(reports).c_str(), stdout);
    if (out.empty()) return;
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    eval::write_reports_csv(reports, out + ".csv");
    eval::write_reports_json(reports, out + ".json");
}

int cmd_eval(const Common& common, const EvalArgs& a) {
    config::RunConfig cfg = load_config(common);
    apply(a.data, cfg.data.root);
    cfg.validate();
    const eval::Method method = eval::parse_method(a.method);
    const eval::Difficulty diff = eval::parse_difficulty(a.difficulty);
    Loaded l;
    load_models(cfg, a.weights, a.mre, method != eval::Method::blob, method == eval::Method::marknet_mre, l);
    if (method == eval::Method::blob && !l.models.blob) throw InputError("dataset manifest has no tuned blob parameters");
    const auto r = eval::evaluate_method(method, l.test, l.ds.manifest.difficulty, diff, l.tau, l.models);
    emit({r}, a.out);
    if (!a.out.empty()) write_stamp(stamp_for(a.out), "eval", cfg, l.models.cfg.seed, {{"method", a.method}});
    return kOk;
}

int cmd_compare(const Common& common, const EvalArgs& a) {
    config::RunConfig cfg = load_config(common);
    apply(a.data, cfg.data.root);
    cfg.validate();
    Loaded l;
    load_models(cfg, a.weights, a.mre, true, true, l);
    if (!l.models.blob) throw InputError("dataset manifest has no tuned blob parameters");
    std::vector<eval::MetricsReport> reports;
    for (auto m : {eval::Method::blob, eval::Method::marknet, eval::Method::marknet_mre}) {
        const auto preds = eval::predict(m, l.test, l.models);
        for (auto d : {eval::Difficulty::easy, eval::Difficulty::hard, eval::Difficulty::all}) {
            auto r = eval::score(preds, l.test, l.ds.manifest.difficulty, d, l.tau);
            r.method = eval::to_string(m);
            if (m != eval::Method::blob) {
                r.grid_size = l.models.cfg.grid_size;
                r.candidates = l.models.cfg.candidates;
                r.seed = l.models.cfg.seed;
            } else if (d == eval::Difficulty::easy) {
                r.note = "easy is defined by blob success";
            }
            reports.push_back(r);
        }
    }
    emit(reports, a.out);
    if (!a.out.empty()) write_stamp(stamp_for(a.out), "compare", cfg, l.models.cfg.seed);
    return kOk;
}

// ---- sweep

struct SweepArgs {
    std::optional<std::string> data;
    std::string axis = "m";
    std::string values;
    std::string out = "sweep";
    std::string method = "marknet-mre";
    std::optional<int> train_limit;
    std::optional<std::string> cache;
    MarknetFlags flags;
};

int cmd_sweep(const Common& common, const SweepArgs& a) {
    config::RunConfig cfg = load_config(common);
    apply(a.data, cfg.data.root);
    a.flags.apply_to(cfg.marknet);
    apply(a.train_limit, cfg.sweep.train_limit);
    apply(a.cache, cfg.sweep.cache);
    if (cfg.sweep.epochs > 0 && !a.flags.epochs) cfg.marknet.epochs = cfg.sweep.epochs;
    cfg.validate();
    const eval::SweepAxis axis = eval::parse_axis(a.axis);
    const std::vector<int> values = parse_values(a.values);
    const Dataset ds = open_dataset(cfg.data.root);
    eval::SweepContext ctx;
    auto train = synth::load_split(ds.root, ds.manifest, synth::Split::train);
    if (cfg.sweep.train_limit > 0 && train.size() > static_cast<std::size_t>(cfg.sweep.train_limit)) {
        train.resize(static_cast<std::size_t>(cfg.sweep.train_limit));
    }
    ctx.train = eval::labeled_of(train);
    ctx.val = synth::load_split(ds.root, ds.manifest, synth::Split::val);
    ctx.test = synth::load_split(ds.root, ds.manifest, synth::Split::test);
    ctx.difficulty = ds.manifest.difficulty;
    ctx.tau = tau_for(cfg, ds, cfg.marknet);
    ctx.method = eval::parse_method(a.method);
    if (ctx.method == eval::Method::blob) throw ConfigError("sweeps apply to marknet or marknet-mre");
    ctx.mre = cfg.mre;
    if (!cfg.sweep.cache.empty()) ctx.cache_dir = fs::path(cfg.sweep.cache);
    ctx.log = log;
    const auto rows = eval::run_sweep(axis, values, cfg.marknet, ctx);
    fs::create_directories(a.out);
    eval::write_sweep_csv(axis, rows, fs::path(a.out) / "sweep.csv");
    std::vector<eval::MetricsReport> reports;
    for (const auto& row : rows) {
        if (row.report) reports.push_back(*row.report);
    }
    eval::write_reports_json(reports, fs::path(a.out) / "sweep.json");
    write_stamp(fs::path(a.out) / "stamp.json", "sweep", cfg, cfg.marknet.seed,
                {{"axis", eval::to_string(axis)}, {"values", a.values}});
    std::printf("%-6s %-5s %-6s %10s %10s %7s\n", eval::to_string(axis).c_str(), "subset", "status", "precision",
                "recall", "T");
    for (const auto& row : rows) {
        if (!row.report) {
            std::printf("%-6d %-5s error  %s\n", row.value, eval::to_string(row.difficulty).c_str(), row.error.c_str());
            continue;
        }
        const auto& r = *row.report;
        std::printf("%-6d %-5s ok     %10.4f %10.4f %7zu\n", row.value, r.difficulty.c_str(), r.precision.value_or(0.0),
                    r.recall.value_or(0.0), r.counts.t);
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Visuotactile marker localization: data, training, inference, evaluation"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config_path,
                   std::string("JSON run config (default: $") + config::kConfigEnv + ")");
    app.add_option("--threads", common.threads, "Worker thread cap (0 = all cores)");

    GenDataArgs gen;
    auto* c_gen = app.add_subcommand("gen-data", "Render a synthetic dataset and annotate easy/hard test markers");
    c_gen->add_option("--out,-o", gen.out, "Dataset directory");
    c_gen->add_option("--n", gen.n, "Number of scenes (>= 10)");
    c_gen->add_option("--seed", gen.seed, "Dataset seed");
    c_gen->add_option("--tau", gen.tau, "Match radius in px");

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Train the grid-regression detector");
    c_train->add_option("--data", train.data, "Dataset directory");
    c_train->add_option("--out,-o", train.out, "Weights file")->capture_default_str();
    train.flags.add(c_train);

    TrainMreArgs tmre;
    auto* c_tmre = app.add_subcommand("train-mre", "Build the MRE dataset from validation predictions and train it");
    c_tmre->add_option("--data", tmre.data, "Dataset directory");
    c_tmre->add_option("--weights,-w", tmre.weights, "Detector weights")->required();
    c_tmre->add_option("--out,-o", tmre.out, "MRE weights file")->capture_default_str();
    c_tmre->add_option("--epochs", tmre.epochs, "MRE epochs");
    c_tmre->add_option("--lr", tmre.lr, "MRE learning rate");
    c_tmre->add_option("--seed", tmre.seed, "MRE seed");

    InferArgs infer;
    auto* c_infer = app.add_subcommand("infer", "Localize markers in PGM images");
    c_infer->add_option("--weights,-w", infer.weights, "Detector weights")->required();
    c_infer->add_option("--mre", infer.mre, "MRE weights");
    c_infer->add_option("--input,-i", infer.input, "PGM file or directory")->required();
    c_infer->add_option("--out,-o", infer.out, "Output directory")->capture_default_str();
    c_infer->add_flag("--no-mre", infer.no_mre, "Detector only: keep candidates above --conf");
    c_infer->add_option("--conf", infer.conf, "Confidence threshold of the detector-only mode");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Evaluate one method on the test split");
    c_eval->add_option("--data", ev.data, "Dataset directory");
    c_eval->add_option("--method", ev.method, "blob | marknet | marknet-mre")->capture_default_str();
    c_eval->add_option("--difficulty", ev.difficulty, "easy | hard | all")->capture_default_str();
    c_eval->add_option("--weights,-w", ev.weights, "Detector weights");
    c_eval->add_option("--mre", ev.mre, "MRE weights");
    c_eval->add_option("--out,-o", ev.out, "Report path prefix (.csv and .json)");

    EvalArgs cmp;
    auto* c_cmp = app.add_subcommand("compare", "Blob vs marknet vs marknet-mre on the test split");
    c_cmp->add_option("--data", cmp.data, "Dataset directory");
    c_cmp->add_option("--weights,-w", cmp.weights, "Detector weights")->required();
    c_cmp->add_option("--mre", cmp.mre, "MRE weights")->required();
    c_cmp->add_option("--out,-o", cmp.out, "Report path prefix (.csv and .json)");

    SweepArgs sw;
    auto* c_sweep = app.add_subcommand("sweep", "Train and evaluate one configuration per value of S or m");
    c_sweep->add_option("--data", sw.data, "Dataset directory");
    c_sweep->add_option("--axis", sw.axis, "S | m")->capture_default_str();
    c_sweep->add_option("--values", sw.values, "Comma-separated integers")->required();
    c_sweep->add_option("--out,-o", sw.out, "Output directory")->capture_default_str();
    c_sweep->add_option("--method", sw.method, "marknet | marknet-mre")->capture_default_str();
    c_sweep->add_option("--train-limit", sw.train_limit, "Use at most this many training scenes");
    c_sweep->add_option("--cache", sw.cache, "Weight cache directory");
    sw.flags.add(c_sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        set_thread_limit(common.threads);
        if (*c_gen) return cmd_gen_data(common, gen);
        if (*c_train) return cmd_train(common, train);
        if (*c_tmre) return cmd_train_mre(common, tmre);
        if (*c_infer) return cmd_infer(common, infer);
        if (*c_eval) return cmd_eval(common, ev);
        if (*c_cmp) return cmd_compare(common, cmp);
        if (*c_sweep) return cmd_sweep(common, sw);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kInput;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kInput;
    } catch (const StateError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInput;
    }
    return kUsage;
}
