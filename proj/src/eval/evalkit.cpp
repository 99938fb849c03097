#include "vtm/eval/evalkit.hpp"

#include "vtm/errors.hpp"
#include "vtm/hash.hpp"
#include "vtm/marknet/model.hpp"
#include "vtm/nn/weights_io.hpp"
#include "vtm/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vtm::eval {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : ""; }

std::string csv_text(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

}  // namespace

std::string to_string(Method m) {
    switch (m) {
        case Method::blob: return "blob";
        case Method::marknet: return "marknet";
        case Method::marknet_mre: return "marknet-mre";
    }
    return "?";
}

std::string to_string(Difficulty d) {
    switch (d) {
        case Difficulty::easy: return "easy";
        case Difficulty::hard: return "hard";
        case Difficulty::all: return "all";
    }
    return "?";
}

Method parse_method(const std::string& s) {
    if (s == "blob") return Method::blob;
    if (s == "marknet") return Method::marknet;
    if (s == "marknet-mre") return Method::marknet_mre;
    throw ConfigError("unknown method '" + s + "' (expected blob, marknet, marknet-mre)");
}

Difficulty parse_difficulty(const std::string& s) {
    if (s == "easy") return Difficulty::easy;
    if (s == "hard") return Difficulty::hard;
    if (s == "all") return Difficulty::all;
    throw ConfigError("unknown difficulty '" + s + "' (expected easy, hard, all)");
}

std::string to_string(SweepAxis a) { return a == SweepAxis::grid_size ? "S" : "m"; }

SweepAxis parse_axis(const std::string& s) {
    if (s == "S" || s == "grid-size") return SweepAxis::grid_size;
    if (s == "m" || s == "candidates") return SweepAxis::candidates;
    throw ConfigError("unknown sweep axis '" + s + "' (expected S or m)");
}

std::vector<MarkerSet> predict(Method method, const std::vector<synth::LoadedScene>& scenes, const MethodModels& models) {
    std::vector<MarkerSet> out(scenes.size());
    if (method == Method::blob) {
        if (!models.blob) throw StateError("blob method needs tuned parameters");
        parallel_for(scenes.size(), [&](std::size_t i) { out[i] = blob::detect_blobs(scenes[i].image, *models.blob); });
        return out;
    }
    if (!models.marknet) throw StateError(to_string(method) + " needs Marknet weights");
    postproc::PostprocConfig post = models.post;
    post.use_mre = method == Method::marknet_mre;
    if (post.use_mre && !models.mre) throw StateError("marknet-mre needs an MRE model");
    parallel_for(scenes.size(), [&](std::size_t i) {
        out[i] = postproc::positions(postproc::localize(scenes[i].image, *models.marknet, models.mre, models.cfg, post));
    });
    return out;
}

MetricsReport score(const std::vector<MarkerSet>& preds, const std::vector<synth::LoadedScene>& scenes,
                    const DifficultyMap& difficulty_map, Difficulty difficulty, double tau) {
    if (preds.size() != scenes.size()) throw InputError("prediction count does not match scene count");
    Counts total;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto& s = scenes[i];
        const MatchResult match = match_predictions(preds[i], s.truth, tau);
        if (difficulty == Difficulty::all) {
            total += counts_of(match);
            continue;
        }
        auto it = difficulty_map.find(s.id);
        if (it == difficulty_map.end()) throw InputError("scene " + s.id + " has no difficulty annotation");
        if (it->second.size() != s.truth.size()) {
            throw InputError("difficulty annotation of scene " + s.id + " does not match its marker count");
        }
        const char want = difficulty == Difficulty::hard ? 'h' : 'e';
        std::vector<bool> in(s.truth.size());
        for (std::size_t j = 0; j < in.size(); ++j) in[j] = it->second[j] == want;
        total += subset_counts(match, in);
    }
    MetricsReport r = metrics(total);
    r.difficulty = to_string(difficulty);
    r.tau = tau;
    if (total.t == 0) r.note = "empty subset";
    return r;
}

MetricsReport evaluate_method(Method method, const std::vector<synth::LoadedScene>& scenes,
                              const DifficultyMap& difficulty_map, Difficulty difficulty, double tau,
                              const MethodModels& models) {
    MetricsReport r = score(predict(method, scenes, models), scenes, difficulty_map, difficulty, tau);
    r.method = to_string(method);
    if (method != Method::blob) {
        r.grid_size = models.cfg.grid_size;
        r.candidates = models.cfg.candidates;
        r.seed = models.cfg.seed;
    }
    if (method == Method::blob && difficulty == Difficulty::easy) {
        r.note = r.note.empty() ? "easy is defined by blob success" : r.note + "; easy is defined by blob success";
    }
    return r;
}

void write_reports_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "method,difficulty,grid_size,candidates,tau,seed,precision,recall,loss,pt,pf,t,d,note\n";
    for (const auto& r : reports) {
        out << r.method << ',' << r.difficulty << ',' << r.grid_size << ',' << r.candidates << ',' << num(r.tau) << ','
            << r.seed << ',' << opt_num(r.precision) << ',' << opt_num(r.recall) << ',' << opt_num(r.loss) << ','
            << r.counts.pt << ',' << r.counts.pf << ',' << r.counts.t << ',' << num(r.counts.d) << ','
            << csv_text(r.note) << '\n';
    }
}

namespace {

nlohmann::ordered_json report_json(const MetricsReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
    nlohmann::ordered_json j;
    j["method"] = r.method;
    j["difficulty"] = r.difficulty;
    j["precision"] = opt(r.precision);
    j["recall"] = opt(r.recall);
    j["loss"] = opt(r.loss);
    j["counts"] = {{"pt", r.counts.pt}, {"pf", r.counts.pf}, {"t", r.counts.t}, {"d", r.counts.d}};
    j["fingerprint"] = {{"grid_size", r.grid_size}, {"candidates", r.candidates}, {"tau", r.tau}, {"seed", r.seed}};
    j["note"] = r.note;
    return j;
}

}  // namespace

std::string reports_json(const std::vector<MetricsReport>& reports) {
    nlohmann::ordered_json j;
    j["format"] = "vtm-reports 1";
    j["reports"] = nlohmann::ordered_json::array();
    for (const auto& r : reports) j["reports"].push_back(report_json(r));
    return j.dump(2) + "\n";
}

void write_reports_json(const std::vector<MetricsReport>& reports, const std::filesystem::path& path) {
    open_out(path) << reports_json(reports);
}

std::string format_table(const std::vector<MetricsReport>& reports) {
    std::ostringstream ss;
    char line[200];
    std::snprintf(line, sizeof line, "%-12s %-10s %10s %10s %10s %7s %7s %7s\n", "method", "subset", "precision",
                  "recall", "loss", "PT", "PF", "T");
    ss << line;
    auto pct = [](const std::optional<double>& v) {
        if (!v) return std::string("/");
        char b[16];
        std::snprintf(b, sizeof b, "%.2f%%", 100.0 * *v);
        return std::string(b);
    };
    for (const auto& r : reports) {
        const std::string loss = r.loss ? num(*r.loss) : "/";
        std::snprintf(line, sizeof line, "%-12s %-10s %10s %10s %10s %7zu %7zu %7zu\n", r.method.c_str(),
                      r.difficulty.c_str(), pct(r.precision).c_str(), pct(r.recall).c_str(), loss.c_str(), r.counts.pt,
                      r.counts.pf, r.counts.t);
        ss << line;
    }
    for (const auto& r : reports) {
        if (!r.note.empty()) ss << r.method << '/' << r.difficulty << ": " << r.note << '\n';
    }
    return ss.str();
}

std::vector<mretrain::Frame> frames_of(const std::vector<synth::LoadedScene>& scenes) {
    std::vector<mretrain::Frame> out;
    out.reserve(scenes.size());
    for (const auto& s : scenes) out.push_back({s.id, &s.image, &s.truth});
    return out;
}

std::vector<marknet::LabeledImage> labeled_of(const std::vector<synth::LoadedScene>& scenes) {
    std::vector<marknet::LabeledImage> out;
    out.reserve(scenes.size());
    for (const auto& s : scenes) out.push_back({s.image, s.truth});
    return out;
}

marknet::Validator make_validator(const std::vector<synth::LoadedScene>& val, const marknet::MarknetConfig& cfg,
                                  double tau) {
    return [&val, cfg, tau](const nn::Network& net) {
        postproc::PostprocConfig post = postproc::PostprocConfig::defaults_for(cfg);
        std::vector<Counts> per(val.size());
        parallel_for(val.size(), [&](std::size_t i) {
            MarkerSet kept;
            for (const Marker& m : postproc::candidates(net, val[i].image, cfg, post)) {
                if (m.c > post.accept_threshold) kept.push_back(m);
            }
            per[i] = counts_of(match_predictions(kept, val[i].truth, tau));
        });
        Counts total;
        for (const auto& c : per) total += c;
        const MetricsReport r = metrics(total);
        return marknet::ValidationScore{r.precision.value_or(0.0), r.recall.value_or(0.0)};
    };
}

std::vector<SweepRow> run_sweep(SweepAxis axis, const std::vector<int>& values, const marknet::MarknetConfig& base,
                                const SweepContext& ctx) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    auto log = [&](const std::string& s) {
        if (ctx.log) ctx.log(s);
    };
    std::vector<SweepRow> rows;
    auto fail = [&](int value, const std::string& why) {
        for (Difficulty d : {Difficulty::easy, Difficulty::hard}) {
            SweepRow row;
            row.value = value;
            row.difficulty = d;
            row.error = why;
            rows.push_back(row);
        }
    };
    for (int value : values) {
        marknet::MarknetConfig cfg = base;
        (axis == SweepAxis::grid_size ? cfg.grid_size : cfg.candidates) = value;
        try {
            cfg.validate();
            (void)marknet::build_backbone(cfg);
        } catch (const ConfigError& e) {
            log(to_string(axis) + "=" + std::to_string(value) + ": " + e.what());
            fail(value, e.what());
            continue;
        }
        try {
            const std::string key = hex64(fnv1a64(cfg.fingerprint() + " n=" + std::to_string(ctx.train.size())));
            std::optional<nn::Network> net;
            std::filesystem::path cached;
            if (ctx.cache_dir) {
                cached = *ctx.cache_dir / ("marknet-" + key + ".weights");
                if (std::filesystem::exists(cached)) {
                    net = nn::read_weights(cached);
                    log(to_string(axis) + "=" + std::to_string(value) + ": cached " + cached.string());
                }
            }
            if (!net) {
                log(to_string(axis) + "=" + std::to_string(value) + ": training " + cfg.fingerprint());
                marknet::TrainHooks hooks;
                hooks.validate = make_validator(ctx.val, cfg, ctx.tau);
                net = marknet::train(ctx.train, cfg, hooks).best;
                if (ctx.cache_dir) {
                    std::filesystem::create_directories(*ctx.cache_dir);
                    nn::write_weights(*net, cached);
                }
            }
            MethodModels models;
            models.marknet = &*net;
            models.cfg = cfg;
            models.post = postproc::PostprocConfig::defaults_for(cfg);
            std::optional<postproc::MreModel> mre;
            Method method = ctx.method;
            std::string note;
            if (method == Method::marknet_mre) {
                try {
                    auto samples = mretrain::build_mre_dataset(*net, frames_of(ctx.val), ctx.tau, cfg, models.post,
                                                               ctx.mre.seed);
                    mretrain::MreTrainOptions opt = ctx.mre;
                    opt.distance_scale = cfg.stride();
                    mre = mretrain::train_mre(samples, opt).model;
                    models.mre = &*mre;
                } catch (const InputError& e) {
                    method = Method::marknet;
                    note = std::string("MRE untrainable, Marknet-only: ") + e.what();
                    log(note);
                }
            }
            const auto preds = predict(method, ctx.test, models);
            for (Difficulty d : {Difficulty::easy, Difficulty::hard}) {
                MetricsReport r = score(preds, ctx.test, ctx.difficulty, d, ctx.tau);
                r.method = to_string(method);
                r.grid_size = cfg.grid_size;
                r.candidates = cfg.candidates;
                r.seed = cfg.seed;
                if (!note.empty()) r.note = r.note.empty() ? note : r.note + "; " + note;
                SweepRow row;
                row.value = value;
                row.difficulty = d;
                row.report = r;
                rows.push_back(row);
            }
        } catch (const InputError& e) {
            fail(value, e.what());
        } catch (const NumericError& e) {
            fail(value, e.what());
        }
    }
    return rows;
}

void write_sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "axis,value,difficulty,status,method,grid_size,candidates,tau,precision,recall,loss,pt,pf,t,note\n";
    for (const auto& row : rows) {
        out << to_string(axis) << ',' << row.value << ',' << to_string(row.difficulty) << ',';
        if (!row.report) {
            out << "error,,,,,,,,,,," << csv_text(row.error) << '\n';
            continue;
        }
        const auto& r = *row.report;
        out << "ok," << r.method << ',' << r.grid_size << ',' << r.candidates << ',' << num(r.tau) << ','
            << opt_num(r.precision) << ',' << opt_num(r.recall) << ',' << opt_num(r.loss) << ',' << r.counts.pt << ','
            << r.counts.pf << ',' << r.counts.t << ',' << csv_text(r.note) << '\n';
    }
}

}  // namespace vtm::eval
