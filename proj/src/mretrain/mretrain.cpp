#include "vtm/mretrain/mretrain.hpp"

#include "vtm/errors.hpp"
#include "vtm/eval/match.hpp"
#include "vtm/nn/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace vtm::mretrain {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// The training network is the model's chain without its sigmoid, so BCE is
// computed on logits.
nn::Network logit_network(const nn::Network& full) {
    std::vector<nn::LayerSpec> layers(full.layers().begin(), full.layers().end() - 1);
    nn::Network net(full.input_shape(), std::move(layers), full.seed());
    net.params() = full.params();
    return net;
}

}  // namespace

std::vector<MreSample> label_candidates(const std::string& id, const MarkerSet& deduped, const MarkerSet& truth,
                                        double tau, const postproc::PostprocConfig& post) {
    // Features use the inference context: accepted plus evaluate-band markers.
    MarkerSet accepted, band, low;
    std::vector<std::size_t> band_index, low_index;
    for (std::size_t i = 0; i < deduped.size(); ++i) {
        const Marker& m = deduped[i];
        if (m.c > post.accept_threshold) {
            accepted.push_back(m);
        } else if (m.c >= post.band_low) {
            band.push_back(m);
            band_index.push_back(i);
        } else {
            low.push_back(m);
            low_index.push_back(i);
        }
    }
    MarkerSet context = accepted;
    context.insert(context.end(), band.begin(), band.end());

    MarkerSet rest = band;
    rest.insert(rest.end(), low.begin(), low.end());
    std::vector<std::size_t> rest_index = band_index;
    rest_index.insert(rest_index.end(), low_index.begin(), low_index.end());

    const auto first = eval::match_predictions(accepted, truth, tau);
    std::vector<bool> claimed(truth.size(), false);
    for (const auto& p : first.pairs) claimed[p.truth] = true;
    MarkerSet free_truth;
    for (std::size_t j = 0; j < truth.size(); ++j) {
        if (!claimed[j]) free_truth.push_back(truth[j]);
    }
    const auto second = eval::match_predictions(rest, free_truth, tau);

    std::vector<MreSample> out;
    MarkerSet with_target = context;
    with_target.emplace_back();
    for (std::size_t i = 0; i < rest.size(); ++i) {
        if (!(rest[i].c < post.accept_threshold)) continue;
        MreSample s;
        if (i < band.size()) {
            s.feature = postproc::build_feature(accepted.size() + i, context, post.sentinel);
        } else {
            with_target.back() = rest[i];
            s.feature = postproc::build_feature(context.size(), with_target, post.sentinel);
        }
        s.label = second.pred_to_truth[i] >= 0 ? 1 : 0;
        s.image_id = id;
        s.candidate_index = rest_index[i];
        out.push_back(std::move(s));
    }
    std::sort(out.begin(), out.end(),
              [](const MreSample& a, const MreSample& b) { return a.candidate_index < b.candidate_index; });
    return out;
}

std::vector<MreSample> balance(const std::vector<MreSample>& samples, std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < samples.size(); ++i) (samples[i].label ? pos : neg).push_back(i);
    auto& major = pos.size() > neg.size() ? pos : neg;
    const std::size_t keep = std::min(pos.size(), neg.size());
    std::mt19937_64 rng(seed);
    std::shuffle(major.begin(), major.end(), rng);
    major.resize(keep);
    std::vector<std::size_t> chosen = pos;
    chosen.insert(chosen.end(), neg.begin(), neg.end());
    std::sort(chosen.begin(), chosen.end());
    std::vector<MreSample> out;
    out.reserve(chosen.size());
    for (std::size_t i : chosen) out.push_back(samples[i]);
    return out;
}

std::vector<MreSample> build_mre_dataset(const nn::Network& net, const std::vector<Frame>& frames, double tau,
                                         const marknet::MarknetConfig& cfg, const postproc::PostprocConfig& post,
                                         std::uint64_t seed, DatasetStats* stats) {
    if (frames.empty()) throw InputError("validation split is empty; cannot build the MRE dataset");
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    std::vector<MreSample> all;
    for (const Frame& f : frames) {
        const MarkerSet deduped = postproc::candidates(net, *f.image, cfg, post);
        auto s = label_candidates(f.id, deduped, *f.truth, tau, post);
        all.insert(all.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
    const auto positives = static_cast<std::size_t>(
        std::count_if(all.begin(), all.end(), [](const MreSample& s) { return s.label == 1; }));
    const std::size_t negatives = all.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw InputError("MRE dataset has " + std::to_string(positives) + " positive and " + std::to_string(negatives) +
                         " negative candidates below the accept threshold; the MRE is untrainable");
    }
    auto balanced = balance(all, seed);
    if (stats) {
        stats->positives_raw = positives;
        stats->negatives_raw = negatives;
        stats->positives = balanced.size() / 2;
        stats->negatives = balanced.size() / 2;
    }
    return balanced;
}

MreTrainResult train_mre(const std::vector<MreSample>& samples, const MreTrainOptions& opt) {
    const auto positives = static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [](const MreSample& s) { return s.label == 1; }));
    if (positives == 0 || positives == samples.size()) throw InputError("MRE training needs both classes");
    if (opt.epochs < 0 || opt.batch_size < 1) throw ConfigError("MRE epochs must be >= 0 and batch size >= 1");

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 split_rng(opt.seed ^ 0xA5A5A5A5ULL);
    std::shuffle(order.begin(), order.end(), split_rng);
    const std::size_t heldout = std::max<std::size_t>(1, samples.size() / 10);
    std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(heldout));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(heldout), order.end());
    if (train.empty()) throw InputError("too few MRE samples for a held-out split");

    postproc::MreModel model(opt.distance_scale, opt.seed, opt.hidden1, opt.hidden2);
    {
        std::vector<postproc::RationalityFeature> f;
        f.reserve(train.size());
        for (std::size_t i : train) f.push_back(samples[i].feature);
        model.fit_standardization(f);
    }
    nn::Network net = logit_network(model.network());
    nn::Sgd sgd(opt.learning_rate, opt.momentum);
    const auto batch = static_cast<std::size_t>(opt.batch_size);

    auto gather = [&](const std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi) {
        std::vector<postproc::RationalityFeature> f;
        for (std::size_t i = lo; i < hi; ++i) f.push_back(samples[idx[i]].feature);
        return model.to_input(f);
    };

    double epoch_loss = 0.0;
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::mt19937_64 rng(opt.seed * 7919ULL + static_cast<std::uint64_t>(epoch));
        std::shuffle(train.begin(), train.end(), rng);
        epoch_loss = 0.0;
        for (std::size_t lo = 0; lo < train.size(); lo += batch) {
            const std::size_t hi = std::min(train.size(), lo + batch);
            nn::Tape tape;
            const nn::Tensor4 z = nn::forward(net, gather(train, lo, hi), &tape);
            nn::Tensor4 dz(z.shape());
            const double inv = 1.0 / static_cast<double>(hi - lo);
            for (std::size_t k = 0; k < hi - lo; ++k) {
                const double t = samples[train[lo + k]].label;
                const double zk = z.values()[k];
                epoch_loss += softplus(zk) - t * zk;
                dz.values()[k] = (sigmoid(zk) - t) * inv;
            }
            if (!std::isfinite(epoch_loss)) {
                throw NumericError("MRE loss diverged at epoch " + std::to_string(epoch + 1));
            }
            sgd.step(net, nn::backward(net, tape, dz));
        }
        epoch_loss /= static_cast<double>(train.size());
    }
    if (!nn::all_finite(net.params())) throw NumericError("MRE weights became non-finite");
    model.network().params() = net.params();

    std::size_t correct = 0;
    std::vector<postproc::RationalityFeature> feats;
    for (std::size_t i : test) feats.push_back(samples[i].feature);
    const auto ye = postproc::mre_infer(model, feats);
    for (std::size_t k = 0; k < test.size(); ++k) {
        if ((ye[k] > 0.5 ? 1 : 0) == samples[test[k]].label) ++correct;
    }
    MreTrainResult r{std::move(model), static_cast<double>(correct) / static_cast<double>(test.size()), test.size(),
                     epoch_loss};
    return r;
}

void write_mre_csv(const std::vector<MreSample>& samples, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "d0,d1,d2,d3,d4,d5,d6,d7,d8,d9,c,label,image_id,candidate_index\n";
    for (const auto& s : samples) {
        for (double v : s.feature) out << fmt(v) << ',';
        out << s.label << ',' << s.image_id << ',' << s.candidate_index << '\n';
    }
}

std::vector<MreSample> read_mre_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("d0,", 0) != 0) throw InputError("unexpected MRE CSV header in " + path.string());
    std::vector<MreSample> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> f;
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (f.size() != 14) throw InputError("expected 14 fields in " + path.string());
        MreSample s;
        try {
            for (std::size_t i = 0; i < 11; ++i) s.feature[i] = std::stod(f[i]);
            s.label = std::stoi(f[11]);
            s.image_id = f[12];
            s.candidate_index = std::stoul(f[13]);
        } catch (const std::exception&) {
            throw InputError("bad value in " + path.string());
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace vtm::mretrain
