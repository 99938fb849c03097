#include "vtm/marknet/train.hpp"

#include "vtm/errors.hpp"
#include "vtm/marknet/grid.hpp"
#include "vtm/marknet/model.hpp"
#include "vtm/nn/sgd.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace vtm::marknet {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kFinalLrFraction = 0.02;

double grad_norm(const nn::ParamSet& g) {
    double sum = 0.0;
    for (const auto& p : g) {
        for (double v : p.weight.values()) sum += v * v;
        for (double v : p.bias) sum += v * v;
    }
    return std::sqrt(sum);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

TrainResult train(const std::vector<LabeledImage>& train_set, const MarknetConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    if (train_set.empty()) throw InputError("training split is empty");
    nn::Network net = hooks.initial ? *hooks.initial : build_backbone(cfg);
    store_config(net, cfg);
    nn::Sgd opt(cfg.learning_rate, cfg.momentum);

    const std::size_t n = train_set.size();
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t steps_per_epoch = (n + batch - 1) / batch;
    const double total_steps = static_cast<double>(steps_per_epoch) * std::max(cfg.epochs, 1);

    TrainResult result;
    result.best = net;
    double best_f1 = -1.0;
    std::vector<std::size_t> order(n);
    std::size_t step = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);

        EpochRecord rec;
        rec.epoch = epoch;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const std::size_t lo = b * batch;
            const std::size_t hi = std::min(n, lo + batch);
            std::vector<const Image*> images;
            for (std::size_t i = lo; i < hi; ++i) images.push_back(&train_set[order[i]].image);

            nn::Tape tape;
            const nn::Tensor4 head = nn::forward(net, to_batch(images), &tape);
            nn::Tensor4 dhead(head.shape());
            const double inv = 1.0 / static_cast<double>(images.size());
            LossValue batch_loss;
            for (std::size_t i = 0; i < images.size(); ++i) {
                const GridPrediction raw = GridPrediction::from_head(head, i, cfg.candidates);
                const TargetGrid targets = encode_targets(train_set[order[lo + i]].truth, raw, cfg);
                GridPrediction g(cfg.grid_size, cfg.candidates);
                const LossValue lv = loss(raw, targets, cfg, &g.raw());
                for (double& v : g.raw()) v *= inv;
                g.to_head(dhead, i);
                batch_loss.total += lv.total;
                batch_loss.conf += lv.conf;
                batch_loss.pos += lv.pos;
            }
            if (!std::isfinite(batch_loss.total)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch " << b << " (L=" << batch_loss.total
                    << ", L_c=" << batch_loss.conf << ", L_p=" << batch_loss.pos << ")";
                throw NumericError(msg.str());
            }
            nn::ParamSet grads = nn::backward(net, tape, dhead);
            const double norm = grad_norm(grads);
            if (!std::isfinite(norm)) {
                throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b));
            }
            if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) nn::scale(grads, cfg.grad_clip / norm);

            const double progress = static_cast<double>(step) / total_steps;
            opt.set_learning_rate(cfg.learning_rate *
                                  (kFinalLrFraction + (1.0 - kFinalLrFraction) * 0.5 * (1.0 + std::cos(kPi * progress))));
            opt.step(net, grads);
            ++step;

            rec.loss += batch_loss.total;
            rec.conf_loss += batch_loss.conf;
            rec.pos_loss += batch_loss.pos;
            seen += images.size();
        }
        rec.loss /= static_cast<double>(seen);
        rec.conf_loss /= static_cast<double>(seen);
        rec.pos_loss /= static_cast<double>(seen);

        if (hooks.validate) {
            const ValidationScore score = hooks.validate(net);
            rec.val_precision = score.precision;
            rec.val_recall = score.recall;
            const double denom = score.precision + score.recall;
            const double f1 = denom > 0.0 ? 2.0 * score.precision * score.recall / denom : 0.0;
            if (f1 > best_f1) {
                best_f1 = f1;
                result.best = net;
                result.best_epoch = epoch;
            }
        } else {
            result.best = net;
            result.best_epoch = epoch;
        }
        result.history.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec);
    }
    if (cfg.epochs == 0) result.best = net;
    return result;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "epoch,L,L_c,L_p,val_precision,val_recall\n";
    for (const auto& r : history) {
        out << r.epoch << ',' << fmt(r.loss) << ',' << fmt(r.conf_loss) << ',' << fmt(r.pos_loss) << ','
            << fmt(r.val_precision) << ',' << fmt(r.val_recall) << '\n';
    }
}

}  // namespace vtm::marknet
