#include "vtm/eval/match.hpp"

#include "vtm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace vtm::eval {

MatchResult match_predictions(const MarkerSet& pred, const MarkerSet& truth, double tau) {
    if (!(tau > 0.0)) throw ConfigError("matching radius tau must be positive");
    MatchResult out;
    out.t = truth.size();
    out.pred_to_truth.assign(pred.size(), -1);

    // Bucket truths on a tau-sized grid so candidate pairs come from 3x3 neighborhoods.
    auto key = [tau](double x, double y) {
        const auto gx = static_cast<long long>(std::floor(x / tau));
        const auto gy = static_cast<long long>(std::floor(y / tau));
        return (gx << 32) ^ (gy & 0xffffffffLL);
    };
    std::unordered_map<long long, std::vector<std::size_t>> buckets;
    for (std::size_t j = 0; j < truth.size(); ++j) buckets[key(truth[j].x, truth[j].y)].push_back(j);

    std::vector<MatchPair> cand;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double gx = std::floor(pred[i].x / tau);
        const double gy = std::floor(pred[i].y / tau);
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                auto it = buckets.find(key((gx + dx + 0.5) * tau, (gy + dy + 0.5) * tau));
                if (it == buckets.end()) continue;
                for (std::size_t j : it->second) {
                    const double d = distance(pred[i], truth[j]);
                    if (d <= tau) cand.push_back({i, j, d});
                }
            }
        }
    }
    std::sort(cand.begin(), cand.end(), [](const MatchPair& a, const MatchPair& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (a.pred != b.pred) return a.pred < b.pred;
        return a.truth < b.truth;
    });
    std::vector<bool> truth_used(truth.size(), false);
    for (const MatchPair& p : cand) {
        if (out.pred_to_truth[p.pred] >= 0 || truth_used[p.truth]) continue;
        out.pred_to_truth[p.pred] = static_cast<long>(p.truth);
        truth_used[p.truth] = true;
        out.pairs.push_back(p);
    }
    out.pt = out.pairs.size();
    out.pf = pred.size() - out.pt;
    return out;
}

Counts counts_of(const MatchResult& match) {
    Counts c;
    c.pt = match.pt;
    c.pf = match.pf;
    c.t = match.t;
    for (const auto& p : match.pairs) c.d += p.distance * p.distance;
    return c;
}

Counts subset_counts(const MatchResult& match, const std::vector<bool>& in_subset) {
    if (in_subset.size() != match.t) throw ConfigError("subset mask does not match truth count");
    Counts c;
    c.t = static_cast<std::size_t>(std::count(in_subset.begin(), in_subset.end(), true));
    for (long j : match.pred_to_truth) {
        if (j < 0) ++c.pf;
    }
    for (const auto& p : match.pairs) {
        if (!in_subset[p.truth]) continue;
        ++c.pt;
        c.d += p.distance * p.distance;
    }
    return c;
}

double MetricsReport::f1() const {
    const double p = precision.value_or(0.0);
    const double r = recall.value_or(0.0);
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

MetricsReport metrics(const Counts& counts) {
    MetricsReport r;
    r.counts = counts;
    if (counts.pt + counts.pf > 0) r.precision = static_cast<double>(counts.pt) / static_cast<double>(counts.pt + counts.pf);
    if (counts.t > 0) r.recall = static_cast<double>(counts.pt) / static_cast<double>(counts.t);
    if (counts.pt > 0) r.loss = counts.d / static_cast<double>(counts.pt);
    return r;
}

MetricsReport metrics(const MatchResult& match) { return metrics(counts_of(match)); }

}  // namespace vtm::eval
