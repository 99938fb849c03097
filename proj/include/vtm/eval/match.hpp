#pragma once

#include "vtm/markers.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace vtm::eval {

struct MatchPair {
    std::size_t pred = 0;
    std::size_t truth = 0;
    double distance = 0.0;
};

/// One-to-one prediction/truth assignment.
struct MatchResult {
    std::vector<MatchPair> pairs;
    std::size_t pt = 0;  ///< matched predictions
    std::size_t pf = 0;  ///< unmatched predictions
    std::size_t t = 0;   ///< truth count
    /// For each prediction, the matched truth index or -1.
    std::vector<long> pred_to_truth;
};

/// Greedy global matching: all pairs within tau, ascending distance, ties by
/// (prediction index, truth index); each side used at most once.
MatchResult match_predictions(const MarkerSet& pred, const MarkerSet& truth, double tau);

/// Summable evaluation counts; d is the sum of squared match distances.
struct Counts {
    std::size_t pt = 0;
    std::size_t pf = 0;
    std::size_t t = 0;
    double d = 0.0;

    Counts& operator+=(const Counts& o) {
        pt += o.pt;
        pf += o.pf;
        t += o.t;
        d += o.d;
        return *this;
    }
};

Counts counts_of(const MatchResult& match);

/// Counts restricted to a truth subset. `in_subset[j]` marks truth j. A
/// prediction matched to an out-of-subset truth is neither PT nor PF; an
/// unmatched prediction is PF; T counts in-subset truths only.
Counts subset_counts(const MatchResult& match, const std::vector<bool>& in_subset);

struct MetricsReport {
    std::optional<double> precision;  ///< null when PT + PF = 0
    std::optional<double> recall;     ///< null when T = 0
    std::optional<double> loss;       ///< mean squared distance, null when PT = 0
    Counts counts;

    // Fingerprint of the run that produced it.
    std::string method;
    std::string difficulty;
    int grid_size = 0;
    int candidates = 0;
    double tau = 0.0;
    unsigned long long seed = 0;
    std::string note;

    double f1() const;
};

MetricsReport metrics(const Counts& counts);
MetricsReport metrics(const MatchResult& match);

}  // namespace vtm::eval
