#include <doctest.h>

#include "vtm/errors.hpp"
#include "vtm/eval/evalkit.hpp"
#include "vtm/eval/match.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

using namespace vtm;
using namespace vtm::eval;

namespace {

// Maximum-cardinality matching under the tau constraint, by exhaustive search.
std::size_t optimal_pt(const MarkerSet& pred, const MarkerSet& truth, double tau) {
    std::vector<bool> used(truth.size(), false);
    std::function<std::size_t(std::size_t)> go = [&](std::size_t i) -> std::size_t {
        if (i == pred.size()) return 0;
        std::size_t best = go(i + 1);
        for (std::size_t j = 0; j < truth.size(); ++j) {
            if (used[j] || distance(pred[i], truth[j]) > tau) continue;
            used[j] = true;
            best = std::max(best, 1 + go(i + 1));
            used[j] = false;
        }
        return best;
    };
    return go(0);
}

MatchResult constructed(std::size_t pt, std::size_t pf, std::size_t t, const std::vector<double>& d) {
    MatchResult m;
    m.pt = pt;
    m.pf = pf;
    m.t = t;
    for (std::size_t i = 0; i < pt; ++i) m.pairs.push_back({i, i, d.empty() ? 0.0 : d[i % d.size()]});
    return m;
}

}  // namespace

TEST_CASE("matching examples") {
    SUBCASE("identical sets") {
        const MarkerSet s{{1, 1}, {5, 5}, {9, 2}};
        const auto m = match_predictions(s, s, 2.0);
        CHECK(m.pt == 3);
        CHECK(m.pf == 0);
        for (const auto& p : m.pairs) CHECK(p.distance == 0.0);
    }
    SUBCASE("equidistant prediction takes exactly one truth") {
        const auto m = match_predictions({{5, 5}}, {{4, 5}, {6, 5}}, 2.0);
        CHECK(m.pt == 1);
        CHECK(m.pairs.size() == 1);
        CHECK(m.pairs[0].truth == 0);
        CHECK(m.t == 2);
    }
    SUBCASE("5 predictions, 3 within tau") {
        const MarkerSet truth{{10, 10}, {20, 10}, {30, 10}};
        const MarkerSet pred{{10.5, 10}, {50, 50}, {20, 11}, {29, 10.5}, {0, 40}};
        const auto m = match_predictions(pred, truth, 2.0);
        CHECK(m.pt == 3);
        CHECK(m.pf == 2);
        CHECK(optimal_pt(pred, truth, 2.0) == 3);
    }
    SUBCASE("invariants") {
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(0, 30);
        MarkerSet pred(40), truth(30);
        for (auto& p : pred) p = {u(rng), u(rng)};
        for (auto& t : truth) t = {u(rng), u(rng)};
        const auto m = match_predictions(pred, truth, 2.0);
        std::vector<int> seen_p(pred.size()), seen_t(truth.size());
        for (const auto& p : m.pairs) {
            CHECK(++seen_p[p.pred] == 1);
            CHECK(++seen_t[p.truth] == 1);
            CHECK(p.distance <= 2.0);
        }
        CHECK(m.pt + m.pf == pred.size());
        CHECK(m.pt <= m.t);
    }
}

namespace {

MarkerSet separated(std::mt19937_64& rng, std::size_t n, double min_gap, double extent) {
    std::uniform_real_distribution<double> u(0, extent);
    MarkerSet out;
    for (int tries = 0; out.size() < n && tries < 1000; ++tries) {
        const Marker c{u(rng), u(rng)};
        bool ok = true;
        for (const auto& t : out) ok = ok && distance(c, t) > min_gap;
        if (ok) out.push_back(c);
    }
    return out;
}

}  // namespace

TEST_CASE("greedy PT agrees with the optimal matcher on 1000 instances") {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> u(0, 10);
    const double tau = 1.0;
    for (int i = 0; i < 1000; ++i) {
        MarkerSet pred(rng() % 9);
        for (auto& p : pred) p = {u(rng), u(rng)};
        // truths further apart than 2 tau, as on a marker lattice
        const MarkerSet truth = separated(rng, rng() % 9, 2.0 * tau + 1e-9, 10.0);
        REQUIRE(match_predictions(pred, truth, tau).pt == optimal_pt(pred, truth, tau));
    }
}

TEST_CASE("greedy PT on unconstrained clusters") {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> u(0, 10);
    int differ = 0;
    for (int i = 0; i < 1000; ++i) {
        MarkerSet pred(rng() % 9), truth(rng() % 9);
        for (auto& p : pred) p = {u(rng), u(rng)};
        for (auto& t : truth) t = {u(rng), u(rng)};
        const auto g = match_predictions(pred, truth, 1.0).pt;
        const auto o = optimal_pt(pred, truth, 1.0);
        CHECK(g <= o);
        if (g != o) ++differ;
    }
    MESSAGE("greedy below optimal on " << differ << " of 1000 unconstrained instances");
    CHECK(differ < 50);
}

TEST_CASE("PT is invariant under relabeling predictions") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 20);
    MarkerSet pred(30), truth(25);
    for (auto& p : pred) p = {u(rng), u(rng)};
    for (auto& t : truth) t = {u(rng), u(rng)};
    const auto base = match_predictions(pred, truth, 1.5);
    for (int k = 0; k < 20; ++k) {
        std::shuffle(pred.begin(), pred.end(), rng);
        const auto m = match_predictions(pred, truth, 1.5);
        CHECK(m.pt == base.pt);
        CHECK(m.pf == base.pf);
    }
}

TEST_CASE("metrics arithmetic") {
    SUBCASE("precision 0.5") { CHECK(*metrics(constructed(5, 5, 10, {1.0})).precision == 0.5); }
    SUBCASE("recall 0.5") { CHECK(*metrics(constructed(5, 0, 10, {1.0})).recall == 0.5); }
    SUBCASE("loss 4/3") {
        MatchResult m;
        m.pairs = {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, std::sqrt(2.0)}};
        m.pt = 3;
        m.t = 3;
        const auto r = metrics(m);
        CHECK(r.counts.d == doctest::Approx(4.0).epsilon(1e-15));
        CHECK(*r.loss == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("undefined values are null") {
        const auto r = metrics(constructed(0, 0, 0, {}));
        CHECK(!r.precision);
        CHECK(!r.recall);
        CHECK(!r.loss);
    }
}

TEST_CASE("25 constructed match results") {
    // (PT, PF, T, distances) -> exact precision, recall, loss by hand.
    struct Case {
        std::size_t pt, pf, t;
        std::vector<double> d;
        double p, r, l;
    };
    const std::vector<Case> cases{
        {1, 0, 1, {0.0}, 1.0, 1.0, 0.0},          {1, 1, 1, {1.0}, 0.5, 1.0, 1.0},
        {1, 1, 2, {2.0}, 0.5, 0.5, 4.0},          {2, 2, 4, {1.0}, 0.5, 0.5, 1.0},
        {3, 1, 4, {1.0}, 0.75, 0.75, 1.0},        {1, 3, 2, {0.5}, 0.25, 0.5, 0.25},
        {4, 0, 8, {0.5}, 1.0, 0.5, 0.25},         {2, 0, 2, {1.0, 3.0}, 1.0, 1.0, 5.0},
        {3, 0, 6, {1.0, 1.0, 4.0}, 1.0, 0.5, 6.0}, {5, 5, 10, {1.0}, 0.5, 0.5, 1.0},
        {5, 0, 10, {2.0}, 1.0, 0.5, 4.0},         {8, 2, 10, {0.5}, 0.8, 0.8, 0.25},
        {9, 1, 10, {0.0}, 0.9, 0.9, 0.0},         {1, 4, 5, {3.0}, 0.2, 0.2, 9.0},
        {2, 6, 4, {1.5}, 0.25, 0.5, 2.25},        {6, 2, 12, {1.0, 2.0}, 0.75, 0.5, 2.5},
        {4, 4, 16, {0.25}, 0.5, 0.25, 0.0625},    {10, 0, 20, {1.0}, 1.0, 0.5, 1.0},
        {3, 3, 3, {1.0, 2.0, 2.0}, 0.5, 1.0, 3.0}, {7, 1, 8, {0.0}, 0.875, 0.875, 0.0},
        {1, 7, 8, {1.0}, 0.125, 0.125, 1.0},      {2, 2, 8, {0.5, 1.5}, 0.5, 0.25, 1.25},
        {4, 12, 4, {2.0}, 0.25, 1.0, 4.0},        {16, 0, 32, {0.5}, 1.0, 0.5, 0.25},
        {5, 15, 10, {1.0, 0.0}, 0.25, 0.5, 0.6},
    };
    REQUIRE(cases.size() == 25);
    for (const auto& c : cases) {
        const auto r = metrics(constructed(c.pt, c.pf, c.t, c.d));
        CHECK(*r.precision == c.p);
        CHECK(*r.recall == c.r);
        CHECK(*r.loss == doctest::Approx(c.l).epsilon(1e-15));
    }
}

TEST_CASE("metrics are scale-consistent") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 20);
    MarkerSet pred(25), truth(25);
    for (auto& p : pred) p = {u(rng), u(rng)};
    for (auto& t : truth) t = {u(rng), u(rng)};
    const auto a = metrics(match_predictions(pred, truth, 2.0));
    for (auto& p : pred) p = {p.x * 3.0, p.y * 3.0};
    for (auto& t : truth) t = {t.x * 3.0, t.y * 3.0};
    const auto b = metrics(match_predictions(pred, truth, 6.0));
    CHECK(*a.precision == *b.precision);
    CHECK(*a.recall == *b.recall);
    CHECK(*b.loss == doctest::Approx(9.0 * *a.loss).epsilon(1e-12));
}

TEST_CASE("aggregation is order-invariant") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0, 20);
    std::vector<Counts> per;
    for (int s = 0; s < 30; ++s) {
        MarkerSet pred(rng() % 12), truth(rng() % 12);
        for (auto& p : pred) p = {u(rng), u(rng)};
        for (auto& t : truth) t = {u(rng), u(rng)};
        per.push_back(counts_of(match_predictions(pred, truth, 3.0)));
    }
    Counts a;
    for (const auto& c : per) a += c;
    std::vector<std::size_t> idx(per.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::reverse(idx.begin(), idx.end());
    Counts b;
    for (auto i : idx) b += per[i];
    CHECK(a.pt == b.pt);
    CHECK(a.pf == b.pf);
    CHECK(a.t == b.t);
    CHECK(metrics(a).precision == metrics(b).precision);
}

TEST_CASE("subset counting leaves out-of-subset matches neutral") {
    const MarkerSet truth{{0, 0}, {10, 0}, {20, 0}};
    const MarkerSet pred{{0.1, 0}, {10.1, 0}, {40, 0}};
    const auto m = match_predictions(pred, truth, 1.0);
    const auto c = subset_counts(m, {true, false, false});
    CHECK(c.pt == 1);
    CHECK(c.pf == 1);
    CHECK(c.t == 1);
}

TEST_CASE("score by difficulty") {
    synth::LoadedScene s;
    s.id = "a";
    s.truth = {{0, 0}, {10, 0}, {20, 0}};
    const std::vector<synth::LoadedScene> scenes{s};
    const std::vector<MarkerSet> preds{{{0.1, 0}, {20.2, 0}}};
    const DifficultyMap diff{{"a", "ehh"}};
    const auto hard = score(preds, scenes, diff, Difficulty::hard, 1.0);
    CHECK(hard.counts.pt == 1);
    CHECK(hard.counts.pf == 0);
    CHECK(hard.counts.t == 2);
    CHECK(score(preds, scenes, diff, Difficulty::all, 1.0).counts.t == 3);
    CHECK_THROWS_AS(score(preds, scenes, {}, Difficulty::easy, 1.0), InputError);
    CHECK_THROWS_AS(score(preds, scenes, {{"a", "e"}}, Difficulty::easy, 1.0), InputError);
    const auto empty = score(preds, scenes, {{"a", "eee"}}, Difficulty::hard, 1.0);
    CHECK(empty.counts.t == 0);
    CHECK(!empty.recall);
    CHECK(empty.note.find("empty") != std::string::npos);
}

TEST_CASE("report files") {
    MetricsReport r = metrics(constructed(3, 1, 4, {1.0}));
    r.method = "blob";
    r.difficulty = "hard";
    r.note = "a, b";
    MetricsReport n = metrics(constructed(0, 0, 0, {}));
    n.method = "marknet";
    const auto dir = std::filesystem::temp_directory_path();
    write_reports_csv({r, n}, dir / "vtm_reports_test.csv");
    std::ifstream in(dir / "vtm_reports_test.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string csv = ss.str();
    CHECK(csv.rfind("method,difficulty,grid_size,candidates,tau,seed,precision,recall,loss,pt,pf,t,d,note\n", 0) == 0);
    CHECK(csv.find("\"a, b\"") != std::string::npos);
    CHECK(csv.find("marknet,,0,0,0,0,,,,0,0,0,0,") != std::string::npos);
    const std::string json = reports_json({r, n});
    CHECK(json.find("\"precision\": null") != std::string::npos);
    CHECK(json.find("vtm-reports 1") != std::string::npos);
    std::filesystem::remove(dir / "vtm_reports_test.csv");
}

TEST_CASE("names parse") {
    CHECK(parse_method("marknet-mre") == Method::marknet_mre);
    CHECK(parse_difficulty("hard") == Difficulty::hard);
    CHECK(parse_axis("S") == SweepAxis::grid_size);
    CHECK_THROWS_AS(parse_method("yolo"), ConfigError);
}

TEST_CASE("sweep reports invalid values per row and continues") {
    SweepContext ctx;
    ctx.method = Method::marknet;
    marknet::MarknetConfig base;
    base.epochs = 0;
    const auto rows = run_sweep(SweepAxis::grid_size, {25, 7}, base, ctx);
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
        CHECK(!r.report);
        CHECK(!r.error.empty());
    }
    CHECK_THROWS_AS(run_sweep(SweepAxis::candidates, {}, base, ctx), ConfigError);
}
