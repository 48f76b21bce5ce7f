#include "gathermos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "gathermos/csv.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace gathermos;

TEST_CASE("hand-checked correlation values") {
    CHECK(pearson_lcc({1, 2, 3}, {1, 2, 3}) == 1.0);
    CHECK(pearson_lcc({1, 2, 3}, {3, 2, 1}) == -1.0);
    CHECK(pearson_lcc({1, 2, 3, 4}, {1, 3, 2, 4}) == 0.8);
    CHECK(spearman_srcc({1, 2, 3, 4}, {1, 3, 2, 4}) == 0.8);
    // Strictly monotone map of x has rank correlation exactly 1.
    CHECK(spearman_srcc({1, 2, 3, 4}, {10, 100, 1000, 10000}) == 1.0);
}

TEST_CASE("fractional ranks average over ties") {
    CHECK(fractional_ranks({1, 2, 2, 3}) == std::vector<double>{1, 2.5, 2.5, 4});
    CHECK(fractional_ranks({5, 5, 5}) == std::vector<double>{2, 2, 2});
    CHECK(fractional_ranks({3, 1, 2}) == std::vector<double>{3, 1, 2});
}

namespace {

std::vector<double> random_vector(std::mt19937& rng, std::size_t n, bool tied) {
    std::uniform_real_distribution<double> unit(0.0, 5.0);
    std::vector<double> v(n);
    for (auto& s : v) {
        s = unit(rng);
        if (tied) s = std::round(s * 4.0) / 4.0;  // quarter steps force ties
    }
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (*lo == *hi) v[0] += 1.0;  // keep the vector non-constant
    return v;
}

}  // namespace

TEST_CASE("1000 random vectors agree with brute-force oracles") {
    std::mt19937 rng(611953);
    std::uniform_int_distribution<std::size_t> length(2, 50);
    double worst_p = 0.0, worst_s = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = length(rng);
        const bool tied = trial % 2 == 0;
        const auto x = random_vector(rng, n, tied);
        const auto y = random_vector(rng, n, tied);
        worst_p = std::max(worst_p, std::abs(pearson_lcc(x, y) - oracle::pearson(x, y)));
        worst_s = std::max(worst_s, std::abs(spearman_srcc(x, y) - oracle::spearman(x, y)));
    }
    CHECK(worst_p < 1e-10);
    CHECK(worst_s < 1e-10);
}

TEST_CASE("affine and monotone invariance") {
    std::mt19937 rng(40);
    const auto x = random_vector(rng, 30, false);
    const auto y = random_vector(rng, 30, false);
    const double base_p = pearson_lcc(x, y);
    const double base_s = spearman_srcc(x, y);

    for (double a : {2.5, -1.25}) {
        std::vector<double> ax;
        for (double v : x) ax.push_back(a * v + 3.0);
        const double expected = a > 0 ? base_p : -base_p;
        CHECK(std::abs(pearson_lcc(ax, y) - expected) < 1e-12);
    }
    for (auto g : {+[](double v) { return std::exp(v); },
                   +[](double v) { return v * v * v; }}) {
        std::vector<double> gx;
        for (double v : x) gx.push_back(g(v));
        CHECK(std::abs(spearman_srcc(gx, y) - base_s) < 1e-12);
    }
}

TEST_CASE("symmetry and joint-permutation consistency") {
    std::mt19937 rng(41);
    auto x = random_vector(rng, 25, true);
    auto y = random_vector(rng, 25, true);
    CHECK(pearson_lcc(x, y) == pearson_lcc(y, x));
    CHECK(spearman_srcc(x, y) == spearman_srcc(y, x));

    const double p = pearson_lcc(x, y);
    const double s = spearman_srcc(x, y);
    std::vector<std::size_t> perm(x.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> px, py;
    for (std::size_t i : perm) {
        px.push_back(x[i]);
        py.push_back(y[i]);
    }
    CHECK(std::abs(pearson_lcc(px, py) - p) < 1e-12);
    CHECK(std::abs(spearman_srcc(px, py) - s) < 1e-12);
}

TEST_CASE("degenerate and malformed correlation inputs") {
    CHECK_THROWS_AS(pearson_lcc({1, 1, 1}, {1, 2, 3}), DegenerateInput);
    CHECK_THROWS_AS(pearson_lcc({1, 2, 3}, {4, 4, 4}), DegenerateInput);
    CHECK_THROWS_AS(spearman_srcc({2, 2}, {1, 2}), DegenerateInput);
    CHECK_THROWS_AS(pearson_lcc({1, 2}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(pearson_lcc({1}, {2}), std::invalid_argument);
}

namespace {

std::vector<ManifestRow> tiny_manifest() {
    std::vector<ManifestRow> rows;
    for (int i = 0; i < 4; ++i) {
        ManifestRow r;
        r.utt_id = "u" + std::to_string(i);
        r.wav_path = r.utt_id + ".wav";
        r.pseudo = {3.0, 0.5};
        r.mos_truth = 1.5 + i;
        r.system = i % 2 ? "sysB" : "sysA";
        r.condition = "clean";
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

TEST_CASE("build_report joins, counts failures, and correlates") {
    const auto manifest = tiny_manifest();

    SUBCASE("identity predictions give perfect scores") {
        std::vector<PredictionRow> preds;
        for (const auto& m : manifest)
            preds.push_back({m.utt_id, *m.mos_truth, "{}", "ok"});
        const EvalReport r = build_report(preds, manifest);
        CHECK(r.n == 4);
        CHECK(r.n_failed == 0);
        CHECK(r.lcc == 1.0);
        CHECK(r.srcc == 1.0);
        REQUIRE(r.pairs.size() == 4);
        CHECK(r.pairs[1].system == "sysB");
        CHECK(r.pairs[2].truth == 3.5);
    }
    SUBCASE("failed rows are excluded but counted") {
        std::vector<PredictionRow> preds = {
            {"u0", 2.0, "{}", "ok"},
            {"u1", 0.0, "{}", "failed"},
            {"u2", 3.0, "{}", "ok"},
            {"u3", 4.4, "{}", "ok"},
        };
        const EvalReport r = build_report(preds, manifest);
        CHECK(r.n == 3);
        CHECK(r.n_failed == 1);
    }
    SUBCASE("scored utterance without truth") {
        auto manifest_missing = manifest;
        manifest_missing[2].mos_truth.reset();
        std::vector<PredictionRow> preds = {{"u2", 3.0, "{}", "ok"}};
        CHECK_THROWS_AS(build_report(preds, manifest_missing), MissingTruth);
    }
    SUBCASE("prediction for an unknown id") {
        std::vector<PredictionRow> preds = {{"zz", 3.0, "{}", "ok"}};
        CHECK_THROWS_AS(build_report(preds, manifest), MissingTruth);
    }
    SUBCASE("everything failed") {
        std::vector<PredictionRow> preds = {{"u0", 0.0, "{}", "failed"},
                                            {"u1", 0.0, "{}", "failed"}};
        CHECK_THROWS_AS(build_report(preds, manifest), NoScoredUtterances);
    }
}

TEST_CASE("predictions CSV loader") {
    testutil::TempDir dir;
    const auto path = dir.file("preds.csv");

    SUBCASE("round trip of ok and failed rows") {
        testutil::write_file(path,
                             "utt_id,mos,attributes_json,status\n"
                             "a,3.25,\"{\"\"noise\"\":\"\"low\"\"}\",ok\n"
                             "b,,{},failed\n");
        const auto rows = load_predictions_csv(path);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].mos == 3.25);
        CHECK(rows[0].attributes_json == "{\"noise\":\"low\"}");
        CHECK(rows[0].scored());
        CHECK_FALSE(rows[1].scored());
    }
    SUBCASE("unexpected header") {
        testutil::write_file(path, "utt_id,score\na,3\n");
        CHECK_THROWS_AS(load_predictions_csv(path), csv::CsvParseError);
    }
    SUBCASE("non-numeric mos on a scored row") {
        testutil::write_file(path, "utt_id,mos,attributes_json,status\na,x,{},ok\n");
        CHECK_THROWS_AS(load_predictions_csv(path), csv::CsvParseError);
    }
}

TEST_CASE("scatter export and report JSON") {
    const auto manifest = tiny_manifest();
    std::vector<PredictionRow> preds;
    for (const auto& m : manifest)
        preds.push_back({m.utt_id, *m.mos_truth * 0.9 + 0.3, "{}", "ok"});
    const EvalReport report = build_report(preds, manifest);

    testutil::TempDir dir;
    const auto path = dir.file("scatter.csv");
    emit_scatter(report, path);

    const std::string text = testutil::read_file(path);
    CHECK(text.rfind("truth,prediction,utt_id,system,condition\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);  // header + 4 pairs

    // Reload: values survive exactly at emitted precision.
    const csv::Table table = csv::read_file(path);
    REQUIRE(table.rows.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::stod(table.rows[i][0]) == report.pairs[i].truth);
        CHECK(std::stod(table.rows[i][1]) == report.pairs[i].prediction);
        CHECK(table.rows[i][2] == report.pairs[i].utt_id);
    }

    // Per-system subsets partition the pair set.
    std::size_t sys_a = 0, sys_b = 0;
    for (const auto& row : table.rows) (row[3] == "sysA" ? sys_a : sys_b) += 1;
    CHECK(sys_a + sys_b == 4);
    CHECK(sys_a == 2);

    const std::string json = report_to_json(report);
    CHECK(json.rfind("{\"n\":4,\"n_failed\":0,\"lcc\":", 0) == 0);
    CHECK(json.find("\"srcc\":") != std::string::npos);
    CHECK(json.back() == '}');
}

TEST_CASE("report invariants on random data") {
    std::mt19937 rng(77);
    const auto manifest = [&] {
        std::vector<ManifestRow> rows;
        std::uniform_real_distribution<double> mos(1.0, 5.0);
        for (int i = 0; i < 30; ++i) {
            ManifestRow r;
            r.utt_id = "r" + std::to_string(i);
            r.pseudo = {3.0, 0.5};
            r.mos_truth = mos(rng);
            rows.push_back(r);
        }
        return rows;
    }();
    std::vector<PredictionRow> preds;
    std::uniform_real_distribution<double> mos(1.0, 5.0);
    for (const auto& m : manifest) preds.push_back({m.utt_id, mos(rng), "{}", "ok"});

    const EvalReport r = build_report(preds, manifest);
    CHECK(std::abs(r.lcc) <= 1.0 + 1e-12);
    CHECK(std::abs(r.srcc) <= 1.0 + 1e-12);
    CHECK(r.n == r.pairs.size());
}
