#include "gathermos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "gathermos/csv.hpp"
#include "gathermos/errors.hpp"
#include "gathermos/textio.hpp"

namespace gathermos {

namespace {

void check_pair(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("correlation inputs differ in length");
    if (x.size() < 2)
        throw std::invalid_argument("correlation needs at least two pairs");
    // Mean-centering a constant vector leaves tiny nonzero residues, so
    // detect constancy exactly instead of testing the variance against 0.
    auto constant = [](const std::vector<double>& v) {
        auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        return *lo == *hi;
    };
    if (constant(x) || constant(y))
        throw DegenerateInput("correlation undefined for a constant vector");
}

}  // namespace

double pearson_lcc(const std::vector<double>& x, const std::vector<double>& y) {
    check_pair(x, y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> fractional_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman_srcc(const std::vector<double>& x, const std::vector<double>& y) {
    check_pair(x, y);
    return pearson_lcc(fractional_ranks(x), fractional_ranks(y));
}

std::vector<PredictionRow> load_predictions_csv(const std::filesystem::path& path) {
    const csv::Table table = csv::read_file(path);
    const std::vector<std::string> expected = {"utt_id", "mos", "attributes_json",
                                               "status"};
    if (table.header != expected)
        throw csv::CsvParseError("predictions file " + path.string() +
                                 " has an unexpected header");
    std::vector<PredictionRow> rows;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& f = table.rows[r];
        if (f.size() != 4)
            throw csv::CsvParseError("predictions row " + std::to_string(r + 1) +
                                     ": expected 4 fields");
        PredictionRow row;
        row.utt_id = f[0];
        row.attributes_json = f[2];
        row.status = f[3];
        if (row.scored()) {
            try {
                row.mos = parse_real(f[1]);
            } catch (const std::invalid_argument&) {
                throw csv::CsvParseError("predictions row " + std::to_string(r + 1) +
                                         ": mos '" + f[1] + "' is not a number");
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

EvalReport build_report(const std::vector<PredictionRow>& predictions,
                        const std::vector<ManifestRow>& manifest) {
    std::unordered_map<std::string, const ManifestRow*> by_id;
    for (const auto& row : manifest) by_id[row.utt_id] = &row;

    EvalReport report;
    std::vector<double> truth, pred;
    for (const auto& p : predictions) {
        if (!p.scored()) {
            ++report.n_failed;
            continue;
        }
        auto it = by_id.find(p.utt_id);
        if (it == by_id.end() || !it->second->mos_truth)
            throw MissingTruth("no mos_truth for scored utterance '" + p.utt_id + "'");
        const ManifestRow& m = *it->second;
        report.pairs.push_back(
            {p.utt_id, *m.mos_truth, p.mos, m.system, m.condition});
        truth.push_back(*m.mos_truth);
        pred.push_back(p.mos);
    }
    if (report.pairs.empty())
        throw NoScoredUtterances("every prediction failed; nothing to correlate");
    report.n = report.pairs.size();
    report.lcc = pearson_lcc(truth, pred);
    report.srcc = spearman_srcc(truth, pred);
    return report;
}

void emit_scatter(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    out << "truth,prediction,utt_id,system,condition\n";
    for (const auto& p : report.pairs) {
        out << format_roundtrip(p.truth) << ',' << format_roundtrip(p.prediction)
            << ',' << csv::escape(p.utt_id) << ',' << csv::escape(p.system) << ','
            << csv::escape(p.condition) << '\n';
    }
    if (!out.flush()) throw IoFailure("short write to " + path.string());
}

std::string report_to_json(const EvalReport& report) {
    std::string out = "{\"n\":" + std::to_string(report.n);
    out += ",\"n_failed\":" + std::to_string(report.n_failed);
    out += ",\"lcc\":" + format_roundtrip(report.lcc);
    out += ",\"srcc\":" + format_roundtrip(report.srcc);
    out += "}";
    return out;
}

}  // namespace gathermos
