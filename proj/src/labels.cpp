#include "gathermos/labels.hpp"

#include <cstdio>
#include <memory>
#include <unordered_map>
#include <unordered_set>

#include "gathermos/csv.hpp"
#include "gathermos/textio.hpp"

namespace gathermos {

namespace {
constexpr double kRangeTolerance = 1e-9;
}

double normalize_to_unit(double score, double lo, double hi) {
    if (score < lo - kRangeTolerance || score > hi + kRangeTolerance)
        throw OutOfRange("score " + format_roundtrip(score) + " outside [" +
                         format_roundtrip(lo) + ", " + format_roundtrip(hi) + "]");
    if (score < lo) score = lo;
    if (score > hi) score = hi;
    return (score - lo) / (hi - lo);
}

double naive_ensemble(const PseudoLabels& p) {
    // normalize_to_unit(vqscore, 0, 1) is the identity for valid input, so
    // this matches 1 + 4*((dnsmos-1)/4 + vqscore)/2 bit for bit.
    const double u =
        (normalize_to_unit(p.dnsmos, 1.0, 5.0) + normalize_to_unit(p.vqscore, 0.0, 1.0)) / 2.0;
    return 1.0 + 4.0 * u;
}

namespace {

double parse_checked(const std::string& text, const char* what, std::size_t row,
                     double lo, double hi) {
    double v;
    try {
        v = parse_real(text);
    } catch (const std::invalid_argument&) {
        throw RangeViolation("row " + std::to_string(row) + ": " + what + " '" +
                             text + "' is not a number");
    }
    if (v < lo - kRangeTolerance || v > hi + kRangeTolerance)
        throw RangeViolation("row " + std::to_string(row) + ": " + what + " " +
                             text + " outside [" + format_roundtrip(lo) + ", " +
                             format_roundtrip(hi) + "]");
    return v;
}

}  // namespace

std::vector<ManifestRow> load_manifest(const std::filesystem::path& path) {
    const csv::Table table = csv::read_file(path);

    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < table.header.size(); ++i) col[table.header[i]] = i;
    for (const char* required : {"utt_id", "wav_path", "dnsmos", "vqscore"})
        if (!col.count(required))
            throw MissingColumn(std::string("manifest lacks column '") + required + "'");

    auto optional_col = [&](const char* name) {
        auto it = col.find(name);
        return it == col.end() ? static_cast<std::ptrdiff_t>(-1)
                               : static_cast<std::ptrdiff_t>(it->second);
    };
    const auto truth_col = optional_col("mos_truth");
    const auto system_col = optional_col("system");
    const auto condition_col = optional_col("condition");

    std::vector<ManifestRow> rows;
    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& fields = table.rows[r];
        const std::size_t row_no = r + 1;  // 1-based data row, header excluded
        if (fields.size() < table.header.size())
            throw csv::CsvParseError("row " + std::to_string(row_no) +
                                     ": fewer fields than header columns");
        auto field = [&](std::ptrdiff_t c) { return fields[static_cast<std::size_t>(c)]; };

        ManifestRow row;
        row.utt_id = field(static_cast<std::ptrdiff_t>(col["utt_id"]));
        if (row.utt_id.empty())
            throw csv::CsvParseError("row " + std::to_string(row_no) + ": empty utt_id");
        if (!seen.insert(row.utt_id).second)
            throw DuplicateId("duplicate utt_id '" + row.utt_id + "' at row " +
                              std::to_string(row_no));
        row.wav_path = field(static_cast<std::ptrdiff_t>(col["wav_path"]));
        row.pseudo.dnsmos = parse_checked(field(static_cast<std::ptrdiff_t>(col["dnsmos"])),
                                          "dnsmos", row_no, 1.0, 5.0);
        row.pseudo.vqscore = parse_checked(field(static_cast<std::ptrdiff_t>(col["vqscore"])),
                                           "vqscore", row_no, 0.0, 1.0);
        if (truth_col >= 0 && !field(truth_col).empty())
            row.mos_truth = parse_checked(field(truth_col), "mos_truth", row_no, 1.0, 5.0);
        if (system_col >= 0) row.system = field(system_col);
        if (condition_col >= 0) row.condition = field(condition_col);
        rows.push_back(std::move(row));
    }
    return rows;
}

double run_external_scorer(const std::string& cmd_template,
                           const std::filesystem::path& wav) {
    const std::string cmd = replace_all(cmd_template, "{wav}", wav.string());
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) throw ScorerFailure("cannot launch scorer: " + cmd);

    std::string out;
    char buf[256];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    const int status = pclose(pipe);
    if (status != 0)
        throw ScorerFailure("scorer exited with status " + std::to_string(status) +
                            ": " + cmd);
    try {
        return parse_real(out);
    } catch (const std::invalid_argument&) {
        throw ScorerFailure("scorer printed '" + out + "', expected one real: " + cmd);
    }
}

}  // namespace gathermos
