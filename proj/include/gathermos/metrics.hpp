#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gathermos/labels.hpp"

namespace gathermos {

struct DegenerateInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingTruth : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NoScoredUtterances : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Pearson correlation with population moments. Requires equal lengths
/// >= 2; a constant vector makes the result undefined and throws
/// DegenerateInput rather than returning 0.
double pearson_lcc(const std::vector<double>& x, const std::vector<double>& y);

/// 1-based ranks with ties assigned the average of the positions they
/// occupy (so {1,2,2,3} ranks as {1, 2.5, 2.5, 4}).
std::vector<double> fractional_ranks(const std::vector<double>& v);

/// Pearson correlation of the fractional ranks. Valid under ties, unlike
/// the classic d-squared shortcut.
double spearman_srcc(const std::vector<double>& x, const std::vector<double>& y);

struct ScoredPair {
    std::string utt_id;
    double truth = 0.0;
    double prediction = 0.0;
    std::string system;
    std::string condition;
};

struct EvalReport {
    std::size_t n = 0;         // scored utterances, == pairs.size()
    std::size_t n_failed = 0;  // excluded from the correlations
    double lcc = 0.0;
    double srcc = 0.0;
    std::vector<ScoredPair> pairs;
};

// One row of a predictions CSV (header utt_id,mos,attributes_json,status).
struct PredictionRow {
    std::string utt_id;
    double mos = 0.0;  // meaningful only when scored
    std::string attributes_json;
    std::string status;  // "ok" or "failed"

    bool scored() const { return status == "ok"; }
};

std::vector<PredictionRow> load_predictions_csv(const std::filesystem::path& path);

/// Joins predictions with manifest truth on utt_id and computes LCC/SRCC
/// over the scored rows. Throws MissingTruth when a scored utterance has
/// no mos_truth, NoScoredUtterances when nothing survived.
EvalReport build_report(const std::vector<PredictionRow>& predictions,
                        const std::vector<ManifestRow>& manifest);

/// CSV with header truth,prediction,utt_id,system,condition, one row per
/// pair, reals at round-trip precision.
void emit_scatter(const EvalReport& report, const std::filesystem::path& path);

/// {"n":...,"n_failed":...,"lcc":...,"srcc":...} with that key order.
std::string report_to_json(const EvalReport& report);

}  // namespace gathermos
