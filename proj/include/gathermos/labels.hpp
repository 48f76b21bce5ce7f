#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gathermos {

struct OutOfRange : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DuplicateId : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingColumn : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RangeViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ScorerFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// External quality scores for one utterance. DNSMOS lives on [1,5],
/// VQScore on [0,1]; both are validated at manifest load.
struct PseudoLabels {
    double dnsmos = 0.0;
    double vqscore = 0.0;
};

struct ManifestRow {
    std::string utt_id;
    std::filesystem::path wav_path;
    PseudoLabels pseudo;
    std::optional<double> mos_truth;  // [1,5] when present
    std::string system;
    std::string condition;
};

/// Maps [lo,hi] onto [0,1]. Inputs within 1e-9 of the range are clamped;
/// anything further out throws OutOfRange (a corrupted manifest, not a
/// rounding artifact).
double normalize_to_unit(double score, double lo, double hi);

/// Average of the two unit-normalized scores, reported back on the [1,5]
/// MOS scale: 1 + 4*((dnsmos-1)/4 + vqscore)/2. Exact for in-range input.
double naive_ensemble(const PseudoLabels& p);

/// Parses a manifest CSV (header utt_id,wav_path,dnsmos,vqscore with
/// optional mos_truth,system,condition columns). Throws MissingColumn,
/// DuplicateId, or RangeViolation with the offending data row index.
std::vector<ManifestRow> load_manifest(const std::filesystem::path& path);

/// Runs `cmd_template` with "{wav}" replaced by the path and parses a
/// single real from its stdout. Throws ScorerFailure on a non-zero exit
/// or unparsable output.
double run_external_scorer(const std::string& cmd_template,
                           const std::filesystem::path& wav);

}  // namespace gathermos
