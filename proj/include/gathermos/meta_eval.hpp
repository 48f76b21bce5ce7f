#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gathermos/descriptors.hpp"
#include "gathermos/labels.hpp"

namespace gathermos {

struct MetaEvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Prompt construction.
struct EmptyBatch : MetaEvalError {
    using MetaEvalError::MetaEvalError;
};
struct MissingSupport : MetaEvalError {
    using MetaEvalError::MetaEvalError;
};
struct PoolTooSmall : MetaEvalError {
    using MetaEvalError::MetaEvalError;
};

/// The serializer and the mock disagree about the prompt layout. This is
/// a contract drift (a bug), so it is never swallowed by retry logic.
struct UnparsablePrompt : MetaEvalError {
    using MetaEvalError::MetaEvalError;
};

// Response parsing. All of these are retryable at the minibatch level.
struct ResponseParseError : MetaEvalError {
    using MetaEvalError::MetaEvalError;
};
struct NoJsonFound : ResponseParseError {
    using ResponseParseError::ResponseParseError;
};
struct CountMismatch : ResponseParseError {
    using ResponseParseError::ResponseParseError;
};
struct MissingId : ResponseParseError {
    using ResponseParseError::ResponseParseError;
};
struct NonNumericMos : ResponseParseError {
    using ResponseParseError::ResponseParseError;
};

// Transport.
struct BackendError : MetaEvalError {
    using MetaEvalError::MetaEvalError;
};
struct AuthError : BackendError {  // 401/403: never retried
    using BackendError::BackendError;
};
struct RateLimited : BackendError {  // 429 persisted past the backoff budget
    using BackendError::BackendError;
};
struct Timeout : BackendError {
    using BackendError::BackendError;
};
struct MalformedServerReply : BackendError {
    using BackendError::BackendError;
};
struct BackendUnreachable : BackendError {
    using BackendError::BackendError;
};

enum class PromptMode {
    ZS,       // basic descriptors: rms, zcr, clipping_ratio, duration_s
    ZS_STAR,  // ZS plus mfcc_mean and mel statistics
    FS,       // ZS plus a labeled support set
};

/// One labeled support example: descriptors, pseudo-labels, true MOS.
/// The utt_id exists for deterministic tie-breaking during selection.
struct FewShotExample {
    std::string utt_id;
    AcousticDescriptors descriptors;
    PseudoLabels pseudo;
    double mos = 0.0;  // [1,5]
};

struct Prediction {
    std::string utt_id;
    double mos = 0.0;  // [1,5] after clamping
    std::map<std::string, std::string> attributes;
    std::string raw_response;  // audit trail
    bool clamped = false;
};

struct BackendConfig {
    std::string kind = "mock";  // "mock" or "http"
    std::string endpoint_url;   // falls back to $GATHERMOS_ENDPOINT
    std::string model_name;     // falls back to $GATHERMOS_MODEL
    std::string api_key_env = "GATHERMOS_API_KEY";
    int batch_size = 10;
    int max_retries = 2;
    double timeout_s = 120.0;
    double backoff_base_s = 2.0;
    int max_in_flight = 2;
    std::string temperature_directive =
        "Act deterministically: report the single most likely score rather "
        "than sampling, so identical inputs always yield identical outputs.";
};

/// One complete() call is one stateless request; implementations carry no
/// conversation state between calls (session reset between minibatches).
class Backend {
  public:
    virtual ~Backend() = default;
    virtual std::string complete(const std::string& prompt) = 0;
};

/// Deterministic stand-in for the real model: reads the pseudo-labels and
/// clipping ratio back out of the prompt and answers with
/// mos = naive_ensemble - 2*clipping_ratio clamped to [1,5].
class MockBackend : public Backend {
  public:
    std::string complete(const std::string& prompt) override;
};

/// Chat-completion-style HTTP transport. A fresh connection is made per
/// request; only 429 is retried internally (exponential backoff), every
/// other failure is reported to the caller.
class HttpBackend : public Backend {
  public:
    explicit HttpBackend(const BackendConfig& cfg);
    std::string complete(const std::string& prompt) override;

    /// How many 429 backoff sleeps have happened (for tests/reporting).
    int rate_limit_backoffs() const { return backoffs_.load(); }

  private:
    BackendConfig cfg_;
    std::string api_key_;
    std::string host_;  // scheme://host[:port]
    std::string path_;
    std::atomic<int> backoffs_{0};
};

struct RowInput {
    std::string utt_id;
    AcousticDescriptors descriptors;
    PseudoLabels pseudo;
};

inline constexpr const char* kSupportHeader = "=== reference examples ===";
inline constexpr const char* kUtteranceHeader = "=== utterances ===";

/// Renders one minibatch as deterministic text: a fixed instruction block,
/// an optional support section (FS mode), then one JSON line per utterance
/// with reals at 4 decimals and keys in the order utt_id, dnsmos, vqscore,
/// rms, zcr, clipping_ratio, duration_s, then in ZS_STAR mode mfcc_mean,
/// mel_bin_mean, mel_bin_var, mel_global_max, mel_global_min.
std::string serialize_prompt(const std::vector<RowInput>& batch, PromptMode mode,
                             const std::vector<FewShotExample>& support = {},
                             const std::string& temperature_directive =
                                 BackendConfig{}.temperature_directive);

/// Pulls the first well-formed JSON array out of `text` (surrounding prose
/// is tolerated), validates one object per expected id, clamps mos into
/// [1,5] flagging the event, and returns predictions in expected order.
std::vector<Prediction> parse_response(const std::string& text,
                                       const std::vector<std::string>& expected_ids);

/// Picks the k pool members whose MOS best match the k evenly spaced
/// quantiles of the pool (for k=3: minimum, closest-to-median, maximum).
/// Ties prefer the lexicographically smaller utt_id. Result is sorted
/// ascending by mos.
std::vector<FewShotExample> select_few_shot(const std::vector<FewShotExample>& pool,
                                            int k = 3);

struct RowOutcome {
    std::string utt_id;
    bool scored = false;
    Prediction prediction;  // valid only when scored
};

struct RunResult {
    std::vector<RowOutcome> rows;  // input order
    std::size_t n_scored = 0;
    std::size_t n_failed = 0;
    std::size_t n_clamped = 0;
    std::size_t n_requests = 0;  // backend calls, retries included
    std::vector<std::string> failure_notes;

    bool partial_failure() const { return n_failed > 0; }
};

/// Splits rows into consecutive minibatches of cfg.batch_size, sends each
/// as one stateless request (concurrently, at most cfg.max_in_flight at a
/// time), retries a failing minibatch up to cfg.max_retries more times,
/// then marks its utterances failed. AuthError aborts immediately;
/// BackendUnreachable aborts once its retries are spent; anything else
/// only fails the one minibatch.
RunResult run_batched(const std::vector<RowInput>& rows, PromptMode mode,
                      Backend& backend, const BackendConfig& cfg,
                      const std::vector<FewShotExample>& support = {});

/// CSV with header utt_id,mos,attributes_json,status; failed rows keep an
/// empty mos and "{}" attributes.
void write_predictions_csv(const RunResult& result, const std::filesystem::path& path);

// Support pools live in JSONL: the feature-cache fields plus dnsmos,
// vqscore, and mos.
std::string few_shot_to_json_line(const FewShotExample& ex);
FewShotExample few_shot_from_json_line(const std::string& line);
std::vector<FewShotExample> load_support_jsonl(const std::filesystem::path& path);

}  // namespace gathermos
