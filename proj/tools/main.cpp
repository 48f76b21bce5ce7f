// gathermos: staged speech-quality pipeline.
//   extract   wav manifest -> acoustic feature JSONL
//   ensemble  manifest -> manifest + naive_ensemble column
//   predict   features + manifest -> per-utterance MOS via an LLM backend
//   evaluate  predictions + manifest -> LCC/SRCC report and scatter CSV

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <thread>
#include <unordered_map>

#include "CLI11.hpp"
#include "gathermos/audio_io.hpp"
#include "gathermos/csv.hpp"
#include "gathermos/descriptors.hpp"
#include "gathermos/errors.hpp"
#include "gathermos/labels.hpp"
#include "gathermos/meta_eval.hpp"
#include "gathermos/metrics.hpp"
#include "gathermos/textio.hpp"

namespace fs = std::filesystem;
using namespace gathermos;

namespace {

fs::path resolve_wav(const fs::path& manifest, const fs::path& wav) {
    return wav.is_absolute() ? wav : manifest.parent_path() / wav;
}

struct ExtractArgs {
    fs::path manifest;
    fs::path out;
    bool keep_going = false;
    FrameConfig frame;
};

int cmd_extract(const ExtractArgs& a) {
    const auto manifest = load_manifest(a.manifest);
    if (manifest.empty()) {
        std::cerr << "error: manifest has no rows\n";
        return 1;
    }

    const std::size_t n = manifest.size();
    std::vector<std::string> lines(n);
    std::vector<std::string> failures(n);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            const ManifestRow& row = manifest[i];
            try {
                const Waveform w = load_wav(resolve_wav(a.manifest, row.wav_path));
                lines[i] = descriptors_to_json_line(row.utt_id, extract_all(w, a.frame));
            } catch (const std::exception& e) {
                failures[i] = e.what();
            }
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t n_threads = std::min<std::size_t>(std::min(hw, 8u), n);
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    std::size_t n_failed = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!failures[i].empty()) {
            ++n_failed;
            std::cerr << (a.keep_going ? "warning: " : "error: ") << manifest[i].utt_id
                      << ": " << failures[i] << "\n";
        }
    }
    if (n_failed > 0 && !a.keep_going) {
        std::cerr << "error: " << n_failed << " of " << n
                  << " utterances failed; no output written (use --keep-going to "
                     "skip bad files)\n";
        return 1;
    }

    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw IoFailure("cannot open " + a.out.string() + " for writing");
    for (const auto& line : lines)
        if (!line.empty()) out << line << '\n';
    if (!out.flush()) throw IoFailure("short write to " + a.out.string());

    std::cout << "wrote " << (n - n_failed) << " feature rows to " << a.out.string();
    if (n_failed) std::cout << " (" << n_failed << " skipped)";
    std::cout << "\n";
    return 0;
}

struct EnsembleArgs {
    fs::path manifest;
    fs::path out;
    std::string dnsmos_cmd;
    std::string vqscore_cmd;
};

int cmd_ensemble(const EnsembleArgs& a) {
    auto rows = load_manifest(a.manifest);
    if (rows.empty()) {
        std::cerr << "error: manifest has no rows\n";
        return 1;
    }
    // Optional hook: re-score each wav with an external command instead of
    // trusting the manifest columns.
    for (auto& row : rows) {
        const fs::path wav = resolve_wav(a.manifest, row.wav_path);
        if (!a.dnsmos_cmd.empty())
            row.pseudo.dnsmos = run_external_scorer(a.dnsmos_cmd, wav);
        if (!a.vqscore_cmd.empty())
            row.pseudo.vqscore = run_external_scorer(a.vqscore_cmd, wav);
    }

    const csv::Table table = csv::read_file(a.manifest);
    std::size_t dnsmos_col = 0, vqscore_col = 0;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (table.header[i] == "dnsmos") dnsmos_col = i;
        if (table.header[i] == "vqscore") vqscore_col = i;
    }

    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw IoFailure("cannot open " + a.out.string() + " for writing");
    auto header = table.header;
    header.push_back("naive_ensemble");
    out << csv::join_row(header) << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto fields = table.rows[i];
        if (!a.dnsmos_cmd.empty())
            fields[dnsmos_col] = format_roundtrip(rows[i].pseudo.dnsmos);
        if (!a.vqscore_cmd.empty())
            fields[vqscore_col] = format_roundtrip(rows[i].pseudo.vqscore);
        fields.push_back(format_roundtrip(naive_ensemble(rows[i].pseudo)));
        out << csv::join_row(fields) << '\n';
    }
    if (!out.flush()) throw IoFailure("short write to " + a.out.string());
    std::cout << "wrote " << rows.size() << " rows to " << a.out.string() << "\n";
    return 0;
}

struct PredictArgs {
    fs::path features;
    fs::path manifest;
    fs::path out;
    std::string mode = "zs";
    fs::path support;
    int few_shot_k = 3;
    BackendConfig backend;
};

int cmd_predict(const PredictArgs& a) {
    const auto manifest = load_manifest(a.manifest);
    if (manifest.empty()) {
        std::cerr << "error: manifest has no rows\n";
        return 1;
    }
    const auto features = load_feature_jsonl(a.features);
    std::unordered_map<std::string, const AcousticDescriptors*> by_id;
    for (const auto& f : features) by_id[f.utt_id] = &f.descriptors;

    std::vector<RowInput> rows;
    rows.reserve(manifest.size());
    for (const auto& m : manifest) {
        const auto it = by_id.find(m.utt_id);
        if (it == by_id.end()) {
            std::cerr << "error: no feature row for utterance '" << m.utt_id << "'\n";
            return 1;
        }
        rows.push_back({m.utt_id, *it->second, m.pseudo});
    }

    const PromptMode mode = a.mode == "zs"        ? PromptMode::ZS
                            : a.mode == "zs-star" ? PromptMode::ZS_STAR
                                                  : PromptMode::FS;
    std::vector<FewShotExample> support;
    if (mode == PromptMode::FS)
        support = select_few_shot(load_support_jsonl(a.support), a.few_shot_k);

    MockBackend mock;
    std::unique_ptr<HttpBackend> http;
    Backend* backend = &mock;
    if (a.backend.kind == "http") {
        http = std::make_unique<HttpBackend>(a.backend);
        backend = http.get();
    }

    const RunResult result = run_batched(rows, mode, *backend, a.backend, support);
    write_predictions_csv(result, a.out);

    for (const auto& note : result.failure_notes) std::cerr << "warning: " << note << "\n";
    std::cout << "scored " << result.n_scored << ", failed " << result.n_failed
              << ", clamped " << result.n_clamped << " (" << result.n_requests
              << " requests)\n";
    return 0;
}

struct EvaluateArgs {
    fs::path pred;
    fs::path manifest;
    fs::path report;
    fs::path scatter;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const auto predictions = load_predictions_csv(a.pred);
    const auto manifest = load_manifest(a.manifest);
    const EvalReport report = build_report(predictions, manifest);

    if (!a.report.empty()) {
        std::ofstream out(a.report, std::ios::binary);
        if (!out) throw IoFailure("cannot open " + a.report.string() + " for writing");
        out << report_to_json(report) << '\n';
        if (!out.flush()) throw IoFailure("short write to " + a.report.string());
    }
    if (!a.scatter.empty()) emit_scatter(report, a.scatter);

    std::printf("lcc=%.4f srcc=%.4f\n", report.lcc, report.srcc);
    return 0;
}

void add_frame_flags(CLI::App* cmd, FrameConfig& f) {
    cmd->add_option("--frame-ms", f.frame_ms, "Analysis frame length in ms")
        ->capture_default_str();
    cmd->add_option("--hop-ms", f.hop_ms, "Hop between frames in ms")->capture_default_str();
    cmd->add_option("--n-fft", f.n_fft,
                    "FFT size (power of two; 0 = smallest covering the frame)")
        ->capture_default_str();
    cmd->add_option("--n-mels", f.n_mels, "Number of mel filters")->capture_default_str();
    cmd->add_option("--n-mfcc", f.n_mfcc, "Number of MFCC coefficients kept")
        ->capture_default_str();
    cmd->add_option("--fmin-hz", f.fmin_hz, "Lower mel band edge in Hz")
        ->capture_default_str();
    cmd->add_option("--fmax-hz", f.fmax_hz, "Upper mel band edge in Hz (0 = Nyquist)")
        ->capture_default_str();
    cmd->add_option("--log-floor", f.log_floor, "Floor applied before the mel log")
        ->capture_default_str();
    cmd->add_option("--clip-threshold", f.clip_threshold,
                    "Absolute amplitude counted as clipped")
        ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Speech quality assessment from acoustic descriptors and an LLM rater"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a TOML file (flags take precedence)");
    // Lets `gathermos predict --config run.toml` work: the subcommand hands
    // the unmatched --config up to the app, where the config option lives.
    app.fallthrough();

    ExtractArgs ex;
    CLI::App* extract = app.add_subcommand("extract", "Compute acoustic descriptors");
    extract->add_option("--manifest", ex.manifest, "Input manifest CSV")->required();
    extract->add_option("--out", ex.out, "Output feature JSONL")->required();
    extract->add_flag("--keep-going", ex.keep_going,
                      "Skip unreadable wav files instead of failing the run");
    add_frame_flags(extract, ex.frame);

    EnsembleArgs en;
    CLI::App* ensemble =
        app.add_subcommand("ensemble", "Append the NaiveEnsemble baseline column");
    ensemble->add_option("--manifest", en.manifest, "Input manifest CSV")->required();
    ensemble->add_option("--out", en.out, "Output CSV")->required();
    ensemble->add_option("--dnsmos-cmd", en.dnsmos_cmd,
                         "External DNSMOS command; {wav} expands to the file path");
    ensemble->add_option("--vqscore-cmd", en.vqscore_cmd,
                         "External VQScore command; {wav} expands to the file path");

    PredictArgs pr;
    CLI::App* predict = app.add_subcommand("predict", "Rate utterances with a backend");
    predict->add_option("--features", pr.features, "Feature JSONL from extract")->required();
    predict->add_option("--manifest", pr.manifest, "Manifest CSV with pseudo-labels")
        ->required();
    predict->add_option("--out", pr.out, "Output predictions CSV")->required();
    predict->add_option("--mode", pr.mode, "Prompt mode")
        ->check(CLI::IsMember({"zs", "zs-star", "fs"}))
        ->capture_default_str();
    predict->add_option("--support", pr.support,
                        "Labeled support pool JSONL (required for --mode fs)");
    predict->add_option("--few-shot-k", pr.few_shot_k, "Support examples per prompt")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    predict->add_option("--backend", pr.backend.kind, "Backend kind")
        ->check(CLI::IsMember({"mock", "http"}))
        ->capture_default_str();
    predict->add_option("--batch-size", pr.backend.batch_size, "Utterances per minibatch")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    predict->add_option("--max-retries", pr.backend.max_retries,
                        "Extra attempts per failing minibatch")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    predict->add_option("--max-in-flight", pr.backend.max_in_flight,
                        "Concurrent minibatch requests")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    predict->add_option("--timeout-s", pr.backend.timeout_s, "Per-request timeout")
        ->capture_default_str();
    predict->add_option("--backoff-base-s", pr.backend.backoff_base_s,
                        "Base delay for rate-limit backoff")
        ->capture_default_str();
    predict->add_option("--endpoint", pr.backend.endpoint_url,
                        "Chat-completion endpoint URL (or GATHERMOS_ENDPOINT)");
    predict->add_option("--model", pr.backend.model_name,
                        "Model name sent to the endpoint (or GATHERMOS_MODEL)");
    predict->add_option("--api-key-env", pr.backend.api_key_env,
                        "Environment variable holding the API key")
        ->capture_default_str();

    EvaluateArgs ev;
    CLI::App* evaluate =
        app.add_subcommand("evaluate", "Correlate predictions with ground truth");
    evaluate->add_option("--pred", ev.pred, "Predictions CSV from predict")->required();
    evaluate->add_option("--manifest", ev.manifest, "Manifest CSV with mos_truth")
        ->required();
    evaluate->add_option("--report", ev.report, "Report JSON output path");
    evaluate->add_option("--scatter", ev.scatter, "Scatter CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    // Conflicting flag combinations are rejected before any work starts.
    if (*predict) {
        if (pr.mode == "fs" && pr.support.empty()) {
            std::cerr << "error: --mode fs requires --support\n";
            return 1;
        }
        if (pr.mode != "fs" && !pr.support.empty()) {
            std::cerr << "error: --support only makes sense with --mode fs\n";
            return 1;
        }
    }

    try {
        if (*extract) return cmd_extract(ex);
        if (*ensemble) return cmd_ensemble(en);
        if (*predict) return cmd_predict(pr);
        return cmd_evaluate(ev);
    } catch (const AuthError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const BackendUnreachable& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
