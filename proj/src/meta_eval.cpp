#include "gathermos/meta_eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "gathermos/csv.hpp"
#include "gathermos/errors.hpp"
#include "gathermos/textio.hpp"
#include "json.hpp"

namespace gathermos {

namespace {

void append_fixed4_array(std::string& out, const std::vector<double>& v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += format_fixed4(v[i]);
    }
    out += ']';
}

// Shared between evaluation rows and support examples so both sides of a
// few-shot prompt read identically.
std::string basic_fields(const std::string& utt_id, const AcousticDescriptors& d,
                         const PseudoLabels& p) {
    std::string out = "{\"utt_id\":" + nlohmann::json(utt_id).dump();
    out += ",\"dnsmos\":" + format_fixed4(p.dnsmos);
    out += ",\"vqscore\":" + format_fixed4(p.vqscore);
    out += ",\"rms\":" + format_fixed4(d.rms);
    out += ",\"zcr\":" + format_fixed4(d.zcr);
    out += ",\"clipping_ratio\":" + format_fixed4(d.clipping_ratio);
    out += ",\"duration_s\":" + format_fixed4(d.duration_s);
    return out;
}

std::string utterance_line(const RowInput& row, PromptMode mode) {
    std::string out = basic_fields(row.utt_id, row.descriptors, row.pseudo);
    if (mode == PromptMode::ZS_STAR) {
        out += ",\"mfcc_mean\":";
        append_fixed4_array(out, row.descriptors.mfcc_mean);
        out += ",\"mel_bin_mean\":";
        append_fixed4_array(out, row.descriptors.mel_bin_mean);
        out += ",\"mel_bin_var\":";
        append_fixed4_array(out, row.descriptors.mel_bin_var);
        out += ",\"mel_global_max\":" + format_fixed4(row.descriptors.mel_global_max);
        out += ",\"mel_global_min\":" + format_fixed4(row.descriptors.mel_global_min);
    }
    out += '}';
    return out;
}

std::string support_line(const FewShotExample& ex) {
    std::string out = basic_fields(ex.utt_id, ex.descriptors, ex.pseudo);
    out += ",\"mos\":" + format_fixed4(ex.mos);
    out += '}';
    return out;
}

}  // namespace

std::string serialize_prompt(const std::vector<RowInput>& batch, PromptMode mode,
                             const std::vector<FewShotExample>& support,
                             const std::string& temperature_directive) {
    if (batch.empty()) throw EmptyBatch("cannot serialize an empty minibatch");
    if (mode == PromptMode::FS && support.empty())
        throw MissingSupport("few-shot mode needs a non-empty support set");

    std::string prompt =
        "You are a speech quality rater. Each utterance below is described by "
        "acoustic measurements and by two machine quality scores: dnsmos on a "
        "1-5 scale and vqscore on a 0-1 scale.\n"
        "Estimate the mean opinion score a panel of human listeners would give "
        "each utterance, as a number between 1 and 5.\n";
    prompt += temperature_directive;
    prompt +=
        "\nReply with exactly one JSON array holding one object per utterance, "
        "in the order given, each object of the form {\"utt_id\": string, "
        "\"mos\": number in [1,5], \"attributes\": object mapping short names "
        "such as noise level, clipping, or reverberation to short string "
        "values}. Output no text outside that array.\n";

    if (mode == PromptMode::FS) {
        prompt += "\n";
        prompt += kSupportHeader;
        prompt += "\nEach line is a rated example: its measurements plus the true mos.\n";
        for (const auto& ex : support) {
            prompt += support_line(ex);
            prompt += '\n';
        }
    }

    prompt += "\n";
    prompt += kUtteranceHeader;
    prompt += '\n';
    for (const auto& row : batch) {
        prompt += utterance_line(row, mode);
        prompt += '\n';
    }
    return prompt;
}

namespace {

// Locates the first balanced [...] span that parses as JSON. Bracket
// matching skips string literals so prose like "see [12]" cannot truncate
// the scan, and parse failures fall through to the next candidate.
bool extract_first_array(const std::string& text, nlohmann::json& out) {
    for (std::size_t start = text.find('['); start != std::string::npos;
         start = text.find('[', start + 1)) {
        int depth = 0;
        bool in_string = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (c == '\\')
                    ++i;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '[') {
                ++depth;
            } else if (c == ']') {
                if (--depth == 0) {
                    const auto candidate = text.substr(start, i - start + 1);
                    auto parsed = nlohmann::json::parse(candidate, nullptr, false);
                    if (parsed.is_array()) {
                        out = std::move(parsed);
                        return true;
                    }
                    break;
                }
            }
        }
    }
    return false;
}

}  // namespace

std::vector<Prediction> parse_response(const std::string& text,
                                       const std::vector<std::string>& expected_ids) {
    nlohmann::json array;
    if (!extract_first_array(text, array))
        throw NoJsonFound("response contains no well-formed JSON array");
    if (array.size() != expected_ids.size())
        throw CountMismatch("got " + std::to_string(array.size()) + " objects, expected " +
                            std::to_string(expected_ids.size()));

    std::map<std::string, const nlohmann::json*> by_id;
    for (const auto& item : array) {
        if (!item.is_object() || !item.contains("utt_id") || !item["utt_id"].is_string())
            throw MissingId("response object lacks a string utt_id");
        by_id[item["utt_id"].get<std::string>()] = &item;
    }

    std::vector<Prediction> predictions;
    predictions.reserve(expected_ids.size());
    for (const auto& id : expected_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw MissingId("no response object for utt_id '" + id + "'");
        const nlohmann::json& obj = *it->second;

        if (!obj.contains("mos") || !obj["mos"].is_number())
            throw NonNumericMos("mos missing or non-numeric for utt_id '" + id + "'");

        Prediction p;
        p.utt_id = id;
        p.mos = obj["mos"].get<double>();
        if (p.mos < 1.0) {
            p.mos = 1.0;
            p.clamped = true;
        } else if (p.mos > 5.0) {
            p.mos = 5.0;
            p.clamped = true;
        }
        if (obj.contains("attributes") && obj["attributes"].is_object()) {
            for (const auto& [key, value] : obj["attributes"].items())
                p.attributes[key] = value.is_string() ? value.get<std::string>() : value.dump();
        }
        p.raw_response = text;
        predictions.push_back(std::move(p));
    }
    return predictions;
}

std::vector<FewShotExample> select_few_shot(const std::vector<FewShotExample>& pool,
                                            int k) {
    if (k < 1) throw std::invalid_argument("few-shot k must be at least 1");
    if (pool.size() < static_cast<std::size_t>(k))
        throw PoolTooSmall("pool of " + std::to_string(pool.size()) +
                           " cannot supply k=" + std::to_string(k));

    std::vector<const FewShotExample*> sorted;
    sorted.reserve(pool.size());
    for (const auto& ex : pool) sorted.push_back(&ex);
    std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
        return a->mos != b->mos ? a->mos < b->mos : a->utt_id < b->utt_id;
    });

    const std::size_t n = sorted.size();
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(n - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        if (lo + 1 >= n) return sorted[n - 1]->mos;
        return sorted[lo]->mos + (sorted[lo + 1]->mos - sorted[lo]->mos) * frac;
    };

    // Greedy nearest-to-target over targets in ascending order. Scanning
    // the (mos, utt_id)-sorted pool with a strict '<' keeps the smallest
    // mos, then the smallest utt_id, whenever distances tie.
    std::vector<bool> used(n, false);
    std::vector<const FewShotExample*> picked;
    for (int i = 0; i < k; ++i) {
        const double target = k == 1 ? quantile(0.5)
                                     : quantile(static_cast<double>(i) / (k - 1));
        std::size_t best = n;
        double best_dist = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (used[j]) continue;
            const double dist = std::abs(sorted[j]->mos - target);
            if (best == n || dist < best_dist) {
                best = j;
                best_dist = dist;
            }
        }
        used[best] = true;
        picked.push_back(sorted[best]);
    }

    std::sort(picked.begin(), picked.end(), [](const auto* a, const auto* b) {
        return a->mos != b->mos ? a->mos < b->mos : a->utt_id < b->utt_id;
    });
    std::vector<FewShotExample> result;
    result.reserve(picked.size());
    for (const auto* p : picked) result.push_back(*p);
    return result;
}

std::string MockBackend::complete(const std::string& prompt) {
    std::istringstream in(prompt);
    std::string line;
    bool in_utterances = false;
    nlohmann::json out = nlohmann::json::array();
    while (std::getline(in, line)) {
        if (line == kUtteranceHeader) {
            in_utterances = true;
            continue;
        }
        if (!in_utterances || line.empty()) continue;
        try {
            const nlohmann::json obj = nlohmann::json::parse(line);
            PseudoLabels p{obj.at("dnsmos").get<double>(), obj.at("vqscore").get<double>()};
            double mos = naive_ensemble(p) - 2.0 * obj.at("clipping_ratio").get<double>();
            const bool clipped = obj.at("clipping_ratio").get<double>() > 0.0;
            mos = std::clamp(mos, 1.0, 5.0);
            out.push_back({{"utt_id", obj.at("utt_id").get<std::string>()},
                           {"mos", mos},
                           {"attributes", {{"clipping", clipped ? "yes" : "no"}}}});
        } catch (const nlohmann::json::exception& e) {
            throw UnparsablePrompt(std::string("utterance line not understood: ") + e.what());
        } catch (const OutOfRange& e) {
            throw UnparsablePrompt(std::string("pseudo-labels out of range: ") + e.what());
        }
    }
    if (!in_utterances) throw UnparsablePrompt("prompt lacks the utterance section");
    return out.dump();
}

RunResult run_batched(const std::vector<RowInput>& rows, PromptMode mode,
                      Backend& backend, const BackendConfig& cfg,
                      const std::vector<FewShotExample>& support) {
    if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (cfg.max_retries < 0) throw std::invalid_argument("max_retries cannot be negative");
    if (mode == PromptMode::FS && support.empty())
        throw MissingSupport("few-shot mode needs a non-empty support set");

    RunResult result;
    if (rows.empty()) return result;

    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t n_batches = (rows.size() + bs - 1) / bs;

    struct BatchSlot {
        bool scored = false;
        std::vector<Prediction> predictions;
        std::string note;
        std::size_t requests = 0;
    };
    std::vector<BatchSlot> slots(n_batches);

    std::atomic<std::size_t> next_batch{0};
    std::atomic<bool> abort{false};
    std::exception_ptr fatal;
    std::mutex fatal_mutex;

    auto process_batch = [&](std::size_t b) {
        BatchSlot& slot = slots[b];
        const std::size_t begin = b * bs;
        const std::size_t end = std::min(rows.size(), begin + bs);
        const std::vector<RowInput> batch(rows.begin() + begin, rows.begin() + end);
        std::vector<std::string> ids;
        for (const auto& row : batch) ids.push_back(row.utt_id);

        const std::string prompt =
            serialize_prompt(batch, mode, support, cfg.temperature_directive);
        for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
            try {
                ++slot.requests;
                const std::string reply = backend.complete(prompt);
                slot.predictions = parse_response(reply, ids);
                slot.scored = true;
                return;
            } catch (const AuthError&) {
                throw;  // credentials won't improve on retry
            } catch (const BackendUnreachable&) {
                slot.note = "unreachable";
                if (attempt == cfg.max_retries) throw;
            } catch (const BackendError& e) {
                slot.note = e.what();
            } catch (const ResponseParseError& e) {
                slot.note = e.what();
            }
        }
        // Retries exhausted; the batch stays unscored and is reported.
    };

    auto worker = [&] {
        while (!abort.load()) {
            const std::size_t b = next_batch.fetch_add(1);
            if (b >= n_batches) return;
            try {
                process_batch(b);
            } catch (...) {
                std::lock_guard<std::mutex> lock(fatal_mutex);
                if (!fatal) fatal = std::current_exception();
                abort.store(true);
                return;
            }
        }
    };

    const std::size_t n_workers =
        std::min<std::size_t>(std::max(cfg.max_in_flight, 1), n_batches);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (fatal) std::rethrow_exception(fatal);

    for (std::size_t b = 0; b < n_batches; ++b) {
        const BatchSlot& slot = slots[b];
        const std::size_t begin = b * bs;
        const std::size_t end = std::min(rows.size(), begin + bs);
        result.n_requests += slot.requests;
        if (slot.scored) {
            for (const auto& p : slot.predictions) {
                result.rows.push_back({p.utt_id, true, p});
                ++result.n_scored;
                if (p.clamped) ++result.n_clamped;
            }
        } else {
            for (std::size_t i = begin; i < end; ++i) {
                result.rows.push_back({rows[i].utt_id, false, {}});
                ++result.n_failed;
            }
            result.failure_notes.push_back(
                "minibatch " + std::to_string(b + 1) + " (" + rows[begin].utt_id +
                " .. " + rows[end - 1].utt_id + ") failed: " + slot.note);
        }
    }
    return result;
}

void write_predictions_csv(const RunResult& result, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    out << "utt_id,mos,attributes_json,status\n";
    for (const auto& row : result.rows) {
        out << csv::escape(row.utt_id) << ',';
        if (row.scored) {
            nlohmann::json attrs = nlohmann::json::object();
            for (const auto& [k, v] : row.prediction.attributes) attrs[k] = v;
            out << format_roundtrip(row.prediction.mos) << ','
                << csv::escape(attrs.dump()) << ",ok\n";
        } else {
            out << ",{},failed\n";
        }
    }
    if (!out.flush()) throw IoFailure("short write to " + path.string());
}

std::string few_shot_to_json_line(const FewShotExample& ex) {
    std::string line = descriptors_to_json_line(ex.utt_id, ex.descriptors);
    line.pop_back();  // reopen the object to append the label fields
    line += ",\"dnsmos\":" + format_sig6(ex.pseudo.dnsmos);
    line += ",\"vqscore\":" + format_sig6(ex.pseudo.vqscore);
    line += ",\"mos\":" + format_sig6(ex.mos);
    line += '}';
    return line;
}

FewShotExample few_shot_from_json_line(const std::string& line) {
    const FeatureRow base = feature_row_from_json_line(line);
    FewShotExample ex;
    ex.utt_id = base.utt_id;
    ex.descriptors = base.descriptors;
    try {
        const nlohmann::json j = nlohmann::json::parse(line);
        ex.pseudo.dnsmos = j.at("dnsmos").get<double>();
        ex.pseudo.vqscore = j.at("vqscore").get<double>();
        ex.mos = j.at("mos").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure(std::string("bad support line: ") + e.what());
    }
    if (ex.mos < 1.0 || ex.mos > 5.0)
        throw RangeViolation("support example '" + ex.utt_id + "' has mos outside [1,5]");
    return ex;
}

std::vector<FewShotExample> load_support_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path.string());
    std::vector<FewShotExample> pool;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        pool.push_back(few_shot_from_json_line(line));
    }
    return pool;
}

}  // namespace gathermos
