#include "gathermos/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>

#include "gathermos/errors.hpp"
#include "gathermos/textio.hpp"
#include "json.hpp"

namespace gathermos {

namespace {

int next_pow2(int n) {
    int p = 1;
    while (p < n) p *= 2;
    return p;
}

// Iterative radix-2 FFT, complex interleaved in/out. Twiddles are taken
// straight from cos/sin at every stage rather than by recurrence; the
// extra trig calls keep the result accurate to ~1 ulp, which matters
// because power values downstream are compared against a direct DFT.
void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
    const std::size_t n = re.size();
    if (n < 2) return;

    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::size_t half = len / 2;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const double wr = std::cos(ang * static_cast<double>(k));
                const double wi = std::sin(ang * static_cast<double>(k));
                const std::size_t a = i + k;
                const std::size_t b = i + k + half;
                const double tr = re[b] * wr - im[b] * wi;
                const double ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
    }
}

bool sample_sign_positive(double s) { return s >= 0.0; }

}  // namespace

int FrameConfig::frame_length(int sample_rate) const {
    return static_cast<int>(std::lround(frame_ms * sample_rate / 1000.0));
}

int FrameConfig::hop_length(int sample_rate) const {
    return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
}

int FrameConfig::fft_size(int sample_rate) const {
    if (n_fft > 0) return n_fft;
    return next_pow2(frame_length(sample_rate));
}

double FrameConfig::resolved_fmax(int sample_rate) const {
    return fmax_hz > 0.0 ? fmax_hz : sample_rate / 2.0;
}

void FrameConfig::validate(int sample_rate) const {
    if (sample_rate <= 0) throw std::invalid_argument("sample rate must be positive");
    if (frame_ms <= 0.0 || hop_ms <= 0.0)
        throw std::invalid_argument("frame and hop must be positive");
    if (hop_length(sample_rate) > frame_length(sample_rate))
        throw std::invalid_argument("hop exceeds frame length");
    if (frame_length(sample_rate) < 2)
        throw std::invalid_argument("frame shorter than two samples");
    if (n_fft > 0 && (n_fft & (n_fft - 1)) != 0)
        throw std::invalid_argument("n_fft must be a power of two");
    if (n_fft > 0 && n_fft < frame_length(sample_rate))
        throw std::invalid_argument("n_fft smaller than frame length");
    if (n_mels < 1) throw std::invalid_argument("n_mels must be at least 1");
    if (n_mfcc < 1 || n_mfcc > n_mels)
        throw std::invalid_argument("n_mfcc must be in [1, n_mels]");
    const double fmax = resolved_fmax(sample_rate);
    if (fmin_hz < 0.0 || fmax <= fmin_hz || fmax > sample_rate / 2.0)
        throw std::invalid_argument("bad mel band edges");
    if (log_floor <= 0.0) throw std::invalid_argument("log floor must be positive");
    if (clip_threshold <= 0.0 || clip_threshold > 1.0)
        throw std::invalid_argument("clip threshold must be in (0, 1]");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double compute_rms(const Waveform& w) {
    if (w.samples.empty()) throw TooShort("rms needs at least one sample");
    double acc = 0.0;
    for (double s : w.samples) acc += s * s;
    return std::sqrt(acc / static_cast<double>(w.samples.size()));
}

double compute_zcr(const Waveform& w) {
    if (w.samples.size() < 2) throw TooShort("zcr needs at least two samples");
    std::size_t crossings = 0;
    for (std::size_t i = 1; i < w.samples.size(); ++i) {
        if (sample_sign_positive(w.samples[i - 1]) != sample_sign_positive(w.samples[i]))
            ++crossings;
    }
    return static_cast<double>(crossings) / static_cast<double>(w.samples.size() - 1);
}

double compute_clipping_ratio(const Waveform& w, double threshold) {
    if (w.samples.empty()) throw TooShort("clipping ratio needs at least one sample");
    std::size_t clipped = 0;
    for (double s : w.samples)
        if (std::abs(s) >= threshold) ++clipped;
    return static_cast<double>(clipped) / static_cast<double>(w.samples.size());
}

Matrix stft_power(const Waveform& w, const FrameConfig& cfg) {
    cfg.validate(w.sample_rate);
    const int frame = cfg.frame_length(w.sample_rate);
    const int hop = cfg.hop_length(w.sample_rate);
    const int nfft = cfg.fft_size(w.sample_rate);
    const std::size_t n = w.samples.size();

    if (n < static_cast<std::size_t>(frame))
        throw TooShort("signal shorter than one analysis frame");
    const std::size_t n_frames = (n - frame) / hop + 1;

    // Periodic Hann: denominator is the frame length, not length-1.
    std::vector<double> window(frame);
    for (int i = 0; i < frame; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / frame);

    const int n_bins = nfft / 2 + 1;
    Matrix power(n_frames, std::vector<double>(n_bins));
    std::vector<double> re(nfft), im(nfft);
    for (std::size_t f = 0; f < n_frames; ++f) {
        const std::size_t start = f * hop;
        std::fill(re.begin(), re.end(), 0.0);
        std::fill(im.begin(), im.end(), 0.0);
        for (int i = 0; i < frame; ++i) re[i] = w.samples[start + i] * window[i];
        fft_radix2(re, im);
        for (int b = 0; b < n_bins; ++b) power[f][b] = re[b] * re[b] + im[b] * im[b];
    }
    return power;
}

Matrix mel_filterbank(const FrameConfig& cfg, int sample_rate) {
    cfg.validate(sample_rate);
    const int nfft = cfg.fft_size(sample_rate);
    const int n_bins = nfft / 2 + 1;
    const double bin_hz = static_cast<double>(sample_rate) / nfft;

    // n_mels + 2 grid points, evenly spaced in mel between the band edges.
    const double mel_lo = hz_to_mel(cfg.fmin_hz);
    const double mel_hi = hz_to_mel(cfg.resolved_fmax(sample_rate));
    std::vector<double> grid_hz(cfg.n_mels + 2);
    for (int i = 0; i < cfg.n_mels + 2; ++i)
        grid_hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));

    for (std::size_t i = 1; i < grid_hz.size(); ++i) {
        if (std::floor(grid_hz[i - 1] / bin_hz) == std::floor(grid_hz[i] / bin_hz))
            throw DegenerateBank("adjacent mel band edges fall in one FFT bin");
    }

    Matrix bank(cfg.n_mels, std::vector<double>(n_bins, 0.0));
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double left = grid_hz[m];
        const double center = grid_hz[m + 1];
        const double right = grid_hz[m + 2];
        for (int b = 0; b < n_bins; ++b) {
            const double f = b * bin_hz;
            if (f <= left || f >= right) continue;
            bank[m][b] = f <= center ? (f - left) / (center - left)
                                     : (right - f) / (right - center);
        }
    }
    return bank;
}

Matrix log_mel_spectrogram(const Matrix& power, const Matrix& bank, double log_floor) {
    Matrix out(power.size(), std::vector<double>(bank.size()));
    for (std::size_t f = 0; f < power.size(); ++f) {
        for (std::size_t m = 0; m < bank.size(); ++m) {
            double dot = 0.0;
            for (std::size_t b = 0; b < bank[m].size(); ++b)
                dot += bank[m][b] * power[f][b];
            out[f][m] = std::log(std::max(dot, log_floor));
        }
    }
    return out;
}

std::vector<double> compute_mfcc_mean(const Matrix& logmel, int n_mfcc) {
    if (logmel.empty()) throw TooShort("no frames for mfcc");
    const int n_mels = static_cast<int>(logmel[0].size());

    std::vector<double> mean(n_mfcc, 0.0);
    std::vector<double> coeffs(n_mfcc);
    const double norm0 = std::sqrt(1.0 / n_mels);
    const double normk = std::sqrt(2.0 / n_mels);
    for (const auto& frame : logmel) {
        for (int k = 0; k < n_mfcc; ++k) {
            double acc = 0.0;
            for (int m = 0; m < n_mels; ++m)
                acc += frame[m] *
                       std::cos(std::numbers::pi / n_mels * (m + 0.5) * k);
            coeffs[k] = (k == 0 ? norm0 : normk) * acc;
        }
        for (int k = 0; k < n_mfcc; ++k) mean[k] += coeffs[k];
    }
    for (double& v : mean) v /= static_cast<double>(logmel.size());
    return mean;
}

MelStats compute_mel_stats(const Matrix& logmel) {
    if (logmel.empty()) throw TooShort("no frames for mel stats");
    const std::size_t n_mels = logmel[0].size();
    const double n = static_cast<double>(logmel.size());

    MelStats stats;
    stats.bin_mean.assign(n_mels, 0.0);
    stats.bin_var.assign(n_mels, 0.0);
    stats.global_max = logmel[0][0];
    stats.global_min = logmel[0][0];
    for (const auto& frame : logmel) {
        for (std::size_t m = 0; m < n_mels; ++m) {
            stats.bin_mean[m] += frame[m];
            stats.global_max = std::max(stats.global_max, frame[m]);
            stats.global_min = std::min(stats.global_min, frame[m]);
        }
    }
    for (double& v : stats.bin_mean) v /= n;
    for (const auto& frame : logmel) {
        for (std::size_t m = 0; m < n_mels; ++m) {
            const double d = frame[m] - stats.bin_mean[m];
            stats.bin_var[m] += d * d;
        }
    }
    for (double& v : stats.bin_var) v /= n;
    return stats;
}

AcousticDescriptors extract_all(const Waveform& w, const FrameConfig& cfg) {
    AcousticDescriptors d;
    d.rms = compute_rms(w);
    d.zcr = compute_zcr(w);
    d.clipping_ratio = compute_clipping_ratio(w, cfg.clip_threshold);
    d.duration_s = duration_seconds(w);

    const Matrix power = stft_power(w, cfg);
    const Matrix bank = mel_filterbank(cfg, w.sample_rate);
    const Matrix logmel = log_mel_spectrogram(power, bank, cfg.log_floor);
    d.mfcc_mean = compute_mfcc_mean(logmel, cfg.n_mfcc);
    const MelStats stats = compute_mel_stats(logmel);
    d.mel_bin_mean = stats.bin_mean;
    d.mel_bin_var = stats.bin_var;
    d.mel_global_max = stats.global_max;
    d.mel_global_min = stats.global_min;
    return d;
}

namespace {

void append_array(std::string& out, const std::vector<double>& v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += format_sig6(v[i]);
    }
    out += ']';
}

}  // namespace

std::string descriptors_to_json_line(const std::string& utt_id,
                                     const AcousticDescriptors& d) {
    // Built by hand so the key order is fixed; a generic serializer would
    // sort keys and reorder historic cache files.
    std::string out = "{\"utt_id\":";
    out += nlohmann::json(utt_id).dump();
    out += ",\"rms\":" + format_sig6(d.rms);
    out += ",\"zcr\":" + format_sig6(d.zcr);
    out += ",\"clipping_ratio\":" + format_sig6(d.clipping_ratio);
    out += ",\"duration_s\":" + format_sig6(d.duration_s);
    out += ",\"mfcc_mean\":";
    append_array(out, d.mfcc_mean);
    out += ",\"mel_bin_mean\":";
    append_array(out, d.mel_bin_mean);
    out += ",\"mel_bin_var\":";
    append_array(out, d.mel_bin_var);
    out += ",\"mel_global_max\":" + format_sig6(d.mel_global_max);
    out += ",\"mel_global_min\":" + format_sig6(d.mel_global_min);
    out += '}';
    return out;
}

FeatureRow feature_row_from_json_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure(std::string("bad feature line: ") + e.what());
    }
    FeatureRow row;
    try {
        row.utt_id = j.at("utt_id").get<std::string>();
        row.descriptors.rms = j.at("rms").get<double>();
        row.descriptors.zcr = j.at("zcr").get<double>();
        row.descriptors.clipping_ratio = j.at("clipping_ratio").get<double>();
        row.descriptors.duration_s = j.at("duration_s").get<double>();
        row.descriptors.mfcc_mean = j.at("mfcc_mean").get<std::vector<double>>();
        row.descriptors.mel_bin_mean = j.at("mel_bin_mean").get<std::vector<double>>();
        row.descriptors.mel_bin_var = j.at("mel_bin_var").get<std::vector<double>>();
        row.descriptors.mel_global_max = j.at("mel_global_max").get<double>();
        row.descriptors.mel_global_min = j.at("mel_global_min").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure(std::string("bad feature line: ") + e.what());
    }
    return row;
}

std::vector<FeatureRow> load_feature_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path.string());
    std::vector<FeatureRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(feature_row_from_json_line(line));
    }
    return rows;
}

}  // namespace gathermos
