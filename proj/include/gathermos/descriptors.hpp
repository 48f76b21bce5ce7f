#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gathermos/audio_io.hpp"

namespace gathermos {

struct TooShort : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateBank : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Framing and filterbank parameters for spectral descriptors.
///
/// Defaults follow the most common MFCC convention: 25 ms frames, 10 ms
/// hop, periodic Hann window, 40 triangular mel filters on the HTK mel
/// scale, orthonormal DCT-II, coefficients 0..12 kept.
struct FrameConfig {
    double frame_ms = 25.0;
    double hop_ms = 10.0;
    int n_fft = 0;  // 0 = smallest power of two >= frame length
    int n_mels = 40;
    int n_mfcc = 13;
    double fmin_hz = 0.0;
    double fmax_hz = 0.0;  // 0 = Nyquist
    double log_floor = 1e-10;
    double clip_threshold = 0.99;

    int frame_length(int sample_rate) const;
    int hop_length(int sample_rate) const;
    int fft_size(int sample_rate) const;
    double resolved_fmax(int sample_rate) const;

    /// Throws std::invalid_argument if any invariant is violated for the
    /// given sample rate (hop > frame, n_mfcc > n_mels, bad band edges, ...).
    void validate(int sample_rate) const;
};

/// The per-utterance descriptor bundle.
struct AcousticDescriptors {
    double rms = 0.0;
    double zcr = 0.0;
    double clipping_ratio = 0.0;
    double duration_s = 0.0;
    std::vector<double> mfcc_mean;
    std::vector<double> mel_bin_mean;
    std::vector<double> mel_bin_var;
    double mel_global_max = 0.0;
    double mel_global_min = 0.0;
};

// Row-major frame matrices: outer index = frame, inner index = bin.
using Matrix = std::vector<std::vector<double>>;

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// sqrt of the mean squared sample.
double compute_rms(const Waveform& w);

/// Fraction of adjacent sample pairs with strictly opposite sign;
/// sign(0) counts as positive. Throws TooShort for fewer than 2 samples.
double compute_zcr(const Waveform& w);

/// Fraction of samples with |s| >= threshold.
double compute_clipping_ratio(const Waveform& w, double threshold = 0.99);

/// Squared-magnitude spectrum of Hann-windowed frames, zero-padded to
/// n_fft. Output is frames x (n_fft/2 + 1); the last partial frame is
/// dropped. Throws TooShort when the signal yields no full frame.
Matrix stft_power(const Waveform& w, const FrameConfig& cfg);

/// Triangular mel filterbank, n_mels x (n_fft/2 + 1). Throws
/// DegenerateBank when adjacent mel centers collapse onto one FFT bin.
Matrix mel_filterbank(const FrameConfig& cfg, int sample_rate);

/// ln(max(bank . power_frame, log_floor)) per frame and mel bin.
Matrix log_mel_spectrogram(const Matrix& power, const Matrix& bank, double log_floor);

/// Orthonormal DCT-II along the mel axis, truncated to n_mfcc
/// coefficients, averaged across frames.
std::vector<double> compute_mfcc_mean(const Matrix& logmel, int n_mfcc);

struct MelStats {
    std::vector<double> bin_mean;
    std::vector<double> bin_var;  // population variance over frames
    double global_max = 0.0;
    double global_min = 0.0;
};
MelStats compute_mel_stats(const Matrix& logmel);

/// Computes the full descriptor bundle. Propagates TooShort and
/// DegenerateBank from the stages above.
AcousticDescriptors extract_all(const Waveform& w, const FrameConfig& cfg = {});

// Feature cache (JSON lines, one object per utterance, reals at 6
// significant digits, fixed key order so reruns are byte-identical).
struct FeatureRow {
    std::string utt_id;
    AcousticDescriptors descriptors;
};
std::string descriptors_to_json_line(const std::string& utt_id, const AcousticDescriptors& d);
FeatureRow feature_row_from_json_line(const std::string& line);
std::vector<FeatureRow> load_feature_jsonl(const std::filesystem::path& path);

}  // namespace gathermos
