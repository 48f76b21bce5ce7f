#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace gathermos {

/// Mono waveform in full-scale normalized amplitudes.
///
/// Invariants after a successful load: samples is non-empty, every sample
/// lies in [-1, 1] and sample_rate > 0. A Waveform is never mutated after
/// construction and is safe to share between threads.
struct Waveform {
    std::vector<double> samples;
    int sample_rate = 0;  // Hz
    std::string source_id;
};

struct MalformedContainer : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnsupportedEncoding : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyAudio : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LoadInfo {
    // Float-encoded samples outside [-1,1] are clamped; this counts them.
    std::size_t clamped_samples = 0;
};

/// Loads a RIFF/WAVE file into a mono Waveform.
///
/// Accepted encodings: PCM 8/16/24/32-bit (format code 1) and IEEE
/// float-32 (format code 3). Integer samples are scaled by 2^(bits-1) so
/// that the most negative code maps to exactly -1.0. Multichannel audio is
/// downmixed by per-frame channel averaging. source_id defaults to the
/// filename stem.
Waveform load_wav(const std::filesystem::path& path, LoadInfo* info = nullptr);

double duration_seconds(const Waveform& w);

/// Writes interleaved samples as 16-bit PCM. Values are clamped to [-1,1]
/// and quantized with round-to-nearest.
void write_wav_pcm16(const std::filesystem::path& path,
                     const std::vector<double>& interleaved,
                     int sample_rate,
                     int channels = 1);

}  // namespace gathermos
