#include "gathermos/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "gathermos/errors.hpp"

namespace gathermos {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatIeeeFloat = 3;

std::uint16_t read_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct FmtChunk {
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits_per_sample = 0;
    std::uint16_t block_align = 0;
};

double decode_sample(const std::uint8_t* p, const FmtChunk& fmt, LoadInfo& info) {
    if (fmt.format == kFormatIeeeFloat) {
        float f;
        std::memcpy(&f, p, 4);
        double v = static_cast<double>(f);
        if (!std::isfinite(v)) {
            ++info.clamped_samples;
            return 0.0;
        }
        if (v < -1.0 || v > 1.0) {
            ++info.clamped_samples;
            return std::clamp(v, -1.0, 1.0);
        }
        return v;
    }
    switch (fmt.bits_per_sample) {
        case 8:
            // 8-bit WAV PCM is unsigned
            return (static_cast<int>(p[0]) - 128) / 128.0;
        case 16: {
            auto v = static_cast<std::int16_t>(read_u16(p));
            return v / 32768.0;
        }
        case 24: {
            const std::uint32_t u = (static_cast<std::uint32_t>(p[0]) << 8) |
                                    (static_cast<std::uint32_t>(p[1]) << 16) |
                                    (static_cast<std::uint32_t>(p[2]) << 24);
            return (static_cast<std::int32_t>(u) >> 8) / 8388608.0;
        }
        case 32: {
            auto v = static_cast<std::int32_t>(read_u32(p));
            return v / 2147483648.0;
        }
        default:
            throw UnsupportedEncoding("unsupported PCM bit depth");
    }
}

}  // namespace

Waveform load_wav(const std::filesystem::path& path, LoadInfo* info) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoFailure("cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());

    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw MalformedContainer(path.string() + ": not a RIFF/WAVE file");
    }

    FmtChunk fmt;
    bool have_fmt = false;
    const std::uint8_t* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t size = read_u32(bytes.data() + pos + 4);
        pos += 8;
        if (pos + size > bytes.size()) {
            throw MalformedContainer(path.string() + ": chunk extends past end of file");
        }
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) {
                throw MalformedContainer(path.string() + ": fmt chunk too small");
            }
            const std::uint8_t* p = bytes.data() + pos;
            fmt.format = read_u16(p);
            fmt.channels = read_u16(p + 2);
            fmt.sample_rate = read_u32(p + 4);
            fmt.block_align = read_u16(p + 12);
            fmt.bits_per_sample = read_u16(p + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + pos;
            data_size = size;
            break;
        }
        pos += size + (size & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data == nullptr) {
        throw MalformedContainer(path.string() + ": missing fmt or data chunk");
    }
    if (fmt.format != kFormatPcm && fmt.format != kFormatIeeeFloat) {
        throw UnsupportedEncoding(path.string() + ": format code " + std::to_string(fmt.format) +
                                  " (only PCM and IEEE float are supported)");
    }
    if (fmt.format == kFormatIeeeFloat && fmt.bits_per_sample != 32) {
        throw UnsupportedEncoding(path.string() + ": only 32-bit IEEE float is supported");
    }
    if (fmt.format == kFormatPcm && fmt.bits_per_sample != 8 && fmt.bits_per_sample != 16 &&
        fmt.bits_per_sample != 24 && fmt.bits_per_sample != 32) {
        throw UnsupportedEncoding(path.string() + ": unsupported PCM bit depth " +
                                  std::to_string(fmt.bits_per_sample));
    }
    if (fmt.channels == 0 || fmt.sample_rate == 0) {
        throw MalformedContainer(path.string() + ": zero channels or sample rate");
    }

    const std::size_t bytes_per_sample = fmt.bits_per_sample / 8;
    const std::size_t frame_size = bytes_per_sample * fmt.channels;
    const std::size_t frames = data_size / frame_size;
    if (frames == 0) {
        throw EmptyAudio(path.string() + ": no audio frames");
    }

    LoadInfo local;
    LoadInfo& stats = info ? *info : local;
    stats.clamped_samples = 0;

    Waveform w;
    w.sample_rate = static_cast<int>(fmt.sample_rate);
    w.source_id = path.stem().string();
    w.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        const std::uint8_t* fp = data + f * frame_size;
        double acc = 0.0;
        for (unsigned c = 0; c < fmt.channels; ++c) {
            acc += decode_sample(fp + c * bytes_per_sample, fmt, stats);
        }
        w.samples[f] = acc / fmt.channels;
    }
    return w;
}

double duration_seconds(const Waveform& w) {
    return static_cast<double>(w.samples.size()) / w.sample_rate;
}

void write_wav_pcm16(const std::filesystem::path& path,
                     const std::vector<double>& interleaved,
                     int sample_rate,
                     int channels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoFailure("cannot open " + path.string() + " for writing");
    }
    const std::uint32_t data_size = static_cast<std::uint32_t>(interleaved.size() * 2);
    const std::uint32_t riff_size = 36 + data_size;
    const std::uint16_t block_align = static_cast<std::uint16_t>(2 * channels);
    const std::uint32_t byte_rate = static_cast<std::uint32_t>(sample_rate) * block_align;

    auto put_u16 = [&](std::uint16_t v) {
        char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
        out.write(b, 2);
    };
    auto put_u32 = [&](std::uint32_t v) {
        char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
        out.write(b, 4);
    };

    out.write("RIFF", 4);
    put_u32(riff_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(kFormatPcm);
    put_u16(static_cast<std::uint16_t>(channels));
    put_u32(static_cast<std::uint32_t>(sample_rate));
    put_u32(byte_rate);
    put_u16(block_align);
    put_u16(16);
    out.write("data", 4);
    put_u32(data_size);
    for (double s : interleaved) {
        double v = std::clamp(s, -1.0, 1.0) * 32768.0;
        long q = std::lround(v);
        q = std::clamp(q, -32768L, 32767L);
        put_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
    if (!out) {
        throw IoFailure("write failed: " + path.string());
    }
}

}  // namespace gathermos
