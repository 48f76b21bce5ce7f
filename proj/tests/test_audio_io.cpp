#include "gathermos/audio_io.hpp"

#include <cmath>

#include "doctest.h"
#include "gathermos/errors.hpp"
#include "support/temp_dir.hpp"
#include "support/wav_builder.hpp"

using namespace gathermos;
using wavbuild::wav_bytes;
using wavbuild::write_bytes;

TEST_CASE("pcm16 write/load round trip") {
    testutil::TempDir dir;
    std::vector<double> samples;
    for (int i = 0; i < 800; ++i) samples.push_back(0.6 * std::sin(2.0 * 3.141592653589793 * 440.0 * i / 16000.0));
    const auto path = dir.file("tone.wav");
    write_wav_pcm16(path, samples, 16000);

    const Waveform w = load_wav(path);
    REQUIRE(w.samples.size() == samples.size());
    CHECK(w.sample_rate == 16000);
    CHECK(w.source_id == "tone");
    for (std::size_t i = 0; i < samples.size(); ++i)
        CHECK(std::abs(w.samples[i] - samples[i]) <= 1.0 / 32768.0);
    CHECK(duration_seconds(w) == doctest::Approx(0.05));
}

TEST_CASE("integer scaling uses the full negative code") {
    testutil::TempDir dir;

    SUBCASE("16-bit") {
        const auto p = dir.file("a.wav");
        write_bytes(p, wav_bytes(1, 1, 8000, 16, wavbuild::pcm16({16384, -32768, 0})));
        const Waveform w = load_wav(p);
        REQUIRE(w.samples.size() == 3);
        CHECK(w.samples[0] == 0.5);
        CHECK(w.samples[1] == -1.0);
        CHECK(w.samples[2] == 0.0);
    }
    SUBCASE("8-bit is unsigned with midpoint 128") {
        const auto p = dir.file("b.wav");
        write_bytes(p, wav_bytes(1, 1, 8000, 8, wavbuild::pcm8({128, 0, 255})));
        const Waveform w = load_wav(p);
        CHECK(w.samples[0] == 0.0);
        CHECK(w.samples[1] == -1.0);
        CHECK(w.samples[2] == 127.0 / 128.0);
    }
    SUBCASE("24-bit") {
        const auto p = dir.file("c.wav");
        write_bytes(p, wav_bytes(1, 1, 8000, 24, wavbuild::pcm24({4194304, -8388608, 8388607})));
        const Waveform w = load_wav(p);
        CHECK(w.samples[0] == 0.5);
        CHECK(w.samples[1] == -1.0);
        CHECK(w.samples[2] == 8388607.0 / 8388608.0);
    }
    SUBCASE("32-bit") {
        const auto p = dir.file("d.wav");
        write_bytes(p, wav_bytes(1, 1, 8000, 32,
                                 wavbuild::pcm32({1073741824LL, -2147483648LL})));
        const Waveform w = load_wav(p);
        CHECK(w.samples[0] == 0.5);
        CHECK(w.samples[1] == -1.0);
    }
}

TEST_CASE("float32 samples load exactly and clamp out-of-range values") {
    testutil::TempDir dir;
    const auto p = dir.file("f.wav");
    write_bytes(p, wav_bytes(3, 1, 8000, 32,
                             wavbuild::float32({0.5f, -0.25f, 1.5f, -3.0f,
                                                std::nanf("")})));
    LoadInfo info;
    const Waveform w = load_wav(p, &info);
    REQUIRE(w.samples.size() == 5);
    CHECK(w.samples[0] == 0.5);
    CHECK(w.samples[1] == -0.25);
    CHECK(w.samples[2] == 1.0);
    CHECK(w.samples[3] == -1.0);
    CHECK(w.samples[4] == 0.0);
    CHECK(info.clamped_samples == 3);
}

TEST_CASE("stereo is downmixed by per-frame averaging") {
    testutil::TempDir dir;
    const auto p = dir.file("st.wav");
    // Frames: (0.5, -0.5) and (0.25, 0.75) in 16-bit codes.
    write_bytes(p, wav_bytes(1, 2, 8000, 16, wavbuild::pcm16({16384, -16384, 8192, 24576})));
    const Waveform w = load_wav(p);
    REQUIRE(w.samples.size() == 2);
    CHECK(w.samples[0] == 0.0);
    CHECK(w.samples[1] == 0.5);
}

TEST_CASE("trailing bytes short of a full frame are dropped") {
    testutil::TempDir dir;
    const auto p = dir.file("ragged.wav");
    std::string data = wavbuild::pcm16({1000, 2000});
    data += wavbuild::pcm16({3000}).substr(0, 1);  // half a stereo frame
    write_bytes(p, wav_bytes(1, 2, 8000, 16, data));
    const Waveform w = load_wav(p);
    CHECK(w.samples.size() == 1);  // one complete stereo frame
}

TEST_CASE("unknown chunks are skipped with word alignment") {
    testutil::TempDir dir;
    for (std::size_t junk : {4u, 7u}) {  // even and odd payloads
        const auto p = dir.file("junk.wav");
        write_bytes(p, wavbuild::wav_bytes_with_junk(1, 1, 8000, 16,
                                                     wavbuild::pcm16({100, -100}), junk));
        const Waveform w = load_wav(p);
        CHECK(w.samples.size() == 2);
    }
}

TEST_CASE("malformed containers are rejected") {
    testutil::TempDir dir;
    const auto p = dir.file("bad.wav");

    SUBCASE("wrong magic") {
        write_bytes(p, "RIFXxxxxWAVE");
        CHECK_THROWS_AS(load_wav(p), MalformedContainer);
    }
    SUBCASE("truncated header") {
        write_bytes(p, "RIFF\x10");
        CHECK_THROWS_AS(load_wav(p), MalformedContainer);
    }
    SUBCASE("missing data chunk") {
        std::string bytes = wav_bytes(1, 1, 8000, 16, wavbuild::pcm16({1}));
        // Keep RIFF+fmt only: drop from the "data" tag onward.
        bytes.resize(bytes.find("data"));
        write_bytes(p, bytes);
        CHECK_THROWS_AS(load_wav(p), MalformedContainer);
    }
    SUBCASE("chunk size pointing past the file end") {
        std::string bytes = wav_bytes(1, 1, 8000, 16, wavbuild::pcm16({1, 2, 3, 4}));
        bytes.resize(bytes.size() - 4);  // data chunk now lies about its extent
        write_bytes(p, bytes);
        CHECK_THROWS_AS(load_wav(p), MalformedContainer);
    }
    SUBCASE("fmt after data is still missing at data time") {
        std::string chunks;
        chunks += "data";
        wavbuild::put_u32(chunks, 2);
        chunks += wavbuild::pcm16({7});
        std::string bytes = "RIFF";
        wavbuild::put_u32(bytes, static_cast<std::uint32_t>(4 + chunks.size()));
        bytes += "WAVE";
        bytes += chunks;
        write_bytes(p, bytes);
        CHECK_THROWS_AS(load_wav(p), MalformedContainer);
    }
}

TEST_CASE("unsupported encodings are named, not misread") {
    testutil::TempDir dir;
    const auto p = dir.file("enc.wav");

    SUBCASE("ADPCM format tag") {
        write_bytes(p, wav_bytes(2, 1, 8000, 4, std::string(8, '\x11')));
        CHECK_THROWS_AS(load_wav(p), UnsupportedEncoding);
    }
    SUBCASE("12-bit PCM") {
        write_bytes(p, wav_bytes(1, 1, 8000, 12, std::string(6, '\x22')));
        CHECK_THROWS_AS(load_wav(p), UnsupportedEncoding);
    }
    SUBCASE("64-bit float") {
        write_bytes(p, wav_bytes(3, 1, 8000, 64, std::string(16, '\x33')));
        CHECK_THROWS_AS(load_wav(p), UnsupportedEncoding);
    }
}

TEST_CASE("zero-length audio raises EmptyAudio") {
    testutil::TempDir dir;
    const auto p = dir.file("empty.wav");
    write_bytes(p, wav_bytes(1, 1, 8000, 16, ""));
    CHECK_THROWS_AS(load_wav(p), EmptyAudio);
}

TEST_CASE("missing file raises IoFailure") {
    CHECK_THROWS_AS(load_wav("/nonexistent/nowhere.wav"), IoFailure);
}
