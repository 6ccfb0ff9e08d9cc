#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "fan/audio.h"
#include "fan/error.h"
#include "fan/onsets.h"
#include "fan/rng.h"

using fan::AudioClip;
using fan::Error;
using fan::ErrorClass;
using fan::OnsetEnvelope;

namespace fs = std::filesystem;

namespace {

AudioClip sine_clip(std::size_t sample_rate, double freq, std::size_t n, float amp = 0.8f) {
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        clip.samples[i] = amp * static_cast<float>(std::sin(
                                    2.0 * std::numbers::pi * freq * static_cast<double>(i) /
                                    static_cast<double>(sample_rate)));
    }
    return clip;
}

void add_click(AudioClip& clip, double time, float amp = 0.9f, std::size_t length = 48) {
    const auto start = static_cast<std::size_t>(time * static_cast<double>(clip.sample_rate));
    for (std::size_t i = 0; i < length && start + i < clip.samples.size(); ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(clip.sample_rate);
        const double decay = std::exp(-static_cast<double>(i) / 16.0);
        clip.samples[start + i] +=
            amp * static_cast<float>(decay * std::sin(2.0 * std::numbers::pi * 2000.0 * t));
    }
}

// Independent application of the three peak rules, mirroring the documented
// semantics directly.
std::vector<double> brute_force_peaks(const OnsetEnvelope& env, double pre_s, double post_s,
                                      double delta, double min_sep) {
    const std::size_t n = env.values.size();
    float mx = 0.0f;
    for (float v : env.values) mx = std::max(mx, v);
    if (mx == 0.0f) return {};
    std::vector<double> norm(n);
    for (std::size_t i = 0; i < n; ++i) norm[i] = env.values[i] / mx;
    const auto frames = [&](double s) {
        return std::max<long long>(1, std::llround(s / env.hop_seconds));
    };
    const long long pre = frames(pre_s), post = frames(post_s);
    std::vector<double> out;
    double last = -1e30;
    for (long long t = 0; t < static_cast<long long>(n); ++t) {
        bool is_max = true;
        double sum = 0.0;
        long long count = 0;
        for (long long i = std::max(0LL, t - pre);
             i <= std::min(static_cast<long long>(n) - 1, t + post); ++i) {
            if (norm[i] > norm[t]) is_max = false;
            sum += norm[i];
            ++count;
        }
        if (!is_max) continue;
        if (norm[t] < sum / static_cast<double>(count) + delta) continue;
        const double time = static_cast<double>(t) * env.hop_seconds;
        if (time - last < min_sep) continue;
        out.push_back(time);
        last = time;
    }
    return out;
}

}  // namespace

TEST_CASE("wav round trip preserves mono pcm16 samples exactly") {
    const fs::path dir = fs::temp_directory_path() / "fan_wav_test";
    fs::create_directories(dir);
    AudioClip clip;
    clip.sample_rate = 44100;
    fan::Rng rng(3);
    clip.samples.resize(2000);
    for (float& s : clip.samples)
        s = static_cast<float>(rng.uniform_int(-32767, 32767)) / 32767.0f;
    const std::string path = (dir / "a.wav").string();
    fan::write_wav(path, clip);
    const AudioClip back = fan::read_wav(path);
    CHECK(back.sample_rate == 44100);
    REQUIRE(back.samples.size() == clip.samples.size());
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        // writer quantizes by 32767, reader divides by 32768
        const auto q = static_cast<std::int16_t>(std::lrintf(clip.samples[i] * 32767.0f));
        CHECK(back.samples[i] == static_cast<float>(q) / 32768.0f);
    }
    fs::remove_all(dir);
}

TEST_CASE("wav reader averages stereo and validates the header") {
    const fs::path dir = fs::temp_directory_path() / "fan_wav_stereo";
    fs::create_directories(dir);
    const std::string path = (dir / "st.wav").string();
    {
        // hand-built 2-channel file with samples L=1000,R=3000 then L=-2000,R=0
        std::ofstream os(path, std::ios::binary);
        auto u32 = [&os](std::uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
        auto u16 = [&os](std::uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
        os.write("RIFF", 4);
        u32(36 + 8);
        os.write("WAVE", 4);
        os.write("fmt ", 4);
        u32(16);
        u16(1);
        u16(2);
        u32(22050);
        u32(22050 * 4);
        u16(4);
        u16(16);
        os.write("data", 4);
        u32(8);
        u16(1000);
        u16(3000);
        u16(static_cast<std::uint16_t>(-2000));
        u16(0);
    }
    const AudioClip clip = fan::read_wav(path);
    CHECK(clip.sample_rate == 22050);
    REQUIRE(clip.samples.size() == 2);
    CHECK(clip.samples[0] == doctest::Approx(2000.0f / 32768.0f));
    CHECK(clip.samples[1] == doctest::Approx(-1000.0f / 32768.0f));

    try {
        fan::read_wav((dir / "missing.wav").string());
        FAIL("expected missing input");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::missing_input);
    }
    {
        std::ofstream os(dir / "bad.wav", std::ios::binary);
        os << "NOT A WAV FILE AT ALL";
    }
    try {
        fan::read_wav((dir / "bad.wav").string());
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::parse);
    }
    fs::remove_all(dir);
}

TEST_CASE("stft of digital silence is all zero with the framing arithmetic") {
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.assign(1024 + 441 * 3, 0.0f);
    const auto spec = fan::stft_magnitude(clip, 1024, 441);
    CHECK(spec.dim(0) == 4);
    CHECK(spec.dim(1) == 513);
    for (std::size_t i = 0; i < spec.numel(); ++i) CHECK(spec[i] == 0.0f);
}

TEST_CASE("stft rejects short clips and bad parameters") {
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.assign(1000, 0.0f);
    CHECK_THROWS_AS(fan::stft_magnitude(clip, 1024, 441), Error);
    clip.samples.assign(4096, 0.0f);
    CHECK_THROWS_AS(fan::stft_magnitude(clip, 1000, 441), Error);  // not a power of two
    CHECK_THROWS_AS(fan::stft_magnitude(clip, 1024, 0), Error);
    CHECK_THROWS_AS(fan::stft_magnitude(clip, 1024, 2048), Error);
}

TEST_CASE("stft concentrates a bin-centered sine around its bin") {
    const std::size_t sr = 44100, frame = 1024, hop = 441, bin = 64;
    const double freq = static_cast<double>(bin * sr) / static_cast<double>(frame);
    const AudioClip clip = sine_clip(sr, freq, frame + hop * 5);
    const auto spec = fan::stft_magnitude(clip, frame, hop);
    for (std::size_t f = 0; f < spec.dim(0); ++f) {
        double total = 0.0, at_bin = 0.0, near = 0.0;
        std::size_t argmax = 0;
        for (std::size_t b = 0; b < spec.dim(1); ++b) {
            const double e = static_cast<double>(spec.at2(f, b)) * spec.at2(f, b);
            total += e;
            if (b == bin) at_bin = e;
            if (b + 1 >= bin && b <= bin + 1) near += e;
            if (spec.at2(f, b) > spec.at2(f, argmax)) argmax = b;
        }
        CHECK(argmax == bin);
        // Hann leakage puts about a third of the energy into the two
        // neighbors; together the three bins carry essentially everything
        CHECK(at_bin / total > 0.6);
        CHECK(near / total > 0.99);
    }
}

TEST_CASE("stft and flux scale exactly with a power-of-two amplitude factor") {
    const AudioClip full = sine_clip(22050, 440.0, 22050 / 2, 0.8f);
    AudioClip half = full;
    for (float& s : half.samples) s *= 0.5f;
    const auto spec_full = fan::stft_magnitude(full, 1024, 441);
    const auto spec_half = fan::stft_magnitude(half, 1024, 441);
    REQUIRE(spec_full.dims() == spec_half.dims());
    for (std::size_t i = 0; i < spec_full.numel(); ++i)
        CHECK(spec_half[i] == 0.5f * spec_full[i]);

    const auto env_full = fan::spectral_flux(spec_full, 0.02);
    const auto env_half = fan::spectral_flux(spec_half, 0.02);
    for (std::size_t i = 0; i < env_full.values.size(); ++i)
        CHECK(env_half.values[i] == 0.5f * env_full.values[i]);
}

TEST_CASE("spectral flux is zero on silence and nonnegative always") {
    fan::Tensor<float> silent({5, 9});
    const auto env = fan::spectral_flux(silent, 0.01);
    CHECK(env.values.size() == 5);
    for (float v : env.values) CHECK(v == 0.0f);

    fan::Rng rng(4);
    fan::Tensor<float> spec({8, 12});
    for (std::size_t i = 0; i < spec.numel(); ++i)
        spec[i] = static_cast<float>(rng.uniform(0.0, 3.0));
    const auto env2 = fan::spectral_flux(spec, 0.01);
    CHECK(env2.values[0] == 0.0f);
    for (float v : env2.values) CHECK(v >= 0.0f);

    fan::Tensor<float> one({1, 4});
    CHECK_THROWS_AS(fan::spectral_flux(one, 0.01), Error);
}

TEST_CASE("sustained tone decays to near zero flux after its attack") {
    const std::size_t sr = 22050;
    AudioClip clip;
    clip.sample_rate = sr;
    clip.samples.assign(2000, 0.0f);
    const AudioClip tone = sine_clip(sr, 441.0, sr);
    clip.samples.insert(clip.samples.end(), tone.samples.begin(), tone.samples.end());
    const auto spec = fan::stft_magnitude(clip, 1024, 441);
    const auto env = fan::spectral_flux(spec, 441.0 / sr);
    std::size_t attack = 0;
    for (std::size_t i = 0; i < env.values.size(); ++i)
        if (env.values[i] > env.values[attack]) attack = i;
    // the attack must be where the tone enters
    CHECK(attack >= 2);
    CHECK(attack <= 5);
    for (std::size_t i = attack + 3; i < env.values.size(); ++i)
        CHECK(env.values[i] <= 0.01f * env.values[attack]);
}

TEST_CASE("a single click produces the global flux maximum at its frame") {
    const std::size_t sr = 22050;
    AudioClip clip;
    clip.sample_rate = sr;
    clip.samples.assign(sr, 0.0f);
    add_click(clip, 8000.0 / sr);
    const auto spec = fan::stft_magnitude(clip, 1024, 441);
    const auto env = fan::spectral_flux(spec, 441.0 / sr);
    std::size_t argmax = 0;
    for (std::size_t i = 0; i < env.values.size(); ++i)
        if (env.values[i] > env.values[argmax]) argmax = i;
    // the peak frame's window must contain the click sample
    CHECK(argmax * 441 <= 8000);
    CHECK(argmax * 441 + 1024 > 8000);
}

TEST_CASE("peak picking finds an isolated peak and respects monotone input") {
    OnsetEnvelope env;
    env.hop_seconds = 0.01;
    env.values = {0.0f, 1.0f, 0.0f};
    const auto onsets = fan::pick_peaks(env, 0.01, 0.01, 0.5, 0.01);
    REQUIRE(onsets.size() == 1);
    CHECK(onsets[0] == doctest::Approx(0.01));

    OnsetEnvelope rising;
    rising.hop_seconds = 0.01;
    rising.values = {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f};
    const auto tail = fan::pick_peaks(rising, 0.01, 0.01, 0.05, 0.01);
    for (const double t : tail) {
        CHECK(t == doctest::Approx(0.07));
    }
    CHECK(tail.size() <= 1);
}

TEST_CASE("peak picking matches the brute force rule oracle") {
    fan::Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        OnsetEnvelope env;
        env.hop_seconds = 0.01;
        env.values.resize(120);
        for (float& v : env.values) v = static_cast<float>(rng.uniform(0.0, 1.0));
        // sprinkle real spikes
        for (int s = 0; s < 6; ++s)
            env.values[static_cast<std::size_t>(rng.uniform_int(0, 119))] +=
                static_cast<float>(rng.uniform(1.0, 3.0));
        const double pre = 0.03, post = 0.03, delta = 0.3, sep = 0.05;
        const auto got = fan::pick_peaks(env, pre, post, delta, sep);
        const auto expect = brute_force_peaks(env, pre, post, delta, sep);
        CHECK(got == expect);
    }
}

TEST_CASE("peak picking output is sorted with the minimum separation") {
    fan::Rng rng(6);
    OnsetEnvelope env;
    env.hop_seconds = 0.005;
    env.values.resize(400);
    for (float& v : env.values) v = static_cast<float>(rng.uniform(0.0, 0.2));
    for (int s = 0; s < 40; ++s)
        env.values[static_cast<std::size_t>(rng.uniform_int(0, 399))] +=
            static_cast<float>(rng.uniform(0.5, 2.0));
    const double sep = 0.05;
    const auto onsets = fan::pick_peaks(env, 0.01, 0.01, 0.2, sep);
    for (std::size_t i = 1; i < onsets.size(); ++i) {
        CHECK(onsets[i] > onsets[i - 1]);
        CHECK(onsets[i] - onsets[i - 1] >= sep - 1e-12);
    }
    CHECK_THROWS_AS(fan::pick_peaks(env, 0.0, 0.01, 0.2, sep), Error);
}

TEST_CASE("rasterization floor-bins times onto the frame grid") {
    const auto labels = fan::rasterize_labels({0.30}, 8, 4.0);
    REQUIRE(labels.y.size() == 8);
    CHECK(labels.y[1] == 1);
    CHECK(labels.onset_count() == 1);

    const auto dup = fan::rasterize_labels({0.00, 0.10}, 8, 4.0);
    CHECK(dup.y[0] == 1);
    CHECK(dup.onset_count() == 1);

    const auto empty = fan::rasterize_labels({}, 8, 4.0);
    CHECK(empty.onset_count() == 0);

    const auto over = fan::rasterize_labels({0.1, 1.9, 2.0, 5.0}, 8, 4.0);
    CHECK(over.dropped == 2);  // 2.0 s is exactly T/fps and 5.0 s is past it
    CHECK(over.onset_count() == 2);

    CHECK_THROWS_AS(fan::rasterize_labels({-0.5}, 8, 4.0), Error);
}

TEST_CASE("click track onsets are recovered within one frame end to end") {
    const std::size_t sr = 22050;
    const std::vector<double> clicks{0.35, 0.85, 1.6, 2.1, 2.85, 3.6};
    AudioClip clip;
    clip.sample_rate = sr;
    clip.samples.assign(4 * sr, 0.0f);
    for (const double t : clicks) add_click(clip, t);

    const auto onsets = fan::detect_onsets(clip);
    REQUIRE(onsets.size() == clicks.size());

    const auto truth = fan::rasterize_labels(clicks, 16, 4.0);
    const auto detected = fan::rasterize_labels(onsets, 16, 4.0);
    CHECK(truth.y == detected.y);  // frame-level F1 of 1.0
}
