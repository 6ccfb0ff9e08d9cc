#include "fan/onsets.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fan/error.h"

namespace fan {

Tensor<float> stft_magnitude(const AudioClip& clip, std::size_t frame_size, std::size_t hop) {
    if (frame_size == 0 || (frame_size & (frame_size - 1)) != 0) {
        throw contract_error("stft_magnitude: frame_size must be a power of two");
    }
    if (hop == 0 || hop > frame_size) {
        throw contract_error("stft_magnitude: hop must be in (0, frame_size]");
    }
    if (clip.samples.size() < frame_size) {
        throw contract_error("stft_magnitude: clip shorter than one frame (" +
                             std::to_string(clip.samples.size()) + " < " +
                             std::to_string(frame_size) + " samples)");
    }
    const std::size_t frames = 1 + (clip.samples.size() - frame_size) / hop;
    const std::size_t bins = frame_size / 2 + 1;

    std::vector<double> window(frame_size);
    for (std::size_t i = 0; i < frame_size; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                         static_cast<double>(frame_size));
    }

    double* in = fftw_alloc_real(frame_size);
    fftw_complex* out = fftw_alloc_complex(bins);
    fftw_plan plan =
        fftw_plan_dft_r2c_1d(static_cast<int>(frame_size), in, out, FFTW_ESTIMATE);
    if (!plan) {
        fftw_free(in);
        fftw_free(out);
        throw numeric_error("stft_magnitude: cannot create FFT plan");
    }

    Tensor<float> spec({frames, bins});
    for (std::size_t f = 0; f < frames; ++f) {
        const float* src = clip.samples.data() + f * hop;
        for (std::size_t i = 0; i < frame_size; ++i) {
            in[i] = static_cast<double>(src[i]) * window[i];
        }
        fftw_execute(plan);
        for (std::size_t b = 0; b < bins; ++b) {
            spec.at2(f, b) = static_cast<float>(std::sqrt(out[b][0] * out[b][0] +
                                                          out[b][1] * out[b][1]));
        }
    }
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
    return spec;
}

OnsetEnvelope spectral_flux(const Tensor<float>& spectrogram, double hop_seconds) {
    if (spectrogram.rank() != 2 || spectrogram.dim(0) < 2) {
        throw contract_error("spectral_flux: need a spectrogram with at least 2 frames");
    }
    if (hop_seconds <= 0.0) {
        throw contract_error("spectral_flux: hop_seconds must be positive");
    }
    const std::size_t frames = spectrogram.dim(0);
    const std::size_t bins = spectrogram.dim(1);
    OnsetEnvelope env;
    env.hop_seconds = hop_seconds;
    env.values.assign(frames, 0.0f);
    for (std::size_t f = 1; f < frames; ++f) {
        float acc = 0.0f;
        for (std::size_t b = 0; b < bins; ++b) {
            const float diff = spectrogram.at2(f, b) - spectrogram.at2(f - 1, b);
            if (diff > 0.0f) acc += diff;
        }
        env.values[f] = acc;
    }
    return env;
}

std::vector<double> pick_peaks(const OnsetEnvelope& env, double pre_max_seconds,
                               double post_max_seconds, double delta,
                               double min_separation_seconds) {
    if (pre_max_seconds <= 0.0 || post_max_seconds <= 0.0 || delta <= 0.0 ||
        min_separation_seconds <= 0.0) {
        throw contract_error("pick_peaks: parameters must be positive");
    }
    const std::size_t n = env.values.size();
    if (n == 0) {
        return {};
    }
    float max_value = 0.0f;
    for (const float v : env.values) {
        if (!(v >= 0.0f) || !std::isfinite(v)) {
            throw numeric_error("pick_peaks: envelope must be finite and nonnegative");
        }
        max_value = std::max(max_value, v);
    }
    if (max_value == 0.0f) {
        return {};
    }
    std::vector<double> norm(n);
    for (std::size_t i = 0; i < n; ++i) {
        norm[i] = static_cast<double>(env.values[i]) / static_cast<double>(max_value);
    }
    const auto to_frames = [&env](double seconds) {
        return std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(seconds / env.hop_seconds)));
    };
    const std::size_t pre = to_frames(pre_max_seconds);
    const std::size_t post = to_frames(post_max_seconds);

    std::vector<double> onsets;
    double last_time = -1e30;
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t lo = t >= pre ? t - pre : 0;
        const std::size_t hi = std::min(n - 1, t + post);
        double window_max = norm[lo];
        double window_sum = 0.0;
        for (std::size_t i = lo; i <= hi; ++i) {
            window_max = std::max(window_max, norm[i]);
            window_sum += norm[i];
        }
        const double mean = window_sum / static_cast<double>(hi - lo + 1);
        if (norm[t] < window_max) continue;
        if (norm[t] < mean + delta) continue;
        const double time = static_cast<double>(t) * env.hop_seconds;
        if (time - last_time < min_separation_seconds) continue;
        onsets.push_back(time);
        last_time = time;
    }
    return onsets;
}

LabelSequence rasterize_labels(const std::vector<double>& onset_times, std::size_t t,
                               double fps) {
    if (t == 0 || fps <= 0.0) {
        throw contract_error("rasterize_labels: T and fps must be positive");
    }
    LabelSequence labels;
    labels.fps = fps;
    labels.y.assign(t, 0);
    for (const double time : onset_times) {
        if (time < 0.0) {
            throw contract_error("rasterize_labels: negative onset time");
        }
        const auto idx = static_cast<std::size_t>(time * fps);
        if (idx >= t) {
            labels.dropped += 1;
            continue;
        }
        labels.y[idx] = 1;
    }
    return labels;
}

std::vector<double> detect_onsets(const AudioClip& clip, const OnsetParams& params) {
    const Tensor<float> spec = stft_magnitude(clip, params.frame_size, params.hop);
    const double hop_seconds =
        static_cast<double>(params.hop) / static_cast<double>(clip.sample_rate);
    const OnsetEnvelope env = spectral_flux(spec, hop_seconds);
    return pick_peaks(env, params.pre_max_seconds, params.post_max_seconds, params.delta,
                      params.min_separation_seconds);
}

}  // namespace fan
