#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fan/audio.h"
#include "fan/tensor.h"

namespace fan {

// Per-analysis-frame onset strength, unnormalized.
struct OnsetEnvelope {
    std::vector<float> values;
    double hop_seconds = 0.01;
};

// Binary per-video-frame labels on the fps grid.
struct LabelSequence {
    std::vector<std::uint8_t> y;
    double fps = 4.0;
    std::size_t dropped = 0;  // onsets past the segment end

    std::size_t onset_count() const {
        std::size_t n = 0;
        for (const auto v : y) n += v;
        return n;
    }
};

struct OnsetParams {
    std::size_t frame_size = 1024;
    std::size_t hop = 441;
    double pre_max_seconds = 0.03;
    double post_max_seconds = 0.03;
    double delta = 0.3;  // threshold above local mean, on the max-normalized envelope
    double min_separation_seconds = 0.05;
};

// Hann-windowed magnitude spectrogram, (1 + floor((N - frame_size)/hop))
// frames by (frame_size/2 + 1) bins.
Tensor<float> stft_magnitude(const AudioClip& clip, std::size_t frame_size = 1024,
                             std::size_t hop = 441);

// Half-wave rectified positive spectral difference per frame; frame 1 is 0.
OnsetEnvelope spectral_flux(const Tensor<float>& spectrogram, double hop_seconds);

// Local-maximum peak picking on the max-normalized envelope. A frame is an
// onset iff it is the maximum of [t-pre, t+post], exceeds the window mean by
// delta, and lies at least min_separation after the previous accepted onset.
// Returns onset times in seconds.
std::vector<double> pick_peaks(const OnsetEnvelope& env, double pre_max_seconds = 0.03,
                               double post_max_seconds = 0.03, double delta = 0.3,
                               double min_separation_seconds = 0.05);

// Floor-bins onset times to the fps grid; times past T/fps are dropped and
// counted.
LabelSequence rasterize_labels(const std::vector<double>& onset_times, std::size_t t,
                               double fps = 4.0);

// Full pipeline: STFT, flux, peak picking.
std::vector<double> detect_onsets(const AudioClip& clip, const OnsetParams& params = {});

}  // namespace fan
