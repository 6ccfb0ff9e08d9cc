#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fan {

// Mono audio in [-1,1].
struct AudioClip {
    std::vector<float> samples;
    std::size_t sample_rate = 44100;

    double duration_seconds() const {
        return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
    }
};

// Reads 16-bit PCM WAV; stereo is averaged to mono. Accepted rates:
// 22050, 44100, 48000.
AudioClip read_wav(const std::string& path);

// Writes mono 16-bit PCM WAV.
void write_wav(const std::string& path, const AudioClip& clip);

}  // namespace fan
