#include "fan/audio.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "fan/error.h"

namespace fan {

namespace {

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

std::uint16_t read_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | b[1] << 8);
}

void write_u32(std::ostream& os, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

void write_u16(std::ostream& os, std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    os.write(b, 2);
}

std::string read_tag(std::istream& is) {
    char tag[4];
    is.read(tag, 4);
    return is ? std::string(tag, 4) : std::string();
}

}  // namespace

AudioClip read_wav(const std::string& path) {
    if (!std::filesystem::exists(path)) {
        throw missing_input_error("audio file not found: " + path);
    }
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw missing_input_error("cannot open audio file: " + path);
    }
    if (read_tag(is) != "RIFF") {
        throw parse_error("audio file " + path + ": not a RIFF file");
    }
    read_u32(is);  // riff size, unused
    if (read_tag(is) != "WAVE") {
        throw parse_error("audio file " + path + ": not a WAVE file");
    }

    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
    bool have_fmt = false;
    std::vector<std::int16_t> raw;

    while (is) {
        const std::string tag = read_tag(is);
        if (!is) break;
        const std::uint32_t size = read_u32(is);
        if (!is) {
            throw parse_error("audio file " + path + ": truncated chunk header");
        }
        if (tag == "fmt ") {
            const std::uint16_t format = read_u16(is);
            channels = read_u16(is);
            sample_rate = read_u32(is);
            read_u32(is);  // byte rate
            read_u16(is);  // block align
            bits = read_u16(is);
            if (size > 16) is.seekg(size - 16, std::ios::cur);
            if (format != 1) {
                throw parse_error("audio file " + path + ": only PCM format supported");
            }
            if (bits != 16) {
                throw parse_error("audio file " + path + ": only 16-bit samples supported");
            }
            if (channels == 0 || channels > 2) {
                throw parse_error("audio file " + path + ": unsupported channel count " +
                                  std::to_string(channels));
            }
            have_fmt = true;
        } else if (tag == "data") {
            if (!have_fmt) {
                throw parse_error("audio file " + path + ": data chunk before fmt");
            }
            raw.resize(size / 2);
            is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(size));
            if (static_cast<std::uint32_t>(is.gcount()) != size) {
                throw parse_error("audio file " + path + ": truncated sample data");
            }
            break;
        } else {
            is.seekg(size + (size & 1), std::ios::cur);
        }
    }
    if (!have_fmt || raw.empty()) {
        throw parse_error("audio file " + path + ": missing fmt or data chunk");
    }
    if (sample_rate != 22050 && sample_rate != 44100 && sample_rate != 48000) {
        throw parse_error("audio file " + path + ": unsupported sample rate " +
                          std::to_string(sample_rate));
    }

    AudioClip clip;
    clip.sample_rate = sample_rate;
    if (channels == 1) {
        clip.samples.resize(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) {
            clip.samples[i] = static_cast<float>(raw[i]) / 32768.0f;
        }
    } else {
        clip.samples.resize(raw.size() / 2);
        for (std::size_t i = 0; i < clip.samples.size(); ++i) {
            const float l = static_cast<float>(raw[2 * i]) / 32768.0f;
            const float r = static_cast<float>(raw[2 * i + 1]) / 32768.0f;
            clip.samples[i] = 0.5f * (l + r);
        }
    }
    return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
    if (clip.samples.empty()) {
        throw contract_error("write_wav: empty clip");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error(ErrorClass::generic, "cannot write audio file: " + path);
    }
    const std::uint32_t data_size = static_cast<std::uint32_t>(clip.samples.size() * 2);
    os.write("RIFF", 4);
    write_u32(os, 36 + data_size);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    write_u32(os, 16);
    write_u16(os, 1);  // PCM
    write_u16(os, 1);  // mono
    write_u32(os, static_cast<std::uint32_t>(clip.sample_rate));
    write_u32(os, static_cast<std::uint32_t>(clip.sample_rate * 2));
    write_u16(os, 2);
    write_u16(os, 16);
    os.write("data", 4);
    write_u32(os, data_size);
    for (const float s : clip.samples) {
        const float clamped = std::clamp(s, -1.0f, 1.0f);
        const auto v = static_cast<std::int16_t>(std::lrintf(clamped * 32767.0f));
        write_u16(os, static_cast<std::uint16_t>(v));
    }
    if (!os) {
        throw Error(ErrorClass::generic, "cannot write audio file: " + path);
    }
}

}  // namespace fan
