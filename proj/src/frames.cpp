#include "fan/frames.h"

#include <cstdio>
#include <filesystem>
#include <regex>

#include "fan/error.h"
#include "fan/image.h"

namespace fan {

namespace {

std::string frame_name(std::size_t index, const std::string& extension) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05zu", index);
    return std::string(buf) + extension;
}

}  // namespace

FrameSequence load_frame_sequence(const std::string& directory, std::size_t expected_t,
                                  std::size_t target_h, std::size_t target_w, double fps) {
    namespace fs = std::filesystem;
    if (expected_t == 0 || target_h == 0 || target_w == 0) {
        throw contract_error("load_frame_sequence: expected_t, H and W must be positive");
    }
    if (fps <= 0.0) {
        throw contract_error("load_frame_sequence: fps must be positive");
    }
    if (!fs::is_directory(directory)) {
        throw missing_input_error("frame directory not found: " + directory);
    }
    static const std::regex kFramePattern(R"(frame_\d{5}\.(png|ppm))");
    std::size_t present = 0;
    for (const auto& entry : fs::directory_iterator(directory)) {
        if (std::regex_match(entry.path().filename().string(), kFramePattern)) ++present;
    }
    if (present != expected_t) {
        throw contract_error("frame count mismatch in " + directory + ": expected " +
                             std::to_string(expected_t) + ", found " + std::to_string(present));
    }

    FrameSequence seq;
    seq.t = expected_t;
    seq.height = target_h;
    seq.width = target_w;
    seq.fps = fps;
    seq.frames = Tensor<float>({expected_t, target_h, target_w, 3});
    for (std::size_t i = 1; i <= expected_t; ++i) {
        fs::path path = fs::path(directory) / frame_name(i, ".png");
        if (!fs::exists(path)) {
            path = fs::path(directory) / frame_name(i, ".ppm");
        }
        if (!fs::exists(path)) {
            throw contract_error("frame count mismatch in " + directory + ": missing " +
                                 frame_name(i, ".png"));
        }
        Image img = read_image(path.string());
        if (img.height != target_h || img.width != target_w) {
            img = resize_bilinear(img, target_h, target_w);
        }
        float* dst = seq.frames.data() + (i - 1) * target_h * target_w * 3;
        for (std::size_t p = 0; p < img.rgb.size(); ++p) dst[p] = img.rgb[p];
    }
    return seq;
}

void write_frame_sequence(const std::string& directory, const FrameSequence& seq,
                          const std::string& extension) {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    for (std::size_t i = 0; i < seq.t; ++i) {
        Image img(seq.height, seq.width);
        const float* src = seq.frames.data() + i * seq.height * seq.width * 3;
        for (std::size_t p = 0; p < img.rgb.size(); ++p) img.rgb[p] = src[p];
        write_image((fs::path(directory) / frame_name(i + 1, extension)).string(), img);
    }
}

}  // namespace fan
