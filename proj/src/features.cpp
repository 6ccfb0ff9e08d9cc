#include "fan/features.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "fan/error.h"
#include "fan/kernels.h"

namespace fan {

const char* group_name(GroupId id) {
    switch (id) {
        case GroupId::frames: return "frames";
        case GroupId::residuals: return "residuals";
        case GroupId::optical_flow: return "optical_flow";
        case GroupId::scene_change: return "scene_change";
        case GroupId::body_pose: return "body_pose";
    }
    throw contract_error("group_name: bad group id");
}

GroupId group_from_name(const std::string& name) {
    if (name == "frames") return GroupId::frames;
    if (name == "residuals") return GroupId::residuals;
    if (name == "optical_flow") return GroupId::optical_flow;
    if (name == "scene_change") return GroupId::scene_change;
    if (name == "body_pose") return GroupId::body_pose;
    throw parse_error("unknown feature group: " + name);
}

namespace {

void require_frames(const FrameSequence& seq, const char* where) {
    if (seq.t < 2) {
        throw contract_error(std::string(where) + ": needs at least 2 frames, got " +
                             std::to_string(seq.t));
    }
}

}  // namespace

FeatureStream frames_stream(const FrameSequence& seq) {
    if (seq.t == 0) {
        throw contract_error("frames_stream: empty sequence");
    }
    const std::size_t plane = seq.height * seq.width;
    FeatureStream out;
    out.group = GroupId::frames;
    out.channels = 3;
    out.height = seq.height;
    out.width = seq.width;
    out.values = Tensor<float>({seq.t, 3 * plane});
    for (std::size_t t = 0; t < seq.t; ++t) {
        float* row = out.values.data() + t * 3 * plane;
        for (std::size_t y = 0; y < seq.height; ++y) {
            for (std::size_t x = 0; x < seq.width; ++x) {
                for (std::size_t c = 0; c < 3; ++c) {
                    row[c * plane + y * seq.width + x] = seq.at(t, y, x, c);
                }
            }
        }
    }
    return out;
}

FeatureStream frame_residuals(const FrameSequence& seq) {
    require_frames(seq, "frame_residuals");
    const std::size_t plane = seq.height * seq.width;
    FeatureStream out;
    out.group = GroupId::residuals;
    out.channels = 3;
    out.height = seq.height;
    out.width = seq.width;
    out.values = Tensor<float>({seq.t, 3 * plane});
    // step 0 stays zero
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t t = 1; t < static_cast<std::ptrdiff_t>(seq.t); ++t) {
        float* row = out.values.data() + static_cast<std::size_t>(t) * 3 * plane;
        for (std::size_t y = 0; y < seq.height; ++y) {
            for (std::size_t x = 0; x < seq.width; ++x) {
                for (std::size_t c = 0; c < 3; ++c) {
                    row[c * plane + y * seq.width + x] =
                        seq.at(static_cast<std::size_t>(t), y, x, c) -
                        seq.at(static_cast<std::size_t>(t) - 1, y, x, c);
                }
            }
        }
    }
    return out;
}

FeatureStream lucas_kanade_flow(const FrameSequence& seq, std::size_t window, float tau_eig) {
    require_frames(seq, "lucas_kanade_flow");
    if (window < 3 || window % 2 == 0) {
        throw contract_error("lucas_kanade_flow: window must be odd and >= 3, got " +
                             std::to_string(window));
    }
    const std::size_t plane = seq.height * seq.width;
    FeatureStream out;
    out.group = GroupId::optical_flow;
    out.channels = 2;
    out.height = seq.height;
    out.width = seq.width;
    out.values = Tensor<float>({seq.t, 2 * plane});

    std::vector<float> lum(seq.t * plane);
    for (std::size_t t = 0; t < seq.t; ++t) {
        for (std::size_t p = 0; p < plane; ++p) {
            const float* px = seq.frames.data() + (t * plane + p) * 3;
            lum[t * plane + p] = (px[0] + px[1] + px[2]) / 3.0f;
        }
    }
    // step 0 stays zero; the pixel loop inside the kernel is the parallel part
    for (std::size_t t = 1; t < seq.t; ++t) {
        float* row = out.values.data() + t * 2 * plane;
        kernels::lk_flow_field(lum.data() + (t - 1) * plane, lum.data() + t * plane, seq.height,
                               seq.width, window, tau_eig, row, row + plane);
    }
    return out;
}

FeatureStream scene_change_features(const FrameSequence& seq, std::size_t bins_per_channel) {
    require_frames(seq, "scene_change_features");
    if (bins_per_channel < 2) {
        throw contract_error("scene_change_features: need at least 2 bins per channel");
    }
    const std::size_t b = bins_per_channel;
    const std::size_t total_bins = b * b * b;
    const std::size_t plane = seq.height * seq.width;
    const double pixel_mass = 1.0 / static_cast<double>(plane);

    std::vector<double> hist(seq.t * total_bins, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(seq.t); ++t) {
        double* h = hist.data() + static_cast<std::size_t>(t) * total_bins;
        for (std::size_t p = 0; p < plane; ++p) {
            const float* px = seq.frames.data() + (static_cast<std::size_t>(t) * plane + p) * 3;
            std::size_t idx = 0;
            for (std::size_t c = 0; c < 3; ++c) {
                const std::size_t bin = std::min(
                    b - 1, static_cast<std::size_t>(static_cast<double>(px[c]) * b));
                idx = idx * b + bin;
            }
            h[idx] += pixel_mass;
        }
    }

    FeatureStream out;
    out.group = GroupId::scene_change;
    out.values = Tensor<float>({seq.t, 3});
    std::vector<double> nonzero(seq.t);
    for (std::size_t t = 0; t < seq.t; ++t) {
        std::size_t count = 0;
        for (std::size_t i = 0; i < total_bins; ++i) {
            if (hist[t * total_bins + i] > 0.0) ++count;
        }
        nonzero[t] = static_cast<double>(count) / static_cast<double>(total_bins);
    }
    for (std::size_t t = 0; t < seq.t; ++t) {
        double dist = 0.0;
        if (t > 0) {
            for (std::size_t i = 0; i < total_bins; ++i) {
                dist += std::abs(hist[t * total_bins + i] - hist[(t - 1) * total_bins + i]);
            }
        }
        out.values.at2(t, 0) = static_cast<float>(dist);
        out.values.at2(t, 1) = static_cast<float>(nonzero[t]);
        out.values.at2(t, 2) = t > 0 ? static_cast<float>(nonzero[t] - nonzero[t - 1]) : 0.0f;
    }
    return out;
}

FeatureStream load_pose_keypoints(const std::string& path, std::size_t expected_t,
                                  std::size_t width, std::size_t height,
                                  std::size_t expected_k) {
    if (expected_t == 0 || width == 0 || height == 0) {
        throw contract_error("load_pose_keypoints: T, W, H must be positive");
    }
    if (!std::filesystem::exists(path)) {
        throw missing_input_error("pose file not found: " + path);
    }
    std::ifstream is(path);
    nlohmann::json doc;
    try {
        is >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("pose file " + path + ": " + e.what());
    }
    if (!doc.is_array()) {
        throw parse_error("pose file " + path + ": top level must be an array of frames");
    }
    if (doc.size() != expected_t) {
        throw contract_error("pose file " + path + ": frame count mismatch, expected " +
                             std::to_string(expected_t) + ", found " +
                             std::to_string(doc.size()));
    }

    std::size_t k = expected_k;
    if (k == 0) {
        for (const auto& frame : doc) {
            if (frame.is_array() && !frame.empty()) {
                k = frame.size();
                break;
            }
        }
    }
    if (k == 0) {
        throw contract_error("pose file " + path +
                             ": cannot infer keypoint count from empty detections; pass K");
    }

    FeatureStream out;
    out.group = GroupId::body_pose;
    out.values = Tensor<float>({expected_t, 3 * k});
    for (std::size_t t = 0; t < expected_t; ++t) {
        const auto& frame = doc[t];
        if (!frame.is_array()) {
            throw parse_error("pose file " + path + ": frame " + std::to_string(t + 1) +
                              " is not an array");
        }
        if (frame.empty()) {
            continue;  // no detection, row stays zero
        }
        if (frame.size() != k) {
            throw contract_error("pose file " + path + ": frame " + std::to_string(t + 1) +
                                 " has " + std::to_string(frame.size()) + " keypoints, expected " +
                                 std::to_string(k));
        }
        for (std::size_t j = 0; j < k; ++j) {
            const auto& kp = frame[j];
            if (!kp.is_array() || kp.size() != 3 || !kp[0].is_number() || !kp[1].is_number() ||
                !kp[2].is_number()) {
                throw parse_error("pose file " + path + ": frame " + std::to_string(t + 1) +
                                  " keypoint " + std::to_string(j + 1) +
                                  " must be [x, y, confidence]");
            }
            const double x = kp[0].get<double>();
            const double y = kp[1].get<double>();
            const double conf = kp[2].get<double>();
            if (x < 0.0 || x >= static_cast<double>(width) || y < 0.0 ||
                y >= static_cast<double>(height)) {
                throw contract_error("pose file " + path + ": frame " + std::to_string(t + 1) +
                                     " keypoint out of bounds (" + std::to_string(x) + ", " +
                                     std::to_string(y) + ")");
            }
            if (conf < 0.0 || conf > 1.0) {
                throw contract_error("pose file " + path + ": frame " + std::to_string(t + 1) +
                                     " confidence outside [0,1]");
            }
            out.values.at2(t, 3 * j + 0) = static_cast<float>(x / static_cast<double>(width));
            out.values.at2(t, 3 * j + 1) = static_cast<float>(y / static_cast<double>(height));
            out.values.at2(t, 3 * j + 2) = static_cast<float>(conf);
        }
    }
    return out;
}

Tensor<float> tensor_from_stream(const FeatureStream& stream) {
    if (stream.channels > 0) {
        return Tensor<float>({stream.steps(), stream.channels, stream.height, stream.width},
                             stream.values.vec());
    }
    return stream.values;
}

FeatureStream stream_from_tensor(GroupId group, const Tensor<float>& tensor) {
    FeatureStream out;
    out.group = group;
    if (tensor.rank() == 4) {
        out.channels = tensor.dim(1);
        out.height = tensor.dim(2);
        out.width = tensor.dim(3);
        out.values = Tensor<float>({tensor.dim(0), tensor.dim(1) * tensor.dim(2) * tensor.dim(3)},
                                   tensor.vec());
    } else if (tensor.rank() == 2) {
        out.values = tensor;
    } else {
        throw contract_error(std::string("feature tensor for ") + group_name(group) +
                             " must be rank 2 or 4, got " + tensor.shape_string());
    }
    return out;
}

}  // namespace fan
