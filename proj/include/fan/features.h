#pragma once

#include <cstddef>
#include <string>

#include "fan/frames.h"
#include "fan/tensor.h"

namespace fan {

enum class GroupId { frames, residuals, optical_flow, scene_change, body_pose };

constexpr std::size_t kGroupCount = 5;

const char* group_name(GroupId id);
GroupId group_from_name(const std::string& name);

// One extraction stream over a segment: values is (T, d_g). Image-shaped
// groups store each step as channel planes (c, y, x flattened row-major) and
// carry the plane geometry; vector groups leave it zeroed.
struct FeatureStream {
    GroupId group = GroupId::frames;
    Tensor<float> values{std::vector<std::size_t>{1, 1}};
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t steps() const { return values.dim(0); }
    std::size_t dim() const { return values.dim(1); }
};

// Raw pixels as a stream, d_g = 3*H*W.
FeatureStream frames_stream(const FrameSequence& seq);

// Adjacent-frame subtraction, step 1 zero, d_g = 3*H*W.
FeatureStream frame_residuals(const FrameSequence& seq);

// Dense optical flow (u,v) per pixel, step 1 zero, d_g = 2*H*W.
FeatureStream lucas_kanade_flow(const FrameSequence& seq, std::size_t window = 5,
                                float tau_eig = 1e-4f);

// Per-step descriptor [histogram L1 distance, nonzero-bin fraction, fraction
// delta] from the joint B^3 color histogram, d_g = 3.
FeatureStream scene_change_features(const FrameSequence& seq, std::size_t bins_per_channel = 8);

// Ingests the pose JSON (array of frames, each an array of K [x,y,confidence]
// triples; an empty frame means no detection). Coordinates are normalized by
// the image size, d_g = 3*K. expected_k = 0 infers K from the file.
FeatureStream load_pose_keypoints(const std::string& path, std::size_t expected_t,
                                  std::size_t width, std::size_t height,
                                  std::size_t expected_k = 0);

// On-disk form of a stream: image groups as (T, C, H, W), vector groups as
// (T, d). stream_from_tensor accepts either and restores the plane geometry.
Tensor<float> tensor_from_stream(const FeatureStream& stream);
FeatureStream stream_from_tensor(GroupId group, const Tensor<float>& tensor);

}  // namespace fan
