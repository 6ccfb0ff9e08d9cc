#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fan/features.h"

namespace fan {

struct EncoderConfig {
    std::vector<std::size_t> channels{8, 16, 32};  // one conv stage per entry
    std::size_t kernel = 3;
    std::size_t stride = 2;
    std::size_t pad = 1;
};

// Full experiment configuration. Paper-scale values are lr 3e-5, p 2,
// 2 BiLSTM layers, hidden 256, group width 100 (D = 500), H = W = 224;
// the remaining defaults are desk-scale.
struct TrainConfig {
    // data geometry
    std::size_t t = 20;
    double fps = 4.0;
    std::size_t height = 24;
    std::size_t width = 24;
    std::vector<std::string> groups{"frames", "residuals", "optical_flow", "scene_change",
                                    "body_pose"};
    std::size_t group_width = 16;
    std::size_t pose_keypoints = 17;

    // feature extraction
    std::size_t flow_window = 5;
    std::size_t scene_bins = 8;

    // model
    std::size_t p = 2;
    std::size_t layers = 2;
    std::size_t hidden = 32;
    std::size_t fc_hidden = 32;
    EncoderConfig encoder;

    // optimization
    double lr = 3e-5;
    std::size_t batch = 8;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;
    std::size_t checkpoint_every = 1;

    std::size_t d() const { return groups.size() * group_width; }
    std::vector<GroupId> group_ids() const;
    void validate() const;
};

TrainConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const TrainConfig& cfg);

TrainConfig load_config(const std::string& path);
void save_config(const TrainConfig& cfg, const std::string& path);

// FNV-1a over the canonical serialization; embedded in checkpoints so that
// evaluation can refuse a model built under a different configuration.
std::uint64_t config_digest(const TrainConfig& cfg);

}  // namespace fan
