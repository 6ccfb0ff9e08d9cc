#include "fan/config.h"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "fan/error.h"

namespace fan {

using nlohmann::json;

std::vector<GroupId> TrainConfig::group_ids() const {
    std::vector<GroupId> ids;
    ids.reserve(groups.size());
    for (const auto& name : groups) ids.push_back(group_from_name(name));
    return ids;
}

void TrainConfig::validate() const {
    if (t < 2) throw contract_error("config: t must be at least 2");
    if (fps <= 0.0) throw contract_error("config: fps must be positive");
    if (height == 0 || width == 0) throw contract_error("config: frame size must be positive");
    if (groups.empty()) throw contract_error("config: at least one feature group required");
    std::set<std::string> seen;
    for (const auto& g : groups) {
        group_from_name(g);
        if (!seen.insert(g).second) throw contract_error("config: duplicate group " + g);
    }
    if (group_width == 0) throw contract_error("config: group_width must be positive");
    if (layers == 0) throw contract_error("config: layers must be positive");
    if (hidden == 0) throw contract_error("config: hidden must be positive");
    if (fc_hidden == 0) throw contract_error("config: fc_hidden must be positive");
    if (encoder.channels.empty()) throw contract_error("config: encoder needs >= 1 stage");
    if (encoder.kernel == 0 || encoder.stride == 0)
        throw contract_error("config: encoder kernel and stride must be positive");
    if (lr <= 0.0) throw contract_error("config: lr must be positive");
    if (batch == 0) throw contract_error("config: batch must be positive");
    if (epochs == 0) throw contract_error("config: epochs must be positive");
    if (flow_window < 3 || flow_window % 2 == 0)
        throw contract_error("config: flow_window must be odd and >= 3");
    if (scene_bins < 2) throw contract_error("config: scene_bins must be >= 2");
    if (pose_keypoints == 0) throw contract_error("config: pose_keypoints must be positive");
    // every conv stage must keep a positive spatial extent
    std::size_t h = height, w = width;
    for (std::size_t i = 0; i < encoder.channels.size(); ++i) {
        if (h + 2 * encoder.pad < encoder.kernel || w + 2 * encoder.pad < encoder.kernel) {
            throw contract_error("config: encoder stage " + std::to_string(i) +
                                 " shrinks below the kernel size");
        }
        h = (h + 2 * encoder.pad - encoder.kernel) / encoder.stride + 1;
        w = (w + 2 * encoder.pad - encoder.kernel) / encoder.stride + 1;
    }
}

namespace {

template <typename T>
void pull(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

const std::set<std::string> kKnownKeys{
    "t",           "fps",        "height",     "width",     "groups",
    "group_width", "pose_keypoints", "flow_window", "scene_bins", "p",
    "layers",      "hidden",     "fc_hidden",  "encoder",   "lr",
    "batch",       "epochs",     "seed",       "checkpoint_every"};

const std::set<std::string> kKnownEncoderKeys{"channels", "kernel", "stride", "pad"};

}  // namespace

TrainConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw parse_error(std::string("config: ") + e.what());
    }
    if (!j.is_object()) {
        throw parse_error("config: top level must be an object");
    }
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!kKnownKeys.count(key)) {
            throw parse_error("config: unknown key \"" + key + "\"");
        }
    }
    TrainConfig cfg;
    try {
        pull(j, "t", cfg.t);
        pull(j, "fps", cfg.fps);
        pull(j, "height", cfg.height);
        pull(j, "width", cfg.width);
        pull(j, "groups", cfg.groups);
        pull(j, "group_width", cfg.group_width);
        pull(j, "pose_keypoints", cfg.pose_keypoints);
        pull(j, "flow_window", cfg.flow_window);
        pull(j, "scene_bins", cfg.scene_bins);
        pull(j, "p", cfg.p);
        pull(j, "layers", cfg.layers);
        pull(j, "hidden", cfg.hidden);
        pull(j, "fc_hidden", cfg.fc_hidden);
        pull(j, "lr", cfg.lr);
        pull(j, "batch", cfg.batch);
        pull(j, "epochs", cfg.epochs);
        pull(j, "seed", cfg.seed);
        pull(j, "checkpoint_every", cfg.checkpoint_every);
        if (j.contains("encoder")) {
            const json& e = j.at("encoder");
            for (const auto& [key, value] : e.items()) {
                (void)value;
                if (!kKnownEncoderKeys.count(key)) {
                    throw parse_error("config: unknown encoder key \"" + key + "\"");
                }
            }
            pull(e, "channels", cfg.encoder.channels);
            pull(e, "kernel", cfg.encoder.kernel);
            pull(e, "stride", cfg.encoder.stride);
            pull(e, "pad", cfg.encoder.pad);
        }
    } catch (const json::exception& e) {
        throw parse_error(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string config_to_json_text(const TrainConfig& cfg) {
    json j;
    j["t"] = cfg.t;
    j["fps"] = cfg.fps;
    j["height"] = cfg.height;
    j["width"] = cfg.width;
    j["groups"] = cfg.groups;
    j["group_width"] = cfg.group_width;
    j["pose_keypoints"] = cfg.pose_keypoints;
    j["flow_window"] = cfg.flow_window;
    j["scene_bins"] = cfg.scene_bins;
    j["p"] = cfg.p;
    j["layers"] = cfg.layers;
    j["hidden"] = cfg.hidden;
    j["fc_hidden"] = cfg.fc_hidden;
    j["encoder"]["channels"] = cfg.encoder.channels;
    j["encoder"]["kernel"] = cfg.encoder.kernel;
    j["encoder"]["stride"] = cfg.encoder.stride;
    j["encoder"]["pad"] = cfg.encoder.pad;
    j["lr"] = cfg.lr;
    j["batch"] = cfg.batch;
    j["epochs"] = cfg.epochs;
    j["seed"] = cfg.seed;
    j["checkpoint_every"] = cfg.checkpoint_every;
    return j.dump(2) + "\n";
}

TrainConfig load_config(const std::string& path) {
    if (!std::filesystem::exists(path)) {
        throw missing_input_error("config file not found: " + path);
    }
    std::ifstream is(path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

void save_config(const TrainConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) {
        throw Error(ErrorClass::generic, "cannot write config: " + path);
    }
    os << config_to_json_text(cfg);
}

std::uint64_t config_digest(const TrainConfig& cfg) {
    const std::string canon = config_to_json_text(cfg);
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (const unsigned char c : canon) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

}  // namespace fan
