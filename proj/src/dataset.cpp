#include "fan/dataset.h"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fan/error.h"
#include "fan/tensor_io.h"

namespace fan {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<const SegmentRecord*> DatasetManifest::split_records(
    const std::string& split) const {
    std::vector<const SegmentRecord*> out;
    for (const auto& r : records) {
        if (r.split == split) out.push_back(&r);
    }
    return out;
}

SegmentationOutcome segment_stream(const std::string& video_id, const LabelSequence& labels,
                                   std::size_t t) {
    if (t == 0) {
        throw contract_error("segment_stream: t must be positive");
    }
    SegmentationOutcome out;
    const std::size_t frames = labels.y.size();
    const std::size_t count = frames / t;
    for (std::size_t s = 0; s < count; ++s) {
        SegmentRecord rec;
        std::ostringstream id;
        id << video_id << "_s" << std::setw(3) << std::setfill('0') << s;
        rec.id = id.str();
        rec.start_frame = s * t;
        rec.labels.fps = labels.fps;
        rec.labels.y.assign(labels.y.begin() + static_cast<std::ptrdiff_t>(s * t),
                            labels.y.begin() + static_cast<std::ptrdiff_t>((s + 1) * t));
        out.segments.push_back(std::move(rec));
    }
    out.dropped = frames - count * t;
    return out;
}

std::vector<SegmentRecord> filter_by_onset_ratio(const std::vector<SegmentRecord>& segments,
                                                 double low, double high) {
    if (low < 0.0 || high > 1.0 || low > high) {
        throw contract_error("filter_by_onset_ratio: bad bounds");
    }
    std::vector<SegmentRecord> kept;
    for (const auto& rec : segments) {
        if (rec.labels.y.empty()) {
            throw contract_error("filter_by_onset_ratio: segment " + rec.id + " has no labels");
        }
        const double ratio = rec.onset_ratio();
        if (ratio >= low && ratio <= high) kept.push_back(rec);
    }
    return kept;
}

DatasetStats dataset_stats(const DatasetManifest& manifest) {
    DatasetStats stats;
    for (const auto& rec : manifest.records) {
        stats.segments += 1;
        stats.total_frames += rec.labels.y.size();
        stats.onset_labels += rec.labels.onset_count();
        stats.segments_per_split[rec.split] += 1;
    }
    stats.non_onset_labels = stats.total_frames - stats.onset_labels;
    return stats;
}

namespace {

json record_to_json(const SegmentRecord& rec) {
    json j;
    j["id"] = rec.id;
    j["split"] = rec.split;
    j["start_frame"] = rec.start_frame;
    if (!rec.frames_dir.empty()) j["frames_dir"] = rec.frames_dir;
    j["features"] = rec.features;
    j["labels"] = rec.labels.y;
    if (rec.has_truth) {
        j["truth"]["onsets"] = rec.truth.onset_times;
        j["truth"]["offsets"] = rec.truth.offsets;
    }
    return j;
}

SegmentRecord record_from_json(const json& j, const DatasetManifest& manifest,
                               const std::string& where) {
    SegmentRecord rec;
    try {
        rec.id = j.at("id").get<std::string>();
        rec.split = j.at("split").get<std::string>();
        rec.start_frame = j.value("start_frame", std::size_t{0});
        rec.frames_dir = j.value("frames_dir", std::string{});
        rec.features = j.at("features").get<std::map<std::string, std::string>>();
        rec.labels.y = j.at("labels").get<std::vector<std::uint8_t>>();
        rec.labels.fps = manifest.fps;
        if (j.contains("truth")) {
            rec.has_truth = true;
            rec.truth.onset_times = j.at("truth").at("onsets").get<std::vector<double>>();
            rec.truth.offsets = j.at("truth").at("offsets").get<std::map<std::string, int>>();
        }
    } catch (const json::exception& e) {
        throw parse_error(where + ": " + e.what());
    }
    if (rec.split != "train" && rec.split != "validation" && rec.split != "test") {
        throw parse_error(where + ": unknown split \"" + rec.split + "\"");
    }
    if (rec.labels.y.size() != manifest.t) {
        throw parse_error(where + ": record " + rec.id + " has " +
                          std::to_string(rec.labels.y.size()) + " labels, manifest t is " +
                          std::to_string(manifest.t));
    }
    for (const auto v : rec.labels.y) {
        if (v > 1) {
            throw parse_error(where + ": record " + rec.id + " has a non-binary label");
        }
    }
    for (const auto& [group, path] : rec.features) {
        group_from_name(group);
        if (path.empty()) {
            throw parse_error(where + ": record " + rec.id + " has an empty path for " + group);
        }
    }
    return rec;
}

}  // namespace

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw missing_input_error("cannot open manifest: " + path);
    }
    DatasetManifest manifest;
    manifest.base_dir = fs::path(path).parent_path().string();

    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    std::set<std::string> ids;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw parse_error(where + ": " + e.what());
        }
        if (!have_header) {
            try {
                manifest.version = j.at("version").get<std::uint32_t>();
                manifest.t = j.at("t").get<std::size_t>();
                manifest.fps = j.at("fps").get<double>();
            } catch (const json::exception& e) {
                throw parse_error(where + ": bad manifest header: " + e.what());
            }
            if (manifest.version != 1) {
                throw parse_error(where + ": unsupported manifest version " +
                                  std::to_string(manifest.version));
            }
            if (manifest.t == 0 || manifest.fps <= 0.0) {
                throw parse_error(where + ": header t and fps must be positive");
            }
            have_header = true;
            continue;
        }
        SegmentRecord rec = record_from_json(j, manifest, where);
        if (!ids.insert(rec.id).second) {
            throw parse_error(where + ": duplicate segment id " + rec.id);
        }
        manifest.records.push_back(std::move(rec));
    }
    if (!have_header) {
        throw parse_error(path + ": empty manifest");
    }
    return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream os(path);
    if (!os) {
        throw Error(ErrorClass::generic, "cannot write manifest: " + path);
    }
    json header;
    header["version"] = manifest.version;
    header["t"] = manifest.t;
    header["fps"] = manifest.fps;
    os << header.dump() << "\n";
    for (const auto& rec : manifest.records) {
        os << record_to_json(rec).dump() << "\n";
    }
    if (!os) {
        throw Error(ErrorClass::generic, "manifest write failed: " + path);
    }
}

MaterializedSegment materialize_segment(const DatasetManifest& manifest,
                                        const SegmentRecord& record, const TrainConfig& cfg) {
    if (record.labels.y.size() != cfg.t) {
        throw contract_error("segment " + record.id + " has " +
                             std::to_string(record.labels.y.size()) +
                             " labels, config t is " + std::to_string(cfg.t));
    }
    MaterializedSegment out;
    out.id = record.id;
    out.labels = record.labels.y;
    const auto ids = cfg.group_ids();
    for (std::size_t g = 0; g < cfg.groups.size(); ++g) {
        const auto it = record.features.find(cfg.groups[g]);
        if (it == record.features.end()) {
            throw contract_error("segment " + record.id + " has no feature entry for group " +
                                 cfg.groups[g]);
        }
        fs::path file(it->second);
        if (file.is_relative() && !manifest.base_dir.empty()) {
            file = fs::path(manifest.base_dir) / file;
        }
        if (!fs::exists(file)) {
            throw missing_input_error("segment " + record.id + ": feature file " +
                                      file.string() + " not found");
        }
        FeatureStream stream = stream_from_tensor(ids[g], read_fant<float>(file.string()));
        if (stream.steps() != cfg.t) {
            throw contract_error("segment " + record.id + ": " + cfg.groups[g] + " has " +
                                 std::to_string(stream.steps()) + " steps, config t is " +
                                 std::to_string(cfg.t));
        }
        out.streams.push_back(std::move(stream));
    }
    return out;
}

}  // namespace fan
