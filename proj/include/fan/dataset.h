#pragma once

// Segment construction, onset-ratio filtering, manifest bookkeeping, and the
// synthetic generator used to verify alignment and prediction end to end.

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fan/config.h"
#include "fan/features.h"
#include "fan/onsets.h"

namespace fan {

// Ground truth carried only by synthetic data.
struct SegmentTruth {
    std::vector<double> onset_times;        // seconds, video-relative
    std::map<std::string, int> offsets;     // group -> injected shift k (frames)
};

struct SegmentRecord {
    std::string id;
    std::string split = "train";
    std::size_t start_frame = 0;                   // offset inside the source video
    std::string frames_dir;                        // may be empty (features only)
    std::map<std::string, std::string> features;   // group name -> FANT path
    LabelSequence labels;
    bool has_truth = false;
    SegmentTruth truth;

    double onset_ratio() const {
        return static_cast<double>(labels.onset_count()) /
               static_cast<double>(labels.y.size());
    }
};

struct DatasetManifest {
    std::uint32_t version = 1;
    std::size_t t = 20;
    double fps = 4.0;
    std::vector<SegmentRecord> records;
    std::string base_dir;  // directory of the manifest file, set on read

    std::vector<const SegmentRecord*> split_records(const std::string& split) const;
};

struct SegmentationOutcome {
    std::vector<SegmentRecord> segments;
    std::size_t dropped = 0;  // trailing frames not covered by a full window
};

// Consecutive non-overlapping windows of exactly t label frames; the
// remainder is dropped and reported. Fewer than t frames yields no segments.
SegmentationOutcome segment_stream(const std::string& video_id, const LabelSequence& labels,
                                   std::size_t t);

// Keep iff onset_count/T lies in [low, high], bounds inclusive; order is
// preserved.
std::vector<SegmentRecord> filter_by_onset_ratio(const std::vector<SegmentRecord>& segments,
                                                 double low = 0.2, double high = 0.8);

struct DatasetStats {
    std::size_t segments = 0;
    std::size_t total_frames = 0;
    std::size_t onset_labels = 0;
    std::size_t non_onset_labels = 0;
    std::map<std::string, std::size_t> segments_per_split;
};

DatasetStats dataset_stats(const DatasetManifest& manifest);

// Line-delimited JSON: one header line (version, t, fps), then one record per
// line. Paths inside the manifest are relative to its directory.
DatasetManifest read_manifest(const std::string& path);
void write_manifest(const DatasetManifest& manifest, const std::string& path);

// Feature streams loaded from the record's FANT files in cfg.groups order,
// with the labels attached.
struct MaterializedSegment {
    std::string id;
    std::vector<FeatureStream> streams;
    std::vector<std::uint8_t> labels;
};

MaterializedSegment materialize_segment(const DatasetManifest& manifest,
                                        const SegmentRecord& record, const TrainConfig& cfg);

// Synthetic corpus: per video a textured object, a background color, and a
// skeleton all jump at seeded beat frames; the audio is a click track on the
// same beats, and labels come from the real onset pipeline. Group entries in
// `offsets` have their feature stream advanced by k frames at generation
// time (stream[t] = orig[t + k], zero rows at the tail), so a model that
// re-aligns them should attend k frames back.
struct SynthParams {
    std::size_t videos = 12;
    std::size_t frames_per_video = 100;
    std::size_t min_gap = 2;              // beat spacing bounds, frames
    std::size_t max_gap = 5;
    std::map<std::string, int> offsets;   // group name -> k, |k| <= cfg.p
    double noise = 0.0;                   // 0 clean .. 1 full jitter/dropout
    int sample_rate = 22050;
    std::uint64_t seed = 1;
    // which burst sources fire at beats; dropping some isolates the
    // information carried by a single stream family
    std::set<std::string> sources{"motion", "scene", "pose"};
    // per-frame pulse content (strip overlay + confidence echo); off leaves
    // undriven streams frozen frame to frame
    bool pulse = true;

    void validate(const TrainConfig& cfg) const;
};

// Ground-truth burst frames for one video, exposed for verification.
std::vector<std::size_t> synthetic_beat_frames(const SynthParams& params,
                                               std::size_t video_index);

// Writes frames, WAV, pose JSON, per-segment FANT features, and the manifest
// under out_dir; returns the manifest (base_dir = out_dir).
DatasetManifest generate_synthetic(const TrainConfig& cfg, const SynthParams& params,
                                   const std::string& out_dir);

}  // namespace fan
