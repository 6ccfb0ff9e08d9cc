#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "fan/audio.h"
#include "fan/dataset.h"
#include "fan/error.h"
#include "fan/frames.h"
#include "fan/rng.h"
#include "fan/tensor_io.h"

namespace fan {

namespace fs = std::filesystem;

void SynthParams::validate(const TrainConfig& cfg) const {
    if (videos == 0) throw contract_error("synth: videos must be positive");
    if (frames_per_video < cfg.t) {
        throw contract_error("synth: frames_per_video must be at least t (" +
                             std::to_string(cfg.t) + ")");
    }
    if (min_gap < 1 || max_gap < min_gap) {
        throw contract_error("synth: beat gap range must satisfy 1 <= min <= max");
    }
    if (noise < 0.0 || noise > 1.0) {
        throw contract_error("synth: noise must lie in [0,1]");
    }
    if (sample_rate != 22050 && sample_rate != 44100 && sample_rate != 48000) {
        throw contract_error("synth: unsupported sample rate " + std::to_string(sample_rate));
    }
    if (sources.empty()) {
        throw contract_error("synth: at least one burst source required");
    }
    for (const auto& s : sources) {
        if (s != "motion" && s != "scene" && s != "pose" && s != "flash") {
            throw contract_error("synth: unknown burst source " + s);
        }
    }
    for (const auto& [group, k] : offsets) {
        group_from_name(group);
        if (std::find(cfg.groups.begin(), cfg.groups.end(), group) == cfg.groups.end()) {
            throw contract_error("synth: offset for inactive group " + group);
        }
        if (static_cast<std::size_t>(std::abs(k)) > cfg.p) {
            throw contract_error("synth: |offset| for " + group + " exceeds p=" +
                                 std::to_string(cfg.p));
        }
    }
}

// The per-video random streams. Beat layout is stream 0 so that
// synthetic_beat_frames can reproduce it without rendering anything.
namespace {

constexpr std::uint64_t kSplitStream = 0x53504C49;  // clear of the video indices

struct VideoRngs {
    Rng beats;
    Rng motion;
    Rng scene;
    Rng pose;
    Rng pixel_noise;
    Rng dropout;
    Rng pulse;
};

VideoRngs video_rngs(std::uint64_t seed, std::size_t video_index) {
    const Rng base = Rng(seed).derive(video_index);
    return VideoRngs{base.derive(0), base.derive(1), base.derive(2),
                     base.derive(3), base.derive(4), base.derive(5),
                     base.derive(6)};
}

std::vector<std::size_t> beat_frames(const SynthParams& params, Rng& rng) {
    std::vector<std::size_t> beats;
    std::size_t f = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(params.min_gap),
                        static_cast<std::int64_t>(params.max_gap)));
    while (f < params.frames_per_video) {
        beats.push_back(f);
        f += static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(params.min_gap),
                            static_cast<std::int64_t>(params.max_gap)));
    }
    return beats;
}

std::string zero_pad(std::size_t value, int width) {
    std::ostringstream os;
    os << std::setw(width) << std::setfill('0') << value;
    return os.str();
}

struct ObjectState {
    std::size_t x = 0, y = 0, size = 4;
    float c1[3], c2[3];
};

// 2px checker so frames and residuals carry texture the conv encoder can see
void draw_object(FrameSequence& seq, std::size_t t, const ObjectState& obj) {
    for (std::size_t dy = 0; dy < obj.size; ++dy) {
        for (std::size_t dx = 0; dx < obj.size; ++dx) {
            const bool odd = ((dx / 2) + (dy / 2)) % 2 == 1;
            const float* c = odd ? obj.c2 : obj.c1;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                seq.at(t, obj.y + dy, obj.x + dx, ch) = c[ch];
            }
        }
    }
}

// A strip of gray tiles along the top edge, one tile per keypoint, redrawn
// from a fresh pulse vector every frame. Beat bursts repeat content between
// beats; the pulse keeps rows pairwise distinct so banded attention has an
// unambiguous argmax to learn, and the pose confidences echo the same vector
// so an undelayed stream anchors it in absolute time.
void draw_pulse_strip(FrameSequence& seq, std::size_t t, std::size_t width,
                      const std::vector<float>& pulse) {
    const std::size_t strip_h = std::max<std::size_t>(2, seq.height / 8);
    const std::size_t k = pulse.size();
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t x0 = j * width / k;
        const std::size_t x1 = (j + 1) * width / k;
        const float g = 0.5f + pulse[j];
        for (std::size_t y = 0; y < strip_h; ++y) {
            for (std::size_t x = x0; x < x1; ++x) {
                for (std::size_t ch = 0; ch < 3; ++ch) seq.at(t, y, x, ch) = g;
            }
        }
    }
}

FeatureStream shift_stream(const FeatureStream& in, int k) {
    if (k == 0) return in;
    FeatureStream out = in;
    out.values.fill(0.0f);
    const std::ptrdiff_t steps = static_cast<std::ptrdiff_t>(in.steps());
    for (std::ptrdiff_t t = 0; t < steps; ++t) {
        const std::ptrdiff_t src = t + k;
        if (src < 0 || src >= steps) continue;
        for (std::size_t c = 0; c < in.dim(); ++c) {
            out.values.at2(static_cast<std::size_t>(t), c) =
                in.values.at2(static_cast<std::size_t>(src), c);
        }
    }
    return out;
}

FeatureStream slice_stream(const FeatureStream& in, std::size_t start, std::size_t len) {
    FeatureStream out = in;
    out.values = Tensor<float>({len, in.dim()});
    for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t c = 0; c < in.dim(); ++c) {
            out.values.at2(t, c) = in.values.at2(start + t, c);
        }
    }
    return out;
}

AudioClip click_track(const SynthParams& params, double fps,
                      const std::vector<std::size_t>& beats) {
    AudioClip clip;
    clip.sample_rate = params.sample_rate;
    const double seconds = static_cast<double>(params.frames_per_video) / fps;
    clip.samples.assign(static_cast<std::size_t>(std::llround(seconds * params.sample_rate)),
                        0.0f);
    const double tau = 0.01 * params.sample_rate;
    const std::size_t length = static_cast<std::size_t>(0.03 * params.sample_rate);
    for (const std::size_t f : beats) {
        // a quarter frame after the visual burst so the raster floor lands on f
        const double t0 = (static_cast<double>(f) + 0.25) / fps;
        const std::size_t s0 =
            static_cast<std::size_t>(std::llround(t0 * params.sample_rate));
        for (std::size_t n = 0; n < length && s0 + n < clip.samples.size(); ++n) {
            clip.samples[s0 + n] += static_cast<float>(
                0.8 * std::exp(-static_cast<double>(n) / tau) *
                std::sin(2.0 * M_PI * 1000.0 * static_cast<double>(n) / params.sample_rate));
        }
    }
    return clip;
}

}  // namespace

std::vector<std::size_t> synthetic_beat_frames(const SynthParams& params,
                                               std::size_t video_index) {
    VideoRngs rngs = video_rngs(params.seed, video_index);
    return beat_frames(params, rngs.beats);
}

DatasetManifest generate_synthetic(const TrainConfig& cfg, const SynthParams& params,
                                   const std::string& out_dir) {
    cfg.validate();
    params.validate(cfg);
    fs::create_directories(out_dir);

    DatasetManifest manifest;
    manifest.t = cfg.t;
    manifest.fps = cfg.fps;
    manifest.base_dir = out_dir;

    // seeded permutation, then fixed split counts so small corpora still get
    // validation and test videos
    std::vector<std::size_t> order(params.videos);
    for (std::size_t i = 0; i < params.videos; ++i) order[i] = i;
    Rng split_rng = Rng(params.seed).derive(kSplitStream);
    for (std::size_t i = params.videos; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(
            split_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    const std::size_t n_val =
        params.videos >= 2 ? std::max<std::size_t>(1, params.videos / 10) : 0;
    const std::size_t n_test =
        params.videos >= 3 ? std::max<std::size_t>(1, params.videos / 10) : 0;
    std::vector<std::string> split_of(params.videos, "train");
    for (std::size_t i = 0; i < n_val; ++i) split_of[order[i]] = "validation";
    for (std::size_t i = 0; i < n_test; ++i) split_of[order[n_val + i]] = "test";

    const std::size_t frames = params.frames_per_video;
    const auto ids = cfg.group_ids();

    for (std::size_t v = 0; v < params.videos; ++v) {
        VideoRngs rngs = video_rngs(params.seed, v);
        const std::vector<std::size_t> beats = beat_frames(params, rngs.beats);

        const std::string video_name = "video_" + zero_pad(v, 3);
        const fs::path video_dir = fs::path(out_dir) / video_name;
        fs::create_directories(video_dir / "frames");

        // burst dropout per source; one triple of draws per beat keeps the
        // stream layout independent of the noise level
        const double drop_p = 0.25 * params.noise;
        std::vector<bool> motion_on(beats.size()), scene_on(beats.size()),
            pose_on(beats.size());
        for (std::size_t b = 0; b < beats.size(); ++b) {
            motion_on[b] = !rngs.dropout.bernoulli(drop_p);
            scene_on[b] = !rngs.dropout.bernoulli(drop_p);
            pose_on[b] = !rngs.dropout.bernoulli(drop_p);
        }

        // scene state
        float bg[3];
        for (float& c : bg) c = static_cast<float>(rngs.scene.uniform(0.1, 0.9));

        std::vector<float> pulse(cfg.pose_keypoints);

        // object state
        ObjectState obj;
        obj.size = std::max<std::size_t>(4, cfg.height / 4);
        obj.x = static_cast<std::size_t>(
            rngs.motion.uniform_int(0, static_cast<std::int64_t>(cfg.width - obj.size)));
        obj.y = static_cast<std::size_t>(
            rngs.motion.uniform_int(0, static_cast<std::int64_t>(cfg.height - obj.size)));
        for (std::size_t c = 0; c < 3; ++c) {
            obj.c1[c] = static_cast<float>(rngs.motion.uniform(0.0, 1.0));
            obj.c2[c] = static_cast<float>(rngs.motion.uniform(0.0, 1.0));
        }

        // skeleton state: fixed limb offsets around a jumping center
        const std::size_t K = cfg.pose_keypoints;
        std::vector<double> limb_dx(K), limb_dy(K);
        for (std::size_t j = 0; j < K; ++j) {
            limb_dx[j] = rngs.pose.uniform(-(cfg.width / 6.0), cfg.width / 6.0);
            limb_dy[j] = rngs.pose.uniform(-(cfg.height / 6.0), cfg.height / 6.0);
        }
        double cx = rngs.pose.uniform(cfg.width * 0.25, cfg.width * 0.75);
        double cy = rngs.pose.uniform(cfg.height * 0.25, cfg.height * 0.75);

        FrameSequence seq;
        seq.t = frames;
        seq.height = cfg.height;
        seq.width = cfg.width;
        seq.fps = cfg.fps;
        seq.frames = Tensor<float>({frames, cfg.height, cfg.width, 3});

        nlohmann::json pose_json = nlohmann::json::array();
        std::size_t next_beat = 0;
        for (std::size_t f = 0; f < frames; ++f) {
            const bool is_beat = next_beat < beats.size() && beats[next_beat] == f;
            if (is_beat) {
                if (params.sources.count("motion") && motion_on[next_beat]) {
                    // jump by at least 2px in some direction, staying inside
                    std::int64_t nx, ny;
                    do {
                        nx = static_cast<std::int64_t>(obj.x) + rngs.motion.uniform_int(-3, 3);
                        ny = static_cast<std::int64_t>(obj.y) + rngs.motion.uniform_int(-3, 3);
                        nx = std::clamp<std::int64_t>(
                            nx, 0, static_cast<std::int64_t>(cfg.width - obj.size));
                        ny = std::clamp<std::int64_t>(
                            ny, 0, static_cast<std::int64_t>(cfg.height - obj.size));
                    } while (std::abs(nx - static_cast<std::int64_t>(obj.x)) +
                                 std::abs(ny - static_cast<std::int64_t>(obj.y)) <
                             2);
                    obj.x = static_cast<std::size_t>(nx);
                    obj.y = static_cast<std::size_t>(ny);
                }
                if (params.sources.count("scene") && scene_on[next_beat]) {
                    float candidate[3];
                    double dist = 0.0;
                    do {
                        dist = 0.0;
                        for (std::size_t c = 0; c < 3; ++c) {
                            candidate[c] = static_cast<float>(rngs.scene.uniform(0.1, 0.9));
                            dist += std::abs(static_cast<double>(candidate[c]) - bg[c]);
                        }
                    } while (dist < 0.4);
                    for (std::size_t c = 0; c < 3; ++c) bg[c] = candidate[c];
                }
                if (params.sources.count("pose") && pose_on[next_beat]) {
                    // a jump clearly above the per-frame drift floor
                    double dx = 0.0, dy = 0.0;
                    do {
                        dx = rngs.pose.uniform(-(cfg.width / 4.0), cfg.width / 4.0);
                        dy = rngs.pose.uniform(-(cfg.height / 4.0), cfg.height / 4.0);
                    } while (std::abs(dx) + std::abs(dy) <
                             static_cast<double>(cfg.width) / 8.0);
                    cx = std::clamp(cx + dx, cfg.width * 0.2, cfg.width * 0.8);
                    cy = std::clamp(cy + dy, cfg.height * 0.2, cfg.height * 0.8);
                }
                ++next_beat;
            }

            for (std::size_t y = 0; y < cfg.height; ++y) {
                for (std::size_t x = 0; x < cfg.width; ++x) {
                    for (std::size_t c = 0; c < 3; ++c) seq.at(f, y, x, c) = bg[c];
                }
            }
            draw_object(seq, f, obj);
            if (params.pulse) {
                for (float& v : pulse)
                    v = static_cast<float>(rngs.pulse.uniform(-0.4, 0.4));
                draw_pulse_strip(seq, f, cfg.width, pulse);
            }
            if (params.noise > 0.0) {
                const double sigma = 0.02 * params.noise;
                for (std::size_t i = 0; i < cfg.height * cfg.width * 3; ++i) {
                    float& px = seq.frames[f * cfg.height * cfg.width * 3 + i];
                    px = std::clamp(
                        px + static_cast<float>(sigma * rngs.pixel_noise.normal()), 0.0f,
                        1.0f);
                }
            }

            if (params.pulse) {
                // sub-jump drift keeps the center distinct on every frame, so a
                // misaligned read of the pose stream is wrong on every row, not
                // just at the beats
                cx = std::clamp(cx + rngs.pose.uniform(-1.0, 1.0) * cfg.width / 50.0,
                                cfg.width * 0.2, cfg.width * 0.8);
                cy = std::clamp(cy + rngs.pose.uniform(-1.0, 1.0) * cfg.height / 50.0,
                                cfg.height * 0.2, cfg.height * 0.8);
            }

            nlohmann::json frame_pose = nlohmann::json::array();
            for (std::size_t j = 0; j < K; ++j) {
                const double jitter = params.noise * 0.5;
                double x = cx + limb_dx[j] +
                           (jitter > 0.0 ? rngs.pose.uniform(-jitter, jitter) : 0.0);
                double y = cy + limb_dy[j] +
                           (jitter > 0.0 ? rngs.pose.uniform(-jitter, jitter) : 0.0);
                x = std::clamp(x, 0.0, cfg.width - 1.0);
                y = std::clamp(y, 0.0, cfg.height - 1.0);
                // the flash source codes beats as a state of the first half
                // of the confidences, identical at every beat; the last
                // confidence carries the phase within the segment grid, an
                // absolute time reference a shifted copy reveals directly
                double conf =
                    params.pulse ? 0.5 + static_cast<double>(pulse[j]) : 0.5;
                if (params.sources.count("flash")) {
                    if (j < K / 2) conf = is_beat ? 0.9 : 0.1;
                    if (j + 1 == K)
                        conf = static_cast<double>(f % cfg.t) /
                               static_cast<double>(cfg.t - 1);
                }
                frame_pose.push_back({x, y, conf});
            }
            pose_json.push_back(std::move(frame_pose));
        }

        write_frame_sequence((video_dir / "frames").string(), seq);
        const fs::path pose_path = video_dir / "pose.json";
        {
            std::ofstream os(pose_path);
            if (!os) {
                throw Error(ErrorClass::generic, "cannot write " + pose_path.string());
            }
            os << pose_json.dump() << "\n";
        }

        const AudioClip clip = click_track(params, cfg.fps, beats);
        const fs::path wav_path = video_dir / "audio.wav";
        write_wav(wav_path.string(), clip);

        // labels from the real pipeline, on the quantized samples the file holds
        const AudioClip readback = read_wav(wav_path.string());
        const LabelSequence labels =
            rasterize_labels(detect_onsets(readback), frames, cfg.fps);

        // full-video feature streams, then the injected shifts
        std::vector<FeatureStream> streams;
        for (const GroupId id : ids) {
            switch (id) {
                case GroupId::frames: streams.push_back(frames_stream(seq)); break;
                case GroupId::residuals: streams.push_back(frame_residuals(seq)); break;
                case GroupId::optical_flow:
                    streams.push_back(lucas_kanade_flow(seq, cfg.flow_window));
                    break;
                case GroupId::scene_change:
                    streams.push_back(scene_change_features(seq, cfg.scene_bins));
                    break;
                case GroupId::body_pose:
                    streams.push_back(
                        load_pose_keypoints(pose_path.string(), frames, cfg.width,
                                            cfg.height, K));
                    break;
            }
        }
        for (std::size_t g = 0; g < streams.size(); ++g) {
            const auto it = params.offsets.find(cfg.groups[g]);
            if (it != params.offsets.end() && it->second != 0) {
                streams[g] = shift_stream(streams[g], it->second);
            }
        }

        SegmentationOutcome outcome = segment_stream(video_name, labels, cfg.t);
        const std::vector<SegmentRecord> kept = filter_by_onset_ratio(outcome.segments);
        for (const SegmentRecord& base : kept) {
            SegmentRecord rec = base;
            const std::size_t s = rec.start_frame / cfg.t;
            const std::string seg_name = "seg_" + zero_pad(s, 3);
            const fs::path seg_dir = video_dir / seg_name;
            fs::create_directories(seg_dir);
            for (std::size_t g = 0; g < streams.size(); ++g) {
                const FeatureStream sliced =
                    slice_stream(streams[g], rec.start_frame, cfg.t);
                const std::string file = cfg.groups[g] + ".fant";
                write_fant((seg_dir / file).string(), tensor_from_stream(sliced));
                rec.features[cfg.groups[g]] = video_name + "/" + seg_name + "/" + file;
            }
            rec.frames_dir = video_name + "/frames";
            rec.split = split_of[v];
            rec.has_truth = true;
            for (const std::size_t f : beats) {
                if (f >= rec.start_frame && f < rec.start_frame + cfg.t) {
                    rec.truth.onset_times.push_back(
                        (static_cast<double>(f - rec.start_frame) + 0.25) / cfg.fps);
                }
            }
            rec.truth.offsets = params.offsets;
            manifest.records.push_back(std::move(rec));
        }
    }

    write_manifest(manifest, (fs::path(out_dir) / "manifest.jsonl").string());
    return manifest;
}

}  // namespace fan
