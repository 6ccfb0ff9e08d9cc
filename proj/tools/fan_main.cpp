// Command-line front end. Every run echoes the resolved configuration and
// seed, errors leave on a single machine-parsable line, and the exit code is
// the error class.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "fan/audio.h"
#include "fan/config.h"
#include "fan/dataset.h"
#include "fan/error.h"
#include "fan/features.h"
#include "fan/frames.h"
#include "fan/model.h"
#include "fan/onsets.h"
#include "fan/tensor_io.h"
#include "fan/trainer.h"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fan;

namespace {

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "configuration JSON (defaults when absent)")
        ->check(CLI::ExistingFile);
    opts.seed_opt = cmd->add_option("--seed", opts.seed, "override the configured seed");
    cmd->add_option("--threads", opts.threads, "worker thread count (0 keeps the OpenMP default)")
        ->check(CLI::NonNegativeNumber);
}

TrainConfig resolve_config(const CommonOpts& opts) {
    TrainConfig cfg;
    if (!opts.config_path.empty()) {
        cfg = load_config(opts.config_path);
    }
    if (opts.seed_opt && opts.seed_opt->count() > 0) {
        cfg.seed = opts.seed;
    }
    cfg.validate();
    if (opts.threads > 0) {
        omp_set_num_threads(opts.threads);
    }
    return cfg;
}

void echo_config(const TrainConfig& cfg) {
    std::ostringstream digest;
    digest << "0x" << std::hex << std::setw(16) << std::setfill('0') << config_digest(cfg);
    std::cout << "config " << json::parse(config_to_json_text(cfg)).dump() << "\n";
    std::cout << "digest " << digest.str() << " seed " << cfg.seed << "\n";
}

void write_or_print(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error(ErrorClass::generic, "cannot write " + path);
    }
    os << text;
}

std::size_t count_frames(const std::string& directory) {
    if (!fs::is_directory(directory)) {
        throw missing_input_error("frame directory not found: " + directory);
    }
    std::size_t count = 0;
    for (;; ++count) {
        std::ostringstream name;
        name << "frame_" << std::setw(5) << std::setfill('0') << (count + 1);
        const fs::path base = fs::path(directory) / name.str();
        if (!fs::exists(base.string() + ".png") && !fs::exists(base.string() + ".ppm")) {
            break;
        }
    }
    if (count == 0) {
        throw missing_input_error("no frame_%05d images under " + directory);
    }
    return count;
}

int run_extract(const CommonOpts& common, const std::string& frames_dir,
                const std::string& pose_path, const std::string& out_dir) {
    const TrainConfig cfg = resolve_config(common);
    echo_config(cfg);
    const std::size_t t = count_frames(frames_dir);
    const FrameSequence seq = load_frame_sequence(frames_dir, t, cfg.height, cfg.width, cfg.fps);
    fs::create_directories(out_dir);
    for (const std::string& name : cfg.groups) {
        FeatureStream stream;
        switch (group_from_name(name)) {
            case GroupId::frames: stream = frames_stream(seq); break;
            case GroupId::residuals: stream = frame_residuals(seq); break;
            case GroupId::optical_flow:
                stream = lucas_kanade_flow(seq, cfg.flow_window);
                break;
            case GroupId::scene_change:
                stream = scene_change_features(seq, cfg.scene_bins);
                break;
            case GroupId::body_pose:
                if (pose_path.empty()) {
                    throw Error(ErrorClass::usage,
                                "--pose is required when body_pose is an active group");
                }
                stream = load_pose_keypoints(pose_path, t, seq.width, seq.height,
                                             cfg.pose_keypoints);
                break;
        }
        const Tensor<float> disk = tensor_from_stream(stream);
        const std::string path = (fs::path(out_dir) / (name + ".fant")).string();
        write_fant(path, disk);
        std::cout << "wrote " << path << " " << disk.shape_string() << "\n";
    }
    return 0;
}

int run_onsets(const std::string& audio_path, std::size_t frames, double fps,
               const std::string& out_path) {
    const AudioClip clip = read_wav(audio_path);
    const std::vector<double> times = detect_onsets(clip);
    json j;
    j["audio"] = audio_path;
    j["onsets"] = times;
    if (frames > 0) {
        const LabelSequence labels = rasterize_labels(times, frames, fps);
        j["fps"] = fps;
        j["labels"] = labels.y;
    }
    write_or_print(out_path, j.dump(2) + "\n");
    return 0;
}

int run_synth(const CommonOpts& common, SynthParams sp,
              const std::vector<std::string>& offset_args, const std::string& sources_arg,
              const std::string& out_dir) {
    const TrainConfig cfg = resolve_config(common);
    sp.seed = cfg.seed;
    if (!sources_arg.empty()) {
        sp.sources.clear();
        std::stringstream ss(sources_arg);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) sp.sources.insert(item);
        }
    }
    for (const std::string& arg : offset_args) {
        const auto eq = arg.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size()) {
            throw Error(ErrorClass::usage, "--offset expects group=k, got \"" + arg + "\"");
        }
        int k = 0;
        try {
            std::size_t used = 0;
            k = std::stoi(arg.substr(eq + 1), &used);
            if (used != arg.size() - eq - 1) throw std::invalid_argument(arg);
        } catch (const std::exception&) {
            throw Error(ErrorClass::usage, "--offset expects an integer k in \"" + arg + "\"");
        }
        sp.offsets[arg.substr(0, eq)] = k;
    }
    echo_config(cfg);
    const DatasetManifest manifest = generate_synthetic(cfg, sp, out_dir);
    const DatasetStats stats = dataset_stats(manifest);
    json j;
    j["manifest"] = (fs::path(out_dir) / "manifest.jsonl").string();
    j["segments"] = stats.segments;
    j["frames"] = stats.total_frames;
    j["onset_labels"] = stats.onset_labels;
    j["non_onset_labels"] = stats.non_onset_labels;
    j["splits"] = stats.segments_per_split;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int run_dataset(const std::string& manifest_path) {
    const DatasetManifest manifest = read_manifest(manifest_path);
    const DatasetStats stats = dataset_stats(manifest);
    json j;
    j["segments"] = stats.segments;
    j["frames"] = stats.total_frames;
    j["onset_labels"] = stats.onset_labels;
    j["non_onset_labels"] = stats.non_onset_labels;
    j["splits"] = stats.segments_per_split;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int run_train(const CommonOpts& common, const std::string& manifest_path,
              const std::string& out_dir) {
    const TrainConfig cfg = resolve_config(common);
    echo_config(cfg);
    const DatasetManifest manifest = read_manifest(manifest_path);
    const TrainResult result = train(cfg, manifest, out_dir);
    json j;
    j["steps"] = result.steps;
    j["first_loss"] = result.first_loss;
    j["final_loss"] = result.final_loss;
    j["best_epoch"] = result.best_epoch;
    j["best_val_f1"] = result.best_val_f1;
    j["checkpoint"] = result.checkpoint_path;
    j["log"] = result.log_path;
    std::cout << j.dump(2) << "\n";
    return 0;
}

json eval_json(const std::string& split, const EvalReport& report) {
    json j;
    j["split"] = split;
    j["segments"] = report.segments;
    j["tp"] = report.counts.tp;
    j["fp"] = report.counts.fp;
    j["fn"] = report.counts.fn;
    j["precision"] = report.metrics.precision;
    j["recall"] = report.metrics.recall;
    j["f1"] = report.metrics.f1;
    return j;
}

int run_eval(const CommonOpts& common, const std::string& manifest_path,
             const std::string& checkpoint, const std::string& split,
             const std::string& out_path) {
    const TrainConfig cfg = resolve_config(common);
    echo_config(cfg);
    const DatasetManifest manifest = read_manifest(manifest_path);
    const EvalReport report = evaluate(cfg, manifest, split, checkpoint);
    write_or_print(out_path, eval_json(split, report).dump(2) + "\n");
    return 0;
}

int run_predict(const CommonOpts& common, const std::string& manifest_path,
                const std::string& checkpoint, const std::string& segment_id,
                const std::string& attention_path) {
    const TrainConfig cfg = resolve_config(common);
    echo_config(cfg);
    const DatasetManifest manifest = read_manifest(manifest_path);
    const SegmentRecord* found = nullptr;
    for (const SegmentRecord& rec : manifest.records) {
        if (rec.id == segment_id) {
            found = &rec;
            break;
        }
    }
    if (!found) {
        throw missing_input_error("segment " + segment_id + " is not in " + manifest_path);
    }
    const FanParams<float> params = load_checkpoint(checkpoint, cfg);
    const MaterializedSegment seg = materialize_segment(manifest, *found, cfg);
    const std::vector<Tensor<float>> inputs = model_inputs<float>(cfg, seg.streams);
    AttentionRecord<float> record;
    const Prediction<float> pred =
        fan_predict(params, inputs, attention_path.empty() ? nullptr : &record);
    if (!attention_path.empty()) {
        write_or_print(attention_path, attention_record_to_json(record));
    }
    json j;
    j["id"] = segment_id;
    j["labels"] = pred.labels;
    j["truth"] = seg.labels;
    j["path_score"] = pred.path_score;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int run_inspect(const CommonOpts& common, const std::string& manifest_path,
                const std::string& checkpoint, const std::string& split,
                const std::string& out_path) {
    const TrainConfig cfg = resolve_config(common);
    echo_config(cfg);
    const DatasetManifest manifest = read_manifest(manifest_path);
    const AttentionReport report = inspect_attention(cfg, manifest, split, checkpoint);
    std::cout << attention_report_table(report);
    if (!out_path.empty()) {
        write_or_print(out_path, attention_report_to_json(report));
    }
    return 0;
}

int run_ablate(const CommonOpts& common, const std::string& manifest_path,
               const std::vector<std::string>& subset_args, const std::string& out_dir) {
    const TrainConfig cfg = resolve_config(common);
    echo_config(cfg);
    const DatasetManifest manifest = read_manifest(manifest_path);
    std::vector<std::vector<std::string>> subsets;
    if (subset_args.empty()) {
        // each group on its own, then everything together
        for (const std::string& group : cfg.groups) subsets.push_back({group});
        subsets.push_back(cfg.groups);
    } else {
        for (const std::string& arg : subset_args) {
            std::vector<std::string> subset;
            std::stringstream ss(arg);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (!item.empty()) subset.push_back(item);
            }
            subsets.push_back(std::move(subset));
        }
    }
    const AblationReport report = ablate(cfg, manifest, subsets, out_dir);
    std::cout << ablation_report_table(report);
    std::cout << "report " << (fs::path(out_dir) / "ablation.json").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"visual rhythm prediction pipeline"};
    app.require_subcommand(1);

    CommonOpts common;
    std::string frames_dir, pose_path, out_path, audio_path, manifest_path;
    std::string checkpoint, split, segment_id, attention_path;
    std::vector<std::string> offset_args, subset_args;
    std::string sources_arg;
    std::size_t onset_frames = 0;
    double onset_fps = 4.0;
    SynthParams sp;

    CLI::App* extract = app.add_subcommand("extract", "feature streams from a frame directory");
    extract->add_option("--frames", frames_dir, "directory of frame_%05d images")->required();
    extract->add_option("--pose", pose_path, "pose keypoint JSON for the body_pose group");
    extract->add_option("--out", out_path, "output directory for .fant streams")->required();
    add_common(extract, common);

    CLI::App* onsets = app.add_subcommand("onsets", "audio onset times from a WAV file");
    onsets->add_option("--audio", audio_path, "input WAV")->required();
    onsets->add_option("--frames", onset_frames, "also rasterize labels over this many frames");
    onsets->add_option("--fps", onset_fps, "frame rate for label rasterization")
        ->capture_default_str();
    onsets->add_option("--out", out_path, "write the JSON here instead of stdout");

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    synth->add_option("--out", out_path, "corpus directory")->required();
    synth->add_option("--videos", sp.videos, "number of videos")->capture_default_str();
    synth->add_option("--frames-per-video", sp.frames_per_video, "frames per video")
        ->capture_default_str();
    synth->add_option("--noise", sp.noise, "corruption level in [0,1]")->capture_default_str();
    synth->add_option("--min-gap", sp.min_gap, "minimum frames between beats")
        ->capture_default_str();
    synth->add_option("--max-gap", sp.max_gap, "maximum frames between beats")
        ->capture_default_str();
    synth->add_option("--offset", offset_args,
                      "shift one group by k frames, as group=k (repeatable)");
    synth->add_option("--sources", sources_arg,
                      "comma-separated burst sources (motion,scene,pose,flash)");
    synth->add_flag("--no-pulse", [&sp](std::int64_t) { sp.pulse = false; },
                    "disable the per-frame pulse overlay and confidence echo");
    add_common(synth, common);

    CLI::App* dataset = app.add_subcommand("dataset", "statistics for a manifest");
    dataset->add_option("--manifest", manifest_path, "manifest JSONL")->required();

    CLI::App* train_cmd = app.add_subcommand("train", "train from a manifest");
    train_cmd->add_option("--manifest", manifest_path, "manifest JSONL")->required();
    train_cmd->add_option("--out", out_path, "run directory for log and checkpoints")
        ->required();
    add_common(train_cmd, common);

    CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint on one split");
    eval_cmd->add_option("--manifest", manifest_path, "manifest JSONL")->required();
    eval_cmd->add_option("--checkpoint", checkpoint, "trained .fanc file")->required();
    eval_cmd->add_option("--split", split, "train, validation or test")->default_val("test");
    eval_cmd->add_option("--out", out_path, "write the report here instead of stdout");
    add_common(eval_cmd, common);

    CLI::App* predict = app.add_subcommand("predict", "decode one segment");
    predict->add_option("--manifest", manifest_path, "manifest JSONL")->required();
    predict->add_option("--checkpoint", checkpoint, "trained .fanc file")->required();
    predict->add_option("--segment", segment_id, "segment id from the manifest")->required();
    predict->add_option("--attention", attention_path, "also dump attention weights here");
    add_common(predict, common);

    CLI::App* inspect = app.add_subcommand("inspect", "attention offset summary");
    inspect->add_option("--manifest", manifest_path, "manifest JSONL")->required();
    inspect->add_option("--checkpoint", checkpoint, "trained .fanc file")->required();
    inspect->add_option("--split", split, "split to inspect")->default_val("train");
    inspect->add_option("--out", out_path, "also write the JSON report here");
    add_common(inspect, common);

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "train and score group subsets");
    ablate_cmd->add_option("--manifest", manifest_path, "manifest JSONL")->required();
    ablate_cmd->add_option("--out", out_path, "directory for per-subset runs")->required();
    ablate_cmd->add_option("--groups", subset_args,
                           "comma-separated subset (repeatable; default: singles plus all)");
    add_common(ablate_cmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error class=usage " << e.what() << "\n";
        return static_cast<int>(ErrorClass::usage);
    }

    try {
        if (extract->parsed()) return run_extract(common, frames_dir, pose_path, out_path);
        if (onsets->parsed()) return run_onsets(audio_path, onset_frames, onset_fps, out_path);
        if (synth->parsed()) {
            return run_synth(common, sp, offset_args, sources_arg, out_path);
        }
        if (dataset->parsed()) return run_dataset(manifest_path);
        if (train_cmd->parsed()) return run_train(common, manifest_path, out_path);
        if (eval_cmd->parsed())
            return run_eval(common, manifest_path, checkpoint, split, out_path);
        if (predict->parsed())
            return run_predict(common, manifest_path, checkpoint, segment_id, attention_path);
        if (inspect->parsed())
            return run_inspect(common, manifest_path, checkpoint, split, out_path);
        if (ablate_cmd->parsed())
            return run_ablate(common, manifest_path, subset_args, out_path);
    } catch (const Error& e) {
        std::cerr << "error class=" << error_class_name(e.error_class()) << " " << e.what()
                  << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error class=generic " << e.what() << "\n";
        return static_cast<int>(ErrorClass::generic);
    }
    return 0;
}
