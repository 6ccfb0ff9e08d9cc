#include "fan/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fan/adam.h"
#include "fan/error.h"
#include "fan/model.h"
#include "fan/rng.h"

namespace fan {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348464C;

struct LoadedSegment {
    std::string id;
    std::vector<Tensor<float>> inputs;
    std::vector<std::uint8_t> labels;
};

std::vector<LoadedSegment> load_split(const DatasetManifest& manifest,
                                      const std::vector<const SegmentRecord*>& records,
                                      const TrainConfig& cfg) {
    std::vector<LoadedSegment> out;
    out.reserve(records.size());
    for (const SegmentRecord* rec : records) {
        const MaterializedSegment seg = materialize_segment(manifest, *rec, cfg);
        LoadedSegment loaded;
        loaded.id = seg.id;
        loaded.inputs = model_inputs<float>(cfg, seg.streams);
        loaded.labels = seg.labels;
        out.push_back(std::move(loaded));
    }
    return out;
}

Metrics eval_loaded(const FanParams<float>& params, const std::vector<LoadedSegment>& segs,
                    Counts* counts_out = nullptr) {
    Counts counts;
    for (const LoadedSegment& seg : segs) {
        const Prediction<float> pred = fan_predict(params, seg.inputs);
        counts += count_onsets(pred.labels, seg.labels);
    }
    if (counts_out) *counts_out = counts;
    return metrics_from_counts(counts);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest,
                  const std::string& out_dir) {
    cfg.validate();
    const auto train_records = manifest.split_records("train");
    if (train_records.empty()) {
        throw contract_error("train: manifest has no train split");
    }
    const auto train_set = load_split(manifest, train_records, cfg);
    const auto val_set = load_split(manifest, manifest.split_records("validation"), cfg);

    fs::create_directories(out_dir);
    const std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();
    const std::string best_path = (fs::path(out_dir) / "best.fanc").string();
    const std::string last_path = (fs::path(out_dir) / "last.fanc").string();
    std::ofstream log(log_path, std::ios::binary);
    if (!log) {
        throw Error(ErrorClass::generic, "cannot write " + log_path);
    }

    FanParams<float> params = init_fan_params<float>(cfg);
    auto named = params.named_tensors();
    std::vector<AdamState<float>> opt;
    opt.reserve(named.size());
    for (const auto& [name, tensor] : named) opt.emplace_back(tensor->dims());
    AdamConfig<float> adam;
    adam.lr = static_cast<float>(cfg.lr);

    Rng shuffle_rng = Rng(cfg.seed).derive(kShuffleStream);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    result.log_path = log_path;
    result.checkpoint_path = best_path;
    double best_f1 = -1.0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // Fisher-Yates on a stream that runs on across epochs, so the visit
        // order depends only on cfg.seed and the epoch index.
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t count = std::min(cfg.batch, order.size() - start);
            ++result.steps;
            std::string ids;
            for (std::size_t b = 0; b < count; ++b) {
                if (b) ids += ", ";
                ids += train_set[order[start + b]].id;
            }

            double loss_value = 0.0;
            try {
                Tape<float> tape;
                const ModelVars<float> vars = register_params(tape, params, true);
                Var total{};
                for (std::size_t b = 0; b < count; ++b) {
                    const LoadedSegment& seg = train_set[order[start + b]];
                    const Var loss =
                        fan_segment_loss(tape, vars, cfg, seg.inputs, seg.labels);
                    total = total.valid() ? tape.add(total, loss) : loss;
                }
                const Var avg = tape.scale(total, 1.0f / static_cast<float>(count));
                loss_value = static_cast<double>(tape.value(avg)[0]);
                if (!std::isfinite(loss_value)) {
                    throw numeric_error("non-finite loss");
                }
                tape.backward(avg);
                for (std::size_t k = 0; k < named.size(); ++k) {
                    adam_step(*named[k].second, tape.grad(vars.ordered[k]), opt[k], adam);
                }
            } catch (const Error& e) {
                // tack the step and batch onto numeric failures so the run is
                // reproducible from the message alone
                if (e.error_class() == ErrorClass::numeric) {
                    throw numeric_error("train: step " + std::to_string(result.steps) +
                                        " (batch: " + ids + "): " + e.what());
                }
                throw;
            }

            if (result.steps == 1) result.first_loss = loss_value;
            result.final_loss = loss_value;
            json line;
            line["epoch"] = epoch;
            line["step"] = result.steps;
            line["loss"] = loss_value;
            log << line.dump() << "\n";
        }

        if (!val_set.empty()) {
            Metrics m;
            try {
                m = eval_loaded(params, val_set);
            } catch (const Error& e) {
                if (e.error_class() == ErrorClass::numeric) {
                    throw numeric_error("train: validation after epoch " +
                                        std::to_string(epoch) + ": " + e.what());
                }
                throw;
            }
            json line;
            line["epoch"] = epoch;
            line["val_precision"] = m.precision;
            line["val_recall"] = m.recall;
            line["val_f1"] = m.f1;
            log << line.dump() << "\n";
            if (m.f1 > best_f1) {
                best_f1 = m.f1;
                result.best_val_f1 = m.f1;
                result.best_epoch = epoch;
                save_checkpoint(best_path, params);
            }
        }
        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            save_checkpoint(last_path, params);
        }
    }
    if (val_set.empty()) {
        save_checkpoint(best_path, params);
    }
    log.flush();
    if (!log) {
        throw Error(ErrorClass::generic, "write failed: " + log_path);
    }
    return result;
}

EvalReport evaluate(const TrainConfig& cfg, const DatasetManifest& manifest,
                    const std::string& split, const std::string& checkpoint_path) {
    cfg.validate();
    const FanParams<float> params = load_checkpoint(checkpoint_path, cfg);
    const auto records = manifest.split_records(split);
    if (records.empty()) {
        throw contract_error("evaluate: split \"" + split + "\" is empty");
    }
    const auto segs = load_split(manifest, records, cfg);
    EvalReport report;
    report.segments = segs.size();
    report.metrics = eval_loaded(params, segs, &report.counts);
    return report;
}

AttentionReport inspect_attention(const TrainConfig& cfg, const DatasetManifest& manifest,
                                  const std::string& split,
                                  const std::string& checkpoint_path) {
    cfg.validate();
    if (cfg.t < 2 * cfg.p + 1) {
        throw contract_error("inspect_attention: no step has a full window (t=" +
                             std::to_string(cfg.t) + ", p=" + std::to_string(cfg.p) + ")");
    }
    const FanParams<float> params = load_checkpoint(checkpoint_path, cfg);
    const auto records = manifest.split_records(split);
    if (records.empty()) {
        throw contract_error("inspect_attention: split \"" + split + "\" is empty");
    }
    const auto segs = load_split(manifest, records, cfg);

    AttentionReport report;
    report.segments = segs.size();
    report.interior_steps = cfg.t - 2 * cfg.p;
    report.groups.resize(cfg.groups.size());
    for (std::size_t g = 0; g < cfg.groups.size(); ++g) {
        report.groups[g].group = cfg.groups[g];
    }

    for (const LoadedSegment& seg : segs) {
        AttentionRecord<float> rec;
        fan_predict(params, seg.inputs, &rec);
        for (std::size_t g = 0; g < cfg.groups.size(); ++g) {
            for (std::size_t t = cfg.p; t + cfg.p < cfg.t; ++t) {
                const std::vector<float>& row = rec.weights[g][t];
                const double sum = std::accumulate(row.begin(), row.end(), 0.0);
                if (std::abs(sum - 1.0) > 1e-6) {
                    throw numeric_error("inspect_attention: segment " + seg.id +
                                        " attention row sums to " + std::to_string(sum));
                }
                const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
                if (*hi - *lo <= 1e-9f) {
                    ++report.groups[g].uniform_rows;
                    continue;
                }
                const auto peak = std::max_element(row.begin(), row.end());
                const int offset = static_cast<int>(peak - row.begin()) -
                                   static_cast<int>(cfg.p);
                ++report.groups[g].offset_counts[offset];
            }
        }
    }

    for (GroupAttentionStats& stats : report.groups) {
        std::size_t total = 0;
        std::size_t best = 0;
        for (const auto& [offset, count] : stats.offset_counts) {
            total += count;
            if (count > best) {
                best = count;
                stats.modal_offset = offset;
            }
        }
        if (total > 0) {
            stats.modal_share = static_cast<double>(best) / static_cast<double>(total);
        }
    }
    return report;
}

std::string attention_report_to_json(const AttentionReport& report) {
    json j;
    j["segments"] = report.segments;
    j["interior_steps"] = report.interior_steps;
    j["groups"] = json::array();
    for (const GroupAttentionStats& stats : report.groups) {
        json g;
        g["group"] = stats.group;
        g["uniform_rows"] = stats.uniform_rows;
        json offsets = json::object();
        for (const auto& [offset, count] : stats.offset_counts) {
            offsets[std::to_string(offset)] = count;
        }
        g["offsets"] = offsets;
        if (stats.offset_counts.empty()) {
            g["modal_offset"] = nullptr;
            g["modal_share"] = nullptr;
        } else {
            g["modal_offset"] = stats.modal_offset;
            g["modal_share"] = stats.modal_share;
        }
        j["groups"].push_back(g);
    }
    return j.dump(2) + "\n";
}

std::string attention_report_table(const AttentionReport& report) {
    std::size_t name_width = 5;
    for (const GroupAttentionStats& stats : report.groups) {
        name_width = std::max(name_width, stats.group.size());
    }
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_width)) << "group" << std::right
       << std::setw(8) << "modal" << std::setw(8) << "share" << std::setw(9) << "uniform"
       << "\n";
    for (const GroupAttentionStats& stats : report.groups) {
        os << std::left << std::setw(static_cast<int>(name_width)) << stats.group
           << std::right;
        if (stats.offset_counts.empty()) {
            os << std::setw(8) << "uniform" << std::setw(8) << "-";
        } else {
            os << std::setw(8) << stats.modal_offset << std::setw(8) << std::fixed
               << std::setprecision(3) << stats.modal_share;
        }
        os << std::setw(9) << stats.uniform_rows << "\n";
    }
    return os.str();
}

AblationReport ablate(const TrainConfig& cfg, const DatasetManifest& manifest,
                      const std::vector<std::vector<std::string>>& subsets,
                      const std::string& out_dir) {
    if (subsets.empty()) {
        throw contract_error("ablate: no group subsets given");
    }
    fs::create_directories(out_dir);
    AblationReport report;
    for (const std::vector<std::string>& subset : subsets) {
        if (subset.empty()) {
            throw contract_error("ablate: empty group subset");
        }
        std::set<std::string> seen;
        std::string name;
        for (const std::string& group : subset) {
            if (std::find(cfg.groups.begin(), cfg.groups.end(), group) == cfg.groups.end()) {
                throw contract_error("ablate: group " + group + " is not active");
            }
            if (!seen.insert(group).second) {
                throw contract_error("ablate: duplicate group " + group);
            }
            if (!name.empty()) name += "+";
            name += group;
        }
        TrainConfig sub = cfg;
        sub.groups = subset;

        AblationRun run;
        run.groups = subset;
        const TrainResult trained = train(sub, manifest, (fs::path(out_dir) / name).string());
        run.best_val_f1 = trained.best_val_f1;
        run.test = evaluate(sub, manifest, "test", trained.checkpoint_path);
        report.runs.push_back(std::move(run));
    }

    const std::string json_path = (fs::path(out_dir) / "ablation.json").string();
    std::ofstream os(json_path, std::ios::binary);
    if (!os) {
        throw Error(ErrorClass::generic, "cannot write " + json_path);
    }
    os << ablation_report_to_json(report);
    return report;
}

std::string ablation_report_to_json(const AblationReport& report) {
    json j;
    j["runs"] = json::array();
    for (const AblationRun& run : report.runs) {
        json r;
        r["groups"] = run.groups;
        r["best_val_f1"] = run.best_val_f1;
        r["test"]["segments"] = run.test.segments;
        r["test"]["tp"] = run.test.counts.tp;
        r["test"]["fp"] = run.test.counts.fp;
        r["test"]["fn"] = run.test.counts.fn;
        r["test"]["precision"] = run.test.metrics.precision;
        r["test"]["recall"] = run.test.metrics.recall;
        r["test"]["f1"] = run.test.metrics.f1;
        j["runs"].push_back(r);
    }
    return j.dump(2) + "\n";
}

std::string ablation_report_table(const AblationReport& report) {
    std::size_t name_width = 6;
    std::vector<std::string> names;
    for (const AblationRun& run : report.runs) {
        std::string name;
        for (const std::string& group : run.groups) {
            if (!name.empty()) name += "+";
            name += group;
        }
        name_width = std::max(name_width, name.size());
        names.push_back(std::move(name));
    }
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_width)) << "groups" << std::right
       << std::setw(9) << "val_f1" << std::setw(11) << "precision" << std::setw(8)
       << "recall" << std::setw(8) << "f1" << "\n";
    os << std::fixed << std::setprecision(3);
    for (std::size_t i = 0; i < report.runs.size(); ++i) {
        const AblationRun& run = report.runs[i];
        os << std::left << std::setw(static_cast<int>(name_width)) << names[i] << std::right
           << std::setw(9) << run.best_val_f1 << std::setw(11) << run.test.metrics.precision
           << std::setw(8) << run.test.metrics.recall << std::setw(8) << run.test.metrics.f1
           << "\n";
    }
    return os.str();
}

}  // namespace fan
