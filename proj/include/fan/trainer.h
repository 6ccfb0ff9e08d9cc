#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "fan/config.h"
#include "fan/dataset.h"
#include "fan/metrics.h"

namespace fan {

struct TrainResult {
    std::string checkpoint_path;  // best validation F1; final parameters if no split
    std::string log_path;
    double best_val_f1 = 0.0;
    std::size_t best_epoch = 0;   // 1-based; 0 when no validation pass ran
    std::size_t steps = 0;
    double first_loss = 0.0;
    double final_loss = 0.0;
};

// Full training run over the manifest's train split. Everything that moves is
// drawn from cfg.seed, so a repeated run writes byte-identical artifacts:
//   <out_dir>/train_log.jsonl   one line per step {epoch, step, loss} and one
//                               per validation pass {epoch, val_*}, no clocks
//   <out_dir>/best.fanc         parameters at the best validation F1
//   <out_dir>/last.fanc         parameters every cfg.checkpoint_every epochs
// A numeric failure aborts with the step and the segment ids in the batch.
TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest,
                  const std::string& out_dir);

struct EvalReport {
    std::size_t segments = 0;
    Counts counts;
    Metrics metrics;
};

// Viterbi decoding over one split, micro-averaged per-frame counts. The
// checkpoint must carry the digest of cfg.
EvalReport evaluate(const TrainConfig& cfg, const DatasetManifest& manifest,
                    const std::string& split, const std::string& checkpoint_path);

// Where a group's attention lands relative to the query step, tallied over
// interior steps (the ones with a full window of p on both sides). A row
// whose weights are numerically flat carries no alignment signal and is
// tallied as uniform instead of contributing an offset.
struct GroupAttentionStats {
    std::string group;
    std::map<int, std::size_t> offset_counts;  // argmax position minus t
    std::size_t uniform_rows = 0;
    int modal_offset = 0;
    double modal_share = 0.0;  // fraction of the non-uniform rows at the mode
};

struct AttentionReport {
    std::size_t segments = 0;
    std::size_t interior_steps = 0;  // per segment
    std::vector<GroupAttentionStats> groups;
};

AttentionReport inspect_attention(const TrainConfig& cfg, const DatasetManifest& manifest,
                                  const std::string& split,
                                  const std::string& checkpoint_path);

std::string attention_report_to_json(const AttentionReport& report);
std::string attention_report_table(const AttentionReport& report);

struct AblationRun {
    std::vector<std::string> groups;
    double best_val_f1 = 0.0;
    EvalReport test;
};

struct AblationReport {
    std::vector<AblationRun> runs;
};

// Trains one model per group subset (the feature width shrinks with the
// subset) and scores each on the test split. Writes <out_dir>/ablation.json
// next to the per-run training directories.
AblationReport ablate(const TrainConfig& cfg, const DatasetManifest& manifest,
                      const std::vector<std::vector<std::string>>& subsets,
                      const std::string& out_dir);

std::string ablation_report_to_json(const AblationReport& report);
std::string ablation_report_table(const AblationReport& report);

}  // namespace fan
