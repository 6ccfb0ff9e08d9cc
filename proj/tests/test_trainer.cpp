#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fan/dataset.h"
#include "fan/error.h"
#include "fan/metrics.h"
#include "fan/model.h"
#include "fan/rng.h"
#include "fan/tensor_io.h"
#include "fan/trainer.h"

using namespace fan;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.t = 10;
    cfg.height = 12;
    cfg.width = 12;
    cfg.group_width = 4;
    cfg.flow_window = 3;
    cfg.hidden = 8;
    cfg.layers = 1;
    cfg.fc_hidden = 8;
    cfg.encoder.channels = {4};
    cfg.batch = 4;
    cfg.epochs = 2;
    cfg.lr = 1e-3;
    cfg.seed = 3;
    return cfg;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir;
}

std::string read_bytes(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    return std::string((std::istreambuf_iterator<char>(is)),
                       std::istreambuf_iterator<char>());
}

DatasetManifest small_corpus(const TrainConfig& cfg, const fs::path& dir,
                             std::size_t videos = 2, std::uint64_t seed = 17) {
    SynthParams sp;
    sp.videos = videos;
    sp.frames_per_video = 40;
    sp.seed = seed;
    return generate_synthetic(cfg, sp, dir.string());
}

}  // namespace

TEST_CASE("onset counting is per-frame exact") {
    const std::vector<std::uint8_t> pred{1, 0, 1, 1, 0, 0};
    const std::vector<std::uint8_t> truth{1, 1, 0, 1, 0, 0};
    const Counts c = count_onsets(pred, truth);
    CHECK(c.tp == 2);
    CHECK(c.fp == 1);
    CHECK(c.fn == 1);

    Counts sum = c;
    sum += count_onsets(truth, truth);  // 3 more true positives
    CHECK(sum.tp == 5);
    CHECK(sum.fp == 1);
    CHECK(sum.fn == 1);

    CHECK_THROWS_AS(count_onsets({1, 0}, {1}), Error);
}

TEST_CASE("degenerate denominators resolve to zero") {
    SUBCASE("nothing predicted, nothing true") {
        const Metrics m = metrics_from_counts(Counts{0, 0, 0});
        CHECK(m.precision == 0.0);
        CHECK(m.recall == 0.0);
        CHECK(m.f1 == 0.0);
    }
    SUBCASE("nothing predicted, onsets missed") {
        const Metrics m = metrics_from_counts(Counts{0, 0, 5});
        CHECK(m.precision == 0.0);
        CHECK(m.recall == 0.0);
        CHECK(m.f1 == 0.0);
    }
    SUBCASE("false alarms only") {
        const Metrics m = metrics_from_counts(Counts{0, 3, 0});
        CHECK(m.precision == 0.0);
        CHECK(m.recall == 0.0);
        CHECK(m.f1 == 0.0);
    }
    SUBCASE("perfect") {
        const Metrics m = metrics_from_counts(Counts{5, 0, 0});
        CHECK(m.precision == 1.0);
        CHECK(m.recall == 1.0);
        CHECK(m.f1 == 1.0);
    }
    SUBCASE("mixed") {
        const Metrics m = metrics_from_counts(Counts{3, 1, 2});
        CHECK(m.precision == doctest::Approx(0.75));
        CHECK(m.recall == doctest::Approx(0.6));
        CHECK(m.f1 == doctest::Approx(2.0 * 0.75 * 0.6 / 1.35));
    }
}

TEST_CASE("f1 is the harmonic mean") {
    // the reference operating point: P 0.782, R 0.810 round to F1 0.796
    const double f1 = f1_score(0.782, 0.810);
    CHECK(std::round(f1 * 1000.0) / 1000.0 == doctest::Approx(0.796));

    CHECK(f1_score(0.0, 0.9) == 0.0);
    CHECK(f1_score(1.0, 1.0) == 1.0);
    CHECK_THROWS_AS(f1_score(-0.1, 0.5), Error);
    CHECK_THROWS_AS(f1_score(0.5, 1.5), Error);

    SUBCASE("bounded by min and max of the operands") {
        Rng rng(99);
        for (int i = 0; i < 500; ++i) {
            const double p = rng.uniform();
            const double r = rng.uniform();
            const double f = f1_score(p, r);
            CHECK(f >= std::min(p, r) - 1e-12);
            CHECK(f <= std::max(p, r) + 1e-12);
        }
    }
}

TEST_CASE("training is a pure function of config and corpus") {
    const TrainConfig cfg = small_config();
    const fs::path data = fresh_dir("fan_train_det_data");
    const DatasetManifest manifest = small_corpus(cfg, data);

    const fs::path run_a = fresh_dir("fan_train_det_a");
    const fs::path run_b = fresh_dir("fan_train_det_b");
    const TrainResult a = train(cfg, manifest, run_a.string());
    const TrainResult b = train(cfg, manifest, run_b.string());

    CHECK(a.steps == b.steps);
    CHECK(a.final_loss == b.final_loss);
    CHECK(read_bytes(run_a / "train_log.jsonl") == read_bytes(run_b / "train_log.jsonl"));
    CHECK(read_bytes(run_a / "best.fanc") == read_bytes(run_b / "best.fanc"));
    CHECK(read_bytes(run_a / "last.fanc") == read_bytes(run_b / "last.fanc"));

    SUBCASE("another seed trains differently") {
        TrainConfig other = cfg;
        other.seed = 4;
        const fs::path run_c = fresh_dir("fan_train_det_c");
        const TrainResult c = train(other, manifest, run_c.string());
        CHECK(c.final_loss != a.final_loss);
        fs::remove_all(run_c);
    }

    fs::remove_all(data);
    fs::remove_all(run_a);
    fs::remove_all(run_b);
}

TEST_CASE("the log carries step losses and validation metrics") {
    const TrainConfig cfg = small_config();
    const fs::path data = fresh_dir("fan_train_log_data");
    const DatasetManifest manifest = small_corpus(cfg, data);
    const fs::path run = fresh_dir("fan_train_log_run");
    const TrainResult result = train(cfg, manifest, run.string());

    std::ifstream is(run / "train_log.jsonl");
    REQUIRE(is.good());
    std::string line;
    std::size_t step_lines = 0;
    std::size_t val_lines = 0;
    std::size_t last_step = 0;
    while (std::getline(is, line)) {
        const json j = json::parse(line);
        REQUIRE(j.contains("epoch"));
        if (j.contains("step")) {
            ++step_lines;
            CHECK(j.at("step").get<std::size_t>() == step_lines);
            last_step = j.at("step").get<std::size_t>();
            CHECK(std::isfinite(j.at("loss").get<double>()));
        } else {
            ++val_lines;
            CHECK(j.contains("val_precision"));
            CHECK(j.contains("val_recall"));
            CHECK(j.contains("val_f1"));
        }
    }
    CHECK(step_lines == result.steps);
    CHECK(last_step == result.steps);
    CHECK(val_lines == cfg.epochs);  // one validation pass per epoch

    fs::remove_all(data);
    fs::remove_all(run);
}

TEST_CASE("a batch of one overfits") {
    TrainConfig cfg = small_config();
    cfg.lr = 3e-3;
    cfg.epochs = 100;
    cfg.batch = 8;

    const fs::path data = fresh_dir("fan_overfit_data");
    const DatasetManifest manifest = small_corpus(cfg, data);
    const auto train_records = manifest.split_records("train");
    REQUIRE(!train_records.empty());
    REQUIRE(train_records.size() <= cfg.batch);  // the whole split is one batch

    const fs::path run = fresh_dir("fan_overfit_run");
    const TrainResult result = train(cfg, manifest, run.string());
    CHECK(result.steps == cfg.epochs);
    // the contract: at least a 20% drop within 200 steps
    CHECK(result.final_loss < 0.8 * result.first_loss);

    fs::remove_all(data);
    fs::remove_all(run);
}

TEST_CASE("poisoned inputs are refused before training starts") {
    const TrainConfig cfg = small_config();
    const fs::path data = fresh_dir("fan_nan_data");
    const DatasetManifest manifest = small_corpus(cfg, data);
    REQUIRE(!manifest.records.empty());

    // overwrite one stored stream with NaNs
    const SegmentRecord* victim = manifest.split_records("train").front();
    const fs::path file = data / victim->features.at("scene_change");
    Tensor<float> bad = read_fant<float>(file.string());
    for (std::size_t i = 0; i < bad.numel(); ++i) {
        bad[i] = std::numeric_limits<float>::quiet_NaN();
    }
    write_fant(file.string(), bad);

    const fs::path run = fresh_dir("fan_nan_run");
    try {
        train(cfg, manifest, run.string());
        FAIL("expected a numeric refusal");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::numeric);
        CHECK(std::string(e.what()).find("scene_change") != std::string::npos);
    }
    fs::remove_all(data);
    fs::remove_all(run);
}

TEST_CASE("a diverging run aborts with the step and segment ids") {
    TrainConfig cfg = small_config();
    cfg.lr = 1e30;  // the first update throws every weight to +-lr
    cfg.epochs = 4;
    cfg.batch = 2;  // two steps per epoch, so step 2 sees the blown-up weights

    const fs::path data = fresh_dir("fan_diverge_data");
    const DatasetManifest manifest = small_corpus(cfg, data);
    const fs::path run = fresh_dir("fan_diverge_run");
    try {
        train(cfg, manifest, run.string());
        FAIL("expected a numeric abort");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::numeric);
        const std::string msg = e.what();
        CHECK(msg.find("train: step") != std::string::npos);
        // the batch ids are listed so the failing segments can be pulled
        bool named_any = false;
        for (const SegmentRecord& rec : manifest.records) {
            if (msg.find(rec.id) != std::string::npos) named_any = true;
        }
        CHECK(named_any);
    }
    fs::remove_all(data);
    fs::remove_all(run);
}

TEST_CASE("evaluation reloads the checkpoint it was trained with") {
    const TrainConfig cfg = small_config();
    const fs::path data = fresh_dir("fan_eval_data");
    const DatasetManifest manifest = small_corpus(cfg, data);
    const fs::path run = fresh_dir("fan_eval_run");
    const TrainResult result = train(cfg, manifest, run.string());
    REQUIRE(fs::exists(result.checkpoint_path));
    CHECK(result.best_epoch >= 1);

    const EvalReport on_val = evaluate(cfg, manifest, "validation", result.checkpoint_path);
    CHECK(on_val.segments > 0);
    // the best checkpoint was selected on exactly this split
    CHECK(on_val.metrics.f1 == doctest::Approx(result.best_val_f1));
    CHECK(on_val.counts.tp + on_val.counts.fn > 0);

    SUBCASE("a different config is refused") {
        TrainConfig other = cfg;
        other.lr = 1e-4;
        try {
            evaluate(other, manifest, "validation", result.checkpoint_path);
            FAIL("expected digest refusal");
        } catch (const Error& e) {
            CHECK(e.error_class() == ErrorClass::digest_mismatch);
        }
    }
    SUBCASE("an empty split is refused") {
        // two videos populate train and validation only
        CHECK_THROWS_AS(evaluate(cfg, manifest, "test", result.checkpoint_path), Error);
    }
    fs::remove_all(data);
    fs::remove_all(run);
}

TEST_CASE("attention inspection tallies offsets over interior steps") {
    const TrainConfig cfg = small_config();
    const fs::path data = fresh_dir("fan_att_data");
    const DatasetManifest manifest = small_corpus(cfg, data);
    const fs::path run = fresh_dir("fan_att_run");
    const TrainResult result = train(cfg, manifest, run.string());

    const AttentionReport report =
        inspect_attention(cfg, manifest, "train", result.checkpoint_path);
    CHECK(report.interior_steps == cfg.t - 2 * cfg.p);
    CHECK(report.segments == manifest.split_records("train").size());
    REQUIRE(report.groups.size() == cfg.groups.size());
    const std::size_t rows = report.segments * report.interior_steps;
    for (const GroupAttentionStats& stats : report.groups) {
        std::size_t tallied = stats.uniform_rows;
        for (const auto& [offset, count] : stats.offset_counts) {
            CHECK(offset >= -static_cast<int>(cfg.p));
            CHECK(offset <= static_cast<int>(cfg.p));
            tallied += count;
        }
        CHECK(tallied == rows);
        if (!stats.offset_counts.empty()) {
            CHECK(stats.modal_share > 0.0);
            CHECK(stats.modal_share <= 1.0);
        }
    }

    const std::string js = attention_report_to_json(report);
    const json parsed = json::parse(js);
    CHECK(parsed.at("segments").get<std::size_t>() == report.segments);
    CHECK(parsed.at("groups").size() == cfg.groups.size());
    const std::string table = attention_report_table(report);
    CHECK(table.find("group") != std::string::npos);
    CHECK(table.find(cfg.groups.front()) != std::string::npos);

    fs::remove_all(data);
    fs::remove_all(run);
}

TEST_CASE("flat attention reads as uniform") {
    const TrainConfig cfg = small_config();
    const fs::path data = fresh_dir("fan_att_flat_data");
    const DatasetManifest manifest = small_corpus(cfg, data);

    // zeroed projections score every window position equally
    FanParams<float> params = init_fan_params<float>(cfg);
    for (auto& w : params.wq) w = Tensor<float>(w.dims());
    for (auto& w : params.wk) w = Tensor<float>(w.dims());
    const fs::path ckpt = fs::temp_directory_path() / "fan_att_flat.fanc";
    save_checkpoint(ckpt.string(), params);

    const AttentionReport report = inspect_attention(cfg, manifest, "train", ckpt.string());
    const std::size_t rows = report.segments * report.interior_steps;
    for (const GroupAttentionStats& stats : report.groups) {
        CHECK(stats.uniform_rows == rows);
        CHECK(stats.offset_counts.empty());
    }
    const std::string table = attention_report_table(report);
    CHECK(table.find("uniform") != std::string::npos);
    const json parsed = json::parse(attention_report_to_json(report));
    CHECK(parsed.at("groups").at(0).at("modal_offset").is_null());

    fs::remove(ckpt);
    fs::remove_all(data);
}

TEST_CASE("ablation trains one model per subset") {
    TrainConfig cfg = small_config();
    cfg.epochs = 1;
    const fs::path data = fresh_dir("fan_abl_data");
    const DatasetManifest manifest = small_corpus(cfg, data, 3, 23);  // three videos fill all splits
    REQUIRE(!manifest.split_records("test").empty());

    const fs::path out = fresh_dir("fan_abl_out");
    const std::vector<std::vector<std::string>> subsets{
        {"frames"}, {"frames", "scene_change"}};
    const AblationReport report = ablate(cfg, manifest, subsets, out.string());
    REQUIRE(report.runs.size() == 2);
    CHECK(report.runs[0].groups == subsets[0]);
    CHECK(report.runs[1].groups == subsets[1]);
    CHECK(report.runs[0].test.segments == manifest.split_records("test").size());
    CHECK(fs::exists(out / "ablation.json"));
    CHECK(fs::exists(out / "frames" / "best.fanc"));
    CHECK(fs::exists(out / "frames+scene_change" / "best.fanc"));

    const json parsed = json::parse(read_bytes(out / "ablation.json"));
    REQUIRE(parsed.at("runs").size() == 2);
    CHECK(parsed.at("runs").at(1).at("groups").size() == 2);
    const std::string table = ablation_report_table(report);
    CHECK(table.find("frames+scene_change") != std::string::npos);

    SUBCASE("bad subsets are rejected up front") {
        CHECK_THROWS_AS(ablate(cfg, manifest, {}, out.string()), Error);
        CHECK_THROWS_AS(ablate(cfg, manifest, {{}}, out.string()), Error);
        CHECK_THROWS_AS(ablate(cfg, manifest, {{"frames", "frames"}}, out.string()), Error);
        CHECK_THROWS_AS(ablate(cfg, manifest, {{"glitter"}}, out.string()), Error);
    }

    fs::remove_all(data);
    fs::remove_all(out);
}
