// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <string>

#include "chanpred/harness.hpp"
#include "chanpred/io.hpp"

namespace harness = chanpred::harness;
namespace io = chanpred::io;
namespace fs = std::filesystem;

namespace {

// Small but complete configuration used by the orchestration tests.
harness::ExperimentConfig tiny_config() {
    harness::ExperimentConfig config;
    config.scenario.csi_size = 80;
    config.scenario.dft_size = 8;
    config.scenario.hidden_neurons = 8;
    config.n_realizations = 2;
    config.scenario.dataset_size = 160;
    config.ssnr_sweep_db = {0, 20};
    config.epochs = 3;
    config.batch_size = 32;
    config.bptt_window = 16;
    config.warmup_frames = 16;
    config.closed_loop_resync = 4;
    config.max_train_sequences = 8;
    config.seed = 11;
    config.threads = 1;
    return config;
}

}  // namespace

TEST_CASE("paper-scale dataset plan matches the published split") {
    harness::ExperimentConfig config;  // defaults: csi 2000, 10 realizations, 0.8 split
    const auto plan = harness::plan_dataset(config);
    CHECK(plan.n_samples == 20000);
    CHECK(plan.n_train == 16000);
    CHECK(plan.n_test == 4000);
}

TEST_CASE("quick profile keeps the dataset arithmetic consistent") {
    harness::ExperimentConfig config;
    config.apply_quick_profile();
    CHECK_NOTHROW(config.validate());
    CHECK(config.scenario.csi_size == 400);
    CHECK(config.n_realizations == 2);
    CHECK(config.scenario.hidden_neurons == 32);
    CHECK(config.epochs == 20);
    const auto plan = harness::plan_dataset(config);
    CHECK(plan.n_samples == 800);
}

TEST_CASE("validation rejects inconsistent dataset size") {
    harness::ExperimentConfig config;
    config.scenario.dataset_size = 12345;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}

TEST_CASE("validation rejects an empty mode set") {
    harness::ExperimentConfig config;
    config.predictor_modes.clear();
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}

TEST_CASE("validation rejects a bad train fraction") {
    harness::ExperimentConfig config;
    config.train_fraction = 1.0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}

TEST_CASE("config JSON round trip preserves the fingerprint") {
    auto config = tiny_config();
    config.estimator = "LSMMSE";
    config.predictor_modes = {"interpolation", "open_loop"};
    const std::string dumped = config.to_json_string();
    const auto restored = harness::ExperimentConfig::from_json_string(dumped);
    CHECK(restored.to_json_string() == dumped);
    CHECK(restored.fingerprint() == config.fingerprint());
    CHECK(restored.scenario.csi_size == 80);
    CHECK(restored.ssnr_sweep_db == config.ssnr_sweep_db);
}

TEST_CASE("dataset generation is deterministic per seed") {
    const auto config = tiny_config();
    const auto a = harness::generate_dataset(config);
    const auto b = harness::generate_dataset(config);
    REQUIRE(a.realizations.size() == 2);
    for (std::size_t r = 0; r < 2; ++r) {
        CHECK(a.realizations[r].trace.responses == b.realizations[r].trace.responses);
        for (std::size_t si = 0; si < config.ssnr_sweep_db.size(); ++si) {
            CHECK(a.realizations[r].ls[si].estimates == b.realizations[r].ls[si].estimates);
            CHECK(a.realizations[r].lsmmse[si].estimates ==
                  b.realizations[r].lsmmse[si].estimates);
        }
    }
}

TEST_CASE("persisted dataset files are byte-identical across runs") {
    auto config = tiny_config();
    const fs::path root = fs::temp_directory_path() / "chanpred_ds_test";
    fs::remove_all(root);

    config.output_dir = (root / "a").string();
    harness::write_dataset(config, harness::generate_dataset(config));
    config.output_dir = (root / "b").string();
    harness::write_dataset(config, harness::generate_dataset(config));

    // Compare every file pair (manifests differ only via output_dir).
    for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
        if (!entry.is_regular_file() || entry.path().extension() != ".bin") {
            continue;
        }
        const auto relative = fs::relative(entry.path(), root / "a");
        const auto twin = root / "b" / relative;
        REQUIRE(fs::exists(twin));
        CHECK(io::read_file_bytes(entry.path()) == io::read_file_bytes(twin));
    }

    // Round-trip one trace and one estimate file.
    const auto dataset = harness::generate_dataset(config);
    const auto trace = io::read_trace(root / "a" / "traces" / "trace_r0.bin");
    CHECK(trace.responses == dataset.realizations[0].trace.responses);
    const auto est = io::read_estimates(root / "a" / "estimates" / "ls_ssnr0_r0.bin");
    CHECK(est.estimates == dataset.realizations[0].ls[0].estimates);
    fs::remove_all(root);
}

TEST_CASE("sweep covers every requested cell exactly once, ordered") {
    auto config = tiny_config();
    config.predictor_modes = {"interpolation"};
    config.estimator = "both";
    config.ssnr_sweep_db = {30, 0, 10, 20, 5};  // deliberately unsorted
    const auto result = harness::run_sweep(config);
    REQUIRE(result.rows.size() == 10);  // 2 estimators x 1 mode x 5 ssnr
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(result.rows[i].estimator == "LS");
        CHECK(result.rows[5 + i].estimator == "LSMMSE");
    }
    const std::vector<double> expected{0, 5, 10, 20, 30};
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(result.rows[i].ssnr_db == expected[i]);
        CHECK(result.rows[5 + i].ssnr_db == expected[i]);
        CHECK(result.rows[i].n_realizations == 2);
        CHECK_FALSE(result.rows[i].failed);
    }
}

TEST_CASE("csv is stable, complete and carries the dB column") {
    auto config = tiny_config();
    config.predictor_modes = {"interpolation"};
    const auto result = harness::run_sweep(config);
    const std::string csv = harness::render_csv(result);

    const std::string header =
        "estimator,mode,ssnr_db,nmse_real,nmse_imag,nmse_avg,nmse_avg_db,n_realizations,seed";
    CHECK(csv.substr(0, header.size()) == header);
    const auto lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
    CHECK(lines == result.rows.size() + 1);

    // nmse_avg_db column is 10*log10(nmse_avg).
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        std::vector<std::string> fields;
        std::stringstream fields_in(line);
        std::string field;
        while (std::getline(fields_in, field, ',')) {
            fields.push_back(field);
        }
        REQUIRE(fields.size() == 9);
        const double avg = std::stod(fields[5]);
        const double avg_db = std::stod(fields[6]);
        CHECK(avg_db == doctest::Approx(10.0 * std::log10(avg)).epsilon(1e-6));
    }

    // Re-render of the same result is byte-identical.
    CHECK(harness::render_csv(result) == csv);
}

TEST_CASE("full sweep runs every mode and is reproducible") {
    auto config = tiny_config();
    const auto result_a = harness::run_sweep(config);
    const auto result_b = harness::run_sweep(config);
    CHECK(harness::render_csv(result_a) == harness::render_csv(result_b));
    REQUIRE(result_a.rows.size() == 2 * 3 * 2);  // estimators x modes x ssnr
    for (const auto& row : result_a.rows) {
        CHECK_FALSE(row.failed);
        CHECK(std::isfinite(row.nmse_avg));
        CHECK(row.nmse_avg >= 0.0);
        CHECK(row.nmse_avg == doctest::Approx(0.5 * (row.nmse_real + row.nmse_imag))
                                  .epsilon(1e-12));
    }
}

TEST_CASE("sweep reuses checkpoints in load mode and errors when missing") {
    auto config = tiny_config();
    config.predictor_modes = {"open_loop"};
    config.ssnr_sweep_db = {10};
    const fs::path root = fs::temp_directory_path() / "chanpred_ckpt_test";
    fs::remove_all(root);
    config.output_dir = root.string();

    config.load_models = true;
    CHECK_THROWS_AS(harness::run_sweep(config), std::runtime_error);  // nothing saved yet

    config.load_models = false;
    config.save_models = true;
    const auto trained = harness::run_sweep(config);

    config.save_models = false;
    config.load_models = true;
    const auto loaded = harness::run_sweep(config);
    CHECK(harness::render_csv(trained) == harness::render_csv(loaded));
    fs::remove_all(root);
}

TEST_CASE("report renders an aligned table from the CSV") {
    auto config = tiny_config();
    config.predictor_modes = {"interpolation"};
    config.ssnr_sweep_db = {10};
    const auto result = harness::run_sweep(config);
    const fs::path path = fs::temp_directory_path() / "chanpred_report_test.csv";
    harness::emit_csv(result, path);
    const std::string table = harness::render_report(path);
    CHECK(table.find("estimator") != std::string::npos);
    CHECK(table.find("LSMMSE") != std::string::npos);
    fs::remove(path);
}

TEST_CASE("split hygiene: training rows precede test rows") {
    const auto config = tiny_config();
    const int train = config.train_frames();
    CHECK(train == 64);  // 0.8 * 80
    CHECK(train < config.scenario.csi_size);
}
