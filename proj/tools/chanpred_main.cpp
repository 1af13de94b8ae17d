// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chanpred/harness.hpp"
#include "chanpred/io.hpp"
#include "chanpred/lstm.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool quick = false;
    std::string out_dir;
    std::vector<std::string> modes;
    std::vector<std::string> estimators;
    std::vector<double> ssnr_db;
    int threads = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Experiment config JSON file")
        ->envname("CHANPRED_CONFIG");
    auto* seed_opt =
        cmd->add_option("--seed", args.seed, "Master seed")->envname("CHANPRED_SEED");
    cmd->callback([&args, seed_opt] { args.seed_set = seed_opt->count() > 0; });
    cmd->add_flag("--quick", args.quick, "Apply the quick desk-scale profile")
        ->envname("CHANPRED_QUICK");
    cmd->add_option("--out", args.out_dir, "Output directory")->envname("CHANPRED_OUT");
    cmd->add_option("--modes", args.modes,
                    "Predictor modes (interpolation, open_loop, closed_loop)")
        ->delimiter(',')
        ->envname("CHANPRED_MODES");
    cmd->add_option("--estimators", args.estimators, "Estimators (LS, LSMMSE)")
        ->delimiter(',')
        ->envname("CHANPRED_ESTIMATORS");
    cmd->add_option("--ssnr", args.ssnr_db, "SSNR sweep values in dB")
        ->delimiter(',')
        ->envname("CHANPRED_SSNR");
    cmd->add_option("--threads", args.threads, "Worker threads (0 = hardware)")
        ->envname("CHANPRED_THREADS");
}

chanpred::harness::ExperimentConfig build_config(const CommonArgs& args) {
    using chanpred::harness::ExperimentConfig;
    ExperimentConfig config;
    if (!args.config_path.empty()) {
        config = ExperimentConfig::from_json_file(args.config_path);
    }
    if (args.quick) {
        config.apply_quick_profile();
    }
    if (args.seed_set) {
        config.seed = args.seed;
    }
    if (!args.out_dir.empty()) {
        config.output_dir = args.out_dir;
    }
    if (!args.modes.empty()) {
        config.predictor_modes = args.modes;
    }
    if (!args.estimators.empty()) {
        if (args.estimators.size() == 1) {
            config.estimator = args.estimators.front();
        } else {
            config.estimator = "both";
        }
    }
    if (!args.ssnr_db.empty()) {
        config.ssnr_sweep_db = args.ssnr_db;
        config.scenario.dataset_size = config.scenario.csi_size * config.n_realizations;
    }
    if (args.threads >= 0) {
        config.threads = args.threads;
    }
    config.validate();
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"chanpred: 3D fading-channel simulation, estimation and DL prediction workbench"};
    app.require_subcommand(1);

    CommonArgs args;

    auto* generate = app.add_subcommand("generate", "Generate and persist the dataset");
    add_common(generate, args);

    auto* train = app.add_subcommand("train", "Train one predictor cell and save its checkpoint");
    add_common(train, args);
    std::string train_estimator = "LSMMSE";
    double train_ssnr_db = 10.0;
    train->add_option("--estimator", train_estimator, "Estimator feeding the predictor");
    train->add_option("--ssnr-db", train_ssnr_db, "SSNR cell to train at (dB)");

    auto* sweep = app.add_subcommand("sweep", "Run the full NMSE comparison sweep");
    add_common(sweep, args);

    auto* report = app.add_subcommand("report", "Pretty-print a sweep CSV");
    std::string report_csv;
    report->add_option("--in", report_csv, "CSV file produced by sweep")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (report->parsed()) {
            std::cout << chanpred::harness::render_report(report_csv);
            return 0;
        }

        auto config = build_config(args);
        namespace fs = std::filesystem;

        if (generate->parsed()) {
            const auto dataset = chanpred::harness::generate_dataset(config);
            chanpred::harness::write_dataset(config, dataset);
            const auto plan = chanpred::harness::plan_dataset(config);
            std::cout << "dataset written to " << config.output_dir << ": " << plan.n_samples
                      << " samples (" << plan.n_train << " train / " << plan.n_test << " test)\n";
            return 0;
        }

        if (train->parsed()) {
            config.estimator = train_estimator;
            config.ssnr_sweep_db = {train_ssnr_db};
            config.scenario.dataset_size = config.scenario.csi_size * config.n_realizations;
            config.predictor_modes = {"open_loop"};
            config.save_models = true;
            config.validate();
            const auto result = chanpred::harness::run_sweep(config);
            std::cout << "trained " << train_estimator << " @ " << train_ssnr_db
                      << " dB; checkpoint under " << config.output_dir << "/models\n";
            for (const auto& row : result.rows) {
                std::cout << row.estimator << " " << row.mode << " ssnr " << row.ssnr_db
                          << " dB: nmse_avg " << row.nmse_avg << "\n";
            }
            return 0;
        }

        if (sweep->parsed()) {
            const auto result = chanpred::harness::run_sweep(config);
            const fs::path csv_path = fs::path(config.output_dir) / "sweep.csv";
            chanpred::harness::emit_csv(result, csv_path);

            nlohmann::json manifest;
            manifest["format"] = "chanpred-run";
            manifest["version"] = 1;
            manifest["config_fingerprint"] = result.config_fingerprint;
            manifest["config"] = nlohmann::json::parse(config.to_json_string());
            std::ofstream mout(fs::path(config.output_dir) / "run_manifest.json",
                               std::ios::trunc);
            mout << manifest.dump(2) << "\n";

            std::cout << chanpred::harness::render_report(csv_path);
            std::cout << "csv: " << csv_path.string() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
