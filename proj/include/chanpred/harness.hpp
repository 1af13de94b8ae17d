// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "chanpred/channel3d.hpp"
#include "chanpred/estimation.hpp"
#include "chanpred/lstm.hpp"
#include "chanpred/metrics.hpp"
#include "chanpred/predictor.hpp"

namespace chanpred::harness {

/// Table-1 scenario parameters plus the physical knobs the configuration
/// exposes (carrier, subcarrier spacing, shadow-fading spread).
struct Scenario {
    int dft_size = 128;
    int n_taps = 5;
    double path_length_m = 100.0;
    double speed_mps = 10.0;
    double dt_s = 5e-3;
    double d_dec_m = 5.0;
    double kf_mu_db = -3.0;
    double kf_sigma_db = 0.5;
    int csi_size = 2000;
    int dataset_size = 20000;
    std::string modulation = "16QAM";
    double beta = 17.0 / 9.0;
    int hidden_neurons = 200;

    double carrier_hz = 650e6;
    double subcarrier_spacing_hz = 15e3;
    double shadow_fading_sigma_db = 3.0;
    double azimuth_arrival_spread_deg = 40.0;
    double azimuth_departure_spread_deg = 15.0;
    double zenith_spread_deg = 5.0;
};

struct ExperimentConfig {
    Scenario scenario;
    std::vector<double> ssnr_sweep_db = {0, 5, 10, 15, 20, 25, 30, 35, 40};
    int n_realizations = 10;
    double train_fraction = 0.8;
    std::uint64_t seed = 1;
    std::string estimator = "both";  // "LS" | "LSMMSE" | "both"
    std::vector<std::string> predictor_modes = {"interpolation", "open_loop", "closed_loop"};
    std::string output_dir = "out";

    // Training
    int epochs = 125;
    int batch_size = 128;
    int bptt_window = 50;
    double learning_rate = 1e-3;
    int max_train_sequences = 256;  // 0 = all (realization x subcarrier) sequences
    // One-step-ahead supervision: "truth" pairs each estimate with the true
    // next-frame response; "estimates" is fully self-supervised.
    std::string train_targets = "truth";
    // Scheduled-sampling probability handed to lstm::train (feedback-stable
    // closed-loop inference needs a nonzero value).
    double scheduled_sampling = 0.5;
    // Independent training restarts; the candidate with the best closed-loop
    // validation score on the training tail is kept.
    int training_restarts = 1;
    // Which estimate stream feeds the trainer: "best" trains one predictor per
    // SSNR on the LS-MMSE sequences and deploys it for each estimator's cells;
    // "fixed" trains a single predictor on the LS-MMSE sequences at the highest
    // swept SSNR and deploys it everywhere; "matched" retrains per cell on the
    // cell's own estimator stream.
    std::string train_source = "fixed";

    // Inference protocol. closed_loop_resync = 0 free-runs the whole test
    // split from the warmed state (no fresh estimates consumed); a positive
    // value consumes one estimate every that-many frames.
    int closed_loop_resync = 16;
    int warmup_frames = 64;

    // Estimator options
    bool mmse_scalar = false;  // per-subcarrier scalar MMSE instead of the vector filter
    bool oracle_rhh = false;   // build R_hh from the true channel rather than LS estimates

    // Model handling
    bool per_subcarrier_model = false;  // one model per subcarrier instead of shared weights
    bool load_models = false;           // load checkpoints; missing checkpoint is an error
    bool save_models = false;           // persist checkpoints under output_dir/models

    int threads = 0;  // 0 = hardware concurrency

    void validate() const;
    void apply_quick_profile();

    /// Frames in the training split (first part of each realization).
    int train_frames() const;

    std::string to_json_string() const;
    static ExperimentConfig from_json_string(const std::string& text);
    static ExperimentConfig from_json_file(const std::filesystem::path& path);

    /// FNV-1a hash of the canonical JSON dump.
    std::string fingerprint() const;

    channel3d::Geometry geometry() const;
    channel3d::CorrelationConfig correlation() const;
    channel3d::ScenarioParams scenario_params() const;
    linksim::Modulation modulation() const;
};

/// In-memory dataset: one trace per realization plus the LS / LS-MMSE
/// estimate series at every sweep SSNR (both derived from the same received
/// pilots).
struct RealizationData {
    channel3d::ChannelTrace trace;
    std::vector<estimation::EstimateSeries> ls;      // indexed by sweep position
    std::vector<estimation::EstimateSeries> lsmmse;  // indexed by sweep position
};

struct Dataset {
    std::vector<RealizationData> realizations;
};

/// Sample counts implied by a configuration (scale bookkeeping).
struct DatasetPlan {
    std::int64_t n_samples = 0;
    std::int64_t n_train = 0;
    std::int64_t n_test = 0;
};

DatasetPlan plan_dataset(const ExperimentConfig& config);

/// Generates the full dataset in memory; deterministic per (config, seed).
Dataset generate_dataset(const ExperimentConfig& config);

/// Generates and persists the dataset plus a manifest under config.output_dir.
void write_dataset(const ExperimentConfig& config, const Dataset& dataset);

/// One averaged sweep cell plus the per-realization reports it averages.
struct SweepRow {
    std::string estimator;
    std::string mode;
    double ssnr_db = 0.0;
    double nmse_real = 0.0;
    double nmse_imag = 0.0;
    double nmse_avg = 0.0;
    int n_realizations = 0;
    bool failed = false;
    std::vector<metrics::NmseReport> realization_reports;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::string config_fingerprint;
    std::uint64_t seed = 0;
};

/// Runs every requested (estimator, mode, ssnr) cell: trains (or loads) the
/// shared predictor per (estimator, ssnr), evaluates each realization's test
/// split, and averages the NMSE reports across realizations. A diverged
/// training marks the affected cells failed and the sweep continues.
SweepResult run_sweep(const ExperimentConfig& config);

/// Same, reusing an already generated dataset.
SweepResult run_sweep(const ExperimentConfig& config, const Dataset& dataset);

/// CSV with header estimator,mode,ssnr_db,nmse_real,nmse_imag,nmse_avg,
/// nmse_avg_db,n_realizations,seed; rows ordered by (estimator, mode, ssnr).
void emit_csv(const SweepResult& result, const std::filesystem::path& path);
std::string render_csv(const SweepResult& result);

/// Pretty-prints a sweep CSV (the `report` verb).
std::string render_report(const std::filesystem::path& csv_path);

}  // namespace chanpred::harness
