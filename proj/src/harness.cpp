// SPDX-License-Identifier: Apache-2.0

#include "chanpred/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "chanpred/io.hpp"
#include "chanpred/linksim.hpp"
#include "chanpred/rng.hpp"

namespace chanpred::harness {

namespace {

using nlohmann::json;

// Stream tags for the seed-derivation tree.
constexpr std::uint64_t kTagTrace = 1;
constexpr std::uint64_t kTagPilot = 2;
constexpr std::uint64_t kTagNoise = 3;
constexpr std::uint64_t kTagTrain = 4;

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string format_ssnr(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

void run_jobs(int n_jobs, int threads, const std::function<void(int)>& job) {
    if (threads <= 0) {
        threads = static_cast<int>(std::thread::hardware_concurrency());
    }
    threads = std::max(1, std::min(threads, n_jobs));
    if (threads == 1) {
        for (int j = 0; j < n_jobs; ++j) {
            job(j);
        }
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_jobs));
    auto worker = [&] {
        for (int j = next.fetch_add(1); j < n_jobs; j = next.fetch_add(1)) {
            try {
                job(j);
            } catch (...) {
                errors[static_cast<std::size_t>(j)] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads - 1));
    for (int t = 0; t < threads - 1; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

std::vector<estimation::Method> parse_estimators(const std::string& estimator) {
    if (estimator == "LS") {
        return {estimation::Method::LS};
    }
    if (estimator == "LSMMSE") {
        return {estimation::Method::LSMMSE};
    }
    if (estimator == "both") {
        return {estimation::Method::LS, estimation::Method::LSMMSE};
    }
    throw std::invalid_argument("config: estimator must be LS, LSMMSE or both");
}

std::vector<predictor::Mode> parse_modes(const std::vector<std::string>& names) {
    std::vector<predictor::Mode> modes;
    for (const auto& name : names) {
        if (name == "interpolation") {
            modes.push_back(predictor::Mode::Interpolation);
        } else if (name == "open_loop") {
            modes.push_back(predictor::Mode::OpenLoop);
        } else if (name == "closed_loop") {
            modes.push_back(predictor::Mode::ClosedLoop);
        } else {
            throw std::invalid_argument("config: unknown predictor mode '" + name + "'");
        }
    }
    return modes;
}

bool wants_mode(const std::vector<predictor::Mode>& modes, predictor::Mode m) {
    return std::find(modes.begin(), modes.end(), m) != modes.end();
}

}  // namespace

void ExperimentConfig::validate() const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("config: train_fraction must be in (0, 1)");
    }
    if (ssnr_sweep_db.empty()) {
        throw std::invalid_argument("config: ssnr_sweep_db must be non-empty");
    }
    if (predictor_modes.empty()) {
        throw std::invalid_argument("config: predictor_modes must be non-empty");
    }
    parse_modes(predictor_modes);
    parse_estimators(estimator);
    if (scenario.dft_size < 1 || scenario.n_taps < 1 || scenario.csi_size < 2 ||
        scenario.hidden_neurons < 1) {
        throw std::invalid_argument("config: scenario counts must be positive");
    }
    if (!(scenario.path_length_m > 0.0 && scenario.speed_mps > 0.0 && scenario.dt_s > 0.0 &&
          scenario.d_dec_m > 0.0 && scenario.carrier_hz > 0.0 &&
          scenario.subcarrier_spacing_hz > 0.0 && scenario.beta > 0.0)) {
        throw std::invalid_argument("config: scenario physical parameters must be positive");
    }
    if (n_realizations < 1) {
        throw std::invalid_argument("config: n_realizations must be >= 1");
    }
    if (scenario.dataset_size != scenario.csi_size * n_realizations) {
        throw std::invalid_argument(
            "config: dataset_size must equal csi_size * n_realizations (got " +
            std::to_string(scenario.dataset_size) + " vs " +
            std::to_string(scenario.csi_size * n_realizations) + ")");
    }
    if (epochs < 1 || batch_size < 1 || bptt_window < 2) {
        throw std::invalid_argument("config: bad training options");
    }
    if (train_targets != "truth" && train_targets != "estimates") {
        throw std::invalid_argument("config: train_targets must be 'truth' or 'estimates'");
    }
    if (scheduled_sampling < 0.0 || scheduled_sampling >= 1.0) {
        throw std::invalid_argument("config: scheduled_sampling must be in [0, 1)");
    }
    if (train_source != "best" && train_source != "fixed" && train_source != "matched") {
        throw std::invalid_argument("config: train_source must be 'best', 'fixed' or 'matched'");
    }
    if (training_restarts < 1) {
        throw std::invalid_argument("config: training_restarts must be >= 1");
    }
    if (closed_loop_resync < 0 || warmup_frames < 1) {
        throw std::invalid_argument(
            "config: closed_loop_resync must be >= 0 and warmup_frames >= 1");
    }
    if ((load_models || save_models) && per_subcarrier_model) {
        throw std::invalid_argument("config: checkpoints require the shared-weights model");
    }
    linksim::modulation_from_order(scenario.modulation == "4QAM"    ? 4
                                   : scenario.modulation == "16QAM" ? 16
                                   : scenario.modulation == "64QAM" ? 64
                                                                    : 0);
    const int tf = train_frames();
    if (tf < 2 || tf >= scenario.csi_size) {
        throw std::invalid_argument("config: train split leaves too few frames");
    }
}

void ExperimentConfig::apply_quick_profile() {
    scenario.csi_size = 400;
    scenario.hidden_neurons = 32;
    n_realizations = 2;
    scenario.dataset_size = scenario.csi_size * n_realizations;
    epochs = 20;
    ssnr_sweep_db = {0, 10, 20, 30, 40};
    max_train_sequences = 128;
}

int ExperimentConfig::train_frames() const {
    const int tf = static_cast<int>(std::llround(train_fraction * scenario.csi_size));
    return std::clamp(tf, 1, scenario.csi_size - 1);
}

linksim::Modulation ExperimentConfig::modulation() const {
    if (scenario.modulation == "4QAM") {
        return linksim::Modulation::Qam4;
    }
    if (scenario.modulation == "16QAM") {
        return linksim::Modulation::Qam16;
    }
    if (scenario.modulation == "64QAM") {
        return linksim::Modulation::Qam64;
    }
    throw std::invalid_argument("config: unknown modulation '" + scenario.modulation + "'");
}

channel3d::Geometry ExperimentConfig::geometry() const {
    channel3d::Geometry geom;
    geom.tx_position = {0.0, 0.0, 25.0};
    // Angled approach: the user closes in on the transmitter without passing
    // it, keeping the radial speed (and so the Doppler) high along the path.
    geom.rx_path_start = {120.0, -40.0, 1.5};
    geom.rx_direction = {-0.8660254037844387, 0.5, 0.0};
    geom.rx_speed = scenario.speed_mps;
    geom.path_length = scenario.path_length_m;
    geom.carrier_frequency = scenario.carrier_hz;
    return geom;
}

channel3d::CorrelationConfig ExperimentConfig::correlation() const {
    channel3d::CorrelationConfig corr;
    corr.decorrelation_distance = scenario.d_dec_m;
    return corr;
}

channel3d::ScenarioParams ExperimentConfig::scenario_params() const {
    channel3d::ScenarioParams params;
    params.n_frames = scenario.csi_size;
    params.frame_interval = scenario.dt_s;
    params.n_subcarriers = scenario.dft_size;
    params.subcarrier_spacing = scenario.subcarrier_spacing_hz;
    params.n_taps = scenario.n_taps;
    params.k_factor = {scenario.kf_mu_db, scenario.kf_sigma_db};
    params.shadow_fading_sigma_db = scenario.shadow_fading_sigma_db;
    params.tap_profile.azimuth_arrival_spread_deg = scenario.azimuth_arrival_spread_deg;
    params.tap_profile.azimuth_departure_spread_deg = scenario.azimuth_departure_spread_deg;
    params.tap_profile.zenith_spread_deg = scenario.zenith_spread_deg;
    return params;
}

std::string ExperimentConfig::to_json_string() const {
    json j;
    json s;
    s["dft_size"] = scenario.dft_size;
    s["n_taps"] = scenario.n_taps;
    s["path_length_m"] = scenario.path_length_m;
    s["speed_mps"] = scenario.speed_mps;
    s["dt_s"] = scenario.dt_s;
    s["d_dec_m"] = scenario.d_dec_m;
    s["kf_mu_db"] = scenario.kf_mu_db;
    s["kf_sigma_db"] = scenario.kf_sigma_db;
    s["csi_size"] = scenario.csi_size;
    s["dataset_size"] = scenario.dataset_size;
    s["modulation"] = scenario.modulation;
    s["beta"] = scenario.beta;
    s["hidden_neurons"] = scenario.hidden_neurons;
    s["carrier_hz"] = scenario.carrier_hz;
    s["subcarrier_spacing_hz"] = scenario.subcarrier_spacing_hz;
    s["shadow_fading_sigma_db"] = scenario.shadow_fading_sigma_db;
    s["azimuth_arrival_spread_deg"] = scenario.azimuth_arrival_spread_deg;
    s["azimuth_departure_spread_deg"] = scenario.azimuth_departure_spread_deg;
    s["zenith_spread_deg"] = scenario.zenith_spread_deg;
    j["scenario"] = s;
    j["ssnr_sweep_db"] = ssnr_sweep_db;
    j["n_realizations"] = n_realizations;
    j["train_fraction"] = train_fraction;
    j["seed"] = seed;
    j["estimator"] = estimator;
    j["predictor_modes"] = predictor_modes;
    j["output_dir"] = output_dir;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["bptt_window"] = bptt_window;
    j["learning_rate"] = learning_rate;
    j["max_train_sequences"] = max_train_sequences;
    j["train_targets"] = train_targets;
    j["scheduled_sampling"] = scheduled_sampling;
    j["training_restarts"] = training_restarts;
    j["train_source"] = train_source;
    j["closed_loop_resync"] = closed_loop_resync;
    j["warmup_frames"] = warmup_frames;
    j["mmse_scalar"] = mmse_scalar;
    j["oracle_rhh"] = oracle_rhh;
    j["per_subcarrier_model"] = per_subcarrier_model;
    j["load_models"] = load_models;
    j["save_models"] = save_models;
    j["threads"] = threads;
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
    const json j = json::parse(text);
    ExperimentConfig config;
    if (j.contains("scenario")) {
        const json& s = j.at("scenario");
        auto& sc = config.scenario;
        sc.dft_size = s.value("dft_size", sc.dft_size);
        sc.n_taps = s.value("n_taps", sc.n_taps);
        sc.path_length_m = s.value("path_length_m", sc.path_length_m);
        sc.speed_mps = s.value("speed_mps", sc.speed_mps);
        sc.dt_s = s.value("dt_s", sc.dt_s);
        sc.d_dec_m = s.value("d_dec_m", sc.d_dec_m);
        sc.kf_mu_db = s.value("kf_mu_db", sc.kf_mu_db);
        sc.kf_sigma_db = s.value("kf_sigma_db", sc.kf_sigma_db);
        sc.csi_size = s.value("csi_size", sc.csi_size);
        sc.dataset_size = s.value("dataset_size", sc.dataset_size);
        sc.modulation = s.value("modulation", sc.modulation);
        sc.beta = s.value("beta", sc.beta);
        sc.hidden_neurons = s.value("hidden_neurons", sc.hidden_neurons);
        sc.carrier_hz = s.value("carrier_hz", sc.carrier_hz);
        sc.subcarrier_spacing_hz = s.value("subcarrier_spacing_hz", sc.subcarrier_spacing_hz);
        sc.shadow_fading_sigma_db = s.value("shadow_fading_sigma_db", sc.shadow_fading_sigma_db);
        sc.azimuth_arrival_spread_deg =
            s.value("azimuth_arrival_spread_deg", sc.azimuth_arrival_spread_deg);
        sc.azimuth_departure_spread_deg =
            s.value("azimuth_departure_spread_deg", sc.azimuth_departure_spread_deg);
        sc.zenith_spread_deg = s.value("zenith_spread_deg", sc.zenith_spread_deg);
    }
    config.ssnr_sweep_db = j.value("ssnr_sweep_db", config.ssnr_sweep_db);
    config.n_realizations = j.value("n_realizations", config.n_realizations);
    config.train_fraction = j.value("train_fraction", config.train_fraction);
    config.seed = j.value("seed", config.seed);
    config.estimator = j.value("estimator", config.estimator);
    config.predictor_modes = j.value("predictor_modes", config.predictor_modes);
    config.output_dir = j.value("output_dir", config.output_dir);
    config.epochs = j.value("epochs", config.epochs);
    config.batch_size = j.value("batch_size", config.batch_size);
    config.bptt_window = j.value("bptt_window", config.bptt_window);
    config.learning_rate = j.value("learning_rate", config.learning_rate);
    config.max_train_sequences = j.value("max_train_sequences", config.max_train_sequences);
    config.train_targets = j.value("train_targets", config.train_targets);
    config.scheduled_sampling = j.value("scheduled_sampling", config.scheduled_sampling);
    config.training_restarts = j.value("training_restarts", config.training_restarts);
    config.train_source = j.value("train_source", config.train_source);
    config.closed_loop_resync = j.value("closed_loop_resync", config.closed_loop_resync);
    config.warmup_frames = j.value("warmup_frames", config.warmup_frames);
    config.mmse_scalar = j.value("mmse_scalar", config.mmse_scalar);
    config.oracle_rhh = j.value("oracle_rhh", config.oracle_rhh);
    config.per_subcarrier_model = j.value("per_subcarrier_model", config.per_subcarrier_model);
    config.load_models = j.value("load_models", config.load_models);
    config.save_models = j.value("save_models", config.save_models);
    config.threads = j.value("threads", config.threads);
    return config;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("config: cannot read " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return from_json_string(buffer.str());
}

std::string ExperimentConfig::fingerprint() const { return io::fnv1a_hex(to_json_string()); }

DatasetPlan plan_dataset(const ExperimentConfig& config) {
    DatasetPlan plan;
    plan.n_samples = static_cast<std::int64_t>(config.scenario.csi_size) * config.n_realizations;
    plan.n_train = static_cast<std::int64_t>(config.train_frames()) * config.n_realizations;
    plan.n_test = plan.n_samples - plan.n_train;
    return plan;
}

Dataset generate_dataset(const ExperimentConfig& config) {
    config.validate();

    const auto geometry = config.geometry();
    const auto correlation = config.correlation();
    const auto scenario = config.scenario_params();
    const auto modulation = config.modulation();
    const int n_frames = config.scenario.csi_size;
    const int n_subcarriers = config.scenario.dft_size;
    const int train_rows = config.train_frames();
    const auto n_ssnr = static_cast<int>(config.ssnr_sweep_db.size());

    Dataset dataset;
    dataset.realizations.resize(static_cast<std::size_t>(config.n_realizations));

    run_jobs(config.n_realizations, config.threads, [&](int r) {
        RealizationData& data = dataset.realizations[static_cast<std::size_t>(r)];
        data.trace = channel3d::trace_channel(
            geometry, correlation, scenario,
            Rng::mix(config.seed, kTagTrace, static_cast<std::uint64_t>(r)));

        std::vector<linksim::PilotFrame> pilots(static_cast<std::size_t>(n_frames));
        for (int n = 0; n < n_frames; ++n) {
            pilots[static_cast<std::size_t>(n)] = linksim::make_pilot_frame(
                n_subcarriers, modulation,
                Rng::mix(config.seed, kTagPilot,
                         static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(n_frames) +
                             static_cast<std::uint64_t>(n)),
                n, n * config.scenario.dt_s);
        }

        data.ls.resize(static_cast<std::size_t>(n_ssnr));
        data.lsmmse.resize(static_cast<std::size_t>(n_ssnr));
        for (int si = 0; si < n_ssnr; ++si) {
            const double ssnr_db = config.ssnr_sweep_db[static_cast<std::size_t>(si)];
            const double ssnr = metrics::from_db(ssnr_db);

            estimation::EstimateSeries ls;
            ls.method = estimation::Method::LS;
            ls.ssnr = ssnr;
            ls.estimates.resize(n_frames, n_subcarriers);
            for (int n = 0; n < n_frames; ++n) {
                const std::uint64_t noise_seed = Rng::mix(
                    config.seed, kTagNoise,
                    (static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(n_ssnr) +
                     static_cast<std::uint64_t>(si)) *
                            static_cast<std::uint64_t>(n_frames) +
                        static_cast<std::uint64_t>(n));
                const auto received = linksim::transmit_pilot(
                    pilots[static_cast<std::size_t>(n)], data.trace.responses.row(n).transpose(),
                    ssnr, noise_seed);
                ls.estimates.row(n) =
                    estimation::ls_estimate(received, pilots[static_cast<std::size_t>(n)])
                        .transpose();
            }

            // LS-MMSE from the very same received pilots: filter the LS rows
            // through the context built on the training split.
            const Eigen::MatrixXcd& rhh_rows =
                config.oracle_rhh ? data.trace.responses : ls.estimates;
            const auto ctx = estimation::build_mmse_context(rhh_rows.topRows(train_rows), ssnr,
                                                            config.scenario.beta);
            estimation::EstimateSeries mmse;
            mmse.method = estimation::Method::LSMMSE;
            mmse.ssnr = ssnr;
            mmse.estimates = ctx.filter_rows(ls.estimates, config.mmse_scalar);

            data.ls[static_cast<std::size_t>(si)] = std::move(ls);
            data.lsmmse[static_cast<std::size_t>(si)] = std::move(mmse);
        }
    });

    return dataset;
}

void write_dataset(const ExperimentConfig& config, const Dataset& dataset) {
    namespace fs = std::filesystem;
    const fs::path root(config.output_dir);
    std::error_code ec;
    fs::create_directories(root / "traces", ec);
    fs::create_directories(root / "estimates", ec);
    if (!fs::exists(root / "traces") || !fs::exists(root / "estimates")) {
        throw std::runtime_error("write_dataset: cannot create output directory " + root.string());
    }

    for (std::size_t r = 0; r < dataset.realizations.size(); ++r) {
        const auto& data = dataset.realizations[r];
        io::write_trace(root / "traces" / ("trace_r" + std::to_string(r) + ".bin"), data.trace);
        for (std::size_t si = 0; si < config.ssnr_sweep_db.size(); ++si) {
            const std::string tag =
                "_ssnr" + format_ssnr(config.ssnr_sweep_db[si]) + "_r" + std::to_string(r) + ".bin";
            io::write_estimates(root / "estimates" / ("ls" + tag), data.ls[si]);
            io::write_estimates(root / "estimates" / ("lsmmse" + tag), data.lsmmse[si]);
        }
    }

    json manifest;
    manifest["format"] = "chanpred-dataset";
    manifest["version"] = 1;
    manifest["config_fingerprint"] = config.fingerprint();
    manifest["config"] = json::parse(config.to_json_string());
    std::ofstream out(root / "manifest.json", std::ios::trunc);
    if (!out) {
        throw std::runtime_error("write_dataset: cannot write manifest");
    }
    out << manifest.dump(2) << "\n";
}

namespace {

struct CellOutcome {
    std::map<std::string, std::vector<metrics::NmseReport>> per_mode_reports;
    std::set<std::string> failed_modes;
};

// Builds the per-(realization, subcarrier) one-step-ahead training sequences
// for one cell from the training split. Inputs are always the cell's
// estimates; targets are either the true next-frame responses or the next
// estimates, per the configuration.
std::vector<lstm::TrainingSequence> build_training_sequences(const Dataset& dataset,
                                                             estimation::Method source,
                                                             int ssnr_index, int train_rows,
                                                             bool truth_targets,
                                                             int only_subcarrier = -1) {
    std::vector<lstm::TrainingSequence> sequences;
    for (const auto& data : dataset.realizations) {
        const auto& series = source == estimation::Method::LS
                                 ? data.ls[static_cast<std::size_t>(ssnr_index)]
                                 : data.lsmmse[static_cast<std::size_t>(ssnr_index)];
        const Eigen::MatrixXcd& est = series.estimates;
        const Eigen::MatrixXcd& target_rows = truth_targets ? data.trace.responses : est;
        const int len = train_rows - 1;
        for (int k = 0; k < est.cols(); ++k) {
            if (only_subcarrier >= 0 && k != only_subcarrier) {
                continue;
            }
            lstm::TrainingSequence seq;
            seq.inputs.resize(len, 2);
            seq.targets.resize(len, 2);
            for (int t = 0; t < len; ++t) {
                seq.inputs(t, 0) = est(t, k).real();
                seq.inputs(t, 1) = est(t, k).imag();
                seq.targets(t, 0) = target_rows(t + 1, k).real();
                seq.targets(t, 1) = target_rows(t + 1, k).imag();
            }
            sequences.push_back(std::move(seq));
        }
    }
    return sequences;
}

lstm::TrainOptions train_options(const ExperimentConfig& config, std::uint64_t seed) {
    lstm::TrainOptions options;
    options.epochs = config.epochs;
    options.batch_size = config.batch_size;
    options.window = config.bptt_window;
    options.max_sequences = config.max_train_sequences;
    options.scheduled_sampling = config.scheduled_sampling;
    options.feedback_period =
        config.closed_loop_resync > 0 ? config.closed_loop_resync : config.bptt_window;
    options.adam.learning_rate = config.learning_rate;
    options.seed = seed;
    return options;
}

std::filesystem::path checkpoint_path(const ExperimentConfig& config, const std::string& tag) {
    return std::filesystem::path(config.output_dir) / "models" / ("model_" + tag + ".bin");
}

struct TrainedModels {
    std::vector<lstm::LstmModel> models;  // one shared model, or one per subcarrier
    bool failed = false;
};

// Trains the predictor(s) for one trainer cell on the given estimate stream.
TrainedModels train_models(const ExperimentConfig& config, const Dataset& dataset,
                           estimation::Method source, int ssnr_index, bool truth_targets,
                           std::uint64_t train_seed) {
    TrainedModels out;
    const int train_rows = config.train_frames();
    if (config.per_subcarrier_model) {
        for (int k = 0; k < config.scenario.dft_size; ++k) {
            auto sequences = build_training_sequences(dataset, source, ssnr_index, train_rows,
                                                      truth_targets, k);
            auto model = lstm::LstmModel::init(config.scenario.hidden_neurons, 2, 2,
                                               Rng::mix(train_seed, k));
            try {
                lstm::train(model, sequences,
                            train_options(config, Rng::mix(train_seed, 7919 + k)));
            } catch (const std::runtime_error&) {
                out.failed = true;
                out.models.clear();
                return out;
            }
            out.models.push_back(std::move(model));
        }
        return out;
    }
    auto sequences =
        build_training_sequences(dataset, source, ssnr_index, train_rows, truth_targets);

    // Closed-loop validation on the training tail: warm on earlier frames,
    // free-run (or resync-run) across the last block, score against the truth.
    auto validation_score = [&](const lstm::LstmModel& model) {
        const int val_rows = std::min(32, train_rows / 4);
        const int warmup = std::min(config.warmup_frames, train_rows - val_rows);
        if (val_rows < 2 || warmup < 1) {
            return 0.0;
        }
        const int resync = config.closed_loop_resync > 0 ? config.closed_loop_resync
                                                         : warmup + val_rows;
        const auto n_check = std::min<std::size_t>(4, dataset.realizations.size());
        double acc = 0.0;
        for (std::size_t r = 0; r < n_check; ++r) {
            const auto& data = dataset.realizations[r];
            const auto& series = source == estimation::Method::LS
                                     ? data.ls[static_cast<std::size_t>(ssnr_index)]
                                     : data.lsmmse[static_cast<std::size_t>(ssnr_index)];
            const Eigen::MatrixXcd slice =
                series.estimates.middleRows(train_rows - warmup - val_rows, warmup + val_rows);
            const auto run =
                predictor::predict_closed_loop_resync(model, slice, resync, warmup);
            const Eigen::MatrixXcd truth =
                data.trace.responses.middleRows(train_rows - val_rows, val_rows);
            acc += metrics::nmse(run.predictions, truth).nmse_avg;
        }
        return acc / static_cast<double>(n_check);
    };

    bool have_model = false;
    double best_score = 0.0;
    for (int restart = 0; restart < config.training_restarts; ++restart) {
        const std::uint64_t restart_seed = Rng::mix(train_seed, static_cast<std::uint64_t>(restart));
        auto model = lstm::LstmModel::init(config.scenario.hidden_neurons, 2, 2, restart_seed);
        try {
            lstm::train(model, sequences, train_options(config, Rng::mix(restart_seed, 7919)));
        } catch (const std::runtime_error&) {
            continue;
        }
        const double score =
            config.training_restarts > 1 ? validation_score(model) : 0.0;
        if (!have_model || score < best_score) {
            best_score = score;
            out.models.clear();
            out.models.push_back(std::move(model));
            have_model = true;
        }
    }
    out.failed = !have_model;
    return out;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& config) {
    const Dataset dataset = generate_dataset(config);
    return run_sweep(config, dataset);
}

SweepResult run_sweep(const ExperimentConfig& config, const Dataset& dataset) {
    config.validate();
    const auto estimators = parse_estimators(config.estimator);
    const auto modes = parse_modes(config.predictor_modes);
    const auto n_ssnr = static_cast<int>(config.ssnr_sweep_db.size());
    const int n_frames = config.scenario.csi_size;
    const int n_subcarriers = config.scenario.dft_size;
    const int train_rows = config.train_frames();
    const int test_rows = n_frames - train_rows;
    const int warmup = std::min(config.warmup_frames, train_rows);

    const bool needs_model = wants_mode(modes, predictor::Mode::OpenLoop) ||
                             wants_mode(modes, predictor::Mode::ClosedLoop);
    const bool truth_targets = config.train_targets == "truth";
    // "best" shares one LS-MMSE-trained model per SSNR across estimators;
    // "fixed" shares a single top-SSNR-trained model across the whole sweep;
    // "matched" retrains per cell on its own stream.
    const bool best_source = config.train_source == "best" || config.train_source == "fixed";
    const bool fixed_source = config.train_source == "fixed";

    const linksim::TddSchedule schedule{config.scenario.dt_s, 0.0, 1.0};

    struct Job {
        estimation::Method method;
        int ssnr_index;
    };
    std::vector<Job> jobs;
    for (const auto est : estimators) {
        for (int si = 0; si < n_ssnr; ++si) {
            jobs.push_back({est, si});
        }
    }
    std::vector<CellOutcome> outcomes(jobs.size());

    // Under the "best" protocol one predictor per SSNR is trained on the
    // LS-MMSE stream and shared by both estimators' cells; "matched" retrains
    // on each cell's own stream. Shared models are prepared up front so the
    // cell jobs stay read-only.
    std::vector<TrainedModels> shared(static_cast<std::size_t>(n_ssnr));
    if (needs_model && best_source) {
        std::vector<int> trainer_cells;
        int top_si = 0;
        for (int si = 1; si < n_ssnr; ++si) {
            if (config.ssnr_sweep_db[static_cast<std::size_t>(si)] >
                config.ssnr_sweep_db[static_cast<std::size_t>(top_si)]) {
                top_si = si;
            }
        }
        if (fixed_source) {
            trainer_cells.push_back(top_si);
        } else {
            for (int si = 0; si < n_ssnr; ++si) {
                trainer_cells.push_back(si);
            }
        }
        run_jobs(static_cast<int>(trainer_cells.size()), config.threads, [&](int idx) {
            const int si = trainer_cells[static_cast<std::size_t>(idx)];
            const double ssnr_db = config.ssnr_sweep_db[static_cast<std::size_t>(si)];
            const std::string tag = fixed_source
                                        ? std::string("LSMMSE_fixed")
                                        : std::string("LSMMSE_ssnr") + format_ssnr(ssnr_db);
            TrainedModels& slot = shared[static_cast<std::size_t>(si)];
            if (config.load_models) {
                slot.models.push_back(io::load_model(checkpoint_path(config, tag)));
                return;
            }
            slot = train_models(config, dataset, estimation::Method::LSMMSE, si, truth_targets,
                                Rng::mix(config.seed, kTagTrain, static_cast<std::uint64_t>(si)));
            if (!slot.failed && config.save_models && !config.per_subcarrier_model) {
                std::error_code ec;
                std::filesystem::create_directories(
                    std::filesystem::path(config.output_dir) / "models", ec);
                io::save_model(checkpoint_path(config, tag), slot.models.front());
            }
        });
        if (fixed_source) {
            for (int si = 0; si < n_ssnr; ++si) {
                if (si != top_si) {
                    shared[static_cast<std::size_t>(si)] =
                        shared[static_cast<std::size_t>(top_si)];
                }
            }
        }
    }

    run_jobs(static_cast<int>(jobs.size()), config.threads, [&](int j) {
        const Job& cell = jobs[static_cast<std::size_t>(j)];
        CellOutcome& outcome = outcomes[static_cast<std::size_t>(j)];
        const double ssnr_db = config.ssnr_sweep_db[static_cast<std::size_t>(cell.ssnr_index)];
        const int est_idx = cell.method == estimation::Method::LS ? 0 : 1;

        // Per-cell models under the "matched" protocol.
        TrainedModels own;
        bool training_failed = false;
        const std::vector<lstm::LstmModel>* models = nullptr;
        if (needs_model) {
            if (best_source) {
                models = &shared[static_cast<std::size_t>(cell.ssnr_index)].models;
                training_failed = shared[static_cast<std::size_t>(cell.ssnr_index)].failed;
            } else {
                const std::string tag = std::string(estimation::method_name(cell.method)) +
                                        "_ssnr" + format_ssnr(ssnr_db);
                const std::uint64_t train_seed =
                    Rng::mix(config.seed, kTagTrain,
                             static_cast<std::uint64_t>(est_idx) * 4096 +
                                 static_cast<std::uint64_t>(cell.ssnr_index));
                if (config.load_models) {
                    own.models.push_back(io::load_model(checkpoint_path(config, tag)));
                } else {
                    own = train_models(config, dataset, cell.method, cell.ssnr_index,
                                       truth_targets, train_seed);
                    if (!own.failed && config.save_models && !config.per_subcarrier_model) {
                        std::error_code ec;
                        std::filesystem::create_directories(
                            std::filesystem::path(config.output_dir) / "models", ec);
                        io::save_model(checkpoint_path(config, tag), own.models.front());
                    }
                }
                models = &own.models;
                training_failed = own.failed;
            }
        }

        for (const auto mode : modes) {
            const std::string mode_key = predictor::mode_name(mode);
            if (mode != predictor::Mode::Interpolation && training_failed) {
                outcome.failed_modes.insert(mode_key);
                continue;
            }
            for (const auto& data : dataset.realizations) {
                const auto& series = cell.method == estimation::Method::LS
                                         ? data.ls[static_cast<std::size_t>(cell.ssnr_index)]
                                         : data.lsmmse[static_cast<std::size_t>(cell.ssnr_index)];
                const Eigen::MatrixXcd truth = data.trace.responses.bottomRows(test_rows);

                Eigen::MatrixXcd predicted(test_rows, n_subcarriers);
                if (mode == predictor::Mode::Interpolation) {
                    const auto run = predictor::interpolate_dl(series, schedule);
                    // Row n forecasts frame n+1; test frames start at train_rows.
                    predicted = run.predictions.middleRows(train_rows - 1, test_rows);
                } else {
                    // Slice with warm-up context from the training tail.
                    const Eigen::MatrixXcd slice =
                        series.estimates.middleRows(train_rows - warmup, warmup + test_rows);
                    if (mode == predictor::Mode::OpenLoop) {
                        if (config.per_subcarrier_model) {
                            for (int k = 0; k < n_subcarriers; ++k) {
                                const auto run = predictor::predict_open_loop(
                                    (*models)[static_cast<std::size_t>(k)], slice.col(k));
                                predicted.col(k) =
                                    run.predictions.col(0).segment(warmup - 1, test_rows);
                            }
                        } else {
                            const auto run = predictor::predict_open_loop(models->front(), slice);
                            predicted = run.predictions.middleRows(warmup - 1, test_rows);
                        }
                    } else {
                        const int resync = config.closed_loop_resync > 0
                                               ? config.closed_loop_resync
                                               : static_cast<int>(slice.rows());
                        if (config.per_subcarrier_model) {
                            for (int k = 0; k < n_subcarriers; ++k) {
                                const auto run = predictor::predict_closed_loop_resync(
                                    (*models)[static_cast<std::size_t>(k)], slice.col(k), resync,
                                    warmup);
                                predicted.col(k) = run.predictions.col(0);
                            }
                        } else {
                            const auto run = predictor::predict_closed_loop_resync(
                                models->front(), slice, resync, warmup);
                            predicted = run.predictions;
                        }
                    }
                }

                auto report = metrics::nmse(predicted, truth);
                report.method = estimation::method_name(cell.method);
                report.mode = mode_key;
                report.ssnr_db = ssnr_db;
                outcome.per_mode_reports[mode_key].push_back(report);
            }
        }
    });

    // Assemble rows in (estimator, mode, ssnr) ascending order.
    std::vector<int> ssnr_order(static_cast<std::size_t>(n_ssnr));
    for (int i = 0; i < n_ssnr; ++i) {
        ssnr_order[static_cast<std::size_t>(i)] = i;
    }
    std::sort(ssnr_order.begin(), ssnr_order.end(), [&](int a, int b) {
        return config.ssnr_sweep_db[static_cast<std::size_t>(a)] <
               config.ssnr_sweep_db[static_cast<std::size_t>(b)];
    });

    std::vector<std::string> estimator_names;
    for (const auto est : estimators) {
        estimator_names.emplace_back(estimation::method_name(est));
    }
    std::sort(estimator_names.begin(), estimator_names.end());
    std::vector<std::string> mode_names = config.predictor_modes;
    std::sort(mode_names.begin(), mode_names.end());
    mode_names.erase(std::unique(mode_names.begin(), mode_names.end()), mode_names.end());

    SweepResult result;
    result.seed = config.seed;
    result.config_fingerprint = config.fingerprint();
    for (const auto& est_name : estimator_names) {
        for (const auto& mode_name : mode_names) {
            for (const int si : ssnr_order) {
                const auto job_it = std::find_if(jobs.begin(), jobs.end(), [&](const Job& job) {
                    return std::string(estimation::method_name(job.method)) == est_name &&
                           job.ssnr_index == si;
                });
                const auto& outcome =
                    outcomes[static_cast<std::size_t>(std::distance(jobs.begin(), job_it))];

                SweepRow row;
                row.estimator = est_name;
                row.mode = mode_name;
                row.ssnr_db = config.ssnr_sweep_db[static_cast<std::size_t>(si)];
                row.n_realizations = config.n_realizations;
                if (outcome.failed_modes.count(mode_name) > 0) {
                    row.failed = true;
                    row.nmse_real = row.nmse_imag = row.nmse_avg =
                        std::numeric_limits<double>::quiet_NaN();
                } else {
                    const auto& reports = outcome.per_mode_reports.at(mode_name);
                    for (const auto& report : reports) {
                        row.nmse_real += report.nmse_real;
                        row.nmse_imag += report.nmse_imag;
                        row.nmse_avg += report.nmse_avg;
                    }
                    const auto count = static_cast<double>(reports.size());
                    row.nmse_real /= count;
                    row.nmse_imag /= count;
                    row.nmse_avg /= count;
                    row.realization_reports = reports;
                }
                result.rows.push_back(std::move(row));
            }
        }
    }
    return result;
}

std::string render_csv(const SweepResult& result) {
    std::ostringstream out;
    out << "estimator,mode,ssnr_db,nmse_real,nmse_imag,nmse_avg,nmse_avg_db,n_realizations,seed\n";
    for (const auto& row : result.rows) {
        out << row.estimator << ',' << row.mode << ',' << format_ssnr(row.ssnr_db) << ','
            << format_double(row.nmse_real) << ',' << format_double(row.nmse_imag) << ','
            << format_double(row.nmse_avg) << ',' << format_double(metrics::to_db(row.nmse_avg))
            << ',' << row.n_realizations << ',' << result.seed << "\n";
    }
    return out.str();
}

void emit_csv(const SweepResult& result, const std::filesystem::path& path) {
    if (result.rows.empty()) {
        throw std::invalid_argument("emit_csv: empty sweep result");
    }
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) {
        throw std::runtime_error("emit_csv: cannot open " + path.string());
    }
    out << render_csv(result);
    if (!out) {
        throw std::runtime_error("emit_csv: write failed: " + path.string());
    }
}

std::string render_report(const std::filesystem::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) {
        throw std::runtime_error("report: cannot open " + csv_path.string());
    }
    std::vector<std::vector<std::string>> table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            fields.push_back(field);
        }
        table.push_back(std::move(fields));
    }
    if (table.empty()) {
        throw std::runtime_error("report: empty CSV");
    }

    std::vector<std::size_t> widths;
    for (const auto& row : table) {
        widths.resize(std::max(widths.size(), row.size()), 0);
        for (std::size_t c = 0; c < row.size(); ++c) {
            widths[c] = std::max(widths[c], row[c].size());
        }
    }
    std::ostringstream out;
    for (const auto& row : table) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << row[c];
            if (c + 1 < row.size()) {
                out << std::string(widths[c] - row[c].size() + 2, ' ');
            }
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace chanpred::harness
