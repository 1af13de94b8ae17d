// SPDX-License-Identifier: Apache-2.0

#include "chanpred/channel3d.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "chanpred/rng.hpp"

namespace chanpred::channel3d {

namespace {

constexpr double kPi = std::numbers::pi;

// Stream tags for deriving independent RNG streams from one trace seed.
constexpr std::uint64_t kStreamLsp = 0x4c5350;   // "LSP"
constexpr std::uint64_t kStreamTaps = 0x544150;  // "TAP"

double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0.0) {
        a += 2.0 * kPi;
    }
    return a - kPi;
}

// Zenith angles live in [0, pi]; reflect overshoots back into the interval.
double fold_zenith(double a) {
    a = std::fmod(a, 2.0 * kPi);
    if (a < 0.0) {
        a += 2.0 * kPi;
    }
    return (a > kPi) ? 2.0 * kPi - a : a;
}

Eigen::Vector3d unit_from_angles(double azimuth, double zenith) {
    return {std::sin(zenith) * std::cos(azimuth), std::sin(zenith) * std::sin(azimuth),
            std::cos(zenith)};
}

// True when the positions are monotone points on a straight line, i.e. the
// chord between the endpoints equals the summed segment lengths. For such
// inputs the exponential-kernel field factorizes into a first-order recursion.
bool collinear_monotone(std::span<const Eigen::Vector3d> positions) {
    if (positions.size() <= 2) {
        return true;
    }
    double total = 0.0;
    for (std::size_t i = 1; i < positions.size(); ++i) {
        total += (positions[i] - positions[i - 1]).norm();
    }
    const double chord = (positions.back() - positions.front()).norm();
    return std::abs(total - chord) <= 1e-9 * std::max(1.0, total);
}

// Exact sequential sampler for ordered collinear positions: an
// Ornstein-Uhlenbeck recursion per parameter.
Eigen::MatrixXd sample_field_sequential(std::span<const Eigen::Vector3d> positions, double d_dec,
                                        Rng& rng) {
    const std::size_t n = positions.size();
    Eigen::MatrixXd field(static_cast<Eigen::Index>(n), kNumLsp);
    for (int p = 0; p < kNumLsp; ++p) {
        field(0, p) = rng.normal();
    }
    for (std::size_t i = 1; i < n; ++i) {
        const double dist = (positions[i] - positions[i - 1]).norm();
        const double rho = std::exp(-dist / d_dec);
        const double innovation = std::sqrt(std::max(0.0, 1.0 - rho * rho));
        for (int p = 0; p < kNumLsp; ++p) {
            field(static_cast<Eigen::Index>(i), p) =
                rho * field(static_cast<Eigen::Index>(i - 1), p) + innovation * rng.normal();
        }
    }
    return field;
}

// General sampler: spectral factor of the kernel matrix over the deduplicated
// position set. Duplicate positions receive bit-identical values.
Eigen::MatrixXd sample_field_dense(std::span<const Eigen::Vector3d> positions, double d_dec,
                                   Rng& rng) {
    const std::size_t n = positions.size();
    std::vector<Eigen::Index> owner(n);
    std::vector<Eigen::Vector3d> unique;
    unique.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::Index found = -1;
        for (std::size_t u = 0; u < unique.size(); ++u) {
            if ((unique[u] - positions[i]).norm() == 0.0) {
                found = static_cast<Eigen::Index>(u);
                break;
            }
        }
        if (found < 0) {
            unique.push_back(positions[i]);
            found = static_cast<Eigen::Index>(unique.size() - 1);
        }
        owner[i] = found;
    }

    const Eigen::Index m = static_cast<Eigen::Index>(unique.size());
    Eigen::MatrixXd kernel(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double k = std::exp(-(unique[i] - unique[j]).norm() / d_dec);
            kernel(i, j) = k;
            kernel(j, i) = k;
        }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(kernel);
    if (eig.info() != Eigen::Success) {
        throw std::runtime_error("draw_large_scale_field: kernel eigendecomposition failed");
    }
    const Eigen::VectorXd scale = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd factor = eig.eigenvectors() * scale.asDiagonal();

    Eigen::MatrixXd z(m, kNumLsp);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (int p = 0; p < kNumLsp; ++p) {
            z(i, p) = rng.normal();
        }
    }
    const Eigen::MatrixXd unique_field = factor * z;

    Eigen::MatrixXd field(static_cast<Eigen::Index>(n), kNumLsp);
    for (std::size_t i = 0; i < n; ++i) {
        field.row(static_cast<Eigen::Index>(i)) = unique_field.row(owner[i]);
    }
    return field;
}

}  // namespace

void CorrelationConfig::validate() const {
    if (!(decorrelation_distance > 0.0)) {
        throw std::invalid_argument("CorrelationConfig: decorrelation distance must be positive");
    }
    const Eigen::Matrix<double, kNumLsp, kNumLsp> cov =
        cross_correlation * cross_correlation.transpose();
    if (!cov.isApprox(cov.transpose(), 1e-12)) {
        throw std::invalid_argument("CorrelationConfig: M M^T is not symmetric");
    }
    for (int i = 0; i < kNumLsp; ++i) {
        if (std::abs(cov(i, i) - 1.0) > 1e-9) {
            throw std::invalid_argument(
                "CorrelationConfig: M M^T must have unit diagonal (rows of M normalized)");
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, kNumLsp, kNumLsp>> eig(cov);
    if (eig.eigenvalues().minCoeff() < -1e-9) {
        throw std::invalid_argument("CorrelationConfig: M M^T has negative eigenvalues");
    }
}

void Geometry::validate() const {
    if (!(rx_speed > 0.0)) {
        throw std::invalid_argument("Geometry: rx_speed must be positive");
    }
    if (!(path_length > 0.0)) {
        throw std::invalid_argument("Geometry: path_length must be positive");
    }
    if (!(carrier_frequency > 0.0)) {
        throw std::invalid_argument("Geometry: carrier_frequency must be positive");
    }
    if (rx_direction.norm() == 0.0) {
        throw std::invalid_argument("Geometry: rx_direction must be nonzero");
    }
}

std::vector<LargeScaleParams> draw_large_scale_field(std::span<const Eigen::Vector3d> positions,
                                                     const CorrelationConfig& config,
                                                     std::uint64_t seed) {
    if (positions.empty()) {
        throw std::invalid_argument("draw_large_scale_field: positions must be non-empty");
    }
    config.validate();

    Rng rng(seed);
    const Eigen::MatrixXd field =
        collinear_monotone(positions)
            ? sample_field_sequential(positions, config.decorrelation_distance, rng)
            : sample_field_dense(positions, config.decorrelation_distance, rng);

    std::vector<LargeScaleParams> out(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        const Eigen::Matrix<double, kNumLsp, 1> raw =
            field.row(static_cast<Eigen::Index>(i)).transpose();
        const Eigen::Matrix<double, kNumLsp, 1> cor = config.cross_correlation * raw;
        for (int p = 0; p < kNumLsp; ++p) {
            out[i].x[static_cast<std::size_t>(p)] = cor(p);
        }
    }
    return out;
}

TapSet generate_taps(const LargeScaleParams& lsp, int n_taps, const KFactorStats& k_factor_stats,
                     std::uint64_t seed, const TapProfile& profile) {
    if (n_taps < 1) {
        throw std::domain_error("generate_taps: n_taps must be >= 1");
    }

    TapSet taps;
    taps.reserve(static_cast<std::size_t>(n_taps));

    Tap los;
    los.is_los = true;
    los.delay = 0.0;
    los.departure_azimuth = profile.mean_departure_azimuth;
    los.departure_zenith = profile.mean_departure_zenith;
    los.arrival_azimuth = profile.mean_arrival_azimuth;
    los.arrival_zenith = profile.mean_arrival_zenith;

    if (n_taps == 1) {
        los.power = 1.0;
        taps.push_back(los);
        return taps;
    }

    Rng rng(seed);

    const double k_db = k_factor_stats.mu_db + k_factor_stats.sigma_db * lsp.k_factor();
    const double k_linear = std::pow(10.0, k_db / 10.0);
    los.power = k_linear / (k_linear + 1.0);

    const double delay_spread = std::pow(
        10.0, profile.delay_spread_log10_mu + profile.delay_spread_log10_sigma * lsp.delay_spread());

    const double deg = kPi / 180.0;
    const double az_dep_spread =
        profile.azimuth_departure_spread_deg * deg *
        std::pow(10.0, profile.angle_spread_log10_sigma * lsp.azimuth_departure_spread());
    const double az_arr_spread =
        profile.azimuth_arrival_spread_deg * deg *
        std::pow(10.0, profile.angle_spread_log10_sigma * lsp.azimuth_arrival_spread());
    const double zen_dep_spread =
        profile.zenith_spread_deg * deg *
        std::pow(10.0, profile.angle_spread_log10_sigma * lsp.zenith_departure_spread());
    const double zen_arr_spread =
        profile.zenith_spread_deg * deg *
        std::pow(10.0, profile.angle_spread_log10_sigma * lsp.zenith_arrival_spread());

    // Exponentially distributed excess delays with an exponential power
    // profile over them, both scaled by the drawn delay spread.
    const int n_nlos = n_taps - 1;
    std::vector<double> delays(static_cast<std::size_t>(n_nlos));
    for (auto& d : delays) {
        d = -delay_spread * std::log(1.0 - rng.uniform());
    }
    std::sort(delays.begin(), delays.end());

    std::vector<double> powers(static_cast<std::size_t>(n_nlos));
    double nlos_total = 0.0;
    for (int l = 0; l < n_nlos; ++l) {
        powers[static_cast<std::size_t>(l)] = std::exp(-delays[static_cast<std::size_t>(l)] / delay_spread);
        nlos_total += powers[static_cast<std::size_t>(l)];
    }
    const double nlos_budget = 1.0 - los.power;

    taps.push_back(los);
    for (int l = 0; l < n_nlos; ++l) {
        Tap tap;
        tap.is_los = false;
        tap.delay = delays[static_cast<std::size_t>(l)];
        tap.power = nlos_budget * powers[static_cast<std::size_t>(l)] / nlos_total;
        tap.departure_azimuth =
            wrap_angle(profile.mean_departure_azimuth + az_dep_spread * rng.normal());
        tap.departure_zenith =
            fold_zenith(profile.mean_departure_zenith + zen_dep_spread * rng.normal());
        tap.arrival_azimuth =
            wrap_angle(profile.mean_arrival_azimuth + az_arr_spread * rng.normal());
        tap.arrival_zenith =
            fold_zenith(profile.mean_arrival_zenith + zen_arr_spread * rng.normal());
        taps.push_back(tap);
    }

    // Exact renormalization keeps the power-sum invariant at machine precision.
    const double total = total_power(taps);
    for (auto& tap : taps) {
        tap.power /= total;
    }
    return taps;
}

std::complex<double> tap_response(const Tap& tap, double carrier_frequency, double distance) {
    const double phase = -2.0 * kPi * carrier_frequency * distance / kSpeedOfLight;
    return std::polar(std::sqrt(tap.power), phase);
}

Eigen::VectorXcd frequency_response(const TapSet& taps,
                                    std::span<const std::complex<double>> gains,
                                    int n_subcarriers, double subcarrier_spacing) {
    if (n_subcarriers < 1) {
        throw std::invalid_argument("frequency_response: n_subcarriers must be >= 1");
    }
    if (gains.size() != taps.size()) {
        throw std::invalid_argument("frequency_response: gains/taps size mismatch");
    }
    Eigen::VectorXcd h = Eigen::VectorXcd::Zero(n_subcarriers);
    for (std::size_t l = 0; l < taps.size(); ++l) {
        // Accumulate w^k by repeated multiplication; |w| = 1 keeps the error
        // growth well under test tolerances for DFT sizes in use.
        const std::complex<double> w =
            std::polar(1.0, -2.0 * kPi * subcarrier_spacing * taps[l].delay);
        std::complex<double> phasor(1.0, 0.0);
        for (int k = 0; k < n_subcarriers; ++k) {
            h[k] += gains[l] * phasor;
            phasor *= w;
        }
    }
    return h;
}

double total_power(const TapSet& taps) {
    double total = 0.0;
    for (const auto& tap : taps) {
        total += tap.power;
    }
    return total;
}

ChannelTrace trace_channel(const Geometry& geometry, const CorrelationConfig& config,
                           const ScenarioParams& scenario, std::uint64_t seed) {
    geometry.validate();
    config.validate();
    if (scenario.n_frames < 1) {
        throw std::invalid_argument("trace_channel: n_frames must be >= 1");
    }
    if (!(scenario.frame_interval > 0.0)) {
        throw std::invalid_argument("trace_channel: frame_interval must be positive");
    }
    const double travel_time = static_cast<double>(scenario.n_frames) * scenario.frame_interval;
    if (geometry.path_length / geometry.rx_speed + 1e-12 < travel_time) {
        throw std::domain_error("trace_channel: path too short for requested frames");
    }

    const Eigen::Vector3d direction = geometry.rx_direction.normalized();
    const double step = geometry.rx_speed * scenario.frame_interval;

    std::vector<Eigen::Vector3d> positions(static_cast<std::size_t>(scenario.n_frames));
    for (int i = 0; i < scenario.n_frames; ++i) {
        positions[static_cast<std::size_t>(i)] =
            geometry.rx_path_start + (static_cast<double>(i) * step) * direction;
    }

    std::vector<LargeScaleParams> lsp =
        draw_large_scale_field(positions, config, Rng::mix(seed, kStreamLsp));

    // Segment the path into decorrelation-distance blocks; taps are redrawn at
    // each block entry and only their phases evolve inside a block.
    const int frames_per_segment = std::max(
        1, static_cast<int>(std::floor(config.decorrelation_distance / std::max(step, 1e-12))));

    struct Segment {
        TapSet taps;
        std::vector<Eigen::Vector3d> arrival_dirs;
        std::vector<double> anchor_distance;
        Eigen::Vector3d anchor_position;
    };

    const int n_segments = (scenario.n_frames + frames_per_segment - 1) / frames_per_segment;
    std::vector<Segment> segments(static_cast<std::size_t>(n_segments));

    for (int s = 0; s < n_segments; ++s) {
        const int anchor_frame = s * frames_per_segment;
        const Eigen::Vector3d& anchor = positions[static_cast<std::size_t>(anchor_frame)];
        const Eigen::Vector3d to_tx = geometry.tx_position - anchor;
        const double los_distance = to_tx.norm();

        TapProfile profile = scenario.tap_profile;
        profile.mean_arrival_azimuth = std::atan2(to_tx.y(), to_tx.x());
        profile.mean_arrival_zenith = std::acos(std::clamp(to_tx.z() / los_distance, -1.0, 1.0));
        const Eigen::Vector3d from_tx = -to_tx;
        profile.mean_departure_azimuth = std::atan2(from_tx.y(), from_tx.x());
        profile.mean_departure_zenith =
            std::acos(std::clamp(from_tx.z() / los_distance, -1.0, 1.0));

        Segment& segment = segments[static_cast<std::size_t>(s)];
        segment.taps = generate_taps(lsp[static_cast<std::size_t>(anchor_frame)], scenario.n_taps,
                                     scenario.k_factor,
                                     Rng::mix(seed, kStreamTaps, static_cast<std::uint64_t>(s)),
                                     profile);
        segment.anchor_position = anchor;
        segment.arrival_dirs.reserve(segment.taps.size());
        segment.anchor_distance.reserve(segment.taps.size());
        for (const auto& tap : segment.taps) {
            segment.arrival_dirs.push_back(unit_from_angles(tap.arrival_azimuth, tap.arrival_zenith));
            segment.anchor_distance.push_back(los_distance + kSpeedOfLight * tap.delay);
        }
    }

    ChannelTrace trace;
    trace.responses.resize(scenario.n_frames, scenario.n_subcarriers);
    trace.frame_interval = scenario.frame_interval;
    trace.realization_seed = seed;
    trace.lsp_per_frame = lsp;

    std::vector<std::complex<double>> gains;
    for (int i = 0; i < scenario.n_frames; ++i) {
        const int s = std::min(i / frames_per_segment, n_segments - 1);
        const Segment& segment = segments[static_cast<std::size_t>(s)];
        const Eigen::Vector3d& pos = positions[static_cast<std::size_t>(i)];
        const Eigen::Vector3d offset = pos - segment.anchor_position;

        gains.assign(segment.taps.size(), {});
        for (std::size_t l = 0; l < segment.taps.size(); ++l) {
            const Tap& tap = segment.taps[l];
            double distance;
            if (tap.is_los) {
                distance = (geometry.tx_position - pos).norm();
            } else {
                // Plane-wave approximation: motion along the arrival direction
                // shortens the scattered path.
                distance = segment.anchor_distance[l] - offset.dot(segment.arrival_dirs[l]);
            }
            gains[l] = tap_response(tap, geometry.carrier_frequency, distance);
        }

        const double sf_amplitude =
            std::pow(10.0, scenario.shadow_fading_sigma_db *
                               lsp[static_cast<std::size_t>(i)].shadow_fading() / 20.0);
        trace.responses.row(i) =
            sf_amplitude *
            frequency_response(segment.taps, gains, scenario.n_subcarriers,
                               scenario.subcarrier_spacing)
                .transpose();
    }

    if (!trace.responses.allFinite()) {
        throw std::runtime_error("trace_channel: non-finite response generated");
    }
    return trace;
}

}  // namespace chanpred::channel3d
