// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace chanpred::channel3d {

inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr int kNumLsp = 7;

/// Index order of the seven large-scale parameter deviates.
enum LspIndex : int {
    kDelaySpread = 0,
    kAzimuthDeparture = 1,
    kZenithDeparture = 2,
    kAzimuthArrival = 3,
    kZenithArrival = 4,
    kShadowFading = 5,
    kKFactor = 6,
};

/// Standard-normal deviates for one position, after cross-correlation.
struct LargeScaleParams {
    std::array<double, kNumLsp> x{};

    double delay_spread() const { return x[kDelaySpread]; }
    double azimuth_departure_spread() const { return x[kAzimuthDeparture]; }
    double zenith_departure_spread() const { return x[kZenithDeparture]; }
    double azimuth_arrival_spread() const { return x[kAzimuthArrival]; }
    double zenith_arrival_spread() const { return x[kZenithArrival]; }
    double shadow_fading() const { return x[kShadowFading]; }
    double k_factor() const { return x[kKFactor]; }
};

/// Spatial correlation of the large-scale field plus the 7x7 cross-correlation
/// matrix applied pointwise.
struct CorrelationConfig {
    double decorrelation_distance = 5.0;
    Eigen::Matrix<double, kNumLsp, kNumLsp> cross_correlation =
        Eigen::Matrix<double, kNumLsp, kNumLsp>::Identity();

    /// Throws std::invalid_argument when d_dec <= 0 or M M^T is not a valid
    /// unit-diagonal covariance matrix.
    void validate() const;
};

/// One resolvable multipath component.
struct Tap {
    double power = 0.0;
    double delay = 0.0;
    double departure_azimuth = 0.0;
    double departure_zenith = 0.0;
    double arrival_azimuth = 0.0;
    double arrival_zenith = 0.0;
    bool is_los = false;
};

using TapSet = std::vector<Tap>;

/// Ricean K-factor draw statistics in dB.
struct KFactorStats {
    double mu_db = -3.0;
    double sigma_db = 0.5;
};

/// Mapping from the LSP deviates to physical spreads, plus the mean bearings
/// the per-tap angles scatter around.
struct TapProfile {
    double delay_spread_log10_mu = -7.0;     // log10 of seconds: 100 ns median
    double delay_spread_log10_sigma = 0.3;
    double azimuth_arrival_spread_deg = 40.0;
    double azimuth_departure_spread_deg = 15.0;
    double zenith_spread_deg = 5.0;
    double angle_spread_log10_sigma = 0.2;

    double mean_departure_azimuth = 0.0;
    double mean_departure_zenith = 1.5707963267948966;
    double mean_arrival_azimuth = 0.0;
    double mean_arrival_zenith = 1.5707963267948966;
};

/// Transmitter plus the receiver's linear path.
struct Geometry {
    Eigen::Vector3d tx_position{0.0, 0.0, 25.0};
    Eigen::Vector3d rx_path_start{50.0, 0.0, 1.5};
    Eigen::Vector3d rx_direction{0.0, 1.0, 0.0};
    double rx_speed = 10.0;
    double path_length = 100.0;
    double carrier_frequency = 3.5e9;

    void validate() const;
};

/// Scenario knobs consumed by trace_channel.
struct ScenarioParams {
    int n_frames = 2000;
    double frame_interval = 5e-3;
    int n_subcarriers = 128;
    double subcarrier_spacing = 15e3;
    int n_taps = 5;
    KFactorStats k_factor;
    TapProfile tap_profile;
    double shadow_fading_sigma_db = 3.0;
};

/// True channel frequency responses over time for one realization.
struct ChannelTrace {
    Eigen::MatrixXcd responses;  // n_frames x n_subcarriers
    double frame_interval = 0.0;
    std::uint64_t realization_seed = 0;
    /// Cross-correlated LSP deviates per frame, kept for diagnostics.
    std::vector<LargeScaleParams> lsp_per_frame;
};

/// Samples the 7-parameter Gaussian field over the given positions. Each
/// parameter is a zero-mean unit-variance process with spatial correlation
/// exp(-dist / d_dec); the cross-correlation matrix is applied pointwise
/// afterwards. Deterministic per seed.
std::vector<LargeScaleParams> draw_large_scale_field(std::span<const Eigen::Vector3d> positions,
                                                     const CorrelationConfig& config,
                                                     std::uint64_t seed);

/// Draws n_taps taps: a LoS tap carrying the K/(K+1) power fraction plus
/// exponentially decaying NLoS taps, powers normalized to sum 1. Angles are
/// wrapped Gaussians around the profile's mean bearings.
TapSet generate_taps(const LargeScaleParams& lsp, int n_taps, const KFactorStats& k_factor_stats,
                     std::uint64_t seed, const TapProfile& profile = {});

/// Complex tap gain sqrt(P) * exp(-j 2 pi f d / c) with isotropic antennas.
std::complex<double> tap_response(const Tap& tap, double carrier_frequency, double distance);

/// H(k) = sum_l g_l exp(-j 2 pi k df tau_l), k = 0 .. n_subcarriers-1.
Eigen::VectorXcd frequency_response(const TapSet& taps,
                                    std::span<const std::complex<double>> gains,
                                    int n_subcarriers, double subcarrier_spacing);

/// Full trace: correlated LSP field along the path, per-segment tap draws
/// (segments are decorrelation-distance blocks), continuous per-tap phase
/// evolution from the position-dependent path distances, and per-frame shadow
/// fading. Deterministic per seed.
ChannelTrace trace_channel(const Geometry& geometry, const CorrelationConfig& config,
                           const ScenarioParams& scenario, std::uint64_t seed);

/// Sum of tap powers; 1 within 1e-12 for every generated TapSet.
double total_power(const TapSet& taps);

}  // namespace chanpred::channel3d
