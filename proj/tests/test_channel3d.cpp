// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "chanpred/channel3d.hpp"
#include "chanpred/rng.hpp"

using chanpred::Rng;
namespace channel3d = chanpred::channel3d;
using Eigen::Vector3d;

namespace {

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    double ma = 0.0;
    double mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0;
    double va = 0.0;
    double vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("identical positions get identical parameters") {
    const std::vector<Vector3d> positions{{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}};
    const channel3d::CorrelationConfig config;
    const auto field = channel3d::draw_large_scale_field(positions, config, 99);
    REQUIRE(field.size() == 2);
    for (int p = 0; p < channel3d::kNumLsp; ++p) {
        CHECK(field[0].x[static_cast<std::size_t>(p)] == field[1].x[static_cast<std::size_t>(p)]);
    }
}

TEST_CASE("marginals are standard normal") {
    channel3d::CorrelationConfig config;
    const std::vector<Vector3d> positions{{0.0, 0.0, 0.0}};
    const int draws = 20000;
    std::array<double, channel3d::kNumLsp> mean{};
    std::array<double, channel3d::kNumLsp> second{};
    for (int d = 0; d < draws; ++d) {
        const auto field =
            channel3d::draw_large_scale_field(positions, config, 1000 + static_cast<unsigned>(d));
        for (int p = 0; p < channel3d::kNumLsp; ++p) {
            mean[static_cast<std::size_t>(p)] += field[0].x[static_cast<std::size_t>(p)];
            second[static_cast<std::size_t>(p)] +=
                field[0].x[static_cast<std::size_t>(p)] * field[0].x[static_cast<std::size_t>(p)];
        }
    }
    for (int p = 0; p < channel3d::kNumLsp; ++p) {
        const double mu = mean[static_cast<std::size_t>(p)] / draws;
        const double var = second[static_cast<std::size_t>(p)] / draws - mu * mu;
        CHECK(std::abs(mu) < 0.05);
        CHECK(var > 0.9);
        CHECK(var < 1.1);
    }
}

TEST_CASE("spatial correlation at one decorrelation distance is e^-1") {
    channel3d::CorrelationConfig config;
    config.decorrelation_distance = 5.0;
    const std::vector<Vector3d> positions{{0.0, 0.0, 0.0}, {5.0, 0.0, 0.0}};
    const int draws = 10000;
    std::vector<double> a(draws);
    std::vector<double> b(draws);
    for (int d = 0; d < draws; ++d) {
        const auto field =
            channel3d::draw_large_scale_field(positions, config, 7000 + static_cast<unsigned>(d));
        a[static_cast<std::size_t>(d)] = field[0].shadow_fading();
        b[static_cast<std::size_t>(d)] = field[1].shadow_fading();
    }
    CHECK(std::abs(correlation(a, b) - std::exp(-1.0)) < 0.05);
}

TEST_CASE("far-apart positions decorrelate") {
    channel3d::CorrelationConfig config;
    config.decorrelation_distance = 5.0;
    const std::vector<Vector3d> positions{{0.0, 0.0, 0.0}, {500.0, 0.0, 0.0}};
    const int draws = 10000;
    std::vector<double> a(draws);
    std::vector<double> b(draws);
    for (int d = 0; d < draws; ++d) {
        const auto field =
            channel3d::draw_large_scale_field(positions, config, 90000 + static_cast<unsigned>(d));
        a[static_cast<std::size_t>(d)] = field[0].delay_spread();
        b[static_cast<std::size_t>(d)] = field[1].delay_spread();
    }
    CHECK(std::abs(correlation(a, b)) < 0.05);
}

TEST_CASE("dense path matches the kernel for non-collinear positions") {
    channel3d::CorrelationConfig config;
    config.decorrelation_distance = 2.0;
    // A bent path forces the general sampler.
    const std::vector<Vector3d> positions{{0.0, 0.0, 0.0}, {2.0, 0.0, 0.0}, {2.0, 2.0, 0.0}};
    const int draws = 10000;
    std::vector<double> first(draws);
    std::vector<double> last(draws);
    for (int d = 0; d < draws; ++d) {
        const auto field =
            channel3d::draw_large_scale_field(positions, config, 1234 + static_cast<unsigned>(d));
        first[static_cast<std::size_t>(d)] = field[0].k_factor();
        last[static_cast<std::size_t>(d)] = field[2].k_factor();
    }
    const double expected = std::exp(-(positions[2] - positions[0]).norm() / 2.0);
    CHECK(std::abs(correlation(first, last) - expected) < 0.05);
}

TEST_CASE("cross-correlation matrix shapes the empirical covariance") {
    channel3d::CorrelationConfig config;
    Eigen::Matrix<double, 7, 7> m = Eigen::Matrix<double, 7, 7>::Identity();
    // Couple shadow fading and K-factor with a unit-norm row pair.
    m(channel3d::kKFactor, channel3d::kKFactor) = std::sqrt(0.5);
    m(channel3d::kKFactor, channel3d::kShadowFading) = -std::sqrt(0.5);
    config.cross_correlation = m;
    config.validate();

    const std::vector<Vector3d> positions{{0.0, 0.0, 0.0}};
    const int draws = 20000;
    std::vector<double> sf(draws);
    std::vector<double> kf(draws);
    for (int d = 0; d < draws; ++d) {
        const auto field =
            channel3d::draw_large_scale_field(positions, config, 555 + static_cast<unsigned>(d));
        sf[static_cast<std::size_t>(d)] = field[0].shadow_fading();
        kf[static_cast<std::size_t>(d)] = field[0].k_factor();
    }
    // Expected covariance (M M^T)(KF, SF) = -sqrt(0.5).
    CHECK(correlation(sf, kf) == doctest::Approx(-std::sqrt(0.5)).epsilon(0.05));
}

TEST_CASE("configuration errors are rejected") {
    channel3d::CorrelationConfig config;
    config.decorrelation_distance = 0.0;
    const std::vector<Vector3d> positions{{0.0, 0.0, 0.0}};
    CHECK_THROWS_AS(channel3d::draw_large_scale_field(positions, config, 1),
                    std::invalid_argument);

    channel3d::CorrelationConfig bad_m;
    bad_m.cross_correlation = 2.0 * Eigen::Matrix<double, 7, 7>::Identity();
    CHECK_THROWS_AS(channel3d::draw_large_scale_field(positions, bad_m, 1),
                    std::invalid_argument);

    channel3d::CorrelationConfig ok;
    CHECK_THROWS_AS(
        channel3d::draw_large_scale_field(std::vector<Vector3d>{}, ok, 1),
        std::invalid_argument);
}

TEST_CASE("single tap set is the degenerate profile") {
    channel3d::LargeScaleParams lsp;
    const auto taps = channel3d::generate_taps(lsp, 1, {-3.0, 0.5}, 42);
    REQUIRE(taps.size() == 1);
    CHECK(taps[0].power == 1.0);
    CHECK(taps[0].delay == 0.0);
    CHECK(taps[0].is_los);
}

TEST_CASE("zero tap count is rejected") {
    channel3d::LargeScaleParams lsp;
    CHECK_THROWS_AS(channel3d::generate_taps(lsp, 0, {-3.0, 0.5}, 1), std::domain_error);
}

TEST_CASE("tap powers always sum to one") {
    Rng rng(77);
    for (int d = 0; d < 2000; ++d) {
        channel3d::LargeScaleParams lsp;
        for (int p = 0; p < channel3d::kNumLsp; ++p) {
            lsp.x[static_cast<std::size_t>(p)] = rng.normal();
        }
        const auto taps =
            channel3d::generate_taps(lsp, 5, {-3.0, 0.5}, 31000 + static_cast<unsigned>(d));
        CHECK(std::abs(channel3d::total_power(taps) - 1.0) <= 1e-12);
        int los_count = 0;
        double previous_delay = -1.0;
        for (const auto& tap : taps) {
            CHECK(tap.power >= 0.0);
            CHECK(tap.delay >= 0.0);
            CHECK(tap.delay >= previous_delay);
            previous_delay = tap.delay;
            los_count += tap.is_los ? 1 : 0;
        }
        CHECK(los_count == 1);
    }
}

TEST_CASE("K-factor ensemble mean matches the configured statistics") {
    // mean of 10 log10(P_los / sum P_nlos) over draws -> mu_KF.
    Rng rng(88);
    const int draws = 10000;
    double acc = 0.0;
    for (int d = 0; d < draws; ++d) {
        channel3d::LargeScaleParams lsp;
        lsp.x[channel3d::kKFactor] = rng.normal();
        const auto taps =
            channel3d::generate_taps(lsp, 5, {-3.0, 0.5}, 501 + static_cast<unsigned>(d));
        double p_los = 0.0;
        double p_nlos = 0.0;
        for (const auto& tap : taps) {
            (tap.is_los ? p_los : p_nlos) += tap.power;
        }
        acc += 10.0 * std::log10(p_los / p_nlos);
    }
    acc /= draws;
    CHECK(acc == doctest::Approx(-3.0).epsilon(0.05));
    CHECK(std::abs(acc - (-3.0)) < 0.15);
}

TEST_CASE("tap response magnitude is sqrt power") {
    channel3d::Tap tap;
    tap.power = 0.25;
    const auto g = channel3d::tap_response(tap, 3.5e9, 123.456);
    CHECK(std::abs(g) == doctest::Approx(0.5).epsilon(1e-12));

    channel3d::Tap zero;
    zero.power = 0.0;
    CHECK(std::abs(channel3d::tap_response(zero, 3.5e9, 10.0)) == 0.0);
}

TEST_CASE("phase wraps to zero for integer wavelengths") {
    channel3d::Tap tap;
    tap.power = 1.0;
    // f d / c = 1000 exactly.
    const double c = channel3d::kSpeedOfLight;
    const auto g = channel3d::tap_response(tap, 1e9, 1000.0 * c / 1e9);
    CHECK(g.real() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(g.imag()) < 1e-9);
}

TEST_CASE("flat channel for a single zero-delay tap") {
    channel3d::TapSet taps(1);
    taps[0].power = 1.0;
    taps[0].delay = 0.0;
    const std::complex<double> gain{0.3, -0.4};
    const std::vector<std::complex<double>> gains{gain};
    const auto h = channel3d::frequency_response(taps, gains, 128, 15e3);
    for (int k = 0; k < 128; ++k) {
        CHECK(std::abs(h[k] - gain) < 1e-15);
    }
}

TEST_CASE("frequency response matches a brute-force summation oracle") {
    channel3d::TapSet taps(2);
    taps[0].delay = 0.0;
    taps[1].delay = 1.0 / (128.0 * 15e3);
    const std::vector<std::complex<double>> gains{{0.8, 0.0}, {0.0, 0.6}};
    const auto h = channel3d::frequency_response(taps, gains, 128, 15e3);

    for (int k = 0; k < 128; ++k) {
        std::complex<double> expected(0.0, 0.0);
        for (std::size_t l = 0; l < taps.size(); ++l) {
            const double angle = -2.0 * M_PI * k * 15e3 * taps[l].delay;
            expected += gains[l] * std::complex<double>(std::cos(angle), std::sin(angle));
        }
        CHECK(std::abs(h[k] - expected) < 1e-12);
    }
}

TEST_CASE("trace is deterministic and finite") {
    channel3d::Geometry geometry;
    geometry.carrier_frequency = 450e6;
    channel3d::CorrelationConfig config;
    channel3d::ScenarioParams scenario;
    scenario.n_frames = 200;
    scenario.n_subcarriers = 32;

    const auto a = channel3d::trace_channel(geometry, config, scenario, 2024);
    const auto b = channel3d::trace_channel(geometry, config, scenario, 2024);
    CHECK(a.responses == b.responses);
    CHECK(a.responses.allFinite());
    CHECK(a.responses.rows() == 200);
    CHECK(a.responses.cols() == 32);

    const auto c = channel3d::trace_channel(geometry, config, scenario, 2025);
    CHECK(a.responses != c.responses);
}

TEST_CASE("paper-scale frame count fits the path") {
    channel3d::Geometry geometry;  // 100 m at 10 m/s
    channel3d::CorrelationConfig config;
    channel3d::ScenarioParams scenario;
    scenario.n_frames = 2000;  // 5 ms sampling for 10 s
    scenario.n_subcarriers = 4;
    CHECK_NOTHROW(channel3d::trace_channel(geometry, config, scenario, 7));

    scenario.n_frames = 2001;
    CHECK_THROWS_AS(channel3d::trace_channel(geometry, config, scenario, 7), std::domain_error);
}

TEST_CASE("adjacent-frame shadow fading correlation matches the step size") {
    channel3d::Geometry geometry;
    channel3d::CorrelationConfig config;  // d_dec = 5 m
    channel3d::ScenarioParams scenario;
    scenario.n_frames = 2;  // 5 cm apart at 10 m/s and 5 ms
    scenario.n_subcarriers = 1;
    scenario.n_taps = 1;

    const int draws = 1000;
    std::vector<double> a(draws);
    std::vector<double> b(draws);
    for (int d = 0; d < draws; ++d) {
        const auto trace =
            channel3d::trace_channel(geometry, config, scenario, 40000 + static_cast<unsigned>(d));
        a[static_cast<std::size_t>(d)] = trace.lsp_per_frame[0].shadow_fading();
        b[static_cast<std::size_t>(d)] = trace.lsp_per_frame[1].shadow_fading();
    }
    const double expected = std::exp(-0.05 / 5.0);  // 0.990
    CHECK(correlation(a, b) == doctest::Approx(expected).epsilon(0.05));
}
