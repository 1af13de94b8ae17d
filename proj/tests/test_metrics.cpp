// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "chanpred/metrics.hpp"
#include "chanpred/rng.hpp"

using chanpred::Rng;
namespace metrics = chanpred::metrics;

namespace {

// Independent scalar-accumulation oracle for the NMSE definition.
struct OracleNmse {
    double real = 0.0;
    double imag = 0.0;
};

OracleNmse nmse_oracle(const Eigen::MatrixXcd& predicted, const Eigen::MatrixXcd& truth) {
    OracleNmse acc;
    const auto n = truth.rows();
    const auto m = truth.cols();
    for (Eigen::Index t = 0; t < n; ++t) {
        for (Eigen::Index k = 0; k < m; ++k) {
            const double norm2 = std::sqrt(truth(t, k).real() * truth(t, k).real() +
                                           truth(t, k).imag() * truth(t, k).imag());
            const double dre = predicted(t, k).real() - truth(t, k).real();
            const double dim = predicted(t, k).imag() - truth(t, k).imag();
            acc.real += (dre / norm2) * (dre / norm2);
            acc.imag += (dim / norm2) * (dim / norm2);
        }
    }
    acc.real /= static_cast<double>(n * m);
    acc.imag /= static_cast<double>(n * m);
    return acc;
}

Eigen::MatrixXcd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double floor = 0.1) {
    Eigen::MatrixXcd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            std::complex<double> v = rng.complex_normal();
            if (std::abs(v) < floor) {
                v += std::complex<double>(floor, floor);
            }
            m(r, c) = v;
        }
    }
    return m;
}

}  // namespace

TEST_CASE("perfect prediction gives exactly zero") {
    Rng rng(11);
    const Eigen::MatrixXcd truth = random_matrix(6, 9, rng);
    const auto report = metrics::nmse(truth, truth);
    CHECK(report.nmse_real == 0.0);
    CHECK(report.nmse_imag == 0.0);
    CHECK(report.nmse_avg == 0.0);
}

TEST_CASE("single element analytic value") {
    Eigen::MatrixXcd truth(1, 1);
    truth(0, 0) = {1.0, 0.0};
    Eigen::MatrixXcd predicted(1, 1);
    predicted(0, 0) = {1.1, 0.0};
    const auto report = metrics::nmse(predicted, truth);
    CHECK(report.nmse_real == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(report.nmse_imag == 0.0);
    CHECK(report.nmse_avg == doctest::Approx(0.005).epsilon(1e-12));
    CHECK(report.n_predictions == 1);
    CHECK(report.n_subcarriers == 1);
}

TEST_CASE("matches the brute-force oracle on random shapes") {
    Rng rng(29);
    for (int trial = 0; trial < 40; ++trial) {
        const auto rows = static_cast<Eigen::Index>(1 + rng.uniform_int(50));
        const auto cols = static_cast<Eigen::Index>(1 + rng.uniform_int(128));
        const Eigen::MatrixXcd truth = random_matrix(rows, cols, rng);
        const Eigen::MatrixXcd predicted = truth + 0.3 * random_matrix(rows, cols, rng, 0.0);
        const auto report = metrics::nmse(predicted, truth);
        const auto oracle = nmse_oracle(predicted, truth);
        CHECK(report.nmse_real == doctest::Approx(oracle.real).epsilon(1e-12));
        CHECK(report.nmse_imag == doctest::Approx(oracle.imag).epsilon(1e-12));
        CHECK(report.nmse_avg ==
              doctest::Approx(0.5 * (oracle.real + oracle.imag)).epsilon(1e-12));
    }
}

TEST_CASE("nmse_avg is invariant under common positive real scaling") {
    Rng rng(37);
    const Eigen::MatrixXcd truth = random_matrix(8, 16, rng);
    const Eigen::MatrixXcd predicted = truth + 0.2 * random_matrix(8, 16, rng, 0.0);
    const auto base = metrics::nmse(predicted, truth);
    for (const double scale : {0.25, 3.0, 1e4}) {
        const auto scaled = metrics::nmse(scale * predicted, scale * truth);
        CHECK(scaled.nmse_avg == doctest::Approx(base.nmse_avg).epsilon(1e-12));
        CHECK(scaled.nmse_real == doctest::Approx(base.nmse_real).epsilon(1e-12));
        CHECK(scaled.nmse_imag == doctest::Approx(base.nmse_imag).epsilon(1e-12));
    }
}

TEST_CASE("concatenating two equal-sized blocks averages their NMSEs") {
    Rng rng(43);
    const Eigen::MatrixXcd truth_a = random_matrix(10, 7, rng);
    const Eigen::MatrixXcd truth_b = random_matrix(10, 7, rng);
    const Eigen::MatrixXcd pred_a = truth_a + 0.1 * random_matrix(10, 7, rng, 0.0);
    const Eigen::MatrixXcd pred_b = truth_b + 0.4 * random_matrix(10, 7, rng, 0.0);

    Eigen::MatrixXcd truth(20, 7);
    truth << truth_a, truth_b;
    Eigen::MatrixXcd predicted(20, 7);
    predicted << pred_a, pred_b;

    const auto whole = metrics::nmse(predicted, truth);
    const auto part_a = metrics::nmse(pred_a, truth_a);
    const auto part_b = metrics::nmse(pred_b, truth_b);
    CHECK(whole.nmse_avg ==
          doctest::Approx(0.5 * (part_a.nmse_avg + part_b.nmse_avg)).epsilon(1e-12));
}

TEST_CASE("degenerate normalizer is rejected with the offending index") {
    Eigen::MatrixXcd truth = Eigen::MatrixXcd::Ones(2, 2);
    truth(1, 0) = {0.0, 0.0};
    const Eigen::MatrixXcd predicted = truth;
    CHECK_THROWS_WITH_AS(metrics::nmse(predicted, truth),
                         doctest::Contains("(t=1, k=0)"), std::domain_error);
}

TEST_CASE("shape mismatch is rejected") {
    const Eigen::MatrixXcd a = Eigen::MatrixXcd::Ones(2, 3);
    const Eigen::MatrixXcd b = Eigen::MatrixXcd::Ones(3, 2);
    CHECK_THROWS_AS(metrics::nmse(a, b), std::invalid_argument);
}

TEST_CASE("snr scales ssnr by the channel gain") {
    CHECK(metrics::snr(10.0, std::complex<double>(std::sqrt(0.5), 0.0)) ==
          doctest::Approx(5.0).epsilon(1e-12));
    CHECK(metrics::snr(7.0, {0.0, 0.0}) == 0.0);
    CHECK_THROWS_AS(metrics::snr(0.0, {1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("dB round trip") {
    const double linear = metrics::from_db(20.0);
    CHECK(linear == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(metrics::to_db(linear) == doctest::Approx(20.0).epsilon(1e-12));
}
