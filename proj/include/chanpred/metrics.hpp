// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace chanpred::metrics {

/// NMSE between a predicted and a true response grid, split into the real and
/// imaginary component streams plus their average.
struct NmseReport {
    double nmse_real = 0.0;
    double nmse_imag = 0.0;
    double nmse_avg = 0.0;
    std::int64_t n_predictions = 0;
    std::int64_t n_subcarriers = 0;
    std::string method;
    std::string mode;
    double ssnr_db = 0.0;
};

/// Normalized mean-squared error over an n x m grid. Each component error is
/// normalized by the magnitude of the true element at the same (t, k):
///
///   nmse_c = (1/(n*m)) * sum_t sum_k ( c(pred - truth)(t,k) / |truth(t,k)| )^2
///
/// for c in {real, imag}; nmse_avg is their mean. Throws std::invalid_argument
/// on shape mismatch and std::domain_error when any |truth| < 1e-12 (the
/// offending index is reported in the message).
NmseReport nmse(const Eigen::MatrixXcd& predicted, const Eigen::MatrixXcd& truth);

/// Instantaneous SNR: pilot-symbol SNR scaled by the channel gain |h|^2.
double snr(double ssnr, std::complex<double> h);

double to_db(double linear);
double from_db(double db);

}  // namespace chanpred::metrics
