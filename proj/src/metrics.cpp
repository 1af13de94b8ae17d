// SPDX-License-Identifier: Apache-2.0

#include "chanpred/metrics.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace chanpred::metrics {

NmseReport nmse(const Eigen::MatrixXcd& predicted, const Eigen::MatrixXcd& truth) {
    if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols()) {
        throw std::invalid_argument("nmse: shape mismatch between predicted and truth");
    }
    if (predicted.size() == 0) {
        throw std::invalid_argument("nmse: empty matrices");
    }

    const Eigen::Index n = truth.rows();
    const Eigen::Index m = truth.cols();
    double acc_real = 0.0;
    double acc_imag = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        for (Eigen::Index k = 0; k < m; ++k) {
            const double mag = std::abs(truth(t, k));
            if (mag < 1e-12) {
                throw std::domain_error("nmse: degenerate normalizer |truth| < 1e-12 at (t=" +
                                        std::to_string(t) + ", k=" + std::to_string(k) + ")");
            }
            const std::complex<double> err = predicted(t, k) - truth(t, k);
            const double re = err.real() / mag;
            const double im = err.imag() / mag;
            acc_real += re * re;
            acc_imag += im * im;
        }
    }

    const double denom = static_cast<double>(n) * static_cast<double>(m);
    NmseReport report;
    report.nmse_real = acc_real / denom;
    report.nmse_imag = acc_imag / denom;
    report.nmse_avg = 0.5 * (report.nmse_real + report.nmse_imag);
    report.n_predictions = n;
    report.n_subcarriers = m;
    return report;
}

double snr(double ssnr, std::complex<double> h) {
    if (ssnr <= 0.0) {
        throw std::invalid_argument("snr: ssnr must be positive");
    }
    return ssnr * std::norm(h);
}

double to_db(double linear) { return 10.0 * std::log10(linear); }

double from_db(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace chanpred::metrics
