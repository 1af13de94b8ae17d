// SPDX-License-Identifier: Apache-2.0

#include "chanpred/estimation.hpp"

#include <cmath>
#include <stdexcept>

namespace chanpred::estimation {

const char* method_name(Method m) {
    switch (m) {
        case Method::LS:
            return "LS";
        case Method::LSMMSE:
            return "LSMMSE";
    }
    return "?";
}

MmseContext::MmseContext(Eigen::MatrixXcd autocorrelation, double noise_scale, double beta)
    : r_hh_(std::move(autocorrelation)), noise_scale_(noise_scale), beta_(beta) {
    if (r_hh_.rows() != r_hh_.cols()) {
        throw std::invalid_argument("MmseContext: R_hh must be square");
    }
    if (noise_scale_ < 0.0) {
        throw std::invalid_argument("MmseContext: noise scale must be >= 0");
    }
    // Enforce Hermitian symmetry before factorizing.
    r_hh_ = 0.5 * (r_hh_ + r_hh_.adjoint()).eval();

    const Eigen::Index n = r_hh_.rows();
    Eigen::MatrixXcd system = r_hh_;
    system.diagonal().array() += noise_scale_;
    solver_.compute(system);

    if (solver_.info() != Eigen::Success) {
        singular_ = true;
        return;
    }
    // LDLT may succeed numerically on a semidefinite system; flag effectively
    // zero pivots so W = 0 with rank-deficient R_hh is surfaced to the caller.
    const auto d = solver_.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (dmax <= 0.0 || d.cwiseAbs().minCoeff() < 1e-13 * dmax) {
        singular_ = true;
    }
    (void)n;
}

Eigen::VectorXcd MmseContext::filter(const Eigen::VectorXcd& h_ls) const {
    if (h_ls.size() != r_hh_.rows()) {
        throw std::invalid_argument("MmseContext::filter: dimension mismatch");
    }
    if (singular_) {
        throw std::runtime_error(
            "MmseContext::filter: singular system (W = 0 with rank-deficient R_hh)");
    }
    return r_hh_ * solver_.solve(h_ls);
}

Eigen::VectorXcd MmseContext::filter_scalar(const Eigen::VectorXcd& h_ls) const {
    if (h_ls.size() != r_hh_.rows()) {
        throw std::invalid_argument("MmseContext::filter_scalar: dimension mismatch");
    }
    Eigen::VectorXcd out(h_ls.size());
    for (Eigen::Index k = 0; k < h_ls.size(); ++k) {
        const double r_kk = r_hh_(k, k).real();
        const double denom = r_kk + noise_scale_;
        if (denom <= 0.0) {
            throw std::runtime_error("MmseContext::filter_scalar: singular scalar system");
        }
        out[k] = h_ls[k] * (r_kk / denom);
    }
    return out;
}

Eigen::MatrixXcd MmseContext::filter_rows(const Eigen::MatrixXcd& rows, bool scalar) const {
    if (rows.cols() != r_hh_.rows()) {
        throw std::invalid_argument("MmseContext::filter_rows: dimension mismatch");
    }
    if (scalar) {
        Eigen::MatrixXcd out(rows.rows(), rows.cols());
        for (Eigen::Index t = 0; t < rows.rows(); ++t) {
            out.row(t) = filter_scalar(rows.row(t).transpose()).transpose();
        }
        return out;
    }
    if (singular_) {
        throw std::runtime_error(
            "MmseContext::filter_rows: singular system (W = 0 with rank-deficient R_hh)");
    }
    return (r_hh_ * solver_.solve(rows.transpose())).transpose();
}

Eigen::VectorXcd ls_estimate(const linksim::ReceivedPilot& received,
                             const linksim::PilotFrame& frame) {
    if (received.symbols.size() != frame.symbols.size()) {
        throw std::invalid_argument("ls_estimate: dimension mismatch");
    }
    Eigen::VectorXcd estimate(frame.symbols.size());
    for (Eigen::Index k = 0; k < frame.symbols.size(); ++k) {
        if (frame.symbols[k] == std::complex<double>(0.0, 0.0)) {
            throw std::domain_error("ls_estimate: zero pilot symbol at subcarrier " +
                                    std::to_string(k));
        }
        estimate[k] = received.symbols[k] / frame.symbols[k];
    }
    return estimate;
}

MmseContext build_mmse_context(const std::vector<Eigen::VectorXcd>& channel_samples, double ssnr,
                               double beta) {
    if (channel_samples.empty()) {
        throw std::domain_error("build_mmse_context: need at least one channel sample");
    }
    if (!(ssnr > 0.0)) {
        throw std::invalid_argument("build_mmse_context: ssnr must be positive");
    }
    const Eigen::Index n = channel_samples.front().size();
    Eigen::MatrixXcd r_hh = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& h : channel_samples) {
        if (h.size() != n) {
            throw std::invalid_argument("build_mmse_context: inconsistent sample dimensions");
        }
        r_hh.noalias() += h * h.adjoint();
    }
    r_hh /= static_cast<double>(channel_samples.size());

    const double noise_scale = std::isinf(ssnr) ? 0.0 : beta / ssnr;  // unit pilot energy
    return MmseContext(std::move(r_hh), noise_scale, beta);
}

MmseContext build_mmse_context(const Eigen::MatrixXcd& channel_rows, double ssnr, double beta) {
    if (channel_rows.rows() == 0) {
        throw std::domain_error("build_mmse_context: need at least one channel sample");
    }
    if (!(ssnr > 0.0)) {
        throw std::invalid_argument("build_mmse_context: ssnr must be positive");
    }
    // Rows are sample vectors h^T, so R_hh(i,j) = sum_t h_t[i] conj(h_t[j]).
    Eigen::MatrixXcd r_hh = (channel_rows.transpose() * channel_rows.conjugate()) /
                            static_cast<double>(channel_rows.rows());
    const double noise_scale = std::isinf(ssnr) ? 0.0 : beta / ssnr;
    return MmseContext(std::move(r_hh), noise_scale, beta);
}

Eigen::VectorXcd mmse_estimate(const Eigen::VectorXcd& h_ls, const MmseContext& ctx) {
    return ctx.filter(h_ls);
}

}  // namespace chanpred::estimation
