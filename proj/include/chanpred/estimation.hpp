// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "chanpred/linksim.hpp"

namespace chanpred::estimation {

enum class Method { LS, LSMMSE };

const char* method_name(Method m);

/// Per-uplink-slot channel estimates for one realization: rows are frames,
/// columns are subcarriers.
struct EstimateSeries {
    Eigen::MatrixXcd estimates;
    Method method = Method::LS;
    double ssnr = 0.0;
};

/// Precomputed LS-MMSE filter context:
///   R_hh  channel autocorrelation (Hermitian PSD)
///   W     noise scale beta * sigma_n^2 / E{|P|^2}
/// The Hermitian factorization of (R_hh + W I) is cached so one context can
/// filter many frames.
class MmseContext {
  public:
    MmseContext(Eigen::MatrixXcd autocorrelation, double noise_scale, double beta);

    const Eigen::MatrixXcd& autocorrelation() const { return r_hh_; }
    double noise_scale() const { return noise_scale_; }
    double beta() const { return beta_; }

    /// Applies R_hh * (R_hh + W I)^{-1} to an LS estimate.
    Eigen::VectorXcd filter(const Eigen::VectorXcd& h_ls) const;

    /// Per-subcarrier scalar variant: scales element k by r_kk / (r_kk + W).
    Eigen::VectorXcd filter_scalar(const Eigen::VectorXcd& h_ls) const;

    /// Filters a frames x subcarriers matrix row-by-row in one batched solve.
    Eigen::MatrixXcd filter_rows(const Eigen::MatrixXcd& rows, bool scalar = false) const;

  private:
    Eigen::MatrixXcd r_hh_;
    double noise_scale_;
    double beta_;
    Eigen::LDLT<Eigen::MatrixXcd> solver_;
    bool singular_ = false;
};

/// LS estimate: per-subcarrier division of the received pilot by the known
/// transmitted pilot. Throws std::domain_error on a zero pilot symbol.
Eigen::VectorXcd ls_estimate(const linksim::ReceivedPilot& received,
                             const linksim::PilotFrame& frame);

/// Builds the MMSE context from channel sample vectors:
///   R_hh = (1/n) sum H H^H, Hermitian-symmetrized; W = beta / ssnr.
MmseContext build_mmse_context(const std::vector<Eigen::VectorXcd>& channel_samples, double ssnr,
                               double beta);

/// R_hh from the rows of a frames x subcarriers matrix (convenience overload).
MmseContext build_mmse_context(const Eigen::MatrixXcd& channel_rows, double ssnr, double beta);

/// Filters an LS estimate through the context (vector MMSE, Eq.-style
/// R_hh (R_hh + W I)^{-1} h_ls).
Eigen::VectorXcd mmse_estimate(const Eigen::VectorXcd& h_ls, const MmseContext& ctx);

}  // namespace chanpred::estimation
