// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

namespace chanpred::linksim {

enum class Modulation { Qam4 = 4, Qam16 = 16, Qam64 = 64 };

Modulation modulation_from_order(int order);
const char* modulation_name(Modulation m);

/// Unit-average-energy QAM constellation points for the given order.
std::vector<std::complex<double>> qam_constellation(Modulation m);

/// E{1/|P|^2} over the constellation: the LS error-variance constant beta
/// (1 for 4QAM, 17/9 for 16QAM).
double qam_beta(Modulation m);

/// One uplink pilot frame: known symbols on every subcarrier.
struct PilotFrame {
    Eigen::VectorXcd symbols;
    int frame_index = 0;
    double slot_time = 0.0;
};

/// Pilot frame after the channel plus additive noise.
struct ReceivedPilot {
    Eigen::VectorXcd symbols;
    double noise_variance = 0.0;
    int frame_index = 0;
};

/// Frame timing: UL and DL instants as fractions of the frame interval.
struct TddSchedule {
    double frame_interval = 5e-3;
    double ul_offset = 0.0;
    double dl_offset = 1.0;

    void validate() const;
    double ul_time(int frame) const { return frame * frame_interval + ul_offset * frame_interval; }
    double dl_time(int frame) const { return frame * frame_interval + dl_offset * frame_interval; }
};

/// Pilot symbols drawn uniformly from the constellation; deterministic per seed.
PilotFrame make_pilot_frame(int n_subcarriers, Modulation constellation, std::uint64_t seed,
                            int frame_index = 0, double slot_time = 0.0);

/// P_r(k) = P(k) * H(k) + n(k) with n circularly symmetric complex Gaussian of
/// variance 1/ssnr (unit pilot energy). ssnr = +inf disables the noise.
ReceivedPilot transmit_pilot(const PilotFrame& frame, const Eigen::VectorXcd& h, double ssnr,
                             std::uint64_t seed);

/// Per-frame (ul_time, dl_time) pairs for n_frames frames.
std::vector<std::pair<double, double>> schedule_slots(const TddSchedule& schedule, int n_frames);

}  // namespace chanpred::linksim
