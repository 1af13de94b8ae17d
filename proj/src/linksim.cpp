// SPDX-License-Identifier: Apache-2.0

#include "chanpred/linksim.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "chanpred/rng.hpp"

namespace chanpred::linksim {

Modulation modulation_from_order(int order) {
    switch (order) {
        case 4:
            return Modulation::Qam4;
        case 16:
            return Modulation::Qam16;
        case 64:
            return Modulation::Qam64;
        default:
            throw std::invalid_argument("unsupported QAM order " + std::to_string(order) +
                                        " (expected 4, 16 or 64)");
    }
}

const char* modulation_name(Modulation m) {
    switch (m) {
        case Modulation::Qam4:
            return "4QAM";
        case Modulation::Qam16:
            return "16QAM";
        case Modulation::Qam64:
            return "64QAM";
    }
    return "?";
}

std::vector<std::complex<double>> qam_constellation(Modulation m) {
    const int order = static_cast<int>(m);
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(order))));
    // Levels -side+1, -side+3, ..., side-1 on each axis; mean energy of the
    // square grid is 2*(side^2-1)/3.
    const double energy = 2.0 * (side * side - 1) / 3.0;
    const double scale = 1.0 / std::sqrt(energy);
    std::vector<std::complex<double>> points;
    points.reserve(order);
    for (int i = 0; i < side; ++i) {
        for (int q = 0; q < side; ++q) {
            const double re = (2 * i - side + 1) * scale;
            const double im = (2 * q - side + 1) * scale;
            points.emplace_back(re, im);
        }
    }
    return points;
}

double qam_beta(Modulation m) {
    const auto points = qam_constellation(m);
    double acc = 0.0;
    for (const auto& p : points) {
        acc += 1.0 / std::norm(p);
    }
    return acc / static_cast<double>(points.size());
}

void TddSchedule::validate() const {
    if (frame_interval <= 0.0) {
        throw std::invalid_argument("TddSchedule: frame_interval must be positive");
    }
    if (!(ul_offset >= 0.0 && ul_offset < dl_offset && dl_offset <= 1.0)) {
        throw std::invalid_argument("TddSchedule: offsets must satisfy 0 <= ul < dl <= 1");
    }
}

PilotFrame make_pilot_frame(int n_subcarriers, Modulation constellation, std::uint64_t seed,
                            int frame_index, double slot_time) {
    if (n_subcarriers < 1) {
        throw std::invalid_argument("make_pilot_frame: n_subcarriers must be >= 1");
    }
    const auto points = qam_constellation(constellation);
    Rng rng(seed);
    PilotFrame frame;
    frame.symbols.resize(n_subcarriers);
    for (int k = 0; k < n_subcarriers; ++k) {
        frame.symbols[k] = points[rng.uniform_int(points.size())];
    }
    frame.frame_index = frame_index;
    frame.slot_time = slot_time;
    return frame;
}

ReceivedPilot transmit_pilot(const PilotFrame& frame, const Eigen::VectorXcd& h, double ssnr,
                             std::uint64_t seed) {
    if (frame.symbols.size() != h.size()) {
        throw std::invalid_argument("transmit_pilot: pilot/channel length mismatch");
    }
    if (!(ssnr > 0.0)) {
        throw std::invalid_argument("transmit_pilot: ssnr must be positive");
    }

    ReceivedPilot received;
    received.frame_index = frame.frame_index;
    received.symbols = frame.symbols.cwiseProduct(h);

    if (std::isinf(ssnr)) {
        received.noise_variance = 0.0;
        return received;
    }

    const double noise_variance = 1.0 / ssnr;  // E{|P|^2} = 1 by construction
    const double sigma = std::sqrt(noise_variance / 2.0);
    Rng rng(seed);
    for (Eigen::Index k = 0; k < received.symbols.size(); ++k) {
        received.symbols[k] += std::complex<double>(sigma * rng.normal(), sigma * rng.normal());
    }
    received.noise_variance = noise_variance;
    return received;
}

std::vector<std::pair<double, double>> schedule_slots(const TddSchedule& schedule, int n_frames) {
    schedule.validate();
    if (n_frames < 1) {
        throw std::invalid_argument("schedule_slots: n_frames must be >= 1");
    }
    std::vector<std::pair<double, double>> slots;
    slots.reserve(n_frames);
    for (int n = 0; n < n_frames; ++n) {
        slots.emplace_back(schedule.ul_time(n), schedule.dl_time(n));
    }
    return slots;
}

}  // namespace chanpred::linksim
