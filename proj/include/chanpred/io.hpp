// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "chanpred/channel3d.hpp"
#include "chanpred/estimation.hpp"
#include "chanpred/lstm.hpp"

namespace chanpred::io {

/// Channel trace file (little-endian):
///   magic "CPTR" | u32 version=1 | u32 bytes_per_sample=16 | u64 seed
///   | u32 n_frames | u32 n_subcarriers | f64 frame_interval
///   | n_frames * n_subcarriers complex128 samples, row-major (frame-major).
void write_trace(const std::filesystem::path& path, const channel3d::ChannelTrace& trace);
channel3d::ChannelTrace read_trace(const std::filesystem::path& path);

/// Estimate series file:
///   magic "CPES" | u32 version=1 | u32 method (0=LS, 1=LSMMSE) | f64 ssnr
///   | u32 n_frames | u32 n_subcarriers
///   | row-major complex128 payload.
void write_estimates(const std::filesystem::path& path, const estimation::EstimateSeries& series);
estimation::EstimateSeries read_estimates(const std::filesystem::path& path);

/// Model checkpoint:
///   magic "CPLM" | u32 version=1 | u32 hidden | u32 input_dim | u32 output_dim
///   | normalization mean then scale (input_dim f64 each)
///   | tensors in order w_input, w_recurrent, bias, w_fc, b_fc, w_reg, b_reg,
///     each row-major f64.
/// Round-trip load is bit-exact.
void save_model(const std::filesystem::path& path, const lstm::LstmModel& model);
lstm::LstmModel load_model(const std::filesystem::path& path);

/// FNV-1a 64-bit content hash, hex-encoded.
std::string fnv1a_hex(const std::string& bytes);

/// Whole-file read (for byte-identity checks).
std::string read_file_bytes(const std::filesystem::path& path);

}  // namespace chanpred::io
