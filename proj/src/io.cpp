// SPDX-License-Identifier: Apache-2.0

#include "chanpred/io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace chanpred::io {

namespace {

void write_bytes(std::ofstream& out, const void* data, std::size_t size) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

void read_bytes(std::ifstream& in, void* data, std::size_t size) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    if (!in) {
        throw std::runtime_error("io: truncated file");
    }
}

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
    write_bytes(out, &value, sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T value;
    read_bytes(in, &value, sizeof(T));
    return value;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("io: cannot open for writing: " + path.string());
    }
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("io: cannot open for reading: " + path.string());
    }
    return in;
}

void check_magic(std::ifstream& in, const char* magic) {
    std::array<char, 4> buf{};
    read_bytes(in, buf.data(), 4);
    if (std::memcmp(buf.data(), magic, 4) != 0) {
        throw std::runtime_error(std::string("io: bad magic, expected ") + magic);
    }
}

void write_complex_rows(std::ofstream& out, const Eigen::MatrixXcd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const std::complex<double> v = m(r, c);
            write_pod(out, v.real());
            write_pod(out, v.imag());
        }
    }
}

void read_complex_rows(std::ifstream& in, Eigen::MatrixXcd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double re = read_pod<double>(in);
            const double im = read_pod<double>(in);
            m(r, c) = {re, im};
        }
    }
}

void write_real_rows(std::ofstream& out, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            write_pod(out, m(r, c));
        }
    }
}

void read_real_rows(std::ifstream& in, Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = read_pod<double>(in);
        }
    }
}

}  // namespace

void write_trace(const std::filesystem::path& path, const channel3d::ChannelTrace& trace) {
    auto out = open_out(path);
    write_bytes(out, "CPTR", 4);
    write_pod<std::uint32_t>(out, 1);
    write_pod<std::uint32_t>(out, 16);
    write_pod<std::uint64_t>(out, trace.realization_seed);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(trace.responses.rows()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(trace.responses.cols()));
    write_pod<double>(out, trace.frame_interval);
    write_complex_rows(out, trace.responses);
    if (!out) {
        throw std::runtime_error("io: write failed: " + path.string());
    }
}

channel3d::ChannelTrace read_trace(const std::filesystem::path& path) {
    auto in = open_in(path);
    check_magic(in, "CPTR");
    const auto version = read_pod<std::uint32_t>(in);
    if (version != 1) {
        throw std::runtime_error("io: unsupported trace version");
    }
    const auto bytes_per_sample = read_pod<std::uint32_t>(in);
    if (bytes_per_sample != 16) {
        throw std::runtime_error("io: unsupported trace sample width");
    }
    channel3d::ChannelTrace trace;
    trace.realization_seed = read_pod<std::uint64_t>(in);
    const auto n_frames = read_pod<std::uint32_t>(in);
    const auto n_subcarriers = read_pod<std::uint32_t>(in);
    trace.frame_interval = read_pod<double>(in);
    trace.responses.resize(n_frames, n_subcarriers);
    read_complex_rows(in, trace.responses);
    return trace;
}

void write_estimates(const std::filesystem::path& path, const estimation::EstimateSeries& series) {
    auto out = open_out(path);
    write_bytes(out, "CPES", 4);
    write_pod<std::uint32_t>(out, 1);
    write_pod<std::uint32_t>(out, series.method == estimation::Method::LS ? 0u : 1u);
    write_pod<double>(out, series.ssnr);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(series.estimates.rows()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(series.estimates.cols()));
    write_complex_rows(out, series.estimates);
    if (!out) {
        throw std::runtime_error("io: write failed: " + path.string());
    }
}

estimation::EstimateSeries read_estimates(const std::filesystem::path& path) {
    auto in = open_in(path);
    check_magic(in, "CPES");
    const auto version = read_pod<std::uint32_t>(in);
    if (version != 1) {
        throw std::runtime_error("io: unsupported estimate-series version");
    }
    estimation::EstimateSeries series;
    series.method =
        read_pod<std::uint32_t>(in) == 0 ? estimation::Method::LS : estimation::Method::LSMMSE;
    series.ssnr = read_pod<double>(in);
    const auto n_frames = read_pod<std::uint32_t>(in);
    const auto n_subcarriers = read_pod<std::uint32_t>(in);
    series.estimates.resize(n_frames, n_subcarriers);
    read_complex_rows(in, series.estimates);
    return series;
}

void save_model(const std::filesystem::path& path, const lstm::LstmModel& model) {
    auto out = open_out(path);
    write_bytes(out, "CPLM", 4);
    write_pod<std::uint32_t>(out, 1);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.hidden_size));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.input_dim));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.output_dim));
    write_real_rows(out, model.norm.mean);
    write_real_rows(out, model.norm.scale);
    write_real_rows(out, model.w_input);
    write_real_rows(out, model.w_recurrent);
    write_real_rows(out, model.bias);
    write_real_rows(out, model.w_fc);
    write_real_rows(out, model.b_fc);
    write_real_rows(out, model.w_reg);
    write_real_rows(out, model.b_reg);
    if (!out) {
        throw std::runtime_error("io: write failed: " + path.string());
    }
}

lstm::LstmModel load_model(const std::filesystem::path& path) {
    auto in = open_in(path);
    check_magic(in, "CPLM");
    const auto version = read_pod<std::uint32_t>(in);
    if (version != 1) {
        throw std::runtime_error("io: unsupported model version");
    }
    lstm::LstmModel model;
    model.hidden_size = static_cast<int>(read_pod<std::uint32_t>(in));
    model.input_dim = static_cast<int>(read_pod<std::uint32_t>(in));
    model.output_dim = static_cast<int>(read_pod<std::uint32_t>(in));
    const int n = model.hidden_size;
    model.norm.mean.resize(model.input_dim);
    model.norm.scale.resize(model.input_dim);
    model.w_input.resize(4 * n, model.input_dim);
    model.w_recurrent.resize(4 * n, n);
    model.bias.resize(4 * n);
    model.w_fc.resize(model.output_dim, n);
    model.b_fc.resize(model.output_dim);
    model.w_reg.resize(model.output_dim, model.output_dim);
    model.b_reg.resize(model.output_dim);

    Eigen::MatrixXd tmp;
    auto read_vec = [&](Eigen::VectorXd& v) {
        tmp.resize(v.size(), 1);
        read_real_rows(in, tmp);
        v = tmp.col(0);
    };
    auto read_mat = [&](Eigen::MatrixXd& m) {
        tmp.resize(m.rows(), m.cols());
        read_real_rows(in, tmp);
        m = tmp;
    };
    read_vec(model.norm.mean);
    read_vec(model.norm.scale);
    read_mat(model.w_input);
    read_mat(model.w_recurrent);
    read_vec(model.bias);
    read_mat(model.w_fc);
    read_vec(model.b_fc);
    read_mat(model.w_reg);
    read_vec(model.b_reg);
    return model;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex << hash;
    return out.str();
}

std::string read_file_bytes(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace chanpred::io
