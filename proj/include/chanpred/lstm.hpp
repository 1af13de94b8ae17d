// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace chanpred::lstm {

/// Per-feature z-score parameters shared by the input and output side (both
/// live in the same feature space, which keeps closed-loop feedback
/// consistent).
struct Normalization {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
};

/// Single-layer LSTM + fully connected layer + regression affine map.
///
/// Gate weights are packed row-wise in the order [input; forget; candidate;
/// output], i.e. rows [0,N) of w_input are W_xi, rows [N,2N) are W_xf, rows
/// [2N,3N) are W_xg and rows [3N,4N) are W_xo; w_recurrent and bias follow the
/// same layout.
struct LstmModel {
    int hidden_size = 0;
    int input_dim = 2;
    int output_dim = 2;

    Eigen::MatrixXd w_input;      // 4N x input_dim
    Eigen::MatrixXd w_recurrent;  // 4N x N
    Eigen::VectorXd bias;         // 4N
    Eigen::MatrixXd w_fc;         // output_dim x N
    Eigen::VectorXd b_fc;         // output_dim
    Eigen::MatrixXd w_reg;        // output_dim x output_dim
    Eigen::VectorXd b_reg;        // output_dim
    Normalization norm;

    /// Uniform(-1/sqrt(N), 1/sqrt(N)) weights, zero biases except the forget
    /// gate bias which starts at 1. Deterministic per seed.
    static LstmModel init(int hidden_size, int input_dim, int output_dim, std::uint64_t seed);

    bool finite() const;
    void validate() const;
};

/// Hidden and cell state, one column per batched sequence.
struct LstmState {
    Eigen::MatrixXd hidden;  // N x batch
    Eigen::MatrixXd cell;    // N x batch
};

LstmState make_state(const LstmModel& model, int batch);

/// One LSTM cell step on an already-normalized input x (input_dim x batch):
///   ig = sigma(W_xi x + W_hi h + b_i)       fg = sigma(W_xf x + W_hf h + b_f)
///   g  = tanh (W_xg x + W_hg h + b_g)       og = sigma(W_xo x + W_ho h + b_o)
///   c' = fg .* c + ig .* g                  h' = og .* tanh(c')
void lstm_cell_forward(const LstmModel& model, const Eigen::MatrixXd& x, LstmState& state);

/// Full step on a raw-scale input: normalize, cell, fully connected layer,
/// regression map, denormalize. Returns output_dim x batch predictions.
Eigen::MatrixXd forward(const LstmModel& model, const Eigen::MatrixXd& x, LstmState& state);

struct AdamParams {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainOptions {
    int epochs = 125;
    int batch_size = 128;
    int window = 50;          // truncated-BPTT window length
    int max_sequences = 0;    // 0 = use all sequences
    // Scheduled sampling: probability of feeding the model's own previous
    // output instead of the teacher input, ramped linearly from zero over the
    // first half of the epochs. Zero keeps pure teacher forcing.
    double scheduled_sampling = 0.0;
    // When >= 2, scheduled sampling switches whole windows into a periodic
    // resync pattern (teacher input every feedback_period-th step, own output
    // otherwise, random phase) with the above probability per batch. This
    // trains the multi-step self-consistency the closed-loop mode relies on.
    int feedback_period = 0;
    AdamParams adam;
    std::uint64_t seed = 1;
};

/// One training sequence in raw scale; rows are time steps. targets.row(t) is
/// the desired output after consuming inputs.row(t) (the next-step value).
struct TrainingSequence {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;
};

struct TrainResult {
    std::vector<double> loss_history;  // mean normalized-scale loss per epoch
};

/// Mirrors the parameter tensors of LstmModel.
struct Gradients {
    Eigen::MatrixXd w_input;
    Eigen::MatrixXd w_recurrent;
    Eigen::VectorXd bias;
    Eigen::MatrixXd w_fc;
    Eigen::VectorXd b_fc;
    Eigen::MatrixXd w_reg;
    Eigen::VectorXd b_reg;
    double loss = 0.0;
};

/// Mean of 0.5 * |prediction - target|^2 (normalized scale) over one window,
/// batch of one. Shares the exact forward computation with training.
double window_loss(const LstmModel& model, const Eigen::MatrixXd& inputs,
                   const Eigen::MatrixXd& targets);

/// Backpropagation-through-time gradients for the same single-window loss.
Gradients window_gradients(const LstmModel& model, const Eigen::MatrixXd& inputs,
                           const Eigen::MatrixXd& targets);

/// Minimizes the mean 0.5-squared one-step-ahead loss with Adam over
/// truncated-BPTT windows. Normalization statistics are computed from the
/// supplied sequences before training. Deterministic per options.seed. Throws
/// std::runtime_error with a diagnostic when the loss turns non-finite.
TrainResult train(LstmModel& model, const std::vector<TrainingSequence>& sequences,
                  const TrainOptions& options);

}  // namespace chanpred::lstm
