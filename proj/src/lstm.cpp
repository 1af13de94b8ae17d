// SPDX-License-Identifier: Apache-2.0

#include "chanpred/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "chanpred/rng.hpp"

namespace chanpred::lstm {

namespace {

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& z) { return 1.0 / (1.0 + (-z).exp()); }

void fill_uniform(Eigen::MatrixXd& m, double bound, Rng& rng) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = bound * (2.0 * rng.uniform() - 1.0);
        }
    }
}

// Cached activations for one step of a window batch.
struct StepCache {
    Eigen::MatrixXd x;       // input_dim x B, normalized
    Eigen::MatrixXd gate_i;  // N x B
    Eigen::MatrixXd gate_f;
    Eigen::MatrixXd gate_g;
    Eigen::MatrixXd gate_o;
    Eigen::MatrixXd cell;    // N x B (post-update)
    Eigen::MatrixXd tanh_c;  // N x B
    Eigen::MatrixXd hidden;  // N x B
    Eigen::MatrixXd fc_out;  // out x B
    Eigen::MatrixXd y_err;   // out x B, prediction - target (normalized)
};

// Forward pass over a window batch of normalized step inputs/targets.
// Returns the mean 0.5-squared loss; fills caches when requested. Scheduled
// sampling replaces inputs with the previous step's prediction: per-step coin
// flips when feedback_period < 2, or whole-window periodic resync patterns
// (teacher step every feedback_period steps, random phase) entered with
// feed_probability per batch. Fed-back values are treated as constants in the
// backward pass.
double run_window_batch(const LstmModel& model, const std::vector<Eigen::MatrixXd>& x_steps,
                        const std::vector<Eigen::MatrixXd>& t_steps,
                        std::vector<StepCache>* caches, double feed_probability = 0.0,
                        Rng* rng = nullptr, int feedback_period = 0) {
    const int n = model.hidden_size;
    const auto steps = static_cast<Eigen::Index>(x_steps.size());
    const Eigen::Index batch = x_steps.front().cols();

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, batch);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, batch);
    Eigen::MatrixXd z(4 * n, batch);
    Eigen::MatrixXd previous_y;

    if (caches != nullptr) {
        caches->resize(static_cast<std::size_t>(steps));
    }

    const bool sampling = feed_probability > 0.0 && rng != nullptr &&
                          model.input_dim == model.output_dim;
    bool pattern_mode = false;
    Eigen::Index pattern_phase = 0;
    if (sampling && feedback_period >= 2) {
        pattern_mode = rng->uniform() < feed_probability;
        pattern_phase = static_cast<Eigen::Index>(
            rng->uniform_int(static_cast<std::uint64_t>(feedback_period)));
    }

    double loss = 0.0;
    for (Eigen::Index t = 0; t < steps; ++t) {
        Eigen::MatrixXd x = x_steps[static_cast<std::size_t>(t)];
        if (sampling && t > 0) {
            if (feedback_period >= 2) {
                if (pattern_mode && (t + pattern_phase) % feedback_period != 0) {
                    x = previous_y;
                }
            } else {
                for (Eigen::Index b = 0; b < batch; ++b) {
                    if (rng->uniform() < feed_probability) {
                        x.col(b) = previous_y.col(b);
                    }
                }
            }
        }
        z.noalias() = model.w_input * x;
        z.noalias() += model.w_recurrent * h;
        z.colwise() += model.bias;

        Eigen::MatrixXd gi = sigmoid(z.topRows(n).array());
        Eigen::MatrixXd gf = sigmoid(z.middleRows(n, n).array());
        Eigen::MatrixXd gg = z.middleRows(2 * n, n).array().tanh();
        Eigen::MatrixXd go = sigmoid(z.bottomRows(n).array());

        c = (gf.array() * c.array() + gi.array() * gg.array()).matrix();
        Eigen::MatrixXd tanh_c = c.array().tanh().matrix();
        h = (go.array() * tanh_c.array()).matrix();

        Eigen::MatrixXd fc_out = model.w_fc * h;
        fc_out.colwise() += model.b_fc;
        Eigen::MatrixXd y = model.w_reg * fc_out;
        y.colwise() += model.b_reg;
        if (sampling) {
            previous_y = y;
        }

        Eigen::MatrixXd err = y - t_steps[static_cast<std::size_t>(t)];
        loss += 0.5 * err.squaredNorm();

        if (caches != nullptr) {
            StepCache& cache = (*caches)[static_cast<std::size_t>(t)];
            cache.x = std::move(x);
            cache.gate_i = std::move(gi);
            cache.gate_f = std::move(gf);
            cache.gate_g = std::move(gg);
            cache.gate_o = std::move(go);
            cache.cell = c;
            cache.tanh_c = std::move(tanh_c);
            cache.hidden = h;
            cache.fc_out = std::move(fc_out);
            cache.y_err = std::move(err);
        }
    }
    return loss / (static_cast<double>(steps) * static_cast<double>(batch));
}

// BPTT over cached activations; gradients of the mean 0.5-squared loss.
void backward_window_batch(const LstmModel& model, const std::vector<StepCache>& caches,
                           Gradients& grads) {
    const int n = model.hidden_size;
    const auto steps = static_cast<Eigen::Index>(caches.size());
    const Eigen::Index batch = caches.front().x.cols();
    const double inv_count = 1.0 / (static_cast<double>(steps) * static_cast<double>(batch));

    Eigen::MatrixXd d_h = Eigen::MatrixXd::Zero(n, batch);
    Eigen::MatrixXd d_c = Eigen::MatrixXd::Zero(n, batch);
    Eigen::MatrixXd d_z(4 * n, batch);

    for (Eigen::Index t = steps - 1; t >= 0; --t) {
        const StepCache& cache = caches[static_cast<std::size_t>(t)];

        const Eigen::MatrixXd d_y = inv_count * cache.y_err;
        grads.w_reg.noalias() += d_y * cache.fc_out.transpose();
        grads.b_reg.noalias() += d_y.rowwise().sum();

        const Eigen::MatrixXd d_fc = model.w_reg.transpose() * d_y;
        grads.w_fc.noalias() += d_fc * cache.hidden.transpose();
        grads.b_fc.noalias() += d_fc.rowwise().sum();

        d_h.noalias() += model.w_fc.transpose() * d_fc;

        const Eigen::ArrayXXd d_o = d_h.array() * cache.tanh_c.array();
        d_c.array() += d_h.array() * cache.gate_o.array() * (1.0 - cache.tanh_c.array().square());

        const Eigen::MatrixXd& c_prev =
            (t > 0) ? caches[static_cast<std::size_t>(t - 1)].cell
                    : Eigen::MatrixXd::Zero(n, batch).eval();

        const Eigen::ArrayXXd d_i = d_c.array() * cache.gate_g.array();
        const Eigen::ArrayXXd d_g = d_c.array() * cache.gate_i.array();
        const Eigen::ArrayXXd d_f = d_c.array() * c_prev.array();

        d_z.topRows(n) = (d_i * cache.gate_i.array() * (1.0 - cache.gate_i.array())).matrix();
        d_z.middleRows(n, n) =
            (d_f * cache.gate_f.array() * (1.0 - cache.gate_f.array())).matrix();
        d_z.middleRows(2 * n, n) = (d_g * (1.0 - cache.gate_g.array().square())).matrix();
        d_z.bottomRows(n) = (d_o * cache.gate_o.array() * (1.0 - cache.gate_o.array())).matrix();

        grads.w_input.noalias() += d_z * cache.x.transpose();
        grads.bias.noalias() += d_z.rowwise().sum();

        const Eigen::MatrixXd& h_prev =
            (t > 0) ? caches[static_cast<std::size_t>(t - 1)].hidden
                    : Eigen::MatrixXd::Zero(n, batch).eval();
        grads.w_recurrent.noalias() += d_z * h_prev.transpose();

        // Carry to step t-1.
        d_h.noalias() = model.w_recurrent.transpose() * d_z;
        d_c.array() *= cache.gate_f.array();
    }
}

Gradients zero_gradients(const LstmModel& model) {
    Gradients g;
    g.w_input = Eigen::MatrixXd::Zero(model.w_input.rows(), model.w_input.cols());
    g.w_recurrent = Eigen::MatrixXd::Zero(model.w_recurrent.rows(), model.w_recurrent.cols());
    g.bias = Eigen::VectorXd::Zero(model.bias.size());
    g.w_fc = Eigen::MatrixXd::Zero(model.w_fc.rows(), model.w_fc.cols());
    g.b_fc = Eigen::VectorXd::Zero(model.b_fc.size());
    g.w_reg = Eigen::MatrixXd::Zero(model.w_reg.rows(), model.w_reg.cols());
    g.b_reg = Eigen::VectorXd::Zero(model.b_reg.size());
    return g;
}

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& rows, const Normalization& norm) {
    // rows: time x features -> normalized copy.
    Eigen::MatrixXd out = rows;
    out.rowwise() -= norm.mean.transpose();
    out.array().rowwise() /= norm.scale.transpose().array();
    return out;
}

struct WindowRef {
    int sequence = 0;
    int start = 0;
    int length = 0;
};

class AdamState {
  public:
    explicit AdamState(const LstmModel& model) : slots_{} {
        auto add = [this](Eigen::Index rows, Eigen::Index cols) {
            slots_.emplace_back(Eigen::MatrixXd::Zero(rows, cols),
                                Eigen::MatrixXd::Zero(rows, cols));
        };
        add(model.w_input.rows(), model.w_input.cols());
        add(model.w_recurrent.rows(), model.w_recurrent.cols());
        add(model.bias.size(), 1);
        add(model.w_fc.rows(), model.w_fc.cols());
        add(model.b_fc.size(), 1);
        add(model.w_reg.rows(), model.w_reg.cols());
        add(model.b_reg.size(), 1);
    }

    void step(LstmModel& model, const Gradients& grads, const AdamParams& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(params.beta1, t_);
        const double bc2 = 1.0 - std::pow(params.beta2, t_);
        int slot = 0;
        auto update = [&](auto& theta, const auto& grad) {
            Eigen::MatrixXd g = grad;
            g.resize(slots_[slot].first.rows(), slots_[slot].first.cols());
            auto& m = slots_[slot].first;
            auto& v = slots_[slot].second;
            m = params.beta1 * m + (1.0 - params.beta1) * g;
            v = (params.beta2 * v.array() + (1.0 - params.beta2) * g.array().square()).matrix();
            const Eigen::ArrayXXd m_hat = m.array() / bc1;
            const Eigen::ArrayXXd v_hat = v.array() / bc2;
            Eigen::MatrixXd delta =
                (params.learning_rate * m_hat / (v_hat.sqrt() + params.epsilon)).matrix();
            delta.resize(theta.rows(), theta.cols());
            theta -= delta;
            ++slot;
        };
        update(model.w_input, grads.w_input);
        update(model.w_recurrent, grads.w_recurrent);
        update(model.bias, grads.bias);
        update(model.w_fc, grads.w_fc);
        update(model.b_fc, grads.b_fc);
        update(model.w_reg, grads.w_reg);
        update(model.b_reg, grads.b_reg);
    }

  private:
    std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> slots_;
    int t_ = 0;
};

}  // namespace

LstmModel LstmModel::init(int hidden_size, int input_dim, int output_dim, std::uint64_t seed) {
    if (hidden_size < 1 || input_dim < 1 || output_dim < 1) {
        throw std::invalid_argument("LstmModel::init: dimensions must be positive");
    }
    LstmModel model;
    model.hidden_size = hidden_size;
    model.input_dim = input_dim;
    model.output_dim = output_dim;

    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    Rng rng(seed);
    model.w_input.resize(4 * hidden_size, input_dim);
    fill_uniform(model.w_input, bound, rng);
    model.w_recurrent.resize(4 * hidden_size, hidden_size);
    fill_uniform(model.w_recurrent, bound, rng);
    model.bias = Eigen::VectorXd::Zero(4 * hidden_size);
    model.bias.segment(hidden_size, hidden_size).setOnes();  // forget-gate bias

    model.w_fc.resize(output_dim, hidden_size);
    fill_uniform(model.w_fc, bound, rng);
    model.b_fc = Eigen::VectorXd::Zero(output_dim);
    model.w_reg.resize(output_dim, output_dim);
    fill_uniform(model.w_reg, bound, rng);
    model.b_reg = Eigen::VectorXd::Zero(output_dim);

    model.norm.mean = Eigen::VectorXd::Zero(input_dim);
    model.norm.scale = Eigen::VectorXd::Ones(input_dim);
    return model;
}

bool LstmModel::finite() const {
    return w_input.allFinite() && w_recurrent.allFinite() && bias.allFinite() &&
           w_fc.allFinite() && b_fc.allFinite() && w_reg.allFinite() && b_reg.allFinite() &&
           norm.mean.allFinite() && norm.scale.allFinite();
}

void LstmModel::validate() const {
    if (hidden_size < 1) {
        throw std::invalid_argument("LstmModel: hidden_size must be positive");
    }
    if (!finite()) {
        throw std::domain_error("LstmModel: non-finite parameters (untrained or diverged model)");
    }
    if ((norm.scale.array() <= 0.0).any()) {
        throw std::domain_error("LstmModel: normalization scales must be positive");
    }
}

LstmState make_state(const LstmModel& model, int batch) {
    LstmState state;
    state.hidden = Eigen::MatrixXd::Zero(model.hidden_size, batch);
    state.cell = Eigen::MatrixXd::Zero(model.hidden_size, batch);
    return state;
}

void lstm_cell_forward(const LstmModel& model, const Eigen::MatrixXd& x, LstmState& state) {
    const int n = model.hidden_size;
    if (x.rows() != model.input_dim || state.hidden.rows() != n ||
        state.hidden.cols() != x.cols() || state.cell.rows() != n ||
        state.cell.cols() != x.cols()) {
        throw std::invalid_argument("lstm_cell_forward: dimension mismatch");
    }

    Eigen::MatrixXd z = model.w_input * x;
    z.noalias() += model.w_recurrent * state.hidden;
    z.colwise() += model.bias;

    const Eigen::ArrayXXd gi = sigmoid(z.topRows(n).array());
    const Eigen::ArrayXXd gf = sigmoid(z.middleRows(n, n).array());
    const Eigen::ArrayXXd gg = z.middleRows(2 * n, n).array().tanh();
    const Eigen::ArrayXXd go = sigmoid(z.bottomRows(n).array());

    state.cell = (gf * state.cell.array() + gi * gg).matrix();
    state.hidden = (go * state.cell.array().tanh()).matrix();
}

Eigen::MatrixXd forward(const LstmModel& model, const Eigen::MatrixXd& x, LstmState& state) {
    if (x.rows() != model.input_dim) {
        throw std::invalid_argument("forward: input dimension mismatch");
    }
    Eigen::MatrixXd x_n = x;
    x_n.colwise() -= model.norm.mean;
    x_n.array().colwise() /= model.norm.scale.array();

    lstm_cell_forward(model, x_n, state);

    Eigen::MatrixXd fc_out = model.w_fc * state.hidden;
    fc_out.colwise() += model.b_fc;
    Eigen::MatrixXd y = model.w_reg * fc_out;
    y.colwise() += model.b_reg;

    y.array().colwise() *= model.norm.scale.array();
    y.colwise() += model.norm.mean;
    return y;
}

double window_loss(const LstmModel& model, const Eigen::MatrixXd& inputs,
                   const Eigen::MatrixXd& targets) {
    if (inputs.rows() != targets.rows() || inputs.rows() == 0) {
        throw std::invalid_argument("window_loss: inputs/targets row mismatch");
    }
    std::vector<Eigen::MatrixXd> x_steps(static_cast<std::size_t>(inputs.rows()));
    std::vector<Eigen::MatrixXd> t_steps(static_cast<std::size_t>(inputs.rows()));
    const Eigen::MatrixXd x_n = normalize_rows(inputs, model.norm);
    const Eigen::MatrixXd t_n = normalize_rows(targets, model.norm);
    for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
        x_steps[static_cast<std::size_t>(t)] = x_n.row(t).transpose();
        t_steps[static_cast<std::size_t>(t)] = t_n.row(t).transpose();
    }
    return run_window_batch(model, x_steps, t_steps, nullptr);
}

Gradients window_gradients(const LstmModel& model, const Eigen::MatrixXd& inputs,
                           const Eigen::MatrixXd& targets) {
    if (inputs.rows() != targets.rows() || inputs.rows() == 0) {
        throw std::invalid_argument("window_gradients: inputs/targets row mismatch");
    }
    std::vector<Eigen::MatrixXd> x_steps(static_cast<std::size_t>(inputs.rows()));
    std::vector<Eigen::MatrixXd> t_steps(static_cast<std::size_t>(inputs.rows()));
    const Eigen::MatrixXd x_n = normalize_rows(inputs, model.norm);
    const Eigen::MatrixXd t_n = normalize_rows(targets, model.norm);
    for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
        x_steps[static_cast<std::size_t>(t)] = x_n.row(t).transpose();
        t_steps[static_cast<std::size_t>(t)] = t_n.row(t).transpose();
    }

    std::vector<StepCache> caches;
    Gradients grads = zero_gradients(model);
    grads.loss = run_window_batch(model, x_steps, t_steps, &caches);
    backward_window_batch(model, caches, grads);
    return grads;
}

TrainResult train(LstmModel& model, const std::vector<TrainingSequence>& sequences,
                  const TrainOptions& options) {
    if (sequences.empty()) {
        throw std::domain_error("train: empty training set");
    }
    if (options.epochs < 1 || options.batch_size < 1 || options.window < 2) {
        throw std::invalid_argument("train: epochs/batch_size must be >= 1, window >= 2");
    }
    if (options.scheduled_sampling < 0.0 || options.scheduled_sampling >= 1.0) {
        throw std::invalid_argument("train: scheduled_sampling must be in [0, 1)");
    }
    for (const auto& seq : sequences) {
        if (seq.inputs.rows() != seq.targets.rows() || seq.inputs.rows() < 2 ||
            seq.inputs.cols() != model.input_dim || seq.targets.cols() != model.output_dim) {
            throw std::invalid_argument("train: malformed training sequence");
        }
    }

    Rng rng(options.seed);

    // Optionally cap the sequence count; selection is deterministic per seed.
    std::vector<int> selected(sequences.size());
    std::iota(selected.begin(), selected.end(), 0);
    if (options.max_sequences > 0 &&
        options.max_sequences < static_cast<int>(sequences.size())) {
        for (std::size_t i = selected.size() - 1; i > 0; --i) {
            std::swap(selected[i], selected[rng.uniform_int(i + 1)]);
        }
        selected.resize(static_cast<std::size_t>(options.max_sequences));
        std::sort(selected.begin(), selected.end());
    }

    // z-score per feature from the training inputs only.
    const int features = model.input_dim;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(features);
    double count = 0.0;
    for (int si : selected) {
        mean += sequences[static_cast<std::size_t>(si)].inputs.colwise().sum().transpose();
        count += static_cast<double>(sequences[static_cast<std::size_t>(si)].inputs.rows());
    }
    mean /= count;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(features);
    for (int si : selected) {
        const auto centered = sequences[static_cast<std::size_t>(si)].inputs.rowwise() -
                              mean.transpose();
        var += centered.array().square().colwise().sum().matrix().transpose();
    }
    var /= count;
    model.norm.mean = mean;
    model.norm.scale = var.array().sqrt().max(1e-12).matrix();
    for (int f = 0; f < features; ++f) {
        if (model.norm.scale[f] < 1e-12) {
            model.norm.scale[f] = 1.0;
        }
    }

    // Pre-normalized copies of the selected sequences.
    std::vector<Eigen::MatrixXd> inputs_n;
    std::vector<Eigen::MatrixXd> targets_n;
    inputs_n.reserve(selected.size());
    targets_n.reserve(selected.size());
    for (int si : selected) {
        inputs_n.push_back(normalize_rows(sequences[static_cast<std::size_t>(si)].inputs, model.norm));
        targets_n.push_back(
            normalize_rows(sequences[static_cast<std::size_t>(si)].targets, model.norm));
    }

    // Truncated-BPTT windows, stride = window length; short tails >= 2 kept.
    std::vector<WindowRef> windows;
    for (std::size_t si = 0; si < inputs_n.size(); ++si) {
        const int total = static_cast<int>(inputs_n[si].rows());
        for (int start = 0; start < total; start += options.window) {
            const int length = std::min(options.window, total - start);
            if (length >= 2) {
                windows.push_back({static_cast<int>(si), start, length});
            }
        }
    }
    if (windows.empty()) {
        throw std::domain_error("train: no usable training windows");
    }

    // Group windows by length so a batch shares one step count.
    std::vector<int> order(windows.size());
    std::iota(order.begin(), order.end(), 0);

    AdamState adam(model);
    TrainResult result;
    result.loss_history.reserve(static_cast<std::size_t>(options.epochs));

    std::vector<Eigen::MatrixXd> x_steps;
    std::vector<Eigen::MatrixXd> t_steps;
    std::vector<StepCache> caches;

    const int ramp_epochs = std::max(1, options.epochs / 2);
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        const double feed_probability =
            options.scheduled_sampling *
            std::min(1.0, static_cast<double>(epoch) / static_cast<double>(ramp_epochs));
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
        }
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return windows[static_cast<std::size_t>(a)].length >
                   windows[static_cast<std::size_t>(b)].length;
        });

        double epoch_loss = 0.0;
        double epoch_elements = 0.0;

        std::size_t cursor = 0;
        while (cursor < order.size()) {
            const int length = windows[static_cast<std::size_t>(order[cursor])].length;
            std::size_t end = cursor;
            while (end < order.size() &&
                   windows[static_cast<std::size_t>(order[end])].length == length &&
                   end - cursor < static_cast<std::size_t>(options.batch_size)) {
                ++end;
            }
            const auto batch = static_cast<Eigen::Index>(end - cursor);

            x_steps.assign(static_cast<std::size_t>(length),
                           Eigen::MatrixXd(model.input_dim, batch));
            t_steps.assign(static_cast<std::size_t>(length),
                           Eigen::MatrixXd(model.output_dim, batch));
            for (Eigen::Index b = 0; b < batch; ++b) {
                const WindowRef& w =
                    windows[static_cast<std::size_t>(order[cursor + static_cast<std::size_t>(b)])];
                for (int t = 0; t < length; ++t) {
                    x_steps[static_cast<std::size_t>(t)].col(b) =
                        inputs_n[static_cast<std::size_t>(w.sequence)].row(w.start + t).transpose();
                    t_steps[static_cast<std::size_t>(t)].col(b) =
                        targets_n[static_cast<std::size_t>(w.sequence)].row(w.start + t).transpose();
                }
            }

            Gradients grads = zero_gradients(model);
            grads.loss = run_window_batch(model, x_steps, t_steps, &caches, feed_probability,
                                          &rng, options.feedback_period);
            backward_window_batch(model, caches, grads);
            adam.step(model, grads, options.adam);

            const double elements = static_cast<double>(length) * static_cast<double>(batch);
            epoch_loss += grads.loss * elements;
            epoch_elements += elements;
            cursor = end;
        }

        const double mean_loss = epoch_loss / epoch_elements;
        if (!std::isfinite(mean_loss)) {
            throw std::runtime_error(
                "train: non-finite loss at epoch " + std::to_string(epoch) +
                " (learning rate " + std::to_string(options.adam.learning_rate) +
                ", hidden size " + std::to_string(model.hidden_size) +
                "); reduce the learning rate or re-seed the initialization");
        }
        result.loss_history.push_back(mean_loss);
    }
    return result;
}

}  // namespace chanpred::lstm
