// SPDX-License-Identifier: Apache-2.0

#include "chanpred/predictor.hpp"

#include <stdexcept>

namespace chanpred::predictor {

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::Interpolation:
            return "interpolation";
        case Mode::OpenLoop:
            return "open_loop";
        case Mode::ClosedLoop:
            return "closed_loop";
    }
    return "?";
}

PredictionRun interpolate_dl(const estimation::EstimateSeries& estimates,
                             const linksim::TddSchedule& schedule) {
    schedule.validate();
    const Eigen::Index frames = estimates.estimates.rows();
    if (frames == 0) {
        throw std::invalid_argument("interpolate_dl: empty estimate series");
    }

    PredictionRun run;
    run.mode = Mode::Interpolation;
    run.source_method = estimates.method;
    run.predictions.resize(frames, estimates.estimates.cols());

    if (frames < 2) {
        run.predictions = estimates.estimates;
        run.warned_hold_last = true;
        return run;
    }

    for (Eigen::Index n = 0; n < frames; ++n) {
        if (n == 0) {
            run.predictions.row(0) = estimates.estimates.row(0);  // hold-last fallback
            continue;
        }
        const double t1 = schedule.ul_time(static_cast<int>(n));
        const double t0 = schedule.ul_time(static_cast<int>(n) - 1);
        const double dl = schedule.dl_time(static_cast<int>(n));
        const double slope = (dl - t1) / (t1 - t0);
        run.predictions.row(n) =
            estimates.estimates.row(n) +
            slope * (estimates.estimates.row(n) - estimates.estimates.row(n - 1));
    }
    return run;
}

Eigen::MatrixXd features_from_row(const Eigen::RowVectorXcd& row) {
    Eigen::MatrixXd features(2, row.size());
    features.row(0) = row.real();
    features.row(1) = row.imag();
    return features;
}

Eigen::RowVectorXcd row_from_features(const Eigen::MatrixXd& features) {
    if (features.rows() != 2) {
        throw std::invalid_argument("row_from_features: expected 2 feature rows");
    }
    Eigen::RowVectorXcd row(features.cols());
    for (Eigen::Index k = 0; k < features.cols(); ++k) {
        row[k] = std::complex<double>(features(0, k), features(1, k));
    }
    return row;
}

PredictionRun predict_open_loop(const lstm::LstmModel& model, const Eigen::MatrixXcd& estimates,
                                lstm::LstmState& state) {
    model.validate();
    const Eigen::Index steps = estimates.rows();
    if (steps == 0) {
        throw std::invalid_argument("predict_open_loop: empty estimate sequence");
    }
    if (state.hidden.cols() != estimates.cols()) {
        throw std::invalid_argument("predict_open_loop: state batch/subcarrier mismatch");
    }

    PredictionRun run;
    run.mode = Mode::OpenLoop;
    run.predictions.resize(steps, estimates.cols());
    for (Eigen::Index t = 0; t < steps; ++t) {
        const Eigen::MatrixXd y = lstm::forward(model, features_from_row(estimates.row(t)), state);
        run.predictions.row(t) = row_from_features(y);
    }
    return run;
}

PredictionRun predict_open_loop(const lstm::LstmModel& model, const Eigen::MatrixXcd& estimates) {
    lstm::LstmState state = lstm::make_state(model, static_cast<int>(estimates.cols()));
    return predict_open_loop(model, estimates, state);
}

PredictionRun predict_closed_loop(const lstm::LstmModel& model,
                                  const Eigen::MatrixXcd& seed_sequence, int horizon) {
    model.validate();
    if (seed_sequence.rows() < 1) {
        throw std::invalid_argument("predict_closed_loop: need at least one seed row");
    }
    if (horizon < 1) {
        throw std::invalid_argument("predict_closed_loop: horizon must be >= 1");
    }

    lstm::LstmState state = lstm::make_state(model, static_cast<int>(seed_sequence.cols()));
    for (Eigen::Index t = 0; t + 1 < seed_sequence.rows(); ++t) {
        lstm::forward(model, features_from_row(seed_sequence.row(t)), state);
    }

    PredictionRun run;
    run.mode = Mode::ClosedLoop;
    run.predictions.resize(horizon, seed_sequence.cols());

    Eigen::MatrixXd input = features_from_row(seed_sequence.row(seed_sequence.rows() - 1));
    for (int step = 0; step < horizon; ++step) {
        const Eigen::MatrixXd y = lstm::forward(model, input, state);
        run.predictions.row(step) = row_from_features(y);
        input = y;
    }
    return run;
}

PredictionRun predict_closed_loop_resync(const lstm::LstmModel& model,
                                         const Eigen::MatrixXcd& estimates, int resync_interval,
                                         int warmup) {
    model.validate();
    const Eigen::Index rows = estimates.rows();
    if (resync_interval < 1) {
        throw std::invalid_argument("predict_closed_loop_resync: resync_interval must be >= 1");
    }
    if (warmup < 1 || warmup >= rows) {
        throw std::invalid_argument("predict_closed_loop_resync: warmup must be in [1, rows)");
    }

    PredictionRun run;
    run.mode = Mode::ClosedLoop;
    run.predictions.resize(rows - warmup, estimates.cols());

    lstm::LstmState state = lstm::make_state(model, static_cast<int>(estimates.cols()));
    Eigen::MatrixXd previous;  // last prediction, feature layout
    for (Eigen::Index t = 0; t + 1 < rows; ++t) {
        // Fresh estimates during warm-up and once per resync block; the
        // model's own output otherwise.
        const bool consume_estimate =
            t < warmup || ((t - (warmup - 1)) % resync_interval == 0);
        const Eigen::MatrixXd input =
            consume_estimate ? features_from_row(estimates.row(t)) : previous;
        previous = lstm::forward(model, input, state);
        if (t + 1 >= warmup) {
            run.predictions.row(t + 1 - warmup) = row_from_features(previous);
        }
    }
    return run;
}

}  // namespace chanpred::predictor
