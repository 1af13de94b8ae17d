// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include "chanpred/estimation.hpp"
#include "chanpred/linksim.hpp"
#include "chanpred/lstm.hpp"

namespace chanpred::predictor {

enum class Mode { Interpolation, OpenLoop, ClosedLoop };

const char* mode_name(Mode m);

/// One inference run over a block of frames: rows are prediction steps,
/// columns are subcarriers.
struct PredictionRun {
    Mode mode = Mode::OpenLoop;
    Eigen::MatrixXcd predictions;
    estimation::Method source_method = estimation::Method::LS;
    bool warned_hold_last = false;
};

/// Linear interpolation/extrapolation baseline. For each frame's DL instant
/// the two most recent UL estimates are extrapolated per subcarrier:
///   H(dl) = H(t1) + (dl - t1) / (t1 - t0) * (H(t1) - H(t0)).
/// Frame 0 (single available estimate) falls back to hold-last; a series with
/// fewer than two frames is entirely hold-last and flagged.
PredictionRun interpolate_dl(const estimation::EstimateSeries& estimates,
                             const linksim::TddSchedule& schedule);

/// Packs a complex row (subcarriers) into the (Re, Im) feature layout.
Eigen::MatrixXd features_from_row(const Eigen::RowVectorXcd& row);
Eigen::RowVectorXcd row_from_features(const Eigen::MatrixXd& features);

/// Feeds the estimate rows one step at a time; prediction row t is the model
/// output after consuming estimate row t (the forecast for row t+1). The
/// state is carried across steps, starting from `state`.
PredictionRun predict_open_loop(const lstm::LstmModel& model, const Eigen::MatrixXcd& estimates,
                                lstm::LstmState& state);

/// Convenience overload starting from a fresh zero state.
PredictionRun predict_open_loop(const lstm::LstmModel& model, const Eigen::MatrixXcd& estimates);

/// Warms the state on seed rows [0, W-1), then iterates `horizon` steps: the
/// first step consumes the final seed row, every later step consumes the
/// previous prediction. horizon = 1 therefore equals the next open-loop step
/// from the same warm state.
PredictionRun predict_closed_loop(const lstm::LstmModel& model,
                                  const Eigen::MatrixXcd& seed_sequence, int horizon);

/// Closed-loop with periodic re-synchronization: a continuous run over the
/// estimate rows where a fresh estimate is consumed on the first `warmup`
/// steps and then once every `resync_interval` steps; all other steps feed
/// back the model's own previous prediction. Returns predictions for rows
/// [warmup, rows): row r of the result is the forecast of estimate row r.
PredictionRun predict_closed_loop_resync(const lstm::LstmModel& model,
                                         const Eigen::MatrixXcd& estimates, int resync_interval,
                                         int warmup);

}  // namespace chanpred::predictor
