#pragma once

// Echo state network: sparse random reservoir rescaled to a target spectral
// radius, teacher-forced state harvesting, ridge readout (primal or dual form)
// and free-running prediction with output feedback.

#include "rnnfc/numerics.hpp"

#include <optional>

namespace rnnfc {

struct EsnConfig {
    Index hidden = 500;       // Nh
    double rho = 0.9;         // spectral radius of Wrr
    double rc = 0.25;         // fraction of nonzero entries in Wrr
    double noise_var = 0.0;   // variance of the state noise during harvesting
    double omega_i = 1.0;     // input scaling
    double omega_o = 1.0;     // teacher / output feedback scaling
    double omega_f = 0.0;     // output-to-reservoir weight scaling
    double l2 = 0.1;          // ridge coefficient
    Index washout = 50;

    void validate() const;
};

/// h[t] = tanh(Wrr h[t-1] + Wir x[t] + Wor (omega_o y[t-1]) + eps[t]).
struct Reservoir {
    Matrix Wrr; // Nh x Nh
    Matrix Wir; // Nh x Ni, entries in [-omega_i, omega_i]
    Matrix Wor; // Nh x No, entries in [-omega_f, omega_f]
    double omega_o = 1.0;
    double noise_var = 0.0;

    Index hidden() const { return Wrr.rows(); }
    Index inputs() const { return Wir.cols(); }
    Index outputs() const { return Wor.cols(); }
};

/// Exactly round(rc * Nh^2) nonzeros at uniformly random positions, values
/// uniform on [-1, 1], then rescaled to spectral radius rho. A draw with zero
/// radius is redrawn a bounded number of times.
Reservoir build_reservoir(Index ni, Index no, const EsnConfig& cfg, RngStream& rng);

/// One state step. `noise` may be null.
Vector reservoir_step(const Reservoir& r, const Vector& h, const Vector& x, const Vector& y_prev, RngStream* noise);

/// Rows [x[t]', h[t]'] and targets y*[t]' for t >= washout.
struct StateMatrix {
    Matrix S;     // Ttr x (Ni + Nh)
    Matrix ystar; // Ttr x No
    Index washout = 0;
    Vector final_state;
    Vector final_output; // last teacher value fed back
};

/// Drive the reservoir with x (Ni x T) and teacher y* (No x T) fed back with
/// one step delay. Noise is drawn from `noise` when given and noise_var > 0.
StateMatrix harvest_states(const Reservoir& r, const Matrix& x, const Matrix& ystar, Index washout,
                           RngStream* noise = nullptr, const std::optional<Vector>& h0 = std::nullopt);

/// Combined readout W ((Ni + Nh) x No); y[t]' = [x[t]', h[t]'] W.
struct Readout {
    Matrix W;
    Index inputs = 0; // Ni; the first Ni rows of W act on x[t]

    Matrix Wio() const { return W.topRows(inputs).transpose(); }              // No x Ni
    Matrix Wro() const { return W.bottomRows(W.rows() - inputs).transpose(); } // No x Nh
};

/// (S'S + l2 I)^-1 S' Y. Throws std::domain_error when the system is singular.
Matrix ridge_fit_primal(const Matrix& S, const Matrix& Y, double l2);
/// S' (S S' + l2 I)^-1 Y.
Matrix ridge_fit_dual(const Matrix& S, const Matrix& Y, double l2);
/// Dual form when Nh + Ni > Ttr, primal otherwise.
Matrix ridge_fit(const Matrix& S, const Matrix& Y, double l2);
/// 1/2 |S W - Y|^2 + l2/2 |W|^2.
double ridge_objective(const Matrix& S, const Matrix& Y, const Matrix& W, double l2);

struct EsnModel {
    Reservoir reservoir;
    Readout readout;
};

/// Build, harvest (washout cfg.washout, noise from rng) and fit the readout.
EsnModel train_esn(const Matrix& x, const Matrix& ystar, const EsnConfig& cfg, RngStream& rng);

/// Free run: the feedback path carries omega_o times the model's own previous
/// output. Starts from h0 (zeros by default) and y_prev0 (zeros by default).
/// Noise-free. Returns No x T.
Matrix esn_predict(const EsnModel& m, const Matrix& x, const std::optional<Vector>& h0 = std::nullopt,
                   const std::optional<Vector>& y_prev0 = std::nullopt);

/// Teacher-forced outputs (feedback from y*), noise-free. Returns No x T.
Matrix esn_predict_teacher(const EsnModel& m, const Matrix& x, const Matrix& ystar);

} // namespace rnnfc
