#pragma once

// Loss, regularization, truncated backpropagation through time, gradient
// clipping, first-order optimizers and the epoch loop for ERNN/LSTM/GRU.

#include "rnnfc/cells.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rnnfc {

struct LossConfig {
    double l1 = 0.0;     // weight of sum |w|
    double l2 = 0.0;     // weight of sum w^2
    double p_drop = 0.0; // dropout probability in [0, 1)

    void validate() const;
};

/// Mean of squared elementwise differences. Throws on empty or mismatched input.
double mse(const Matrix& y, const Matrix& ystar);
inline double mse(const Vector& y, const Vector& ystar) { return mse(Matrix(y), Matrix(ystar)); }

/// l1 * sum |w| + l2 * sum w^2 over the entries selected by `mask` (all when empty).
double reg_penalty(const Vector& w, const LossConfig& cfg, const Vector& mask = {});
/// l1 * sign(w) + 2 * l2 * w, with sign(0) = 0.
Vector reg_gradient(const Vector& w, const LossConfig& cfg, const Vector& mask = {});

/// 1 for weight-matrix entries, 0 for biases (tensors whose name starts with 'b').
template <typename P>
Vector regularization_mask(const P& p)
{
    Vector m(parameter_count(p));
    Index k = 0;
    p.for_each([&](const char* name, const auto& t) {
        m.segment(k, t.size()).setConstant(name[0] == 'b' ? 0.0 : 1.0);
        k += t.size();
    });
    return m;
}

template <typename P>
double reg_penalty(const P& p, const LossConfig& cfg)
{
    return reg_penalty(flatten(p), cfg, regularization_mask(p));
}

template <typename P>
P reg_gradient(const P& p, const LossConfig& cfg)
{
    P g = p;
    unflatten(g, reg_gradient(flatten(p), cfg, regularization_mask(p)));
    return g;
}

/// Bernoulli(1 - p_drop) masks scaled by 1 / (1 - p_drop), one per group.
DropoutMasks sample_dropout_masks(const std::vector<Index>& input_sizes, const std::vector<Index>& recurrent_sizes,
                                  double p_drop, RngStream& rng);

template <typename P>
DropoutMasks sample_dropout_masks(const P& p, double p_drop, RngStream& rng)
{
    const auto [in, rec] = mask_dimensions(p);
    return sample_dropout_masks(in, rec, p_drop, rng);
}

struct TrainSchedule {
    Index tau_b = 20;
    Index tau_f = 10;
    int epochs = 0;
    std::optional<double> clip_threshold;
    Index transient = 50;

    void validate() const;
};

/// Truncated BPTT(tau_b, tau_f) gradient of
///   L = MSE over outputs t >= transient + regularization.
/// Every tau_f steps the errors of the newest tau_f outputs are propagated
/// tau_b steps back; weights are tied across the unrolled replicas.
template <typename P, typename Cache>
P bptt_gradients(const P& p, const Cache& cache, const Matrix& targets, const TrainSchedule& sched, const LossConfig& cfg);

/// ||dL[t]/ds[tau]|| for tau = t, t-1, ..., 0, with L[t] the squared error of
/// the last step t = T - 1.
template <typename P, typename Cache>
std::vector<double> gradient_norm_profile(const P& p, const Cache& cache, const Matrix& targets);

/// Rescale g to norm `threshold` when it is longer; direction is kept.
Vector clip_gradient(const Vector& g, double threshold);

// ---------------------------------------------------------------------------
// Optimizers

enum class Optimizer { sgd, momentum, nesterov, adagrad, rmsprop, adam };
enum class Decay { none, fractional, exponential };

std::string_view to_string(Optimizer o);
Optimizer optimizer_from_string(std::string_view name);
std::string_view to_string(Decay d);
Decay decay_from_string(std::string_view name);

struct OptimizerSettings {
    Optimizer kind = Optimizer::sgd;
    double eta0 = 0.01;
    Decay decay = Decay::none;
    double alpha = 0.0;
    double mu = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double delta = 0.01;
};

/// Accumulators mirror the flattened parameter vector.
struct OptimizerState {
    OptimizerSettings settings;
    Vector velocity; // momentum / Nesterov
    Vector accum;    // Adagrad sum of squares, RMSprop running average
    Vector m, v;     // Adam moments
    long step = 0;   // number of applied updates

    static OptimizerState create(const OptimizerSettings& s, Index n);
};

/// eta0 e^{-alpha k} or eta0 / (1 + alpha k) for update counter k.
double lr_schedule(const OptimizerSettings& s, long k);

// Single updates. All implement descent on the loss; `g` is the gradient.
void sgd_step(OptimizerState& st, Vector& w, const Vector& g, double eta);
void momentum_step(OptimizerState& st, Vector& w, const Vector& g, double eta);
/// `g` must be evaluated at nesterov_lookahead(st, w).
void nesterov_step(OptimizerState& st, Vector& w, const Vector& g, double eta);
void adagrad_step(OptimizerState& st, Vector& w, const Vector& g, double eta);
void rmsprop_step(OptimizerState& st, Vector& w, const Vector& g, double eta);
void adam_step(OptimizerState& st, Vector& w, const Vector& g, double eta);

Vector nesterov_lookahead(const OptimizerState& st, const Vector& w);

/// Scheduled update dispatching on settings.kind; advances st.step.
/// Throws std::domain_error for a non-finite gradient.
void apply_update(OptimizerState& st, Vector& w, const Vector& g);

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
    int epoch = 0;
    double train_mse = 0.0;
    double valid_mse = std::numeric_limits<double>::quiet_NaN();
    double learning_rate = 0.0;
    double grad_norm = 0.0;
};

struct TrainConfig {
    Index hidden = 10;
    LossConfig loss;
    OptimizerSettings optimizer;
    TrainSchedule schedule;
};

template <typename P>
struct TrainResult {
    P params;
    std::vector<EpochRecord> history;
    bool diverged = false;
};

/// Train a cell on one contiguous sequence (inputs Ni x T, targets No x T).
/// Each epoch starts from the zero state and resamples dropout masks.
/// A non-finite loss stops training and sets `diverged`.
template <typename P>
TrainResult<P> train(const Matrix& x, const Matrix& y, const TrainConfig& cfg, RngStream& rng,
                     const Matrix* x_valid = nullptr, const Matrix* y_valid = nullptr);

/// Noise-free forward pass from the zero state; returns the outputs.
template <typename P>
Matrix predict(const P& p, const Matrix& x)
{
    return forward(p, x, zero_state(p)).outputs();
}

void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history);
void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

} // namespace rnnfc
