#pragma once

// NARX: tapped delay lines on an exogenous input x and the fed-back output y,
// a tanh MLP core with a linear output layer, Levenberg-Marquardt fitting in
// series-parallel (teacher-forced) mode and closed-loop prediction.

#include "rnnfc/cells.hpp"

#include <deque>
#include <string>
#include <vector>

namespace rnnfc {

/// Layer l maps a[l-1] to a[l] = tanh(W[l] a[l-1] + b[l]); the last layer is
/// linear. W.size() == hidden layers + 1.
struct NarxParams {
    Index dx = 1, dy = 1; // delay counts
    Index nx = 1, ny = 1; // channels of x and y
    std::vector<Matrix> W;
    std::vector<Vector> b;

    Index inputs() const { return dx * nx + dy * ny; }
    Index layers() const { return static_cast<Index>(W.size()) - 1; } // hidden layers
    Index hidden() const { return W.size() > 1 ? W[0].rows() : 0; }
    Index outputs() const { return ny; }
    Index order() const { return std::max(dx, dy); }

    template <typename F>
    void for_each(F&& f)
    {
        for (std::size_t l = 0; l < W.size(); ++l) {
            f(tensor_name(2 * l), W[l]);
            f(tensor_name(2 * l + 1), b[l]);
        }
    }
    template <typename F>
    void for_each(F&& f) const
    {
        for (std::size_t l = 0; l < W.size(); ++l) {
            f(tensor_name(2 * l), W[l]);
            f(tensor_name(2 * l + 1), b[l]);
        }
    }

    /// Zero weights with the given shape; nh per hidden layer, nl >= 1 hidden layers.
    static NarxParams zeros(Index dx, Index dy, Index nx, Index ny, Index nh, Index nl);

    /// "W0", "b0", "W1", ... for the tensor at position i.
    static const char* tensor_name(std::size_t i);
};

/// Weights uniform on [-1, 1] / sqrt(fan-in), biases zero.
NarxParams init_narx(Index dx, Index dy, Index nx, Index ny, Index nh, Index nl, RngStream& rng);

/// Rolling delay lines holding the last dx inputs and dy outputs.
class TdlBuffer {
public:
    TdlBuffer(Index dx, Index dy, Index nx, Index ny);

    void push_x(const Vector& x);
    void push_y(const Vector& y);
    bool ready() const;
    /// [x[t-dx] ... x[t-1], y[t-dy] ... y[t-1]]. Throws std::logic_error when a line is not full.
    Vector assemble() const;

    Index dx() const { return dx_; }
    Index dy() const { return dy_; }

private:
    Index dx_, dy_, nx_, ny_;
    std::deque<Vector> xs_, ys_;
};

/// Regressor for step t (0-based) from whole sequences x (nx x T) and y (ny x T):
/// [x[t-dx] ... x[t-1], y[t-dy] ... y[t-1]]. Requires t >= max(dx, dy).
Vector assemble_input(const Matrix& x, const Matrix& y, Index dx, Index dy, Index t);

/// Stack the regressors of steps [first, last) as columns.
Matrix assemble_inputs(const Matrix& x, const Matrix& y, Index dx, Index dy, Index first, Index last);

/// MLP output for a batch of regressors, one column per sample.
Matrix mlp_forward_batch(const NarxParams& p, const Matrix& inputs);
/// MLP output for a single regressor.
inline Vector mlp_forward(const NarxParams& p, const Vector& input) { return mlp_forward_batch(p, Matrix(input)).col(0); }

/// d out / d theta for every sample and output channel: row (k * N + n)
/// holds the derivative of output k on sample n. N x P for a single output.
Matrix mlp_jacobian(const NarxParams& p, const Matrix& inputs);

/// One-step-ahead outputs with the teacher in the output delay line.
/// Columns before max(dx, dy) repeat the targets (nothing to predict from).
Matrix series_parallel_predict(const NarxParams& p, const Matrix& x, const Matrix& ystar);

/// MSE over steps t >= max(order, transient) plus l2 * sum theta^2 (all parameters).
double narx_loss(const NarxParams& p, const Matrix& x, const Matrix& ystar, double l2, Index transient = 50);
/// Gradient of narx_loss.
Vector narx_loss_gradient(const NarxParams& p, const Matrix& x, const Matrix& ystar, double l2, Index transient = 50);

struct NarxConfig {
    Index dx = 2, dy = 2;
    Index hidden = 10;
    Index layers = 1;
    double l2 = 0.0;
    double eta0 = 1e-3;     // initial LM damping
    int epochs = 100;       // LM iterations
    int max_inflations = 10;
    Index transient = 50;

    void validate() const;
};

struct LmRecord {
    int epoch = 0;
    double objective = 0.0; // 1/2 sum r^2 + 1/2 l2 |theta|^2
    double train_mse = 0.0;
    double damping = 0.0;
};

struct NarxTrainResult {
    NarxParams params;
    std::vector<LmRecord> history;
    bool diverged = false;
};

/// Levenberg-Marquardt in series-parallel mode starting from `init`.
/// Each epoch solves (J'J + (lm + l2) I) d = -(J'r + l2 theta); an improving
/// step divides the damping by 10, a failing one multiplies it by 10.
NarxTrainResult train_series_parallel(const NarxParams& init, const Matrix& x, const Matrix& ystar,
                                      const NarxConfig& cfg);
/// Same, from a fresh init_narx draw.
NarxTrainResult train_series_parallel(const Matrix& x, const Matrix& ystar, const NarxConfig& cfg, RngStream& rng);

/// Output delay line fed with y_true for t < warmup and with the network's
/// own predictions afterwards. Columns t < max(dx, dy) copy y_true.
/// warmup >= T reproduces series_parallel_predict.
Matrix closed_loop_predict(const NarxParams& p, const Matrix& x, const Matrix& y_true, Index warmup);

} // namespace rnnfc
