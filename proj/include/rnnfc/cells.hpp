#pragma once

// Forward dynamics and exact backward replay for the three gradient-trained
// recurrent cells: Elman (ERNN), LSTM and GRU.
//
// Sequences are stored column-wise: an input sequence is an Ni x T matrix and
// column t holds x[t]. Weight matrices map column vectors, so a matrix that
// connects an a-dimensional signal to a b-dimensional layer is b x a.

#include "rnnfc/numerics.hpp"

#include <string_view>
#include <vector>

namespace rnnfc {

enum class CellKind { ernn, lstm, gru };

std::string_view to_string(CellKind kind);
CellKind cell_kind_from_string(std::string_view name);

/// One mask per weight group, constant over every step of a sequence.
/// input[g] multiplies the input fed to gate g, recurrent[g] the recurrent
/// signal fed to gate g. Empty vectors mean no dropout.
struct DropoutMasks {
    std::vector<Vector> input;
    std::vector<Vector> recurrent;

    bool empty() const { return input.empty() && recurrent.empty(); }
};

// ---------------------------------------------------------------------------
// ERNN

/// h[t] = tanh(Wih (x[t] + bi) + Whh (h[t-1] + bh)), y[t] = Who (h[t] + bo).
struct ErnnParams {
    Matrix Wih, Whh, Who;
    Vector bi, bh, bo;

    static constexpr int gate_count = 1;
    static constexpr CellKind kind = CellKind::ernn;

    Index inputs() const { return Wih.cols(); }
    Index hidden() const { return Whh.rows(); }
    Index outputs() const { return Who.rows(); }

    static ErnnParams zeros(Index ni, Index nh, Index no);

    template <typename F>
    void for_each(F&& f)
    {
        f("Wih", Wih), f("Whh", Whh), f("Who", Who), f("bi", bi), f("bh", bh), f("bo", bo);
    }
    template <typename F>
    void for_each(F&& f) const
    {
        f("Wih", Wih), f("Whh", Whh), f("Who", Who), f("bi", bi), f("bh", bh), f("bo", bo);
    }
};

struct ErnnState {
    Vector h;
};

struct ErnnCache {
    Matrix x;      // Ni x T
    Matrix h;      // Nh x (T+1), column 0 is the initial state
    Matrix y;      // No x T
    DropoutMasks masks;

    Index length() const { return x.cols(); }
    ErnnState state_before(Index t) const { return {h.col(t)}; }
    ErnnState final_state() const { return state_before(length()); }
    const Matrix& outputs() const { return y; }
};

// ---------------------------------------------------------------------------
// LSTM

/// Gates read x[t] and the previous block output y[t-1]; a linear readout
/// (Wy, by) maps the block output to the forecast.
struct LstmParams {
    Matrix Wf, Wh, Wu, Wo;
    Matrix Rf, Rh, Ru, Ro;
    Vector bf, bh, bu, bo;
    Matrix Wy;
    Vector by;

    static constexpr int gate_count = 4;
    static constexpr CellKind kind = CellKind::lstm;

    Index inputs() const { return Wf.cols(); }
    Index hidden() const { return Rf.rows(); }
    Index outputs() const { return Wy.rows(); }

    static LstmParams zeros(Index ni, Index nh, Index no);

    template <typename F>
    void for_each(F&& f)
    {
        f("Wf", Wf), f("Wh", Wh), f("Wu", Wu), f("Wo", Wo);
        f("Rf", Rf), f("Rh", Rh), f("Ru", Ru), f("Ro", Ro);
        f("bf", bf), f("bh", bh), f("bu", bu), f("bo", bo);
        f("Wy", Wy), f("by", by);
    }
    template <typename F>
    void for_each(F&& f) const
    {
        f("Wf", Wf), f("Wh", Wh), f("Wu", Wu), f("Wo", Wo);
        f("Rf", Rf), f("Rh", Rh), f("Ru", Ru), f("Ro", Ro);
        f("bf", bf), f("bh", bh), f("bu", bu), f("bo", bo);
        f("Wy", Wy), f("by", by);
    }
};

struct LstmState {
    Vector c; // cell state h[t]
    Vector y; // block output y[t]
};

struct LstmCache {
    Matrix x;                     // Ni x T
    Matrix c, yb;                 // Nh x (T+1)
    Matrix f, cand, u, o, tanh_c; // Nh x T
    Matrix out;                   // No x T
    DropoutMasks masks;

    Index length() const { return x.cols(); }
    LstmState state_before(Index t) const { return {c.col(t), yb.col(t)}; }
    LstmState final_state() const { return state_before(length()); }
    const Matrix& outputs() const { return out; }
};

// ---------------------------------------------------------------------------
// GRU

/// Matrix naming keeps the convention of the reference equations: W* act on
/// the state h[t-1] and R* act on the input x[t] (the reverse of most GRU
/// write-ups). A linear readout (Wy, by) produces the forecast.
struct GruParams {
    Matrix Wr, Wz, Wu;
    Matrix Rr, Rz, Ru;
    Vector br, bz, bu;
    Matrix Wy;
    Vector by;

    static constexpr int gate_count = 3;
    static constexpr CellKind kind = CellKind::gru;

    Index inputs() const { return Rr.cols(); }
    Index hidden() const { return Wr.rows(); }
    Index outputs() const { return Wy.rows(); }

    static GruParams zeros(Index ni, Index nh, Index no);

    template <typename F>
    void for_each(F&& f)
    {
        f("Wr", Wr), f("Wz", Wz), f("Wu", Wu), f("Rr", Rr), f("Rz", Rz), f("Ru", Ru);
        f("br", br), f("bz", bz), f("bu", bu), f("Wy", Wy), f("by", by);
    }
    template <typename F>
    void for_each(F&& f) const
    {
        f("Wr", Wr), f("Wz", Wz), f("Wu", Wu), f("Rr", Rr), f("Rz", Rz), f("Ru", Ru);
        f("br", br), f("bz", bz), f("bu", bu), f("Wy", Wy), f("by", by);
    }
};

struct GruState {
    Vector h;
};

struct GruCache {
    Matrix x;              // Ni x T
    Matrix h;              // Nh x (T+1)
    Matrix r, hr, z, u;    // Nh x T; hr is the reset-gated state h'[t]
    Matrix out;            // No x T
    DropoutMasks masks;

    Index length() const { return x.cols(); }
    GruState state_before(Index t) const { return {h.col(t)}; }
    GruState final_state() const { return state_before(length()); }
    const Matrix& outputs() const { return out; }
};

// ---------------------------------------------------------------------------
// Parameter utilities shared by all cells.

template <typename P>
Index parameter_count(const P& p)
{
    Index n = 0;
    p.for_each([&](const char*, const auto& t) { n += t.size(); });
    return n;
}

/// Concatenate every tensor (column-major) in declaration order.
template <typename P>
Vector flatten(const P& p)
{
    Vector v(parameter_count(p));
    Index k = 0;
    p.for_each([&](const char*, const auto& t) {
        v.segment(k, t.size()) = t.reshaped();
        k += t.size();
    });
    return v;
}

template <typename P>
void unflatten(P& p, const Vector& v)
{
    if (v.size() != parameter_count(p)) throw std::invalid_argument("unflatten: size mismatch");
    Index k = 0;
    p.for_each([&](const char*, auto& t) {
        t.reshaped() = v.segment(k, t.size());
        k += t.size();
    });
}

template <typename P>
P zeros_like(const P& p)
{
    P z = p;
    z.for_each([](const char*, auto& t) { t.setZero(); });
    return z;
}

template <typename P>
bool all_finite(const P& p)
{
    bool ok = true;
    p.for_each([&](const char*, const auto& t) { ok = ok && t.allFinite(); });
    return ok;
}

/// Weights uniform on [0, 1] scaled by 1/sqrt(Nh); biases zero.
ErnnParams init_ernn(Index ni, Index nh, Index no, RngStream& rng);
LstmParams init_lstm(Index ni, Index nh, Index no, RngStream& rng);
GruParams init_gru(Index ni, Index nh, Index no, RngStream& rng);

template <typename P>
P init_params(Index ni, Index nh, Index no, RngStream& rng);
template <>
inline ErnnParams init_params<ErnnParams>(Index ni, Index nh, Index no, RngStream& rng) { return init_ernn(ni, nh, no, rng); }
template <>
inline LstmParams init_params<LstmParams>(Index ni, Index nh, Index no, RngStream& rng) { return init_lstm(ni, nh, no, rng); }
template <>
inline GruParams init_params<GruParams>(Index ni, Index nh, Index no, RngStream& rng) { return init_gru(ni, nh, no, rng); }

ErnnState zero_state(const ErnnParams& p);
LstmState zero_state(const LstmParams& p);
GruState zero_state(const GruParams& p);

// ---------------------------------------------------------------------------
// Forward passes. Throw std::invalid_argument on dimension mismatch.

ErnnCache forward(const ErnnParams& p, const Matrix& x, const ErnnState& s0, const DropoutMasks& masks = {});
LstmCache forward(const LstmParams& p, const Matrix& x, const LstmState& s0, const DropoutMasks& masks = {});
GruCache forward(const GruParams& p, const Matrix& x, const GruState& s0, const DropoutMasks& masks = {});

inline ErnnCache ernn_forward(const ErnnParams& p, const Matrix& x) { return forward(p, x, zero_state(p)); }
inline LstmCache lstm_forward(const LstmParams& p, const Matrix& x) { return forward(p, x, zero_state(p)); }
inline GruCache gru_forward(const GruParams& p, const Matrix& x) { return forward(p, x, zero_state(p)); }

// ---------------------------------------------------------------------------
// Backward replay.
//
// Accumulates into `grad` the gradient of sum_t <d_out[:, t], out[:, t]> for
// steps t in [begin, end), propagating through the recurrence only back to
// `begin`; the state entering step `begin` is treated as a constant.
// d_out has one column per cached step.

void backward(const ErnnParams& p, const ErnnCache& cache, const Matrix& d_out, Index begin, Index end, ErnnParams& grad);
void backward(const LstmParams& p, const LstmCache& cache, const Matrix& d_out, Index begin, Index end, LstmParams& grad);
void backward(const GruParams& p, const GruCache& cache, const Matrix& d_out, Index begin, Index end, GruParams& grad);

/// Norms ||dL/ds[tau]|| for tau = t, t-1, ..., 0 where L = <d_out_t, out[t]>
/// and s is the recurrent state, chained through the state-to-state
/// Jacobians ds[k]/ds[k-1]. For the LSTM the chain follows the cell state
/// along its linear path (d c[k] / d c[k-1] = diag(forget gate)).
std::vector<double> state_gradient_norms(const ErnnParams& p, const ErnnCache& cache, const Vector& d_out_t, Index t);
std::vector<double> state_gradient_norms(const LstmParams& p, const LstmCache& cache, const Vector& d_out_t, Index t);
std::vector<double> state_gradient_norms(const GruParams& p, const GruCache& cache, const Vector& d_out_t, Index t);

/// Mask sizes per group for sample_dropout_masks: {input sizes, recurrent sizes}.
template <typename P>
std::pair<std::vector<Index>, std::vector<Index>> mask_dimensions(const P& p)
{
    return {std::vector<Index>(P::gate_count, p.inputs()), std::vector<Index>(P::gate_count, p.hidden())};
}

} // namespace rnnfc
