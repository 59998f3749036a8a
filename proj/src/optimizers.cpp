#include "rnnfc/bptt.hpp"

#include <cmath>
#include <string>

namespace rnnfc {

std::string_view to_string(Optimizer o)
{
    switch (o) {
    case Optimizer::sgd: return "sgd";
    case Optimizer::momentum: return "momentum";
    case Optimizer::nesterov: return "nesterov";
    case Optimizer::adagrad: return "adagrad";
    case Optimizer::rmsprop: return "rmsprop";
    case Optimizer::adam: return "adam";
    }
    return "?";
}

Optimizer optimizer_from_string(std::string_view name)
{
    for (Optimizer o : {Optimizer::sgd, Optimizer::momentum, Optimizer::nesterov, Optimizer::adagrad, Optimizer::rmsprop,
                        Optimizer::adam})
        if (name == to_string(o)) return o;
    throw std::invalid_argument("unknown optimizer `" + std::string{name} + "`");
}

std::string_view to_string(Decay d)
{
    switch (d) {
    case Decay::none: return "none";
    case Decay::fractional: return "fractional";
    case Decay::exponential: return "exponential";
    }
    return "?";
}

Decay decay_from_string(std::string_view name)
{
    for (Decay d : {Decay::none, Decay::fractional, Decay::exponential})
        if (name == to_string(d)) return d;
    throw std::invalid_argument("unknown decay `" + std::string{name} + "`");
}

OptimizerState OptimizerState::create(const OptimizerSettings& s, Index n)
{
    if (!(s.eta0 > 0.0)) throw std::invalid_argument("optimizer: eta0 must be positive");
    OptimizerState st;
    st.settings = s;
    st.velocity = Vector::Zero(n);
    st.accum = Vector::Zero(n);
    st.m = Vector::Zero(n);
    st.v = Vector::Zero(n);
    return st;
}

double lr_schedule(const OptimizerSettings& s, long k)
{
    if (k < 0) throw std::invalid_argument("lr_schedule: negative step");
    const double kk = static_cast<double>(k);
    switch (s.decay) {
    case Decay::none: return s.eta0;
    case Decay::fractional: return s.eta0 / (1.0 + s.alpha * kk);
    case Decay::exponential: return s.eta0 * std::exp(-s.alpha * kk);
    }
    return s.eta0;
}

void sgd_step(OptimizerState& st, Vector& w, const Vector& g, double eta)
{
    w -= eta * g;
    ++st.step;
}

void momentum_step(OptimizerState& st, Vector& w, const Vector& g, double eta)
{
    st.velocity = st.settings.mu * st.velocity - eta * g;
    w += st.velocity;
    ++st.step;
}

Vector nesterov_lookahead(const OptimizerState& st, const Vector& w) { return w + st.settings.mu * st.velocity; }

void nesterov_step(OptimizerState& st, Vector& w, const Vector& g, double eta)
{
    // Same recursion as momentum; the caller evaluated g at the look-ahead point.
    st.velocity = st.settings.mu * st.velocity - eta * g;
    w += st.velocity;
    ++st.step;
}

void adagrad_step(OptimizerState& st, Vector& w, const Vector& g, double eta)
{
    st.accum += g.cwiseAbs2();
    w.array() -= eta * g.array() / (st.accum.array().sqrt() + st.settings.eps);
    ++st.step;
}

void rmsprop_step(OptimizerState& st, Vector& w, const Vector& g, double eta)
{
    const double d = st.settings.delta;
    st.accum = (1.0 - d) * st.accum + d * g.cwiseAbs2();
    w.array() -= eta * g.array() / (st.accum.array().sqrt() + st.settings.eps);
    ++st.step;
}

void adam_step(OptimizerState& st, Vector& w, const Vector& g, double eta)
{
    const auto& s = st.settings;
    ++st.step;
    st.m = s.beta1 * st.m + (1.0 - s.beta1) * g;
    st.v = s.beta2 * st.v + (1.0 - s.beta2) * g.cwiseAbs2();
    const double k = static_cast<double>(st.step);
    const double c1 = 1.0 - std::pow(s.beta1, k);
    const double c2 = 1.0 - std::pow(s.beta2, k);
    // eps sits inside the square root: eta m_hat / sqrt(v_hat + eps).
    w.array() -= eta * (st.m.array() / c1) / ((st.v.array() / c2) + s.eps).sqrt();
}

void apply_update(OptimizerState& st, Vector& w, const Vector& g)
{
    if (g.size() != w.size()) throw std::invalid_argument("apply_update: gradient size mismatch");
    if (!g.allFinite()) throw std::domain_error("apply_update: non-finite gradient");
    const double eta = lr_schedule(st.settings, st.step);
    switch (st.settings.kind) {
    case Optimizer::sgd: sgd_step(st, w, g, eta); break;
    case Optimizer::momentum: momentum_step(st, w, g, eta); break;
    case Optimizer::nesterov: nesterov_step(st, w, g, eta); break;
    case Optimizer::adagrad: adagrad_step(st, w, g, eta); break;
    case Optimizer::rmsprop: rmsprop_step(st, w, g, eta); break;
    case Optimizer::adam: adam_step(st, w, g, eta); break;
    }
}

} // namespace rnnfc
