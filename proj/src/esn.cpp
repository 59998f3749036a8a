#include "rnnfc/esn.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <numeric>

namespace rnnfc {

void EsnConfig::validate() const
{
    if (hidden < 1) throw std::invalid_argument("EsnConfig: Nh must be positive");
    if (!(rho > 0.0)) throw std::invalid_argument("EsnConfig: rho must be positive");
    if (!(rc > 0.0 && rc <= 1.0)) throw std::invalid_argument("EsnConfig: Rc must lie in (0, 1]");
    if (!(noise_var >= 0.0)) throw std::invalid_argument("EsnConfig: noise variance must be >= 0");
    if (!(omega_i >= 0.0 && omega_o >= 0.0 && omega_f >= 0.0)) throw std::invalid_argument("EsnConfig: scalings must be >= 0");
    if (!(l2 >= 0.0)) throw std::invalid_argument("EsnConfig: l2 must be >= 0");
    if (washout < 0) throw std::invalid_argument("EsnConfig: washout must be >= 0");
}

Reservoir build_reservoir(Index ni, Index no, const EsnConfig& cfg, RngStream& rng)
{
    cfg.validate();
    const Index nh = cfg.hidden;
    const Index total = nh * nh;
    const Index nnz = std::max<Index>(1, std::llround(cfg.rc * static_cast<double>(total)));

    Reservoir r;
    std::vector<Index> pos(static_cast<std::size_t>(total));
    for (int attempt = 0; attempt < 10; ++attempt) {
        // Partial Fisher-Yates picks nnz distinct positions.
        std::iota(pos.begin(), pos.end(), Index{0});
        r.Wrr = Matrix::Zero(nh, nh);
        for (Index k = 0; k < nnz; ++k) {
            const Index j = k + rng.uniform_int(0, total - 1 - k);
            std::swap(pos[static_cast<std::size_t>(k)], pos[static_cast<std::size_t>(j)]);
            r.Wrr.data()[pos[static_cast<std::size_t>(k)]] = rng.uniform(-1.0, 1.0);
        }
        if (spectral_radius(r.Wrr) > 0.0) break;
        if (attempt == 9) throw std::runtime_error("build_reservoir: repeated zero-radius draws");
    }
    r.Wrr = rescale_to_radius(r.Wrr, cfg.rho);
    r.Wir = random_uniform(nh, ni, -1.0, 1.0, rng) * cfg.omega_i;
    r.Wor = random_uniform(nh, no, -1.0, 1.0, rng) * cfg.omega_f;
    r.omega_o = cfg.omega_o;
    r.noise_var = cfg.noise_var;
    return r;
}

namespace {

using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Drives the state recursion; `feedback(t)` yields the output fed back at step t.
template <typename Feedback, typename Visit>
Vector run(const Reservoir& r, const Matrix& x, Vector h, RngStream* noise, Feedback&& feedback, Visit&& visit)
{
    const Sparse wrr = r.Wrr.sparseView();
    const double sd = std::sqrt(r.noise_var);
    const bool noisy = noise != nullptr && r.noise_var > 0.0;
    Vector a(r.hidden());
    for (Index t = 0; t < x.cols(); ++t) {
        a.noalias() = wrr * h;
        a.noalias() += r.Wir * x.col(t);
        a.noalias() += r.Wor * (r.omega_o * feedback(t));
        if (noisy)
            for (Index i = 0; i < a.size(); ++i) a(i) += noise->normal(0.0, sd);
        h = tanh_act(a);
        visit(t, h);
    }
    return h;
}

Vector initial_state(const Reservoir& r, const std::optional<Vector>& h0)
{
    if (!h0) return Vector::Zero(r.hidden());
    if (h0->size() != r.hidden()) throw std::invalid_argument("esn: initial state size mismatch");
    return *h0;
}

} // namespace

Vector reservoir_step(const Reservoir& r, const Vector& h, const Vector& x, const Vector& y_prev, RngStream* noise)
{
    Vector a = r.Wrr * h + r.Wir * x + r.Wor * (r.omega_o * y_prev);
    if (noise && r.noise_var > 0.0) {
        const double sd = std::sqrt(r.noise_var);
        for (Index i = 0; i < a.size(); ++i) a(i) += noise->normal(0.0, sd);
    }
    return tanh_act(a);
}

StateMatrix harvest_states(const Reservoir& r, const Matrix& x, const Matrix& ystar, Index washout, RngStream* noise,
                           const std::optional<Vector>& h0)
{
    if (x.rows() != r.inputs() || ystar.rows() != r.outputs()) throw std::invalid_argument("harvest_states: channel mismatch");
    if (x.cols() != ystar.cols()) throw std::invalid_argument("harvest_states: x and y* differ in length");
    if (washout < 0) throw std::invalid_argument("harvest_states: negative washout");
    const Index len = x.cols();
    const Index ni = r.inputs();
    StateMatrix sm;
    sm.washout = washout;
    const Index rows = std::max<Index>(0, len - washout);
    sm.S.resize(rows, ni + r.hidden());
    sm.ystar = ystar.rightCols(rows).transpose();
    const Vector zero = Vector::Zero(r.outputs());
    sm.final_state = run(
      r, x, initial_state(r, h0), noise,
      [&](Index t) -> Vector { return t == 0 ? zero : Vector(ystar.col(t - 1)); },
      [&](Index t, const Vector& h) {
          if (t < washout) return;
          sm.S.row(t - washout).head(ni) = x.col(t).transpose();
          sm.S.row(t - washout).tail(r.hidden()) = h.transpose();
      });
    sm.final_output = len > 0 ? Vector(ystar.col(len - 1)) : zero;
    return sm;
}

Matrix ridge_fit_primal(const Matrix& S, const Matrix& Y, double l2)
{
    if (S.rows() != Y.rows()) throw std::invalid_argument("ridge_fit: S and Y differ in rows");
    if (!(l2 >= 0.0)) throw std::invalid_argument("ridge_fit: l2 must be >= 0");
    Matrix a = Matrix::Zero(S.cols(), S.cols());
    a.selfadjointView<Eigen::Lower>().rankUpdate(S.transpose());
    a.diagonal().array() += l2;
    const Eigen::LLT<Matrix, Eigen::Lower> llt(a);
    if (llt.info() != Eigen::Success) throw std::domain_error("ridge_fit_primal: singular system");
    Matrix w = llt.solve(S.transpose() * Y);
    if (!w.allFinite()) throw std::domain_error("ridge_fit_primal: singular system");
    return w;
}

Matrix ridge_fit_dual(const Matrix& S, const Matrix& Y, double l2)
{
    if (S.rows() != Y.rows()) throw std::invalid_argument("ridge_fit: S and Y differ in rows");
    if (!(l2 >= 0.0)) throw std::invalid_argument("ridge_fit: l2 must be >= 0");
    Matrix k = Matrix::Zero(S.rows(), S.rows());
    k.selfadjointView<Eigen::Lower>().rankUpdate(S);
    k.diagonal().array() += l2;
    const Eigen::LLT<Matrix, Eigen::Lower> llt(k);
    if (llt.info() != Eigen::Success) throw std::domain_error("ridge_fit_dual: singular system");
    Matrix w = S.transpose() * llt.solve(Y);
    if (!w.allFinite()) throw std::domain_error("ridge_fit_dual: singular system");
    return w;
}

Matrix ridge_fit(const Matrix& S, const Matrix& Y, double l2)
{
    return S.cols() > S.rows() ? ridge_fit_dual(S, Y, l2) : ridge_fit_primal(S, Y, l2);
}

double ridge_objective(const Matrix& S, const Matrix& Y, const Matrix& W, double l2)
{
    return 0.5 * (S * W - Y).squaredNorm() + 0.5 * l2 * W.squaredNorm();
}

EsnModel train_esn(const Matrix& x, const Matrix& ystar, const EsnConfig& cfg, RngStream& rng)
{
    cfg.validate();
    RngStream build_rng = rng.split(1);
    RngStream noise_rng = rng.split(2);
    EsnModel m;
    m.reservoir = build_reservoir(x.rows(), ystar.rows(), cfg, build_rng);
    const StateMatrix sm = harvest_states(m.reservoir, x, ystar, cfg.washout, &noise_rng);
    if (sm.S.rows() == 0) throw std::invalid_argument("train_esn: sequence shorter than the washout");
    m.readout.W = ridge_fit(sm.S, sm.ystar, cfg.l2);
    m.readout.inputs = x.rows();
    return m;
}

Matrix esn_predict(const EsnModel& m, const Matrix& x, const std::optional<Vector>& h0, const std::optional<Vector>& y_prev0)
{
    const Reservoir& r = m.reservoir;
    if (x.rows() != r.inputs()) throw std::invalid_argument("esn_predict: input channel mismatch");
    const Index ni = r.inputs();
    if (m.readout.W.rows() != ni + r.hidden()) throw std::invalid_argument("esn_predict: readout shape mismatch");
    const Matrix wi = m.readout.W.topRows(ni).transpose();
    const Matrix wr = m.readout.W.bottomRows(r.hidden()).transpose();
    Matrix out(r.outputs(), x.cols());
    Vector y_prev = y_prev0 ? *y_prev0 : Vector::Zero(r.outputs());
    if (y_prev.size() != r.outputs()) throw std::invalid_argument("esn_predict: feedback size mismatch");
    run(
      r, x, initial_state(r, h0), nullptr, [&](Index) -> const Vector& { return y_prev; },
      [&](Index t, const Vector& h) {
          out.col(t) = wi * x.col(t) + wr * h;
          y_prev = out.col(t);
      });
    return out;
}

Matrix esn_predict_teacher(const EsnModel& m, const Matrix& x, const Matrix& ystar)
{
    const Reservoir& r = m.reservoir;
    const StateMatrix sm = harvest_states(r, x, ystar, 0, nullptr);
    return (sm.S * m.readout.W).transpose();
}

} // namespace rnnfc
