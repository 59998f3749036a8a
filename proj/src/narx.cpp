#include "rnnfc/narx.hpp"

#include <array>
#include <cmath>
#include <string>

namespace rnnfc {

const char* NarxParams::tensor_name(std::size_t i)
{
    static const std::array<std::string, 64> names = [] {
        std::array<std::string, 64> n;
        for (std::size_t k = 0; k < n.size(); ++k) n[k] = (k % 2 == 0 ? "W" : "b") + std::to_string(k / 2);
        return n;
    }();
    if (i >= names.size()) throw std::out_of_range("NarxParams: too many layers");
    return names[i].c_str();
}

NarxParams NarxParams::zeros(Index dx, Index dy, Index nx, Index ny, Index nh, Index nl)
{
    if (dx < 0 || dy < 0 || dx + dy == 0) throw std::invalid_argument("narx: need at least one delay");
    if (nx < 1 || ny < 1 || nh < 1 || nl < 1) throw std::invalid_argument("narx: layer sizes must be positive");
    if (nl + 1 > 32) throw std::invalid_argument("narx: too many layers");
    NarxParams p;
    p.dx = dx;
    p.dy = dy;
    p.nx = nx;
    p.ny = ny;
    Index in = p.inputs();
    for (Index l = 0; l < nl; ++l) {
        p.W.push_back(Matrix::Zero(nh, in));
        p.b.push_back(Vector::Zero(nh));
        in = nh;
    }
    p.W.push_back(Matrix::Zero(ny, in));
    p.b.push_back(Vector::Zero(ny));
    return p;
}

NarxParams init_narx(Index dx, Index dy, Index nx, Index ny, Index nh, Index nl, RngStream& rng)
{
    NarxParams p = NarxParams::zeros(dx, dy, nx, ny, nh, nl);
    for (auto& w : p.W) w = random_uniform(w.rows(), w.cols(), -1.0, 1.0, rng) / std::sqrt(static_cast<double>(w.cols()));
    return p;
}

// ---------------------------------------------------------------------------

TdlBuffer::TdlBuffer(Index dx, Index dy, Index nx, Index ny)
  : dx_{dx}, dy_{dy}, nx_{nx}, ny_{ny}
{
    if (dx < 0 || dy < 0) throw std::invalid_argument("TdlBuffer: negative delay");
}

void TdlBuffer::push_x(const Vector& x)
{
    if (x.size() != nx_) throw std::invalid_argument("TdlBuffer: x size mismatch");
    if (dx_ == 0) return;
    xs_.push_back(x);
    if (static_cast<Index>(xs_.size()) > dx_) xs_.pop_front();
}

void TdlBuffer::push_y(const Vector& y)
{
    if (y.size() != ny_) throw std::invalid_argument("TdlBuffer: y size mismatch");
    if (dy_ == 0) return;
    ys_.push_back(y);
    if (static_cast<Index>(ys_.size()) > dy_) ys_.pop_front();
}

bool TdlBuffer::ready() const
{
    return static_cast<Index>(xs_.size()) == dx_ && static_cast<Index>(ys_.size()) == dy_;
}

Vector TdlBuffer::assemble() const
{
    if (!ready()) throw std::logic_error("TdlBuffer: insufficient history");
    Vector v(dx_ * nx_ + dy_ * ny_);
    Index k = 0;
    for (const auto& x : xs_) v.segment(k, nx_) = x, k += nx_;
    for (const auto& y : ys_) v.segment(k, ny_) = y, k += ny_;
    return v;
}

Vector assemble_input(const Matrix& x, const Matrix& y, Index dx, Index dy, Index t)
{
    if (t < std::max(dx, dy)) throw std::invalid_argument("assemble_input: insufficient history");
    if (t > x.cols() || t > y.cols()) throw std::invalid_argument("assemble_input: step beyond the sequence");
    const Index nx = x.rows(), ny = y.rows();
    Vector v(dx * nx + dy * ny);
    for (Index j = 0; j < dx; ++j) v.segment(j * nx, nx) = x.col(t - dx + j);
    for (Index j = 0; j < dy; ++j) v.segment(dx * nx + j * ny, ny) = y.col(t - dy + j);
    return v;
}

Matrix assemble_inputs(const Matrix& x, const Matrix& y, Index dx, Index dy, Index first, Index last)
{
    Matrix m(dx * x.rows() + dy * y.rows(), std::max<Index>(0, last - first));
    for (Index t = first; t < last; ++t) m.col(t - first) = assemble_input(x, y, dx, dy, t);
    return m;
}

// ---------------------------------------------------------------------------

namespace {

void check_inputs(const NarxParams& p, const Matrix& inputs)
{
    if (p.W.empty()) throw std::invalid_argument("narx: empty network");
    if (inputs.rows() != p.W.front().cols()) throw std::invalid_argument("narx: regressor size mismatch");
}

/// Activations a[0] = inputs, a[l+1] = layer l output.
std::vector<Matrix> activations(const NarxParams& p, const Matrix& inputs)
{
    check_inputs(p, inputs);
    std::vector<Matrix> a{inputs};
    const std::size_t n = p.W.size();
    for (std::size_t l = 0; l < n; ++l) {
        Matrix z = (p.W[l] * a.back()).colwise() + p.b[l];
        if (l + 1 < n) z = tanh_act(z);
        a.push_back(std::move(z));
    }
    return a;
}

void check_sequences(const NarxParams& p, const Matrix& x, const Matrix& y)
{
    if (x.rows() != p.nx || y.rows() != p.ny) throw std::invalid_argument("narx: channel count mismatch");
    if (x.cols() != y.cols()) throw std::invalid_argument("narx: x and y differ in length");
}

} // namespace

Matrix mlp_forward_batch(const NarxParams& p, const Matrix& inputs) { return activations(p, inputs).back(); }

Matrix mlp_jacobian(const NarxParams& p, const Matrix& inputs)
{
    const auto a = activations(p, inputs);
    const Index n = inputs.cols();
    const Index ny = p.ny;
    const std::size_t nlay = p.W.size();
    Matrix jac(n * ny, parameter_count(p));

    // Column offsets of each tensor in the flattened vector.
    std::vector<Index> w_off(nlay), b_off(nlay);
    Index off = 0;
    for (std::size_t l = 0; l < nlay; ++l) {
        w_off[l] = off;
        off += p.W[l].size();
        b_off[l] = off;
        off += p.b[l].size();
    }

    for (Index k = 0; k < ny; ++k) {
        auto rows = jac.middleRows(k * n, n);
        Matrix delta = Matrix::Zero(ny, n);
        delta.row(k).setOnes();
        for (std::size_t l = nlay; l-- > 0;) {
            const Matrix& prev = a[l];
            const Index out = p.W[l].rows();
            for (Index j = 0; j < p.W[l].cols(); ++j)
                for (Index i = 0; i < out; ++i)
                    rows.col(w_off[l] + i + j * out) = (delta.row(i).array() * prev.row(j).array()).transpose();
            rows.middleCols(b_off[l], out) = delta.transpose();
            if (l > 0) delta = (p.W[l].transpose() * delta).cwiseProduct((1.0 - a[l].array().square()).matrix());
        }
    }
    return jac;
}

Matrix series_parallel_predict(const NarxParams& p, const Matrix& x, const Matrix& ystar)
{
    check_sequences(p, x, ystar);
    const Index len = x.cols();
    const Index d = std::min(p.order(), len);
    Matrix out(p.ny, len);
    out.leftCols(d) = ystar.leftCols(d);
    if (len > d) out.rightCols(len - d) = mlp_forward_batch(p, assemble_inputs(x, ystar, p.dx, p.dy, d, len));
    return out;
}

namespace {

Index first_counted(const NarxParams& p, Index transient, Index len)
{
    const Index first = std::max(p.order(), transient);
    if (first >= len) throw std::invalid_argument("narx: sequence shorter than the discarded prefix");
    return first;
}

/// Residuals out - y* for steps [first, T), channel-major like mlp_jacobian.
Vector residuals(const NarxParams& p, const Matrix& inputs, const Matrix& ystar, Index first)
{
    const Matrix out = mlp_forward_batch(p, inputs);
    const Matrix r = out - ystar.rightCols(ystar.cols() - first);
    return r.transpose().reshaped();
}

} // namespace

double narx_loss(const NarxParams& p, const Matrix& x, const Matrix& ystar, double l2, Index transient)
{
    check_sequences(p, x, ystar);
    const Index first = first_counted(p, transient, x.cols());
    const Vector r = residuals(p, assemble_inputs(x, ystar, p.dx, p.dy, first, x.cols()), ystar, first);
    return r.squaredNorm() / static_cast<double>(r.size()) + l2 * flatten(p).squaredNorm();
}

Vector narx_loss_gradient(const NarxParams& p, const Matrix& x, const Matrix& ystar, double l2, Index transient)
{
    check_sequences(p, x, ystar);
    const Index first = first_counted(p, transient, x.cols());
    const Matrix in = assemble_inputs(x, ystar, p.dx, p.dy, first, x.cols());
    const Vector r = residuals(p, in, ystar, first);
    return (2.0 / static_cast<double>(r.size())) * (mlp_jacobian(p, in).transpose() * r) + 2.0 * l2 * flatten(p);
}

// ---------------------------------------------------------------------------

void NarxConfig::validate() const
{
    if (dx < 0 || dy < 0 || dx + dy == 0) throw std::invalid_argument("NarxConfig: need at least one delay");
    if (hidden < 1 || layers < 1) throw std::invalid_argument("NarxConfig: hidden sizes must be positive");
    if (!(l2 >= 0.0)) throw std::invalid_argument("NarxConfig: l2 must be >= 0");
    if (!(eta0 > 0.0)) throw std::invalid_argument("NarxConfig: eta0 must be positive");
    if (epochs < 0 || max_inflations < 1) throw std::invalid_argument("NarxConfig: bad iteration limits");
    if (transient < 0) throw std::invalid_argument("NarxConfig: transient must be >= 0");
}

namespace {

constexpr Index kChunkRows = 4096;

struct NormalEquations {
    Matrix jtj;
    Vector jtr;
    double sse = 0.0;
    Index count = 0;
};

/// J'J and J'r accumulated over row chunks so the full Jacobian never has to exist.
NormalEquations accumulate(const NarxParams& p, const Matrix& inputs, const Matrix& targets)
{
    const Index np = parameter_count(p);
    NormalEquations ne{Matrix::Zero(np, np), Vector::Zero(np), 0.0, 0};
    for (Index c = 0; c < inputs.cols(); c += kChunkRows) {
        const Index n = std::min(kChunkRows, inputs.cols() - c);
        const Matrix in = inputs.middleCols(c, n);
        const Vector r = (mlp_forward_batch(p, in) - targets.middleCols(c, n)).transpose().reshaped();
        const Matrix j = mlp_jacobian(p, in);
        ne.jtj.selfadjointView<Eigen::Lower>().rankUpdate(j.transpose());
        ne.jtr.noalias() += j.transpose() * r;
        ne.sse += r.squaredNorm();
        ne.count += r.size();
    }
    ne.jtj.triangularView<Eigen::StrictlyUpper>() = ne.jtj.transpose();
    return ne;
}

double sse(const NarxParams& p, const Matrix& inputs, const Matrix& targets)
{
    double s = 0.0;
    for (Index c = 0; c < inputs.cols(); c += kChunkRows) {
        const Index n = std::min(kChunkRows, inputs.cols() - c);
        s += (mlp_forward_batch(p, Matrix(inputs.middleCols(c, n))) - targets.middleCols(c, n)).squaredNorm();
    }
    return s;
}

} // namespace

NarxTrainResult train_series_parallel(const NarxParams& init, const Matrix& x, const Matrix& ystar,
                                      const NarxConfig& cfg)
{
    cfg.validate();
    check_sequences(init, x, ystar);
    const Index first = first_counted(init, cfg.transient, x.cols());
    // Teacher forcing: the output delay line always reads y*, never a prediction.
    const Matrix inputs = assemble_inputs(x, ystar, init.dx, init.dy, first, x.cols());
    const Matrix targets = ystar.rightCols(x.cols() - first);

    NarxTrainResult result{init, {}, false};
    NarxParams trial = init;
    Vector theta = flatten(init);
    double damping = cfg.eta0;

    auto objective = [&](double sum_sq, const Vector& th) { return 0.5 * sum_sq + 0.5 * cfg.l2 * th.squaredNorm(); };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const NormalEquations ne = accumulate(result.params, inputs, targets);
        const double current = objective(ne.sse, theta);
        if (!std::isfinite(current)) {
            result.diverged = true;
            break;
        }
        const Vector grad = ne.jtr + cfg.l2 * theta;
        if (grad.norm() < 1e-7) break;

        bool accepted = false;
        double next_sse = ne.sse;
        for (int k = 0; k < cfg.max_inflations && !accepted; ++k) {
            Matrix a = ne.jtj;
            a.diagonal().array() += damping + cfg.l2;
            const Eigen::LLT<Matrix> llt(a);
            if (llt.info() == Eigen::Success) {
                const Vector step = llt.solve(-grad);
                const Vector cand = theta + step;
                if (step.allFinite()) {
                    unflatten(trial, cand);
                    const double s = sse(trial, inputs, targets);
                    if (std::isfinite(s) && objective(s, cand) < current) {
                        theta = cand;
                        next_sse = s;
                        accepted = true;
                        damping = std::max(damping / 10.0, 1e-15);
                        break;
                    }
                }
            }
            damping *= 10.0;
        }
        if (!accepted) break; // no descent within the inflation budget: converged or stuck
        unflatten(result.params, theta);
        result.history.push_back({epoch + 1, objective(next_sse, theta), next_sse / static_cast<double>(ne.count), damping});
        if (damping > 1e10) break;
    }
    return result;
}

NarxTrainResult train_series_parallel(const Matrix& x, const Matrix& ystar, const NarxConfig& cfg, RngStream& rng)
{
    cfg.validate();
    const NarxParams init = init_narx(cfg.dx, cfg.dy, x.rows(), ystar.rows(), cfg.hidden, cfg.layers, rng);
    return train_series_parallel(init, x, ystar, cfg);
}

Matrix closed_loop_predict(const NarxParams& p, const Matrix& x, const Matrix& y_true, Index warmup)
{
    if (x.rows() != p.nx || y_true.rows() != p.ny) throw std::invalid_argument("narx: channel count mismatch");
    const Index len = x.cols();
    const Index d = std::min(p.order(), len);
    warmup = std::max(warmup, d);
    if (y_true.cols() < std::min(warmup, len)) throw std::invalid_argument("closed_loop_predict: warmup exceeds y_true");

    Matrix out(p.ny, len);
    // `fed` is what the output delay line sees: truth during warmup, predictions afterwards.
    Matrix fed(p.ny, len);
    for (Index t = 0; t < d; ++t) out.col(t) = fed.col(t) = y_true.col(t);
    for (Index t = d; t < len; ++t) {
        out.col(t) = mlp_forward(p, assemble_input(x, fed, p.dx, p.dy, t));
        fed.col(t) = t < warmup ? Vector(y_true.col(t)) : Vector(out.col(t));
    }
    return out;
}

} // namespace rnnfc
