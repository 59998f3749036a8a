#include "rnnfc/bptt.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace rnnfc {

void LossConfig::validate() const
{
    if (!(l1 >= 0.0) || !(l2 >= 0.0)) throw std::invalid_argument("LossConfig: regularization weights must be >= 0");
    if (!(p_drop >= 0.0 && p_drop < 1.0)) throw std::invalid_argument("LossConfig: p_drop must lie in [0, 1)");
}

void TrainSchedule::validate() const
{
    if (tau_f < 1 || tau_b < tau_f) throw std::invalid_argument("TrainSchedule: need 1 <= tau_f <= tau_b");
    if (epochs < 0) throw std::invalid_argument("TrainSchedule: epochs must be >= 0");
    if (transient < 0) throw std::invalid_argument("TrainSchedule: transient must be >= 0");
    if (clip_threshold && !(*clip_threshold > 0.0)) throw std::invalid_argument("TrainSchedule: clip threshold must be > 0");
}

double mse(const Matrix& y, const Matrix& ystar)
{
    if (y.size() == 0) throw std::invalid_argument("mse: empty input");
    if (y.rows() != ystar.rows() || y.cols() != ystar.cols()) throw std::invalid_argument("mse: shape mismatch");
    return (y - ystar).squaredNorm() / static_cast<double>(y.size());
}

double reg_penalty(const Vector& w, const LossConfig& cfg, const Vector& mask)
{
    if (mask.size() == 0) return cfg.l1 * w.lpNorm<1>() + cfg.l2 * w.squaredNorm();
    return cfg.l1 * w.cwiseAbs().dot(mask) + cfg.l2 * w.cwiseAbs2().dot(mask);
}

Vector reg_gradient(const Vector& w, const LossConfig& cfg, const Vector& mask)
{
    Vector g = cfg.l1 * w.array().sign().matrix() + 2.0 * cfg.l2 * w;
    if (mask.size() != 0) g = g.cwiseProduct(mask);
    return g;
}

DropoutMasks sample_dropout_masks(const std::vector<Index>& input_sizes, const std::vector<Index>& recurrent_sizes,
                                  double p_drop, RngStream& rng)
{
    if (!(p_drop >= 0.0 && p_drop < 1.0)) throw std::invalid_argument("sample_dropout_masks: p_drop must lie in [0, 1)");
    const double keep = 1.0 - p_drop;
    auto draw = [&](Index n) {
        Vector m(n);
        for (Index i = 0; i < n; ++i) m(i) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
        return m;
    };
    DropoutMasks masks;
    for (Index n : input_sizes) masks.input.push_back(draw(n));
    for (Index n : recurrent_sizes) masks.recurrent.push_back(draw(n));
    return masks;
}

Vector clip_gradient(const Vector& g, double threshold)
{
    if (!(threshold > 0.0)) throw std::invalid_argument("clip_gradient: threshold must be positive");
    const double n = g.norm();
    if (n > threshold) return g * (threshold / n);
    return g;
}

// ---------------------------------------------------------------------------

namespace {

/// Error signal 2 (y - y*) / N on counted steps, zero on the transient.
Matrix output_error(const Matrix& y, const Matrix& ystar, Index transient, Index& counted)
{
    Matrix d = Matrix::Zero(y.rows(), y.cols());
    const Index first = std::min(transient, y.cols());
    counted = y.cols() - first;
    if (counted == 0) return d;
    const double scale = 2.0 / static_cast<double>(counted * y.rows());
    d.rightCols(counted) = scale * (y.rightCols(counted) - ystar.rightCols(counted));
    return d;
}

} // namespace

template <typename P, typename Cache>
P bptt_gradients(const P& p, const Cache& cache, const Matrix& targets, const TrainSchedule& sched, const LossConfig& cfg)
{
    sched.validate();
    cfg.validate();
    const Index len = cache.length();
    if (targets.rows() != p.outputs() || targets.cols() != len)
        throw std::invalid_argument("bptt_gradients: targets shape mismatch");
    if (sched.tau_b > len) throw std::invalid_argument("bptt_gradients: tau_b exceeds the available history");

    Index counted = 0;
    const Matrix d_all = output_error(cache.outputs(), targets, sched.transient, counted);
    P grad = reg_gradient(p, cfg);
    if (counted == 0) return grad;

    Matrix d = Matrix::Zero(d_all.rows(), len);
    for (Index prev = 0; prev < len;) {
        const Index end = std::min(prev + sched.tau_f, len);
        d.middleCols(prev, end - prev) = d_all.middleCols(prev, end - prev);
        backward(p, cache, d, std::max<Index>(0, end - sched.tau_b), end, grad);
        d.middleCols(prev, end - prev).setZero();
        prev = end;
    }
    return grad;
}

template <typename P, typename Cache>
std::vector<double> gradient_norm_profile(const P& p, const Cache& cache, const Matrix& targets)
{
    const Index len = cache.length();
    if (len == 0) return {};
    if (targets.rows() != p.outputs() || targets.cols() != len)
        throw std::invalid_argument("gradient_norm_profile: targets shape mismatch");
    const Vector d = 2.0 * (cache.outputs().col(len - 1) - targets.col(len - 1));
    return state_gradient_norms(p, cache, d, len - 1);
}

// ---------------------------------------------------------------------------

template <typename P>
TrainResult<P> train(const Matrix& x, const Matrix& y, const TrainConfig& cfg, RngStream& rng, const Matrix* x_valid,
                     const Matrix* y_valid)
{
    cfg.loss.validate();
    cfg.schedule.validate();
    const auto& sched = cfg.schedule;
    const Index len = x.cols();
    if (y.cols() != len) throw std::invalid_argument("train: inputs and targets differ in length");
    if (sched.tau_b > len) throw std::invalid_argument("train: tau_b exceeds the training sequence length");

    RngStream init_rng = rng.split(1);
    RngStream mask_rng = rng.split(2);
    TrainResult<P> result{init_params<P>(x.rows(), cfg.hidden, y.rows(), init_rng), {}, false};
    P& params = result.params;

    const Vector reg_mask = regularization_mask(params);
    Vector w = flatten(params);
    OptimizerState opt = OptimizerState::create(cfg.optimizer, w.size());
    const bool lookahead = cfg.optimizer.kind == Optimizer::nesterov;

    std::vector<decltype(zero_state(params))> states(static_cast<std::size_t>(len) + 1);
    P eval = params;

    for (int epoch = 0; epoch < sched.epochs; ++epoch) {
        const DropoutMasks masks = cfg.loss.p_drop > 0.0 ? sample_dropout_masks(params, cfg.loss.p_drop, mask_rng)
                                                         : DropoutMasks{};
        states[0] = zero_state(params);
        double sq_err = 0.0;
        Index n_err = 0;
        double grad_norm_sum = 0.0;
        int n_updates = 0;

        for (Index prev = 0; prev < len;) {
            const Index end = std::min(prev + sched.tau_f, len);
            const Index start = std::max<Index>(0, end - sched.tau_b);

            const Vector w_eval = lookahead ? nesterov_lookahead(opt, w) : w;
            unflatten(eval, w_eval);
            const auto cache = forward(eval, x.middleCols(start, end - start), states[static_cast<std::size_t>(start)], masks);
            for (Index t = start + 1; t <= end; ++t) states[static_cast<std::size_t>(t)] = cache.state_before(t - start);

            // Inject errors for the newest steps outside the transient.
            const Index first = std::max(prev, std::min(sched.transient, end));
            const Index counted = end - first;
            if (counted > 0) {
                const Matrix diff = cache.outputs().middleCols(first - start, counted) - y.middleCols(first, counted);
                sq_err += diff.squaredNorm();
                n_err += diff.size();
                if (!std::isfinite(diff.squaredNorm())) {
                    result.diverged = true;
                    break;
                }
                Matrix d = Matrix::Zero(y.rows(), end - start);
                d.middleCols(first - start, counted) = (2.0 / static_cast<double>(diff.size())) * diff;
                P grad = zeros_like(eval);
                backward(eval, cache, d, 0, end - start, grad);
                Vector g = flatten(grad) + reg_gradient(w_eval, cfg.loss, reg_mask);
                grad_norm_sum += g.norm();
                ++n_updates;
                if (sched.clip_threshold) g = clip_gradient(g, *sched.clip_threshold);
                try {
                    apply_update(opt, w, g);
                } catch (const std::domain_error&) {
                    result.diverged = true;
                    break;
                }
            }
            prev = end;
        }
        if (!result.diverged && !w.allFinite()) result.diverged = true;
        if (result.diverged) break;

        unflatten(params, w);
        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_mse = n_err > 0 ? sq_err / static_cast<double>(n_err) : 0.0;
        rec.learning_rate = lr_schedule(opt.settings, opt.step);
        rec.grad_norm = n_updates > 0 ? grad_norm_sum / n_updates : 0.0;
        if (x_valid && y_valid) {
            const Matrix out = predict(params, *x_valid);
            const Index first = std::min(sched.transient, out.cols());
            if (out.cols() > first)
                rec.valid_mse = mse(Matrix(out.rightCols(out.cols() - first)),
                                    Matrix(y_valid->rightCols(out.cols() - first)));
        }
        if (!std::isfinite(rec.train_mse)) {
            result.diverged = true;
            break;
        }
        result.history.push_back(rec);
    }
    if (!result.diverged) unflatten(params, w);
    return result;
}

void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history)
{
    os << "epoch,train_mse,valid_mse,learning_rate,grad_norm\n";
    os << std::setprecision(17);
    for (const auto& r : history)
        os << r.epoch << ',' << r.train_mse << ',' << r.valid_mse << ',' << r.learning_rate << ',' << r.grad_norm << '\n';
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history)
{
    std::ofstream os{path};
    if (!os) throw std::runtime_error("cannot write `" + path + "`");
    write_history_csv(os, history);
}

#define RNNFC_INSTANTIATE(P, C)                                                                                        \
    template P bptt_gradients<P, C>(const P&, const C&, const Matrix&, const TrainSchedule&, const LossConfig&);      \
    template std::vector<double> gradient_norm_profile<P, C>(const P&, const C&, const Matrix&);                       \
    template TrainResult<P> train<P>(const Matrix&, const Matrix&, const TrainConfig&, RngStream&, const Matrix*,      \
                                     const Matrix*);

RNNFC_INSTANTIATE(ErnnParams, ErnnCache)
RNNFC_INSTANTIATE(LstmParams, LstmCache)
RNNFC_INSTANTIATE(GruParams, GruCache)

#undef RNNFC_INSTANTIATE

} // namespace rnnfc
