#include "gradcheck.hpp"
#include "rnnfc/bptt.hpp"

#include <doctest.h>

#include <sstream>

using namespace rnnfc;
using rnnfc::testing::bptt_fd_error;
using rnnfc::testing::random_params;

namespace {

Vector vec(std::initializer_list<double> v)
{
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double e : v) out(i++) = e;
    return out;
}

OptimizerState make_state(Optimizer kind, double eta, Index n = 1)
{
    OptimizerSettings s;
    s.kind = kind;
    s.eta0 = eta;
    return OptimizerState::create(s, n);
}

} // namespace

TEST_CASE("mse")
{
    CHECK(mse(vec({1, 2}), vec({1, 2})) == 0.0);
    CHECK(mse(vec({0, 0}), vec({1, 1})) == 1.0);
    CHECK(mse(vec({1, 2, 3}), vec({2, 4, 3})) == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(mse(Vector{}, Vector{}), std::invalid_argument);
    CHECK_THROWS_AS(mse(vec({1}), vec({1, 2})), std::invalid_argument);
}

TEST_CASE("regularization penalty and gradient")
{
    LossConfig none;
    CHECK(reg_penalty(vec({3, -4}), none) == 0.0);
    CHECK(reg_gradient(vec({3, -4}), none).isZero(0.0));

    LossConfig l2{0.0, 0.5, 0.0};
    CHECK(reg_penalty(vec({3, -4}), l2) == 12.5);
    CHECK(reg_gradient(vec({3, -4}), l2) == vec({3, -4}));

    LossConfig l1{1.0, 0.0, 0.0};
    CHECK(reg_penalty(vec({2}), l1) == 2.0);
    CHECK(reg_gradient(vec({2}), l1) == vec({1}));
    CHECK(reg_gradient(vec({0}), l1) == vec({0}));

    LossConfig bad{-1.0, 0.0, 0.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    LossConfig bad_p{0.0, 0.0, 1.0};
    CHECK_THROWS_AS(bad_p.validate(), std::invalid_argument);
}

TEST_CASE("regularization skips biases")
{
    auto p = ErnnParams::zeros(1, 2, 1);
    p.for_each([](const char*, auto& t) { t.setOnes(); });
    LossConfig cfg{0.0, 1.0, 0.0};
    // Wih 2, Whh 4, Who 2 entries; the 5 bias entries are excluded.
    CHECK(reg_penalty(p, cfg) == 8.0);
    const auto g = reg_gradient(p, cfg);
    CHECK(g.Whh.isConstant(2.0));
    CHECK(g.bh.isZero(0.0));
}

TEST_CASE("dropout masks")
{
    RngStream rng{1};
    const auto ones = sample_dropout_masks({3}, {4}, 0.0, rng);
    CHECK(ones.input[0].isOnes(0.0));
    CHECK(ones.recurrent[0].isOnes(0.0));

    const auto half = sample_dropout_masks({100000}, {}, 0.5, rng);
    const double kept = static_cast<double>((half.input[0].array() > 0.0).count()) / 100000.0;
    CHECK(kept == doctest::Approx(0.5).epsilon(0.02));
    CHECK(((half.input[0].array() == 0.0) || (half.input[0].array() == 2.0)).all());

    RngStream a{5}, b{5};
    CHECK(sample_dropout_masks({10}, {10}, 0.3, a).recurrent[0] == sample_dropout_masks({10}, {10}, 0.3, b).recurrent[0]);
    CHECK_THROWS_AS(sample_dropout_masks({1}, {1}, 1.0, a), std::invalid_argument);

    RngStream c{6};
    const auto p = init_lstm(2, 3, 1, c);
    const auto m = sample_dropout_masks(p, 0.2, c);
    CHECK(m.input.size() == 4);
    CHECK(m.recurrent[3].size() == 3);
}

TEST_CASE("clip_gradient")
{
    const Vector g = vec({6, 8});
    CHECK((clip_gradient(g, 5.0) - 0.5 * g).norm() < 1e-15);
    CHECK(clip_gradient(vec({3, 0}), 5.0) == vec({3, 0}));
    CHECK((clip_gradient(vec({3, 4}), 1.0) - vec({0.6, 0.8})).norm() < 1e-15);
    CHECK_THROWS_AS(clip_gradient(g, 0.0), std::invalid_argument);

    RngStream rng{2};
    for (int i = 0; i < 20; ++i) {
        const Vector r = random_uniform(7, 1, -5.0, 5.0, rng);
        const Vector c = clip_gradient(r, 1.0);
        CHECK(c.dot(r) > 0.0);
        CHECK(std::abs(std::abs(c.dot(r)) - c.norm() * r.norm()) < 1e-12 * r.squaredNorm());
    }
}

TEST_CASE("sgd single step")
{
    auto st = make_state(Optimizer::sgd, 0.1);
    Vector w = vec({1.0});
    sgd_step(st, w, vec({0.5}), 0.1);
    CHECK(std::abs(w(0) - 0.95) < 1e-12);
    CHECK(st.step == 1);
}

TEST_CASE("momentum two steps")
{
    auto st = make_state(Optimizer::momentum, 0.1);
    Vector w = vec({0.0});
    momentum_step(st, w, vec({1.0}), 0.1);
    CHECK(std::abs(st.velocity(0) + 0.1) < 1e-12);
    CHECK(std::abs(w(0) + 0.1) < 1e-12);
    momentum_step(st, w, vec({1.0}), 0.1);
    CHECK(std::abs(st.velocity(0) + 0.19) < 1e-12);
    CHECK(std::abs(w(0) + 0.29) < 1e-12);
}

TEST_CASE("nesterov looks ahead along the velocity")
{
    auto st = make_state(Optimizer::nesterov, 0.1);
    Vector w = vec({1.0});
    CHECK(nesterov_lookahead(st, w) == w);
    // Loss w^2: gradient at the look-ahead point is 2 (w + mu V).
    for (int k = 0; k < 2; ++k) {
        const Vector g = 2.0 * nesterov_lookahead(st, w);
        nesterov_step(st, w, g, 0.1);
    }
    // Step 1: V = -0.2, w = 0.8. Step 2: look-ahead 0.62, V = -0.18 - 0.124 = -0.304, w = 0.496.
    CHECK(std::abs(st.velocity(0) + 0.304) < 1e-12);
    CHECK(std::abs(w(0) - 0.496) < 1e-12);
}

TEST_CASE("adagrad two steps")
{
    auto st = make_state(Optimizer::adagrad, 0.1);
    Vector w = vec({0.0});
    adagrad_step(st, w, vec({1.0}), 0.1);
    CHECK(std::abs(w(0) + 0.1 / (1.0 + 1e-8)) < 1e-12);
    adagrad_step(st, w, vec({1.0}), 0.1);
    CHECK(std::abs(w(0) + 0.1 / (1.0 + 1e-8) + 0.1 / (std::sqrt(2.0) + 1e-8)) < 1e-12);
}

TEST_CASE("rmsprop two steps")
{
    auto st = make_state(Optimizer::rmsprop, 0.1);
    Vector w = vec({0.0});
    rmsprop_step(st, w, vec({1.0}), 0.1);
    CHECK(std::abs(st.accum(0) - 0.01) < 1e-15);
    CHECK(std::abs(w(0) + 0.1 / (0.1 + 1e-8)) < 1e-12);
    rmsprop_step(st, w, vec({1.0}), 0.1);
    CHECK(std::abs(st.accum(0) - 0.0199) < 1e-15);
    CHECK(std::abs(w(0) + 0.1 / (0.1 + 1e-8) + 0.1 / (std::sqrt(0.0199) + 1e-8)) < 1e-12);
}

TEST_CASE("adam steps with bias correction")
{
    auto st = make_state(Optimizer::adam, 0.001);
    Vector w = vec({0.0});
    adam_step(st, w, vec({1.0}), 0.001);
    const double one = 0.001 / std::sqrt(1.0 + 1e-8);
    CHECK(std::abs(w(0) + one) < 1e-12);
    CHECK(w(0) > -0.001);
    // Constant gradient keeps both corrected moments at 1.
    adam_step(st, w, vec({1.0}), 0.001);
    CHECK(std::abs(w(0) + 2.0 * one) < 1e-12);

    auto zero = make_state(Optimizer::adam, 0.001);
    Vector w0 = vec({0.7});
    adam_step(zero, w0, vec({0.0}), 0.001);
    CHECK(w0(0) == 0.7);
}

TEST_CASE("apply_update dispatches and rejects bad gradients")
{
    auto st = make_state(Optimizer::sgd, 0.1);
    Vector w = vec({1.0});
    apply_update(st, w, vec({0.5}));
    CHECK(std::abs(w(0) - 0.95) < 1e-12);
    CHECK_THROWS_AS(apply_update(st, w, vec({std::nan("")})), std::domain_error);
    CHECK_THROWS_AS(apply_update(st, w, vec({1.0, 2.0})), std::invalid_argument);
    OptimizerSettings bad;
    bad.eta0 = 0.0;
    CHECK_THROWS_AS(OptimizerState::create(bad, 1), std::invalid_argument);
}

TEST_CASE("optimizer names round-trip")
{
    for (Optimizer o : {Optimizer::sgd, Optimizer::momentum, Optimizer::nesterov, Optimizer::adagrad, Optimizer::rmsprop,
                        Optimizer::adam})
        CHECK(optimizer_from_string(to_string(o)) == o);
    for (Decay d : {Decay::none, Decay::fractional, Decay::exponential}) CHECK(decay_from_string(to_string(d)) == d);
    CHECK_THROWS_AS(optimizer_from_string("lbfgs"), std::invalid_argument);
}

TEST_CASE("learning-rate schedules")
{
    OptimizerSettings s;
    s.eta0 = 0.1;
    CHECK(lr_schedule(s, 12345) == 0.1);
    s.decay = Decay::fractional;
    s.alpha = 1e-6;
    CHECK(std::abs(lr_schedule(s, 1000000) - 0.05) < 1e-15);
    s.decay = Decay::exponential;
    s.alpha = 0.1;
    CHECK(std::abs(lr_schedule(s, 10) - 0.1 * std::exp(-1.0)) < 1e-15);
    CHECK(std::abs(lr_schedule(s, 10) - 0.0367879) < 1e-7);
    for (Decay d : {Decay::fractional, Decay::exponential}) {
        s.decay = d;
        for (long k = 0; k < 50; ++k) CHECK(lr_schedule(s, k + 1) < lr_schedule(s, k));
    }
    CHECK_THROWS_AS(lr_schedule(s, -1), std::invalid_argument);
}

TEST_CASE("truncated bptt with full history equals the unrolled scalar ernn gradient")
{
    // Forward-mode derivative of the 5-step scalar network, independent of the
    // reverse replay. Parameters: Wih, Whh, Who, bi, bh, bo.
    const double wih = 0.8, whh = -0.6, who = 1.3, bi = 0.1, bh = -0.2, bo = 0.05;
    const double xs[5] = {0.5, -1.0, 0.3, 0.9, -0.4};
    const double ys[5] = {0.2, 0.1, -0.3, 0.4, 0.0};
    double h = 0.0, dh[6] = {0, 0, 0, 0, 0, 0}, dl[6] = {0, 0, 0, 0, 0, 0};
    for (int t = 0; t < 5; ++t) {
        const double a = wih * (xs[t] + bi) + whh * (h + bh);
        const double fp = 1.0 - std::tanh(a) * std::tanh(a);
        double da[6];
        da[0] = xs[t] + bi;
        da[1] = h + bh;
        da[2] = 0.0;
        da[3] = wih;
        da[4] = whh;
        da[5] = 0.0;
        for (int i = 0; i < 6; ++i) da[i] += whh * dh[i];
        h = std::tanh(a);
        for (int i = 0; i < 6; ++i) dh[i] = fp * da[i];
        const double y = who * (h + bo);
        const double e = 2.0 * (y - ys[t]) / 5.0;
        double dy[6];
        for (int i = 0; i < 6; ++i) dy[i] = who * dh[i];
        dy[2] += h + bo;
        dy[5] += who;
        for (int i = 0; i < 6; ++i) dl[i] += e * dy[i];
    }

    auto p = ErnnParams::zeros(1, 1, 1);
    p.Wih(0, 0) = wih;
    p.Whh(0, 0) = whh;
    p.Who(0, 0) = who;
    p.bi(0) = bi;
    p.bh(0) = bh;
    p.bo(0) = bo;
    Matrix x(1, 5), y(1, 5);
    for (int t = 0; t < 5; ++t) x(0, t) = xs[t], y(0, t) = ys[t];
    TrainSchedule sched;
    sched.tau_b = 5;
    sched.tau_f = 1;
    sched.transient = 0;
    const Vector g = flatten(bptt_gradients(p, ernn_forward(p, x), y, sched, LossConfig{}));
    for (int i = 0; i < 6; ++i) CHECK(std::abs(g(i) - dl[i]) < 1e-12 * std::max(1.0, std::abs(dl[i])));
}

TEST_CASE("window split does not change the full-history gradient")
{
    RngStream rng{3};
    const auto p = random_params<LstmParams>(2, 5, 1, rng);
    const Matrix x = random_uniform(2, 20, -1.0, 1.0, rng);
    const Matrix y = random_uniform(1, 20, -1.0, 1.0, rng);
    const auto cache = lstm_forward(p, x);
    TrainSchedule a;
    a.tau_b = 20;
    a.tau_f = 1;
    a.transient = 3;
    TrainSchedule b = a;
    b.tau_f = 7;
    const Vector ga = flatten(bptt_gradients(p, cache, y, a, LossConfig{}));
    const Vector gb = flatten(bptt_gradients(p, cache, y, b, LossConfig{}));
    CHECK((ga - gb).cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, ga.cwiseAbs().maxCoeff()));
}

TEST_CASE("bptt gradients match finite differences for all cells and regularizers")
{
    const LossConfig configs[] = {{0.0, 0.0, 0.0}, {0.01, 0.0, 0.0}, {0.0, 0.02, 0.0}, {0.005, 0.01, 0.0}};
    std::uint64_t seed = 100;
    for (const auto& cfg : configs) {
        for (int rep = 0; rep < 2; ++rep, ++seed) {
            RngStream rng{seed};
            const Index ni = 1 + seed % 2, nh = 3 + seed % 6, len = 10 + seed % 11;
            const Matrix x = random_uniform(ni, len, -1.0, 1.0, rng);
            const Matrix y = random_uniform(1, len, -1.0, 1.0, rng);
            TrainSchedule sched;
            sched.tau_b = len;
            sched.tau_f = 1 + seed % 5;
            sched.transient = seed % 4;
            CHECK(bptt_fd_error(random_params<ErnnParams>(ni, nh, 1, rng), x, y, sched, cfg) < 1e-5);
            CHECK(bptt_fd_error(random_params<LstmParams>(ni, nh, 1, rng), x, y, sched, cfg) < 1e-5);
            CHECK(bptt_fd_error(random_params<GruParams>(ni, nh, 1, rng), x, y, sched, cfg) < 1e-5);
        }
    }
}

TEST_CASE("bptt edge cases")
{
    const auto p = ErnnParams::zeros(1, 3, 1);
    TrainSchedule sched;
    sched.tau_b = 4;
    sched.tau_f = 2;
    sched.transient = 0;
    const auto cache = ernn_forward(p, Matrix::Ones(1, 8));
    CHECK(flatten(bptt_gradients(p, cache, Matrix::Zero(1, 8), sched, LossConfig{})).isZero(0.0));
    sched.tau_b = 9;
    CHECK_THROWS_AS(bptt_gradients(p, cache, Matrix::Zero(1, 8), sched, LossConfig{}), std::invalid_argument);
    sched.tau_b = 1;
    CHECK_THROWS_AS(sched.validate(), std::invalid_argument);
}

TEST_CASE("gradient norm profiles")
{
    RngStream rng{4};
    auto e = init_ernn(1, 10, 1, rng);
    e.Whh *= 0.1 / e.Whh.norm();
    const Matrix x = random_uniform(1, 40, -1.0, 1.0, rng);
    const Matrix y = random_uniform(1, 40, -1.0, 1.0, rng);
    const auto ne = gradient_norm_profile(e, ernn_forward(e, x), y);
    REQUIRE(ne.size() == 40);
    for (std::size_t k = 1; k < ne.size(); ++k) CHECK(ne[k] <= ne[k - 1]);
    CHECK(ne[20] < 1e-8 * ne[0]);

    auto l = random_params<LstmParams>(1, 6, 1, rng);
    l.bf.setConstant(50.0);
    l.bu.setConstant(-50.0);
    const auto nl = gradient_norm_profile(l, lstm_forward(l, x), y);
    for (std::size_t k = 0; k <= 50 && k < nl.size(); ++k) CHECK(std::abs(nl[k] - nl[0]) < 1e-10);

    const auto g = random_params<GruParams>(1, 4, 1, rng);
    CHECK(gradient_norm_profile(g, gru_forward(g, x.leftCols(1)), y.leftCols(1)).size() == 1);
}

TEST_CASE("train learns the identity task")
{
    RngStream data{7};
    const Matrix x = random_uniform(1, 400, -1.0, 1.0, data);
    TrainConfig cfg;
    cfg.hidden = 8;
    cfg.optimizer.kind = Optimizer::adam;
    cfg.optimizer.eta0 = 0.01;
    cfg.schedule.tau_b = 20;
    cfg.schedule.tau_f = 10;
    cfg.schedule.epochs = 200;
    RngStream rng{8};
    const auto res = train<ErnnParams>(x, x, cfg, rng, &x, &x);
    REQUIRE(!res.diverged);
    REQUIRE(res.history.size() == 200);
    const Matrix out = predict(res.params, x);
    const Index n = 400 - 50;
    const double nrmse = std::sqrt(mse(Matrix(out.rightCols(n)), Matrix(x.rightCols(n)))) /
                         std::sqrt((x.rightCols(n).array() - x.rightCols(n).mean()).square().mean());
    CHECK(nrmse < 0.05);
    CHECK(res.history.back().valid_mse == doctest::Approx(mse(Matrix(out.rightCols(n)), Matrix(x.rightCols(n)))));
}

TEST_CASE("train is deterministic and handles zero epochs")
{
    RngStream data{9};
    const Matrix x = random_uniform(1, 120, -1.0, 1.0, data);
    TrainConfig cfg;
    cfg.hidden = 4;
    cfg.optimizer.kind = Optimizer::nesterov;
    cfg.optimizer.eta0 = 0.01;
    cfg.optimizer.decay = Decay::fractional;
    cfg.optimizer.alpha = 1e-6;
    cfg.loss = {0.001, 0.001, 0.2};
    cfg.schedule.epochs = 5;
    for (int kind = 0; kind < 3; ++kind) {
        RngStream a{10}, b{10};
        std::vector<EpochRecord> ha, hb;
        if (kind == 0) ha = train<ErnnParams>(x, x, cfg, a).history, hb = train<ErnnParams>(x, x, cfg, b).history;
        if (kind == 1) ha = train<LstmParams>(x, x, cfg, a).history, hb = train<LstmParams>(x, x, cfg, b).history;
        if (kind == 2) ha = train<GruParams>(x, x, cfg, a).history, hb = train<GruParams>(x, x, cfg, b).history;
        REQUIRE(ha.size() == 5);
        for (std::size_t i = 0; i < ha.size(); ++i) CHECK(ha[i].train_mse == hb[i].train_mse);
    }

    cfg.schedule.epochs = 0;
    RngStream r0{11}, r1{11};
    const auto res = train<GruParams>(x, x, cfg, r0);
    CHECK(res.history.empty());
    RngStream init = r1.split(1);
    CHECK(flatten(res.params) == flatten(init_gru(1, 4, 1, init)));
}

TEST_CASE("train reports divergence instead of throwing")
{
    RngStream data{12};
    const Matrix x = random_uniform(1, 100, -1.0, 1.0, data) * 1e3;
    TrainConfig cfg;
    cfg.hidden = 4;
    cfg.optimizer.eta0 = 1e6;
    cfg.schedule.epochs = 50;
    RngStream rng{13};
    const auto res = train<LstmParams>(x, x * 1e150, cfg, rng);
    CHECK(res.diverged);
}

TEST_CASE("history csv")
{
    std::ostringstream os;
    write_history_csv(os, {EpochRecord{1, 0.5, 0.25, 0.01, 2.0}});
    CHECK(os.str() == "epoch,train_mse,valid_mse,learning_rate,grad_norm\n1,0.5,0.25,0.01,2\n");
}
