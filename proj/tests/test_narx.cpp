#include "gradcheck.hpp"
#include "rnnfc/narx.hpp"

#include <doctest.h>

using namespace rnnfc;
using rnnfc::testing::fd_gradient;
using rnnfc::testing::max_rel_error;

namespace {

Matrix row(std::initializer_list<double> v)
{
    Matrix m(1, static_cast<Index>(v.size()));
    Index i = 0;
    for (double e : v) m(0, i++) = e;
    return m;
}

NarxParams random_narx(Index dx, Index dy, Index nx, Index ny, Index nh, Index nl, RngStream& rng)
{
    NarxParams p = NarxParams::zeros(dx, dy, nx, ny, nh, nl);
    p.for_each([&](const char*, auto& t) {
        for (Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-0.8, 0.8);
    });
    return p;
}

} // namespace

TEST_CASE("assemble_input orders the delay lines oldest first")
{
    const Matrix x = row({1, 2, 3}), y = row({10, 20, 30});
    // 0-based step 2 reads x[0], x[1] and y[0], y[1].
    const Vector v = assemble_input(x, y, 2, 2, 2);
    REQUIRE(v.size() == 4);
    CHECK(v(0) == 1);
    CHECK(v(1) == 2);
    CHECK(v(2) == 10);
    CHECK(v(3) == 20);

    const Vector one = assemble_input(x, y, 1, 1, 1);
    CHECK(one(0) == 1);
    CHECK(one(1) == 10);

    Matrix x2(2, 4);
    x2 << 1, 2, 3, 4, 5, 6, 7, 8;
    CHECK(assemble_input(x2, row({0, 0, 0, 0}), 2, 3, 3).size() == 4 + 3);
    CHECK_THROWS_AS(assemble_input(x, y, 2, 2, 1), std::invalid_argument);
}

TEST_CASE("TdlBuffer matches assemble_input")
{
    RngStream rng{1};
    const Matrix x = random_uniform(2, 12, -1.0, 1.0, rng);
    const Matrix y = random_uniform(1, 12, -1.0, 1.0, rng);
    TdlBuffer buf{3, 2, 2, 1};
    CHECK_THROWS_AS(buf.assemble(), std::logic_error);
    for (Index t = 0; t < 12; ++t) {
        if (buf.ready()) CHECK(buf.assemble() == assemble_input(x, y, 3, 2, t));
        buf.push_x(x.col(t));
        buf.push_y(y.col(t));
    }
}

TEST_CASE("mlp forward basics")
{
    auto p = NarxParams::zeros(2, 2, 1, 1, 5, 2);
    p.b.back()(0) = 0.7;
    CHECK(mlp_forward(p, Vector::Ones(4))(0) == 0.7);

    // Tiny weights keep tanh linear: output ~ Wo Wi i.
    RngStream rng{2};
    auto q = NarxParams::zeros(1, 1, 1, 1, 4, 1);
    q.W[0] = random_uniform(4, 2, -1e-3, 1e-3, rng);
    q.W[1] = random_uniform(1, 4, -1.0, 1.0, rng);
    Vector i(2);
    i << 0.3, -0.5;
    CHECK(std::abs(mlp_forward(q, i)(0) - (q.W[1] * q.W[0] * i)(0)) < 1e-6);
    CHECK_THROWS_AS(mlp_forward(q, Vector::Ones(3)), std::invalid_argument);
}

TEST_CASE("mlp jacobian matches finite differences")
{
    for (std::uint64_t s = 1; s <= 8; ++s) {
        RngStream rng{s};
        const Index ny = 1 + s % 2, nl = 1 + s % 3;
        auto p = random_narx(1 + s % 3, 1 + s % 2, 1 + s % 2, ny, 2 + s % 6, nl, rng);
        const Matrix in = random_uniform(p.inputs(), 7, -1.0, 1.0, rng);
        const Matrix jac = mlp_jacobian(p, in);
        REQUIRE(jac.rows() == 7 * ny);
        NarxParams q = p;
        for (Index k = 0; k < ny; ++k)
            for (Index n = 0; n < 7; ++n) {
                auto f = [&](const Vector& w) {
                    unflatten(q, w);
                    return mlp_forward_batch(q, in)(k, n);
                };
                const Vector fd = fd_gradient(f, flatten(p));
                CHECK(max_rel_error(jac.row(k * 7 + n).transpose(), fd) < 1e-5);
            }
    }
}

TEST_CASE("narx loss and its gradient")
{
    RngStream rng{3};
    const Matrix x = random_uniform(1, 80, -1.0, 1.0, rng);
    const Matrix y = random_uniform(1, 80, -1.0, 1.0, rng);
    const auto p = random_narx(2, 3, 1, 1, 4, 2, rng);
    for (double l2 : {0.0, 0.05}) {
        NarxParams q = p;
        auto f = [&](const Vector& w) {
            unflatten(q, w);
            return narx_loss(q, x, y, l2, 10);
        };
        CHECK(max_rel_error(narx_loss_gradient(p, x, y, l2, 10), fd_gradient(f, flatten(p))) < 1e-5);
    }
    const double base = narx_loss(p, x, y, 0.0, 10);
    const double pen = narx_loss(p, x, y, 0.1, 10) - base;
    CHECK(std::abs(narx_loss(p, x, y, 0.2, 10) - base - 2.0 * pen) < 1e-12);

    // Zero predictor on a unit-variance target scores the target variance.
    RngStream g{4};
    Matrix z(1, 20000);
    for (Index t = 0; t < z.cols(); ++t) z(0, t) = g.normal(0.0, 1.0);
    CHECK(narx_loss(NarxParams::zeros(2, 2, 1, 1, 3, 1), z, z, 0.0) == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("perfect fit has zero loss and closed loop reproduces series-parallel")
{
    // y[t] = 0.5 x[t-1] is realized exactly by a linear output layer reading x[t-1]
    // (hidden weights zero, so the hidden layer is inert).
    RngStream rng{5};
    const Matrix x = random_uniform(1, 120, -1.0, 1.0, rng);
    Matrix y = Matrix::Zero(1, 120);
    for (Index t = 1; t < 120; ++t) y(0, t) = 0.5 * x(0, t - 1);
    auto p = NarxParams::zeros(1, 1, 1, 1, 3, 1);
    p.W[0].setZero();
    // Route x[t-1] through a linear-regime hidden unit and undo its gain.
    p.W[0](0, 0) = 1e-4;
    p.W[1](0, 0) = 0.5 / 1e-4;
    CHECK(narx_loss(p, x, y, 0.0, 0) < 1e-8);

    const Matrix sp = series_parallel_predict(p, x, y);
    const Matrix cl = closed_loop_predict(p, x, y, 1);
    CHECK((sp - cl).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(closed_loop_predict(p, x, y, 120) == sp);
}

TEST_CASE("closed loop never reads the truth after warmup")
{
    RngStream rng{6};
    const auto p = random_narx(2, 2, 1, 1, 4, 1, rng);
    const Matrix x = random_uniform(1, 40, -1.0, 1.0, rng);
    Matrix y = random_uniform(1, 40, -1.0, 1.0, rng);
    const Matrix a = closed_loop_predict(p, x, y, 5);
    y.rightCols(35).setConstant(1e9);
    const Matrix b = closed_loop_predict(p, x, y, 5);
    CHECK(a == b);
    CHECK(closed_loop_predict(p, x, y.leftCols(5), 5) == a);
}

TEST_CASE("closed loop settles on the constant a network was trained to emit")
{
    auto p = NarxParams::zeros(2, 2, 1, 1, 3, 1);
    p.b.back()(0) = 0.3;
    const Matrix out = closed_loop_predict(p, Matrix::Zero(1, 30), Matrix::Zero(1, 2), 2);
    CHECK(std::abs(out(0, 29) - 0.3) < 1e-12);
}

TEST_CASE("levenberg-marquardt fits a realizable target")
{
    // Zero-residual problem the network can represent exactly, so LM should
    // converge at Gauss-Newton speed.
    RngStream rng{7};
    const Matrix x = random_uniform(1, 300, -1.0, 1.0, rng);
    Matrix y = Matrix::Zero(1, 300);
    for (Index t = 1; t < 300; ++t) y(0, t) = 0.8 * std::tanh(0.5 * x(0, t - 1)) + 0.1;
    NarxConfig cfg;
    cfg.dx = 1;
    cfg.dy = 1;
    cfg.hidden = 3;
    cfg.layers = 1;
    cfg.eta0 = 1e-3;
    cfg.epochs = 30;
    RngStream init{8};
    const auto res = train_series_parallel(x, y, cfg, init);
    REQUIRE(!res.history.empty());
    CHECK(narx_loss(res.params, x, y, 0.0) < 1e-10);

    // Accepted steps never raise the regularized objective.
    for (std::size_t k = 1; k < res.history.size(); ++k) CHECK(res.history[k].objective <= res.history[k - 1].objective);

    cfg.l2 = 0.05;
    RngStream again{8};
    const auto reg = train_series_parallel(x, y, cfg, again);
    for (std::size_t k = 1; k < reg.history.size(); ++k) CHECK(reg.history[k].objective <= reg.history[k - 1].objective);
}

TEST_CASE("levenberg-marquardt is deterministic and honours zero epochs")
{
    RngStream data{9};
    const Matrix x = random_uniform(1, 200, -1.0, 1.0, data);
    Matrix y = Matrix::Zero(1, 200);
    for (Index t = 2; t < 200; ++t) y(0, t) = std::sin(2.0 * x(0, t - 1)) * 0.5 + 0.3 * y(0, t - 2);
    NarxConfig cfg;
    cfg.hidden = 5;
    cfg.layers = 2;
    cfg.l2 = 0.01;
    cfg.epochs = 10;
    RngStream a{10}, b{10};
    const auto ra = train_series_parallel(x, y, cfg, a);
    const auto rb = train_series_parallel(x, y, cfg, b);
    CHECK(flatten(ra.params) == flatten(rb.params));
    CHECK(ra.history.back().objective < ra.history.front().objective * 1.0000001);

    cfg.epochs = 0;
    RngStream c{11}, d{11};
    const auto r0 = train_series_parallel(x, y, cfg, c);
    CHECK(flatten(r0.params) == flatten(init_narx(2, 2, 1, 1, 5, 2, d)));
    CHECK(r0.history.empty());
}

TEST_CASE("large damping turns the LM step into scaled gradient descent")
{
    RngStream rng{12};
    for (int rep = 0; rep < 5; ++rep) {
        const auto p = random_narx(2, 2, 1, 1, 4, 2, rng);
        const Matrix in = random_uniform(4, 60, -1.0, 1.0, rng);
        const Matrix tgt = random_uniform(1, 60, -1.0, 1.0, rng);
        const Matrix j = mlp_jacobian(p, in);
        const Vector r = (mlp_forward_batch(p, in) - tgt).transpose();
        const Vector g = j.transpose() * r;
        Matrix a = j.transpose() * j;
        a.diagonal().array() += 1e6;
        const Vector step = a.llt().solve(-g);
        CHECK(step.dot(-g) / (step.norm() * g.norm()) > 1.0 - 1e-3);
    }
}
