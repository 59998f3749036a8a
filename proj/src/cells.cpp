#include "rnnfc/cells.hpp"

#include <cmath>
#include <string>

namespace rnnfc {

std::string_view to_string(CellKind kind)
{
    switch (kind) {
    case CellKind::ernn: return "ernn";
    case CellKind::lstm: return "lstm";
    case CellKind::gru: return "gru";
    }
    return "?";
}

CellKind cell_kind_from_string(std::string_view name)
{
    if (name == "ernn") return CellKind::ernn;
    if (name == "lstm") return CellKind::lstm;
    if (name == "gru") return CellKind::gru;
    throw std::invalid_argument("unknown cell kind `" + std::string{name} + "`");
}

namespace {

Matrix init_weights(Index rows, Index cols, Index nh, RngStream& rng)
{
    return random_uniform(rows, cols, 0.0, 1.0, rng) / std::sqrt(static_cast<double>(nh));
}

Vector apply_mask(const Vector& v, const std::vector<Vector>& masks, std::size_t g)
{
    if (masks.empty()) return v;
    return v.cwiseProduct(masks[g]);
}

void check_masks(const DropoutMasks& m, int gates, Index ni, Index nh)
{
    if (m.empty()) return;
    if (m.input.size() != static_cast<std::size_t>(gates) || m.recurrent.size() != static_cast<std::size_t>(gates))
        throw std::invalid_argument("dropout masks: wrong number of weight groups");
    for (const auto& v : m.input)
        if (v.size() != ni) throw std::invalid_argument("dropout masks: input mask size mismatch");
    for (const auto& v : m.recurrent)
        if (v.size() != nh) throw std::invalid_argument("dropout masks: recurrent mask size mismatch");
}

void check_input(const Matrix& x, Index ni, const char* who)
{
    if (x.rows() != ni)
        throw std::invalid_argument(std::string{who} + ": input has " + std::to_string(x.rows()) + " rows, expected " +
                                    std::to_string(ni));
}

void check_range(Index begin, Index end, Index len, const Matrix& d_out, Index no)
{
    if (begin < 0 || end > len || begin > end) throw std::invalid_argument("backward: invalid step range");
    if (d_out.cols() != len || d_out.rows() != no) throw std::invalid_argument("backward: d_out shape mismatch");
}

Vector sigmoid_prime(const Vector& s) { return s.array() * (1.0 - s.array()); }
Vector tanh_prime(const Vector& t) { return 1.0 - t.array().square(); }

} // namespace

// ---------------------------------------------------------------------------
// Construction

ErnnParams ErnnParams::zeros(Index ni, Index nh, Index no)
{
    return {Matrix::Zero(nh, ni), Matrix::Zero(nh, nh), Matrix::Zero(no, nh),
            Vector::Zero(ni),     Vector::Zero(nh),     Vector::Zero(nh)};
}

LstmParams LstmParams::zeros(Index ni, Index nh, Index no)
{
    LstmParams p;
    for (Matrix* w : {&p.Wf, &p.Wh, &p.Wu, &p.Wo}) *w = Matrix::Zero(nh, ni);
    for (Matrix* r : {&p.Rf, &p.Rh, &p.Ru, &p.Ro}) *r = Matrix::Zero(nh, nh);
    for (Vector* b : {&p.bf, &p.bh, &p.bu, &p.bo}) *b = Vector::Zero(nh);
    p.Wy = Matrix::Zero(no, nh);
    p.by = Vector::Zero(no);
    return p;
}

GruParams GruParams::zeros(Index ni, Index nh, Index no)
{
    GruParams p;
    for (Matrix* w : {&p.Wr, &p.Wz, &p.Wu}) *w = Matrix::Zero(nh, nh);
    for (Matrix* r : {&p.Rr, &p.Rz, &p.Ru}) *r = Matrix::Zero(nh, ni);
    for (Vector* b : {&p.br, &p.bz, &p.bu}) *b = Vector::Zero(nh);
    p.Wy = Matrix::Zero(no, nh);
    p.by = Vector::Zero(no);
    return p;
}

ErnnParams init_ernn(Index ni, Index nh, Index no, RngStream& rng)
{
    if (nh <= 0) throw std::invalid_argument("init_ernn: Nh must be positive");
    auto p = ErnnParams::zeros(ni, nh, no);
    p.Wih = init_weights(nh, ni, nh, rng);
    p.Whh = init_weights(nh, nh, nh, rng);
    p.Who = init_weights(no, nh, nh, rng);
    return p;
}

LstmParams init_lstm(Index ni, Index nh, Index no, RngStream& rng)
{
    if (nh <= 0) throw std::invalid_argument("init_lstm: Nh must be positive");
    auto p = LstmParams::zeros(ni, nh, no);
    for (Matrix* w : {&p.Wf, &p.Wh, &p.Wu, &p.Wo}) *w = init_weights(nh, ni, nh, rng);
    for (Matrix* r : {&p.Rf, &p.Rh, &p.Ru, &p.Ro}) *r = init_weights(nh, nh, nh, rng);
    p.Wy = init_weights(no, nh, nh, rng);
    return p;
}

GruParams init_gru(Index ni, Index nh, Index no, RngStream& rng)
{
    if (nh <= 0) throw std::invalid_argument("init_gru: Nh must be positive");
    auto p = GruParams::zeros(ni, nh, no);
    for (Matrix* w : {&p.Wr, &p.Wz, &p.Wu}) *w = init_weights(nh, nh, nh, rng);
    for (Matrix* r : {&p.Rr, &p.Rz, &p.Ru}) *r = init_weights(nh, ni, nh, rng);
    p.Wy = init_weights(no, nh, nh, rng);
    return p;
}

ErnnState zero_state(const ErnnParams& p) { return {Vector::Zero(p.hidden())}; }
LstmState zero_state(const LstmParams& p) { return {Vector::Zero(p.hidden()), Vector::Zero(p.hidden())}; }
GruState zero_state(const GruParams& p) { return {Vector::Zero(p.hidden())}; }

// ---------------------------------------------------------------------------
// ERNN

ErnnCache forward(const ErnnParams& p, const Matrix& x, const ErnnState& s0, const DropoutMasks& masks)
{
    const Index nh = p.hidden();
    check_input(x, p.inputs(), "ernn_forward");
    if (s0.h.size() != nh) throw std::invalid_argument("ernn_forward: initial state size mismatch");
    check_masks(masks, ErnnParams::gate_count, p.inputs(), nh);

    const Index len = x.cols();
    ErnnCache c;
    c.x = x;
    c.masks = masks;
    c.h.resize(nh, len + 1);
    c.y.resize(p.outputs(), len);
    c.h.col(0) = s0.h;
    for (Index t = 0; t < len; ++t) {
        const Vector xin = apply_mask(x.col(t), masks.input, 0) + p.bi;
        const Vector hin = apply_mask(c.h.col(t), masks.recurrent, 0) + p.bh;
        c.h.col(t + 1) = tanh_act(p.Wih * xin + p.Whh * hin);
        c.y.col(t) = p.Who * (c.h.col(t + 1) + p.bo);
    }
    return c;
}

void backward(const ErnnParams& p, const ErnnCache& c, const Matrix& d_out, Index begin, Index end, ErnnParams& g)
{
    check_range(begin, end, c.length(), d_out, p.outputs());
    Vector dh_next = Vector::Zero(p.hidden());
    for (Index t = end - 1; t >= begin; --t) {
        const Vector h = c.h.col(t + 1);
        const Vector dy = d_out.col(t);
        g.Who.noalias() += dy * (h + p.bo).transpose();
        const Vector dho = p.Who.transpose() * dy;
        g.bo += dho;
        const Vector dh = dho + dh_next;
        const Vector da = dh.cwiseProduct(tanh_prime(h));
        const Vector xin = apply_mask(c.x.col(t), c.masks.input, 0) + p.bi;
        const Vector hin = apply_mask(c.h.col(t), c.masks.recurrent, 0) + p.bh;
        g.Wih.noalias() += da * xin.transpose();
        g.Whh.noalias() += da * hin.transpose();
        g.bi.noalias() += p.Wih.transpose() * da;
        const Vector dhin = p.Whh.transpose() * da;
        g.bh += dhin;
        dh_next = apply_mask(dhin, c.masks.recurrent, 0);
    }
}

std::vector<double> state_gradient_norms(const ErnnParams& p, const ErnnCache& c, const Vector& d_out_t, Index t)
{
    if (t < 0 || t >= c.length()) throw std::invalid_argument("state_gradient_norms: step out of range");
    std::vector<double> norms;
    Vector dh = p.Who.transpose() * d_out_t;
    for (Index k = t; k >= 0; --k) {
        norms.push_back(dh.norm());
        const Vector da = dh.cwiseProduct(tanh_prime(c.h.col(k + 1)));
        dh = apply_mask(p.Whh.transpose() * da, c.masks.recurrent, 0);
    }
    return norms;
}

// ---------------------------------------------------------------------------
// LSTM

LstmCache forward(const LstmParams& p, const Matrix& x, const LstmState& s0, const DropoutMasks& masks)
{
    const Index nh = p.hidden();
    check_input(x, p.inputs(), "lstm_forward");
    if (s0.c.size() != nh || s0.y.size() != nh) throw std::invalid_argument("lstm_forward: initial state size mismatch");
    check_masks(masks, LstmParams::gate_count, p.inputs(), nh);

    const Index len = x.cols();
    LstmCache c;
    c.x = x;
    c.masks = masks;
    c.c.resize(nh, len + 1);
    c.yb.resize(nh, len + 1);
    for (Matrix* m : {&c.f, &c.cand, &c.u, &c.o, &c.tanh_c}) m->resize(nh, len);
    c.out.resize(p.outputs(), len);
    c.c.col(0) = s0.c;
    c.yb.col(0) = s0.y;

    const Matrix* W[4] = {&p.Wf, &p.Wh, &p.Wu, &p.Wo};
    const Matrix* R[4] = {&p.Rf, &p.Rh, &p.Ru, &p.Ro};
    const Vector* B[4] = {&p.bf, &p.bh, &p.bu, &p.bo};
    Vector pre[4];
    for (Index t = 0; t < len; ++t) {
        for (std::size_t g = 0; g < 4; ++g) {
            pre[g] = *W[g] * apply_mask(x.col(t), masks.input, g) + *R[g] * apply_mask(c.yb.col(t), masks.recurrent, g) +
                     *B[g];
        }
        c.f.col(t) = logistic(pre[0]);
        c.cand.col(t) = tanh_act(pre[1]);
        c.u.col(t) = logistic(pre[2]);
        c.o.col(t) = logistic(pre[3]);
        c.c.col(t + 1) = c.u.col(t).cwiseProduct(c.cand.col(t)) + c.f.col(t).cwiseProduct(c.c.col(t));
        c.tanh_c.col(t) = tanh_act(c.c.col(t + 1));
        c.yb.col(t + 1) = c.o.col(t).cwiseProduct(c.tanh_c.col(t));
        c.out.col(t) = p.Wy * c.yb.col(t + 1) + p.by;
    }
    return c;
}

void backward(const LstmParams& p, const LstmCache& c, const Matrix& d_out, Index begin, Index end, LstmParams& g)
{
    check_range(begin, end, c.length(), d_out, p.outputs());
    const Index nh = p.hidden();
    const Matrix* R[4] = {&p.Rf, &p.Rh, &p.Ru, &p.Ro};
    Matrix* gW[4] = {&g.Wf, &g.Wh, &g.Wu, &g.Wo};
    Matrix* gR[4] = {&g.Rf, &g.Rh, &g.Ru, &g.Ro};
    Vector* gB[4] = {&g.bf, &g.bh, &g.bu, &g.bo};

    Vector dy_next = Vector::Zero(nh);
    Vector dc_next = Vector::Zero(nh);
    Vector dpre[4];
    for (Index t = end - 1; t >= begin; --t) {
        const Vector dout = d_out.col(t);
        g.Wy.noalias() += dout * c.yb.col(t + 1).transpose();
        g.by += dout;
        const Vector dy = p.Wy.transpose() * dout + dy_next;

        const Vector f = c.f.col(t), cand = c.cand.col(t), u = c.u.col(t), o = c.o.col(t), tc = c.tanh_c.col(t);
        const Vector dc = dy.cwiseProduct(o).cwiseProduct(tanh_prime(tc)) + dc_next;
        dpre[0] = dc.cwiseProduct(c.c.col(t)).cwiseProduct(sigmoid_prime(f));
        dpre[1] = dc.cwiseProduct(u).cwiseProduct(tanh_prime(cand));
        dpre[2] = dc.cwiseProduct(cand).cwiseProduct(sigmoid_prime(u));
        dpre[3] = dy.cwiseProduct(tc).cwiseProduct(sigmoid_prime(o));
        dc_next = dc.cwiseProduct(f);

        dy_next.setZero();
        for (std::size_t k = 0; k < 4; ++k) {
            gW[k]->noalias() += dpre[k] * apply_mask(c.x.col(t), c.masks.input, k).transpose();
            gR[k]->noalias() += dpre[k] * apply_mask(c.yb.col(t), c.masks.recurrent, k).transpose();
            *gB[k] += dpre[k];
            dy_next += apply_mask(R[k]->transpose() * dpre[k], c.masks.recurrent, k);
        }
    }
}

std::vector<double> state_gradient_norms(const LstmParams& p, const LstmCache& c, const Vector& d_out_t, Index t)
{
    if (t < 0 || t >= c.length()) throw std::invalid_argument("state_gradient_norms: step out of range");
    std::vector<double> norms;
    const Vector dy = p.Wy.transpose() * d_out_t;
    Vector dc = dy.cwiseProduct(c.o.col(t)).cwiseProduct(tanh_prime(c.tanh_c.col(t)));
    for (Index k = t; k >= 0; --k) {
        norms.push_back(dc.norm());
        dc = dc.cwiseProduct(c.f.col(k));
    }
    return norms;
}

// ---------------------------------------------------------------------------
// GRU

GruCache forward(const GruParams& p, const Matrix& x, const GruState& s0, const DropoutMasks& masks)
{
    const Index nh = p.hidden();
    check_input(x, p.inputs(), "gru_forward");
    if (s0.h.size() != nh) throw std::invalid_argument("gru_forward: initial state size mismatch");
    check_masks(masks, GruParams::gate_count, p.inputs(), nh);

    const Index len = x.cols();
    GruCache c;
    c.x = x;
    c.masks = masks;
    c.h.resize(nh, len + 1);
    for (Matrix* m : {&c.r, &c.hr, &c.z, &c.u}) m->resize(nh, len);
    c.out.resize(p.outputs(), len);
    c.h.col(0) = s0.h;
    for (Index t = 0; t < len; ++t) {
        const Vector h = c.h.col(t);
        const Vector xt = x.col(t);
        c.r.col(t) = logistic(p.Wr * apply_mask(h, masks.recurrent, 0) + p.Rr * apply_mask(xt, masks.input, 0) + p.br);
        c.hr.col(t) = h.cwiseProduct(c.r.col(t));
        c.z.col(t) = tanh_act(p.Wz * apply_mask(c.hr.col(t), masks.recurrent, 1) + p.Rz * apply_mask(xt, masks.input, 1) + p.bz);
        c.u.col(t) = logistic(p.Wu * apply_mask(h, masks.recurrent, 2) + p.Ru * apply_mask(xt, masks.input, 2) + p.bu);
        c.h.col(t + 1) = (1.0 - c.u.col(t).array()) * h.array() + c.u.col(t).array() * c.z.col(t).array();
        c.out.col(t) = p.Wy * c.h.col(t + 1) + p.by;
    }
    return c;
}

void backward(const GruParams& p, const GruCache& c, const Matrix& d_out, Index begin, Index end, GruParams& g)
{
    check_range(begin, end, c.length(), d_out, p.outputs());
    const auto& mr = c.masks.recurrent;
    const auto& mi = c.masks.input;
    Vector dh_next = Vector::Zero(p.hidden());
    for (Index t = end - 1; t >= begin; --t) {
        const Vector dout = d_out.col(t);
        g.Wy.noalias() += dout * c.h.col(t + 1).transpose();
        g.by += dout;
        const Vector dh = p.Wy.transpose() * dout + dh_next;

        const Vector hp = c.h.col(t), xt = c.x.col(t);
        const Vector r = c.r.col(t), hr = c.hr.col(t), z = c.z.col(t), u = c.u.col(t);

        const Vector du = dh.cwiseProduct(z - hp);
        const Vector dz = dh.cwiseProduct(u);
        Vector dhp = dh.cwiseProduct((1.0 - u.array()).matrix());

        const Vector dpz = dz.cwiseProduct(tanh_prime(z));
        g.Wz.noalias() += dpz * apply_mask(hr, mr, 1).transpose();
        g.Rz.noalias() += dpz * apply_mask(xt, mi, 1).transpose();
        g.bz += dpz;
        const Vector dhr = apply_mask(p.Wz.transpose() * dpz, mr, 1);
        const Vector dr = dhr.cwiseProduct(hp);
        dhp += dhr.cwiseProduct(r);

        const Vector dpr = dr.cwiseProduct(sigmoid_prime(r));
        g.Wr.noalias() += dpr * apply_mask(hp, mr, 0).transpose();
        g.Rr.noalias() += dpr * apply_mask(xt, mi, 0).transpose();
        g.br += dpr;
        dhp += apply_mask(p.Wr.transpose() * dpr, mr, 0);

        const Vector dpu = du.cwiseProduct(sigmoid_prime(u));
        g.Wu.noalias() += dpu * apply_mask(hp, mr, 2).transpose();
        g.Ru.noalias() += dpu * apply_mask(xt, mi, 2).transpose();
        g.bu += dpu;
        dhp += apply_mask(p.Wu.transpose() * dpu, mr, 2);

        dh_next = dhp;
    }
}

std::vector<double> state_gradient_norms(const GruParams& p, const GruCache& c, const Vector& d_out_t, Index t)
{
    if (t < 0 || t >= c.length()) throw std::invalid_argument("state_gradient_norms: step out of range");
    // Reuse the exact backward recursion with an error injected at step t only.
    std::vector<double> norms;
    const auto& mr = c.masks.recurrent;
    Vector dh = p.Wy.transpose() * d_out_t;
    for (Index k = t; k >= 0; --k) {
        norms.push_back(dh.norm());
        const Vector hp = c.h.col(k);
        const Vector r = c.r.col(k), z = c.z.col(k), u = c.u.col(k);
        const Vector dpz = dh.cwiseProduct(u).cwiseProduct(tanh_prime(z));
        const Vector dhr = apply_mask(p.Wz.transpose() * dpz, mr, 1);
        const Vector dpr = dhr.cwiseProduct(hp).cwiseProduct(sigmoid_prime(r));
        const Vector dpu = dh.cwiseProduct(z - hp).cwiseProduct(sigmoid_prime(u));
        dh = dh.cwiseProduct((1.0 - u.array()).matrix()) + dhr.cwiseProduct(r) + apply_mask(p.Wr.transpose() * dpr, mr, 0) +
             apply_mask(p.Wu.transpose() * dpu, mr, 2);
    }
    return norms;
}

} // namespace rnnfc
