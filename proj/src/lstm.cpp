#include "sab/lstm.hpp"

#include <cmath>
#include <stdexcept>

#include "sab/math_kernels.hpp"

namespace sab {

LstmWeights LstmWeights::init(int hidden, int input, Rng& rng) {
    if (hidden < 1 || input < 1) throw std::invalid_argument("LstmWeights: bad dims");
    LstmWeights w;
    w.hidden = hidden;
    w.input = input;
    const double bound = 1.0 / std::sqrt(double(hidden));
    w.wx = Tensor(4 * hidden, input);
    w.wh = Tensor(4 * hidden, hidden);
    w.bias = Tensor(4 * hidden, 1);
    for (std::size_t i = 0; i < w.wx.size(); ++i) w.wx[i] = rng.next_uniform(-bound, bound);
    for (std::size_t i = 0; i < w.wh.size(); ++i) w.wh[i] = rng.next_uniform(-bound, bound);
    for (int r = hidden; r < 2 * hidden; ++r) w.bias[r] = 1.0;  // forget gate
    return w;
}

std::pair<NodeId, NodeId> lstm_step(Tape& tape, const LstmStepIds& p, NodeId h_prev,
                                    NodeId c_prev, NodeId x) {
    const int n = tape.val(h_prev).rows();
    const NodeId z =
        tape.add_bias(tape.add(tape.matmul(p.wx, x), tape.matmul(p.wh, h_prev)), p.bias);
    const NodeId gi = tape.sigmoid_(tape.slice_rows(z, 0, n));
    const NodeId gf = tape.sigmoid_(tape.slice_rows(z, n, n));
    const NodeId gg = tape.tanh_(tape.slice_rows(z, 2 * n, n));
    const NodeId go = tape.sigmoid_(tape.slice_rows(z, 3 * n, n));
    const NodeId c = tape.add(tape.mul(gf, c_prev), tape.mul(gi, gg));
    const NodeId h_hat = tape.mul(go, tape.tanh_(c));
    return {h_hat, c};
}

void LstmEvalScratch::resize(int hidden, int batch) {
    if (zx.rows() == 4 * hidden && zx.cols() == batch) return;
    zx = Tensor(4 * hidden, batch);
    zh = Tensor(4 * hidden, batch);
    z = Tensor(4 * hidden, batch);
    act = Tensor(4 * hidden, batch);
    mul1 = Tensor(hidden, batch);
    mul2 = Tensor(hidden, batch);
    tanh_c = Tensor(hidden, batch);
}

void lstm_step_eval(const LstmWeights& w, const Tensor& h_prev, const Tensor& c_prev,
                    const Tensor& x, LstmEvalScratch& s, Tensor& h_hat, Tensor& c_out) {
    const int n = w.hidden;
    const int batch = h_prev.cols();
    s.resize(n, batch);
    const std::size_t nb = std::size_t(n) * batch;

    kern::gemm(false, false, 4 * n, batch, w.input, 1.0, w.wx.data(), w.input, x.data(), batch,
               0.0, s.zx.data(), batch);
    kern::gemm(false, false, 4 * n, batch, n, 1.0, w.wh.data(), n, h_prev.data(), batch, 0.0,
               s.zh.data(), batch);
    kern::vadd(s.zx.data(), s.zh.data(), s.z.data(), s.z.size());
    kern::add_bias_rows(s.z.data(), w.bias.data(), s.z.data(), 4 * n, batch);

    kern::vsigmoid(s.z.data() + 0 * nb, s.act.data() + 0 * nb, nb);
    kern::vsigmoid(s.z.data() + 1 * nb, s.act.data() + 1 * nb, nb);
    kern::vtanh(s.z.data() + 2 * nb, s.act.data() + 2 * nb, nb);
    kern::vsigmoid(s.z.data() + 3 * nb, s.act.data() + 3 * nb, nb);

    kern::vmul(s.act.data() + 1 * nb, c_prev.data(), s.mul1.data(), nb);  // f . c_prev
    kern::vmul(s.act.data() + 0 * nb, s.act.data() + 2 * nb, s.mul2.data(), nb);  // i . g
    kern::vadd(s.mul1.data(), s.mul2.data(), c_out.data(), nb);
    kern::vtanh(c_out.data(), s.tanh_c.data(), nb);
    kern::vmul(s.act.data() + 3 * nb, s.tanh_c.data(), h_hat.data(), nb);
}

}  // namespace sab
