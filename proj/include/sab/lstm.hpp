#pragma once

#include <utility>

#include "sab/rng.hpp"
#include "sab/tape.hpp"
#include "sab/tensor.hpp"

namespace sab {

/// LSTM parameters with the four gates stacked row-wise in the order
/// [input, forget, candidate, output]: wx (4n x d), wh (4n x n), bias (4n x 1).
/// Weights start uniform in [-1/sqrt(n), 1/sqrt(n)]; the forget-gate bias rows
/// start at 1.0, all other biases at 0.
struct LstmWeights {
    int hidden = 0;
    int input = 0;
    Tensor wx, wh, bias;

    static LstmWeights init(int hidden, int input, Rng& rng);
};

/// Tape handles for the parameters during one forward pass.
struct LstmStepIds {
    NodeId wx, wh, bias;
};

/// One step of the standard (no-peephole) recurrence:
///   i,f,o = sigmoid, g = tanh of the stacked preactivation
///   c = f . c_prev + i . g,   h_hat = o . tanh(c)
/// Returns (h_hat, c). Shapes must match the parameters; h/c/x have one
/// column per batch element.
std::pair<NodeId, NodeId> lstm_step(Tape& tape, const LstmStepIds& p, NodeId h_prev,
                                    NodeId c_prev, NodeId x);

/// Scratch for the no-tape mirror of lstm_step.
struct LstmEvalScratch {
    Tensor zx, zh, z, act, mul1, mul2, tanh_c;
    void resize(int hidden, int batch);
};

/// Kernel-for-kernel mirror of lstm_step on plain tensors; produces bitwise
/// the same h_hat and c as the tape path.
void lstm_step_eval(const LstmWeights& w, const Tensor& h_prev, const Tensor& c_prev,
                    const Tensor& x, LstmEvalScratch& s, Tensor& h_hat, Tensor& c_out);

}  // namespace sab
