#pragma once
#include <string>
#include <vector>

#include "diver/rng.hpp"
#include "diver/tensor.hpp"

namespace diver {

enum class Act { Tanh, Relu };

// Fully connected net: hidden layers all use `act`, output is linear.
// Weights are stored row-major as W[in x out]; forward is X @ W + b.
struct Mlp {
    std::vector<Matrix> W;
    std::vector<std::vector<double>> b;
    Act act = Act::Tanh;

    size_t in_dim() const { return W.front().rows; }
    size_t out_dim() const { return W.back().cols; }
    size_t num_layers() const { return W.size(); }
    size_t param_count() const;
};

// Xavier-uniform initialization, biases zero. Deterministic in rng state.
Mlp make_mlp(const std::vector<size_t>& dims, Act act, Rng& rng);

// Activations of every layer, cached for the backward pass. acts[0] is the input,
// acts[i] the post-activation of hidden layer i, acts.back() the linear output.
struct MlpCache {
    std::vector<Matrix> acts;
};

// Forward pass over a batch (rows of x). Returns reference to cache.acts.back().
const Matrix& mlp_forward(const Mlp& net, const Matrix& x, MlpCache& cache);

struct MlpGrads {
    std::vector<Matrix> W;
    std::vector<std::vector<double>> b;
};

void zero_grads(const Mlp& net, MlpGrads& g);

// Backprop of dL/d(output) through the cached forward pass. Accumulates into
// `grads` (callers zero it first) and, when `dx` is non-null, writes dL/d(input).
void mlp_backward(const Mlp& net, const MlpCache& cache, const Matrix& dout,
                  MlpGrads& grads, Matrix* dx);

// Plain SGD step: p -= lr * g.
void sgd_step(Mlp& net, const MlpGrads& grads, double lr);

// Global L2 norm of all gradient entries.
double grad_norm(const MlpGrads& grads);

// Scales all gradients by min(1, max_norm / ||g||).
void clip_grads(MlpGrads& grads, double max_norm);

// Softmax cross-entropy over logits (rows = samples). Fills dlogits with the
// mean-reduced gradient and returns the mean loss.
double softmax_xent(const Matrix& logits, const std::vector<int>& labels, Matrix& dlogits);

// Flat parameter views used by checkpointing and finite-difference tests.
std::vector<double*> param_ptrs(Mlp& net);

} // namespace diver
