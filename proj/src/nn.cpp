#include "diver/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace diver {

size_t Mlp::param_count() const {
    size_t n = 0;
    for (size_t i = 0; i < W.size(); ++i) n += W[i].size() + b[i].size();
    return n;
}

Mlp make_mlp(const std::vector<size_t>& dims, Act act, Rng& rng) {
    if (dims.size() < 2) throw std::runtime_error("mlp needs at least input and output dims");
    Mlp net;
    net.act = act;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        size_t fan_in = dims[i], fan_out = dims[i + 1];
        double bound = std::sqrt(6.0 / double(fan_in + fan_out));
        Matrix w(fan_in, fan_out);
        for (double& v : w.data) v = (2.0 * rng.uniform() - 1.0) * bound;
        net.W.push_back(std::move(w));
        net.b.emplace_back(fan_out, 0.0);
    }
    return net;
}

static void apply_act(Matrix& m, Act act) {
    if (act == Act::Tanh) {
        for (double& v : m.data) v = std::tanh(v);
    } else {
        for (double& v : m.data) v = v > 0.0 ? v : 0.0;
    }
}

const Matrix& mlp_forward(const Mlp& net, const Matrix& x, MlpCache& cache) {
    if (x.cols != net.in_dim())
        throw std::runtime_error("mlp_forward: input has " + std::to_string(x.cols) +
                                 " columns, net expects " + std::to_string(net.in_dim()));
    cache.acts.clear();
    cache.acts.push_back(x);
    for (size_t i = 0; i < net.W.size(); ++i) {
        Matrix z;
        matmul(cache.acts.back(), net.W[i], z);
        for (size_t r = 0; r < z.rows; ++r)
            for (size_t c = 0; c < z.cols; ++c) z(r, c) += net.b[i][c];
        if (i + 1 < net.W.size()) apply_act(z, net.act);
        cache.acts.push_back(std::move(z));
    }
    return cache.acts.back();
}

void zero_grads(const Mlp& net, MlpGrads& g) {
    g.W.resize(net.W.size());
    g.b.resize(net.b.size());
    for (size_t i = 0; i < net.W.size(); ++i) {
        g.W[i].rows = net.W[i].rows;
        g.W[i].cols = net.W[i].cols;
        g.W[i].data.assign(net.W[i].size(), 0.0);
        g.b[i].assign(net.b[i].size(), 0.0);
    }
}

void mlp_backward(const Mlp& net, const MlpCache& cache, const Matrix& dout,
                  MlpGrads& grads, Matrix* dx) {
    if (cache.acts.size() != net.W.size() + 1)
        throw std::runtime_error("mlp_backward: cache does not match net (run forward first)");
    Matrix delta = dout;
    for (size_t li = net.W.size(); li-- > 0;) {
        const Matrix& a_in = cache.acts[li];
        // dW = a_in^T @ delta, db = column sums of delta
        Matrix dw;
        matmul_tn(a_in, delta, dw);
        for (size_t k = 0; k < dw.size(); ++k) grads.W[li].data[k] += dw.data[k];
        for (size_t r = 0; r < delta.rows; ++r)
            for (size_t c = 0; c < delta.cols; ++c) grads.b[li][c] += delta(r, c);
        bool need_dx = li > 0 || dx != nullptr;
        if (!need_dx) break;
        Matrix dprev;
        matmul_nt(delta, net.W[li], dprev);
        if (li > 0) {
            // Chain through the activation of the layer below.
            const Matrix& act_out = cache.acts[li];
            if (net.act == Act::Tanh) {
                for (size_t k = 0; k < dprev.size(); ++k) {
                    double t = act_out.data[k];
                    dprev.data[k] *= (1.0 - t * t);
                }
            } else {
                for (size_t k = 0; k < dprev.size(); ++k)
                    if (act_out.data[k] <= 0.0) dprev.data[k] = 0.0;
            }
        }
        delta = std::move(dprev);
    }
    if (dx != nullptr) *dx = std::move(delta);
}

void sgd_step(Mlp& net, const MlpGrads& grads, double lr) {
    for (size_t i = 0; i < net.W.size(); ++i) {
        for (size_t k = 0; k < net.W[i].size(); ++k) net.W[i].data[k] -= lr * grads.W[i].data[k];
        for (size_t k = 0; k < net.b[i].size(); ++k) net.b[i][k] -= lr * grads.b[i][k];
    }
}

double grad_norm(const MlpGrads& grads) {
    double s = 0.0;
    for (const Matrix& g : grads.W)
        for (double v : g.data) s += v * v;
    for (const auto& g : grads.b)
        for (double v : g) s += v * v;
    return std::sqrt(s);
}

void clip_grads(MlpGrads& grads, double max_norm) {
    double n = grad_norm(grads);
    if (n <= max_norm || n == 0.0) return;
    double scale = max_norm / n;
    for (Matrix& g : grads.W)
        for (double& v : g.data) v *= scale;
    for (auto& g : grads.b)
        for (double& v : g) v *= scale;
}

double softmax_xent(const Matrix& logits, const std::vector<int>& labels, Matrix& dlogits) {
    if (logits.rows != labels.size())
        throw std::runtime_error("softmax_xent: " + std::to_string(logits.rows) +
                                 " logit rows vs " + std::to_string(labels.size()) + " labels");
    dlogits = Matrix(logits.rows, logits.cols);
    double loss = 0.0;
    double inv_n = 1.0 / double(logits.rows);
    for (size_t r = 0; r < logits.rows; ++r) {
        int y = labels[r];
        if (y < 0 || size_t(y) >= logits.cols)
            throw std::runtime_error("softmax_xent: label " + std::to_string(y) +
                                     " out of range for " + std::to_string(logits.cols) + " classes");
        double mx = logits(r, 0);
        for (size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, logits(r, c));
        double z = 0.0;
        for (size_t c = 0; c < logits.cols; ++c) z += std::exp(logits(r, c) - mx);
        double logz = std::log(z) + mx;
        loss += (logz - logits(r, size_t(y))) * inv_n;
        for (size_t c = 0; c < logits.cols; ++c) {
            double p = std::exp(logits(r, c) - logz);
            dlogits(r, c) = (p - (size_t(y) == c ? 1.0 : 0.0)) * inv_n;
        }
    }
    return loss;
}

std::vector<double*> param_ptrs(Mlp& net) {
    std::vector<double*> out;
    for (size_t i = 0; i < net.W.size(); ++i) {
        for (double& v : net.W[i].data) out.push_back(&v);
        for (double& v : net.b[i]) out.push_back(&v);
    }
    return out;
}

} // namespace diver
