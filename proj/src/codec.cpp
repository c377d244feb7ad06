#include "diver/codec.hpp"

#include <cmath>
#include <stdexcept>

#include "diver/checkpoint.hpp"

namespace diver {

static constexpr size_t kCodecWidth = 32;

Codec make_identity_codec(size_t dim) {
    Codec c;
    c.identity = true;
    c.data_dim = dim;
    c.latent_dim = dim;
    return c;
}

static double mse_between(const Matrix& a, const Matrix& b) {
    double s = 0.0;
    for (size_t k = 0; k < a.size(); ++k) {
        double d = a.data[k] - b.data[k];
        s += d * d;
    }
    return s / double(a.size());
}

Codec train_codec(const LabeledDataset& data, size_t latent_dim, size_t epochs, double lr,
                  uint64_t seed) {
    if (latent_dim < 1) throw std::runtime_error("train_codec: latent_dim must be >= 1");
    if (data.n() == 0) throw std::runtime_error("train_codec: empty dataset");
    size_t d = data.dim();

    Codec c;
    c.data_dim = d;
    c.latent_dim = latent_dim;
    Rng rng(seed);
    c.enc = make_mlp({d, kCodecWidth, latent_dim}, Act::Tanh, rng);
    c.dec = make_mlp({latent_dim, kCodecWidth, d}, Act::Tanh, rng);
    c.mu.assign(latent_dim, 0.0);
    c.sd.assign(latent_dim, 1.0);

    const Matrix& x = data.features;
    MlpCache ec, dc;
    MlpGrads eg, dg;
    double loss = 0.0;
    for (size_t epoch = 0; epoch < epochs; ++epoch) {
        const Matrix& z = mlp_forward(c.enc, x, ec);
        const Matrix& r = mlp_forward(c.dec, z, dc);
        loss = mse_between(r, x);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_codec: loss diverged at epoch " +
                                     std::to_string(epoch));
        Matrix dr(r.rows, r.cols);
        double scale = 2.0 / double(r.size());
        for (size_t k = 0; k < r.size(); ++k) dr.data[k] = scale * (r.data[k] - x.data[k]);
        zero_grads(c.dec, dg);
        zero_grads(c.enc, eg);
        Matrix dz;
        mlp_backward(c.dec, dc, dr, dg, &dz);
        mlp_backward(c.enc, ec, dz, eg, nullptr);
        sgd_step(c.dec, dg, lr);
        sgd_step(c.enc, eg, lr);
    }

    // Record the loss of the returned parameters (equals the initial loss when
    // epochs=0), then fit the latent standardization on the training latents.
    const Matrix& zf = mlp_forward(c.enc, x, ec);
    const Matrix& rf = mlp_forward(c.dec, zf, dc);
    c.final_loss = mse_between(rf, x);
    for (size_t j = 0; j < latent_dim; ++j) {
        double m = 0.0;
        for (size_t i = 0; i < zf.rows; ++i) m += zf(i, j);
        m /= double(zf.rows);
        double v = 0.0;
        for (size_t i = 0; i < zf.rows; ++i) {
            double e = zf(i, j) - m;
            v += e * e;
        }
        v /= double(zf.rows);
        c.mu[j] = m;
        c.sd[j] = std::sqrt(v) > 1e-12 ? std::sqrt(v) : 1.0;
    }
    return c;
}

Matrix encode(const Codec& codec, const Matrix& x) {
    if (x.cols != codec.data_dim)
        throw std::runtime_error("encode: input dim " + std::to_string(x.cols) +
                                 " vs codec data dim " + std::to_string(codec.data_dim));
    if (codec.identity) return x;
    MlpCache cache;
    Matrix z = mlp_forward(codec.enc, x, cache);
    for (size_t i = 0; i < z.rows; ++i)
        for (size_t j = 0; j < z.cols; ++j) z(i, j) = (z(i, j) - codec.mu[j]) / codec.sd[j];
    return z;
}

Matrix decode(const Codec& codec, const Matrix& z) {
    if (z.cols != codec.latent_dim)
        throw std::runtime_error("decode: input dim " + std::to_string(z.cols) +
                                 " vs codec latent dim " + std::to_string(codec.latent_dim));
    if (codec.identity) return z;
    Matrix zr = z;
    for (size_t i = 0; i < zr.rows; ++i)
        for (size_t j = 0; j < zr.cols; ++j) zr(i, j) = zr(i, j) * codec.sd[j] + codec.mu[j];
    MlpCache cache;
    return mlp_forward(codec.dec, zr, cache);
}

std::vector<double> encode(const Codec& codec, const std::vector<double>& x) {
    Matrix m(1, x.size());
    m.data = x;
    Matrix z = encode(codec, m);
    return z.data;
}

std::vector<double> decode(const Codec& codec, const std::vector<double>& z) {
    Matrix m(1, z.size());
    m.data = z;
    Matrix x = decode(codec, m);
    return x.data;
}

double reconstruction_mse(const Codec& codec, const Matrix& x) {
    Matrix r = decode(codec, encode(codec, x));
    return mse_between(r, x);
}

static void push_mlp(Checkpoint& ckpt, const std::string& prefix, const Mlp& net) {
    for (size_t i = 0; i < net.W.size(); ++i) {
        ckpt.tensors.push_back({prefix + ".W" + std::to_string(i),
                                {net.W[i].rows, net.W[i].cols}, net.W[i].data});
        ckpt.tensors.push_back({prefix + ".b" + std::to_string(i), {net.b[i].size()}, net.b[i]});
    }
}

static Mlp pull_mlp(const Checkpoint& ckpt, const std::string& prefix, size_t layers, Act act) {
    Mlp net;
    net.act = act;
    for (size_t i = 0; i < layers; ++i) {
        const NamedTensor& w = ckpt.get(prefix + ".W" + std::to_string(i));
        const NamedTensor& b = ckpt.get(prefix + ".b" + std::to_string(i));
        if (w.shape.size() != 2)
            throw std::runtime_error("tensor '" + w.name + "' is not a matrix");
        Matrix m(w.shape[0], w.shape[1]);
        m.data = w.data;
        net.W.push_back(std::move(m));
        net.b.push_back(b.data);
    }
    return net;
}

void save_codec(const std::string& path, const Codec& codec) {
    Checkpoint ckpt;
    ckpt.meta = {{"kind", "codec"},
                 {"mode", codec.identity ? "identity" : "learned"},
                 {"data_dim", codec.data_dim},
                 {"latent_dim", codec.latent_dim},
                 {"final_loss", codec.final_loss}};
    if (!codec.identity) {
        push_mlp(ckpt, "enc", codec.enc);
        push_mlp(ckpt, "dec", codec.dec);
        ckpt.tensors.push_back({"latent_mu", {codec.mu.size()}, codec.mu});
        ckpt.tensors.push_back({"latent_sd", {codec.sd.size()}, codec.sd});
    }
    save_checkpoint(path, ckpt);
}

Codec load_codec(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.meta.value("kind", "") != "codec")
        throw std::runtime_error(path + " is not a codec checkpoint");
    Codec c;
    c.data_dim = ckpt.meta.at("data_dim").get<size_t>();
    c.latent_dim = ckpt.meta.at("latent_dim").get<size_t>();
    c.final_loss = ckpt.meta.value("final_loss", 0.0);
    c.identity = ckpt.meta.at("mode").get<std::string>() == "identity";
    if (!c.identity) {
        c.enc = pull_mlp(ckpt, "enc", 2, Act::Tanh);
        c.dec = pull_mlp(ckpt, "dec", 2, Act::Tanh);
        c.mu = ckpt.get("latent_mu").data;
        c.sd = ckpt.get("latent_sd").data;
    }
    return c;
}

} // namespace diver
