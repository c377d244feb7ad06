#pragma once
#include <string>

#include "diver/dataset.hpp"
#include "diver/nn.hpp"
#include "diver/tensor.hpp"

namespace diver {

// Encoder/decoder pair mapping data space to a compact latent space. The
// identity mode bypasses both networks (useful for running the rest of the
// pipeline directly in data space).
struct Codec {
    bool identity = false;
    size_t data_dim = 0;
    size_t latent_dim = 0;
    Mlp enc; // data_dim -> 32 -> latent_dim, tanh hidden
    Mlp dec; // latent_dim -> 32 -> data_dim, tanh hidden
    // Per-dimension affine standardization of the raw encoder output, fitted on
    // the training latents so downstream consumers see roughly unit scale.
    std::vector<double> mu, sd;
    double final_loss = 0.0;
};

Codec make_identity_codec(size_t dim);

// Full-batch gradient descent on mean squared reconstruction error (averaged
// over every element). Throws if the loss goes non-finite, naming the epoch.
Codec train_codec(const LabeledDataset& data, size_t latent_dim, size_t epochs, double lr,
                  uint64_t seed);

Matrix encode(const Codec& codec, const Matrix& x);
Matrix decode(const Codec& codec, const Matrix& z);
std::vector<double> encode(const Codec& codec, const std::vector<double>& x);
std::vector<double> decode(const Codec& codec, const std::vector<double>& z);

// Mean squared error per element between decode(encode(x)) and x.
double reconstruction_mse(const Codec& codec, const Matrix& x);

void save_codec(const std::string& path, const Codec& codec);
Codec load_codec(const std::string& path);

} // namespace diver
