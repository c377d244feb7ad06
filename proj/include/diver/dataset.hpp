#pragma once
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "diver/tensor.hpp"

namespace diver {

struct LabeledDataset {
    Matrix features;             // n x d
    std::vector<int> labels;     // n entries in [0, num_classes)
    int num_classes = 0;
    std::string name;

    size_t n() const { return features.rows; }
    size_t dim() const { return features.cols; }
    void validate() const;       // throws on any broken invariant
};

struct DataSpec {
    std::string family = "gaussian-ring";   // gaussian-ring | concentric-rings | spirals
    int num_classes = 8;
    int points_per_class = 1000;
    int dim = 2;
    double noise_std = 0.5;
    uint64_t seed = 1;
};

// Deterministic synthetic dataset: identical spec -> bit-identical output.
LabeledDataset generate(const DataSpec& spec);

// Stratified per-class split; the union of the two halves is the input as a multiset.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds,
                                                double train_fraction, uint64_t seed);

// File format: u32 LE header length, UTF-8 JSON header (name, n, d, C, labels),
// then n*d little-endian IEEE-754 doubles, row-major. Round-trip is bit-exact.
void save(const LabeledDataset& ds, const std::string& path);
LabeledDataset load(const std::string& path);

} // namespace diver
