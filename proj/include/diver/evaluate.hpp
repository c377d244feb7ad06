#pragma once
#include <string>
#include <vector>

#include "diver/dataset.hpp"
#include "diver/nn.hpp"

namespace diver {

struct ArchSpec {
    std::string name;
    std::vector<size_t> hidden_widths; // empty = linear model
    Act activation = Act::Tanh;
    bool rff = false;   // random Fourier feature front end
    size_t rff_dim = 64;
    double rff_bandwidth = 2.0;
    size_t epochs = 600;
    double lr = 0.1;
    bool prior = false; // matches the distillation embedder family; excluded
                        // from the cross-architecture mean
};

// The prior architecture plus four unseen families with distinct inductive
// biases (deep-narrow relu, wide-shallow tanh, random-feature linear, shallow
// relu).
std::vector<ArchSpec> default_zoo();

struct Classifier {
    Mlp net;
    bool rff = false;
    Matrix rff_w;
    std::vector<double> rff_b;
};

Classifier train_classifier(const LabeledDataset& train, const ArchSpec& arch, Rng& rng);
double accuracy(const Classifier& clf, const LabeledDataset& test);

struct ArchResult {
    std::string arch;
    bool prior = false;
    std::vector<double> trial_acc;
    double mean = 0.0;
    double stddev = 0.0;
};

struct EvalReport {
    std::string dataset;
    size_t trials = 0;
    std::vector<ArchResult> rows;
    double cross_arch_mean = 0.0; // mean of per-arch means over non-prior rows
    double nn_spread = 0.0;       // mean nearest-neighbor distance inside the candidate
};

// Trains `trials` fresh classifiers per architecture on the candidate and
// scores them on the test split. All randomness derives from (seed, arch
// index, trial).
EvalReport evaluate_dataset(const LabeledDataset& candidate, const LabeledDataset& test,
                            const std::vector<ArchSpec>& archs, size_t trials, uint64_t seed);

// CSV with one row per (dataset, arch, trial) plus a human-readable summary
// table written next to it (<path>.summary.txt). Deterministic bytes.
void emit_report(const std::vector<EvalReport>& reports, const std::string& path);
std::string format_summary(const std::vector<EvalReport>& reports);

// Self-contained SVG scatter of the first two feature dims, one color per class.
void emit_scatter(const LabeledDataset& ds, const std::string& path);

} // namespace diver
