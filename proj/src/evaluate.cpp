#include "diver/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace diver {

std::vector<ArchSpec> default_zoo() {
    std::vector<ArchSpec> zoo;
    ArchSpec prior;
    prior.name = "prior-tanh64";
    prior.hidden_widths = {64};
    prior.activation = Act::Tanh;
    prior.epochs = 600;
    prior.lr = 0.1;
    prior.prior = true;
    zoo.push_back(prior);

    ArchSpec deep;
    deep.name = "relu16x3";
    deep.hidden_widths = {16, 16, 16};
    deep.activation = Act::Relu;
    deep.epochs = 800;
    deep.lr = 0.05;
    zoo.push_back(deep);

    ArchSpec wide;
    wide.name = "tanh128";
    wide.hidden_widths = {128};
    wide.activation = Act::Tanh;
    wide.epochs = 600;
    wide.lr = 0.1;
    zoo.push_back(wide);

    ArchSpec rff;
    rff.name = "rff-linear";
    rff.rff = true;
    rff.rff_dim = 64;
    rff.rff_bandwidth = 2.0;
    rff.epochs = 600;
    rff.lr = 0.2;
    zoo.push_back(rff);

    ArchSpec shallow;
    shallow.name = "relu32x2";
    shallow.hidden_widths = {32, 32};
    shallow.activation = Act::Relu;
    shallow.epochs = 800;
    shallow.lr = 0.05;
    zoo.push_back(shallow);
    return zoo;
}

static Matrix rff_features(const Classifier& clf, const Matrix& x) {
    Matrix proj;
    matmul(x, clf.rff_w, proj);
    double scale = std::sqrt(2.0 / double(clf.rff_w.cols));
    for (size_t i = 0; i < proj.rows; ++i)
        for (size_t j = 0; j < proj.cols; ++j)
            proj(i, j) = scale * std::cos(proj(i, j) + clf.rff_b[j]);
    return proj;
}

Classifier train_classifier(const LabeledDataset& train, const ArchSpec& arch, Rng& rng) {
    if (train.n() == 0) throw std::runtime_error("train_classifier: empty training set");
    size_t d = train.dim();
    size_t C = size_t(train.num_classes);

    Classifier clf;
    size_t in = d;
    if (arch.rff) {
        clf.rff = true;
        clf.rff_w = Matrix(d, arch.rff_dim);
        for (double& v : clf.rff_w.data) v = rng.normal() / arch.rff_bandwidth;
        clf.rff_b.resize(arch.rff_dim);
        for (double& v : clf.rff_b) v = rng.uniform() * 2.0 * 3.14159265358979323846;
        in = arch.rff_dim;
    }
    std::vector<size_t> dims;
    dims.push_back(in);
    for (size_t w : arch.hidden_widths) dims.push_back(w);
    dims.push_back(C);
    clf.net = make_mlp(dims, arch.activation, rng);

    Matrix x = clf.rff ? rff_features(clf, train.features) : train.features;
    MlpCache cache;
    MlpGrads grads;
    Matrix dlogits;
    for (size_t epoch = 0; epoch < arch.epochs; ++epoch) {
        const Matrix& logits = mlp_forward(clf.net, x, cache);
        double loss = softmax_xent(logits, train.labels, dlogits);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_classifier: loss diverged at epoch " +
                                     std::to_string(epoch));
        zero_grads(clf.net, grads);
        mlp_backward(clf.net, cache, dlogits, grads, nullptr);
        sgd_step(clf.net, grads, arch.lr);
    }
    return clf;
}

double accuracy(const Classifier& clf, const LabeledDataset& test) {
    Matrix x = clf.rff ? rff_features(clf, test.features) : test.features;
    MlpCache cache;
    const Matrix& logits = mlp_forward(clf.net, x, cache);
    size_t hits = 0;
    for (size_t i = 0; i < logits.rows; ++i) {
        size_t best = 0;
        for (size_t c = 1; c < logits.cols; ++c)
            if (logits(i, c) > logits(i, best)) best = c;
        if (int(best) == test.labels[i]) ++hits;
    }
    return double(hits) / double(logits.rows);
}

static double nn_spread(const LabeledDataset& ds) {
    size_t n = ds.n();
    if (n < 2) return 0.0;
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double s = 0.0;
            for (size_t k = 0; k < ds.dim(); ++k) {
                double diff = ds.features(i, k) - ds.features(j, k);
                s += diff * diff;
            }
            best = std::min(best, s);
        }
        total += std::sqrt(best);
    }
    return total / double(n);
}

EvalReport evaluate_dataset(const LabeledDataset& candidate, const LabeledDataset& test,
                            const std::vector<ArchSpec>& archs, size_t trials, uint64_t seed) {
    if (candidate.num_classes != test.num_classes || candidate.dim() != test.dim())
        throw std::runtime_error("evaluate_dataset: candidate and test shapes differ");
    if (trials < 1) throw std::runtime_error("evaluate_dataset: trials must be >= 1");

    EvalReport report;
    report.dataset = candidate.name;
    report.trials = trials;
    report.nn_spread = nn_spread(candidate);

    Rng root(seed);
    double unseen_sum = 0.0;
    size_t unseen_count = 0;
    for (size_t a = 0; a < archs.size(); ++a) {
        ArchResult row;
        row.arch = archs[a].name;
        row.prior = archs[a].prior;
        Rng arch_rng = root.stream(a);
        for (size_t t = 0; t < trials; ++t) {
            Rng trial_rng = arch_rng.stream(t);
            Classifier clf;
            try {
                clf = train_classifier(candidate, archs[a], trial_rng);
            } catch (const std::exception& e) {
                throw std::runtime_error("evaluate_dataset: arch " + archs[a].name + ", trial " +
                                         std::to_string(t) + ": " + e.what());
            }
            row.trial_acc.push_back(accuracy(clf, test));
        }
        double m = 0.0;
        for (double v : row.trial_acc) m += v;
        m /= double(trials);
        double var = 0.0;
        for (double v : row.trial_acc) var += (v - m) * (v - m);
        row.mean = m;
        row.stddev = std::sqrt(var / double(trials));
        if (!row.prior) {
            unseen_sum += m;
            ++unseen_count;
        }
        report.rows.push_back(std::move(row));
    }
    if (unseen_count > 0) report.cross_arch_mean = unseen_sum / double(unseen_count);
    return report;
}

static std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void emit_report(const std::vector<EvalReport>& reports, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "dataset,arch,trial,accuracy\n";
    for (const EvalReport& r : reports)
        for (const ArchResult& row : r.rows)
            for (size_t t = 0; t < row.trial_acc.size(); ++t)
                out << r.dataset << ',' << row.arch << ',' << t << ',' << fmt(row.trial_acc[t])
                    << '\n';
    if (!out) throw std::runtime_error("write to " + path + " failed");
    out.close();

    std::ofstream sum(path + ".summary.txt", std::ios::binary);
    if (!sum) throw std::runtime_error("cannot open " + path + ".summary.txt for writing");
    sum << format_summary(reports);
}

std::string format_summary(const std::vector<EvalReport>& reports) {
    std::string s;
    char buf[256];
    for (const EvalReport& r : reports) {
        std::snprintf(buf, sizeof buf, "%-14s cross_arch_mean=%s nn_spread=%s trials=%zu\n",
                      r.dataset.c_str(), fmt(r.cross_arch_mean).c_str(), fmt(r.nn_spread).c_str(),
                      r.trials);
        s += buf;
        for (const ArchResult& row : r.rows) {
            std::snprintf(buf, sizeof buf, "  %-12s %s +/- %s%s\n", row.arch.c_str(),
                          fmt(row.mean).c_str(), fmt(row.stddev).c_str(),
                          row.prior ? "  (prior)" : "");
            s += buf;
        }
    }
    return s;
}

void emit_scatter(const LabeledDataset& ds, const std::string& path) {
    static const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
                                     "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd"};
    constexpr size_t kPaletteN = sizeof(kPalette) / sizeof(kPalette[0]);
    if (ds.dim() < 2) throw std::runtime_error("emit_scatter: need at least 2 feature dims");

    double xmin = ds.features(0, 0), xmax = xmin;
    double ymin = ds.features(0, 1), ymax = ymin;
    for (size_t i = 0; i < ds.n(); ++i) {
        xmin = std::min(xmin, ds.features(i, 0));
        xmax = std::max(xmax, ds.features(i, 0));
        ymin = std::min(ymin, ds.features(i, 1));
        ymax = std::max(ymax, ds.features(i, 1));
    }
    double mx = xmax > xmin ? 0.1 * (xmax - xmin) : 1.0;
    double my = ymax > ymin ? 0.1 * (ymax - ymin) : 1.0;
    xmin -= mx;
    xmax += mx;
    ymin -= my;
    ymax += my;

    constexpr double kSide = 640.0;
    double sx = kSide / (xmax - xmin);
    double sy = kSide / (ymax - ymin);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" "
                  "viewBox=\"0 0 %g %g\">\n",
                  kSide, kSide, kSide, kSide);
    out << buf;
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (size_t i = 0; i < ds.n(); ++i) {
        double cx = (ds.features(i, 0) - xmin) * sx;
        double cy = kSide - (ds.features(i, 1) - ymin) * sy; // flip: data y grows upward
        const char* color = kPalette[size_t(ds.labels[i]) % kPaletteN];
        std::snprintf(buf, sizeof buf,
                      "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.8\"/>\n",
                      cx, cy, color);
        out << buf;
    }
    out << "</svg>\n";
    if (!out) throw std::runtime_error("write to " + path + " failed");
}

} // namespace diver
