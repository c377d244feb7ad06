#include "diver/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "diver/rng.hpp"

namespace diver {

using nlohmann::json;

void LabeledDataset::validate() const {
    if (features.rows == 0 || features.cols == 0)
        throw std::runtime_error("dataset '" + name + "': empty feature matrix");
    if (labels.size() != features.rows)
        throw std::runtime_error("dataset '" + name + "': " + std::to_string(labels.size()) +
                                 " labels for " + std::to_string(features.rows) + " rows");
    if (num_classes < 1)
        throw std::runtime_error("dataset '" + name + "': num_classes must be positive");
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw std::runtime_error("dataset '" + name + "': label " + std::to_string(labels[i]) +
                                     " at row " + std::to_string(i) + " outside [0, " +
                                     std::to_string(num_classes) + ")");
    for (double v : features.data)
        if (!std::isfinite(v))
            throw std::runtime_error("dataset '" + name + "': non-finite feature value");
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Class structure lives in the first two coordinates; noise is isotropic in all
// of them. Extra dimensions beyond the structural plane carry pure noise, which
// is what gives the codec something real to filter.
void class_mean(const std::string& family, int c, int C, double t, double* mu, int d) {
    for (int j = 0; j < d; ++j) mu[j] = 0.0;
    if (family == "gaussian-ring") {
        const double th = kTwoPi * c / C;
        mu[0] = 4.0 * std::cos(th);
        if (d > 1) mu[1] = 4.0 * std::sin(th);
    } else if (family == "concentric-rings") {
        // class c sits on a circle of radius 2(c+1); t in [0,1) walks the circle
        const double r = 2.0 * (c + 1);
        mu[0] = r * std::cos(kTwoPi * t);
        if (d > 1) mu[1] = r * std::sin(kTwoPi * t);
    } else {
        // interleaved Archimedean spirals: angle offset per class, radius grows with t
        const double th = kTwoPi * c / C + 1.5 * kTwoPi * t;
        const double r = 1.0 + 3.0 * t;
        mu[0] = r * std::cos(th);
        if (d > 1) mu[1] = r * std::sin(th);
    }
}

} // namespace

LabeledDataset generate(const DataSpec& spec) {
    if (spec.family != "gaussian-ring" && spec.family != "concentric-rings" &&
        spec.family != "spirals")
        throw std::runtime_error("generate: unknown family '" + spec.family + "'");
    if (spec.points_per_class < 1)
        throw std::runtime_error("generate: points_per_class must be >= 1");
    if (spec.num_classes < 1 || spec.dim < 1)
        throw std::runtime_error("generate: num_classes and dim must be >= 1");
    if (!(spec.noise_std >= 0.0))
        throw std::runtime_error("generate: noise_std must be >= 0");

    const int C = spec.num_classes;
    const int ppc = spec.points_per_class;
    const int d = spec.dim;
    LabeledDataset ds;
    ds.features = Matrix(static_cast<size_t>(C) * ppc, d);
    ds.labels.resize(static_cast<size_t>(C) * ppc);
    ds.num_classes = C;
    ds.name = spec.family;

    Rng root(spec.seed);
    std::vector<double> mu(d);
    for (int c = 0; c < C; ++c) {
        Rng cls = root.stream(static_cast<uint64_t>(c));
        for (int i = 0; i < ppc; ++i) {
            const size_t r = static_cast<size_t>(c) * ppc + i;
            const double t = (ppc > 1) ? static_cast<double>(i) / ppc : 0.0;
            class_mean(spec.family, c, C, t, mu.data(), d);
            double* row = ds.features.row(r);
            for (int j = 0; j < d; ++j)
                row[j] = mu[j] + spec.noise_std * cls.normal();
            ds.labels[r] = c;
        }
    }

    // Rows stay in class-block order; consumers that need shuffled access
    // (mini-batch training, splits) randomize on their side.
    return ds;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds,
                                                double train_fraction, uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::runtime_error("split: train_fraction must be in (0, 1)");
    ds.validate();

    std::vector<std::vector<size_t>> by_class(ds.num_classes);
    for (size_t i = 0; i < ds.n(); ++i)
        by_class[ds.labels[i]].push_back(i);
    for (int c = 0; c < ds.num_classes; ++c)
        if (by_class[c].size() < 2)
            throw std::runtime_error("split: class " + std::to_string(c) +
                                     " has fewer than 2 points");

    Rng rng(seed);
    std::vector<size_t> train_idx, test_idx;
    for (int c = 0; c < ds.num_classes; ++c) {
        auto& idx = by_class[c];
        Rng cls = rng.stream(static_cast<uint64_t>(c));
        // Fisher-Yates
        for (size_t i = idx.size() - 1; i > 0; --i)
            std::swap(idx[i], idx[cls.below(i + 1)]);
        size_t k = static_cast<size_t>(train_fraction * idx.size() + 0.5);
        k = std::min(std::max<size_t>(k, 1), idx.size() - 1);
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + k);
        test_idx.insert(test_idx.end(), idx.begin() + k, idx.end());
    }

    auto take = [&](const std::vector<size_t>& idx, const std::string& suffix) {
        LabeledDataset out;
        out.features = Matrix(idx.size(), ds.dim());
        out.labels.resize(idx.size());
        out.num_classes = ds.num_classes;
        out.name = ds.name + suffix;
        for (size_t i = 0; i < idx.size(); ++i) {
            std::memcpy(out.features.row(i), ds.features.row(idx[i]), ds.dim() * sizeof(double));
            out.labels[i] = ds.labels[idx[i]];
        }
        return out;
    };
    return {take(train_idx, "-train"), take(test_idx, "-test")};
}

void save(const LabeledDataset& ds, const std::string& path) {
    ds.validate();
    json header;
    header["name"] = ds.name;
    header["n"] = ds.n();
    header["d"] = ds.dim();
    header["C"] = ds.num_classes;
    header["labels"] = ds.labels;
    const std::string htext = header.dump();
    if (htext.size() > UINT32_MAX)
        throw std::runtime_error("save: header too large");

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save: cannot open '" + path + "' for writing");
    const uint32_t hlen = static_cast<uint32_t>(htext.size());
    unsigned char lenle[4] = {static_cast<unsigned char>(hlen & 0xff),
                              static_cast<unsigned char>((hlen >> 8) & 0xff),
                              static_cast<unsigned char>((hlen >> 16) & 0xff),
                              static_cast<unsigned char>((hlen >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(lenle), 4);
    f.write(htext.data(), htext.size());
    // Doubles are written verbatim; this code assumes a little-endian host, as
    // does the checkpoint writer.
    f.write(reinterpret_cast<const char*>(ds.features.data.data()),
            static_cast<std::streamsize>(ds.features.size() * sizeof(double)));
    if (!f) throw std::runtime_error("save: write failed for '" + path + "'");
}

LabeledDataset load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load: cannot open '" + path + "'");
    unsigned char lenle[4];
    if (!f.read(reinterpret_cast<char*>(lenle), 4))
        throw std::runtime_error("load: '" + path + "' shorter than header length field");
    const uint32_t hlen = static_cast<uint32_t>(lenle[0]) | (static_cast<uint32_t>(lenle[1]) << 8) |
                          (static_cast<uint32_t>(lenle[2]) << 16) |
                          (static_cast<uint32_t>(lenle[3]) << 24);
    std::string htext(hlen, '\0');
    if (!f.read(htext.data(), hlen))
        throw std::runtime_error("load: '" + path + "' truncated inside header");

    json header;
    try {
        header = json::parse(htext);
    } catch (const std::exception& e) {
        throw std::runtime_error("load: malformed header in '" + path + "': " + e.what());
    }

    LabeledDataset ds;
    ds.name = header.at("name").get<std::string>();
    const size_t n = header.at("n").get<size_t>();
    const size_t d = header.at("d").get<size_t>();
    ds.num_classes = header.at("C").get<int>();
    ds.labels = header.at("labels").get<std::vector<int>>();
    if (ds.labels.size() != n)
        throw std::runtime_error("load: header n=" + std::to_string(n) + " but " +
                                 std::to_string(ds.labels.size()) + " labels");

    ds.features = Matrix(n, d);
    const std::streamsize want =
        static_cast<std::streamsize>(ds.features.size() * sizeof(double));
    f.read(reinterpret_cast<char*>(ds.features.data.data()), want);
    if (f.gcount() != want)
        throw std::runtime_error("load: '" + path + "' payload " + std::to_string(f.gcount()) +
                                 " bytes, expected " + std::to_string(want) +
                                 " (header shape " + std::to_string(n) + "x" + std::to_string(d) +
                                 ")");
    char extra;
    if (f.read(&extra, 1))
        throw std::runtime_error("load: '" + path + "' has trailing bytes beyond " +
                                 std::to_string(want) + "-byte payload");
    ds.validate();
    return ds;
}

} // namespace diver
