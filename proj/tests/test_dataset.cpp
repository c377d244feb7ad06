#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include "diver/dataset.hpp"

using namespace diver;

namespace {

DataSpec ring_spec(int C, int ppc, int dim, double noise, uint64_t seed) {
    DataSpec s;
    s.family = "gaussian-ring";
    s.num_classes = C;
    s.points_per_class = ppc;
    s.dim = dim;
    s.noise_std = noise;
    s.seed = seed;
    return s;
}

std::string tmp_path(const char* stem) {
    return std::string("/tmp/diver_test_") + stem + "_" + std::to_string(getpid()) + ".bin";
}

} // namespace

TEST_CASE("zero noise pins points to the class means") {
    LabeledDataset ds = generate(ring_spec(2, 1, 2, 0.0, 7));
    REQUIRE(ds.n() == 2);
    REQUIRE(ds.dim() == 2);
    CHECK(ds.features(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(std::abs(ds.features(0, 1)) < 1e-12);
    CHECK(ds.features(1, 0) == doctest::Approx(-4.0).epsilon(1e-12));
    CHECK(std::abs(ds.features(1, 1)) < 1e-12);
    CHECK(ds.labels == std::vector<int>{0, 1});
}

TEST_CASE("noisy ring matches its generating moments") {
    const int C = 8, ppc = 1000, d = 2;
    const double noise = 0.5;
    LabeledDataset ds = generate(ring_spec(C, ppc, d, noise, 11));
    REQUIRE(ds.n() == size_t(C) * ppc);

    const double two_pi = 8.0 * std::atan(1.0);
    for (int c = 0; c < C; ++c) {
        double mu0 = 4.0 * std::cos(two_pi * c / C);
        double mu1 = 4.0 * std::sin(two_pi * c / C);
        double m[2] = {0, 0}, sq[2] = {0, 0};
        for (int i = 0; i < ppc; ++i) {
            size_t r = size_t(c) * ppc + i;
            REQUIRE(ds.labels[r] == c);
            for (int j = 0; j < d; ++j) m[j] += ds.features(r, j);
        }
        m[0] /= ppc;
        m[1] /= ppc;
        CHECK(std::abs(m[0] - mu0) < 0.05);
        CHECK(std::abs(m[1] - mu1) < 0.05);
        for (int i = 0; i < ppc; ++i) {
            size_t r = size_t(c) * ppc + i;
            for (int j = 0; j < d; ++j) {
                double dvj = ds.features(r, j) - m[j];
                sq[j] += dvj * dvj;
            }
        }
        // sample variance of 1000 draws has sd ~= 0.25 * sqrt(2/999); +-20% is 4+ SE
        for (int j = 0; j < d; ++j) {
            double var = sq[j] / (ppc - 1);
            CHECK(var > 0.25 * 0.8);
            CHECK(var < 0.25 * 1.2);
        }
    }
}

TEST_CASE("extra dimensions carry zero-mean noise only") {
    LabeledDataset ds = generate(ring_spec(4, 500, 6, 0.5, 3));
    for (int j = 2; j < 6; ++j) {
        double m = 0.0;
        for (size_t r = 0; r < ds.n(); ++r) m += ds.features(r, j);
        m /= double(ds.n());
        CHECK(std::abs(m) < 0.05);
    }
}

TEST_CASE("generation is reproducible and seed-sensitive") {
    LabeledDataset a = generate(ring_spec(3, 20, 4, 0.3, 42));
    LabeledDataset b = generate(ring_spec(3, 20, 4, 0.3, 42));
    LabeledDataset c = generate(ring_spec(3, 20, 4, 0.3, 43));
    CHECK(a.features.data == b.features.data);
    CHECK(a.features.data != c.features.data);
}

TEST_CASE("all three families produce valid finite data") {
    for (const char* fam : {"gaussian-ring", "concentric-rings", "spirals"}) {
        DataSpec s = ring_spec(3, 50, 2, 0.2, 5);
        s.family = fam;
        LabeledDataset ds = generate(s);
        CHECK_NOTHROW(ds.validate());
        CHECK(ds.name == fam);
    }
    DataSpec bad = ring_spec(2, 5, 2, 0.1, 1);
    bad.family = "mystery";
    CHECK_THROWS_WITH(generate(bad), "generate: unknown family 'mystery'");
}

TEST_CASE("validate rejects malformed datasets") {
    LabeledDataset ds = generate(ring_spec(2, 3, 2, 0.1, 9));
    SUBCASE("label count mismatch") {
        ds.labels.pop_back();
        CHECK_THROWS(ds.validate());
    }
    SUBCASE("label out of range") {
        ds.labels[0] = 2;
        CHECK_THROWS(ds.validate());
    }
    SUBCASE("non-finite feature") {
        ds.features(1, 1) = std::nan("");
        CHECK_THROWS(ds.validate());
    }
}

TEST_CASE("split is stratified, disjoint, and exhaustive") {
    LabeledDataset ds = generate(ring_spec(3, 10, 2, 0.4, 17));
    auto [train, test] = split(ds, 0.8, 99);
    CHECK(train.name == "gaussian-ring-train");
    CHECK(test.name == "gaussian-ring-test");
    CHECK(train.n() == 24);
    CHECK(test.n() == 6);

    // per-class counts: 8 train / 2 test each
    std::vector<int> tr_counts(3, 0), te_counts(3, 0);
    for (int l : train.labels) ++tr_counts[l];
    for (int l : test.labels) ++te_counts[l];
    for (int c = 0; c < 3; ++c) {
        CHECK(tr_counts[c] == 8);
        CHECK(te_counts[c] == 2);
    }

    // every original row appears exactly once across the two halves
    auto key = [](const LabeledDataset& d, size_t r) {
        return std::to_string(d.features(r, 0)) + "," + std::to_string(d.features(r, 1));
    };
    std::multiset<std::string> seen;
    for (size_t r = 0; r < train.n(); ++r) seen.insert(key(train, r));
    for (size_t r = 0; r < test.n(); ++r) seen.insert(key(test, r));
    std::multiset<std::string> orig;
    for (size_t r = 0; r < ds.n(); ++r) orig.insert(key(ds, r));
    CHECK(seen == orig);

    // same seed reproduces the same split
    auto [tr2, te2] = split(ds, 0.8, 99);
    CHECK(tr2.features.data == train.features.data);
    CHECK(te2.labels == test.labels);
}

TEST_CASE("split rejects bad fractions and tiny classes") {
    LabeledDataset ds = generate(ring_spec(2, 4, 2, 0.1, 1));
    CHECK_THROWS_WITH(split(ds, 0.0, 1), "split: train_fraction must be in (0, 1)");
    CHECK_THROWS_WITH(split(ds, 1.0, 1), "split: train_fraction must be in (0, 1)");

    LabeledDataset tiny;
    tiny.features = Matrix(3, 2);
    tiny.labels = {0, 0, 1}; // class 1 has a single point
    tiny.num_classes = 2;
    tiny.name = "tiny";
    CHECK_THROWS_WITH(split(tiny, 0.5, 1), "split: class 1 has fewer than 2 points");
}

TEST_CASE("save and load round-trip a dataset exactly") {
    LabeledDataset ds = generate(ring_spec(3, 7, 5, 0.3, 23));
    const std::string path = tmp_path("roundtrip");
    save(ds, path);
    LabeledDataset back = load(path);
    CHECK(back.name == ds.name);
    CHECK(back.num_classes == ds.num_classes);
    CHECK(back.labels == ds.labels);
    CHECK(back.features.rows == ds.features.rows);
    CHECK(back.features.cols == ds.features.cols);
    CHECK(back.features.data == ds.features.data); // bitwise
    std::remove(path.c_str());
}

TEST_CASE("load rejects truncated and padded files") {
    LabeledDataset ds = generate(ring_spec(2, 3, 2, 0.2, 8));
    const std::string path = tmp_path("corrupt");
    save(ds, path);

    // read the whole file once
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    SUBCASE("payload cut short") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), std::streamsize(bytes.size() - 8));
        out.close();
        CHECK_THROWS_AS(load(path), std::runtime_error);
        try {
            load(path);
        } catch (const std::exception& e) {
            CHECK(std::string(e.what()).find("expected") != std::string::npos);
        }
    }
    SUBCASE("trailing garbage") {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out.write("x", 1);
        out.close();
        try {
            load(path);
            FAIL("expected load to reject trailing bytes");
        } catch (const std::exception& e) {
            CHECK(std::string(e.what()).find("trailing bytes") != std::string::npos);
        }
    }
    std::remove(path.c_str());
}
