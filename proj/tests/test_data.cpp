#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "adagat/data.hpp"
#include "doctest.h"

using namespace adagat;
using namespace adagat::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static const fs::path dir = [] {
        auto p = fs::temp_directory_path() /
                 ("adagat_data_test_" + std::to_string(::getpid()));
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void push_u32_be(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

std::vector<unsigned char> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                      unsigned char fill) {
    std::vector<unsigned char> v;
    push_u32_be(v, 0x00000803u);
    push_u32_be(v, n);
    push_u32_be(v, rows);
    push_u32_be(v, cols);
    v.insert(v.end(), static_cast<std::size_t>(n) * rows * cols, fill);
    return v;
}

std::vector<unsigned char> idx_labels(const std::vector<unsigned char>& labels) {
    std::vector<unsigned char> v;
    push_u32_be(v, 0x00000801u);
    push_u32_be(v, static_cast<std::uint32_t>(labels.size()));
    v.insert(v.end(), labels.begin(), labels.end());
    return v;
}

}  // namespace

TEST_CASE("two_moons with zero noise sits exactly on two unit half-circles") {
    const Dataset ds = make_synthetic(SyntheticKind::two_moons, 200, 2, 0.0, 5);
    REQUIRE(ds.size() == 200);
    int count0 = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double x = ds.inputs[2 * i];
        const double y = ds.inputs[2 * i + 1];
        if (ds.labels[i] == 0) {
            ++count0;
            CHECK(std::abs(std::hypot(x, y) - 1.0) < 1e-12);
            CHECK(y >= -1e-12);
        } else {
            CHECK(std::abs(std::hypot(x - 1.0, y - 0.5) - 1.0) < 1e-12);
            CHECK(y <= 0.5 + 1e-12);
        }
    }
    CHECK(count0 == 100);  // balanced
}

TEST_CASE("two_moons forces two classes") {
    CHECK_THROWS_AS(make_synthetic(SyntheticKind::two_moons, 200, 3, 0.1, 1), ValueError);
}

TEST_CASE("synthetic kinds reject tiny n and unknown names") {
    CHECK_THROWS_AS(make_synthetic(SyntheticKind::gaussian_blobs, 15, 3, 0.1, 1), ValueError);
    CHECK_THROWS_AS(synthetic_kind_from_string("mnist"), ValueError);
}

TEST_CASE("same seed reproduces the dataset bit for bit") {
    const Dataset a = make_synthetic(SyntheticKind::concentric_rings, 120, 3, 0.05, 77);
    const Dataset b = make_synthetic(SyntheticKind::concentric_rings, 120, 3, 0.05, 77);
    CHECK(a.inputs == b.inputs);
    CHECK(a.labels == b.labels);
    const Dataset c = make_synthetic(SyntheticKind::concentric_rings, 120, 3, 0.05, 78);
    CHECK(a.inputs != c.inputs);
}

TEST_CASE("blobs classes stay balanced within one sample") {
    const Dataset ds = make_synthetic(SyntheticKind::gaussian_blobs, 100, 3, 0.3, 9);
    std::array<int, 3> counts{};
    for (int y : ds.labels) ++counts[static_cast<std::size_t>(y)];
    const auto [mn, mx] = std::minmax_element(counts.begin(), counts.end());
    CHECK(*mx - *mn <= 1);
}

TEST_CASE("split is a disjoint partition") {
    const Dataset pool = make_synthetic(SyntheticKind::gaussian_blobs, 100, 2, 0.3, 4);
    const auto [train, test] = split_dataset(pool, 70, 123);
    CHECK(train.size() == 70);
    CHECK(test.size() == 30);
    CHECK(train.split == "train");
    CHECK(test.split == "test");
    // every pool row appears exactly once across the two splits
    auto key = [](double x, double y) { return std::pair(x, y); };
    std::vector<std::pair<double, double>> all;
    for (std::size_t i = 0; i < train.size(); ++i)
        all.push_back(key(train.inputs[2 * i], train.inputs[2 * i + 1]));
    for (std::size_t i = 0; i < test.size(); ++i)
        all.push_back(key(test.inputs[2 * i], test.inputs[2 * i + 1]));
    std::vector<std::pair<double, double>> orig;
    for (std::size_t i = 0; i < pool.size(); ++i)
        orig.push_back(key(pool.inputs[2 * i], pool.inputs[2 * i + 1]));
    std::sort(all.begin(), all.end());
    std::sort(orig.begin(), orig.end());
    CHECK(all == orig);
}

TEST_CASE("batch sizes cover the dataset with a short tail") {
    const Dataset ds = make_synthetic(SyntheticKind::gaussian_blobs, 100, 2, 0.3, 4);
    Dataset small = ds;
    small.inputs.resize(10 * 2);
    small.labels.resize(10);
    const auto batches = make_batches(small, 3, std::nullopt);
    REQUIRE(batches.size() == 4);
    CHECK(batches[0].size() == 3);
    CHECK(batches[3].size() == 1);
}

TEST_CASE("shuffled batches form a permutation and reproduce by seed") {
    const Dataset ds = make_synthetic(SyntheticKind::gaussian_blobs, 40, 2, 0.3, 4);
    const auto b1 = make_batches(ds, 7, 99);
    const auto b2 = make_batches(ds, 7, 99);
    std::vector<double> seen;
    std::size_t total = 0;
    for (std::size_t k = 0; k < b1.size(); ++k) {
        CHECK(b1[k].x == b2[k].x);
        CHECK(b1[k].y == b2[k].y);
        seen.insert(seen.end(), b1[k].x.begin(), b1[k].x.end());
        total += b1[k].size();
    }
    CHECK(total == ds.size());
    std::vector<double> orig = ds.inputs;
    std::sort(seen.begin(), seen.end());
    std::sort(orig.begin(), orig.end());
    CHECK(seen == orig);
}

TEST_CASE("batch size bounds are enforced") {
    const Dataset ds = make_synthetic(SyntheticKind::gaussian_blobs, 40, 2, 0.3, 4);
    CHECK_THROWS_AS(make_batches(ds, 0, std::nullopt), ValueError);
    CHECK_THROWS_AS(make_batches(ds, 41, std::nullopt), ValueError);
}

TEST_CASE("idx loader round trip and scaling") {
    const auto dir = temp_dir();
    write_bytes(dir / "img.idx", idx_images(3, 2, 2, 255));
    write_bytes(dir / "lab.idx", idx_labels({0, 1, 2}));
    const Dataset ds = load_idx(dir / "img.idx", dir / "lab.idx");
    CHECK(ds.size() == 3);
    CHECK(ds.sample_shape == autodiff::Shape{1, 2, 2});
    CHECK(ds.num_classes == 3);
    for (double v : ds.inputs) CHECK(v == 1.0);  // 255 scales to exactly 1
}

TEST_CASE("idx loader failure modes are named distinctly") {
    const auto dir = temp_dir();
    write_bytes(dir / "img.idx", idx_images(3, 2, 2, 7));
    write_bytes(dir / "lab.idx", idx_labels({0, 1, 2}));

    auto bad_magic = idx_images(3, 2, 2, 7);
    bad_magic[3] = 0x01;
    write_bytes(dir / "badmagic.idx", bad_magic);
    CHECK_THROWS_WITH_AS(load_idx(dir / "badmagic.idx", dir / "lab.idx"),
                         doctest::Contains("magic"), IoError);

    auto truncated = idx_images(3, 2, 2, 7);
    truncated.resize(truncated.size() - 2);
    write_bytes(dir / "trunc.idx", truncated);
    CHECK_THROWS_WITH_AS(load_idx(dir / "trunc.idx", dir / "lab.idx"),
                         doctest::Contains("truncated"), IoError);

    write_bytes(dir / "lab2.idx", idx_labels({0, 1}));
    CHECK_THROWS_WITH_AS(load_idx(dir / "img.idx", dir / "lab2.idx"),
                         doctest::Contains("mismatch"), IoError);

    CHECK_THROWS_AS(load_idx(dir / "missing.idx", dir / "lab.idx"), IoError);
}

TEST_CASE("coordinate range spans the widest axis") {
    Dataset ds;
    ds.sample_shape = {2};
    ds.inputs = {0.0, -1.0, 2.0, 3.0};
    ds.labels = {0, 1};
    ds.num_classes = 2;
    CHECK(coord_range(ds) == 4.0);
}
