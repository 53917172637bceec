#include "adagat/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>

#include "adagat/rng.hpp"

namespace adagat::data {

SyntheticKind synthetic_kind_from_string(std::string_view s) {
    if (s == "two_moons") return SyntheticKind::two_moons;
    if (s == "gaussian_blobs") return SyntheticKind::gaussian_blobs;
    if (s == "concentric_rings") return SyntheticKind::concentric_rings;
    throw ValueError("unsupported synthetic dataset kind '" + std::string(s) + "'");
}

std::string to_string(SyntheticKind kind) {
    switch (kind) {
        case SyntheticKind::two_moons: return "two_moons";
        case SyntheticKind::gaussian_blobs: return "gaussian_blobs";
        case SyntheticKind::concentric_rings: return "concentric_rings";
    }
    return "?";
}

Dataset make_synthetic(SyntheticKind kind, std::size_t n, int num_classes, double noise,
                       std::uint64_t seed) {
    if (kind == SyntheticKind::two_moons && num_classes != 2)
        throw ValueError("two_moons requires num_classes == 2, got " +
                         std::to_string(num_classes));
    if (num_classes < 2) throw ValueError("make_synthetic: num_classes must be >= 2");
    if (noise < 0.0) throw ValueError("make_synthetic: noise must be non-negative");
    if (n < static_cast<std::size_t>(num_classes) * 10)
        throw ValueError("make_synthetic: need at least 10 samples per class, got n=" +
                         std::to_string(n));

    Rng rng(seed);
    Dataset ds;
    ds.sample_shape = {2};
    ds.num_classes = num_classes;
    ds.inputs.reserve(2 * n);
    ds.labels.reserve(n);

    const double pi = std::numbers::pi;
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % static_cast<std::size_t>(num_classes));
        double x = 0.0, y = 0.0;
        switch (kind) {
            case SyntheticKind::two_moons: {
                // unit half-circle per class; the second is flipped and
                // shifted so the moons interleave
                const double t = rng.uniform(0.0, pi);
                if (c == 0) {
                    x = std::cos(t);
                    y = std::sin(t);
                } else {
                    x = 1.0 - std::cos(t);
                    y = 0.5 - std::sin(t);
                }
                x += rng.normal() * noise;
                y += rng.normal() * noise;
                break;
            }
            case SyntheticKind::gaussian_blobs: {
                const double ang = 2.0 * pi * static_cast<double>(c) /
                                   static_cast<double>(num_classes);
                x = 3.0 * std::cos(ang) + rng.normal() * noise;
                y = 3.0 * std::sin(ang) + rng.normal() * noise;
                break;
            }
            case SyntheticKind::concentric_rings: {
                const double r = static_cast<double>(c + 1) + rng.normal() * noise;
                const double ang = rng.uniform(0.0, 2.0 * pi);
                x = r * std::cos(ang);
                y = r * std::sin(ang);
                break;
            }
        }
        ds.inputs.push_back(x);
        ds.inputs.push_back(y);
        ds.labels.push_back(c);
    }
    return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& pool, std::size_t n_train,
                                          std::uint64_t seed) {
    const std::size_t n = pool.size();
    if (n_train == 0 || n_train >= n)
        throw ValueError("split_dataset: n_train must be in (0, n), got " +
                         std::to_string(n_train) + " of " + std::to_string(n));
    const auto perm = Rng(seed).permutation(n);
    const std::size_t d = pool.sample_size();

    auto gather = [&](std::size_t begin, std::size_t end, std::string split) {
        Dataset out;
        out.sample_shape = pool.sample_shape;
        out.num_classes = pool.num_classes;
        out.split = std::move(split);
        out.inputs.reserve((end - begin) * d);
        out.labels.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t src = perm[i];
            out.inputs.insert(out.inputs.end(), pool.inputs.begin() + src * d,
                              pool.inputs.begin() + (src + 1) * d);
            out.labels.push_back(pool.labels[src]);
        }
        return out;
    };
    return {gather(0, n_train, "train"), gather(n_train, n, "test")};
}

namespace {

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("failed while reading file: " + path.string());
    return bytes;
}

std::uint32_t read_u32_be(const std::vector<unsigned char>& b, std::size_t off,
                          const std::filesystem::path& path) {
    if (off + 4 > b.size()) throw IoError("truncated IDX file: " + path.string());
    return (static_cast<std::uint32_t>(b[off]) << 24) |
           (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) |
           static_cast<std::uint32_t>(b[off + 3]);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
    const auto img = read_file_bytes(images_path);
    const auto lab = read_file_bytes(labels_path);

    const std::uint32_t img_magic = read_u32_be(img, 0, images_path);
    if (img_magic != 0x00000803u)
        throw IoError("bad IDX image magic in " + images_path.string() + " (got " +
                      std::to_string(img_magic) + ", want 2051)");
    const std::uint32_t lab_magic = read_u32_be(lab, 0, labels_path);
    if (lab_magic != 0x00000801u)
        throw IoError("bad IDX label magic in " + labels_path.string() + " (got " +
                      std::to_string(lab_magic) + ", want 2049)");

    const std::uint32_t n_img = read_u32_be(img, 4, images_path);
    const std::uint32_t rows = read_u32_be(img, 8, images_path);
    const std::uint32_t cols = read_u32_be(img, 12, images_path);
    const std::uint32_t n_lab = read_u32_be(lab, 4, labels_path);

    if (n_img != n_lab)
        throw IoError("IDX image/label count mismatch: " + std::to_string(n_img) +
                      " images in " + images_path.string() + " vs " + std::to_string(n_lab) +
                      " labels in " + labels_path.string());
    if (n_img == 0) throw IoError("empty IDX dataset: " + images_path.string());

    const std::size_t pixels = static_cast<std::size_t>(n_img) * rows * cols;
    if (img.size() != 16 + pixels)
        throw IoError("truncated IDX file: " + images_path.string());
    if (lab.size() != 8 + static_cast<std::size_t>(n_lab))
        throw IoError("truncated IDX file: " + labels_path.string());

    Dataset ds;
    ds.sample_shape = {1, rows, cols};
    ds.inputs.resize(pixels);
    for (std::size_t i = 0; i < pixels; ++i)
        ds.inputs[i] = static_cast<double>(img[16 + i]) / 255.0;
    ds.labels.resize(n_lab);
    int max_label = 0;
    for (std::size_t i = 0; i < n_lab; ++i) {
        ds.labels[i] = static_cast<int>(lab[8 + i]);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

Batch take_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
    const std::size_t d = ds.sample_size();
    Batch b;
    b.xshape.push_back(indices.size());
    b.xshape.insert(b.xshape.end(), ds.sample_shape.begin(), ds.sample_shape.end());
    b.x.reserve(indices.size() * d);
    b.y.reserve(indices.size());
    for (std::size_t src : indices) {
        b.x.insert(b.x.end(), ds.inputs.begin() + src * d, ds.inputs.begin() + (src + 1) * d);
        b.y.push_back(ds.labels[src]);
    }
    return b;
}

Batch full_batch(const Dataset& ds) {
    Batch b;
    b.xshape.push_back(ds.size());
    b.xshape.insert(b.xshape.end(), ds.sample_shape.begin(), ds.sample_shape.end());
    b.x = ds.inputs;
    b.y = ds.labels;
    return b;
}

std::vector<Batch> make_batches(const Dataset& ds, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed) {
    const std::size_t n = ds.size();
    if (batch_size == 0 || batch_size > n)
        throw ValueError("make_batches: batch size must be in [1, n], got " +
                         std::to_string(batch_size) + " of " + std::to_string(n));
    std::vector<std::size_t> order;
    if (shuffle_seed) {
        order = Rng(*shuffle_seed).permutation(n);
    } else {
        order.resize(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
    }
    std::vector<Batch> out;
    for (std::size_t at = 0; at < n; at += batch_size) {
        const std::size_t end = std::min(at + batch_size, n);
        out.push_back(take_batch(
            ds, std::vector<std::size_t>(order.begin() + at, order.begin() + end)));
    }
    return out;
}

double coord_range(const Dataset& ds) {
    if (ds.size() == 0) throw ValueError("coord_range: empty dataset");
    const std::size_t d = ds.sample_size();
    double best = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const double v = ds.inputs[i * d + j];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        best = std::max(best, hi - lo);
    }
    return best;
}

}  // namespace adagat::data
