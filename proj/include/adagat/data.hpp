#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "adagat/autodiff.hpp"

namespace adagat::data {

using autodiff::Shape;

struct Dataset {
    Shape sample_shape;           // per-sample dims, e.g. {2} or {1,28,28}
    std::vector<double> inputs;   // size() * sample_size(), row-major
    std::vector<int> labels;
    int num_classes = 0;
    std::string split = "train";

    std::size_t size() const { return labels.size(); }
    std::size_t sample_size() const { return autodiff::shape_size(sample_shape); }
};

struct Batch {
    Shape xshape;  // {m, sample dims...}
    std::vector<double> x;
    std::vector<int> y;

    std::size_t size() const { return y.size(); }
};

enum class SyntheticKind { two_moons, gaussian_blobs, concentric_rings };

SyntheticKind synthetic_kind_from_string(std::string_view s);
std::string to_string(SyntheticKind kind);

// Balanced (within one sample) 2-D point clouds, deterministic from seed.
Dataset make_synthetic(SyntheticKind kind, std::size_t n, int num_classes, double noise,
                       std::uint64_t seed);

// Seeded permutation split into disjoint train/test parts.
std::pair<Dataset, Dataset> split_dataset(const Dataset& pool, std::size_t n_train,
                                          std::uint64_t seed);

// IDX container (magic 0x00000803 images / 0x00000801 labels, big-endian
// dims, u8 pixels); pixels are scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

// Splits into batches of size m (final short batch included). With a seed the
// order is a seeded permutation, otherwise dataset order.
std::vector<Batch> make_batches(const Dataset& ds, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed);

Batch take_batch(const Dataset& ds, const std::vector<std::size_t>& indices);
Batch full_batch(const Dataset& ds);

// Largest per-coordinate span; attack budgets on synthetic data scale from it.
double coord_range(const Dataset& ds);

}  // namespace adagat::data
