#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adagat/autodiff.hpp"

namespace adagat::nn {

using autodiff::Graph;
using autodiff::Shape;
using autodiff::Tensor;

struct Param {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized by accumulate_grads, cleared by sgd_step
};

struct ArchConfig {
    std::string arch = "mlp";  // "mlp" | "small_cnn"
    Shape input_shape = {2};   // {d} for mlp, {C,H,W} for small_cnn
    int num_classes = 2;
    int hidden = 64;           // mlp hidden units / first conv channel count
};

class ModelParams;

// Per-graph view of a model: its parameters registered as leaves of one tape.
struct BoundModel {
    const ModelParams* model = nullptr;
    Graph* graph = nullptr;
    std::vector<Tensor> params;  // aligned with model entries

    Tensor forward(const Tensor& x) const;
};

// Named, ordered collection of trainable tensors for one classifier.
// Copying a ModelParams yields an independent snapshot.
class ModelParams {
public:
    ModelParams() = default;

    // Kaiming-uniform fan-in weights, zero biases, deterministic from seed.
    static ModelParams build(const ArchConfig& cfg, std::uint64_t seed);

    const std::string& arch() const { return arch_; }
    std::vector<Param>& entries() { return entries_; }
    const std::vector<Param>& entries() const { return entries_; }
    int num_classes() const;

    BoundModel bind(Graph& g, bool trainable) const;
    void accumulate_grads(const BoundModel& bound);
    void clear_grads();

    // Forward pass on a throwaway graph; logits values only.
    std::vector<double> forward_values(const Shape& batch_shape,
                                       const std::vector<double>& x) const;

    void save(const std::filesystem::path& path) const;
    static ModelParams load(const std::filesystem::path& path);

private:
    std::string arch_;
    std::vector<Param> entries_;
};

struct OptimizerState {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::vector<std::vector<double>> buffers;  // aligned with entries, start at zero
};

// buffer <- momentum*buffer + grad + weight_decay*param; param -= lr*buffer.
// Gradients are cleared afterwards; a missing gradient is an error.
void sgd_step(ModelParams& model, OptimizerState& state);

}  // namespace adagat::nn
