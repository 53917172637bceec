#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "adagat/data.hpp"
#include "adagat/nn.hpp"

namespace adagat::attacks {

// L-inf attack budget; clamp_range is the valid input interval, or absent
// for unbounded feature spaces.
struct AttackConfig {
    double epsilon = 8.0 / 255.0;
    double step_size = 2.0 / 255.0;
    int steps = 10;
    bool random_start = true;
    std::optional<std::array<double, 2>> clamp_range = std::array<double, 2>{0.0, 1.0};

    void validate() const;
};

enum class AttackLoss { cross_entropy };

// k-step projected sign-gradient ascent within the epsilon ball. The start
// is uniform in [-eps, eps] when random_start is set; each step adds
// step_size * sign(input gradient), clips to the ball, then clamps to the
// valid range. The model is read-only; its stored gradients are untouched.
std::vector<double> pgd_attack(const nn::ModelParams& model, const data::Batch& batch,
                               const AttackConfig& cfg, std::uint64_t seed,
                               AttackLoss loss = AttackLoss::cross_entropy);

// pgd_attack with steps=1, step_size=epsilon, no random start.
std::vector<double> fgsm_attack(const nn::ModelParams& model, const data::Batch& batch,
                                double epsilon,
                                std::optional<std::array<double, 2>> clamp_range);

// Fraction of samples whose argmax prediction on the attacked inputs equals
// the label; deterministic given the seed.
double evaluate_robust_accuracy(const nn::ModelParams& model, const data::Dataset& ds,
                                const AttackConfig& cfg, std::uint64_t seed,
                                std::size_t batch_size = 256);

double evaluate_clean_accuracy(const nn::ModelParams& model, const data::Dataset& ds,
                               std::size_t batch_size = 256);

std::size_t argmax_row(const std::vector<double>& values, std::size_t row,
                       std::size_t num_classes);

}  // namespace adagat::attacks
