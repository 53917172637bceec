#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "adagat/attacks.hpp"
#include "adagat/data.hpp"
#include "adagat/nn.hpp"

namespace adagat::landscape {

struct GridSpec {
    std::size_t grid_points = 21;  // per axis
    double alpha_range = 1.0;      // alpha in [-alpha_range, alpha_range]
    double beta_range = 1.0;
};

struct LandscapeGrid {
    std::vector<double> alphas;
    std::vector<double> betas;
    std::vector<double> losses;  // row-major: losses[i * betas.size() + j]
    std::vector<double> u;       // adversarial direction, batch-shaped
    std::vector<double> v;       // signed random direction, batch-shaped
    double u_norm = 0.0;         // L2 scales of the directions
    double v_norm = 0.0;
    int anchor = 0;              // batch id this grid was evaluated on
    std::optional<std::array<double, 2>> clamp_range;

    double at(std::size_t i, std::size_t j) const { return losses[i * betas.size() + j]; }
};

// Cross-entropy surface over x + alpha*u + beta*v for an adversarial
// direction u (attack output minus input) and a signed random direction v
// with entries +-epsilon. The model is read-only.
LandscapeGrid compute_landscape(const nn::ModelParams& model, const data::Batch& batch,
                                const attacks::AttackConfig& attack_cfg, const GridSpec& spec,
                                std::uint64_t seed, int anchor_id = 0);

// Same surface along caller-provided directions.
LandscapeGrid compute_landscape_along(const nn::ModelParams& model, const data::Batch& batch,
                                      std::vector<double> u, std::vector<double> v,
                                      const GridSpec& spec,
                                      std::optional<std::array<double, 2>> clamp_range,
                                      int anchor_id = 0);

struct FlatnessSummary {
    double loss_range = 0.0;               // max - min over the grid
    double mean_gradient_magnitude = 0.0;  // central differences over interior points
};

FlatnessSummary flatness_summary(const LandscapeGrid& grid);

// Header row of beta values, first column alpha values, body = losses.
void write_landscape_csv(const LandscapeGrid& grid, const std::filesystem::path& path);
void write_landscape_json(const LandscapeGrid& grid, const attacks::AttackConfig& attack_cfg,
                          std::uint64_t seed, const std::filesystem::path& path);

}  // namespace adagat::landscape
