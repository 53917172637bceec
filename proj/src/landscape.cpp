#include "adagat/landscape.hpp"

#include <algorithm>
#include <cmath>

#include "adagat/losses.hpp"
#include "adagat/rng.hpp"
#include "adagat/text.hpp"

#include "json.hpp"

namespace adagat::landscape {

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return out;
}

double l2_norm(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double batch_ce(const nn::ModelParams& model, const data::Batch& batch,
                const std::vector<double>& x) {
    autodiff::Graph g;
    const nn::BoundModel bound = model.bind(g, false);
    return losses::cross_entropy(bound.forward(g.constant(batch.xshape, x)), batch.y).scalar();
}

}  // namespace

LandscapeGrid compute_landscape_along(const nn::ModelParams& model, const data::Batch& batch,
                                      std::vector<double> u, std::vector<double> v,
                                      const GridSpec& spec,
                                      std::optional<std::array<double, 2>> clamp_range,
                                      int anchor_id) {
    if (batch.size() == 0) throw ValueError("compute_landscape: empty batch");
    if (spec.grid_points < 2) throw ValueError("compute_landscape: need at least 2 grid points");
    if (u.size() != batch.x.size() || v.size() != batch.x.size())
        throw ShapeError("compute_landscape: direction size does not match batch");

    LandscapeGrid grid;
    grid.alphas = linspace(-spec.alpha_range, spec.alpha_range, spec.grid_points);
    grid.betas = linspace(-spec.beta_range, spec.beta_range, spec.grid_points);
    grid.u = std::move(u);
    grid.v = std::move(v);
    grid.u_norm = l2_norm(grid.u);
    grid.v_norm = l2_norm(grid.v);
    grid.anchor = anchor_id;
    grid.clamp_range = clamp_range;
    grid.losses.resize(grid.alphas.size() * grid.betas.size());

    std::vector<double> x(batch.x.size());
    for (std::size_t i = 0; i < grid.alphas.size(); ++i) {
        for (std::size_t j = 0; j < grid.betas.size(); ++j) {
            const double a = grid.alphas[i];
            const double b = grid.betas[j];
            for (std::size_t t = 0; t < x.size(); ++t) {
                double xt = batch.x[t] + a * grid.u[t] + b * grid.v[t];
                if (clamp_range)
                    xt = std::min(std::max(xt, (*clamp_range)[0]), (*clamp_range)[1]);
                x[t] = xt;
            }
            grid.losses[i * grid.betas.size() + j] = batch_ce(model, batch, x);
        }
    }
    return grid;
}

LandscapeGrid compute_landscape(const nn::ModelParams& model, const data::Batch& batch,
                                const attacks::AttackConfig& attack_cfg, const GridSpec& spec,
                                std::uint64_t seed, int anchor_id) {
    if (batch.size() == 0) throw ValueError("compute_landscape: empty batch");
    attack_cfg.validate();

    // adversarial direction from the attack, random signed direction at the
    // same scale
    const std::vector<double> x_adv =
        attacks::pgd_attack(model, batch, attack_cfg, seed_mix({seed, 0xAD}));
    std::vector<double> u(batch.x.size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = x_adv[i] - batch.x[i];

    Rng rng(seed_mix({seed, 0x5D}));
    std::vector<double> v(batch.x.size());
    for (double& x : v) x = rng.rademacher() * attack_cfg.epsilon;

    return compute_landscape_along(model, batch, std::move(u), std::move(v), spec,
                                   attack_cfg.clamp_range, anchor_id);
}

FlatnessSummary flatness_summary(const LandscapeGrid& grid) {
    FlatnessSummary s;
    const auto [mn, mx] = std::minmax_element(grid.losses.begin(), grid.losses.end());
    s.loss_range = *mx - *mn;

    const std::size_t na = grid.alphas.size();
    const std::size_t nb = grid.betas.size();
    if (na < 3 || nb < 3) return s;
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 1; i + 1 < na; ++i) {
        for (std::size_t j = 1; j + 1 < nb; ++j) {
            const double da = grid.alphas[i + 1] - grid.alphas[i - 1];
            const double db = grid.betas[j + 1] - grid.betas[j - 1];
            const double ga = da != 0.0 ? (grid.at(i + 1, j) - grid.at(i - 1, j)) / da : 0.0;
            const double gb = db != 0.0 ? (grid.at(i, j + 1) - grid.at(i, j - 1)) / db : 0.0;
            acc += std::sqrt(ga * ga + gb * gb);
            ++count;
        }
    }
    s.mean_gradient_magnitude = count > 0 ? acc / static_cast<double>(count) : 0.0;
    return s;
}

void write_landscape_csv(const LandscapeGrid& grid, const std::filesystem::path& path) {
    std::string out = "alpha\\beta";
    for (double b : grid.betas) {
        out += ",";
        out += format_double(b);
    }
    out += "\n";
    for (std::size_t i = 0; i < grid.alphas.size(); ++i) {
        out += format_double(grid.alphas[i]);
        for (std::size_t j = 0; j < grid.betas.size(); ++j) {
            out += ",";
            out += format_double(grid.at(i, j));
        }
        out += "\n";
    }
    write_text_file(path, out);
}

void write_landscape_json(const LandscapeGrid& grid, const attacks::AttackConfig& attack_cfg,
                          std::uint64_t seed, const std::filesystem::path& path) {
    nlohmann::json j;
    j["u_norm"] = grid.u_norm;
    j["v_norm"] = grid.v_norm;
    j["seed"] = seed;
    j["anchor"] = grid.anchor;
    j["grid_points"] = grid.alphas.size();
    j["alpha_range"] = grid.alphas.empty() ? 0.0 : grid.alphas.back();
    j["beta_range"] = grid.betas.empty() ? 0.0 : grid.betas.back();
    j["attack"] = {{"epsilon", attack_cfg.epsilon},
                   {"step_size", attack_cfg.step_size},
                   {"steps", attack_cfg.steps},
                   {"random_start", attack_cfg.random_start}};
    if (grid.clamp_range)
        j["clamp"] = nlohmann::json::array({(*grid.clamp_range)[0], (*grid.clamp_range)[1]});
    else
        j["clamp"] = nullptr;
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace adagat::landscape
