#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "adagat/landscape.hpp"
#include "adagat/losses.hpp"
#include "adagat/rng.hpp"
#include "adagat/text.hpp"
#include "doctest.h"

using namespace adagat;
using namespace adagat::landscape;
using autodiff::Graph;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static const fs::path dir = [] {
        auto p = fs::temp_directory_path() /
                 ("adagat_landscape_test_" + std::to_string(::getpid()));
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

nn::ModelParams small_model(std::uint64_t seed) {
    nn::ArchConfig ac;
    ac.arch = "mlp";
    ac.input_shape = {2};
    ac.num_classes = 2;
    ac.hidden = 6;
    return nn::ModelParams::build(ac, seed);
}

data::Batch small_batch(std::uint64_t seed, std::size_t m = 8) {
    Rng rng(seed);
    data::Batch b;
    b.xshape = {m, 2};
    b.x.resize(m * 2);
    for (double& v : b.x) v = rng.uniform(-1, 1);
    b.y.resize(m);
    for (auto& y : b.y) y = static_cast<int>(rng.below(2));
    return b;
}

double direct_ce(const nn::ModelParams& m, const data::Batch& b) {
    Graph g;
    const nn::BoundModel bound = m.bind(g, false);
    return losses::cross_entropy(bound.forward(g.constant(b.xshape, b.x)), b.y).scalar();
}

attacks::AttackConfig pgd20(double eps) {
    attacks::AttackConfig cfg;
    cfg.epsilon = eps;
    cfg.step_size = eps / 4.0;
    cfg.steps = 20;
    cfg.random_start = true;
    cfg.clamp_range = std::nullopt;
    return cfg;
}

}  // namespace

TEST_CASE("grid center equals the direct evaluation loss") {
    const nn::ModelParams m = small_model(4);
    const data::Batch b = small_batch(9);
    GridSpec spec;
    spec.grid_points = 9;
    const LandscapeGrid grid = compute_landscape(m, b, pgd20(0.2), spec, 31);
    const std::size_t mid = spec.grid_points / 2;
    CHECK(grid.alphas[mid] == 0.0);
    CHECK(std::abs(grid.at(mid, mid) - direct_ce(m, b)) < 1e-10);
    CHECK(grid.u_norm > 0.0);
    CHECK(grid.v_norm > 0.0);
    for (double v : grid.losses) CHECK(std::isfinite(v));
}

TEST_CASE("degenerate zero-range grid is constant") {
    const nn::ModelParams m = small_model(5);
    const data::Batch b = small_batch(10);
    GridSpec spec;
    spec.grid_points = 3;
    spec.alpha_range = 0.0;
    spec.beta_range = 0.0;
    const LandscapeGrid grid = compute_landscape(m, b, pgd20(0.2), spec, 7);
    const double anchor = direct_ce(m, b);
    for (double v : grid.losses) CHECK(v == doctest::Approx(anchor).epsilon(1e-15));
}

TEST_CASE("vanishing budget flattens the grid") {
    const nn::ModelParams m = small_model(6);
    const data::Batch b = small_batch(11);
    GridSpec spec;
    spec.grid_points = 5;
    const LandscapeGrid grid = compute_landscape(m, b, pgd20(1e-13), spec, 3);
    const auto s = flatness_summary(grid);
    CHECK(s.loss_range < 1e-10);
}

TEST_CASE("flatness of an analytic plane") {
    LandscapeGrid grid;
    grid.alphas = {0, 1, 2, 3};
    grid.betas = {0, 1, 2, 3};
    grid.losses.resize(16);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            grid.losses[i * 4 + j] = grid.alphas[i] + grid.betas[j];
    const auto s = flatness_summary(grid);
    CHECK(s.loss_range == doctest::Approx(6.0).epsilon(1e-15));
    CHECK(s.mean_gradient_magnitude == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

    LandscapeGrid flat = grid;
    for (double& v : flat.losses) v = 1.25;
    const auto s2 = flatness_summary(flat);
    CHECK(s2.loss_range == 0.0);
    CHECK(s2.mean_gradient_magnitude == 0.0);
}

TEST_CASE("negating the random direction mirrors the beta axis") {
    const nn::ModelParams m = small_model(8);
    const data::Batch b = small_batch(13);
    GridSpec spec;
    spec.grid_points = 5;
    const LandscapeGrid grid = compute_landscape(m, b, pgd20(0.25), spec, 17);
    std::vector<double> neg_v = grid.v;
    for (double& x : neg_v) x = -x;
    const LandscapeGrid mirrored =
        compute_landscape_along(m, b, grid.u, neg_v, spec, grid.clamp_range);
    const std::size_t g = spec.grid_points;
    for (std::size_t i = 0; i < g; ++i)
        for (std::size_t j = 0; j < g; ++j)
            CHECK(mirrored.at(i, j) == doctest::Approx(grid.at(i, g - 1 - j)).epsilon(1e-12));
}

TEST_CASE("the model is untouched by landscape computation") {
    const nn::ModelParams m = small_model(10);
    std::vector<double> before;
    for (const auto& p : m.entries()) before.insert(before.end(), p.value.begin(), p.value.end());
    const data::Batch b = small_batch(15);
    GridSpec spec;
    spec.grid_points = 4;
    compute_landscape(m, b, pgd20(0.2), spec, 23);
    std::vector<double> after;
    for (const auto& p : m.entries()) after.insert(after.end(), p.value.begin(), p.value.end());
    CHECK(before == after);
}

TEST_CASE("grid validation") {
    const nn::ModelParams m = small_model(12);
    const data::Batch b = small_batch(16);
    GridSpec spec;
    spec.grid_points = 1;
    CHECK_THROWS_AS(compute_landscape(m, b, pgd20(0.1), spec, 1), ValueError);
    data::Batch empty;
    empty.xshape = {0, 2};
    spec.grid_points = 5;
    CHECK_THROWS_AS(compute_landscape(m, empty, pgd20(0.1), spec, 1), ValueError);
}

TEST_CASE("csv and json sidecar export") {
    const nn::ModelParams m = small_model(14);
    const data::Batch b = small_batch(17);
    GridSpec spec;
    spec.grid_points = 3;
    const auto cfg = pgd20(0.2);
    const LandscapeGrid grid = compute_landscape(m, b, cfg, spec, 29, 2);
    const auto dir = temp_dir();
    write_landscape_csv(grid, dir / "landscape.csv");
    write_landscape_json(grid, cfg, 29, dir / "landscape.json");

    const std::string csv = read_text_file(dir / "landscape.csv");
    CHECK(csv.rfind("alpha\\beta,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 rows

    const std::string js = read_text_file(dir / "landscape.json");
    CHECK(js.find("\"u_norm\"") != std::string::npos);
    CHECK(js.find("\"anchor\": 2") != std::string::npos);
}
