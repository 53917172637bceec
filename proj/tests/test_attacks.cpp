#include <cmath>

#include "adagat/attacks.hpp"
#include "adagat/data.hpp"
#include "adagat/losses.hpp"
#include "adagat/nn.hpp"
#include "adagat/rng.hpp"
#include "doctest.h"

using namespace adagat;
using namespace adagat::attacks;
using autodiff::Graph;
using autodiff::Shape;
using autodiff::Tensor;
using data::Batch;

namespace {

// mlp whose hidden layers are identities, so logits = x W + b for positive
// inputs; gives attacks an analytically tractable probe
nn::ModelParams make_linear_probe(std::size_t d, std::size_t k,
                                  const std::vector<double>& w,
                                  const std::vector<double>& b) {
    nn::ArchConfig c;
    c.arch = "mlp";
    c.input_shape = {d};
    c.num_classes = static_cast<int>(k);
    c.hidden = static_cast<int>(d);
    nn::ModelParams m = nn::ModelParams::build(c, 1);
    std::vector<double> eye(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
    for (auto& p : m.entries()) {
        if (p.name == "fc1.weight" || p.name == "fc2.weight") p.value = eye;
        if (p.name == "fc1.bias" || p.name == "fc2.bias")
            p.value.assign(p.value.size(), 0.0);
        if (p.name == "fc3.weight") p.value = w;
        if (p.name == "fc3.bias") p.value = b;
    }
    return m;
}

Batch random_batch(Rng& rng, std::size_t m, std::size_t d, double lo, double hi) {
    Batch b;
    b.xshape = {m, d};
    b.x.resize(m * d);
    for (double& v : b.x) v = rng.uniform(lo, hi);
    b.y.resize(m);
    for (auto& y : b.y) y = static_cast<int>(rng.below(2));
    return b;
}

double batch_ce(const nn::ModelParams& model, const Batch& batch,
                const std::vector<double>& x) {
    Graph g;
    const nn::BoundModel bound = model.bind(g, false);
    return losses::cross_entropy(bound.forward(g.constant(batch.xshape, x)), batch.y).scalar();
}

// dCE/dx for logits z = x W + b: (softmax(z) - onehot) W^T / m
std::vector<double> linear_ce_input_grad(const std::vector<double>& w, std::size_t d,
                                         std::size_t k, const Batch& batch) {
    const std::size_t m = batch.size();
    std::vector<double> grad(m * d, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> z(k, 0.0);
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t t = 0; t < d; ++t) z[j] += batch.x[i * d + t] * w[t * k + j];
        double mx = z[0];
        for (double v : z) mx = std::max(mx, v);
        double denom = 0.0;
        for (double v : z) denom += std::exp(v - mx);
        for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(z[j] - mx) / denom;
            const double delta = p - (static_cast<std::size_t>(batch.y[i]) == j ? 1.0 : 0.0);
            for (std::size_t t = 0; t < d; ++t)
                grad[i * d + t] += delta * w[t * k + j] / static_cast<double>(m);
        }
    }
    return grad;
}

std::vector<double> snapshot(const nn::ModelParams& m) {
    std::vector<double> flat;
    for (const auto& p : m.entries()) flat.insert(flat.end(), p.value.begin(), p.value.end());
    return flat;
}

}  // namespace

TEST_CASE("epsilon zero is the identity") {
    Rng rng(1);
    const nn::ModelParams m = make_linear_probe(2, 2, {1.0, -1.0, 0.5, 2.0}, {0.0, 0.0});
    const Batch b = random_batch(rng, 4, 2, 1.0, 2.0);
    AttackConfig cfg;
    cfg.epsilon = 0.0;
    cfg.step_size = 0.1;
    cfg.steps = 5;
    cfg.random_start = true;
    cfg.clamp_range = std::nullopt;
    CHECK(pgd_attack(m, b, cfg, 7) == b.x);
    CHECK(fgsm_attack(m, b, 0.0, std::nullopt) == b.x);
}

TEST_CASE("single step on a linear probe follows the analytic sign, clipped to the ball") {
    Rng rng(2);
    const std::size_t d = 3, k = 2;
    std::vector<double> w(d * k);
    for (double& v : w) v = rng.uniform(-1, 1);
    const nn::ModelParams m = make_linear_probe(d, k, w, {0.0, 0.0});
    const Batch b = random_batch(rng, 5, d, 1.0, 2.0);

    AttackConfig cfg;
    cfg.epsilon = 0.3;
    cfg.step_size = 0.5;  // overshoots, so every moved coordinate projects to the ball edge
    cfg.steps = 1;
    cfg.random_start = false;
    cfg.clamp_range = std::nullopt;
    const auto x_adv = pgd_attack(m, b, cfg, 0);

    const auto grad = linear_ce_input_grad(w, d, k, b);
    for (std::size_t i = 0; i < x_adv.size(); ++i) {
        const double delta = x_adv[i] - b.x[i];
        if (std::abs(grad[i]) > 1e-9) {
            CHECK(delta == doctest::Approx(0.3 * (grad[i] > 0 ? 1.0 : -1.0)).epsilon(1e-12));
        } else {
            CHECK(delta == 0.0);
        }
    }
}

TEST_CASE("fgsm is pgd with one full-budget step, bit for bit") {
    Rng rng(3);
    const nn::ModelParams m = make_linear_probe(2, 2, {0.7, -0.2, 0.1, 1.1}, {0.1, -0.1});
    const Batch b = random_batch(rng, 6, 2, 1.0, 2.0);
    AttackConfig cfg;
    cfg.epsilon = 0.25;
    cfg.step_size = 0.25;
    cfg.steps = 1;
    cfg.random_start = false;
    cfg.clamp_range = std::array<double, 2>{0.0, 3.0};
    CHECK(fgsm_attack(m, b, 0.25, cfg.clamp_range) == pgd_attack(m, b, cfg, 99));
}

TEST_CASE("fgsm never decreases the loss of a linear probe") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 2, k = 3;
        std::vector<double> w(d * k);
        for (double& v : w) v = rng.uniform(-1, 1);
        const nn::ModelParams m = make_linear_probe(d, k, w, {0.0, 0.0, 0.0});
        Batch b = random_batch(rng, 4, d, 1.0, 2.0);
        for (auto& y : b.y) y = static_cast<int>(rng.below(k));
        const auto x_adv = fgsm_attack(m, b, 0.2, std::nullopt);
        CHECK(batch_ce(m, b, x_adv) >= batch_ce(m, b, b.x) - 1e-12);
    }
}

TEST_CASE("pgd loss is monotone over steps on a linear probe") {
    Rng rng(5);
    const std::size_t d = 2, k = 2;
    std::vector<double> w(d * k);
    for (double& v : w) v = rng.uniform(-1, 1);
    const nn::ModelParams m = make_linear_probe(d, k, w, {0.0, 0.0});
    const Batch b = random_batch(rng, 5, d, 1.0, 2.0);

    const int total_steps = 5;
    AttackConfig cfg;
    cfg.epsilon = 0.3;
    cfg.step_size = cfg.epsilon / (2.0 * total_steps);  // stays interior
    cfg.random_start = false;
    cfg.clamp_range = std::nullopt;

    double prev = batch_ce(m, b, b.x);
    for (int steps = 1; steps <= total_steps; ++steps) {
        cfg.steps = steps;
        const double loss = batch_ce(m, b, pgd_attack(m, b, cfg, 0));
        CHECK(loss >= prev - 1e-12);
        prev = loss;
    }
}

TEST_CASE("box containment, clamping, determinism and parameter immutability") {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        nn::ArchConfig ac;
        ac.arch = "mlp";
        ac.input_shape = {2};
        ac.num_classes = 2;
        ac.hidden = 4;
        const nn::ModelParams m = nn::ModelParams::build(ac, rng.next_u64());
        const Batch b = random_batch(rng, 1 + rng.below(6), 2, 0.0, 1.0);
        AttackConfig cfg;
        cfg.epsilon = rng.uniform(0.0, 0.4);
        cfg.step_size = rng.uniform(0.01, 0.3);
        cfg.steps = 1 + static_cast<int>(rng.below(5));
        cfg.random_start = rng.below(2) == 0;
        if (rng.below(2) == 0)
            cfg.clamp_range = std::array<double, 2>{0.0, 1.0};
        else
            cfg.clamp_range = std::nullopt;

        const auto before = snapshot(m);
        const std::uint64_t seed = rng.next_u64();
        const auto x_adv = pgd_attack(m, b, cfg, seed);
        CHECK(snapshot(m) == before);
        CHECK(pgd_attack(m, b, cfg, seed) == x_adv);  // seeded determinism

        for (std::size_t i = 0; i < x_adv.size(); ++i) {
            CHECK(std::abs(x_adv[i] - b.x[i]) <= cfg.epsilon + 1e-12);
            if (cfg.clamp_range) {
                CHECK(x_adv[i] >= (*cfg.clamp_range)[0]);
                CHECK(x_adv[i] <= (*cfg.clamp_range)[1]);
            }
        }
    }
}

TEST_CASE("attack config validation") {
    AttackConfig cfg;
    cfg.epsilon = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg.epsilon = 0.1;
    cfg.steps = 0;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg.steps = 1;
    cfg.clamp_range = std::array<double, 2>{1.0, 0.0};
    CHECK_THROWS_AS(cfg.validate(), ValueError);
}

TEST_CASE("robust accuracy at epsilon zero equals clean accuracy") {
    const data::Dataset ds = data::make_synthetic(data::SyntheticKind::gaussian_blobs, 60, 3,
                                                  0.5, 12);
    nn::ArchConfig ac;
    ac.arch = "mlp";
    ac.input_shape = {2};
    ac.num_classes = 3;
    ac.hidden = 8;
    const nn::ModelParams m = nn::ModelParams::build(ac, 3);
    AttackConfig cfg;
    cfg.epsilon = 0.0;
    cfg.step_size = 0.1;
    cfg.steps = 3;
    cfg.clamp_range = std::nullopt;
    CHECK(evaluate_robust_accuracy(m, ds, cfg, 5) == evaluate_clean_accuracy(m, ds));
}

TEST_CASE("an untrained model scores at chance on label-independent data") {
    // labels carry no signal, so any fixed predictor sits near 1/K
    Rng rng(13);
    data::Dataset ds;
    ds.sample_shape = {2};
    ds.num_classes = 4;
    const std::size_t n = 1000;
    for (std::size_t i = 0; i < n; ++i) {
        ds.inputs.push_back(rng.uniform(-1, 1));
        ds.inputs.push_back(rng.uniform(-1, 1));
        ds.labels.push_back(static_cast<int>(i % 4));
    }
    nn::ArchConfig ac;
    ac.arch = "mlp";
    ac.input_shape = {2};
    ac.num_classes = 4;
    ac.hidden = 16;
    const nn::ModelParams m = nn::ModelParams::build(ac, 77);
    AttackConfig cfg;
    cfg.epsilon = 0.04;
    cfg.step_size = 0.01;
    cfg.steps = 3;
    cfg.clamp_range = std::nullopt;
    const double acc = evaluate_robust_accuracy(m, ds, cfg, 3);
    CHECK(acc == doctest::Approx(0.25).epsilon(0.2));  // 1/K within 5 points
}

TEST_CASE("empty datasets and batches are rejected") {
    const nn::ModelParams m = make_linear_probe(2, 2, {1, 0, 0, 1}, {0, 0});
    data::Dataset empty;
    empty.sample_shape = {2};
    empty.num_classes = 2;
    AttackConfig cfg;
    CHECK_THROWS_AS(evaluate_robust_accuracy(m, empty, cfg, 1), ValueError);
    Batch eb;
    eb.xshape = {0, 2};
    CHECK_THROWS_AS(pgd_attack(m, eb, cfg, 1), ValueError);
}
