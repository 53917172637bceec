#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "adagat/attacks.hpp"
#include "adagat/data.hpp"
#include "adagat/losses.hpp"
#include "adagat/nn.hpp"
#include "adagat/rng.hpp"
#include "adagat/text.hpp"
#include "doctest.h"
#include "grad_oracle.hpp"

using namespace adagat;
using namespace adagat::nn;
using autodiff::Graph;
using autodiff::Shape;
using autodiff::Tensor;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static const fs::path dir = [] {
        auto p = fs::temp_directory_path() / ("adagat_nn_test_" + std::to_string(::getpid()));
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

ArchConfig mlp_cfg(std::size_t d = 2, int k = 2, int hidden = 8) {
    ArchConfig c;
    c.arch = "mlp";
    c.input_shape = {d};
    c.num_classes = k;
    c.hidden = hidden;
    return c;
}

}  // namespace

TEST_CASE("build is deterministic from seed") {
    const ModelParams a = ModelParams::build(mlp_cfg(), 7);
    const ModelParams b = ModelParams::build(mlp_cfg(), 7);
    REQUIRE(a.entries().size() == b.entries().size());
    for (std::size_t i = 0; i < a.entries().size(); ++i)
        CHECK(a.entries()[i].value == b.entries()[i].value);
    const ModelParams c = ModelParams::build(mlp_cfg(), 8);
    CHECK(a.entries()[0].value != c.entries()[0].value);
}

TEST_CASE("zero input flows to the final bias") {
    ModelParams m = ModelParams::build(mlp_cfg(3, 4), 1);
    const auto logits = m.forward_values({2, 3}, std::vector<double>(6, 0.0));
    REQUIRE(logits.size() == 8);  // (m, K) = (2, 4)
    for (double v : logits) CHECK(v == 0.0);  // biases start at zero
    // a nonzero final bias shows through verbatim
    m.entries().back().value = {1.0, -2.0, 3.0, 4.0};
    const auto shifted = m.forward_values({2, 3}, std::vector<double>(6, 0.0));
    CHECK(shifted == std::vector<double>{1, -2, 3, 4, 1, -2, 3, 4});
}

TEST_CASE("mlp with identity hiddens is an affine map") {
    ModelParams m = ModelParams::build(mlp_cfg(2, 2, 2), 1);
    auto set = [&](const char* name, std::vector<double> v) {
        for (auto& p : m.entries())
            if (p.name == name) p.value = std::move(v);
    };
    set("fc1.weight", {1, 0, 0, 1});
    set("fc2.weight", {1, 0, 0, 1});
    set("fc3.weight", {2.0, -1.0, 0.5, 3.0});
    set("fc3.bias", {0.25, -0.5});
    // positive inputs pass the relus untouched
    const auto logits = m.forward_values({1, 2}, {1.5, 2.0});
    CHECK(logits[0] == doctest::Approx(1.5 * 2.0 + 2.0 * 0.5 + 0.25).epsilon(1e-15));
    CHECK(logits[1] == doctest::Approx(1.5 * -1.0 + 2.0 * 3.0 - 0.5).epsilon(1e-15));
}

TEST_CASE("logits stay finite on the unit box") {
    const ModelParams m = ModelParams::build(mlp_cfg(4, 3, 16), 5);
    Rng rng(2);
    std::vector<double> x(8 * 4);
    for (double& v : x) v = rng.uniform(0.0, 1.0);
    for (double v : m.forward_values({8, 4}, x)) CHECK(std::isfinite(v));
}

TEST_CASE("small_cnn forward shape and pooling arithmetic") {
    ArchConfig c;
    c.arch = "small_cnn";
    c.input_shape = {1, 8, 8};
    c.num_classes = 3;
    c.hidden = 4;
    const ModelParams m = ModelParams::build(c, 11);
    Rng rng(3);
    std::vector<double> x(2 * 64);
    for (double& v : x) v = rng.uniform(0, 1);
    const auto logits = m.forward_values({2, 1, 8, 8}, x);
    CHECK(logits.size() == 6);
    for (double v : logits) CHECK(std::isfinite(v));
}

TEST_CASE("unsupported architectures and bad dims are rejected") {
    ArchConfig c = mlp_cfg();
    c.arch = "resnet18";
    CHECK_THROWS_AS(ModelParams::build(c, 1), ValueError);
    ArchConfig cnn;
    cnn.arch = "small_cnn";
    cnn.input_shape = {1, 6, 6};  // not divisible by 4
    CHECK_THROWS_AS(ModelParams::build(cnn, 1), ValueError);
    CHECK_THROWS_AS(ModelParams::build(mlp_cfg(2, 1), 1), ValueError);
}

TEST_CASE("forward validates the input shape") {
    const ModelParams m = ModelParams::build(mlp_cfg(3), 1);
    Graph g;
    const BoundModel b = m.bind(g, false);
    CHECK_THROWS_AS(b.forward(g.constant({2, 4}, std::vector<double>(8, 0.0))), ShapeError);
}

TEST_CASE("sgd arithmetic: vanilla, momentum, fixed point") {
    ArchConfig tiny;
    tiny.arch = "mlp";
    tiny.input_shape = {1};
    tiny.num_classes = 2;
    tiny.hidden = 1;
    ModelParams m = ModelParams::build(tiny, 1);
    auto& p = m.entries()[0];  // fc1.weight, single value
    p.value = {1.0};

    OptimizerState vanilla{0.1, 0.0, 0.0, {}};
    p.grad = {2.0};
    // the other params need gradients too
    for (std::size_t i = 1; i < m.entries().size(); ++i)
        m.entries()[i].grad.assign(m.entries()[i].value.size(), 0.0);
    sgd_step(m, vanilla);
    CHECK(p.value[0] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(p.grad.empty());  // cleared

    // momentum recurrence with constant gradient
    p.value = {0.0};
    OptimizerState mom{0.1, 0.9, 0.0, {}};
    const double g = 1.0;
    p.grad = {g};
    for (std::size_t i = 1; i < m.entries().size(); ++i)
        m.entries()[i].grad.assign(m.entries()[i].value.size(), 0.0);
    sgd_step(m, mom);
    CHECK(p.value[0] == doctest::Approx(-0.1 * g).epsilon(1e-15));
    p.grad = {g};
    for (std::size_t i = 1; i < m.entries().size(); ++i)
        m.entries()[i].grad.assign(m.entries()[i].value.size(), 0.0);
    sgd_step(m, mom);
    CHECK(p.value[0] == doctest::Approx(-0.1 * g - 0.1 * 1.9 * g).epsilon(1e-14));

    // zero gradient with no decay leaves the value alone
    ModelParams m2 = ModelParams::build(tiny, 1);
    const auto before = m2.entries()[0].value;
    OptimizerState zero{0.1, 0.0, 0.0, {}};
    for (auto& e : m2.entries()) e.grad.assign(e.value.size(), 0.0);
    sgd_step(m2, zero);
    CHECK(m2.entries()[0].value == before);
}

TEST_CASE("sgd_step demands gradients") {
    ModelParams m = ModelParams::build(mlp_cfg(), 1);
    OptimizerState st;
    CHECK_THROWS_WITH_AS(sgd_step(m, st), doctest::Contains("fc1.weight"), ValueError);
}

TEST_CASE("accumulate_grads rejects constant bindings") {
    ModelParams m = ModelParams::build(mlp_cfg(), 1);
    Graph g;
    const BoundModel b = m.bind(g, false);
    CHECK_THROWS_AS(m.accumulate_grads(b), ValueError);
}

TEST_CASE("separable blobs train to 99% within 500 full-batch steps") {
    using namespace adagat::data;
    const Dataset ds = make_synthetic(SyntheticKind::gaussian_blobs, 200, 2, 0.4, 3);
    ModelParams m = ModelParams::build(mlp_cfg(2, 2, 8), 2);
    OptimizerState opt{0.1, 0.9, 0.0, {}};
    const Batch b = full_batch(ds);
    double acc = 0.0;
    for (int step = 0; step < 500; ++step) {
        Graph g;
        const BoundModel bound = m.bind(g, true);
        Tensor loss = losses::cross_entropy(bound.forward(g.constant(b.xshape, b.x)), b.y);
        g.backward(loss);
        m.accumulate_grads(bound);
        sgd_step(m, opt);
        acc = attacks::evaluate_clean_accuracy(m, ds);
        if (acc >= 0.99) break;
    }
    CHECK(acc >= 0.99);
}

TEST_CASE("checkpoint round trip is byte-identical") {
    const auto dir = temp_dir();
    const ModelParams m = ModelParams::build(mlp_cfg(3, 4, 6), 21);
    const auto p1 = dir / "a.ckpt";
    const auto p2 = dir / "b.ckpt";
    m.save(p1);
    const ModelParams loaded = ModelParams::load(p1);
    CHECK(loaded.arch() == m.arch());
    loaded.save(p2);
    CHECK(read_text_file(p1) == read_text_file(p2));
}

TEST_CASE("checkpoint loader rejects garbage") {
    const auto dir = temp_dir();
    write_text_file(dir / "bad.ckpt", "definitely not a checkpoint");
    CHECK_THROWS_WITH_AS(ModelParams::load(dir / "bad.ckpt"), doctest::Contains("magic"),
                         IoError);

    const ModelParams m = ModelParams::build(mlp_cfg(), 1);
    m.save(dir / "t.ckpt");
    auto bytes = read_text_file(dir / "t.ckpt");
    bytes.resize(bytes.size() / 2);
    write_text_file(dir / "trunc.ckpt", bytes);
    CHECK_THROWS_WITH_AS(ModelParams::load(dir / "trunc.ckpt"), doctest::Contains("truncated"),
                         IoError);
}
