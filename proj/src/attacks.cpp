#include "adagat/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "adagat/losses.hpp"
#include "adagat/rng.hpp"

namespace adagat::attacks {

using autodiff::Graph;
using autodiff::Tensor;

void AttackConfig::validate() const {
    if (epsilon < 0.0) throw ValueError("attack: epsilon must be non-negative");
    if (step_size <= 0.0) throw ValueError("attack: step_size must be positive");
    if (steps < 1) throw ValueError("attack: steps must be >= 1");
    if (clamp_range && !((*clamp_range)[0] < (*clamp_range)[1]))
        throw ValueError("attack: clamp range must satisfy lo < hi");
}

namespace {
inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}  // namespace

std::vector<double> pgd_attack(const nn::ModelParams& model, const data::Batch& batch,
                               const AttackConfig& cfg, std::uint64_t seed, AttackLoss loss) {
    cfg.validate();
    if (loss != AttackLoss::cross_entropy)
        throw ValueError("pgd_attack: unsupported attack loss");
    if (batch.size() == 0) throw ValueError("pgd_attack: empty batch");
    if (cfg.epsilon == 0.0) return batch.x;  // empty ball

    const std::size_t n = batch.x.size();
    std::vector<double> delta(n, 0.0);
    if (cfg.random_start) {
        Rng rng(seed);
        for (double& d : delta) d = rng.uniform(-cfg.epsilon, cfg.epsilon);
    }

    std::vector<double> x_cur(n);
    for (int step = 0; step < cfg.steps; ++step) {
        for (std::size_t i = 0; i < n; ++i) x_cur[i] = batch.x[i] + delta[i];
        Graph g;
        Tensor xa = g.leaf(batch.xshape, x_cur, /*requires_grad=*/true);
        const nn::BoundModel bound = model.bind(g, /*trainable=*/false);
        Tensor ce = losses::cross_entropy(bound.forward(xa), batch.y);
        g.backward(ce);
        const std::vector<double>& gx = xa.grad();
        for (std::size_t i = 0; i < n; ++i) {
            double d = delta[i] + cfg.step_size * sgn(gx[i]);
            d = std::min(std::max(d, -cfg.epsilon), cfg.epsilon);
            if (cfg.clamp_range) {
                const double lo = (*cfg.clamp_range)[0];
                const double hi = (*cfg.clamp_range)[1];
                d = std::min(std::max(batch.x[i] + d, lo), hi) - batch.x[i];
            }
            delta[i] = d;
        }
    }

    std::vector<double> x_adv(n);
    for (std::size_t i = 0; i < n; ++i) x_adv[i] = batch.x[i] + delta[i];
    return x_adv;
}

std::vector<double> fgsm_attack(const nn::ModelParams& model, const data::Batch& batch,
                                double epsilon,
                                std::optional<std::array<double, 2>> clamp_range) {
    AttackConfig cfg;
    cfg.epsilon = epsilon;
    cfg.step_size = epsilon > 0.0 ? epsilon : 1.0;
    cfg.steps = 1;
    cfg.random_start = false;
    cfg.clamp_range = clamp_range;
    return pgd_attack(model, batch, cfg, /*seed=*/0);
}

std::size_t argmax_row(const std::vector<double>& values, std::size_t row,
                       std::size_t num_classes) {
    const std::size_t base = row * num_classes;
    std::size_t best = 0;
    for (std::size_t j = 1; j < num_classes; ++j)
        if (values[base + j] > values[base + best]) best = j;
    return best;
}

namespace {

double accuracy_over_batches(const nn::ModelParams& model, const data::Dataset& ds,
                             std::size_t batch_size,
                             const AttackConfig* cfg, std::uint64_t seed) {
    if (ds.size() == 0) throw ValueError("evaluate accuracy: empty dataset");
    const std::size_t m = std::min(batch_size, ds.size());
    const auto batches = data::make_batches(ds, m, std::nullopt);
    const std::size_t k = static_cast<std::size_t>(model.num_classes());
    std::size_t correct = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
        const data::Batch& b = batches[bi];
        std::vector<double> x = cfg != nullptr
                                    ? pgd_attack(model, b, *cfg, seed_mix({seed, bi}))
                                    : b.x;
        const std::vector<double> logits = model.forward_values(b.xshape, x);
        for (std::size_t i = 0; i < b.size(); ++i)
            if (argmax_row(logits, i, k) == static_cast<std::size_t>(b.y[i])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace

double evaluate_robust_accuracy(const nn::ModelParams& model, const data::Dataset& ds,
                                const AttackConfig& cfg, std::uint64_t seed,
                                std::size_t batch_size) {
    return accuracy_over_batches(model, ds, batch_size, &cfg, seed);
}

double evaluate_clean_accuracy(const nn::ModelParams& model, const data::Dataset& ds,
                               std::size_t batch_size) {
    return accuracy_over_batches(model, ds, batch_size, nullptr, 0);
}

}  // namespace adagat::attacks
