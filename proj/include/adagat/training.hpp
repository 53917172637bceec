#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "adagat/attacks.hpp"
#include "adagat/data.hpp"
#include "adagat/losses.hpp"
#include "adagat/nn.hpp"

namespace adagat::training {

struct OptimizerConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

struct ModelConfig {
    std::string arch = "mlp";  // "mlp" | "small_cnn"
    int hidden = 64;
    OptimizerConfig optimizer;
};

struct DatasetConfig {
    std::string kind = "two_moons";  // synthetic kind or "idx"
    std::size_t n_train = 400;
    std::size_t n_test = 200;
    double noise = 0.1;
    int num_classes = 2;
    // idx only
    std::string train_images, train_labels, test_images, test_labels;
};

struct TrainRunConfig {
    losses::Method method = losses::Method::adagat_mse;
    double lambda = 2.5;
    int epochs = 30;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;
    int eval_every = 10;
    // When set the target phase recomputes the guide's clean logits after the
    // guide has stepped; otherwise it reuses the pre-step logits.
    bool target_sees_updated_guide = true;
    // The guide steps more slowly than the target: the alignment terms
    // amplify the pull on the guide by (1 + lambda), and co-training
    // destabilizes once that effective rate gets large.
    ModelConfig guide{"mlp", 64, {0.001, 0.9, 5e-4}};  // unused by plain_at
    ModelConfig target{"mlp", 256, {0.01, 0.9, 5e-4}};
    attacks::AttackConfig attack;
    attacks::AttackConfig eval_attack;
    DatasetConfig dataset;
};

struct MetricsRecord {
    int epoch = 0;
    double guide_clean_acc = 0.0;  // NaN for plain_at
    double target_clean_acc = 0.0;
    double target_robust_acc = 0.0;
    double ce = 0.0;
    double shared = 0.0;  // NaN for plain_at
    double ada = 0.0;     // NaN for plain_at
};

void validate_config(const TrainRunConfig& cfg);

// Datasets are a pure function of the config (pool generation and the
// train/test split both derive their seeds from cfg.seed).
std::pair<data::Dataset, data::Dataset> build_datasets(const TrainRunConfig& cfg);

nn::ModelParams build_guide(const TrainRunConfig& cfg, const data::Dataset& ds);
nn::ModelParams build_target(const TrainRunConfig& cfg, const data::Dataset& ds);

// One co-training step (lbgat / adagat_mse / adagat_rmse): attack the current
// target snapshot, step the guide on its full objective with the target's
// logits treated as constants, then step the target on the shared loss alone.
losses::LossBreakdown train_step_adagat(const data::Batch& batch, nn::ModelParams& guide,
                                        nn::OptimizerState& guide_opt,
                                        nn::ModelParams& target,
                                        nn::OptimizerState& target_opt,
                                        const TrainRunConfig& cfg, std::uint64_t step_seed);

// Adversarial training of the target alone: cross-entropy on attacked inputs.
double train_step_plain_at(const data::Batch& batch, nn::ModelParams& target,
                           nn::OptimizerState& target_opt, const TrainRunConfig& cfg,
                           std::uint64_t step_seed);

struct RunResult {
    std::vector<MetricsRecord> records;
    std::filesystem::path run_dir;
};

// Runs the configured experiment and persists config.json, metrics.csv and
// final checkpoints (guide.ckpt / target.ckpt) into run_dir.
RunResult run_experiment(const TrainRunConfig& cfg, const std::filesystem::path& run_dir);

// Fully materialized config (all defaults explicit), deterministic key order.
std::string config_to_json_string(const TrainRunConfig& cfg);

// Strict parse: unknown keys are errors; absent fields take defaults. Attack
// fields left unset are resolved against the realized dataset (synthetic
// budgets scale with the coordinate range, idx data uses 8/255).
TrainRunConfig resolve_config_json(const std::string& text);

void write_metrics_csv(const std::vector<MetricsRecord>& records,
                       const std::filesystem::path& path);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

}  // namespace adagat::training
