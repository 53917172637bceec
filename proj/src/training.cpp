#include "adagat/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

#include "adagat/rng.hpp"
#include "adagat/text.hpp"

#include "json.hpp"

namespace adagat::training {

using autodiff::Graph;
using autodiff::Shape;
using autodiff::Tensor;
using losses::LossBreakdown;
using losses::Method;

namespace {

// seed stream tags
constexpr std::uint64_t kSeedData = 0xD4;
constexpr std::uint64_t kSeedSplit = 0x51;
constexpr std::uint64_t kSeedGuideInit = 0x61;
constexpr std::uint64_t kSeedTargetInit = 0x62;
constexpr std::uint64_t kSeedShuffle = 0xB0;
constexpr std::uint64_t kSeedStep = 0xA7;
constexpr std::uint64_t kSeedEval = 0xE7;
constexpr std::uint64_t kSeedEpoch0 = 0xE0;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nn::OptimizerState make_optimizer(const OptimizerConfig& c) {
    nn::OptimizerState st;
    st.lr = c.lr;
    st.momentum = c.momentum;
    st.weight_decay = c.weight_decay;
    return st;
}

// step decay: x0.1 at half the epochs, x0.1 again at three quarters
double lr_factor(int epoch, int total_epochs) {
    const int m1 = total_epochs / 2;
    const int m2 = (3 * total_epochs) / 4;
    double f = 1.0;
    if (m1 > 0 && epoch >= m1) f *= 0.1;
    if (m2 > 0 && epoch >= m2) f *= 0.1;
    return f;
}

void validate_optimizer(const OptimizerConfig& c, const char* which) {
    if (c.lr <= 0.0) throw ConfigError(std::string(which) + ": lr must be positive");
    if (c.momentum < 0.0 || c.momentum >= 1.0)
        throw ConfigError(std::string(which) + ": momentum must be in [0,1)");
    if (c.weight_decay < 0.0)
        throw ConfigError(std::string(which) + ": weight_decay must be non-negative");
}

}  // namespace

void validate_config(const TrainRunConfig& cfg) {
    if (cfg.lambda < 0.0) throw ConfigError("lambda must be non-negative");
    if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
    if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (cfg.eval_every < 1) throw ConfigError("eval_every must be >= 1");
    validate_optimizer(cfg.target.optimizer, "target optimizer");
    if (cfg.method != Method::plain_at) validate_optimizer(cfg.guide.optimizer, "guide optimizer");
    cfg.attack.validate();
    cfg.eval_attack.validate();
    if (cfg.dataset.kind != "idx") {
        data::synthetic_kind_from_string(cfg.dataset.kind);
        if (cfg.dataset.n_train == 0 || cfg.dataset.n_test == 0)
            throw ConfigError("dataset: n_train and n_test must be positive");
    } else {
        if (cfg.dataset.train_images.empty() || cfg.dataset.train_labels.empty() ||
            cfg.dataset.test_images.empty() || cfg.dataset.test_labels.empty())
            throw ConfigError("dataset: idx requires train/test image and label paths");
    }
}

std::pair<data::Dataset, data::Dataset> build_datasets(const TrainRunConfig& cfg) {
    const DatasetConfig& d = cfg.dataset;
    if (d.kind == "idx") {
        data::Dataset train = data::load_idx(d.train_images, d.train_labels);
        data::Dataset test = data::load_idx(d.test_images, d.test_labels);
        train.split = "train";
        test.split = "test";
        if (train.num_classes != test.num_classes) {
            const int k = std::max(train.num_classes, test.num_classes);
            train.num_classes = test.num_classes = k;
        }
        return {std::move(train), std::move(test)};
    }
    const auto kind = data::synthetic_kind_from_string(d.kind);
    data::Dataset pool = data::make_synthetic(kind, d.n_train + d.n_test, d.num_classes,
                                              d.noise, seed_mix({cfg.seed, kSeedData}));
    return data::split_dataset(pool, d.n_train, seed_mix({cfg.seed, kSeedSplit}));
}

namespace {

nn::ModelParams build_one(const ModelConfig& mc, const data::Dataset& ds, std::uint64_t seed) {
    nn::ArchConfig ac;
    ac.arch = mc.arch;
    ac.hidden = mc.hidden;
    ac.num_classes = ds.num_classes;
    if (mc.arch == "mlp") {
        ac.input_shape = {ds.sample_size()};
    } else {
        ac.input_shape = ds.sample_shape;
    }
    return nn::ModelParams::build(ac, seed);
}

}  // namespace

nn::ModelParams build_guide(const TrainRunConfig& cfg, const data::Dataset& ds) {
    return build_one(cfg.guide, ds, seed_mix({cfg.seed, kSeedGuideInit}));
}

nn::ModelParams build_target(const TrainRunConfig& cfg, const data::Dataset& ds) {
    return build_one(cfg.target, ds, seed_mix({cfg.seed, kSeedTargetInit}));
}

LossBreakdown train_step_adagat(const data::Batch& batch, nn::ModelParams& guide,
                                nn::OptimizerState& guide_opt, nn::ModelParams& target,
                                nn::OptimizerState& target_opt, const TrainRunConfig& cfg,
                                std::uint64_t step_seed) {
    if (cfg.method == Method::plain_at)
        throw ValueError("train_step_adagat: method plain_at has no guide");
    if (batch.size() == 0) throw ValueError("train_step_adagat: empty batch");

    // one attack per mini-batch against the current target snapshot, reused
    // by both phases
    const std::vector<double> x_adv = attacks::pgd_attack(target, batch, cfg.attack, step_seed);

    LossBreakdown bd;
    std::vector<double> guide_logits_pre;
    Shape logits_shape;
    {
        // guide phase: the target's adversarial logits enter as constants,
        // so this backward can only populate guide gradients
        Graph g;
        const nn::BoundModel gb = guide.bind(g, /*trainable=*/true);
        const nn::BoundModel tb = target.bind(g, /*trainable=*/false);
        Tensor guide_logits = gb.forward(g.constant(batch.xshape, batch.x));
        Tensor target_logits = tb.forward(g.constant(batch.xshape, x_adv));
        const losses::GuideObjective obj =
            losses::guide_objective(cfg.method, guide_logits, target_logits, batch.y,
                                    losses::is_adagat(cfg.method) ? cfg.lambda : 0.0);
        g.backward(obj.total);
        guide.accumulate_grads(gb);
        bd = obj.breakdown();
        if (!cfg.target_sees_updated_guide) {
            guide_logits_pre = guide_logits.values();
            logits_shape = guide_logits.shape();
        }
    }
    nn::sgd_step(guide, guide_opt);

    {
        // target phase: shared loss only; guide logits are constants here
        Graph g;
        const nn::BoundModel tb = target.bind(g, /*trainable=*/true);
        Tensor target_logits = tb.forward(g.constant(batch.xshape, x_adv));
        Tensor guide_logits =
            cfg.target_sees_updated_guide
                ? guide.bind(g, /*trainable=*/false).forward(g.constant(batch.xshape, batch.x))
                : g.constant(logits_shape, guide_logits_pre);
        Tensor loss = losses::target_objective(target_logits, guide_logits);
        g.backward(loss);
        target.accumulate_grads(tb);
    }
    nn::sgd_step(target, target_opt);
    return bd;
}

double train_step_plain_at(const data::Batch& batch, nn::ModelParams& target,
                           nn::OptimizerState& target_opt, const TrainRunConfig& cfg,
                           std::uint64_t step_seed) {
    if (batch.size() == 0) throw ValueError("train_step_plain_at: empty batch");
    const std::vector<double> x_adv = attacks::pgd_attack(target, batch, cfg.attack, step_seed);
    Graph g;
    const nn::BoundModel tb = target.bind(g, /*trainable=*/true);
    Tensor ce = losses::cross_entropy(tb.forward(g.constant(batch.xshape, x_adv)), batch.y);
    g.backward(ce);
    target.accumulate_grads(tb);
    const double value = ce.scalar();
    nn::sgd_step(target, target_opt);
    return value;
}

namespace {

struct LossMeans {
    double ce = 0.0;
    double shared = 0.0;
    double ada = 0.0;
};

// Forward-only pass over the training set; anchors the epoch-0 record.
LossMeans eval_epoch_losses(const TrainRunConfig& cfg, const nn::ModelParams* guide,
                            const nn::ModelParams& target, const data::Dataset& train) {
    const std::size_t m = std::min(cfg.batch_size, train.size());
    const auto batches = data::make_batches(train, m, std::nullopt);
    LossMeans sums;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const data::Batch& b = batches[i];
        const auto x_adv =
            attacks::pgd_attack(target, b, cfg.attack, seed_mix({cfg.seed, kSeedEpoch0, i}));
        Graph g;
        const nn::BoundModel tb = target.bind(g, false);
        Tensor target_logits = tb.forward(g.constant(b.xshape, x_adv));
        const double w = static_cast<double>(b.size());
        if (guide != nullptr) {
            const nn::BoundModel gb = guide->bind(g, false);
            Tensor guide_logits = gb.forward(g.constant(b.xshape, b.x));
            const LossBreakdown bd =
                losses::guide_objective(cfg.method, guide_logits, target_logits, b.y,
                                        losses::is_adagat(cfg.method) ? cfg.lambda : 0.0)
                    .breakdown();
            sums.ce += bd.ce * w;
            sums.shared += bd.shared * w;
            sums.ada += bd.ada * w;
        } else {
            sums.ce += losses::cross_entropy(target_logits, b.y).scalar() * w;
        }
    }
    const double n = static_cast<double>(train.size());
    return {sums.ce / n, sums.shared / n, sums.ada / n};
}

}  // namespace

RunResult run_experiment(const TrainRunConfig& cfg, const std::filesystem::path& run_dir) {
    validate_config(cfg);
    std::error_code ec;
    std::filesystem::create_directories(run_dir, ec);
    if (ec)
        throw IoError("cannot create run directory: " + run_dir.string() + " (" + ec.message() +
                      ")");

    auto [train, test] = build_datasets(cfg);
    write_text_file(run_dir / "config.json", config_to_json_string(cfg));

    const bool co_training = cfg.method != Method::plain_at;
    nn::ModelParams guide;
    if (co_training) guide = build_guide(cfg, train);
    nn::ModelParams target = build_target(cfg, train);
    nn::OptimizerState guide_opt = make_optimizer(cfg.guide.optimizer);
    nn::OptimizerState target_opt = make_optimizer(cfg.target.optimizer);

    const std::uint64_t eval_seed = seed_mix({cfg.seed, kSeedEval});
    std::vector<MetricsRecord> records;
    const auto record = [&](int epoch, double ce, double shared, double ada) {
        MetricsRecord r;
        r.epoch = epoch;
        r.guide_clean_acc = co_training ? attacks::evaluate_clean_accuracy(guide, test) : kNaN;
        r.target_clean_acc = attacks::evaluate_clean_accuracy(target, test);
        r.target_robust_acc =
            attacks::evaluate_robust_accuracy(target, test, cfg.eval_attack, eval_seed);
        r.ce = ce;
        r.shared = shared;
        r.ada = ada;
        records.push_back(r);
    };

    {
        const LossMeans m0 = eval_epoch_losses(cfg, co_training ? &guide : nullptr, target, train);
        record(0, m0.ce, co_training ? m0.shared : kNaN, co_training ? m0.ada : kNaN);
    }

    const double guide_base_lr = cfg.guide.optimizer.lr;
    const double target_base_lr = cfg.target.optimizer.lr;
    for (int e = 0; e < cfg.epochs; ++e) {
        const double f = lr_factor(e, cfg.epochs);
        guide_opt.lr = guide_base_lr * f;
        target_opt.lr = target_base_lr * f;

        const std::size_t m = std::min(cfg.batch_size, train.size());
        const auto batches = data::make_batches(
            train, m, seed_mix({cfg.seed, kSeedShuffle, static_cast<std::uint64_t>(e)}));
        double sum_ce = 0.0, sum_shared = 0.0, sum_ada = 0.0;
        for (std::size_t i = 0; i < batches.size(); ++i) {
            const std::uint64_t step_seed =
                seed_mix({cfg.seed, kSeedStep, static_cast<std::uint64_t>(e), i});
            const double w = static_cast<double>(batches[i].size());
            if (co_training) {
                const LossBreakdown bd =
                    train_step_adagat(batches[i], guide, guide_opt, target, target_opt, cfg,
                                      step_seed);
                sum_ce += bd.ce * w;
                sum_shared += bd.shared * w;
                sum_ada += bd.ada * w;
            } else {
                sum_ce += train_step_plain_at(batches[i], target, target_opt, cfg, step_seed) * w;
            }
        }
        const int epoch = e + 1;
        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            const double n = static_cast<double>(train.size());
            record(epoch, sum_ce / n, co_training ? sum_shared / n : kNaN,
                   co_training ? sum_ada / n : kNaN);
        }
    }

    write_metrics_csv(records, run_dir / "metrics.csv");
    if (co_training) guide.save(run_dir / "guide.ckpt");
    target.save(run_dir / "target.ckpt");
    return {std::move(records), run_dir};
}

// --- config serialization ------------------------------------------------

namespace {

using nlohmann::json;

json optimizer_to_json(const OptimizerConfig& c) {
    return json{{"lr", c.lr}, {"momentum", c.momentum}, {"weight_decay", c.weight_decay}};
}

json model_to_json(const ModelConfig& c) {
    return json{{"arch", c.arch}, {"hidden", c.hidden}, {"optimizer", optimizer_to_json(c.optimizer)}};
}

json attack_to_json(const attacks::AttackConfig& c) {
    json j{{"epsilon", c.epsilon},
           {"step_size", c.step_size},
           {"steps", c.steps},
           {"random_start", c.random_start}};
    if (c.clamp_range)
        j["clamp"] = json::array({(*c.clamp_range)[0], (*c.clamp_range)[1]});
    else
        j["clamp"] = nullptr;
    return j;
}

json dataset_to_json(const DatasetConfig& c) {
    json j{{"kind", c.kind}};
    if (c.kind == "idx") {
        j["train_images"] = c.train_images;
        j["train_labels"] = c.train_labels;
        j["test_images"] = c.test_images;
        j["test_labels"] = c.test_labels;
    } else {
        j["n_train"] = c.n_train;
        j["n_test"] = c.n_test;
        j["noise"] = c.noise;
        j["num_classes"] = c.num_classes;
    }
    return j;
}

// Strict object reader: every key must be consumed.
class Fields {
public:
    Fields(json j, std::string ctx) : j_(std::move(j)), ctx_(std::move(ctx)) {
        if (!j_.is_object())
            throw ConfigError("config: '" + ctx_ + "' must be a JSON object");
    }

    template <class T>
    T get(const char* key, T fallback) {
        auto v = take(key);
        if (!v) return fallback;
        return convert<T>(key, *v);
    }

    template <class T>
    std::optional<T> get_optional(const char* key) {
        auto v = take(key);
        if (!v) return std::nullopt;
        return convert<T>(key, *v);
    }

    std::optional<json> take(const char* key) {
        auto it = j_.find(key);
        if (it == j_.end()) return std::nullopt;
        json v = *it;
        j_.erase(it);
        return v;
    }

    void finish() const {
        if (!j_.empty())
            throw ConfigError("config: unknown key '" + j_.begin().key() + "' in " + ctx_);
    }

private:
    template <class T>
    T convert(const char* key, const json& v) {
        try {
            return v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config: bad value for '" + ctx_ + "." + key + "'");
        }
    }

    json j_;
    std::string ctx_;
};

ModelConfig model_from_json(const json& j, const std::string& ctx, ModelConfig c) {
    Fields f(j, ctx);
    c.arch = f.get("arch", c.arch);
    c.hidden = f.get("hidden", c.hidden);
    if (auto opt = f.take("optimizer")) {
        Fields of(*opt, ctx + ".optimizer");
        c.optimizer.lr = of.get("lr", c.optimizer.lr);
        c.optimizer.momentum = of.get("momentum", c.optimizer.momentum);
        c.optimizer.weight_decay = of.get("weight_decay", c.optimizer.weight_decay);
        of.finish();
    }
    f.finish();
    return c;
}

struct PartialAttack {
    std::optional<double> epsilon;
    std::optional<double> step_size;
    std::optional<int> steps;
    std::optional<bool> random_start;
    bool clamp_given = false;
    std::optional<std::array<double, 2>> clamp;
};

PartialAttack attack_from_json(const json& j, const std::string& ctx) {
    Fields f(j, ctx);
    PartialAttack p;
    p.epsilon = f.get_optional<double>("epsilon");
    p.step_size = f.get_optional<double>("step_size");
    p.steps = f.get_optional<int>("steps");
    p.random_start = f.get_optional<bool>("random_start");
    if (auto c = f.take("clamp")) {
        p.clamp_given = true;
        if (!c->is_null()) {
            if (!c->is_array() || c->size() != 2)
                throw ConfigError("config: '" + ctx + ".clamp' must be null or [lo, hi]");
            p.clamp = std::array<double, 2>{(*c)[0].get<double>(), (*c)[1].get<double>()};
        }
    }
    f.finish();
    return p;
}

DatasetConfig dataset_from_json(const json& j) {
    Fields f(j, "dataset");
    DatasetConfig c;
    c.kind = f.get("kind", c.kind);
    if (c.kind == "two_moons") c.num_classes = 2;
    c.n_train = f.get<std::size_t>("n_train", c.n_train);
    c.n_test = f.get<std::size_t>("n_test", c.n_test);
    c.noise = f.get("noise", c.noise);
    c.num_classes = f.get("num_classes", c.num_classes);
    c.train_images = f.get<std::string>("train_images", "");
    c.train_labels = f.get<std::string>("train_labels", "");
    c.test_images = f.get<std::string>("test_images", "");
    c.test_labels = f.get<std::string>("test_labels", "");
    f.finish();
    return c;
}

attacks::AttackConfig resolve_attack(const PartialAttack& p, bool is_idx, double range,
                                     bool for_eval) {
    attacks::AttackConfig c;
    const double default_eps = is_idx ? 8.0 / 255.0 : 0.1 * range;
    c.epsilon = p.epsilon.value_or(default_eps);
    double default_step = is_idx ? 2.0 / 255.0 : c.epsilon / 4.0;
    if (default_step <= 0.0) default_step = 1.0;  // irrelevant once epsilon is 0
    c.step_size = p.step_size.value_or(default_step);
    c.steps = p.steps.value_or(for_eval ? 20 : 10);
    c.random_start = p.random_start.value_or(true);
    if (p.clamp_given)
        c.clamp_range = p.clamp;
    else
        c.clamp_range = is_idx ? std::optional(std::array<double, 2>{0.0, 1.0}) : std::nullopt;
    c.validate();
    return c;
}

}  // namespace

std::string config_to_json_string(const TrainRunConfig& cfg) {
    json j;
    j["method"] = losses::to_string(cfg.method);
    j["lambda"] = cfg.lambda;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["eval_every"] = cfg.eval_every;
    j["target_sees_updated_guide"] = cfg.target_sees_updated_guide;
    j["guide"] = model_to_json(cfg.guide);
    j["target"] = model_to_json(cfg.target);
    j["attack"] = attack_to_json(cfg.attack);
    j["eval_attack"] = attack_to_json(cfg.eval_attack);
    j["dataset"] = dataset_to_json(cfg.dataset);
    return j.dump(2) + "\n";
}

TrainRunConfig resolve_config_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }

    Fields f(j, "config");
    TrainRunConfig cfg;
    cfg.method = losses::method_from_string(f.get<std::string>("method", "adagat_mse"));
    cfg.lambda = f.get("lambda", cfg.lambda);
    cfg.epochs = f.get("epochs", cfg.epochs);
    cfg.batch_size = f.get<std::size_t>("batch_size", cfg.batch_size);
    cfg.seed = f.get<std::uint64_t>("seed", cfg.seed);
    cfg.eval_every = f.get("eval_every", cfg.eval_every);
    cfg.target_sees_updated_guide =
        f.get("target_sees_updated_guide", cfg.target_sees_updated_guide);
    if (auto g = f.take("guide")) cfg.guide = model_from_json(*g, "guide", cfg.guide);
    if (auto t = f.take("target")) cfg.target = model_from_json(*t, "target", cfg.target);
    if (auto d = f.take("dataset")) cfg.dataset = dataset_from_json(*d);

    PartialAttack train_attack, eval_attack;
    if (auto a = f.take("attack")) train_attack = attack_from_json(*a, "attack");
    if (auto a = f.take("eval_attack")) eval_attack = attack_from_json(*a, "eval_attack");
    f.finish();

    const bool is_idx = cfg.dataset.kind == "idx";
    double range = 1.0;
    if (!is_idx) {
        // realize the training split to scale the default budget
        TrainRunConfig probe = cfg;
        probe.attack = attacks::AttackConfig{};
        probe.eval_attack = attacks::AttackConfig{};
        range = data::coord_range(build_datasets(probe).first);
    }
    cfg.attack = resolve_attack(train_attack, is_idx, range, /*for_eval=*/false);
    cfg.eval_attack = resolve_attack(eval_attack, is_idx, range, /*for_eval=*/true);

    validate_config(cfg);
    return cfg;
}

// --- metrics csv ----------------------------------------------------------

namespace {
constexpr const char* kMetricsHeader =
    "epoch,guide_clean_acc,target_clean_acc,target_robust_acc,ce,shared,ada";

double parse_double_field(const std::string& s, const std::filesystem::path& path) {
    const char* c = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(c, &end);
    if (end == c) throw IoError("metrics: bad numeric field '" + s + "' in " + path.string());
    return v;
}
}  // namespace

void write_metrics_csv(const std::vector<MetricsRecord>& records,
                       const std::filesystem::path& path) {
    std::string out = kMetricsHeader;
    out += "\n";
    for (const MetricsRecord& r : records) {
        out += std::to_string(r.epoch);
        for (double v : {r.guide_clean_acc, r.target_clean_acc, r.target_robust_acc, r.ce,
                         r.shared, r.ada}) {
            out += ",";
            out += format_double(v);
        }
        out += "\n";
    }
    write_text_file(path, out);
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw IoError("metrics: empty file " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kMetricsHeader)
        throw IoError("metrics: schema mismatch in " + path.string() + " (header '" + line +
                      "')");
    std::vector<MetricsRecord> out;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t at = 0;
        while (true) {
            const std::size_t comma = line.find(',', at);
            fields.push_back(line.substr(at, comma == std::string::npos ? comma : comma - at));
            if (comma == std::string::npos) break;
            at = comma + 1;
        }
        if (fields.size() != 7)
            throw IoError("metrics: schema mismatch in " + path.string() + " (row '" + line +
                          "')");
        MetricsRecord r;
        r.epoch = static_cast<int>(parse_double_field(fields[0], path));
        r.guide_clean_acc = parse_double_field(fields[1], path);
        r.target_clean_acc = parse_double_field(fields[2], path);
        r.target_robust_acc = parse_double_field(fields[3], path);
        r.ce = parse_double_field(fields[4], path);
        r.shared = parse_double_field(fields[5], path);
        r.ada = parse_double_field(fields[6], path);
        out.push_back(r);
    }
    return out;
}

}  // namespace adagat::training
