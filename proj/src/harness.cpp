#include "adagat/harness.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "adagat/landscape.hpp"
#include "adagat/rng.hpp"
#include "adagat/text.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace adagat::harness {

using nlohmann::json;

const training::MetricsRecord& RunSummary::final_record() const {
    if (series.empty()) throw Error("run has no metric records: " + dir.string());
    return series.back();
}

RunSummary load_run(const std::filesystem::path& run_dir) {
    const auto config_path = run_dir / "config.json";
    const auto metrics_path = run_dir / "metrics.csv";
    if (!std::filesystem::exists(metrics_path))
        throw IoError("missing metrics.csv in run directory: " + run_dir.string());

    RunSummary s;
    s.dir = run_dir;
    json j;
    try {
        j = json::parse(read_text_file(config_path));
    } catch (const json::exception& e) {
        throw ConfigError("malformed config.json in " + run_dir.string() + ": " + e.what());
    }
    s.method = j.value("method", "?");
    s.lambda = j.value("lambda", 0.0);
    s.seed = j.value("seed", std::uint64_t{0});
    s.dataset = j.contains("dataset") ? j["dataset"].value("kind", "?") : "?";
    s.series = training::read_metrics_csv(metrics_path);
    if (s.series.empty()) throw IoError("empty metrics.csv in " + run_dir.string());
    return s;
}

namespace {

struct Welford {
    std::vector<double> values;
    void add(double v) { values.push_back(v); }
    double mean() const {
        double acc = 0.0;
        for (double v : values) acc += v;
        return acc / static_cast<double>(values.size());
    }
    // sample standard deviation (n-1); zero for a single value
    double std_dev() const {
        if (values.size() < 2) return 0.0;
        const double m = mean();
        double acc = 0.0;
        for (double v : values) acc += (v - m) * (v - m);
        return std::sqrt(acc / static_cast<double>(values.size() - 1));
    }
};

bool lambda_applies(const std::string& method) {
    return method == "adagat_mse" || method == "adagat_rmse";
}

}  // namespace

Report make_report(const std::vector<std::filesystem::path>& run_dirs) {
    if (run_dirs.empty()) throw ValueError("report: need at least one run directory");
    Report report;
    for (const auto& dir : run_dirs) report.runs.push_back(load_run(dir));

    std::map<std::tuple<std::string, std::string, std::string>,
             std::array<Welford, 3>>
        groups;
    for (const RunSummary& run : report.runs) {
        const std::string lam =
            lambda_applies(run.method) ? format_double(run.lambda) : "-";
        auto& g = groups[{run.dataset, run.method, lam}];
        const auto& fin = run.final_record();
        g[0].add(fin.guide_clean_acc);
        g[1].add(fin.target_clean_acc);
        g[2].add(fin.target_robust_acc);
    }
    for (const auto& [key, g] : groups) {
        ReportRow row;
        row.dataset = std::get<0>(key);
        row.method = std::get<1>(key);
        row.lambda_label = std::get<2>(key);
        row.num_seeds = g[0].values.size();
        row.guide_clean_mean = g[0].mean();
        row.guide_clean_std = g[0].std_dev();
        row.target_clean_mean = g[1].mean();
        row.target_clean_std = g[1].std_dev();
        row.target_robust_mean = g[2].mean();
        row.target_robust_std = g[2].std_dev();
        report.rows.push_back(row);
    }
    return report;
}

namespace {

std::string fixed4(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string mean_std(double m, double s) { return fixed4(m) + " +- " + fixed4(s); }

}  // namespace

std::string format_report(const Report& report) {
    std::vector<std::array<std::string, 7>> cells;
    cells.push_back({"dataset", "method", "lambda", "seeds", "guide_clean", "target_clean",
                     "target_robust"});
    for (const ReportRow& r : report.rows)
        cells.push_back({r.dataset, r.method, r.lambda_label, std::to_string(r.num_seeds),
                         mean_std(r.guide_clean_mean, r.guide_clean_std),
                         mean_std(r.target_clean_mean, r.target_clean_std),
                         mean_std(r.target_robust_mean, r.target_robust_std)});
    std::array<std::size_t, 7> width{};
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

    std::string out = "final accuracies, mean +- sample std (n-1) over seeds\n";
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out += row[c];
            if (c + 1 < row.size()) out += std::string(width[c] - row[c].size() + 2, ' ');
        }
        out += "\n";
    }
    return out;
}

void write_report_csv(const Report& report, const std::filesystem::path& path) {
    std::string out = "# aggregation: mean and sample standard deviation (n-1) over seeds\n";
    out +=
        "dataset,method,lambda,num_seeds,guide_clean_mean,guide_clean_std,target_clean_mean,"
        "target_clean_std,target_robust_mean,target_robust_std\n";
    for (const ReportRow& r : report.rows) {
        out += r.dataset + "," + r.method + "," + r.lambda_label + "," +
               std::to_string(r.num_seeds);
        for (double v : {r.guide_clean_mean, r.guide_clean_std, r.target_clean_mean,
                         r.target_clean_std, r.target_robust_mean, r.target_robust_std}) {
            out += ",";
            out += format_double(v);
        }
        out += "\n";
    }
    write_text_file(path, out);
}

void write_series_csv(const Report& report, const std::filesystem::path& path) {
    std::string out =
        "dataset,method,lambda,seed,epoch,guide_clean_acc,target_clean_acc,target_robust_acc,"
        "ce,shared,ada\n";
    for (const RunSummary& run : report.runs) {
        const std::string lam =
            lambda_applies(run.method) ? format_double(run.lambda) : "-";
        for (const auto& r : run.series) {
            out += run.dataset + "," + run.method + "," + lam + "," + std::to_string(run.seed) +
                   "," + std::to_string(r.epoch);
            for (double v : {r.guide_clean_acc, r.target_clean_acc, r.target_robust_acc, r.ce,
                             r.shared, r.ada}) {
                out += ",";
                out += format_double(v);
            }
            out += "\n";
        }
    }
    write_text_file(path, out);
}

namespace {

std::string run_dir_name(const std::string& dataset_kind, const std::string& method,
                         double lambda, std::uint64_t seed) {
    std::string name = dataset_kind + "_" + method;
    if (lambda_applies(method)) name += "_lam" + format_double(lambda);
    name += "_seed" + std::to_string(seed);
    return name;
}

}  // namespace

std::vector<std::filesystem::path> run_sweep(const std::string& suite_json,
                                             const std::filesystem::path& out_root) {
    json suite;
    try {
        suite = json::parse(suite_json);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("sweep: malformed suite JSON: ") + e.what());
    }
    if (!suite.is_object()) throw ConfigError("sweep: suite must be a JSON object");

    json base = suite.value("base", json::object());
    const json methods = suite.value("methods", json::array({base.value("method", "adagat_mse")}));
    const json lambdas = suite.value("lambdas", json::array({base.value("lambda", 2.5)}));
    const json seeds = suite.value("seeds", json::array({base.value("seed", 1)}));
    json datasets = suite.value("datasets", json::array());
    if (datasets.empty())
        datasets.push_back(base.value("dataset", json::object({{"kind", "two_moons"}})));
    for (const auto& key : {"base", "methods", "lambdas", "seeds", "datasets"}) suite.erase(key);
    if (!suite.empty())
        throw ConfigError("sweep: unknown suite key '" + suite.begin().key() + "'");

    std::vector<std::filesystem::path> run_dirs;
    for (const auto& ds : datasets) {
        for (const auto& method_j : methods) {
            const std::string method = method_j.get<std::string>();
            // the lambda axis only multiplies the adagat variants
            const json effective_lambdas =
                lambda_applies(method) ? lambdas : json::array({base.value("lambda", 2.5)});
            for (const auto& lam : effective_lambdas) {
                for (const auto& seed : seeds) {
                    json one = base;
                    one["method"] = method;
                    one["lambda"] = lam;
                    one["seed"] = seed;
                    one["dataset"] = ds;
                    const training::TrainRunConfig cfg =
                        training::resolve_config_json(one.dump());
                    const auto dir =
                        out_root / run_dir_name(cfg.dataset.kind, method, cfg.lambda, cfg.seed);
                    std::cout << "run " << dir.string() << std::endl;
                    training::run_experiment(cfg, dir);
                    run_dirs.push_back(dir);
                }
            }
        }
    }
    return run_dirs;
}

// --- CLI -------------------------------------------------------------------

namespace {

json load_json_file(const std::string& path) {
    const std::string text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::optional<std::uint64_t>& seed,
              const std::optional<std::string>& method, const std::optional<double>& lambda,
              const std::optional<int>& epochs) {
    json user = config_path.empty() ? json::object() : load_json_file(config_path);
    if (seed) user["seed"] = *seed;
    if (method) user["method"] = *method;
    if (lambda) user["lambda"] = *lambda;
    if (epochs) user["epochs"] = *epochs;
    const training::TrainRunConfig cfg = training::resolve_config_json(user.dump());
    const auto result = training::run_experiment(cfg, out_dir);
    const auto& fin = result.records.back();
    std::cout << "run " << out_dir << " done: epoch " << fin.epoch
              << " guide_clean=" << format_double(fin.guide_clean_acc)
              << " target_clean=" << format_double(fin.target_clean_acc)
              << " target_robust=" << format_double(fin.target_robust_acc) << std::endl;
    return 0;
}

int cmd_sweep(const std::string& suite_path, const std::string& out_root) {
    const auto dirs = run_sweep(read_text_file(suite_path), out_root);
    std::cout << dirs.size() << " runs completed under " << out_root << std::endl;
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path,
             const std::string& split, const std::string& attack_name,
             const std::optional<double>& epsilon, const std::optional<double>& alpha,
             const std::optional<int>& steps, const std::optional<std::uint64_t>& seed) {
    const training::TrainRunConfig cfg =
        training::resolve_config_json(read_text_file(config_path));
    const nn::ModelParams model = nn::ModelParams::load(checkpoint);
    auto [train, test] = training::build_datasets(cfg);
    const data::Dataset& ds = split == "train" ? train : test;

    attacks::AttackConfig a = cfg.eval_attack;
    if (attack_name == "pgd10")
        a.steps = 10;
    else if (attack_name == "pgd20")
        a.steps = 20;
    else if (attack_name == "pgd50")
        a.steps = 50;
    else if (attack_name != "fgsm" && attack_name != "none")
        throw ConfigError("eval: unknown attack '" + attack_name +
                          "' (want pgd10|pgd20|pgd50|fgsm|none)");
    if (epsilon) a.epsilon = *epsilon;
    if (alpha) a.step_size = *alpha;
    if (steps) a.steps = *steps;
    if (attack_name == "fgsm") {
        a.steps = 1;
        a.random_start = false;
        a.step_size = a.epsilon > 0.0 ? a.epsilon : 1.0;
    }

    if (attack_name == "none" || a.epsilon == 0.0) {
        const double acc = attacks::evaluate_clean_accuracy(model, ds);
        std::cout << "clean_accuracy " << format_double(acc) << std::endl;
    } else {
        const double acc = attacks::evaluate_robust_accuracy(
            model, ds, a, seed.value_or(seed_mix({cfg.seed, 0xE7})));
        std::cout << "robust_accuracy " << format_double(acc) << " (" << attack_name
                  << " eps=" << format_double(a.epsilon) << ")" << std::endl;
    }
    return 0;
}

int cmd_landscape(const std::string& checkpoint, const std::string& config_path,
                  const std::string& out_dir, std::size_t grid_points, double range,
                  std::uint64_t seed, std::size_t batch_index) {
    const training::TrainRunConfig cfg =
        training::resolve_config_json(read_text_file(config_path));
    const nn::ModelParams model = nn::ModelParams::load(checkpoint);
    auto [train, test] = training::build_datasets(cfg);
    const std::size_t m = std::min(cfg.batch_size, test.size());
    const auto batches = data::make_batches(test, m, std::nullopt);
    if (batch_index >= batches.size())
        throw ValueError("landscape: batch index " + std::to_string(batch_index) +
                         " out of range (have " + std::to_string(batches.size()) + ")");

    landscape::GridSpec spec;
    spec.grid_points = grid_points;
    spec.alpha_range = range;
    spec.beta_range = range;
    const landscape::LandscapeGrid grid =
        landscape::compute_landscape(model, batches[batch_index], cfg.eval_attack, spec, seed,
                                     static_cast<int>(batch_index));

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir);
    landscape::write_landscape_csv(grid, std::filesystem::path(out_dir) / "landscape.csv");
    landscape::write_landscape_json(grid, cfg.eval_attack, seed,
                                    std::filesystem::path(out_dir) / "landscape.json");
    const auto flat = landscape::flatness_summary(grid);
    std::cout << "landscape written to " << out_dir
              << " loss_range=" << format_double(flat.loss_range)
              << " mean_grad=" << format_double(flat.mean_gradient_magnitude) << std::endl;
    return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
    const Report report = make_report(dirs);
    std::cout << format_report(report);
    if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec) throw IoError("cannot create output directory: " + out_dir);
        write_report_csv(report, std::filesystem::path(out_dir) / "report.csv");
        write_series_csv(report, std::filesystem::path(out_dir) / "series.csv");
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"co-trained guide/target adversarial training testbed"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "run one training experiment");
    std::string train_config, train_out;
    std::optional<std::uint64_t> train_seed;
    std::optional<std::string> train_method;
    std::optional<double> train_lambda;
    std::optional<int> train_epochs;
    train->add_option("--config", train_config, "JSON config file (defaults when omitted)");
    train->add_option("--out", train_out, "run directory")->required();
    train->add_option("--seed", train_seed, "override seed");
    train->add_option("--method", train_method,
                      "override method (plain_at|lbgat|adagat_mse|adagat_rmse)");
    train->add_option("--lambda", train_lambda, "override lambda");
    train->add_option("--epochs", train_epochs, "override epochs");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "run a suite of experiments");
    std::string sweep_config, sweep_out;
    sweep->add_option("--config", sweep_config, "suite JSON file")->required();
    sweep->add_option("--out", sweep_out, "output root directory")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint under an attack");
    std::string eval_ckpt, eval_config, eval_split = "test", eval_attack = "pgd20";
    std::optional<double> eval_eps, eval_alpha;
    std::optional<int> eval_steps;
    std::optional<std::uint64_t> eval_seed;
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval->add_option("--config", eval_config, "run config.json (dataset source)")->required();
    eval->add_option("--split", eval_split, "train|test (default test)");
    eval->add_option("--attack", eval_attack, "pgd10|pgd20|pgd50|fgsm|none (default pgd20)");
    eval->add_option("--epsilon", eval_eps, "attack budget override");
    eval->add_option("--alpha", eval_alpha, "attack step size override");
    eval->add_option("--steps", eval_steps, "attack step count override");
    eval->add_option("--seed", eval_seed, "attack randomness seed");

    // landscape
    auto* land = app.add_subcommand("landscape", "export an adversarial loss surface grid");
    std::string land_ckpt, land_config, land_out;
    std::size_t land_grid = 21, land_batch = 0;
    double land_range = 1.0;
    std::uint64_t land_seed = 1;
    land->add_option("--checkpoint", land_ckpt, "model checkpoint")->required();
    land->add_option("--config", land_config, "run config.json (dataset source)")->required();
    land->add_option("--out", land_out, "output directory")->required();
    land->add_option("--grid-points", land_grid, "points per axis (default 21)");
    land->add_option("--range", land_range, "alpha/beta half-range (default 1)");
    land->add_option("--seed", land_seed, "direction seed");
    land->add_option("--batch-index", land_batch, "test batch to anchor on");

    // report
    auto* rep = app.add_subcommand("report", "aggregate run directories into a table");
    std::vector<std::string> rep_dirs;
    std::string rep_out;
    rep->add_option("dirs", rep_dirs, "run directories")->required()->expected(-1);
    rep->add_option("--out", rep_out, "directory for report.csv / series.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (train->parsed())
            return cmd_train(train_config, train_out, train_seed, train_method, train_lambda,
                             train_epochs);
        if (sweep->parsed()) return cmd_sweep(sweep_config, sweep_out);
        if (eval->parsed())
            return cmd_eval(eval_ckpt, eval_config, eval_split, eval_attack, eval_eps,
                            eval_alpha, eval_steps, eval_seed);
        if (land->parsed())
            return cmd_landscape(land_ckpt, land_config, land_out, land_grid, land_range,
                                 land_seed, land_batch);
        if (rep->parsed()) return cmd_report(rep_dirs, rep_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << std::endl;
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 5;
    }
    return 0;
}

}  // namespace adagat::harness
