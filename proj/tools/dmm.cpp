// Command-line driver: train models, sample from trained checkpoints, and run
// the verification suites.
//
//   dmm train  --config cfg.json [--seed N] [--out dir]
//   dmm sample --config cfg.json --checkpoint out/checkpoint.dmmk [--n N]
//              [--snapshots t1,t2,...] [--out dir] [--seed N]
//   dmm verify --suite reversal|cor1|quadrature|losses|gradcheck [--out report.json]
//
// Exit codes: 0 ok, 1 verify failure, 2 config error, 3 numeric abort,
// 4 checkpoint/config hash mismatch. DMM_THREADS caps worker threads.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmm/config.hpp"
#include "dmm/io.hpp"
#include "dmm/metrics.hpp"
#include "dmm/svg.hpp"
#include "dmm/verify.hpp"

namespace {

using namespace dmm;
using nlohmann::json;

struct HashMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_config_file(const std::string& path) {
    try {
        return read_text_file(path);
    } catch (const std::exception&) {
        throw ConfigError("cannot read config file '" + path + "'");
    }
}

std::string git_hash_best_effort() {
    FILE* pipe = popen("git rev-parse HEAD 2>/dev/null", "r");
    if (!pipe) return "unknown";
    char buf[128] = {0};
    std::string out;
    if (fgets(buf, sizeof(buf), pipe)) out = buf;
    pclose(pipe);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out.empty() ? "unknown" : out;
}

json manifest_skeleton(const RunConfig& config) {
    json manifest;
    manifest["config"] = json::parse(config.canonical);
    manifest["config_hash"] = fnv1a_hex(config.canonical);
    manifest["seed"] = config.train.seed;
    manifest["git_hash"] = git_hash_best_effort();
    manifest["metrics"] = json::object();
    return manifest;
}

GbmSpec gbm_spec_from_config(const EngineConfig& engine) {
    const std::size_t d = engine.sigma.size();
    Matrix sigma(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        if (engine.sigma[i].size() != d) throw ConfigError("config: engine.sigma must be square");
        for (std::size_t j = 0; j < d; ++j) sigma(i, j) = engine.sigma[i][j];
    }
    return GbmSpec::make(sigma);
}

std::vector<Vec> continuous_dataset(const RunConfig& config, Rng& rng) {
    return sample_target(config.target, config.dataset_size, rng);
}

std::vector<std::size_t> finite_dataset(const RunConfig& config, std::size_t n_states, Rng& rng) {
    TargetSpec target = config.target;
    target.finite_states = n_states;
    std::vector<std::size_t> out;
    out.reserve(config.dataset_size);
    for (std::size_t i = 0; i < config.dataset_size; ++i)
        out.push_back(static_cast<std::size_t>(sample_target_point(target, rng)[0]));
    return out;
}

DiscreteChain chain_from_config(const EngineConfig& engine) {
    const DiscreteSpace space{engine.dims, engine.states_per_dim, engine.masked};
    return engine.masked ? masked_chain(space) : uniform_chain(space);
}

// ----------------------------------------------------------------------------
// train
// ----------------------------------------------------------------------------

int cmd_train(const std::string& config_path, std::uint64_t seed_override, bool has_seed,
              const std::string& out_override) {
    RunConfig config = parse_run_config_text(read_config_file(config_path));
    if (has_seed) config.train.seed = seed_override;
    if (!out_override.empty()) config.output.dir = out_override;
    std::filesystem::create_directories(config.output.dir);
    const std::string dir = config.output.dir;

    Rng data_rng(config.train.seed ^ 0x5177df9a12e1b2c4ULL);
    TrainResult result;
    MlpParams trained;

    Rng init_rng(config.train.seed ^ 0x9e3779b97f4a7c15ULL);
    const auto hook = [&](std::size_t epoch, const TrainResult& so_far) {
        (void)epoch;
        write_text_file(dir + "/loss.csv", loss_history_csv(so_far.loss_history));
    };

    if (config.engine.kind == "ou") {
        OuEngine engine = OuEngine::make(config.engine.dim, config.train.horizon,
                                         config.model.hidden, config.model.layers, init_rng);
        const auto dataset = continuous_dataset(config, data_rng);
        result = train(engine, dataset, config.train, hook);
        trained = engine.model.params;
    } else if (config.engine.kind == "gbm") {
        GbmEngine engine = GbmEngine::make(gbm_spec_from_config(config.engine), config.train.horizon,
                                           config.model.hidden, config.model.layers, init_rng);
        const auto dataset = continuous_dataset(config, data_rng);
        result = train(engine, dataset, config.train, hook);
        trained = engine.model.params;
    } else if (config.engine.kind == "torus-jump") {
        TorusJumpEngine engine = TorusJumpEngine::make(config.engine.torus, config.train.horizon,
                                                       config.engine.fourier_modes,
                                                       config.model.hidden, config.model.layers,
                                                       init_rng);
        engine.kernel_mc = config.engine.kernel_mc;
        const auto dataset = continuous_dataset(config, data_rng);
        result = train(engine, dataset, config.train, hook);
        trained = engine.model.params;
    } else {
        const DiscreteChain chain = chain_from_config(config.engine);
        FiniteStateEngine engine = FiniteStateEngine::make(chain, config.train.horizon,
                                                           config.model.hidden, config.model.layers,
                                                           init_rng);
        const auto dataset = finite_dataset(config, chain.space.size(), data_rng);
        result = train(engine, dataset, config.train, hook);
        trained = engine.model.params;
    }

    write_checkpoint(dir + "/checkpoint.dmmk", trained);
    json sidecar;
    sidecar["config_hash"] = fnv1a_hex(config.canonical);
    sidecar["seed"] = config.train.seed;
    sidecar["epochs"] = config.train.epochs;
    write_text_file(dir + "/checkpoint.json", sidecar.dump(2) + "\n");
    write_text_file(dir + "/loss.csv", loss_history_csv(result.loss_history));

    json manifest = manifest_skeleton(config);
    if (!result.loss_history.empty()) {
        manifest["metrics"]["final_loss"] = result.loss_history.back();
        manifest["metrics"]["first_loss"] = result.loss_history.front();
    }
    manifest["artifacts"] = {"checkpoint.dmmk", "checkpoint.json", "loss.csv", "manifest.json"};
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
    std::printf("trained %zu epochs; artifacts in %s\n", config.train.epochs, dir.c_str());
    return 0;
}

// ----------------------------------------------------------------------------
// sample
// ----------------------------------------------------------------------------

std::vector<double> parse_snapshots(const std::string& text, double horizon, double kappa) {
    std::vector<double> times;
    if (text.empty()) {
        times = default_snapshot_times(horizon);
    } else {
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) times.push_back(std::stod(item));
    }
    // Round to the sampling grid so snapshots land on step boundaries.
    for (double& t : times) t = std::round(t / kappa) * kappa;
    return times;
}

int cmd_sample(const std::string& config_path, const std::string& checkpoint_path, std::size_t n,
               const std::string& snapshots_text, std::uint64_t seed_override, bool has_seed,
               const std::string& out_override) {
    RunConfig config = parse_run_config_text(read_config_file(config_path));
    if (!out_override.empty()) config.output.dir = out_override;
    std::filesystem::create_directories(config.output.dir);
    const std::string dir = config.output.dir;
    const std::uint64_t seed = has_seed ? seed_override : config.train.seed;

    // Sidecar hash must match this config.
    const std::string sidecar_path =
        checkpoint_path.size() > 5 ? checkpoint_path.substr(0, checkpoint_path.size() - 5) + ".json"
                                   : checkpoint_path + ".json";
    const json sidecar = json::parse(read_text_file(sidecar_path));
    if (sidecar.at("config_hash").get<std::string>() != fnv1a_hex(config.canonical))
        throw HashMismatchError("checkpoint config hash does not match --config");

    const MlpParams restored = read_checkpoint(checkpoint_path);
    const TimeGrid grid = TimeGrid::from_kappa(config.train.horizon, config.kappa);
    const std::vector<double> snapshot_times =
        parse_snapshots(snapshots_text, config.train.horizon, config.kappa);

    json manifest = manifest_skeleton(config);
    manifest["seed"] = seed;
    Rng init_rng(config.train.seed ^ 0x9e3779b97f4a7c15ULL);
    Rng metric_rng(seed ^ 0x7ac15ULL);

    if (config.engine.kind == "finite-state") {
        const DiscreteChain chain = chain_from_config(config.engine);
        FiniteStateEngine engine = FiniteStateEngine::make(chain, config.train.horizon,
                                                           config.model.hidden, config.model.layers,
                                                           init_rng);
        if (restored.spec.layer_sizes != engine.model.params.spec.layer_sizes)
            throw HashMismatchError("checkpoint layer sizes do not match the configured model");
        engine.model.params = restored;
        Rng rng(seed);
        TrajectoryBatch<std::size_t> batch;
        if (n > 0) batch = infer(engine, grid, n, snapshot_times, rng);
        write_text_file(dir + "/samples.csv", state_samples_csv(batch.times, batch.snapshots));
        write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
        std::printf("wrote %zu snapshots to %s\n", batch.times.size(), dir.c_str());
        return 0;
    }

    TrajectoryBatch<Vec> batch;
    double plot_lo = 0.0, plot_hi = 1.0;
    if (config.engine.kind == "ou") {
        OuEngine engine = OuEngine::make(config.engine.dim, config.train.horizon,
                                         config.model.hidden, config.model.layers, init_rng);
        if (restored.spec.layer_sizes != engine.model.params.spec.layer_sizes)
            throw HashMismatchError("checkpoint layer sizes do not match the configured model");
        engine.model.params = restored;
        Rng rng(seed);
        if (n > 0) batch = infer(engine, grid, n, snapshot_times, rng);
        plot_lo = -5.0;
        plot_hi = 5.0;
    } else if (config.engine.kind == "gbm") {
        GbmEngine engine = GbmEngine::make(gbm_spec_from_config(config.engine),
                                           config.train.horizon, config.model.hidden,
                                           config.model.layers, init_rng);
        if (restored.spec.layer_sizes != engine.model.params.spec.layer_sizes)
            throw HashMismatchError("checkpoint layer sizes do not match the configured model");
        engine.model.params = restored;
        Rng rng(seed);
        if (n > 0) batch = infer(engine, grid, n, snapshot_times, rng);
        plot_lo = 0.0;
        plot_hi = 8.0;
    } else {
        TorusJumpEngine engine = TorusJumpEngine::make(config.engine.torus, config.train.horizon,
                                                       config.engine.fourier_modes,
                                                       config.model.hidden, config.model.layers,
                                                       init_rng);
        if (restored.spec.layer_sizes != engine.model.params.spec.layer_sizes)
            throw HashMismatchError("checkpoint layer sizes do not match the configured model");
        engine.model.params = restored;
        engine.kernel_mc = config.engine.kernel_mc;
        Rng rng(seed);
        if (n > 0) batch = infer(engine, grid, n, snapshot_times, rng);
    }

    write_text_file(dir + "/samples.csv", samples_csv(batch.times, batch.snapshots));
    for (std::size_t s = 0; s < batch.times.size(); ++s) {
        const std::string name = dir + "/samples_t" + std::to_string(s) + ".svg";
        write_text_file(name, svg_scatter(batch.snapshots[s], plot_lo, plot_hi,
                                          "backward time " + format_double(batch.times[s])));
    }

    // Terminal-sample metrics against a fresh draw from the target.
    if (n > 0 && !batch.snapshots.empty()) {
        const auto& terminal = batch.snapshots.back();
        if (config.target.dim() == terminal[0].size()) {
            const auto reference = sample_target(config.target, 65536, metric_rng);
            if (config.engine.kind == "torus-jump") {
                manifest["metrics"]["histogram_tv_vs_target"] =
                    histogram_tv(terminal, reference, 32, 0.0, 1.0);
            } else {
                std::vector<Vec> ref_small(reference.begin(),
                                           reference.begin() + std::min<std::size_t>(10000, reference.size()));
                manifest["metrics"]["energy_distance_vs_target"] = energy_distance(terminal, ref_small);
            }
            if (config.engine.kind == "gbm") {
                std::size_t positive = 0;
                for (const auto& x : terminal) {
                    bool all = true;
                    for (double v : x) all = all && v > 0.0;
                    if (all) ++positive;
                }
                manifest["metrics"]["positivity_rate"] =
                    static_cast<double>(positive) / static_cast<double>(terminal.size());
            }
        }
    }
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
    std::printf("wrote %zu snapshots to %s\n", batch.times.size(), dir.c_str());
    return 0;
}

// ----------------------------------------------------------------------------
// verify
// ----------------------------------------------------------------------------

int cmd_verify(const std::string& suite, const std::string& out_path) {
    std::vector<VerifySuiteResult> results;
    if (suite == "all") {
        for (const auto& name : verify_suite_names()) results.push_back(run_verify_suite(name));
    } else {
        results.push_back(run_verify_suite(suite));  // throws invalid_argument on unknown
    }
    json report = json::array();
    bool all_ok = true;
    for (const auto& result : results) {
        json entry;
        entry["suite"] = result.suite;
        entry["passed"] = result.all_passed();
        entry["checks"] = json::array();
        for (const auto& check : result.checks) {
            entry["checks"].push_back({{"name", check.name},
                                       {"passed", check.passed},
                                       {"observed", check.observed},
                                       {"threshold", check.threshold}});
            all_ok = all_ok && check.passed;
        }
        report.push_back(entry);
    }
    const std::string text = report.dump(2) + "\n";
    if (out_path.empty())
        std::fputs(text.c_str(), stdout);
    else
        write_text_file(out_path, text);
    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"denoising Markov model toolkit"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_dir, snapshots, suite = "all", report_path;
    std::uint64_t seed = 0;
    std::size_t n_samples = 2048;

    auto* train_cmd = app.add_subcommand("train", "train a model from a config");
    train_cmd->add_option("--config", config_path, "run config JSON")->required();
    auto* train_seed = train_cmd->add_option("--seed", seed, "override config seed");
    train_cmd->add_option("--out", out_dir, "override output directory");

    auto* sample_cmd = app.add_subcommand("sample", "sample from a trained checkpoint");
    sample_cmd->add_option("--config", config_path, "run config JSON")->required();
    sample_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint .dmmk path")->required();
    sample_cmd->add_option("--n", n_samples, "number of samples");
    sample_cmd->add_option("--snapshots", snapshots, "comma-separated backward snapshot times");
    auto* sample_seed = sample_cmd->add_option("--seed", seed, "sampling seed");
    sample_cmd->add_option("--out", out_dir, "override output directory");

    auto* verify_cmd = app.add_subcommand("verify", "run a verification suite");
    verify_cmd->add_option("--suite", suite, "reversal|cor1|quadrature|losses|gradcheck|all");
    verify_cmd->add_option("--out", report_path, "write the JSON report here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed())
            return cmd_train(config_path, seed, train_seed->count() > 0, out_dir);
        if (sample_cmd->parsed())
            return cmd_sample(config_path, checkpoint_path, n_samples, snapshots, seed,
                              sample_seed->count() > 0, out_dir);
        return cmd_verify(suite, report_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid argument: %s\n", e.what());
        return 2;
    } catch (const HashMismatchError& e) {
        std::fprintf(stderr, "hash mismatch: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "aborted: %s\n", e.what());
        return 3;
    }
}
