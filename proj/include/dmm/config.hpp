#pragma once

#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "dmm/diffusion.hpp"
#include "dmm/targets.hpp"
#include "dmm/torus_jump.hpp"
#include "dmm/train.hpp"

namespace dmm {

// Versioned JSON run configuration with sections {engine, target, train,
// grid, output}. Unknown keys are rejected everywhere so typos fail loudly
// instead of silently keeping defaults.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                                const std::string& where) {
    if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
}

template <typename T>
T get_or(const nlohmann::json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config: bad value for '" + key + "'");
    }
}

}  // namespace detail

struct EngineConfig {
    std::string kind;  // ou | gbm | torus-jump | finite-state

    // ou / gbm
    std::size_t dim = 1;
    std::vector<std::vector<double>> sigma{{1.0}};

    // torus-jump
    TorusJumpSpec torus;
    std::size_t kernel_mc = 8;
    std::size_t fourier_modes = 8;

    // finite-state
    std::size_t dims = 1;
    std::size_t states_per_dim = 3;
    bool masked = false;
};

struct ModelConfig {
    std::size_t hidden = 128;
    std::size_t layers = 5;
};

struct OutputConfig {
    std::string dir = "out";
};

struct RunConfig {
    int schema_version = 1;
    EngineConfig engine;
    TargetSpec target;
    TrainConfig train;
    ModelConfig model;
    std::size_t dataset_size = 4096;
    double kappa = 0.02;
    OutputConfig output;
    std::string canonical;  // canonical serialization the hash is taken over
};

inline RunConfig parse_run_config(const nlohmann::json& root) {
    using detail::get_or;
    using detail::reject_unknown_keys;
    reject_unknown_keys(root, {"schema_version", "engine", "target", "train", "grid", "output"},
                        "top level");
    RunConfig config;
    config.schema_version = get_or<int>(root, "schema_version", -1);
    if (config.schema_version != 1)
        throw ConfigError("config: schema_version must be 1");
    if (!root.contains("engine") || !root.contains("train"))
        throw ConfigError("config: 'engine' and 'train' sections are required");

    const auto& engine = root.at("engine");
    reject_unknown_keys(engine,
                        {"kind", "dim", "sigma", "sigma_j", "mass", "grid_n", "mode_cutoff",
                         "kernel_mc", "fourier_modes", "dims", "states_per_dim", "masked"},
                        "engine");
    config.engine.kind = get_or<std::string>(engine, "kind", "");
    if (config.engine.kind != "ou" && config.engine.kind != "gbm" &&
        config.engine.kind != "torus-jump" && config.engine.kind != "finite-state")
        throw ConfigError("config: engine.kind must be ou|gbm|torus-jump|finite-state");
    config.engine.dim = get_or<std::size_t>(engine, "dim", 1);
    if (engine.contains("sigma")) {
        const auto& sig = engine.at("sigma");
        if (sig.is_number()) {
            config.engine.sigma = {{sig.get<double>()}};
        } else {
            config.engine.sigma = sig.get<std::vector<std::vector<double>>>();
        }
    }
    config.engine.torus.sigma_j = get_or<double>(engine, "sigma_j", 0.15);
    config.engine.torus.mass = get_or<double>(engine, "mass", 3.0);
    config.engine.torus.grid_n = get_or<std::size_t>(engine, "grid_n", 64);
    config.engine.torus.mode_cutoff = get_or<int>(engine, "mode_cutoff", 32);
    config.engine.kernel_mc = get_or<std::size_t>(engine, "kernel_mc", 8);
    config.engine.fourier_modes = get_or<std::size_t>(engine, "fourier_modes", 8);
    config.engine.dims = get_or<std::size_t>(engine, "dims", 1);
    config.engine.states_per_dim = get_or<std::size_t>(engine, "states_per_dim", 3);
    config.engine.masked = get_or<bool>(engine, "masked", false);

    if (root.contains("target")) {
        const auto& target = root.at("target");
        reject_unknown_keys(target, {"name", "states", "seed", "jitter"}, "target");
        config.target = TargetSpec::by_name(get_or<std::string>(target, "name", "gmm1d-abs"));
        config.target.finite_states = get_or<std::size_t>(target, "states", 3);
        config.target.finite_seed = get_or<std::uint64_t>(target, "seed", 1);
        config.target.jitter = get_or<double>(target, "jitter", 0.01);
    }

    const auto& train = root.at("train");
    reject_unknown_keys(train,
                        {"epochs", "batch", "horizon", "t_min", "psi", "learning_rate", "seed",
                         "hidden", "layers", "dataset_size"},
                        "train");
    config.train.epochs = get_or<std::size_t>(train, "epochs", 1000);
    config.train.batch = get_or<std::size_t>(train, "batch", 128);
    config.train.horizon = get_or<double>(train, "horizon", 4.0);
    config.train.t_min = get_or<double>(train, "t_min", 1e-3);
    const std::string psi = get_or<std::string>(train, "psi", "uniform");
    if (psi != "uniform" && psi != "log-uniform")
        throw ConfigError("config: train.psi must be uniform|log-uniform");
    config.train.psi_log_uniform = (psi == "log-uniform");
    config.train.learning_rate = get_or<double>(train, "learning_rate", 1e-3);
    config.train.seed = get_or<std::uint64_t>(train, "seed", 1);
    config.model.hidden = get_or<std::size_t>(train, "hidden", 128);
    config.model.layers = get_or<std::size_t>(train, "layers", 5);
    config.dataset_size = get_or<std::size_t>(train, "dataset_size", 4096);
    config.train.validate();

    if (root.contains("grid")) {
        const auto& grid = root.at("grid");
        reject_unknown_keys(grid, {"kappa"}, "grid");
        config.kappa = get_or<double>(grid, "kappa", 0.02);
    }
    if (root.contains("output")) {
        const auto& output = root.at("output");
        reject_unknown_keys(output, {"dir"}, "output");
        config.output.dir = get_or<std::string>(output, "dir", "out");
    }
    config.canonical = root.dump();
    return config;
}

inline RunConfig parse_run_config_text(const std::string& text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: JSON parse error: ") + e.what());
    }
    return parse_run_config(root);
}

}  // namespace dmm
