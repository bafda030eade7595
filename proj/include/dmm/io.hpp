#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmm/linalg.hpp"
#include "dmm/mlp.hpp"

namespace dmm {

// File formats: CSV artifacts with fixed headers, and the checkpoint binary
// ("DMMK" magic, u32 version, u32 layer count, u32 layer sizes, f64 params,
// little-endian throughout).

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_text_file: cannot open " + path);
    out << content;
    if (!out) throw std::runtime_error("write_text_file: write failed for " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_text_file: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string loss_history_csv(const std::vector<double>& history) {
    std::string out = "epoch,loss\n";
    for (std::size_t i = 0; i < history.size(); ++i)
        out += std::to_string(i + 1) + "," + format_double(history[i]) + "\n";
    return out;
}

// Snapshot samples: one row per (snapshot time, sample).
inline std::string samples_csv(const std::vector<double>& times,
                               const std::vector<std::vector<Vec>>& snapshots) {
    if (times.size() != snapshots.size()) throw std::invalid_argument("samples_csv: shape mismatch");
    const std::size_t dim = snapshots.empty() || snapshots[0].empty() ? 1 : snapshots[0][0].size();
    std::string out = "sample_id,t";
    for (std::size_t d = 0; d < dim; ++d) out += ",x_" + std::to_string(d + 1);
    out += "\n";
    for (std::size_t s = 0; s < times.size(); ++s)
        for (std::size_t i = 0; i < snapshots[s].size(); ++i) {
            out += std::to_string(i) + "," + format_double(times[s]);
            for (double v : snapshots[s][i]) out += "," + format_double(v);
            out += "\n";
        }
    return out;
}

// Finite-state snapshots use the same layout with the state index as payload.
inline std::string state_samples_csv(const std::vector<double>& times,
                                     const std::vector<std::vector<std::size_t>>& snapshots) {
    std::string out = "sample_id,t,state_index\n";
    for (std::size_t s = 0; s < times.size(); ++s)
        for (std::size_t i = 0; i < snapshots[s].size(); ++i)
            out += std::to_string(i) + "," + format_double(times[s]) + "," +
                   std::to_string(snapshots[s][i]) + "\n";
    return out;
}

inline std::string trajectory_csv(const std::vector<std::vector<double>>& times,
                                  const std::vector<std::vector<std::size_t>>& states) {
    if (times.size() != states.size()) throw std::invalid_argument("trajectory_csv: shape mismatch");
    std::string out = "path_id,time,state_index\n";
    for (std::size_t p = 0; p < times.size(); ++p)
        for (std::size_t k = 0; k < times[p].size(); ++k)
            out += std::to_string(p) + "," + format_double(times[p][k]) + "," +
                   std::to_string(states[p][k]) + "\n";
    return out;
}

inline std::string grid_csv(const std::vector<double>& grid, std::size_t n) {
    std::string out = "i,j,value\n";
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out += std::to_string(i) + "," + std::to_string(j) + "," +
                   format_double(grid[i * n + j]) + "\n";
    return out;
}

// ----------------------------------------------------------------------------
// Checkpoint binary
// ----------------------------------------------------------------------------

inline void write_checkpoint(const std::string& path, const MlpParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_checkpoint: cannot open " + path);
    out.write("DMMK", 4);
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint32_t count = static_cast<std::uint32_t>(params.spec.layer_sizes.size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    for (const std::size_t s : params.spec.layer_sizes) {
        const std::uint32_t v = static_cast<std::uint32_t>(s);
        out.write(reinterpret_cast<const char*>(&v), 4);
    }
    out.write(reinterpret_cast<const char*>(params.theta.data()),
              static_cast<std::streamsize>(params.theta.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write_checkpoint: write failed for " + path);
}

inline MlpParams read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "DMMK")
        throw std::runtime_error("read_checkpoint: bad magic in " + path);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != 1) throw std::runtime_error("read_checkpoint: unsupported version");
    std::uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 4);
    if (!in || count < 2 || count > 64) throw std::runtime_error("read_checkpoint: bad layer count");
    MlpParams params;
    params.spec.layer_sizes.resize(count);
    for (auto& s : params.spec.layer_sizes) {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        s = v;
    }
    params.theta.resize(params.spec.param_count());
    in.read(reinterpret_cast<char*>(params.theta.data()),
            static_cast<std::streamsize>(params.theta.size() * sizeof(double)));
    if (!in) throw std::runtime_error("read_checkpoint: truncated file " + path);
    params.check_finite();
    return params;
}

// FNV-1a over the canonical config serialization.
inline std::string fnv1a_hex(const std::string& data) {
    std::uint64_t hash = 14695981039346656037ULL;
    for (const unsigned char c : data) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

}  // namespace dmm
