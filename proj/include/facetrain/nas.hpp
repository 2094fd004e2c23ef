#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "facetrain/errors.hpp"

namespace facetrain {

// One split-attention path: regular or stacked-asymmetric kernel, depth 2-4,
// optionally densely connected. Depth-wise convolutions are deliberately
// absent from the space.
enum class Kernel { K1, K3, K5, K7, A1x3_3x1, A1x5_5x1, A1x7_7x1 };

const char* kernel_name(Kernel k);
Kernel kernel_from_name(const std::string& name);

struct PathSpec {
    Kernel kernel = Kernel::K3;
    int depth = 2;  // 2, 3 or 4
    bool dense = false;

    bool operator==(const PathSpec&) const = default;
};

struct Stage {
    PathSpec path;
    int channels = 16;
    int stride = 1;

    bool operator==(const Stage&) const = default;
};

struct ArchSpec {
    std::vector<Stage> stages;
    int input_resolution = 32;
    int stem_channels = 16;

    bool operator==(const ArchSpec&) const = default;
    void validate() const;
    std::string to_string() const;
};

// FLOPs are multiply-adds doubled (2 * H * W * Cin * Cout * kh * kw per conv).
std::uint64_t conv_flops(std::uint64_t h, std::uint64_t w, std::uint64_t cin,
                         std::uint64_t cout, std::uint64_t kh, std::uint64_t kw);
std::uint64_t flops(const ArchSpec& arch);
std::uint64_t params(const ArchSpec& arch);

struct CostEstimate {
    std::uint64_t flops = 0;
    std::uint64_t params = 0;
    std::optional<double> latency_ms;
};

// Per-stage latency table. Wildcard fields (unset) match anything; lookups
// needing a channels value between two entries interpolate linearly.
struct LatencyEntry {
    std::optional<Kernel> kernel;
    std::optional<int> depth;
    std::optional<bool> dense;
    std::optional<int> channels;
    std::optional<int> resolution;
    double ms = 0.0;
};

struct LatencyTable {
    std::vector<LatencyEntry> entries;

    static LatencyTable from_json(const std::string& text);
};

double latency(const ArchSpec& arch, const LatencyTable& table);

enum class CostBackend { Flops, LatencyTable };

struct RewardConfig {
    double target = 1.0;      // TAR
    double alpha = -0.07;
    CostBackend backend = CostBackend::Flops;
};

// Weighted-product trade-off: acc * (cost / TAR)^alpha.
double reward(double acc, double cost, const RewardConfig& cfg);

// Enumerable search space: per-stage option lists plus fixed geometry.
struct SearchSpace {
    std::vector<std::vector<Stage>> stage_options;
    int input_resolution = 32;
    int stem_channels = 16;

    std::uint64_t size() const;
    ArchSpec arch_at(std::uint64_t index) const;  // mixed-radix decode

    static SearchSpace from_json(const std::string& text);
};

enum class Controller { Random, Evolutionary, Exhaustive };

struct EvolutionConfig {
    std::size_t population = 16;
    std::size_t tournament = 4;
    std::size_t elitism = 1;
};

struct SearchRecord {
    ArchSpec arch;
    double acc = 0.0;
    double cost = 0.0;
    double reward = 0.0;
};

struct SearchResult {
    ArchSpec best;
    double best_reward = 0.0;
    std::vector<SearchRecord> history;
};

using EvaluateFn = std::function<double(const ArchSpec&)>;  // proxy accuracy
using CostFn = std::function<double(const ArchSpec&)>;

SearchResult search(const SearchSpace& space, const EvaluateFn& evaluate, const CostFn& cost_fn,
                    const RewardConfig& reward_cfg, Controller controller, std::size_t budget,
                    std::uint64_t seed, const EvolutionConfig& evo = {});

// Compound scaling: width/depth/resolution multipliers, with depth clamped
// to the search space's 2..4 band.
ArchSpec scale_arch(const ArchSpec& arch, double width_mult, double depth_mult,
                    double resolution_mult);

}  // namespace facetrain
