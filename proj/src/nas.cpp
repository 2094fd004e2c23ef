#include "facetrain/nas.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace facetrain {

const char* kernel_name(Kernel k) {
    switch (k) {
        case Kernel::K1: return "1x1";
        case Kernel::K3: return "3x3";
        case Kernel::K5: return "5x5";
        case Kernel::K7: return "7x7";
        case Kernel::A1x3_3x1: return "1x3+3x1";
        case Kernel::A1x5_5x1: return "1x5+5x1";
        case Kernel::A1x7_7x1: return "1x7+7x1";
    }
    return "?";
}

Kernel kernel_from_name(const std::string& name) {
    static const std::pair<const char*, Kernel> table[] = {
        {"1x1", Kernel::K1},         {"3x3", Kernel::K3},
        {"5x5", Kernel::K5},         {"7x7", Kernel::K7},
        {"1x3+3x1", Kernel::A1x3_3x1}, {"1x5+5x1", Kernel::A1x5_5x1},
        {"1x7+7x1", Kernel::A1x7_7x1}};
    for (const auto& [n, k] : table)
        if (name == n) return k;
    throw ConfigError("unknown kernel '" + name + "'");
}

void ArchSpec::validate() const {
    if (input_resolution <= 0 || stem_channels <= 0)
        throw InvalidSpec("ArchSpec: resolution and stem channels must be positive");
    for (const auto& st : stages) {
        if (st.channels <= 0 || st.stride <= 0) throw InvalidSpec("ArchSpec: bad stage geometry");
        if (st.path.depth < 2 || st.path.depth > 4)
            throw InvalidSpec("ArchSpec: path depth must be 2, 3 or 4");
    }
}

std::string ArchSpec::to_string() const {
    std::ostringstream os;
    os << "r" << input_resolution << ":stem" << stem_channels;
    for (const auto& st : stages)
        os << "|" << kernel_name(st.path.kernel) << " d" << st.path.depth
           << (st.path.dense ? " dense" : "") << " c" << st.channels << " s" << st.stride;
    return os.str();
}

std::uint64_t conv_flops(std::uint64_t h, std::uint64_t w, std::uint64_t cin,
                         std::uint64_t cout, std::uint64_t kh, std::uint64_t kw) {
    return 2 * h * w * cin * cout * kh * kw;
}

namespace {

struct ConvShape {
    std::uint64_t cin, cout, kh, kw;
};

int regular_kernel_size(Kernel k) {
    switch (k) {
        case Kernel::K1: return 1;
        case Kernel::K3: case Kernel::A1x3_3x1: return 3;
        case Kernel::K5: case Kernel::A1x5_5x1: return 5;
        case Kernel::K7: case Kernel::A1x7_7x1: return 7;
    }
    return 1;
}

bool is_asymmetric(Kernel k) {
    return k == Kernel::A1x3_3x1 || k == Kernel::A1x5_5x1 || k == Kernel::A1x7_7x1;
}

// One path layer as a list of convs. An asymmetric kernel is two stacked 1D
// convolutions (1xk into kx1).
void layer_convs(Kernel kernel, std::uint64_t cin, std::uint64_t cout,
                 std::vector<ConvShape>& out) {
    const std::uint64_t k = static_cast<std::uint64_t>(regular_kernel_size(kernel));
    if (is_asymmetric(kernel)) {
        out.push_back({cin, cout, 1, k});
        out.push_back({cout, cout, k, 1});
    } else {
        out.push_back({cin, cout, k, k});
    }
}

// Expands a stage into its convolutions. Dense stages concatenate all prior
// layer outputs as input and close with a 1x1 combine conv (the cost proxy
// for split-attention aggregation).
void stage_convs(const Stage& st, std::uint64_t cin, std::vector<ConvShape>& out) {
    const std::uint64_t c = static_cast<std::uint64_t>(st.channels);
    for (int layer = 0; layer < st.path.depth; ++layer) {
        const std::uint64_t in = (layer == 0) ? cin : (st.path.dense ? c * layer : c);
        layer_convs(st.path.kernel, in, c, out);
    }
    if (st.path.dense) out.push_back({c * static_cast<std::uint64_t>(st.path.depth), c, 1, 1});
}

template <typename PerConv>
void walk_arch(const ArchSpec& arch, PerConv&& per_conv) {
    arch.validate();
    std::uint64_t res = static_cast<std::uint64_t>(arch.input_resolution);
    per_conv(ConvShape{3, static_cast<std::uint64_t>(arch.stem_channels), 3, 3}, res);
    std::uint64_t cin = static_cast<std::uint64_t>(arch.stem_channels);
    for (const auto& st : arch.stages) {
        res = (res + static_cast<std::uint64_t>(st.stride) - 1) /
              static_cast<std::uint64_t>(st.stride);
        std::vector<ConvShape> convs;
        stage_convs(st, cin, convs);
        for (const auto& cs : convs) per_conv(cs, res);
        cin = static_cast<std::uint64_t>(st.channels);
    }
}

}  // namespace

std::uint64_t flops(const ArchSpec& arch) {
    std::uint64_t total = 0;
    walk_arch(arch, [&](const ConvShape& c, std::uint64_t res) {
        total += conv_flops(res, res, c.cin, c.cout, c.kh, c.kw);
    });
    return total;
}

std::uint64_t params(const ArchSpec& arch) {
    std::uint64_t total = 0;
    walk_arch(arch, [&](const ConvShape& c, std::uint64_t) {
        total += c.cin * c.cout * c.kh * c.kw;
    });
    return total;
}

namespace {

bool entry_matches(const LatencyEntry& e, const Stage& st, int resolution) {
    if (e.kernel && *e.kernel != st.path.kernel) return false;
    if (e.depth && *e.depth != st.path.depth) return false;
    if (e.dense && *e.dense != st.path.dense) return false;
    if (e.resolution && *e.resolution != resolution) return false;
    return true;
}

double stage_latency(const Stage& st, int resolution, const LatencyTable& table) {
    const LatencyEntry* below = nullptr;
    const LatencyEntry* above = nullptr;
    for (const auto& e : table.entries) {
        if (!entry_matches(e, st, resolution)) continue;
        if (!e.channels) return e.ms;  // universal channel entry
        if (*e.channels == st.channels) return e.ms;
        if (*e.channels < st.channels) {
            if (!below || *below->channels < *e.channels) below = &e;
        } else {
            if (!above || *above->channels > *e.channels) above = &e;
        }
    }
    if (below && above) {
        const double t = static_cast<double>(st.channels - *below->channels) /
                         static_cast<double>(*above->channels - *below->channels);
        return below->ms + t * (above->ms - below->ms);
    }
    throw TableMiss("latency: no bracketing entries for stage " + std::string(kernel_name(st.path.kernel)) +
                    " c" + std::to_string(st.channels));
}

}  // namespace

double latency(const ArchSpec& arch, const LatencyTable& table) {
    arch.validate();
    double total = 0.0;
    int res = arch.input_resolution;
    for (const auto& st : arch.stages) {
        res = (res + st.stride - 1) / st.stride;
        total += stage_latency(st, res, table);
    }
    return total;
}

double reward(double acc, double cost, const RewardConfig& cfg) {
    if (!(cost > 0.0)) throw NonPositiveCost("reward: cost must be positive");
    return acc * std::pow(cost / cfg.target, cfg.alpha);
}

std::uint64_t SearchSpace::size() const {
    std::uint64_t n = 1;
    for (const auto& opts : stage_options) n *= static_cast<std::uint64_t>(opts.size());
    return stage_options.empty() ? 0 : n;
}

ArchSpec SearchSpace::arch_at(std::uint64_t index) const {
    ArchSpec arch;
    arch.input_resolution = input_resolution;
    arch.stem_channels = stem_channels;
    for (const auto& opts : stage_options) {
        arch.stages.push_back(opts[index % opts.size()]);
        index /= opts.size();
    }
    return arch;
}

namespace {

std::size_t one_field_distance(const Stage& a, const Stage& b) {
    std::size_t d = 0;
    d += a.path.kernel != b.path.kernel;
    d += a.path.depth != b.path.depth;
    d += a.path.dense != b.path.dense;
    d += a.channels != b.channels;
    d += a.stride != b.stride;
    return d;
}

}  // namespace

SearchResult search(const SearchSpace& space, const EvaluateFn& evaluate, const CostFn& cost_fn,
                    const RewardConfig& reward_cfg, Controller controller, std::size_t budget,
                    std::uint64_t seed, const EvolutionConfig& evo) {
    const std::uint64_t space_size = space.size();
    if (space_size == 0) throw EmptySpace("search: empty space");
    if (budget < 1) throw InvalidSpec("search: budget must be >= 1");

    SearchResult result;
    double best = -1.0;
    auto run_one = [&](const ArchSpec& arch) {
        const double acc = evaluate(arch);
        const double cost = cost_fn(arch);
        const double r = reward(acc, cost, reward_cfg);
        result.history.push_back({arch, acc, cost, r});
        if (r > best) {
            best = r;
            result.best = arch;
            result.best_reward = r;
        }
        return r;
    };

    std::mt19937_64 rng(seed);

    if (controller == Controller::Exhaustive) {
        for (std::uint64_t i = 0; i < space_size; ++i) run_one(space.arch_at(i));
        return result;
    }

    if (controller == Controller::Random) {
        // without-replacement: shuffled enumeration truncated at the budget
        std::vector<std::uint64_t> order(space_size);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t n = std::min<std::uint64_t>(budget, space_size);
        for (std::size_t i = 0; i < n; ++i) run_one(space.arch_at(order[i]));
        return result;
    }

    // Evolutionary: per-stage genome, tournament selection, single-field
    // mutation, elitism.
    struct Individual {
        std::vector<std::size_t> genes;  // option index per stage
        double reward = 0.0;
    };
    auto decode = [&](const Individual& ind) {
        ArchSpec arch;
        arch.input_resolution = space.input_resolution;
        arch.stem_channels = space.stem_channels;
        for (std::size_t s = 0; s < ind.genes.size(); ++s)
            arch.stages.push_back(space.stage_options[s][ind.genes[s]]);
        return arch;
    };

    std::size_t used = 0;
    std::vector<Individual> pop;
    for (std::size_t i = 0; i < evo.population && used < budget; ++i) {
        Individual ind;
        for (const auto& opts : space.stage_options)
            ind.genes.push_back(std::uniform_int_distribution<std::size_t>(0, opts.size() - 1)(rng));
        ind.reward = run_one(decode(ind));
        ++used;
        pop.push_back(std::move(ind));
    }

    auto tournament = [&]() -> const Individual& {
        std::size_t winner = std::uniform_int_distribution<std::size_t>(0, pop.size() - 1)(rng);
        for (std::size_t t = 1; t < evo.tournament; ++t) {
            const std::size_t c = std::uniform_int_distribution<std::size_t>(0, pop.size() - 1)(rng);
            if (pop[c].reward > pop[winner].reward) winner = c;
        }
        return pop[winner];
    };

    while (used < budget) {
        std::vector<Individual> next;
        std::stable_sort(pop.begin(), pop.end(),
                         [](const Individual& a, const Individual& b) { return a.reward > b.reward; });
        for (std::size_t e = 0; e < evo.elitism && e < pop.size(); ++e) next.push_back(pop[e]);
        while (next.size() < evo.population && used < budget) {
            Individual child = tournament();
            // mutate one stage, preferring an option that differs in one field
            const std::size_t s =
                std::uniform_int_distribution<std::size_t>(0, child.genes.size() - 1)(rng);
            const auto& opts = space.stage_options[s];
            if (opts.size() > 1) {
                const Stage& cur = opts[child.genes[s]];
                std::vector<std::size_t> near, other;
                for (std::size_t o = 0; o < opts.size(); ++o) {
                    if (o == child.genes[s]) continue;
                    (one_field_distance(cur, opts[o]) == 1 ? near : other).push_back(o);
                }
                const auto& cand = near.empty() ? other : near;
                child.genes[s] =
                    cand[std::uniform_int_distribution<std::size_t>(0, cand.size() - 1)(rng)];
            }
            child.reward = run_one(decode(child));
            ++used;
            next.push_back(std::move(child));
        }
        pop = std::move(next);
    }
    return result;
}

ArchSpec scale_arch(const ArchSpec& arch, double width_mult, double depth_mult,
                    double resolution_mult) {
    if (!(width_mult > 0.0 && depth_mult > 0.0 && resolution_mult > 0.0))
        throw InvalidSpec("scale_arch: multipliers must be positive");
    ArchSpec out = arch;
    out.input_resolution = std::max(1, static_cast<int>(std::lround(arch.input_resolution * resolution_mult)));
    out.stem_channels = std::max(1, static_cast<int>(std::lround(arch.stem_channels * width_mult)));
    for (auto& st : out.stages) {
        st.channels = std::max(1, static_cast<int>(std::lround(st.channels * width_mult)));
        st.path.depth = std::clamp(static_cast<int>(std::lround(st.path.depth * depth_mult)), 2, 4);
    }
    return out;
}

namespace {

Stage stage_from_json(const nlohmann::json& j) {
    Stage st;
    st.path.kernel = kernel_from_name(j.at("kernel").get<std::string>());
    st.path.depth = j.at("depth");
    st.path.dense = j.at("dense");
    st.channels = j.value("channels", 16);
    st.stride = j.value("stride", 1);
    return st;
}

}  // namespace

SearchSpace SearchSpace::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("search space: ") + e.what());
    }
    SearchSpace space;
    space.input_resolution = j.value("input_resolution", 32);
    space.stem_channels = j.value("stem_channels", 16);
    for (const auto& stage : j.at("stages")) {
        std::vector<Stage> opts;
        if (stage.contains("options")) {
            for (const auto& o : stage.at("options")) opts.push_back(stage_from_json(o));
        } else {
            // product form: kernels x depths x dense at fixed channels/stride
            const int channels = stage.value("channels", 16);
            const int stride = stage.value("stride", 1);
            for (const auto& kn : stage.at("kernels"))
                for (const auto& dp : stage.at("depths"))
                    for (const auto& dn : stage.at("dense")) {
                        Stage st;
                        st.path.kernel = kernel_from_name(kn.get<std::string>());
                        st.path.depth = dp;
                        st.path.dense = dn;
                        st.channels = channels;
                        st.stride = stride;
                        opts.push_back(st);
                    }
        }
        if (opts.empty()) throw EmptySpace("search space: stage with no options");
        space.stage_options.push_back(std::move(opts));
    }
    return space;
}

LatencyTable LatencyTable::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("latency table: ") + e.what());
    }
    LatencyTable table;
    for (const auto& e : j.at("entries")) {
        LatencyEntry entry;
        if (e.contains("kernel")) entry.kernel = kernel_from_name(e.at("kernel").get<std::string>());
        if (e.contains("depth")) entry.depth = e.at("depth").get<int>();
        if (e.contains("dense")) entry.dense = e.at("dense").get<bool>();
        if (e.contains("channels")) entry.channels = e.at("channels").get<int>();
        if (e.contains("resolution")) entry.resolution = e.at("resolution").get<int>();
        entry.ms = e.at("ms");
        table.entries.push_back(entry);
    }
    return table;
}

}  // namespace facetrain
