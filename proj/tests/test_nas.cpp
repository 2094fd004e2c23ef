#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "facetrain/errors.hpp"
#include "facetrain/nas.hpp"

using namespace facetrain;

namespace {

Stage make_stage(Kernel k, int depth, bool dense, int channels, int stride) {
    Stage st;
    st.path.kernel = k;
    st.path.depth = depth;
    st.path.dense = dense;
    st.channels = channels;
    st.stride = stride;
    return st;
}

// 42 x 18 x 1 = 756 candidate architectures.
SearchSpace toy_space() {
    SearchSpace space;
    space.input_resolution = 16;
    space.stem_channels = 8;
    std::vector<Stage> s0;
    for (Kernel k : {Kernel::K1, Kernel::K3, Kernel::K5, Kernel::K7, Kernel::A1x3_3x1,
                     Kernel::A1x5_5x1, Kernel::A1x7_7x1})
        for (int d : {2, 3, 4})
            for (bool dense : {false, true}) s0.push_back(make_stage(k, d, dense, 16, 1));
    std::vector<Stage> s1;
    for (Kernel k : {Kernel::K1, Kernel::K3, Kernel::K5})
        for (int d : {2, 3, 4})
            for (bool dense : {false, true}) s1.push_back(make_stage(k, d, dense, 24, 2));
    space.stage_options = {s0, s1, {make_stage(Kernel::K3, 2, false, 32, 2)}};
    return space;
}

double proxy_acc(const ArchSpec& arch, double target) {
    const double x = std::log(static_cast<double>(flops(arch)) / target);
    return 0.5 + 0.4 * std::exp(-x * x);
}

}  // namespace

TEST_CASE("kernel names round-trip") {
    for (Kernel k : {Kernel::K1, Kernel::K3, Kernel::K5, Kernel::K7, Kernel::A1x3_3x1,
                     Kernel::A1x5_5x1, Kernel::A1x7_7x1})
        CHECK(kernel_from_name(kernel_name(k)) == k);
    CHECK_THROWS_AS(kernel_from_name("2x2"), ConfigError);
}

TEST_CASE("conv FLOPs and params: pinned small cases") {
    CHECK(conv_flops(8, 8, 16, 16, 3, 3) == 294912);
    CHECK(conv_flops(1, 1, 1, 1, 1, 1) == 2);
    // asymmetric 3x3 replacement = 1x3 then 3x1
    CHECK(conv_flops(8, 8, 16, 16, 1, 3) + conv_flops(8, 8, 16, 16, 3, 1) == 196608);
}

TEST_CASE("arch FLOPs follow the stacked-conv expansion") {
    ArchSpec arch;
    arch.input_resolution = 8;
    arch.stem_channels = 16;
    arch.stages = {make_stage(Kernel::K3, 2, false, 16, 1)};
    // stem 3->16 plus two 3x3 16->16 layers at 8x8
    const std::uint64_t stem = conv_flops(8, 8, 3, 16, 3, 3);
    CHECK(flops(arch) == stem + 2 * 294912);
    CHECK(params(arch) == 3 * 16 * 9 + 2 * 2304);

    arch.stages[0].path.kernel = Kernel::A1x3_3x1;
    CHECK(flops(arch) == stem + 2 * 196608);
    CHECK(params(arch) == 3 * 16 * 9 + 2 * 1536);
}

TEST_CASE("dense stages widen inputs and add a combine conv") {
    ArchSpec plain;
    plain.input_resolution = 4;
    plain.stem_channels = 8;
    plain.stages = {make_stage(Kernel::K1, 3, false, 8, 1)};
    ArchSpec dense = plain;
    dense.stages[0].path.dense = true;
    // layer inputs become 8, 8, 16; plus an (8*3 -> 8) 1x1 combine
    const std::uint64_t r = 4 * 4;
    const std::uint64_t expect_extra =
        conv_flops(4, 4, 16, 8, 1, 1) - conv_flops(4, 4, 8, 8, 1, 1) + conv_flops(4, 4, 24, 8, 1, 1);
    CHECK(flops(dense) == flops(plain) + expect_extra);
    CHECK(r > 0);
}

TEST_CASE("doubling resolution quadruples FLOPs but not params") {
    ArchSpec arch;
    arch.input_resolution = 8;
    arch.stem_channels = 16;
    arch.stages = {make_stage(Kernel::K5, 3, true, 16, 1)};
    ArchSpec big = arch;
    big.input_resolution = 16;
    CHECK(flops(big) == 4 * flops(arch));
    CHECK(params(big) == params(arch));
}

TEST_CASE("strides shrink the spatial grid with ceiling division") {
    ArchSpec arch;
    arch.input_resolution = 7;
    arch.stem_channels = 4;
    arch.stages = {make_stage(Kernel::K1, 2, false, 4, 2)};
    // ceil(7/2) = 4
    CHECK(flops(arch) == conv_flops(7, 7, 3, 4, 3, 3) + 2 * conv_flops(4, 4, 4, 4, 1, 1));
}

TEST_CASE("invalid archs are rejected") {
    ArchSpec bad;
    bad.stages = {make_stage(Kernel::K3, 5, false, 16, 1)};
    CHECK_THROWS_AS(bad.validate(), InvalidSpec);
    bad.stages = {make_stage(Kernel::K3, 2, false, 0, 1)};
    CHECK_THROWS_AS(bad.validate(), InvalidSpec);
}

TEST_CASE("latency: universal entries, interpolation, misses") {
    ArchSpec arch;
    arch.input_resolution = 16;
    arch.stem_channels = 8;
    arch.stages = {make_stage(Kernel::K3, 2, false, 24, 1),
                   make_stage(Kernel::K5, 3, true, 24, 2)};

    LatencyTable universal;
    universal.entries.push_back({std::nullopt, std::nullopt, std::nullopt, std::nullopt,
                                 std::nullopt, 1.5});
    CHECK(latency(arch, universal) == doctest::Approx(3.0).epsilon(1e-12));

    LatencyTable interp;
    LatencyEntry lo;
    lo.channels = 16;
    lo.ms = 2.0;
    LatencyEntry hi;
    hi.channels = 32;
    hi.ms = 4.0;
    interp.entries = {lo, hi};
    CHECK(latency(arch, interp) == doctest::Approx(6.0).epsilon(1e-12));  // 3 ms per stage at c=24

    LatencyTable narrow;
    LatencyEntry only7;
    only7.kernel = Kernel::K7;
    only7.ms = 1.0;
    narrow.entries = {only7};
    CHECK_THROWS_AS(latency(arch, narrow), TableMiss);
}

TEST_CASE("latency table JSON parsing") {
    auto table = LatencyTable::from_json(R"({"entries": [
        {"kernel": "3x3", "channels": 16, "ms": 2.0},
        {"kernel": "3x3", "channels": 32, "ms": 4.0},
        {"ms": 9.0}
    ]})");
    REQUIRE(table.entries.size() == 3);
    CHECK(table.entries[0].kernel == Kernel::K3);
    CHECK(table.entries[2].ms == 9.0);
    CHECK_FALSE(table.entries[2].channels.has_value());
    CHECK_THROWS_AS(LatencyTable::from_json("not json"), ConfigError);
}

TEST_CASE("reward: pinned examples and error path") {
    RewardConfig cfg;
    cfg.target = 100.0;
    cfg.alpha = -0.07;
    CHECK(reward(0.8, 100.0, cfg) == 0.8);
    CHECK(reward(0.9, 200.0, cfg) == doctest::Approx(0.9 * std::pow(2.0, -0.07)).epsilon(1e-14));
    CHECK(reward(0.9, 50.0, cfg) == doctest::Approx(0.9 * std::pow(2.0, 0.07)).epsilon(1e-14));
    // frozen decimal expansions of the two above
    CHECK(reward(0.9, 200.0, cfg) == doctest::Approx(0.857375).epsilon(1e-5));
    CHECK(reward(0.9, 50.0, cfg) == doctest::Approx(0.944745).epsilon(1e-5));
    CHECK_THROWS_AS(reward(0.5, 0.0, cfg), NonPositiveCost);
    CHECK_THROWS_AS(reward(0.5, -1.0, cfg), NonPositiveCost);
}

TEST_CASE("reward is monotone: higher acc helps, higher cost hurts (alpha < 0)") {
    RewardConfig cfg;
    cfg.target = 10.0;
    CHECK(reward(0.9, 5.0, cfg) > reward(0.8, 5.0, cfg));
    CHECK(reward(0.9, 5.0, cfg) > reward(0.9, 6.0, cfg));
}

TEST_CASE("search space indexing is a bijection") {
    SearchSpace space = toy_space();
    CHECK(space.size() == 756);
    std::set<std::string> seen;
    for (std::uint64_t i = 0; i < space.size(); ++i)
        CHECK(seen.insert(space.arch_at(i).to_string()).second);
}

TEST_CASE("search space JSON: product form") {
    auto space = SearchSpace::from_json(R"({
        "input_resolution": 16, "stem_channels": 8,
        "stages": [
            {"kernels": ["1x1", "3x3"], "depths": [2, 3], "dense": [false, true], "channels": 16},
            {"options": [{"kernel": "5x5", "depth": 2, "dense": false, "channels": 24, "stride": 2}]}
        ]})");
    CHECK(space.size() == 8);
    CHECK(space.arch_at(0).stages.size() == 2);
    CHECK(space.arch_at(0).stages[1].path.kernel == Kernel::K5);
}

TEST_CASE("exhaustive search equals brute-force argmax") {
    SearchSpace space = toy_space();
    RewardConfig cfg;
    cfg.target = 2.0e7;
    auto acc = [&](const ArchSpec& a) { return proxy_acc(a, cfg.target); };
    auto cost = [](const ArchSpec& a) { return static_cast<double>(flops(a)); };

    auto res = search(space, acc, cost, cfg, Controller::Exhaustive, 1, 1);
    CHECK(res.history.size() == 756);

    double best = -1.0;
    ArchSpec best_arch;
    for (std::uint64_t i = 0; i < space.size(); ++i) {
        ArchSpec a = space.arch_at(i);
        const double r = reward(acc(a), cost(a), cfg);
        if (r > best) {
            best = r;
            best_arch = a;
        }
    }
    CHECK(res.best_reward == best);
    CHECK(res.best == best_arch);
}

TEST_CASE("random search with full budget covers the space") {
    SearchSpace space = toy_space();
    RewardConfig cfg;
    cfg.target = 2.0e7;
    auto acc = [&](const ArchSpec& a) { return proxy_acc(a, cfg.target); };
    auto cost = [](const ArchSpec& a) { return static_cast<double>(flops(a)); };
    auto full = search(space, acc, cost, cfg, Controller::Random, 756, 3);
    auto exact = search(space, acc, cost, cfg, Controller::Exhaustive, 1, 3);
    CHECK(full.best_reward == exact.best_reward);
    CHECK(full.history.size() == 756);
}

TEST_CASE("search is deterministic per seed") {
    SearchSpace space = toy_space();
    RewardConfig cfg;
    cfg.target = 2.0e7;
    auto acc = [&](const ArchSpec& a) { return proxy_acc(a, cfg.target); };
    auto cost = [](const ArchSpec& a) { return static_cast<double>(flops(a)); };
    for (Controller c : {Controller::Random, Controller::Evolutionary}) {
        auto a1 = search(space, acc, cost, cfg, c, 60, 11);
        auto a2 = search(space, acc, cost, cfg, c, 60, 11);
        REQUIRE(a1.history.size() == a2.history.size());
        for (std::size_t i = 0; i < a1.history.size(); ++i)
            CHECK(a1.history[i].arch == a2.history[i].arch);
        auto b = search(space, acc, cost, cfg, c, 60, 12);
        CHECK(a1.best_reward >= 0.0);
        CHECK(b.history.size() == a1.history.size());
    }
}

TEST_CASE("reported best dominates every history record") {
    SearchSpace space = toy_space();
    RewardConfig cfg;
    cfg.target = 2.0e7;
    auto acc = [&](const ArchSpec& a) { return proxy_acc(a, cfg.target); };
    auto cost = [](const ArchSpec& a) { return static_cast<double>(flops(a)); };
    auto res = search(space, acc, cost, cfg, Controller::Evolutionary, 120, 5);
    CHECK(res.history.size() == 120);
    for (const auto& rec : res.history) CHECK(rec.reward <= res.best_reward);
}

TEST_CASE("evolutionary search lands near the optimum on most seeds") {
    SearchSpace space = toy_space();
    RewardConfig cfg;
    cfg.target = 2.0e7;
    auto acc = [&](const ArchSpec& a) { return proxy_acc(a, cfg.target); };
    auto cost = [](const ArchSpec& a) { return static_cast<double>(flops(a)); };
    const double optimum =
        search(space, acc, cost, cfg, Controller::Exhaustive, 1, 0).best_reward;
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto res = search(space, acc, cost, cfg, Controller::Evolutionary, 200, seed);
        if (res.best_reward >= 0.99 * optimum) ++hits;
    }
    CHECK(hits >= 9);
}

TEST_CASE("empty space and zero budget are rejected") {
    SearchSpace empty;
    RewardConfig cfg;
    auto one = [](const ArchSpec&) { return 0.5; };
    CHECK_THROWS_AS(search(empty, one, one, cfg, Controller::Random, 5, 0), EmptySpace);
    SearchSpace space = toy_space();
    CHECK_THROWS_AS(search(space, one, one, cfg, Controller::Random, 0, 0), InvalidSpec);
}

TEST_CASE("compound scaling") {
    ArchSpec arch;
    arch.input_resolution = 8;
    arch.stem_channels = 16;
    arch.stages = {make_stage(Kernel::K3, 2, false, 16, 1)};

    CHECK(scale_arch(arch, 1.0, 1.0, 1.0) == arch);

    ArchSpec wide = scale_arch(arch, 2.0, 1.0, 1.0);
    CHECK(wide.stages[0].channels == 32);
    CHECK(wide.stem_channels == 32);
    // each 16->16 conv becomes 32->32: x4 FLOPs (stem scales x2 only)
    const std::uint64_t stage_flops = flops(arch) - conv_flops(8, 8, 3, 16, 3, 3);
    const std::uint64_t wide_stage = flops(wide) - conv_flops(8, 8, 3, 32, 3, 3);
    CHECK(wide_stage == 4 * stage_flops);

    ArchSpec deep = scale_arch(arch, 1.0, 10.0, 1.0);
    CHECK(deep.stages[0].path.depth == 4);

    ArchSpec shallow = scale_arch(arch, 1.0, 0.1, 1.0);
    CHECK(shallow.stages[0].path.depth == 2);

    ArchSpec hires = scale_arch(arch, 1.0, 1.0, 1.5);
    CHECK(hires.input_resolution == 12);

    CHECK_THROWS_AS(scale_arch(arch, 0.0, 1.0, 1.0), InvalidSpec);
}
