#include "facetrain/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace facetrain {

void SynthTaskSpec::validate() const {
    if (n_ids == 0 || samples_per_id == 0 || input_dim == 0)
        throw InvalidSpec("SynthTaskSpec: counts and dim must be positive");
    if (noise_sigma < 0.0) throw InvalidSpec("SynthTaskSpec: negative noise sigma");
    for (double f : {occlusion_fraction, outlier_fraction})
        if (f < 0.0 || f > 1.0) throw InvalidSpec("SynthTaskSpec: fraction outside [0,1]");
    if (split_id_count > n_ids) throw InvalidSpec("SynthTaskSpec: more split ids than ids");
    if (samples_per_id < 2 && split_id_count > 0)
        throw InvalidSpec("SynthTaskSpec: cannot split single-sample classes");
}

namespace {

void normalize_row_inplace(Matrix& m, std::size_t i) {
    const double n = row_norm(m, i);
    if (n < 1e-30) throw ZeroRow("synth: zero row after occlusion");
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) /= n;
}

}  // namespace

Matrix occlude(const Matrix& inputs, double fraction) {
    Matrix out = inputs;
    const std::size_t hidden = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(inputs.cols())));
    if (hidden == 0) return out;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = out.cols() - hidden; j < out.cols(); ++j) out(i, j) = 0.0;
        normalize_row_inplace(out, i);
    }
    return out;
}

SynthTask synth_task(const SynthTaskSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SynthTask task;
    task.spec = spec;
    const std::size_t n = spec.n_ids * spec.samples_per_id;

    Matrix prototypes(spec.n_ids, spec.input_dim);
    for (std::size_t c = 0; c < spec.n_ids; ++c) {
        for (std::size_t j = 0; j < spec.input_dim; ++j) prototypes(c, j) = gauss(rng);
        normalize_row_inplace(prototypes, c);
    }

    task.inputs = Matrix(n, spec.input_dim);
    task.labels.resize(n);
    for (std::size_t c = 0; c < spec.n_ids; ++c)
        for (std::size_t s = 0; s < spec.samples_per_id; ++s) {
            const std::size_t i = c * spec.samples_per_id + s;
            task.labels[i] = static_cast<std::uint32_t>(c);
            for (std::size_t j = 0; j < spec.input_dim; ++j)
                task.inputs(i, j) = prototypes(c, j) + spec.noise_sigma * gauss(rng);
            normalize_row_inplace(task.inputs, i);
        }

    // plant outliers: relabel a sample to a foreign identity
    const std::size_t n_outliers =
        static_cast<std::size_t>(std::llround(spec.outlier_fraction * static_cast<double>(n)));
    if (n_outliers > 0) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < n_outliers; ++i) {
            const std::size_t idx = order[i];
            std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(spec.n_ids - 1));
            std::uint32_t foreign = pick(rng);
            while (foreign == task.labels[idx]) foreign = pick(rng);
            task.labels[idx] = foreign;
            task.planted_outliers.push_back(idx);
        }
        std::sort(task.planted_outliers.begin(), task.planted_outliers.end());
    }

    // split ids: second half of each chosen id's samples moves to a new label
    std::uint32_t next_label = static_cast<std::uint32_t>(spec.n_ids);
    for (std::size_t s = 0; s < spec.split_id_count; ++s) {
        const std::uint32_t id = static_cast<std::uint32_t>(s);
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i)
            if (task.labels[i] == id) members.push_back(i);
        for (std::size_t m = members.size() / 2; m < members.size(); ++m)
            task.labels[members[m]] = next_label;
        task.split_pairs.emplace_back(id, next_label);
        ++next_label;
    }
    task.num_classes = next_label;

    task.masked_inputs = occlude(task.inputs, spec.occlusion_fraction);
    return task;
}

PairSet make_pairs(const SynthTask& task, std::size_t n_pairs, bool masked, std::uint64_t seed) {
    if (task.num_classes < 2) throw DegeneratePairs("make_pairs: need at least two identities");
    std::mt19937_64 rng(seed ^ 0xabcdef1234567890ULL);
    std::vector<std::vector<std::uint32_t>> by_class(task.num_classes);
    for (std::uint32_t i = 0; i < task.size(); ++i) by_class[task.labels[i]].push_back(i);

    PairSet ps;
    std::uniform_int_distribution<std::uint32_t> pick_class(0, static_cast<std::uint32_t>(task.num_classes - 1));
    for (std::size_t p = 0; p < n_pairs; ++p) {
        VerifyPair vp;
        vp.masked = masked;
        vp.same = (p % 2 == 0);
        if (vp.same) {
            std::uint32_t c = pick_class(rng);
            while (by_class[c].size() < 2) c = pick_class(rng);
            std::uniform_int_distribution<std::size_t> pick(0, by_class[c].size() - 1);
            std::size_t a = pick(rng), b = pick(rng);
            while (b == a) b = pick(rng);
            vp.a = by_class[c][a];
            vp.b = by_class[c][b];
        } else {
            std::uint32_t c1 = pick_class(rng), c2 = pick_class(rng);
            while (c2 == c1 || by_class[c1].empty() || by_class[c2].empty()) {
                c1 = pick_class(rng);
                c2 = pick_class(rng);
            }
            vp.a = by_class[c1][std::uniform_int_distribution<std::size_t>(0, by_class[c1].size() - 1)(rng)];
            vp.b = by_class[c2][std::uniform_int_distribution<std::size_t>(0, by_class[c2].size() - 1)(rng)];
        }
        ps.pairs.push_back(vp);
    }
    return ps;
}

}  // namespace facetrain
