#include "facetrain/cost_model.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "facetrain/errors.hpp"

namespace facetrain {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t r;
    if (__builtin_mul_overflow(a, b, &r)) throw Overflow("byte count exceeds 64-bit range");
    return r;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
    std::uint64_t r;
    if (__builtin_add_overflow(a, b, &r)) throw Overflow("byte count exceeds 64-bit range");
    return r;
}

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

}  // namespace

void FcMemSpec::validate() const {
    if (embed_dim == 0 || num_classes == 0 || num_gpus == 0 || param_bytes == 0)
        throw InvalidSpec("FcMemSpec: d, C, k, param_bytes must be positive");
    if (num_gpus > num_classes)
        throw InvalidSpec("FcMemSpec: k must not exceed C");
}

std::uint64_t mem_w(const FcMemSpec& spec) {
    spec.validate();
    return checked_mul(checked_mul(spec.embed_dim, ceil_div(spec.num_classes, spec.num_gpus)),
                       spec.param_bytes);
}

std::uint64_t mem_logits(const FcMemSpec& spec) {
    spec.validate();
    return checked_mul(checked_mul(spec.batch_per_gpu, spec.num_gpus),
                       checked_mul(ceil_div(spec.num_classes, spec.num_gpus), 4));
}

std::uint64_t mem_fc(const FcMemSpec& spec) {
    return checked_add(checked_mul(spec.optimizer_mult, mem_w(spec)),
                       checked_mul(spec.logit_mult, mem_logits(spec)));
}

std::uint64_t comm_overhead(std::uint64_t global_batch) {
    return checked_mul(global_batch, 4);
}

std::string format_gib(std::uint64_t bytes) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f GiB", static_cast<double>(bytes) / 1073741824.0);
    return buf;
}

std::string format_gb(std::uint64_t bytes) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f GB", static_cast<double>(bytes) / 1e9);
    return buf;
}

namespace {

nlohmann::json spec_to_json(const FcMemSpec& s) {
    return {{"embed_dim", s.embed_dim},
            {"num_classes", s.num_classes},
            {"num_gpus", s.num_gpus},
            {"batch_per_gpu", s.batch_per_gpu},
            {"param_bytes", s.param_bytes},
            {"optimizer_mult", s.optimizer_mult},
            {"logit_mult", s.logit_mult},
            {"mixed_precision", s.mixed_precision}};
}

FcMemSpec spec_from_json(const nlohmann::json& j) {
    FcMemSpec s;
    s.embed_dim = j.at("embed_dim");
    s.num_classes = j.at("num_classes");
    s.num_gpus = j.at("num_gpus");
    s.batch_per_gpu = j.at("batch_per_gpu");
    s.param_bytes = j.at("param_bytes");
    s.optimizer_mult = j.at("optimizer_mult");
    s.logit_mult = j.at("logit_mult");
    s.mixed_precision = j.at("mixed_precision");
    return s;
}

}  // namespace

std::string cost_report(const FcMemSpec& spec, ReportFormat format) {
    const std::uint64_t w = mem_w(spec);
    const std::uint64_t lg = mem_logits(spec);
    const std::uint64_t fc = mem_fc(spec);
    const std::uint64_t global_batch = spec.batch_per_gpu * spec.num_gpus;
    const std::uint64_t comm = comm_overhead(global_batch);

    if (format == ReportFormat::Machine) {
        nlohmann::json j = {{"mem_w_bytes", w},
                            {"mem_logits_bytes", lg},
                            {"mem_fc_bytes", fc},
                            {"comm_bytes_per_iter", comm},
                            {"spec", spec_to_json(spec)}};
        return j.dump(2);
    }

    std::ostringstream os;
    os << "classification-layer memory per GPU (d=" << spec.embed_dim
       << ", C=" << spec.num_classes << ", k=" << spec.num_gpus
       << ", N=" << spec.batch_per_gpu << ")\n";
    os << "  weights     Mem_w      = " << w << " bytes  (" << format_gib(w) << ", "
       << format_gb(w) << ")\n";
    os << "  logits      Mem_logits = " << lg << " bytes  (" << format_gib(lg) << ", "
       << format_gb(lg) << ")\n";
    os << "  total       Mem_FC     = " << spec.optimizer_mult << "*Mem_w + " << spec.logit_mult
       << "*Mem_logits = " << fc << " bytes  (" << format_gib(fc) << ", " << format_gb(fc)
       << ")\n";
    os << "  softmax communication per iteration = " << comm << " bytes (global batch "
       << global_batch << " x 4 bytes, Float32)\n";
    if (spec.mixed_precision) {
        os << "  mixed precision: backbone parameters at 2 bytes (FP16); the classification\n"
           << "  layer stays FP32, so the figures above are unchanged.\n";
    }
    return os.str();
}

CostReport parse_cost_report(const std::string& machine_json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(machine_json);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("cost report: ") + e.what());
    }
    CostReport r;
    r.spec = spec_from_json(j.at("spec"));
    r.mem_w_bytes = j.at("mem_w_bytes");
    r.mem_logits_bytes = j.at("mem_logits_bytes");
    r.mem_fc_bytes = j.at("mem_fc_bytes");
    r.comm_bytes_per_iter = j.at("comm_bytes_per_iter");
    return r;
}

}  // namespace facetrain
