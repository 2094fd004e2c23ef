#pragma once

#include <cstdint>
#include <string>

namespace facetrain {

// Closed-form GPU memory model for a sharded classification layer.
// SGD keeps 3 copies per parameter (12 bytes at FP32); a margin-softmax
// logit occupies 8 bytes (value + gradient).
struct FcMemSpec {
    std::uint64_t embed_dim = 512;        // d
    std::uint64_t num_classes = 2000000;  // C
    std::uint64_t num_gpus = 1;           // k
    std::uint64_t batch_per_gpu = 64;     // N
    std::uint64_t param_bytes = 4;
    std::uint64_t optimizer_mult = 3;
    std::uint64_t logit_mult = 2;
    bool mixed_precision = false;         // FP16 backbone, FP32 classifier

    void validate() const;
};

// All byte counts are exact integer arithmetic; C/k rounds up.
std::uint64_t mem_w(const FcMemSpec& spec);
std::uint64_t mem_logits(const FcMemSpec& spec);
std::uint64_t mem_fc(const FcMemSpec& spec);

std::uint64_t comm_overhead(std::uint64_t global_batch);

enum class ReportFormat { Text, Machine };

std::string cost_report(const FcMemSpec& spec, ReportFormat format);

struct CostReport {
    FcMemSpec spec;
    std::uint64_t mem_w_bytes = 0;
    std::uint64_t mem_logits_bytes = 0;
    std::uint64_t mem_fc_bytes = 0;
    std::uint64_t comm_bytes_per_iter = 0;
};

CostReport parse_cost_report(const std::string& machine_json);

// "12.40 GiB" / "13.31 GB" style renderings.
std::string format_gib(std::uint64_t bytes);
std::string format_gb(std::uint64_t bytes);

}  // namespace facetrain
