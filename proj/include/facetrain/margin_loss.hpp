#pragma once

#include <cstdint>
#include <vector>

#include "facetrain/matrix.hpp"

namespace facetrain {

enum class LossKind { PlainSoftmax, CosFace, ArcFace };

// Margin-softmax configuration. The scale s is not standardized anywhere
// upstream of this code; 64 is the conventional value for both cosine-margin
// and angular-margin losses and is configurable here.
struct LossConfig {
    LossKind kind = LossKind::CosFace;
    double margin = 0.4;
    double scale = 64.0;
};

// A contiguous column slice of the global [batch x classes] logit matrix.
struct LogitBlock {
    Matrix values;               // [batch x local classes]
    std::size_t class_offset = 0;
};

using Labels = std::vector<std::uint32_t>;

// cos(theta) between unit feature rows and unit weight rows, clamped to [-1, 1].
Matrix cosine_logits(const Matrix& features, const Matrix& weights);

// Applies the margin to target entries and the scale s everywhere.
// CosFace: s*(cos - m); ArcFace: s*cos(theta + m) with the s*(cos - m*sin m)
// fallback once theta + m passes pi; PlainSoftmax: s*cos.
Matrix apply_margin(const Matrix& logits, const Labels& labels, const LossConfig& cfg);

// Target-entry logit and its derivative d(logit)/d(cos) for the configured margin.
double margin_target_value(double cos_theta, const LossConfig& cfg);
double margin_target_derivative(double cos_theta, const LossConfig& cfg);

struct SoftmaxCeResult {
    double loss = 0.0;
    Matrix grad_logits;          // gradient of the batch-mean loss
    std::vector<double> target_prob;
};

// Batch-mean cross entropy with per-row max subtraction.
SoftmaxCeResult softmax_ce(const Matrix& logits, const Labels& labels);

struct LossGradResult {
    double loss = 0.0;
    Matrix d_features;
    Matrix d_weights;
};

// Full pipeline: normalize -> cosine -> margin -> softmax CE, differentiated
// end to end (including the row-normalization Jacobians).
LossGradResult loss_grad(const Matrix& features, const Matrix& weights,
                         const Labels& labels, const LossConfig& cfg);

}  // namespace facetrain
