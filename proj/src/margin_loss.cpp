#include "facetrain/margin_loss.hpp"

#include <algorithm>
#include <cmath>

namespace facetrain {

Matrix cosine_logits(const Matrix& features, const Matrix& weights) {
    if (features.cols() != weights.cols())
        throw DimMismatch("cosine_logits: feature dim " + std::to_string(features.cols()) +
                          " != weight dim " + std::to_string(weights.cols()));
    Matrix out(features.rows(), weights.rows());
    for (std::size_t i = 0; i < features.rows(); ++i)
        for (std::size_t j = 0; j < weights.rows(); ++j)
            out(i, j) = std::clamp(dot_rows(features, i, weights, j), -1.0, 1.0);
    return out;
}

double margin_target_value(double c, const LossConfig& cfg) {
    switch (cfg.kind) {
        case LossKind::PlainSoftmax:
            return cfg.scale * c;
        case LossKind::CosFace:
            return cfg.scale * (c - cfg.margin);
        case LossKind::ArcFace: {
            const double m = cfg.margin;
            // theta + m > pi  <=>  cos(theta) < cos(pi - m) = -cos(m)
            if (c < -std::cos(m)) return cfg.scale * (c - m * std::sin(m));
            const double theta = std::acos(std::clamp(c, -1.0, 1.0));
            return cfg.scale * std::cos(theta + m);
        }
    }
    return 0.0;
}

double margin_target_derivative(double c, const LossConfig& cfg) {
    switch (cfg.kind) {
        case LossKind::PlainSoftmax:
        case LossKind::CosFace:
            return cfg.scale;
        case LossKind::ArcFace: {
            const double m = cfg.margin;
            if (c < -std::cos(m)) return cfg.scale;
            const double one_minus_c2 = 1.0 - c * c;
            if (one_minus_c2 < 1e-24) return cfg.scale;  // clamp boundary
            // d/dc [c cos m - sqrt(1-c^2) sin m]
            return cfg.scale * (std::cos(m) + c * std::sin(m) / std::sqrt(one_minus_c2));
        }
    }
    return 0.0;
}

Matrix apply_margin(const Matrix& logits, const Labels& labels, const LossConfig& cfg) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (labels[i] >= logits.cols())
            throw LabelOutOfRange("apply_margin: label " + std::to_string(labels[i]) +
                                  " >= " + std::to_string(logits.cols()));
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            const double c = logits(i, j);
            out(i, j) = (j == labels[i]) ? margin_target_value(c, cfg) : cfg.scale * c;
        }
    }
    return out;
}

SoftmaxCeResult softmax_ce(const Matrix& logits, const Labels& labels) {
    const std::size_t n = logits.rows(), c = logits.cols();
    SoftmaxCeResult res;
    res.grad_logits = Matrix(n, c);
    res.target_prob.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= c)
            throw LabelOutOfRange("softmax_ce: label out of range");
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(logits(i, j) - mx);
        const double log_sum = std::log(sum);
        total += log_sum - (logits(i, labels[i]) - mx);
        for (std::size_t j = 0; j < c; ++j) {
            const double p = std::exp(logits(i, j) - mx) / sum;
            res.grad_logits(i, j) = (p - (j == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n);
            if (j == labels[i]) res.target_prob[i] = p;
        }
    }
    res.loss = total / static_cast<double>(n);
    return res;
}

namespace {

// Pulls a gradient on normalized rows back through row normalization:
// d/dx (x/||x||) applied to upstream u gives (u - (u.xhat) xhat) / ||x||.
Matrix through_normalization(const Matrix& raw, const Matrix& unit, const Matrix& upstream) {
    Matrix out(raw.rows(), raw.cols());
    for (std::size_t i = 0; i < raw.rows(); ++i) {
        const double norm = row_norm(raw, i);
        double proj = 0.0;
        for (std::size_t j = 0; j < raw.cols(); ++j) proj += upstream(i, j) * unit(i, j);
        for (std::size_t j = 0; j < raw.cols(); ++j)
            out(i, j) = (upstream(i, j) - proj * unit(i, j)) / norm;
    }
    return out;
}

}  // namespace

LossGradResult loss_grad(const Matrix& features, const Matrix& weights,
                         const Labels& labels, const LossConfig& cfg) {
    const Matrix fn = normalize_rows(features);
    const Matrix wn = normalize_rows(weights);
    const Matrix cosm = cosine_logits(fn, wn);
    const Matrix z = apply_margin(cosm, labels, cfg);
    SoftmaxCeResult ce = softmax_ce(z, labels);

    // Chain through the margin: non-target derivative is s everywhere.
    Matrix g_cos(cosm.rows(), cosm.cols());
    for (std::size_t i = 0; i < cosm.rows(); ++i)
        for (std::size_t j = 0; j < cosm.cols(); ++j) {
            const double dz = (j == labels[i]) ? margin_target_derivative(cosm(i, j), cfg)
                                               : cfg.scale;
            g_cos(i, j) = ce.grad_logits(i, j) * dz;
        }

    Matrix g_fn(fn.rows(), fn.cols());
    for (std::size_t i = 0; i < fn.rows(); ++i)
        for (std::size_t j = 0; j < cosm.cols(); ++j)
            for (std::size_t k = 0; k < fn.cols(); ++k)
                g_fn(i, k) += g_cos(i, j) * wn(j, k);

    Matrix g_wn(wn.rows(), wn.cols());
    for (std::size_t j = 0; j < wn.rows(); ++j)
        for (std::size_t i = 0; i < fn.rows(); ++i)
            for (std::size_t k = 0; k < wn.cols(); ++k)
                g_wn(j, k) += g_cos(i, j) * fn(i, k);

    LossGradResult res;
    res.loss = ce.loss;
    res.d_features = through_normalization(features, fn, g_fn);
    res.d_weights = through_normalization(weights, wn, g_wn);
    return res;
}

}  // namespace facetrain
