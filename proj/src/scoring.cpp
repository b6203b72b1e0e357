#include "mms/scoring.hpp"

#include "mms/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mms {

namespace {

// Fills predicted/top2 for every row; shared by all score kinds.
ScoredPool ranked_pool(const Matrix& logits, ScoreKind kind) {
    if (logits.cols() < 2) fail(ErrorCode::invalid_argument, "scoring needs at least 2 classes");
    ScoredPool pool;
    pool.kind = kind;
    pool.scores.resize(logits.rows());
    pool.predicted.resize(logits.rows());
    pool.top2.resize(logits.rows());
    for (std::size_t k = 0; k < logits.rows(); ++k) {
        pool.top2[k] = top_two(logits.row(k));
        pool.predicted[k] = pool.top2[k].first;
    }
    return pool;
}

// ‖w_a − w_b‖ with the same scaling as l2_norm.
double weight_gap(const LinearHead& head, std::size_t a, std::size_t b) {
    const auto wa = head.weights.row(a);
    const auto wb = head.weights.row(b);
    Vector diff(wa.size());
    for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = wa[j] - wb[j];
    return l2_norm(diff);
}

}  // namespace

TopTwo top_two(std::span<const double> logits) {
    if (logits.size() < 2) fail(ErrorCode::invalid_argument, "top_two: need at least 2 logits");
    TopTwo t{0, 1};
    if (logits[1] > logits[0]) t = {1, 0};
    for (std::size_t i = 2; i < logits.size(); ++i) {
        if (logits[i] > logits[t.first]) {
            t.second = t.first;
            t.first = i;
        } else if (logits[i] > logits[t.second]) {
            t.second = i;
        }
    }
    return t;
}

ScoredPool mms_scores(const ForwardResult& fr, const LinearHead& head) {
    if (fr.logits.cols() != head.n_classes() || fr.features.cols() != head.feat_dim() ||
        fr.logits.rows() != fr.features.rows()) {
        fail(ErrorCode::dimension_mismatch, "mms_scores: forward result does not match head");
    }
    ScoredPool pool = ranked_pool(fr.logits, ScoreKind::mms);
    for (std::size_t k = 0; k < pool.size(); ++k) {
        const auto [i1, i2] = pool.top2[k];
        const double margin = fr.logits(k, i1) - fr.logits(k, i2);
        const double gap = weight_gap(head, i1, i2);
        if (gap == 0.0) {
            pool.degenerate.push_back(k);
            pool.scores[k] = margin == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        } else {
            pool.scores[k] = margin / gap;
        }
    }
    return pool;
}

Vector boundary_displacement(std::span<const double> y, const LinearHead& head, std::size_t i1,
                             std::size_t i2) {
    if (y.size() != head.feat_dim())
        fail(ErrorCode::dimension_mismatch, "boundary_displacement: feature length mismatch");
    if (i1 >= head.n_classes() || i2 >= head.n_classes())
        fail(ErrorCode::invalid_argument, "boundary_displacement: class index out of range");
    const auto w1 = head.weights.row(i1);
    const auto w2 = head.weights.row(i2);
    Vector diff(y.size());
    for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = w1[j] - w2[j];
    const double gap = l2_norm(diff);
    if (gap == 0.0) {
        fail(ErrorCode::degenerate_boundary, "boundary_displacement: weight rows " +
                                                 std::to_string(i1) + " and " + std::to_string(i2) +
                                                 " are identical");
    }
    const double s1 = dot(w1, y) + head.biases[i1];
    const double s2 = dot(w2, y) + head.biases[i2];
    // Divide by the norm twice rather than by its square to stay in range.
    const double coeff = -(s1 - s2) / gap;
    for (double& d : diff) d = coeff * (d / gap);
    return diff;
}

ScoredPool hnm_scores(const ForwardResult& fr, std::span<const std::size_t> labels) {
    ScoredPool pool = ranked_pool(fr.logits, ScoreKind::loss);
    pool.scores = cross_entropy_rows(fr.logits, labels);
    return pool;
}

ScoredPool entropy_scores(const ForwardResult& fr) {
    ScoredPool pool = ranked_pool(fr.logits, ScoreKind::entropy);
    for (std::size_t k = 0; k < pool.size(); ++k) {
        const auto row = fr.logits.row(k);
        const double top = row[pool.top2[k].first];
        Vector shifted(row.begin(), row.end());
        for (double& z : shifted) z -= top;
        const double lse = log_sum_exp(shifted);
        // H = lse − Σ p·z with p = exp(z − lse); avoids log(0) for vanishing p.
        double expected_logit = 0.0;
        for (double z : shifted) expected_logit += std::exp(z - lse) * z;
        const double h = lse - expected_logit;
        pool.scores[k] = h < 0.0 ? 0.0 : h;
    }
    return pool;
}

}  // namespace mms
