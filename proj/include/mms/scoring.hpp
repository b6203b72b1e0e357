#pragma once

#include "mms/model.hpp"
#include "mms/numerics.hpp"

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace mms {

enum class ScoreKind { mms, loss, entropy };

struct TopTwo {
    std::size_t first = 0;   // argmax logit
    std::size_t second = 0;  // runner-up
    friend bool operator==(const TopTwo&, const TopTwo&) = default;
};

// Per-sample selection scores for a candidate pool, indexed like the pool.
struct ScoredPool {
    ScoreKind kind = ScoreKind::mms;
    Vector scores;
    std::vector<std::size_t> predicted;
    std::vector<TopTwo> top2;
    // Samples whose top-two weight rows coincide; the MMS there is 0 (equal
    // logits) or +inf (parallel scores that never cross).
    std::vector<std::size_t> degenerate;

    std::size_t size() const noexcept { return scores.size(); }
};

// Top-two classes of a logit row. Ties go to the lower class index for both
// the winner and the runner-up. Requires at least two entries.
TopTwo top_two(std::span<const double> logits);

// Minimal Margin Score per sample: distance in feature space from y_k to the
// boundary between its two highest-scoring classes,
//   d_k = (s_k^{i1} − s_k^{i2}) / ‖w_{i1} − w_{i2}‖.
// Biases enter through the scores only. Smaller means less confident.
ScoredPool mms_scores(const ForwardResult& fr, const LinearHead& head);

// Least-norm δy moving y onto the boundary f_{i1}(y+δy) = f_{i2}(y+δy):
//   δy = −(s^{i1} − s^{i2}) (w_{i1} − w_{i2}) / ‖w_{i1} − w_{i2}‖².
// Throws degenerate_boundary when the two weight rows are identical.
Vector boundary_displacement(std::span<const double> y, const LinearHead& head, std::size_t i1,
                             std::size_t i2);

// Per-sample cross-entropy in nats; hard-negative mining takes the largest.
ScoredPool hnm_scores(const ForwardResult& fr, std::span<const std::size_t> labels);

// Posterior entropy −Σ p ln p in nats; uncertainty sampling takes the largest.
ScoredPool entropy_scores(const ForwardResult& fr);

}  // namespace mms
