#pragma once

#include "mms/numerics.hpp"
#include "mms/scoring.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mms {

enum class StrategyKind { uniform, mms, hnm, entropy };

enum class Direction { none, smallest, largest };

struct Strategy {
    StrategyKind kind = StrategyKind::uniform;

    // mms → smallest, hnm/entropy → largest, uniform → none.
    Direction direction() const noexcept;
    // Score kind the strategy consumes; empty for uniform.
    std::optional<ScoreKind> score_kind() const noexcept;

    friend bool operator==(const Strategy&, const Strategy&) = default;
};

std::string_view to_string(StrategyKind kind);
// Throws invalid_argument on unknown names.
Strategy parse_strategy(std::string_view name);

struct SelectionResult {
    // Pool indices, ascending.
    std::vector<std::size_t> indices;
    // Filled by select() when the pool holds MMS scores; otherwise by the
    // caller via mean_mms_telemetry().
    std::optional<double> mean_mms_10;
};

// Picks min(b, pool.size()) samples. Score strategies take the extreme scores
// in the strategy's direction, ordering by (score, index) so ties go to the
// lower pool index; non-finite scores always rank last. Uniform draws without
// replacement from `rng` (and does not touch it when b >= pool size).
SelectionResult select(const ScoredPool& pool, const Strategy& strategy, std::size_t b, Rng& rng);

// Mean MMS over the (up to) 10 smallest-MMS members of the selection.
double mean_mms_telemetry(const ScoredPool& mms_pool, const SelectionResult& result);

// Pool indices ordered in the strategy's direction, ties by index; the full
// ranking select() truncates.
std::vector<std::size_t> rank_pool(const ScoredPool& pool, Direction direction);

}  // namespace mms
