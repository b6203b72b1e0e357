#include "mms/selection.hpp"

#include "mms/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mms {

Direction Strategy::direction() const noexcept {
    switch (kind) {
        case StrategyKind::mms: return Direction::smallest;
        case StrategyKind::hnm:
        case StrategyKind::entropy: return Direction::largest;
        case StrategyKind::uniform: break;
    }
    return Direction::none;
}

std::optional<ScoreKind> Strategy::score_kind() const noexcept {
    switch (kind) {
        case StrategyKind::mms: return ScoreKind::mms;
        case StrategyKind::hnm: return ScoreKind::loss;
        case StrategyKind::entropy: return ScoreKind::entropy;
        case StrategyKind::uniform: break;
    }
    return std::nullopt;
}

std::string_view to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::uniform: return "uniform";
        case StrategyKind::mms: return "mms";
        case StrategyKind::hnm: return "hnm";
        case StrategyKind::entropy: return "entropy";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view name) {
    for (auto kind : {StrategyKind::uniform, StrategyKind::mms, StrategyKind::hnm, StrategyKind::entropy}) {
        if (name == to_string(kind)) return Strategy{kind};
    }
    fail(ErrorCode::invalid_argument, "unknown strategy '" + std::string(name) + "'");
}

namespace {

// Strict weak order on pool indices: finite scores first, then by score in the
// requested direction, then by index.
struct RankOrder {
    const Vector& scores;
    Direction direction;

    bool operator()(std::size_t a, std::size_t b) const {
        const double sa = scores[a];
        const double sb = scores[b];
        const bool fa = std::isfinite(sa);
        const bool fb = std::isfinite(sb);
        if (fa != fb) return fa;
        if (fa && sa != sb) return direction == Direction::largest ? sa > sb : sa < sb;
        return a < b;
    }
};

}  // namespace

std::vector<std::size_t> rank_pool(const ScoredPool& pool, Direction direction) {
    if (direction == Direction::none)
        fail(ErrorCode::invalid_argument, "rank_pool: strategy has no score direction");
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), RankOrder{pool.scores, direction});
    return idx;
}

SelectionResult select(const ScoredPool& pool, const Strategy& strategy, std::size_t b, Rng& rng) {
    if (b == 0) fail(ErrorCode::invalid_argument, "select: batch size b must be >= 1");
    if (pool.size() == 0) fail(ErrorCode::empty_input, "select: empty pool");
    const std::size_t k = std::min(b, pool.size());

    SelectionResult out;
    if (strategy.kind == StrategyKind::uniform) {
        if (k == pool.size()) {
            out.indices.resize(k);
            std::iota(out.indices.begin(), out.indices.end(), std::size_t{0});
        } else {
            out.indices = rng.sample_without_replacement(pool.size(), k);
        }
    } else {
        if (strategy.score_kind() != pool.kind) {
            fail(ErrorCode::invalid_argument,
                 "select: strategy " + std::string(to_string(strategy.kind)) +
                     " cannot consume this score kind");
        }
        std::vector<std::size_t> idx(pool.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                          RankOrder{pool.scores, strategy.direction()});
        idx.resize(k);
        out.indices = std::move(idx);
    }
    std::sort(out.indices.begin(), out.indices.end());
    if (pool.kind == ScoreKind::mms) out.mean_mms_10 = mean_mms_telemetry(pool, out);
    return out;
}

double mean_mms_telemetry(const ScoredPool& mms_pool, const SelectionResult& result) {
    if (mms_pool.kind != ScoreKind::mms)
        fail(ErrorCode::invalid_argument, "mean_mms_telemetry: pool does not hold MMS scores");
    if (result.indices.empty()) fail(ErrorCode::empty_input, "mean_mms_telemetry: empty selection");
    Vector selected;
    selected.reserve(result.indices.size());
    for (std::size_t i : result.indices) {
        if (i >= mms_pool.size()) fail(ErrorCode::invalid_argument, "mean_mms_telemetry: index out of range");
        selected.push_back(mms_pool.scores[i]);
    }
    const std::size_t m = std::min<std::size_t>(10, selected.size());
    std::partial_sort(selected.begin(), selected.begin() + static_cast<std::ptrdiff_t>(m), selected.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += selected[i];
    return sum / static_cast<double>(m);
}

}  // namespace mms
