#include "doctest.h"
#include "oracles.hpp"

#include "mms/error.hpp"
#include "mms/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

using namespace mms;

namespace {

ScoredPool pool_of(Vector scores, ScoreKind kind = ScoreKind::mms) {
    ScoredPool p;
    p.kind = kind;
    p.predicted.assign(scores.size(), 0);
    p.top2.assign(scores.size(), TopTwo{0, 1});
    p.scores = std::move(scores);
    return p;
}

// Stable sort keeps equal scores in index order, so its first b entries are
// the expected selection under the (score, index) rule.
std::vector<std::size_t> oracle_select(const Vector& scores, Direction dir, std::size_t b) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
        return dir == Direction::smallest ? scores[x] < scores[y] : scores[x] > scores[y];
    });
    idx.resize(std::min(b, idx.size()));
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

TEST_CASE("strategy directions") {
    CHECK(Strategy{StrategyKind::mms}.direction() == Direction::smallest);
    CHECK(Strategy{StrategyKind::hnm}.direction() == Direction::largest);
    CHECK(Strategy{StrategyKind::entropy}.direction() == Direction::largest);
    CHECK(Strategy{StrategyKind::uniform}.direction() == Direction::none);
    CHECK(parse_strategy("hnm").kind == StrategyKind::hnm);
    CHECK_THROWS_AS((void)parse_strategy("random"), Error);
}

TEST_CASE("select: smallest MMS with index tie-break") {
    Rng rng(1);
    const auto r = select(pool_of({0.3, 0.1, 0.5, 0.1}), Strategy{StrategyKind::mms}, 2, rng);
    CHECK(r.indices == std::vector<std::size_t>{1, 3});
    REQUIRE(r.mean_mms_10);
    CHECK(*r.mean_mms_10 == doctest::Approx(0.1));

    const auto ties = select(pool_of({0.2, 0.2, 0.2, 0.2}), Strategy{StrategyKind::mms}, 3, rng);
    CHECK(ties.indices == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("select: b at or above pool size returns everything") {
    Rng rng(2);
    for (auto kind : {StrategyKind::mms, StrategyKind::uniform}) {
        const auto r = select(pool_of({0.4, 0.2, 0.9}), Strategy{kind}, 5, rng);
        CHECK(r.indices == std::vector<std::size_t>{0, 1, 2});
    }
}

TEST_CASE("select: largest for loss and entropy pools") {
    Rng rng(3);
    CHECK(select(pool_of({1.0, 3.0, 2.0, 3.0}, ScoreKind::loss), Strategy{StrategyKind::hnm}, 2, rng).indices ==
          std::vector<std::size_t>{1, 3});
    CHECK(select(pool_of({0.1, 0.7, 0.7, 0.2}, ScoreKind::entropy), Strategy{StrategyKind::entropy}, 1, rng)
              .indices == std::vector<std::size_t>{1});
}

TEST_CASE("select: +inf sentinels are picked last") {
    Rng rng(4);
    const double inf = std::numeric_limits<double>::infinity();
    const auto r = select(pool_of({inf, 0.5, inf, 0.7}), Strategy{StrategyKind::mms}, 3, rng);
    CHECK(r.indices == std::vector<std::size_t>{0, 1, 3});
}

TEST_CASE("select: errors") {
    Rng rng(5);
    try {
        (void)select(pool_of({1.0}), Strategy{StrategyKind::mms}, 0, rng);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::invalid_argument);
    }
    CHECK_THROWS_AS((void)select(pool_of({}), Strategy{StrategyKind::mms}, 1, rng), Error);
    // A loss pool cannot drive the MMS strategy.
    CHECK_THROWS_AS((void)select(pool_of({1.0, 2.0}, ScoreKind::loss), Strategy{StrategyKind::mms}, 1, rng), Error);
}

TEST_CASE("select matches a full-sort oracle on random pools") {
    Rng rng(6);
    for (int t = 0; t < 200; ++t) {
        Vector scores(1000);
        for (double& s : scores) s = rng.uniform();
        const auto r = select(pool_of(scores), Strategy{StrategyKind::mms}, 64, rng);
        Vector got;
        for (auto i : r.indices) got.push_back(scores[i]);
        std::sort(got.begin(), got.end());
        Vector want = scores;
        std::sort(want.begin(), want.end());
        want.resize(64);
        CHECK(got == want);
    }
}

TEST_CASE("select with duplicated scores follows (score, index) order") {
    Rng rng(7);
    for (int t = 0; t < 500; ++t) {
        const std::size_t n = 1 + rng.below(60);
        Vector scores(n);
        for (double& s : scores) s = static_cast<double>(rng.below(5)) * 0.25;
        const std::size_t b = 1 + rng.below(n + 3);
        CHECK(select(pool_of(scores), Strategy{StrategyKind::mms}, b, rng).indices ==
              oracle_select(scores, Direction::smallest, b));
        CHECK(select(pool_of(scores, ScoreKind::loss), Strategy{StrategyKind::hnm}, b, rng).indices ==
              oracle_select(scores, Direction::largest, b));
    }
}

TEST_CASE("selection properties") {
    Rng rng(8);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 20 + rng.below(80);
        const std::size_t b = 1 + rng.below(n);
        Vector scores(n);
        for (double& s : scores) s = static_cast<double>(rng.below(30));
        const ScoredPool pool = pool_of(scores);
        const auto r = select(pool, Strategy{StrategyKind::mms}, b, rng);

        // Idempotence on the selected sub-pool.
        Vector sub;
        for (auto i : r.indices) sub.push_back(scores[i]);
        const auto again = select(pool_of(sub), Strategy{StrategyKind::mms}, b, rng);
        CHECK(again.indices.size() == sub.size());

        // Permuting the pool selects the same multiset of scores (and, with
        // distinct scores, the same samples).
        const auto perm = rng.permutation(n);
        Vector permuted(n);
        for (std::size_t i = 0; i < n; ++i) permuted[i] = scores[perm[i]];
        const auto rp = select(pool_of(permuted), Strategy{StrategyKind::mms}, b, rng);
        std::multiset<double> a, c;
        for (auto i : r.indices) a.insert(scores[i]);
        for (auto i : rp.indices) c.insert(permuted[i]);
        CHECK(a == c);
    }
    // Distinct scores: the mapped-back sample set is identical.
    Vector scores(50);
    for (std::size_t i = 0; i < 50; ++i) scores[i] = rng.uniform();
    const auto perm = rng.permutation(50);
    Vector permuted(50);
    for (std::size_t i = 0; i < 50; ++i) permuted[i] = scores[perm[i]];
    const auto r = select(pool_of(scores), Strategy{StrategyKind::mms}, 10, rng);
    const auto rp = select(pool_of(permuted), Strategy{StrategyKind::mms}, 10, rng);
    std::set<std::size_t> mapped;
    for (auto i : rp.indices) mapped.insert(perm[i]);
    CHECK(mapped == std::set<std::size_t>(r.indices.begin(), r.indices.end()));
}

TEST_CASE("uniform selection is reproducible and draws without replacement") {
    const ScoredPool pool = pool_of(Vector(100, 0.0));
    Rng a(9), b(9);
    for (int t = 0; t < 20; ++t) {
        const auto ra = select(pool, Strategy{StrategyKind::uniform}, 10, a);
        const auto rb = select(pool, Strategy{StrategyKind::uniform}, 10, b);
        CHECK(ra.indices == rb.indices);
        CHECK(std::set<std::size_t>(ra.indices.begin(), ra.indices.end()).size() == 10);
        CHECK(std::is_sorted(ra.indices.begin(), ra.indices.end()));
    }
}

TEST_CASE("mean_mms_telemetry") {
    SUBCASE("constant") {
        const ScoredPool pool = pool_of(Vector(12, 0.5));
        SelectionResult r;
        for (std::size_t i = 0; i < 10; ++i) r.indices.push_back(i);
        CHECK(mean_mms_telemetry(pool, r) == 0.5);
    }
    SUBCASE("fewer than ten selected") {
        const ScoredPool pool = pool_of({4, 9, 1, 3, 2});
        SelectionResult r{{0, 2, 3, 4}, std::nullopt};
        CHECK(mean_mms_telemetry(pool, r) == 2.5);
    }
    SUBCASE("sort-and-average oracle on random pools") {
        Rng rng(10);
        for (int t = 0; t < 50; ++t) {
            Vector scores(640);
            for (double& s : scores) s = rng.uniform() * 3.0;
            const ScoredPool pool = pool_of(scores);
            const auto r = select(pool, Strategy{StrategyKind::uniform}, 64, rng);
            Vector sel;
            for (auto i : r.indices) sel.push_back(scores[i]);
            std::sort(sel.begin(), sel.end());
            double want = 0.0;
            for (int i = 0; i < 10; ++i) want += sel[i];
            want /= 10.0;
            CHECK(std::abs(mean_mms_telemetry(pool, r) - want) <= 1e-15);
        }
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS((void)mean_mms_telemetry(pool_of({1.0}), SelectionResult{}), Error);
        CHECK_THROWS_AS((void)mean_mms_telemetry(pool_of({1.0}, ScoreKind::loss), SelectionResult{{0}, {}}), Error);
    }
}
