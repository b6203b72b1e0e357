#include "doctest.h"
#include "oracles.hpp"

#include "mms/data.hpp"
#include "mms/error.hpp"
#include "mms/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace mms;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "mms_test_data";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::trunc);
    os << text;
}

template <typename Fn>
ErrorCode error_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::io;
}

}  // namespace

TEST_CASE("gen_gaussian_mixture: shape, balance, determinism") {
    Rng a(1), b(1);
    const Dataset one = gen_gaussian_mixture(4, 3, 1, 2.0, a);
    CHECK(one.size() == 4);
    CHECK(one.labels == std::vector<std::size_t>{0, 1, 2, 3});
    const Dataset again = gen_gaussian_mixture(4, 3, 1, 2.0, b);
    CHECK(one.features == again.features);

    Rng c(2);
    const Dataset ds = gen_gaussian_mixture(3, 5, 2000, 4.0, c);
    validate(ds);
    // Class means sit at separation·e_c.
    for (std::size_t cls = 0; cls < 3; ++cls) {
        Vector mean(5, 0.0);
        for (std::size_t r = cls * 2000; r < (cls + 1) * 2000; ++r)
            for (std::size_t j = 0; j < 5; ++j) mean[j] += ds.features(r, j) / 2000.0;
        for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(mean[j] - (j == cls ? 4.0 : 0.0)) < 0.1);
    }
}

TEST_CASE("mixture_means with more classes than dimensions are unit-scaled and fixed") {
    const Matrix m = mixture_means(6, 2, 3.0);
    for (std::size_t c = 0; c < 6; ++c) CHECK(l2_norm(m.row(c)) == doctest::Approx(3.0));
    CHECK(m == mixture_means(6, 2, 3.0));
}

TEST_CASE("gen_gaussian_mixture: separation 0 leaves nothing to learn") {
    RunConfig cfg;
    cfg.data.n_classes = 4;
    cfg.data.dim = 8;
    cfg.data.per_class = 500;
    cfg.data.test_per_class = 1000;
    cfg.data.separation = 0.0;
    cfg.total_steps = 300;
    cfg.eval_every = 300;
    cfg.pool_size = cfg.batch_size = 32;
    const auto result = train(cfg);
    const double err = *final_test_error(result.records);
    // Chance accuracy 1/4 → error 0.75; 4000 test rows give sd ≈ 0.007.
    CHECK(err > 0.70);
    CHECK(err < 0.80);
}

TEST_CASE("gen_gaussian_mixture: well separated classes are learnable to 99%") {
    RunConfig cfg;
    cfg.data.separation = 8.0;
    cfg.data.dim = 32;
    cfg.data.n_classes = 10;
    cfg.data.per_class = 500;
    cfg.data.test_per_class = 200;
    cfg.total_steps = 1500;
    cfg.eval_every = 1500;
    cfg.pool_size = cfg.batch_size = 64;
    cfg.lr = LrSchedule::constant(0.1);
    const auto result = train(cfg);
    CHECK(*final_test_error(result.records) <= 0.01);
}

TEST_CASE("load_idx: hand-built fixture") {
    const auto img = scratch("tiny-images"), lab = scratch("tiny-labels");
    write_bytes(img, {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,  // header: 2 images 2×2
                      0, 255, 51, 102, 255, 0, 0, 204});
    write_bytes(lab, {0, 0, 8, 1, 0, 0, 0, 2, 7, 1});
    const Dataset ds = load_idx(img, lab);
    CHECK(ds.size() == 2);
    CHECK(ds.input_dim() == 4);
    CHECK(ds.labels == std::vector<std::size_t>{7, 1});
    CHECK(ds.n_classes == 8);
    const std::vector<double> want{0.0, 1.0, 0.2, 0.4, 1.0, 0.0, 0.0, 0.8};
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(ds.features.data()[i] == doctest::Approx(want[i]));
}

TEST_CASE("load_idx: error paths are distinct") {
    const auto img = scratch("e-images"), lab = scratch("e-labels");
    write_bytes(lab, {0, 0, 8, 1, 0, 0, 0, 1, 3});

    write_bytes(img, {0, 0, 8, 3, 0, 0});
    CHECK(error_of([&] { (void)load_idx(img, lab); }) == ErrorCode::truncated);

    write_bytes(img, {0, 0, 8, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 9});
    CHECK(error_of([&] { (void)load_idx(img, lab); }) == ErrorCode::bad_magic);

    write_bytes(img, {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 9});
    CHECK(error_of([&] { (void)load_idx(img, lab); }) == ErrorCode::truncated);

    write_bytes(img, {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 9, 10});
    CHECK(error_of([&] { (void)load_idx(img, lab); }) == ErrorCode::count_mismatch);

    CHECK(error_of([&] { (void)load_idx(scratch("missing"), lab); }) == ErrorCode::io);
}

TEST_CASE("IDX write-then-read round trip is exact") {
    Rng rng(3);
    IdxImages images{50, 5, 4, {}};
    images.pixels.resize(50 * 20);
    for (auto& p : images.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    std::vector<std::uint8_t> labels(50);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(10));
    const auto img = scratch("rt-images"), lab = scratch("rt-labels");
    write_idx(img, lab, images, labels);
    const Dataset ds = load_idx(img, lab, 10);
    REQUIRE(ds.size() == 50);
    for (std::size_t i = 0; i < images.pixels.size(); ++i)
        CHECK(ds.features.data()[i] == static_cast<double>(images.pixels[i]) / 255.0);
    for (std::size_t i = 0; i < 50; ++i) CHECK(ds.labels[i] == labels[i]);
}

TEST_CASE("load_csv") {
    SUBCASE("single row") {
        write_text(scratch("one.csv"), "0,1.5,2.5\n");
        const Dataset ds = load_csv(scratch("one.csv"), 2);
        CHECK(ds.size() == 1);
        CHECK(ds.input_dim() == 2);
        CHECK(ds.labels[0] == 0);
        CHECK(ds.features(0, 0) == 1.5);
        CHECK(ds.features(0, 1) == 2.5);
    }
    SUBCASE("error paths") {
        write_text(scratch("empty.csv"), "");
        CHECK(error_of([&] { (void)load_csv(scratch("empty.csv"), 2); }) == ErrorCode::empty_input);
        write_text(scratch("ragged.csv"), "0,1,2\n1,3\n");
        CHECK(error_of([&] { (void)load_csv(scratch("ragged.csv"), 2); }) == ErrorCode::ragged_row);
        write_text(scratch("text.csv"), "0,1,abc\n");
        CHECK(error_of([&] { (void)load_csv(scratch("text.csv"), 2); }) == ErrorCode::parse);
        write_text(scratch("label.csv"), "5,1,2\n");
        CHECK(error_of([&] { (void)load_csv(scratch("label.csv"), 2); }) == ErrorCode::invalid_label);
        write_text(scratch("neg.csv"), "-1,1,2\n");
        CHECK(error_of([&] { (void)load_csv(scratch("neg.csv"), 2); }) == ErrorCode::invalid_label);
        write_text(scratch("nolabel.csv"), "x,1,2\n");
        CHECK(error_of([&] { (void)load_csv(scratch("nolabel.csv"), 2); }) == ErrorCode::parse);
    }
    SUBCASE("1000-row round trip is exact") {
        Rng rng(4);
        Dataset ds = gen_gaussian_mixture(5, 7, 200, 2.0, rng);
        for (double& x : ds.features.data()) x *= 1e-3 + rng.uniform();  // awkward mantissas
        write_csv(scratch("rt.csv"), ds);
        const Dataset back = load_csv(scratch("rt.csv"), 5);
        CHECK(back.features == ds.features);
        CHECK(back.labels == ds.labels);
    }
}

TEST_CASE("FeatureScaler standardizes with train statistics") {
    Rng rng(5);
    Dataset train = gen_gaussian_mixture(3, 4, 300, 5.0, rng);
    for (std::size_t r = 0; r < train.size(); ++r) train.features(r, 3) = 2.0;  // constant column
    const auto scaler = FeatureScaler::fit(train);
    scaler.apply(train);
    for (std::size_t j = 0; j < 3; ++j) {
        double s = 0.0, s2 = 0.0;
        for (std::size_t r = 0; r < train.size(); ++r) {
            s += train.features(r, j);
            s2 += train.features(r, j) * train.features(r, j);
        }
        const double n = static_cast<double>(train.size());
        CHECK(std::abs(s / n) < 1e-12);
        CHECK(s2 / n == doctest::Approx(1.0));
    }
    for (std::size_t r = 0; r < train.size(); ++r) CHECK(train.features(r, 3) == 0.0);
}

TEST_CASE("draw_pool") {
    Rng rng(6);
    Dataset ds = gen_gaussian_mixture(2, 2, 50, 1.0, rng);
    SUBCASE("full pool is a permutation") {
        const auto pool = draw_pool(ds, {100, 10, PoolPolicy::fresh}, rng);
        CHECK(std::set<std::size_t>(pool.begin(), pool.end()).size() == 100);
    }
    SUBCASE("indices unique and in range") {
        for (int t = 0; t < 100; ++t) {
            const auto pool = draw_pool(ds, {30, 3, PoolPolicy::fresh}, rng);
            CHECK(std::set<std::size_t>(pool.begin(), pool.end()).size() == 30);
            CHECK(*std::max_element(pool.begin(), pool.end()) < 100);
        }
    }
    SUBCASE("oversized pool is rejected") {
        CHECK(error_of([&] { (void)draw_pool(ds, {101, 10, PoolPolicy::fresh}, rng); }) ==
              ErrorCode::invalid_argument);
        CHECK(error_of([&] { (void)draw_pool(ds, {5, 10, PoolPolicy::fresh}, rng); }) == ErrorCode::invalid_argument);
    }
    SUBCASE("chi-square uniformity over 10^5 draws") {
        std::vector<double> counts(100, 0.0);
        const int draws = 10'000;  // 10 indices each → 10⁵ index draws
        for (int t = 0; t < draws; ++t)
            for (auto i : draw_pool(ds, {10, 1, PoolPolicy::fresh}, rng)) counts[i] += 1.0;
        const double expected = draws * 10.0 / 100.0;
        double stat = 0.0;
        for (double c : counts) stat += (c - expected) * (c - expected) / expected;
        CHECK(oracle::chi_square_p_value(stat, 99.0) > 0.01);
    }
}

TEST_CASE("PoolSampler epoch policy visits every sample once per pass") {
    Rng rng(7);
    PoolSampler sampler({10, 2, PoolPolicy::epoch}, 50);
    std::multiset<std::size_t> seen;
    for (int t = 0; t < 5; ++t)
        for (auto i : sampler.next(rng)) seen.insert(i);
    CHECK(seen.size() == 50);
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 50);
}

TEST_CASE("validate rejects broken datasets") {
    Dataset ds;
    ds.n_classes = 2;
    CHECK(error_of([&] { validate(ds); }) == ErrorCode::empty_input);
    ds.features = Matrix(1, 1, 0.0);
    ds.labels = {2};
    CHECK(error_of([&] { validate(ds); }) == ErrorCode::invalid_label);
    ds.labels = {1};
    ds.features(0, 0) = NAN;
    CHECK(error_of([&] { validate(ds); }) == ErrorCode::non_finite);
}
