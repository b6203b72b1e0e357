#include "doctest.h"
#include "oracles.hpp"

#include "mms/error.hpp"
#include "mms/model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace mms;

namespace {

NetworkParams random_net(std::size_t in, std::size_t hidden, std::size_t classes, Rng& rng) {
    NetworkParams p = init_params({in, hidden, classes}, rng);
    // Non-zero biases so the bias paths are exercised.
    for_each_param(p, [&](double& x) { x += 0.1 * (rng.uniform() - 0.5); });
    return p;
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
    std::vector<std::size_t> y(n);
    for (auto& v : y) v = rng.below(classes);
    return y;
}

}  // namespace

TEST_CASE("forward: identity head returns the inputs") {
    NetworkParams p;
    p.head.weights = Matrix::identity(3);
    p.head.biases = {0, 0, 0};
    Rng rng(1);
    const Matrix x = oracle::random_matrix(4, 3, rng);
    const ForwardResult fr = forward(p, x);
    CHECK(fr.logits == x);
    CHECK(fr.features == x);
}

TEST_CASE("forward: zero weights give the bias in every row") {
    NetworkParams p;
    p.head.weights = Matrix(3, 2);
    p.head.biases = {0.5, -1.0, 2.0};
    const ForwardResult fr = forward(p, Matrix(4, 2, 7.0));
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 3; ++c) CHECK(fr.logits(r, c) == p.head.biases[c]);
}

TEST_CASE("forward: one hidden layer matches a scalar-loop oracle") {
    Rng rng(2);
    const NetworkParams p = random_net(5, 7, 4, rng);
    const Matrix x = oracle::random_matrix(6, 5, rng, 2.0);
    const ForwardResult fr = forward(p, x);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        Vector h(7);
        for (std::size_t j = 0; j < 7; ++j) {
            double acc = p.hidden->biases[j];
            for (std::size_t k = 0; k < 5; ++k) acc += p.hidden->weights(j, k) * x(r, k);
            h[j] = std::tanh(acc);
        }
        const Vector s = oracle::class_scores(p.head, h);
        for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(fr.logits(r, c) - s[c]) <= 1e-10);
    }
}

TEST_CASE("forward: logits equal features·Wᵀ + b exactly") {
    Rng rng(3);
    for (std::size_t hidden : {0u, 6u}) {
        const NetworkParams p = random_net(4, hidden, 3, rng);
        const Matrix x = oracle::random_matrix(9, 4, rng);
        const ForwardResult fr = forward(p, x);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const Vector y(fr.features.row(r).begin(), fr.features.row(r).end());
            const Vector s = oracle::class_scores(p.head, y);
            for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(fr.logits(r, c) - s[c]) <= 1e-12);
        }
    }
}

TEST_CASE("forward rejects a wrong input width") {
    Rng rng(4);
    const NetworkParams p = random_net(4, 0, 3, rng);
    try {
        (void)forward(p, Matrix(2, 5));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::dimension_mismatch);
    }
}

TEST_CASE("loss_and_grad: limits") {
    SUBCASE("uniform logits give ln n") {
        NetworkParams p;
        p.head.weights = Matrix(5, 3);
        p.head.biases.assign(5, 0.25);
        const auto lg = loss_and_grad(p, Matrix(4, 3, 1.0), std::vector<std::size_t>{0, 1, 2, 4});
        CHECK(lg.loss == doctest::Approx(std::log(5.0)).epsilon(1e-14));
    }
    SUBCASE("confident correct prediction drives loss and bias gradient to 0") {
        NetworkParams p;
        p.head.weights = Matrix(3, 2);
        p.head.biases = {0.0, 200.0, 0.0};
        const auto lg = loss_and_grad(p, Matrix(2, 2, 1.0), std::vector<std::size_t>{1, 1});
        CHECK(lg.loss < 1e-80);
        for (double g : lg.grad.head.biases) CHECK(std::abs(g) < 1e-80);
    }
}

TEST_CASE("loss_and_grad matches central finite differences") {
    Rng rng(20240);
    double worst = 0.0;
    auto check_instance = [&](std::size_t in, std::size_t hidden, std::size_t classes, std::size_t batch) {
        const NetworkParams p = random_net(in, hidden, classes, rng);
        const Matrix x = oracle::random_matrix(batch, in, rng, 1.5);
        const auto labels = random_labels(batch, classes, rng);
        const auto analytic = oracle::flatten(loss_and_grad(p, x, labels).grad);
        const auto numeric = oracle::finite_difference_grad(p, x, labels, 1e-5);
        REQUIRE(analytic.size() == numeric.size());
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
            worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
        }
        CHECK(std::abs(loss_and_grad(p, x, labels).loss - oracle::scalar_loss(p, x, labels)) <= 1e-12);
    };
    check_instance(4, 6, 3, 8);
    for (int t = 0; t < 20; ++t)
        check_instance(1 + rng.below(6), rng.below(2) ? 1 + rng.below(8) : 0, 2 + rng.below(5), 1 + rng.below(10));
    CHECK(worst <= 1e-4);
}

TEST_CASE("loss_and_grad rejects invalid labels") {
    Rng rng(5);
    const NetworkParams p = random_net(3, 0, 3, rng);
    try {
        (void)loss_and_grad(p, Matrix(2, 3), std::vector<std::size_t>{0, 3});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::invalid_label);
    }
    CHECK_THROWS_AS((void)loss_and_grad(p, Matrix(0, 3), std::vector<std::size_t>{}), Error);
}

TEST_CASE("sgd_step") {
    Rng rng(6);
    const NetworkParams p = random_net(3, 4, 3, rng);
    const auto grad = loss_and_grad(p, oracle::random_matrix(5, 3, rng), std::vector<std::size_t>{0, 1, 2, 0, 1}).grad;

    CHECK(sgd_step(p, grad, 0.0) == p);
    CHECK(sgd_step(p, zeros_like(p), 0.7) == p);

    const NetworkParams q = sgd_step(p, grad, 0.3);
    const auto pv = oracle::flatten(p), gv = oracle::flatten(grad), qv = oracle::flatten(q);
    for (std::size_t i = 0; i < pv.size(); ++i) CHECK(qv[i] == pv[i] - 0.3 * gv[i]);

    CHECK_THROWS_AS((void)sgd_step(p, grad, -1.0), Error);
    NetworkParams wrong = random_net(3, 0, 3, rng);
    try {
        (void)sgd_step(p, wrong, 0.1);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::dimension_mismatch);
    }
}

TEST_CASE("sgd_step on ½θ² follows θ_k = 0.5^k") {
    // One scalar parameter (a 1×1 head weight); gradient of ½θ² is θ.
    NetworkParams p;
    p.head.weights = Matrix(2, 1);
    p.head.weights(0, 0) = 1.0;
    p.head.biases = {0.0, 0.0};
    for (int k = 1; k <= 30; ++k) {
        NetworkParams g = zeros_like(p);
        g.head.weights(0, 0) = p.head.weights(0, 0);
        p = sgd_step(p, g, 0.5);
        CHECK(p.head.weights(0, 0) == std::ldexp(1.0, -k));
    }
}

TEST_CASE("init_params") {
    Rng a(99), b(99);
    const ArchSpec arch{8, 5, 3};
    const NetworkParams p = init_params(arch, a);
    CHECK(p == init_params(arch, b));
    for (double x : p.hidden->biases) CHECK(x == 0.0);
    for (double x : p.head.biases) CHECK(x == 0.0);
    CHECK(p.input_dim() == 8);
    CHECK(p.head.feat_dim() == 5);

    Rng c(7);
    const ArchSpec wide{50, 200, 2};  // 10⁴ hidden weights, fan-in 50
    const NetworkParams w = init_params(wide, c);
    double s = 0.0, s2 = 0.0;
    for (double x : w.hidden->weights.data()) {
        s += x;
        s2 += x * x;
    }
    const double n = static_cast<double>(w.hidden->weights.size());
    const double var = s2 / n - (s / n) * (s / n);
    CHECK(var >= 0.8 / 50.0);
    CHECK(var <= 1.2 / 50.0);

    CHECK_THROWS_AS((void)init_params({0, 0, 3}, c), Error);
    CHECK_THROWS_AS((void)init_params({4, 0, 0}, c), Error);
}

TEST_CASE("checkpoint round trip is exact") {
    Rng rng(10);
    const auto dir = std::filesystem::temp_directory_path() / "mms_test_model";
    std::filesystem::create_directories(dir);
    for (std::size_t hidden : {0u, 3u}) {
        const NetworkParams p = random_net(4, hidden, 3, rng);
        save_checkpoint(dir / "p.ckpt", p);
        CHECK(load_checkpoint(dir / "p.ckpt") == p);
    }
    {
        std::ofstream os(dir / "bad.ckpt", std::ios::binary);
        os << "NOTACKPT";
    }
    try {
        (void)load_checkpoint(dir / "bad.ckpt");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::bad_magic);
    }
    {
        std::ofstream os(dir / "short.ckpt", std::ios::binary);
        os << "MMSCKPT1";
    }
    try {
        (void)load_checkpoint(dir / "short.ckpt");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::truncated);
    }
}
