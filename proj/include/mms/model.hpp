#pragma once

#include "mms/numerics.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>

namespace mms {

// Last layer: n linear classifiers f_i(y) = w_i·y + b_i, one weight row per class.
struct LinearHead {
    Matrix weights;  // n_classes × feat_dim
    Vector biases;   // n_classes

    std::size_t n_classes() const noexcept { return weights.rows(); }
    std::size_t feat_dim() const noexcept { return weights.cols(); }

    friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

// The one fixed nonlinearity the feature stage supports.
enum class Activation { tanh };

struct HiddenLayer {
    Matrix weights;  // hidden × input_dim
    Vector biases;   // hidden
    Activation activation = Activation::tanh;

    friend bool operator==(const HiddenLayer&, const HiddenLayer&) = default;
};

// Feature stage (identity when `hidden` is empty) followed by the linear head.
// Gradients use the same type.
struct NetworkParams {
    std::optional<HiddenLayer> hidden;
    LinearHead head;

    std::size_t input_dim() const noexcept {
        return hidden ? hidden->weights.cols() : head.feat_dim();
    }
    std::size_t n_classes() const noexcept { return head.n_classes(); }

    friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

struct ArchSpec {
    std::size_t input_dim = 0;
    std::size_t hidden = 0;  // 0 selects the identity feature stage
    std::size_t n_classes = 0;

    friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

struct ForwardResult {
    Matrix features;  // pool_size × feat_dim, input to the head
    Matrix logits;    // pool_size × n_classes
};

struct LossAndGrad {
    double loss = 0.0;  // mean cross-entropy, nats
    NetworkParams grad;
};

// Structural checks: n_classes >= 2, chained dimensions, finite entries.
void validate(const NetworkParams& params);

ForwardResult forward(const NetworkParams& params, const Matrix& inputs);

// Per-row cross-entropy −log softmax(logits)[label].
Vector cross_entropy_rows(const Matrix& logits, std::span<const std::size_t> labels);

LossAndGrad loss_and_grad(const NetworkParams& params, const Matrix& inputs,
                          std::span<const std::size_t> labels);

NetworkParams sgd_step(const NetworkParams& params, const NetworkParams& grad, double lr);

// Weights ~ N(0, 1/fan_in), biases zero.
NetworkParams init_params(const ArchSpec& arch, Rng& rng);

NetworkParams zeros_like(const NetworkParams& params);

// Visits every scalar parameter in a fixed order (hidden W, hidden b, head W, head b).
template <typename Fn>
void for_each_param(NetworkParams& params, Fn&& fn) {
    if (params.hidden) {
        for (double& x : params.hidden->weights.data()) fn(x);
        for (double& x : params.hidden->biases) fn(x);
    }
    for (double& x : params.head.weights.data()) fn(x);
    for (double& x : params.head.biases) fn(x);
}

// Checkpoint layout (all integers little-endian):
//   8 bytes  magic "MMSCKPT1"
//   u32      has_hidden (0/1)
//   [if has_hidden] u64 rows, u64 cols, rows*cols f64 hidden weights,
//                   u64 len, len f64 hidden biases
//   u64 rows, u64 cols, rows*cols f64 head weights
//   u64 len, len f64 head biases
// Doubles are stored as their IEEE-754 bit patterns, so round trips are exact.
void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace mms
