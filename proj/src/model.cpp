#include "mms/model.hpp"

#include "mms/error.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

namespace mms {

namespace {

std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_finite(std::span<const double> xs, const char* what) {
    for (double x : xs)
        if (!std::isfinite(x)) fail(ErrorCode::non_finite, std::string(what) + " has non-finite entries");
}

void add_bias_rows(Matrix& m, const Vector& bias) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
    }
}

double activate(Activation, double x) { return std::tanh(x); }

// Derivative expressed through the activation output.
double activate_grad_from_output(Activation, double out) { return 1.0 - out * out; }

void check_labels(std::span<const std::size_t> labels, std::size_t rows, std::size_t n_classes) {
    if (labels.size() != rows) {
        fail(ErrorCode::dimension_mismatch, "labels: " + std::to_string(labels.size()) +
                                                " labels for " + std::to_string(rows) + " rows");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= n_classes) {
            fail(ErrorCode::invalid_label, "label " + std::to_string(labels[i]) + " at row " +
                                               std::to_string(i) + " outside [0, " +
                                               std::to_string(n_classes) + ")");
        }
    }
}

}  // namespace

void validate(const NetworkParams& params) {
    const auto& head = params.head;
    if (head.n_classes() < 2) fail(ErrorCode::invalid_argument, "head needs at least 2 classes");
    if (head.feat_dim() == 0) fail(ErrorCode::invalid_argument, "head feature dimension is 0");
    if (head.biases.size() != head.n_classes()) {
        fail(ErrorCode::dimension_mismatch, "head biases length " +
                                                std::to_string(head.biases.size()) +
                                                " != n_classes " + std::to_string(head.n_classes()));
    }
    require_finite(head.weights.data(), "head weights");
    require_finite(head.biases, "head biases");
    if (params.hidden) {
        const auto& h = *params.hidden;
        if (h.weights.rows() != head.feat_dim()) {
            fail(ErrorCode::dimension_mismatch,
                 "hidden layer " + shape(h.weights) + " does not feed head " + shape(head.weights));
        }
        if (h.weights.cols() == 0) fail(ErrorCode::invalid_argument, "hidden input dimension is 0");
        if (h.biases.size() != h.weights.rows())
            fail(ErrorCode::dimension_mismatch, "hidden biases length mismatch");
        require_finite(h.weights.data(), "hidden weights");
        require_finite(h.biases, "hidden biases");
    }
}

ForwardResult forward(const NetworkParams& params, const Matrix& inputs) {
    if (inputs.cols() != params.input_dim()) {
        fail(ErrorCode::dimension_mismatch, "forward: inputs " + shape(inputs) +
                                                " but network expects " +
                                                std::to_string(params.input_dim()) + " columns");
    }
    ForwardResult fr;
    if (params.hidden) {
        const auto& h = *params.hidden;
        fr.features = matmul_transposed(inputs, h.weights);
        add_bias_rows(fr.features, h.biases);
        for (double& x : fr.features.data()) x = activate(h.activation, x);
    } else {
        fr.features = inputs;
    }
    fr.logits = matmul_transposed(fr.features, params.head.weights);
    add_bias_rows(fr.logits, params.head.biases);
    if (!fr.logits.all_finite()) fail(ErrorCode::non_finite, "forward: non-finite logits");
    return fr;
}

Vector cross_entropy_rows(const Matrix& logits, std::span<const std::size_t> labels) {
    check_labels(labels, logits.rows(), logits.cols());
    Vector out(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto row = logits.row(r);
        out[r] = log_sum_exp(row) - row[labels[r]];
    }
    return out;
}

LossAndGrad loss_and_grad(const NetworkParams& params, const Matrix& inputs,
                          std::span<const std::size_t> labels) {
    if (inputs.rows() == 0) fail(ErrorCode::empty_input, "loss_and_grad: empty batch");
    check_labels(labels, inputs.rows(), params.n_classes());
    const ForwardResult fr = forward(params, inputs);
    const std::size_t batch = inputs.rows();
    const std::size_t n = params.n_classes();
    const double inv_batch = 1.0 / static_cast<double>(batch);

    LossAndGrad out;
    out.grad = zeros_like(params);

    // d(mean CE)/d logits = (softmax − onehot) / batch
    Matrix dlogits(batch, n);
    double total = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        auto row = fr.logits.row(r);
        const double lse = log_sum_exp(row);
        total += lse - row[labels[r]];
        auto d = dlogits.row(r);
        for (std::size_t c = 0; c < n; ++c) d[c] = std::exp(row[c] - lse) * inv_batch;
        d[labels[r]] -= inv_batch;
    }
    out.loss = total * inv_batch;

    auto& gh = out.grad.head;
    for (std::size_t r = 0; r < batch; ++r) {
        auto d = dlogits.row(r);
        auto y = fr.features.row(r);
        for (std::size_t c = 0; c < n; ++c) {
            gh.biases[c] += d[c];
            auto gw = gh.weights.row(c);
            for (std::size_t k = 0; k < y.size(); ++k) gw[k] += d[c] * y[k];
        }
    }

    if (params.hidden) {
        const auto& h = *params.hidden;
        auto& gl = *out.grad.hidden;
        const Matrix dfeatures = matmul(dlogits, params.head.weights);
        for (std::size_t r = 0; r < batch; ++r) {
            auto x = inputs.row(r);
            auto y = fr.features.row(r);
            auto df = dfeatures.row(r);
            for (std::size_t j = 0; j < y.size(); ++j) {
                const double dpre = df[j] * activate_grad_from_output(h.activation, y[j]);
                gl.biases[j] += dpre;
                auto gw = gl.weights.row(j);
                for (std::size_t k = 0; k < x.size(); ++k) gw[k] += dpre * x[k];
            }
        }
    }
    return out;
}

NetworkParams sgd_step(const NetworkParams& params, const NetworkParams& grad, double lr) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) fail(ErrorCode::invalid_argument, "sgd_step: lr must be finite and >= 0");
    const bool same_shape =
        params.hidden.has_value() == grad.hidden.has_value() &&
        params.head.weights.rows() == grad.head.weights.rows() &&
        params.head.weights.cols() == grad.head.weights.cols() &&
        params.head.biases.size() == grad.head.biases.size() &&
        (!params.hidden || (params.hidden->weights.rows() == grad.hidden->weights.rows() &&
                            params.hidden->weights.cols() == grad.hidden->weights.cols() &&
                            params.hidden->biases.size() == grad.hidden->biases.size()));
    if (!same_shape) fail(ErrorCode::dimension_mismatch, "sgd_step: gradient shape does not match params");

    NetworkParams next = params;
    auto step = [lr](std::span<double> dst, std::span<const double> g) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= lr * g[i];
    };
    if (next.hidden) {
        step(next.hidden->weights.data(), grad.hidden->weights.data());
        step(next.hidden->biases, grad.hidden->biases);
    }
    step(next.head.weights.data(), grad.head.weights.data());
    step(next.head.biases, grad.head.biases);
    validate(next);
    return next;
}

NetworkParams init_params(const ArchSpec& arch, Rng& rng) {
    if (arch.input_dim == 0 || arch.n_classes == 0)
        fail(ErrorCode::invalid_argument, "init_params: dimensions must be positive");
    if (arch.n_classes < 2) fail(ErrorCode::invalid_argument, "init_params: need at least 2 classes");

    auto fill = [&rng](Matrix& w) {
        const double scale = std::sqrt(1.0 / static_cast<double>(w.cols()));
        for (double& x : w.data()) x = scale * rng.gaussian();
    };

    NetworkParams p;
    std::size_t feat = arch.input_dim;
    if (arch.hidden > 0) {
        HiddenLayer h;
        h.weights = Matrix(arch.hidden, arch.input_dim);
        h.biases.assign(arch.hidden, 0.0);
        fill(h.weights);
        p.hidden = std::move(h);
        feat = arch.hidden;
    }
    p.head.weights = Matrix(arch.n_classes, feat);
    p.head.biases.assign(arch.n_classes, 0.0);
    fill(p.head.weights);
    return p;
}

NetworkParams zeros_like(const NetworkParams& params) {
    NetworkParams z = params;
    for_each_param(z, [](double& x) { x = 0.0; });
    return z;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::array<char, 8> kCheckpointMagic = {'M', 'M', 'S', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> b;
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b.data(), 8);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    std::array<char, 4> b;
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b.data(), 4);
}

void put_doubles(std::ostream& os, std::span<const double> xs) {
    for (double x : xs) put_u64(os, std::bit_cast<std::uint64_t>(x));
}

void put_matrix(std::ostream& os, const Matrix& m) {
    put_u64(os, m.rows());
    put_u64(os, m.cols());
    put_doubles(os, m.data());
}

void put_vector(std::ostream& os, const Vector& v) {
    put_u64(os, v.size());
    put_doubles(os, v);
}

struct Reader {
    std::istream& is;
    const std::filesystem::path& path;

    void bytes(char* dst, std::size_t n) {
        is.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is.gcount()) != n)
            fail(ErrorCode::truncated, "checkpoint " + path.string() + " is truncated");
    }
    std::uint64_t u64() {
        std::array<unsigned char, 8> b;
        bytes(reinterpret_cast<char*>(b.data()), 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
        return v;
    }
    std::uint32_t u32() {
        std::array<unsigned char, 4> b;
        bytes(reinterpret_cast<char*>(b.data()), 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
        return v;
    }
    std::vector<double> doubles(std::uint64_t n) {
        // Guard against absurd headers before allocating.
        if (n > (std::uint64_t{1} << 32)) fail(ErrorCode::parse, "checkpoint dimension too large");
        std::vector<double> out(n);
        for (auto& x : out) x = std::bit_cast<double>(u64());
        return out;
    }
    Matrix matrix() {
        const auto rows = u64();
        const auto cols = u64();
        if (cols != 0 && rows > (std::uint64_t{1} << 32) / cols)
            fail(ErrorCode::parse, "checkpoint dimension too large");
        return Matrix(rows, cols, doubles(rows * cols));
    }
    Vector vector() { return doubles(u64()); }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    put_u32(os, params.hidden ? 1 : 0);
    if (params.hidden) {
        put_matrix(os, params.hidden->weights);
        put_vector(os, params.hidden->biases);
    }
    put_matrix(os, params.head.weights);
    put_vector(os, params.head.biases);
    if (!os) fail(ErrorCode::io, "failed writing " + path.string());
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::io, "cannot open " + path.string());
    Reader rd{is, path};
    std::array<char, 8> magic;
    rd.bytes(magic.data(), magic.size());
    if (magic != kCheckpointMagic) fail(ErrorCode::bad_magic, path.string() + " is not a checkpoint");
    NetworkParams p;
    const auto has_hidden = rd.u32();
    if (has_hidden > 1) fail(ErrorCode::parse, "checkpoint hidden flag must be 0 or 1");
    if (has_hidden == 1) {
        HiddenLayer h;
        h.weights = rd.matrix();
        h.biases = rd.vector();
        p.hidden = std::move(h);
    }
    p.head.weights = rd.matrix();
    p.head.biases = rd.vector();
    validate(p);
    return p;
}

}  // namespace mms
