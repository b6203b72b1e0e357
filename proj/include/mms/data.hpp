#pragma once

#include "mms/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace mms {

enum class Split { train, test };

struct Dataset {
    Matrix features;  // num_samples × input_dim
    std::vector<std::size_t> labels;
    std::size_t n_classes = 0;
    Split split = Split::train;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t input_dim() const noexcept { return features.cols(); }
};

// Throws on any broken Dataset invariant (labels in range, row counts agree,
// finite features, at least one row).
void validate(const Dataset& ds);

// Balanced Gaussian mixture. Class c has mean separation·u_c, where u_c is the
// basis vector e_c when n_classes <= dim and otherwise a unit vector drawn from
// a fixed-seed stream (so means never depend on `rng`). Noise is N(0, I).
// Rows are grouped by class.
Dataset gen_gaussian_mixture(std::size_t n_classes, std::size_t dim, std::size_t per_class,
                             double separation, Rng& rng, Split split = Split::train);

// Class means used by gen_gaussian_mixture, one row per class.
Matrix mixture_means(std::size_t n_classes, std::size_t dim, double separation);

// IDX (big-endian): images magic 0x00000803 + 3 dims, labels 0x00000801 + 1 dim,
// unsigned-byte payloads. Pixels load as byte/255. n_classes defaults to
// max(label) + 1 (at least 2).
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::optional<std::size_t> n_classes = std::nullopt, Split split = Split::train);

struct IdxImages {
    std::uint32_t count = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::uint8_t> pixels;  // count × rows × cols
};

void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const IdxImages& images, std::span<const std::uint8_t> labels);

// CSV rows: integer label, then the features. No header. Width comes from the
// first row.
Dataset load_csv(const std::filesystem::path& path, std::size_t n_classes, Split split = Split::train);

// Shortest round-trip formatting, so load_csv(write_csv(ds)) is exact.
void write_csv(const std::filesystem::path& path, const Dataset& ds);

// Per-feature standardization fitted on one split and applied to any other.
// Constant features are centered but not scaled.
struct FeatureScaler {
    Vector mean;
    Vector inv_std;

    static FeatureScaler fit(const Dataset& ds);
    void apply(Dataset& ds) const;
};

enum class PoolPolicy { fresh, epoch };

struct PoolSpec {
    std::size_t pool_size = 0;   // B
    std::size_t batch_size = 0;  // b
    PoolPolicy policy = PoolPolicy::fresh;
};

void validate(const PoolSpec& spec, std::size_t num_samples);

// Fresh uniform draw of B distinct row indices.
std::vector<std::size_t> draw_pool(const Dataset& ds, const PoolSpec& spec, Rng& rng);

// Draws pools under either policy. `epoch` walks a shuffled permutation in
// chunks of B, reshuffling when fewer than B indices remain.
class PoolSampler {
public:
    PoolSampler(PoolSpec spec, std::size_t num_samples);

    std::vector<std::size_t> next(Rng& rng);

private:
    PoolSpec spec_;
    std::size_t num_samples_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

}  // namespace mms
