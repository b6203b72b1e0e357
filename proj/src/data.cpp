#include "mms/data.hpp"

#include "mms/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <string_view>

namespace mms {

void validate(const Dataset& ds) {
    if (ds.size() == 0) fail(ErrorCode::empty_input, "dataset has no rows");
    if (ds.features.rows() != ds.labels.size()) {
        fail(ErrorCode::count_mismatch, "dataset has " + std::to_string(ds.features.rows()) +
                                            " feature rows but " + std::to_string(ds.labels.size()) +
                                            " labels");
    }
    if (ds.n_classes < 2) fail(ErrorCode::invalid_argument, "dataset needs at least 2 classes");
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        if (ds.labels[i] >= ds.n_classes) {
            fail(ErrorCode::invalid_label, "row " + std::to_string(i) + ": label " +
                                               std::to_string(ds.labels[i]) + " >= n_classes " +
                                               std::to_string(ds.n_classes));
        }
    }
    if (!ds.features.all_finite()) fail(ErrorCode::non_finite, "dataset has non-finite features");
}

// ---------------------------------------------------------------------------
// Synthetic Gaussian mixture

namespace {
constexpr std::uint64_t kMeansSeed = 0x6D6D732D6D65616EULL;  // "mms-mean"
}

Matrix mixture_means(std::size_t n_classes, std::size_t dim, double separation) {
    Matrix means(n_classes, dim);
    if (n_classes <= dim) {
        for (std::size_t c = 0; c < n_classes; ++c) means(c, c) = separation;
        return means;
    }
    Rng rng(kMeansSeed);
    for (std::size_t c = 0; c < n_classes; ++c) {
        auto row = means.row(c);
        double norm = 0.0;
        while (norm == 0.0) {
            for (double& x : row) x = rng.gaussian();
            norm = l2_norm(row);
        }
        for (double& x : row) x = separation * x / norm;
    }
    return means;
}

Dataset gen_gaussian_mixture(std::size_t n_classes, std::size_t dim, std::size_t per_class,
                             double separation, Rng& rng, Split split) {
    if (n_classes < 2) fail(ErrorCode::invalid_argument, "gen_gaussian_mixture: need at least 2 classes");
    if (dim == 0 || per_class == 0)
        fail(ErrorCode::invalid_argument, "gen_gaussian_mixture: dim and per_class must be >= 1");
    if (!(separation >= 0.0) || !std::isfinite(separation))
        fail(ErrorCode::invalid_argument, "gen_gaussian_mixture: separation must be finite and >= 0");

    const Matrix means = mixture_means(n_classes, dim, separation);
    Dataset ds;
    ds.n_classes = n_classes;
    ds.split = split;
    ds.features = Matrix(n_classes * per_class, dim);
    ds.labels.resize(n_classes * per_class);
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            const std::size_t r = c * per_class + i;
            ds.labels[r] = c;
            auto row = ds.features.row(r);
            for (std::size_t j = 0; j < dim; ++j) row[j] = means(c, j) + rng.gaussian();
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ostream& os, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    os.write(b, 4);
}

// Checks magic and header, returns the dimension words.
std::vector<std::uint32_t> idx_header(const std::vector<std::uint8_t>& bytes, std::uint32_t magic,
                                      std::size_t ndims, const std::filesystem::path& path) {
    if (bytes.size() < 4) fail(ErrorCode::truncated, path.string() + ": truncated IDX header");
    if (read_be32(bytes, 0) != magic) {
        fail(ErrorCode::bad_magic, path.string() + ": bad IDX magic (expected 0x0000080" +
                                       std::to_string(magic & 0xF) + ")");
    }
    if (bytes.size() < 4 + 4 * ndims) fail(ErrorCode::truncated, path.string() + ": truncated IDX header");
    std::vector<std::uint32_t> dims(ndims);
    for (std::size_t i = 0; i < ndims; ++i) dims[i] = read_be32(bytes, 4 + 4 * i);
    return dims;
}

void check_payload(std::size_t have, std::uint64_t want, const std::filesystem::path& path) {
    if (have < want) {
        fail(ErrorCode::truncated, path.string() + ": payload has " + std::to_string(have) +
                                       " bytes, header promises " + std::to_string(want));
    }
    if (have > want) {
        fail(ErrorCode::parse, path.string() + ": " + std::to_string(have - want) +
                                   " trailing bytes after IDX payload");
    }
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::optional<std::size_t> n_classes, Split split) {
    const auto img = read_all(images_path);
    const auto dims = idx_header(img, kIdxImagesMagic, 3, images_path);
    const std::uint64_t count = dims[0];
    const std::uint64_t pixels = std::uint64_t{dims[1]} * dims[2];
    check_payload(img.size() - 16, count * pixels, images_path);

    const auto lab = read_all(labels_path);
    const auto ldims = idx_header(lab, kIdxLabelsMagic, 1, labels_path);
    check_payload(lab.size() - 8, ldims[0], labels_path);
    if (ldims[0] != count) {
        fail(ErrorCode::count_mismatch, labels_path.string() + " has " + std::to_string(ldims[0]) +
                                            " labels for " + std::to_string(count) + " images");
    }
    if (count == 0) fail(ErrorCode::empty_input, images_path.string() + " holds no images");

    Dataset ds;
    ds.split = split;
    ds.features = Matrix(count, pixels);
    auto out = ds.features.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(img[16 + i]) / 255.0;
    ds.labels.assign(lab.begin() + 8, lab.end());
    const std::size_t max_label = *std::max_element(ds.labels.begin(), ds.labels.end());
    ds.n_classes = n_classes.value_or(std::max<std::size_t>(2, max_label + 1));
    validate(ds);
    return ds;
}

void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const IdxImages& images, std::span<const std::uint8_t> labels) {
    if (images.pixels.size() != std::size_t{images.count} * images.rows * images.cols)
        fail(ErrorCode::dimension_mismatch, "write_idx: pixel buffer does not match header");
    if (labels.size() != images.count) fail(ErrorCode::count_mismatch, "write_idx: label count mismatch");

    std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
    if (!img) fail(ErrorCode::io, "cannot open " + images_path.string() + " for writing");
    write_be32(img, kIdxImagesMagic);
    write_be32(img, images.count);
    write_be32(img, images.rows);
    write_be32(img, images.cols);
    img.write(reinterpret_cast<const char*>(images.pixels.data()),
              static_cast<std::streamsize>(images.pixels.size()));

    std::ofstream lab(labels_path, std::ios::binary | std::ios::trunc);
    if (!lab) fail(ErrorCode::io, "cannot open " + labels_path.string() + " for writing");
    write_be32(lab, kIdxLabelsMagic);
    write_be32(lab, images.count);
    lab.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
    if (!img || !lab) fail(ErrorCode::io, "write_idx: write failed");
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, std::size_t n_classes, Split split) {
    std::ifstream is(path);
    if (!is) fail(ErrorCode::io, "cannot open " + path.string());

    std::vector<double> values;
    std::vector<std::size_t> labels;
    std::size_t width = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::string_view rest = line;
        std::size_t field = 0;
        while (true) {
            const auto comma = rest.find(',');
            const std::string_view tok = trim(rest.substr(0, comma));
            if (field == 0) {
                long long label = -1;
                const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), label);
                if (ec != std::errc{} || p != tok.data() + tok.size() || tok.empty())
                    fail(ErrorCode::parse, where(path, line_no) + ": label '" + std::string(tok) + "' is not an integer");
                if (label < 0 || static_cast<unsigned long long>(label) >= n_classes)
                    fail(ErrorCode::invalid_label, where(path, line_no) + ": label " + std::to_string(label) +
                                                       " outside [0, " + std::to_string(n_classes) + ")");
                labels.push_back(static_cast<std::size_t>(label));
            } else {
                double v = 0.0;
                const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
                if (ec != std::errc{} || p != tok.data() + tok.size() || tok.empty())
                    fail(ErrorCode::parse, where(path, line_no) + ": field " + std::to_string(field) +
                                               " '" + std::string(tok) + "' is not numeric");
                if (!std::isfinite(v))
                    fail(ErrorCode::non_finite, where(path, line_no) + ": field " + std::to_string(field) + " is not finite");
                values.push_back(v);
            }
            ++field;
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        const std::size_t row_width = field - 1;
        if (labels.size() == 1) {
            if (row_width == 0) fail(ErrorCode::ragged_row, where(path, line_no) + ": row has no features");
            width = row_width;
        } else if (row_width != width) {
            fail(ErrorCode::ragged_row, where(path, line_no) + ": expected " + std::to_string(width) +
                                            " features, found " + std::to_string(row_width));
        }
    }
    if (labels.empty()) fail(ErrorCode::empty_input, path.string() + " contains no rows");

    Dataset ds;
    ds.n_classes = n_classes;
    ds.split = split;
    ds.features = Matrix(labels.size(), width, std::move(values));
    ds.labels = std::move(labels);
    validate(ds);
    return ds;
}

void write_csv(const std::filesystem::path& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
    char buf[64];
    std::string line;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        line = std::to_string(ds.labels[r]);
        for (double v : ds.features.row(r)) {
            const auto res = std::to_chars(buf, buf + sizeof(buf), v);
            line += ',';
            line.append(buf, res.ptr);
        }
        line += '\n';
        os << line;
    }
    if (!os) fail(ErrorCode::io, "failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Standardization

FeatureScaler FeatureScaler::fit(const Dataset& ds) {
    const std::size_t n = ds.size();
    const std::size_t d = ds.input_dim();
    FeatureScaler s;
    s.mean.assign(d, 0.0);
    s.inv_std.assign(d, 1.0);
    if (n == 0) return s;
    for (std::size_t r = 0; r < n; ++r) {
        auto row = ds.features.row(r);
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += row[j];
    }
    for (double& m : s.mean) m /= static_cast<double>(n);
    Vector var(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        auto row = ds.features.row(r);
        for (std::size_t j = 0; j < d; ++j) {
            const double c = row[j] - s.mean[j];
            var[j] += c * c;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        const double sd = std::sqrt(var[j] / static_cast<double>(n));
        s.inv_std[j] = sd > 0.0 ? 1.0 / sd : 1.0;
    }
    return s;
}

void FeatureScaler::apply(Dataset& ds) const {
    if (ds.input_dim() != mean.size()) fail(ErrorCode::dimension_mismatch, "FeatureScaler: width mismatch");
    for (std::size_t r = 0; r < ds.size(); ++r) {
        auto row = ds.features.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) * inv_std[j];
    }
}

// ---------------------------------------------------------------------------
// Pools

void validate(const PoolSpec& spec, std::size_t num_samples) {
    if (spec.batch_size == 0) fail(ErrorCode::invalid_argument, "batch size b must be >= 1");
    if (spec.pool_size < spec.batch_size) fail(ErrorCode::invalid_argument, "pool must be >= batch");
    if (spec.pool_size > num_samples) {
        fail(ErrorCode::invalid_argument, "pool size " + std::to_string(spec.pool_size) +
                                              " exceeds dataset size " + std::to_string(num_samples));
    }
}

std::vector<std::size_t> draw_pool(const Dataset& ds, const PoolSpec& spec, Rng& rng) {
    validate(spec, ds.size());
    return rng.sample_without_replacement(ds.size(), spec.pool_size);
}

PoolSampler::PoolSampler(PoolSpec spec, std::size_t num_samples) : spec_(spec), num_samples_(num_samples) {
    validate(spec_, num_samples_);
}

std::vector<std::size_t> PoolSampler::next(Rng& rng) {
    if (spec_.policy == PoolPolicy::fresh) return rng.sample_without_replacement(num_samples_, spec_.pool_size);
    if (order_.empty() || cursor_ + spec_.pool_size > order_.size()) {
        order_ = rng.permutation(num_samples_);
        cursor_ = 0;
    }
    std::vector<std::size_t> pool(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                  order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + spec_.pool_size));
    cursor_ += spec_.pool_size;
    return pool;
}

}  // namespace mms
