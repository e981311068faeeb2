#ifndef SONOS_DATASET_HPP
#define SONOS_DATASET_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sonos/errors.hpp"
#include "sonos/rng.hpp"

namespace sonos {

/// Examples stored row-major as floats in [0, 1] with integer labels.
struct Split {
    std::size_t dims = 0;
    std::vector<float> features;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const float> example(std::size_t k) const { return {features.data() + k * dims, dims}; }

    /// First n examples (all of them when n is 0 or too large).
    Split head(std::size_t n) const {
        if (n == 0 || n >= size()) return *this;
        Split out;
        out.dims = dims;
        out.features.assign(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(n * dims));
        out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
        return out;
    }

    bool operator==(const Split&) const = default;
};

struct Dataset {
    std::string name;
    int classes = 0;
    Split train;
    Split test;

    bool operator==(const Dataset&) const = default;
};

// ---------------------------------------------------------------------------
// IDX (big-endian) files.

namespace idx {

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open IDX file '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
    if (off + 4 > b.size()) {
        throw ParseError(path + ": truncated header at byte offset " + std::to_string(b.size()), b.size());
    }
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

inline void check_magic(std::uint32_t magic, std::uint32_t want, const std::string& path) {
    if (magic != want) {
        char buf[96];
        std::snprintf(buf, sizeof buf, ": bad magic number 0x%08x (expected 0x%08x)", magic, want);
        throw ParseError(path + buf, 0);
    }
}

inline void check_payload(const std::vector<unsigned char>& b, std::size_t header, std::size_t payload,
                          const std::string& path) {
    if (b.size() < header + payload) {
        throw ParseError(path + ": truncated payload: expected " + std::to_string(header + payload) +
                             " bytes, file ends at byte offset " + std::to_string(b.size()),
                         b.size());
    }
    if (b.size() > header + payload) {
        throw ParseError(path + ": " + std::to_string(b.size() - header - payload) +
                             " trailing bytes after payload at byte offset " + std::to_string(header + payload),
                         header + payload);
    }
}

struct Images {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> pixels;  // scaled to [0, 1]
};

inline Images read_images(const std::string& path) {
    const auto b = read_file(path);
    check_magic(be32(b, 0, path), kImageMagic, path);
    Images img;
    img.count = be32(b, 4, path);
    img.rows = be32(b, 8, path);
    img.cols = be32(b, 12, path);
    const std::size_t n = img.count * img.rows * img.cols;
    check_payload(b, 16, n, path);
    img.pixels.resize(n);
    for (std::size_t k = 0; k < n; ++k) img.pixels[k] = static_cast<float>(b[16 + k]) / 255.0f;
    return img;
}

inline std::vector<int> read_labels(const std::string& path) {
    const auto b = read_file(path);
    check_magic(be32(b, 0, path), kLabelMagic, path);
    const std::size_t n = be32(b, 4, path);
    check_payload(b, 8, n, path);
    std::vector<int> labels(n);
    for (std::size_t k = 0; k < n; ++k) {
        labels[k] = b[8 + k];
        if (labels[k] > 9) {
            throw ParseError(path + ": label " + std::to_string(labels[k]) + " out of range at byte offset " +
                                 std::to_string(8 + k),
                             8 + k);
        }
    }
    return labels;
}

inline Split read_split(const std::string& images, const std::string& labels) {
    auto img = read_images(images);
    auto lab = read_labels(labels);
    if (img.count != lab.size()) {
        throw ParseError("count mismatch: " + images + " has " + std::to_string(img.count) + " images, " + labels +
                         " has " + std::to_string(lab.size()) + " labels");
    }
    Split s;
    s.dims = img.rows * img.cols;
    s.features = std::move(img.pixels);
    s.labels = std::move(lab);
    return s;
}

}  // namespace idx

struct MnistPaths {
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;

    /// Standard file names inside one directory.
    static MnistPaths in_directory(const std::filesystem::path& dir) {
        return {(dir / "train-images-idx3-ubyte").string(), (dir / "train-labels-idx1-ubyte").string(),
                (dir / "t10k-images-idx3-ubyte").string(), (dir / "t10k-labels-idx1-ubyte").string()};
    }
};

inline Dataset load_mnist(const MnistPaths& paths) {
    Dataset d;
    d.name = "mnist";
    d.classes = 10;
    d.train = idx::read_split(paths.train_images, paths.train_labels);
    d.test = idx::read_split(paths.test_images, paths.test_labels);
    if (d.train.dims != d.test.dims) throw ParseError("MNIST train/test image sizes differ");
    return d;
}

// ---------------------------------------------------------------------------
// Stand-in for the file-types dataset: Gaussian class clusters.

struct SurrogateSpec {
    std::size_t train = 4501;
    std::size_t test = 900;
    std::size_t dims = 256;
    int classes = 9;
    /// Per-feature standard deviation around each class centre. Centres are
    /// uniform in [0.2, 0.8]^dims, so smaller spread means a wider margin.
    double spread = 0.15;
};

inline Dataset gen_filetypes_surrogate(std::uint64_t seed, const SurrogateSpec& spec = {}) {
    if (spec.classes < 2 || spec.dims == 0) throw ConfigError("surrogate: need >= 2 classes and >= 1 dim");
    if (!(spec.spread >= 0.0)) throw ConfigError("surrogate: spread must be non-negative");
    Rng rng(seed);
    std::vector<float> centres(static_cast<std::size_t>(spec.classes) * spec.dims);
    for (auto& c : centres) c = static_cast<float>(rng.uniform(0.2, 0.8));

    const auto make = [&](std::size_t n) {
        Split s;
        s.dims = spec.dims;
        s.labels.resize(n);
        for (std::size_t k = 0; k < n; ++k) s.labels[k] = static_cast<int>(k % static_cast<std::size_t>(spec.classes));
        std::shuffle(s.labels.begin(), s.labels.end(), rng.engine());
        s.features.resize(n * spec.dims);
        for (std::size_t k = 0; k < n; ++k) {
            const float* c = centres.data() + static_cast<std::size_t>(s.labels[k]) * spec.dims;
            for (std::size_t f = 0; f < spec.dims; ++f) {
                const double v = c[f] + (spec.spread > 0.0 ? rng.normal(0.0, spec.spread) : 0.0);
                s.features[k * spec.dims + f] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
        return s;
    };

    Dataset d;
    d.name = "filetypes_surrogate";
    d.classes = spec.classes;
    d.train = make(spec.train);
    d.test = make(spec.test);
    return d;
}

}  // namespace sonos

#endif  // SONOS_DATASET_HPP
