#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lingofuse/lingofuse.hpp"

namespace lftest {

using namespace lingofuse;
namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = fs::temp_directory_path() /
                ("lingofuse_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream(path) << text;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Vocabulary small_vocab() {
    return Vocabulary::build(std::vector<std::string>{"the cat sat on the mat", "ml_a ml_b ml_c en_x",
                                                      "kn_a kn_b en_x en_y", "ta_a ta_b ta_c"});
}

inline TinyEncoderConfig tiny_config(std::size_t hidden = 8, std::size_t heads = 2, std::size_t layers = 2,
                                     std::size_t ffn = 16, std::size_t max_len = 16, std::uint64_t seed = 3) {
    TinyEncoderConfig c;
    c.hidden = hidden;
    c.heads = heads;
    c.layers = layers;
    c.ffn = ffn;
    c.max_len = max_len;
    c.seed = seed;
    return c;
}

inline std::unique_ptr<TinyEncoder> tiny_encoder(const Vocabulary& vocab = small_vocab(),
                                                 const TinyEncoderConfig& cfg = tiny_config()) {
    return std::make_unique<TinyEncoder>(vocab, cfg);
}

inline FrameworkModel tiny_model(bool descriptors = true, std::vector<std::size_t> heads = {3, 3, 3},
                                 std::uint64_t seed = 5) {
    FrameworkModel m(tiny_encoder(), std::move(heads), descriptors, seed);
    // Larger descriptors than the 0.02 init so their gradients are well above FD noise.
    if (descriptors) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> d(0.0, 0.5);
        for (Eigen::Index i = 0; i < m.descriptors().size(); ++i) m.descriptors().data()[i] = d(rng);
    }
    return m;
}

/// ||a - b|| / max(||a||, ||b||), guarded against an all-zero pair.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nb));
    return scale < 1e-15 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

/// Central difference of `f` with respect to every entry of `x` listed in `idx`.
inline std::vector<double> numeric_gradient(Matrix& x, const std::vector<Eigen::Index>& idx,
                                            const std::function<double()>& f, double h = 1e-5) {
    std::vector<double> out;
    for (auto i : idx) {
        const double orig = x.data()[i];
        x.data()[i] = orig + h;
        const double up = f();
        x.data()[i] = orig - h;
        const double down = f();
        x.data()[i] = orig;
        out.push_back((up - down) / (2.0 * h));
    }
    return out;
}

inline std::vector<Eigen::Index> sample_indices(Eigen::Index size, std::size_t count, std::uint64_t seed) {
    std::vector<Eigen::Index> idx;
    if (static_cast<std::size_t>(size) <= count) {
        for (Eigen::Index i = 0; i < size; ++i) idx.push_back(i);
        return idx;
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> d(0, size - 1);
    for (std::size_t k = 0; k < count; ++k) idx.push_back(d(rng));
    return idx;
}

inline SyntheticCorpusConfig small_corpus(std::size_t train = 120, std::size_t dev = 40, std::size_t test = 40,
                                          std::uint64_t seed = 7) {
    SyntheticCorpusConfig c;
    c.train_per_language = train;
    c.dev_per_language = dev;
    c.test_per_language = test;
    c.seed = seed;
    return c;
}

/// Small, fast training setup for unit tests.
inline TrainConfig fast_config(std::size_t epochs = 2) {
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.dropout = 0.1;
    c.epochs = epochs;
    c.batch_size = 32;
    c.max_len = 24;
    c.encoder = tiny_config(16, 2, 1, 32, 24, 0);
    return c;
}

}  // namespace lftest
