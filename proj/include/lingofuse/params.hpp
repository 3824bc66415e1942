#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lingofuse/error.hpp"

namespace lingofuse {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Tensor {
    std::string name;
    Matrix value;
};

/// Ordered collection of named trainable tensors. Gradient buffers are
/// ParamSets with the same layout, created with zeros_like().
class ParamSet {
public:
    std::size_t add(std::string name, Matrix value) {
        tensors_.push_back({std::move(name), std::move(value)});
        return tensors_.size() - 1;
    }

    std::size_t size() const { return tensors_.size(); }
    Matrix& operator[](std::size_t i) { return tensors_[i].value; }
    const Matrix& operator[](std::size_t i) const { return tensors_[i].value; }
    const std::string& name(std::size_t i) const { return tensors_[i].name; }

    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }
    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

    ParamSet zeros_like() const {
        ParamSet out;
        for (const auto& t : tensors_) out.add(t.name, Matrix::Zero(t.value.rows(), t.value.cols()));
        return out;
    }

    void set_zero() {
        for (auto& t : tensors_) t.value.setZero();
    }

    bool same_layout(const ParamSet& other) const {
        if (other.size() != size()) return false;
        for (std::size_t i = 0; i < size(); ++i) {
            if (tensors_[i].value.rows() != other[i].rows() || tensors_[i].value.cols() != other[i].cols())
                return false;
        }
        return true;
    }

    ParamSet& operator+=(const ParamSet& other) {
        if (!same_layout(other)) throw ShapeError("ParamSet layout mismatch in +=");
        for (std::size_t i = 0; i < size(); ++i) tensors_[i].value += other[i];
        return *this;
    }

    void scale(double s) {
        for (auto& t : tensors_) t.value *= s;
    }

    double squared_norm() const {
        double acc = 0.0;
        for (const auto& t : tensors_) acc += t.value.squaredNorm();
        return acc;
    }

    bool all_finite() const {
        for (const auto& t : tensors_)
            if (!t.value.allFinite()) return false;
        return true;
    }

    bool operator==(const ParamSet& other) const {
        if (!same_layout(other)) return false;
        for (std::size_t i = 0; i < size(); ++i) {
            if (tensors_[i].name != other.name(i)) return false;
            if (std::memcmp(tensors_[i].value.data(), other[i].data(),
                            sizeof(double) * static_cast<std::size_t>(other[i].size())) != 0)
                return false;
        }
        return true;
    }

    nlohmann::json to_json() const {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& t : tensors_) {
            nlohmann::json j;
            j["name"] = t.name;
            j["rows"] = t.value.rows();
            j["cols"] = t.value.cols();
            j["data"] = std::vector<double>(t.value.data(), t.value.data() + t.value.size());
            out.push_back(std::move(j));
        }
        return out;
    }

    // Loads values into an existing layout; names and shapes must match.
    void load_json(const nlohmann::json& j) {
        if (!j.is_array() || j.size() != size())
            throw LoadError("weight file has " + std::to_string(j.size()) + " tensors, expected " +
                            std::to_string(size()));
        for (std::size_t i = 0; i < size(); ++i) {
            const auto& t = j[i];
            if (t.at("name").get<std::string>() != tensors_[i].name)
                throw LoadError("weight tensor " + std::to_string(i) + " is '" + t.at("name").get<std::string>() +
                                "', expected '" + tensors_[i].name + "'");
            auto rows = t.at("rows").get<Eigen::Index>();
            auto cols = t.at("cols").get<Eigen::Index>();
            auto data = t.at("data").get<std::vector<double>>();
            if (rows != tensors_[i].value.rows() || cols != tensors_[i].value.cols() ||
                static_cast<Eigen::Index>(data.size()) != rows * cols)
                throw LoadError("shape mismatch for weight tensor '" + tensors_[i].name + "'");
            std::memcpy(tensors_[i].value.data(), data.data(), sizeof(double) * data.size());
        }
    }

private:
    std::vector<Tensor> tensors_;
};

/// FNV-1a over the raw bytes of a matrix. Used for restore-integrity checks.
inline std::uint64_t byte_hash(const Matrix& m) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto* p = reinterpret_cast<const unsigned char*>(m.data());
    const std::size_t n = sizeof(double) * static_cast<std::size_t>(m.size());
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t byte_hash(const ParamSet& ps) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& t : ps) h = (h ^ byte_hash(t.value)) * 1099511628211ULL;
    return h;
}

}  // namespace lingofuse
