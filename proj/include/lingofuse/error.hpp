#pragma once

#include <stdexcept>
#include <string>

namespace lingofuse {

/// Base class for every error raised by the library. `kind()` is a stable
/// short tag used in the CLI's machine-readable error record.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct LoadError : Error {
    explicit LoadError(const std::string& what) : Error("load_error", what) {}
};

struct SchemaError : Error {
    explicit SchemaError(const std::string& what) : Error("schema_error", what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error("shape_error", what) {}
};

struct RangeError : Error {
    explicit RangeError(const std::string& what) : Error("range_error", what) {}
};

// Raised when the embedding table does not match its snapshot after restore.
struct IntegrityError : Error {
    explicit IntegrityError(const std::string& what) : Error("integrity_error", what) {}
};

struct TrainingError : Error {
    explicit TrainingError(const std::string& what) : Error("training_error", what) {}
};

}  // namespace lingofuse
