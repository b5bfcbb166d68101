#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace m2t {

using Index = std::int64_t;
using Shape = std::vector<Index>;

/// Per-axis triple in (depth, height, width) order.
using Vec3 = std::array<Index, 3>;

Index numel(const Shape& shape);
std::string shape_str(const Shape& shape);
std::string vec3_str(const Vec3& v);

/// Malformed configuration, bad flags, violated preconditions on user input.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Unreadable or inconsistent data files (volumes, checkpoints, masks).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values produced during a forward or backward pass.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape or contract violation inside the tensor engine.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

} // namespace m2t
