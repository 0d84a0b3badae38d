#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hunet {

// Dimension/shape violations (non-power-of-two sizes, mismatched operands).
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// Violated preconditions that are not shape-related (empty input, bad range).
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed on-disk data. Carries the byte offset and the field being parsed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::uint64_t offset, const std::string& field)
        : std::runtime_error(what + " (offset " + std::to_string(offset) + ", field '" + field + "')"),
          offset(offset), field(field) {}
    std::uint64_t offset;
    std::string field;
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// A loss or parameter went NaN/Inf. `component` names the first offender.
class NonFiniteError : public std::runtime_error {
public:
    explicit NonFiniteError(const std::string& component)
        : std::runtime_error("non-finite value in component '" + component + "'"),
          component(component) {}
    std::string component;
};

inline bool is_pow2(std::int64_t n) { return n >= 1 && (n & (n - 1)) == 0; }

inline int ilog2(std::int64_t n) {
    int k = 0;
    while ((std::int64_t{1} << k) < n) ++k;
    return k;
}

inline void require_pow2(std::int64_t n, const char* what) {
    if (!is_pow2(n))
        throw DimensionError(std::string(what) + " must be a power of two, got " + std::to_string(n));
}

} // namespace hunet
