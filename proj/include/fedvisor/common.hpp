#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedvisor {

// Error hierarchy. Everything user-facing derives from Error so the CLI can
// catch one type at the top level.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

class StoreError : public Error {
public:
    explicit StoreError(const std::string& what) : Error(what) {}
};

class TransportError : public Error {
public:
    explicit TransportError(const std::string& what) : Error(what) {}
};

// Annotation parse failure; carries the 1-based line number.
class AnnotationError : public Error {
public:
    AnnotationError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class IllegalTransition : public Error {
public:
    explicit IllegalTransition(const std::string& what) : Error(what) {}
};

class QuorumNotMet : public Error {
public:
    explicit QuorumNotMet(const std::string& what) : Error(what) {}
};

inline std::string to_hex(const std::uint8_t* data, std::size_t n) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0xf]);
    }
    return out;
}

inline std::string to_hex(const std::vector<std::uint8_t>& data) {
    return to_hex(data.data(), data.size());
}

inline double clamp01(double v) {
    if (v < 0.0) return 0.0;
    if (v > 1.0) return 1.0;
    return v;
}

}  // namespace fedvisor
