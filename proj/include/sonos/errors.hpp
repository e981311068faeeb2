#ifndef SONOS_ERRORS_HPP
#define SONOS_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sonos {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Vector/matrix extents do not agree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A value cannot be represented by a weight encoding or converter.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class InsufficientDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DegenerateDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the byte offset where parsing stopped, if known.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what, std::size_t offset = npos)
        : std::runtime_error(what), offset_(offset) {}

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Closed-loop write gave up before reaching its target.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double final_g, int pulses_used)
        : std::runtime_error(what), final_g_(final_g), pulses_used_(pulses_used) {}

    double final_g() const noexcept { return final_g_; }
    int pulses_used() const noexcept { return pulses_used_; }

private:
    double final_g_;
    int pulses_used_;
};

/// Invalid experiment or parameter configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require_dims(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) +
                             ", got " + std::to_string(got));
    }
}

}  // namespace sonos

#endif  // SONOS_ERRORS_HPP
