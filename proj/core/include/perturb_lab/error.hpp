#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace perturb_lab {

/// Malformed input file. Carries the 1-based line number where parsing failed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Invalid configuration value. Carries the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what)
        : std::runtime_error("config key '" + key + "': " + what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t epoch, std::size_t step)
        : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step)),
          epoch_(epoch), step_(step) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t epoch_;
    std::size_t step_;
};

}  // namespace perturb_lab
