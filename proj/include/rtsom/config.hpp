#pragma once

// JSON run configuration shared by all CLI commands.

#include "rtsom/experiments.hpp"
#include "rtsom/recon.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace rtsom {

/// Configuration or schema problem, with the 1-based line it refers to (0 if
/// unknown). what() reads "<file>:<line>: <message>".
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& message, std::size_t line, const std::string& file = "<config>")
        : std::runtime_error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + message),
          message_(message),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string message_;
    std::size_t line_;
};

struct RunConfig {
    ExperimentSpec experiment;
    ReconConfig recon;
    std::string cache_path;   // empty: <output>/cache/<name>.trsc
    std::string output_dir = "output";
    std::string init_from;    // name of an earlier run whose results seed this one
    std::string source_text;  // raw document, hashed into manifests
};

/// Parses and validates a configuration document. Unknown keys, missing
/// required sections and out-of-range values raise ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

}  // namespace rtsom
