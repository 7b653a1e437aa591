#pragma once

#include "gsgen/train/trainer.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsgen {

/// Invalid project configuration; what() reads "<file>:<line>:<column>: <message>".
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& file, int line, int column, const std::string& message);
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

struct ViewSpec {
    std::filesystem::path image;
    std::optional<std::filesystem::path> mask;
    double azimuth = 0.0;
    double elevation = 0.0;
    double radius = kDefaultOrbitRadius;
    double fov = kDefaultFovDeg;
};

struct EndpointSpec {
    std::string url;
    int deadline_ms = 10000;
};

enum class GuidanceMode { Local, Remote };
enum class DepthMode { None, Files, Remote };

struct ProjectConfig {
    TrainConfig train;
    std::uint64_t seed = 0;
    std::size_t initial_primitives = 100;
    std::filesystem::path output = "out";

    GuidanceMode guidance_mode = GuidanceMode::Local;
    EndpointSpec guidance_endpoint;
    std::vector<ViewSpec> references;

    DepthMode depth_mode = DepthMode::None;
    EndpointSpec depth_endpoint;
    std::vector<ViewSpec> depth_maps; ///< `image` is a depth PNG with sidecar

    bool use_features = true;
    std::optional<ViewSpec> holdout;
    int turntable_resolution = 128;

    /// Directory relative paths are resolved against.
    std::filesystem::path base_dir = ".";

    std::filesystem::path resolve(const std::filesystem::path& p) const;
    /// Throws ConfigError (line 0) for cross-field problems.
    void validate() const;
};

/// Parses YAML text. Unknown keys, wrong types and bad values raise
/// ConfigError pointing at the offending node.
ProjectConfig parse_project_config(const std::string& yaml, const std::string& file_name = "<config>",
                                   const std::filesystem::path& base_dir = ".");
ProjectConfig load_project_config(const std::filesystem::path& path);

/// Every field, defaults included, as YAML that parse_project_config accepts.
std::string emit_project_config(const ProjectConfig& config);

} // namespace gsgen
