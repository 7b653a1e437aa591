#pragma once

#include "gsgen/core/gaussian.hpp"
#include "gsgen/core/image.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gsgen {

/// Exit codes shared by every command.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,    ///< run failed after valid input
    kExitBadInput = 2,   ///< unreadable or invalid input
    kExitEmptyMesh = 3,  ///< nothing crosses the iso level
};

struct FitOptions {
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> guidance; ///< local | remote
    std::optional<std::string> endpoint;
};

/// Writes cloud.gsc, loss_log.csv, turntable.png and run_log.yaml into the
/// configured output directory, plus mesh/ when the texture stage ran.
int cli_fit(const FitOptions& options, std::ostream& out, std::ostream& err);

struct MeshOptions {
    std::filesystem::path cloud;
    std::filesystem::path output = "mesh";
    double iso = 0.2; ///< fraction of the peak density
    int grid = 64;
    int texture_size = 256;
    int bake_resolution = 128;
};

int cli_mesh(const MeshOptions& options, std::ostream& out, std::ostream& err);

int cli_metrics(const std::filesystem::path& a, const std::filesystem::path& b, std::ostream& out, std::ostream& err);

struct PromptOptions {
    std::string text;
    std::vector<std::string> conditions; ///< kind=path
    int rounds = 3;
    int candidates = 4;
    double early_stop = 9.5;
    std::uint64_t seed = 0;
    std::filesystem::path output = "prompt";
    std::optional<std::string> llm_endpoint;
    std::optional<std::string> t2i_endpoint;
    std::optional<std::string> evaluator_endpoint;
    int deadline_ms = 30000;
};

/// Writes transcript.json, every candidate image and best.png.
int cli_prompt(const PromptOptions& options, std::ostream& out, std::ostream& err);

struct FixtureOptions {
    std::filesystem::path output = "fixture";
    std::uint64_t seed = 1;
    int resolution = 64;
    int steps = 600;
    bool stage2 = false;
};

/// Renders a ground-truth scene into reference views, masks, depth maps and
/// a held-out view, and writes a config.yaml that fits it with local
/// providers.
int cli_fixture(const FixtureOptions& options, std::ostream& out, std::ostream& err);

/// Ground-truth scene of cli_fixture: 20 Gaussians inside a ball.
GaussianCloud fixture_scene(std::uint64_t seed);

/// 8 frames at elevation 0 side by side, azimuths -180, -135, ..., 135.
ImageBuffer turntable(const GaussianCloud& cloud, int resolution, const Vec3& background);

/// Parses argv and dispatches to the commands above.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace gsgen
