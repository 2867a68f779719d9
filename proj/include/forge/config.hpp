#pragma once

#include "forge/trainer.hpp"

#include <filesystem>
#include <limits>
#include <string>

namespace forge {

/// Assets referenced by a run. Paths are relative to the config file.
struct AssetConfig {
    std::string rig = "procedural";  // or a rig JSON path
    std::uint64_t rigSeed = 7;
    int textureWidth = 64;
    int textureHeight = 64;
    std::string initialParams;  // empty: zero params, grey texture

    std::string motion = "walk_cycle";  // synthetic kind or a motion file path
    int motionLength = 32;
    double motionAmplitude = std::numeric_limits<double>::quiet_NaN();

    std::string prior = "ground_truth";      // ground_truth | registry
    std::string groundTruth = "procedural";  // or a params JSON path
    std::uint64_t groundTruthSeed = 11;
    std::string registry;  // target directory for prior = registry
};

struct RunConfig {
    TrainingConfig training;
    AssetConfig assets;
    std::filesystem::path baseDir;  // directory of the config file

    std::filesystem::path resolve(const std::string& path) const;
    void validate() const;
};

// Sectioned key = value text; '#' starts a comment; unknown sections or keys
// are errors. See README for the full key list.
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_string(const RunConfig& config);

/// The desk-scale end-to-end run: 300 steps, walk cycle of 32 frames, oracle
/// priors rendered from the reference avatar.
RunConfig desk_run_config();

}  // namespace forge
