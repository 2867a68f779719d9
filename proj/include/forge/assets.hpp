#pragma once

#include "forge/config.hpp"

#include <memory>
#include <optional>

namespace forge {

/// Everything a training run needs, materialized from a RunConfig.
struct RunAssets {
    std::shared_ptr<const TemplateRig> rig;
    AvatarParams initial;
    MotionClip source;
    Priors priors;
    std::optional<AvatarParams> truth;  // set for prior = ground_truth
};

/// Throws FileError naming the path when a referenced file is missing.
RunAssets load_run_assets(const RunConfig& config);

bool is_motion_kind(const std::string& name);

}  // namespace forge
