#pragma once

#include "forge/body_model.hpp"

#include <cstdint>

namespace forge {

struct HumanoidOptions {
    std::uint64_t seed = 7;
    int numShape = 10;       // at most 10 hand-designed modes
    int numExpression = 10;  // first 5 designed, remainder seeded random bumps
    double gridSpacing = 0.03;  // surface resolution; hands and feet need <= 0.03
};

/// Watertight humanoid (smooth union of limb tubes, polygonized on a 3 cm
/// grid) with an SMPL-style 24-joint tree, in a T-pose.
/// Pelvis at the origin, +y up, +z forward, +x is the avatar's left.
TemplateRig make_humanoid(const HumanoidOptions& options = {});

/// Arms lowered to about 40 degrees; clear of the torso on the default humanoid.
Pose a_pose(const TemplateRig& rig);

/// Displacement that scales the torso cross-section radially by `factor`
/// about the vertical torso axis. Used to build wide-bodied targets.
Points torso_widening(const TemplateRig& rig, double factor);

/// Indices of joints treated as torso (pelvis..spine3) and head (neck, head).
std::vector<int> torso_joints(const TemplateRig& rig);
std::vector<int> head_joints(const TemplateRig& rig);

/// Colourful smooth texture over the UV atlas with zero shape/expression/
/// displacement: the ground-truth avatar for oracle-driven runs.
AvatarParams reference_avatar(const TemplateRig& rig, int textureWidth = 64, int textureHeight = 64,
                              std::uint64_t seed = 11);

}  // namespace forge
