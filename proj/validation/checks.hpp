#pragma once

#include "forge/regularize.hpp"
#include "forge/motion.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace forge::validation {

struct CheckResult {
    std::string name;
    int criterion = 0;  // acceptance criterion the row feeds, 0 for supporting invariants
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct ValidationOptions {
    // Hook for mutation testing: the shape regularizer whose gradient is checked.
    std::function<ShapeLoss(const Vector&)> shapeReg = shape_reg;
    std::filesystem::path scratchDir;  // empty: a fresh directory under the system temp dir
    bool includeDeskRun = true;
    std::vector<int> criteria;  // empty: everything
    std::function<void(const CheckResult&)> onResult;
};

/// Shape regularizer with the gradient sign flipped.
ValidationOptions with_shape_grad_sign_error(ValidationOptions options = {});

std::vector<CheckResult> run_validation(const ValidationOptions& options = {});

std::string format_row(const CheckResult& r);

/// Wide-torso target with an arms-down clip that drives the forearms into
/// the torso: the standard retargeting fixture.
struct RetargetFixture {
    std::shared_ptr<const TemplateRig> rig;
    AvatarParams target;
    MotionClip clip;
};
RetargetFixture widened_torso_fixture();

}  // namespace forge::validation
