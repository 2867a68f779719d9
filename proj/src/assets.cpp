#include "forge/assets.hpp"

#include "forge/io.hpp"
#include "forge/rig_builder.hpp"

namespace forge {

bool is_motion_kind(const std::string& name) {
    return name == "arm_raise" || name == "walk_cycle" || name == "squat";
}

namespace {

std::filesystem::path existing(const RunConfig& config, const std::string& path, const char* what) {
    const auto p = config.resolve(path);
    if (!std::filesystem::exists(p)) throw FileError(std::string(what) + " file not found: " + p.string());
    return p;
}

}  // namespace

RunAssets load_run_assets(const RunConfig& config) {
    config.validate();
    const AssetConfig& a = config.assets;
    RunAssets out;

    if (a.rig == "procedural") {
        HumanoidOptions opts;
        opts.seed = a.rigSeed;
        out.rig = std::make_shared<const TemplateRig>(make_humanoid(opts));
    } else {
        out.rig = std::make_shared<const TemplateRig>(load_rig(existing(config, a.rig, "rig")));
    }
    const TemplateRig& rig = *out.rig;

    if (a.initialParams.empty()) {
        out.initial = AvatarParams::zeros(rig, a.textureWidth, a.textureHeight);
    } else {
        out.initial = load_params(existing(config, a.initialParams, "params"));
        out.initial.checkCompatible(rig);
    }

    if (is_motion_kind(a.motion)) {
        SynthOptions opts;
        opts.amplitude = a.motionAmplitude;
        out.source = synth_motion(rig, parse_motion_kind(a.motion), a.motionLength, opts);
    } else {
        out.source = load_motion(existing(config, a.motion, "motion"), rig.numJoints());
    }

    const DiffusionSchedule schedule = config.training.schedule();
    if (a.prior == "ground_truth") {
        AvatarParams truth = a.groundTruth == "procedural"
                                 ? reference_avatar(rig, a.textureWidth, a.textureHeight, a.groundTruthSeed)
                                 : load_params(existing(config, a.groundTruth, "ground-truth params"));
        truth.checkCompatible(rig);
        out.priors = ground_truth_priors(out.rig, truth, schedule);
        out.truth = std::move(truth);
    } else {
        const auto dir = existing(config, a.registry, "registry");
        const TargetRegistry registry = TargetRegistry::load(dir);
        if (!registry.contains(config.training.promptId))
            throw InvalidInput("registry " + dir.string() + " has no target for prompt '" + config.training.promptId + "'");
        auto prior = std::make_shared<OraclePrior>(schedule, registry.provider());
        out.priors = {prior, prior};
    }
    return out;
}

}  // namespace forge
