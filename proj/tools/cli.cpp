#include "cli.hpp"

#include "checks.hpp"

#include "forge/assets.hpp"
#include "forge/config.hpp"
#include "forge/io.hpp"
#include "forge/parallel.hpp"
#include "forge/rig_builder.hpp"
#include "forge/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

namespace forge::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string config;
    bool dryRun = false;
};

std::string frame_name(const std::string& stem, std::size_t i, const std::string& ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%04zu", i);
    return stem + buf + ext;
}

RunConfig load_config(const Globals& g) {
    RunConfig c = g.config.empty() ? desk_run_config() : load_run_config(g.config);
    if (g.seed) c.training.seed = *g.seed;
    c.validate();
    return c;
}

std::shared_ptr<const TemplateRig> load_rig_arg(const std::string& rigPath, const Globals& g) {
    if (!rigPath.empty() && rigPath != "procedural") return std::make_shared<const TemplateRig>(load_rig(rigPath));
    const RunConfig c = g.config.empty() ? RunConfig() : load_run_config(g.config);
    if (c.assets.rig != "procedural") return std::make_shared<const TemplateRig>(load_rig(c.resolve(c.assets.rig)));
    HumanoidOptions opts;
    opts.seed = c.assets.rigSeed;
    return std::make_shared<const TemplateRig>(make_humanoid(opts));
}

// "mode:azimuthDeg:elevationDeg[:size]"
struct CameraSpec {
    CameraMode mode = CameraMode::FullBody;
    double azimuth = 0.0;
    double elevation = 10.0 * std::numbers::pi / 180.0;
    int size = 256;
};

CameraSpec parse_camera_spec(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    auto bad = [&](const std::string& why) { return InvalidInput("bad camera spec '" + text + "': " + why); };
    if (parts.size() < 3 || parts.size() > 4) throw bad("expected mode:azimuthDeg:elevationDeg[:size]");
    CameraSpec c;
    if (parts[0] == "full_body") c.mode = CameraMode::FullBody;
    else if (parts[0] == "head") c.mode = CameraMode::Head;
    else throw bad("mode must be full_body or head");
    double az, el;
    if (!parse_double(parts[1], az) || !parse_double(parts[2], el) || !std::isfinite(az) || !std::isfinite(el))
        throw bad("angles must be numbers");
    if (std::abs(el) >= 90.0) throw bad("elevation must be inside (-90, 90)");
    c.azimuth = az * std::numbers::pi / 180.0;
    c.elevation = el * std::numbers::pi / 180.0;
    if (parts.size() == 4) {
        const auto [p, ec] = std::from_chars(parts[3].data(), parts[3].data() + parts[3].size(), c.size);
        if (ec != std::errc() || p != parts[3].data() + parts[3].size() || c.size < 1 || c.size > 8192)
            throw bad("size must be an integer in [1, 8192]");
    }
    return c;
}

// "all", "3", "0,4,8", "2-5"
std::vector<std::size_t> parse_frames(const std::string& text, std::size_t length) {
    std::vector<std::size_t> out;
    if (text == "all") {
        for (std::size_t i = 0; i < length; ++i) out.push_back(i);
        return out;
    }
    auto number = [&](const std::string& s) {
        std::size_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) throw InvalidInput("bad frame index '" + s + "'");
        if (v >= length)
            throw InvalidInput("frame " + s + " out of range: motion has " + std::to_string(length) + " frames");
        return v;
    };
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        const auto dash = item.find('-');
        if (dash == std::string::npos) {
            out.push_back(number(item));
        } else {
            const std::size_t a = number(item.substr(0, dash)), b = number(item.substr(dash + 1));
            if (b < a) throw InvalidInput("bad frame range '" + item + "'");
            for (std::size_t i = a; i <= b; ++i) out.push_back(i);
        }
    }
    if (out.empty()) throw InvalidInput("no frames selected");
    return out;
}

Camera preview_camera(const TemplateRig& rig, const PosedMesh& mesh, const CameraSpec& spec) {
    CameraSettings cs;
    cs.width = cs.height = spec.size;
    return orbit_camera(spec.mode, spec.azimuth, spec.elevation, framing_from_mesh(rig, mesh), cs);
}

std::vector<int> skeleton_k(const TemplateRig& rig, const TrainingConfig& t) {
    std::vector<int> k(rig.numJoints(), t.kBody);
    const int head = rig.jointIndex("head");
    if (head >= 0) k[head] = t.kFace;
    return k;
}

// ------------------------------------------------------------------ generate

struct GenerateArgs {
    std::string resume;
    std::string previewCamera = "full_body:0:10:256";
};

int cmd_generate(const Globals& g, const GenerateArgs& a, std::ostream& out) {
    const RunConfig config = load_config(g);
    const RunAssets assets = load_run_assets(config);
    const TemplateRig& rig = *assets.rig;
    const CameraSpec spec = parse_camera_spec(a.previewCamera);
    if (g.dryRun) {
        out << "config ok: " << config.training.totalSteps << " steps, motion '" << assets.source.label << "' ("
            << assets.source.length() << " frames), rig " << rig.numVertices() << " vertices / " << rig.numJoints()
            << " joints, prior " << config.assets.prior << "\n";
        return kOk;
    }
    if (g.out.empty()) throw InvalidInput("--out is required");
    const fs::path dir(g.out);
    fs::create_directories(dir);
    const fs::path ckpt = dir / "checkpoint.bin";

    std::optional<Trainer> trainer;
    if (a.resume.empty()) trainer.emplace(config.training, rig, assets.initial, assets.source, assets.priors);
    else trainer.emplace(config.training, rig, load_checkpoint(a.resume), assets.priors);
    try {
        trainer->run(ckpt);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string(e.what()) + " (resumable checkpoint at " + ckpt.string() + ")");
    }
    const TrainState& s = trainer->state();
    save_checkpoint(s, ckpt);

    save_params(s.params, dir / "params.json");
    save_motion(s.motion, dir / "motion.txt");
    write_file(dir / "config.ini", run_config_to_string(config));
    std::string log;
    for (const LogRecord& r : s.log) log += log_record_json(r) + "\n";
    write_file(dir / "log.jsonl", log);

    const std::size_t L = s.motion.length();
    std::vector<std::string> meshes(L), previews(L), skeletons(L);
    fs::create_directories(dir / "frames");
    fs::create_directories(dir / "preview");
    fs::create_directories(dir / "skeleton");
    const std::vector<int> k = skeleton_k(rig, config.training);
    // Frame size comes from the canonical avatar so the preview scale does not jitter.
    const CameraFraming canonical = framing_from_mesh(rig, pose_avatar(rig, s.params, Pose::identity(rig.numJoints())));
    parallel_for(L, [&](std::size_t i) {
        const PosedMesh m = pose_avatar(rig, s.params, s.motion.frames[i]);
        CameraFraming f = framing_from_mesh(rig, m);
        f.bodyHeight = canonical.bodyHeight;
        f.headSize = canonical.headSize;
        CameraSettings cs;
        cs.width = cs.height = spec.size;
        const Camera cam = orbit_camera(spec.mode, spec.azimuth, spec.elevation, f, cs);
        const RenderBuffers buf = rasterize(m, s.params, rig, cam);
        meshes[i] = "frames/" + frame_name("frame", i, ".obj");
        previews[i] = "preview/" + frame_name("frame", i, ".png");
        skeletons[i] = "skeleton/" + frame_name("frame", i, ".png");
        save_obj(m.vertices, rig, dir / meshes[i]);
        save_image(buf.color, dir / previews[i]);
        save_image(occluded_skeleton(m.joints, m, cam, buf, k, rig.parents).boneImage, dir / skeletons[i]);
    });

    ordered_json manifest;
    manifest["format"] = "avatar-forge-output";
    manifest["version"] = 1;
    manifest["seed"] = config.training.seed;
    manifest["steps"] = s.step;
    manifest["motion"] = {{"label", s.motion.label}, {"frames", L}, {"frameRate", s.motion.frameRate}};
    manifest["warnings"] = s.warnings;
    if (assets.truth)
        manifest["finalRenderMse"] =
            evaluate_render_mse(rig, s.params, *assets.truth, s.motion, config.training.camera);
    manifest["files"] = {{"params", "params.json"}, {"motion", "motion.txt"},  {"log", "log.jsonl"},
                         {"config", "config.ini"},  {"checkpoint", "checkpoint.bin"},
                         {"meshes", meshes},        {"previews", previews},   {"skeletons", skeletons}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    out << "trained " << s.step << " steps; wrote " << L << " frames to " << dir.string() << "\n";
    if (manifest.contains("finalRenderMse")) out << "final render MSE " << manifest["finalRenderMse"].get<double>() << "\n";
    return kOk;
}

// ------------------------------------------------------------------ retarget

struct RetargetArgs {
    std::string motion;
    std::string rig;
    std::string target;
};

int cmd_retarget(const Globals& g, const RetargetArgs& a, std::ostream& out) {
    const auto rig = load_rig_arg(a.rig, g);
    const MotionClip source = load_motion(a.motion, rig->numJoints());
    const AvatarParams target = load_params(a.target);
    target.checkCompatible(*rig);
    if (g.dryRun) {
        out << "inputs ok: " << source.length() << " frames, " << rig->numJoints() << " joints\n";
        return kOk;
    }
    if (g.out.empty()) throw InvalidInput("--out is required");
    const PosedMesh canonical = pose_avatar(*rig, target, Pose::identity(rig->numJoints()));
    const RetargetResult r = retarget(source, *rig, canonical, canonical.joints);

    const fs::path dir(g.out);
    save_motion(r.clip, dir / "motion.txt");
    ordered_json report;
    report["legRatio"] = r.legRatio;
    report["converged"] = r.converged();
    report["unresolvedFrames"] = r.unresolvedFrames;
    ordered_json frames = ordered_json::array();
    int before = 0, after = 0;
    for (std::size_t i = 0; i < r.clip.length(); ++i) {
        frames.push_back({{"frame", i},
                          {"maxJointDelta", r.residual[i].jointRotations.cwiseAbs().maxCoeff()},
                          {"rootDelta", r.residual[i].rootTranslation.norm()},
                          {"penetrationsBefore", r.penetrationsBefore[i]},
                          {"penetrationsAfter", r.penetrationsAfter[i]}});
        before += r.penetrationsBefore[i];
        after += r.penetrationsAfter[i];
    }
    report["penetrationsBefore"] = before;
    report["penetrationsAfter"] = after;
    report["frames"] = frames;
    write_file(dir / "report.json", report.dump(2) + "\n");
    out << "retargeted " << r.clip.length() << " frames; penetrations " << before << " -> " << after << "\n";
    if (!r.converged()) out << "warning: " << r.unresolvedFrames.size() << " frame(s) still penetrate after the caps\n";
    return kOk;
}

// -------------------------------------------------------------------- render

struct RenderArgs {
    std::string params;
    std::string motion;
    std::string rig;
    std::string camera = "full_body:0:10:256";
    std::string frames = "0";
    std::string format = "png";
    bool skeleton = false;
};

int cmd_render(const Globals& g, const RenderArgs& a, std::ostream& out) {
    const auto rig = load_rig_arg(a.rig, g);
    const AvatarParams params = load_params(a.params);
    params.checkCompatible(*rig);
    const MotionClip clip = a.motion.empty() ? hold_pose(Pose::identity(rig->numJoints()), 1, 30.0, "canonical")
                                             : load_motion(a.motion, rig->numJoints());
    const CameraSpec spec = parse_camera_spec(a.camera);
    const std::vector<std::size_t> frames = parse_frames(a.frames, clip.length());
    if (a.format != "png" && a.format != "ppm") throw InvalidInput("format must be png or ppm");
    if (g.dryRun) {
        out << "inputs ok: " << frames.size() << " frame(s) selected\n";
        return kOk;
    }
    if (g.out.empty()) throw InvalidInput("--out is required");
    const fs::path dir(g.out);
    fs::create_directories(dir);
    const TrainingConfig defaults;
    const std::vector<int> k = skeleton_k(*rig, defaults);
    parallel_for(frames.size(), [&](std::size_t n) {
        const std::size_t i = frames[n];
        const PosedMesh m = pose_avatar(*rig, params, clip.frames[i]);
        const Camera cam = preview_camera(*rig, m, spec);
        const RenderBuffers buf = rasterize(m, params, *rig, cam);
        save_image(buf.color, dir / frame_name("frame", i, "." + a.format));
        if (a.skeleton)
            save_image(occluded_skeleton(m.joints, m, cam, buf, k, rig->parents).boneImage,
                       dir / frame_name("skeleton", i, "." + a.format));
    });
    out << "rendered " << frames.size() << " frame(s) to " << dir.string() << "\n";
    return kOk;
}

// ------------------------------------------------------------------ validate

struct ValidateArgs {
    std::string mutate;
    bool skipDesk = false;
    std::vector<int> criteria;
};

int cmd_validate(const Globals& g, const ValidateArgs& a, std::ostream& out) {
    validation::ValidationOptions opts;
    if (a.mutate == "shape-grad-sign") opts = validation::with_shape_grad_sign_error();
    else if (!a.mutate.empty()) throw InvalidInput("unknown mutation '" + a.mutate + "' (known: shape-grad-sign)");
    opts.includeDeskRun = !a.skipDesk;
    for (int c : a.criteria)
        if (c < 0 || c > 9) throw InvalidInput("criterion must be in [0, 9], got " + std::to_string(c));
    opts.criteria = a.criteria;
    if (!g.out.empty()) opts.scratchDir = g.out;
    if (g.dryRun) {
        out << "validation suite ready\n";
        return kOk;
    }
    opts.onResult = [&](const validation::CheckResult& r) { out << validation::format_row(r) << std::endl; };
    const auto results = validation::run_validation(opts);
    std::size_t failed = 0;
    for (const auto& r : results) failed += r.passed ? 0 : 1;
    out << results.size() - failed << "/" << results.size() << " checks passed\n";
    return failed ? kFailure : kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"avatar_forge: text-to-4D avatar optimization with analytic priors", "avatar_forge"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Override the run seed");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--config", g.config, "Run config file (INI); defaults to the built-in desk config");
    app.add_flag("--dry-run", g.dryRun, "Validate inputs without computing");

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Train an avatar and export params, meshes, renders and the log");
    gen->add_option("--resume", ga.resume, "Continue from a checkpoint");
    gen->add_option("--preview-camera", ga.previewCamera, "Preview camera spec mode:azimuthDeg:elevationDeg[:size]");

    RetargetArgs ra;
    auto* ret = app.add_subcommand("retarget", "Retarget a motion onto a target avatar");
    ret->add_option("--motion", ra.motion, "Source motion file")->required();
    ret->add_option("--target", ra.target, "Target avatar params (JSON)")->required();
    ret->add_option("--rig", ra.rig, "Rig file (default: procedural humanoid)");

    RenderArgs rn;
    auto* ren = app.add_subcommand("render", "Render frames of an avatar");
    ren->add_option("--params", rn.params, "Avatar params (JSON)")->required();
    ren->add_option("--motion", rn.motion, "Motion file (default: canonical pose)");
    ren->add_option("--rig", rn.rig, "Rig file (default: procedural humanoid)");
    ren->add_option("--camera", rn.camera, "Camera spec mode:azimuthDeg:elevationDeg[:size]");
    ren->add_option("--frames", rn.frames, "Frames: all, N, N,M,... or N-M");
    ren->add_option("--format", rn.format, "png or ppm");
    ren->add_flag("--skeleton", rn.skeleton, "Also write the occlusion-aware skeleton image");

    ValidateArgs va;
    auto* val = app.add_subcommand("validate", "Run the invariant and oracle suite");
    val->add_option("--mutate", va.mutate, "Inject a known defect (shape-grad-sign)");
    val->add_flag("--skip-desk", va.skipDesk, "Skip the end-to-end desk runs");
    val->add_option("--criteria", va.criteria, "Only rows feeding these acceptance criteria (0 = supporting checks)")
        ->delimiter(',');

    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kBadInput;
    }

    try {
        if (*gen) return cmd_generate(g, ga, out);
        if (*ret) return cmd_retarget(g, ra, out);
        if (*ren) return cmd_render(g, rn, out);
        return cmd_validate(g, va, out);
    } catch (const JointCountMismatch& e) {
        err << "error: " << e.what() << "\n";
        return kJointMismatch;
    } catch (const InvalidInput& e) {
        err << "error: " << e.what() << "\n";
        return kBadInput;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kBadInput;
    } catch (const FileError& e) {
        err << "error: " << e.what() << "\n";
        return kBadInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
}

}  // namespace forge::cli
