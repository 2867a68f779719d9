#pragma once

#include "forge/body_model.hpp"

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace forge {

struct MotionClip {
    std::vector<Pose> frames;
    double frameRate = 30.0;
    std::string label;

    std::size_t length() const { return frames.size(); }
    int numJoints() const { return frames.empty() ? 0 : frames.front().numJoints(); }
    // Throws InvalidInput unless non-empty, finite, and uniformly K-jointed.
    void validate() const;
    bool operator==(const MotionClip& o) const {
        return frames == o.frames && frameRate == o.frameRate && label == o.label;
    }
};

// Motion file (text, one record per line, fields in this order):
//   avatar-forge-motion 1
//   jointCount <K>
//   frameRate <hz>
//   length <frames>
//   label <free text to end of line>
//   frame <i> root <x y z> rot <3K values, radians>      (one line per frame)
std::string motion_to_string(const MotionClip& clip);
/// `expectedJoints` < 0 skips the joint-count check; otherwise a mismatch
/// throws JointCountMismatch.
MotionClip motion_from_string(const std::string& text, const std::string& source = "<motion>", int expectedJoints = -1);
void save_motion(const MotionClip& clip, const std::filesystem::path& path);
MotionClip load_motion(const std::filesystem::path& path, int expectedJoints = -1);

enum class MotionKind { ArmRaise, WalkCycle, Squat };

MotionKind parse_motion_kind(const std::string& name);
std::string motion_kind_name(MotionKind kind);

struct SynthOptions {
    // Primary joint amplitude in radians; NaN picks the kind's default
    // (arm_raise 1.0, walk_cycle 0.5, squat 0.6).
    double amplitude = std::numeric_limits<double>::quiet_NaN();
    double frameRate = 30.0;
    int walkPeriod = 32;  // frames per gait cycle
};

/// Procedural motion source; frame 0 is always the canonical pose.
MotionClip synth_motion(const TemplateRig& rig, MotionKind kind, int length, const SynthOptions& options = {});

/// Constant clip of `length` copies of `pose`.
MotionClip hold_pose(const Pose& pose, int length, double frameRate = 30.0, std::string label = "hold");

struct Capsule {
    Vec3 a = Vec3::Zero();
    Vec3 b = Vec3::Zero();
    double radius = 0.0;
    int joint = -1;
};

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);
/// Strict interior test.
inline bool inside_capsule(const Vec3& p, const Capsule& c) { return point_segment_distance(p, c.a, c.b) < c.radius; }

/// Torso/head capsules plus the forearm/hand vertex sets tested against them.
struct PenetrationProxies {
    std::vector<Capsule> capsules;
    std::vector<int> leftLimb;
    std::vector<int> rightLimb;
};

/// Capsules run from each torso/head joint to its chain child (the head
/// capsule extends through the head vertices); radius is the mean distance
/// of the joint's dominant vertices to the axis.
PenetrationProxies fit_proxies(const TemplateRig& rig, const PosedMesh& mesh);

/// Number of limb vertices strictly inside any capsule.
int penetration_count(const PosedMesh& mesh, const PenetrationProxies& proxies);
int penetration_count(const PosedMesh& mesh, const PenetrationProxies& proxies, const std::vector<int>& vertices);

struct RetargetOptions {
    double increment = 0.02;  // rad per opening step
    double cap = 0.5;         // max opening per joint, rad
};

struct RetargetResult {
    MotionClip clip;
    std::vector<Pose> residual;  // skeleton + geometry
    std::vector<Pose> skeletonResidual;
    std::vector<Pose> geometryResidual;
    std::vector<int> penetrationsBefore;
    std::vector<int> penetrationsAfter;
    std::vector<int> unresolvedFrames;  // warning: penetration left after the caps
    double legRatio = 1.0;

    bool converged() const { return unresolvedFrames.empty(); }
};

/// Additive retargeting of `source` onto a target avatar: root translation
/// scaled by the leg-length ratio, then per frame the arm abduction angles
/// (elbow before shoulder) are opened until no forearm/hand vertex sits
/// inside the torso/head proxies. `clip.frames[i] == source.frames[i] + residual[i]`.
RetargetResult retarget(const MotionClip& source, const TemplateRig& sourceRig, const PosedMesh& targetCanonicalMesh,
                        const Points& targetRestJoints, const RetargetOptions& options = {});

/// Sum of leg segment lengths (hip-knee-ankle), averaged over both sides.
double leg_length(const TemplateRig& rig, const Points& joints);

/// Component-wise pose arithmetic in axis-angle + translation coordinates.
Pose add_poses(const Pose& a, const Pose& b);
Pose subtract_poses(const Pose& a, const Pose& b);

}  // namespace forge
