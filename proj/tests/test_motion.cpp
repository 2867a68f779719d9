#include "checks.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include "forge/io.hpp"
#include "forge/motion.hpp"
#include "forge/rig_builder.hpp"

#include <doctest.h>

#include <string>

using namespace forge;
using forge::test::humanoid;

namespace {

std::string zero_motion_text(int joints, int frames) {
    std::string s = "avatar-forge-motion 1\njointCount " + std::to_string(joints) + "\nframeRate 30\nlength " +
                    std::to_string(frames) + "\nlabel still\n";
    for (int f = 0; f < frames; ++f) {
        s += "frame " + std::to_string(f) + " root 0 0 0 rot";
        for (int i = 0; i < 3 * joints; ++i) s += " 0";
        s += "\n";
    }
    return s;
}

std::vector<double> column(const MotionClip& clip, int joint, int axis) {
    std::vector<double> out;
    for (const Pose& p : clip.frames) out.push_back(p.jointRotations(joint, axis));
    return out;
}

}  // namespace

TEST_SUITE("motion") {

TEST_CASE("a single all-zero frame parses to the identity pose") {
    const MotionClip clip = motion_from_string(zero_motion_text(24, 1), "m", 24);
    REQUIRE(clip.length() == 1);
    CHECK(clip.frames[0] == Pose::identity(24));
    CHECK(clip.label == "still");
    CHECK(clip.frameRate == 30.0);
}

TEST_CASE("joint count mismatch is its own error") {
    CHECK_THROWS_AS(motion_from_string(zero_motion_text(22, 2), "m", 24), JointCountMismatch);
    CHECK_NOTHROW(motion_from_string(zero_motion_text(22, 2), "m", -1));
}

TEST_CASE("malformed motion reports the offending line") {
    std::string text = zero_motion_text(2, 3);
    const auto pos = text.find("frame 1 root 0");
    text.replace(pos, 14, "frame 1 root x");
    try {
        motion_from_string(text, "clip.txt");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 7);
        CHECK(std::string(e.what()).find("clip.txt:7") == 0);
    }
    CHECK_THROWS_AS(motion_from_string("avatar-forge-motion 2\n", "m"), ParseError);
    CHECK_THROWS_AS(motion_from_string(zero_motion_text(2, 3).substr(0, 80), "m"), ParseError);
}

TEST_CASE("motion text round-trips bit-exactly") {
    const MotionClip clip = synth_motion(humanoid(), MotionKind::WalkCycle, 20);
    const MotionClip back = motion_from_string(motion_to_string(clip), "m", 24);
    CHECK(back == clip);
}

TEST_CASE("arm raise over two frames") {
    const int ls = humanoid().jointIndex("left_shoulder");
    const MotionClip clip = synth_motion(humanoid(), MotionKind::ArmRaise, 2, {.amplitude = 0.8});
    CHECK(clip.frames[0] == Pose::identity(24));
    CHECK(clip.frames[1].jointRotations(ls, 2) == doctest::Approx(0.8));
    CHECK(clip.frames[1].jointRotations(humanoid().jointIndex("right_shoulder"), 2) == doctest::Approx(-0.8));
    CHECK_THROWS_AS(synth_motion(humanoid(), MotionKind::ArmRaise, 1), InvalidInput);
}

TEST_CASE("walk cycle legs swing in antiphase") {
    const TemplateRig& rig = humanoid();
    const MotionClip clip = synth_motion(rig, MotionKind::WalkCycle, 196);
    CHECK(clip.frames[0] == Pose::identity(24));
    const double r = oracle::correlation(column(clip, rig.jointIndex("left_hip"), 0),
                                         column(clip, rig.jointIndex("right_hip"), 0));
    CHECK(r <= -0.95);
    // Root moves forward monotonically.
    for (std::size_t i = 1; i < clip.length(); ++i)
        CHECK(clip.frames[i].rootTranslation.z() > clip.frames[i - 1].rootTranslation.z());
}

TEST_CASE("squat is smooth and returns near the start") {
    const MotionClip clip = synth_motion(humanoid(), MotionKind::Squat, 40);
    double worst = 0.0;
    for (std::size_t i = 1; i < clip.length(); ++i)
        worst = std::max(worst, (clip.frames[i].jointRotations - clip.frames[i - 1].jointRotations).cwiseAbs().maxCoeff());
    CHECK(worst < 0.12);
    CHECK(clip.frames.back().jointRotations.cwiseAbs().maxCoeff() < 0.01);
    CHECK(parse_motion_kind("squat") == MotionKind::Squat);
    CHECK_THROWS_AS(parse_motion_kind("cartwheel"), InvalidInput);
}

TEST_CASE("capsule distance") {
    CHECK(point_segment_distance({0, 1, 0}, {-1, 0, 0}, {1, 0, 0}) == doctest::Approx(1.0));
    CHECK(point_segment_distance({3, 0, 4}, {0, 0, 0}, {0, 0, 0}) == doctest::Approx(5.0));
    CHECK(point_segment_distance({2, 0, 0}, {-1, 0, 0}, {1, 0, 0}) == doctest::Approx(1.0));
    Capsule c{{0, 0, 0}, {0, 1, 0}, 0.5, 0};
    CHECK(inside_capsule({0.2, 0.5, 0.2}, c));
    CHECK_FALSE(inside_capsule({0.5, 0.5, 0.0}, c));  // boundary is outside
}

TEST_CASE("penetration counts") {
    const TemplateRig& rig = humanoid();
    const AvatarParams p = AvatarParams::zeros(rig);
    SUBCASE("A-pose is clear") {
        const PosedMesh m = pose_avatar(rig, p, a_pose(rig));
        CHECK(penetration_count(m, fit_proxies(rig, m)) == 0);
    }
    SUBCASE("forearms folded into the torso") {
        const auto fx = validation::widened_torso_fixture();
        const PosedMesh canonical = pose_avatar(*fx.rig, fx.target, Pose::identity(24));
        int worst = 0;
        for (const Pose& pose : fx.clip.frames) {
            const PosedMesh m = skin(*fx.rig, canonical.vertices, canonical.joints, pose);
            const PenetrationProxies px = fit_proxies(*fx.rig, m);
            const int n = penetration_count(m, px);
            std::vector<int> limbs = px.leftLimb;
            limbs.insert(limbs.end(), px.rightLimb.begin(), px.rightLimb.end());
            CHECK(n == oracle::penetration_count(m.vertices, limbs, px.capsules));
            worst = std::max(worst, n);
        }
        CHECK(worst > 0);
    }
}

TEST_CASE("retarget onto the source avatar changes nothing") {
    const TemplateRig& rig = humanoid();
    const MotionClip clip = synth_motion(rig, MotionKind::WalkCycle, 12);
    const PosedMesh canonical = pose_avatar(rig, AvatarParams::zeros(rig), Pose::identity(24));
    const RetargetResult r = retarget(clip, rig, canonical, canonical.joints);
    CHECK(r.legRatio == 1.0);
    CHECK(r.clip == clip);
    for (const Pose& res : r.residual) CHECK(res == Pose::identity(24));
    CHECK(r.converged());
}

TEST_CASE("root translation scales with leg length") {
    const TemplateRig& rig = humanoid();
    const PosedMesh canonical = pose_avatar(rig, AvatarParams::zeros(rig), Pose::identity(24));
    Pose moved = Pose::identity(24);
    moved.rootTranslation = Vec3(0.1, -0.05, 0.3);
    const MotionClip clip = hold_pose(moved, 3);
    const RetargetResult r = retarget(clip, rig, canonical, 2.0 * canonical.joints);
    CHECK(r.legRatio == doctest::Approx(2.0));
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK((r.clip.frames[i].rootTranslation - 2.0 * moved.rootTranslation).norm() < 1e-12);
        CHECK(r.clip.frames[i] == add_poses(clip.frames[i], r.residual[i]));
    }
}

TEST_CASE("retarget resolves the widened-torso fixture") {
    const auto fx = validation::widened_torso_fixture();
    const PosedMesh canonical = pose_avatar(*fx.rig, fx.target, Pose::identity(24));
    const RetargetResult r = retarget(fx.clip, *fx.rig, canonical, canonical.joints);
    int before = 0, after = 0;
    for (std::size_t i = 0; i < r.clip.length(); ++i) {
        before += r.penetrationsBefore[i];
        after += r.penetrationsAfter[i];
        CHECK(r.clip.frames[i] == add_poses(fx.clip.frames[i], r.residual[i]));
        CHECK(r.residual[i] == add_poses(r.skeletonResidual[i], r.geometryResidual[i]));
    }
    CHECK(before > 0);
    CHECK(after == 0);
    CHECK(r.converged());
}

TEST_CASE("retarget input errors") {
    const TemplateRig& rig = humanoid();
    const PosedMesh canonical = pose_avatar(rig, AvatarParams::zeros(rig), Pose::identity(24));
    const MotionClip wrong = hold_pose(Pose::identity(22), 2);
    CHECK_THROWS_AS(retarget(wrong, rig, canonical, canonical.joints), JointCountMismatch);
    const MotionClip ok = hold_pose(Pose::identity(24), 2);
    CHECK_THROWS_AS(retarget(ok, rig, canonical, canonical.joints.topRows(20)), JointCountMismatch);
    CHECK_THROWS_AS(retarget(ok, rig, canonical, canonical.joints, {.increment = 0.0}), InvalidInput);
}

}
