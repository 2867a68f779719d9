#include "forge/motion.hpp"

#include "forge/io.hpp"
#include "forge/parallel.hpp"
#include "forge/rig_builder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace forge {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr const char* kMotionMagic = "avatar-forge-motion";
constexpr int kMotionVersion = 1;

std::vector<std::string> tokenize(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

// Splits a desired offset into (residual, result) with result == s + residual
// and result - s == residual, both exactly in floating point.
std::pair<double, double> exactOffset(double s, double offset) {
    if (offset == 0.0) return {0.0, s};  // keeps the sign of a -0 input
    double result = s + offset;
    double residual = result - s;
    for (int iter = 0; iter < 8; ++iter) {
        const double again = s + residual;
        if (again == result && again - s == residual) break;
        result = again;
        residual = result - s;
    }
    return {residual, result};
}

}  // namespace

void MotionClip::validate() const {
    if (frames.empty()) throw InvalidInput("motion clip has no frames");
    if (!(frameRate > 0.0) || !std::isfinite(frameRate)) throw InvalidInput("frame rate must be positive");
    const int K = numJoints();
    for (const Pose& p : frames) {
        if (p.numJoints() != K) throw InvalidInput("frames disagree on joint count");
        if (!p.jointRotations.allFinite() || !p.rootTranslation.allFinite()) throw InvalidInput("non-finite pose value");
    }
}

Pose add_poses(const Pose& a, const Pose& b) {
    Pose out;
    out.rootTranslation = a.rootTranslation + b.rootTranslation;
    out.jointRotations = a.jointRotations + b.jointRotations;
    return out;
}

Pose subtract_poses(const Pose& a, const Pose& b) {
    Pose out;
    out.rootTranslation = a.rootTranslation - b.rootTranslation;
    out.jointRotations = a.jointRotations - b.jointRotations;
    return out;
}

std::string motion_to_string(const MotionClip& clip) {
    clip.validate();
    std::string out;
    out += std::string(kMotionMagic) + " " + std::to_string(kMotionVersion) + "\n";
    out += "jointCount " + std::to_string(clip.numJoints()) + "\n";
    out += "frameRate " + format_double(clip.frameRate) + "\n";
    out += "length " + std::to_string(clip.length()) + "\n";
    out += "label" + (clip.label.empty() ? std::string() : " " + clip.label) + "\n";
    for (std::size_t i = 0; i < clip.frames.size(); ++i) {
        const Pose& p = clip.frames[i];
        out += "frame " + std::to_string(i) + " root";
        for (int c = 0; c < 3; ++c) out += " " + format_double(p.rootTranslation[c]);
        out += " rot";
        for (Eigen::Index j = 0; j < p.jointRotations.rows(); ++j)
            for (int c = 0; c < 3; ++c) out += " " + format_double(p.jointRotations(j, c));
        out += "\n";
    }
    return out;
}

MotionClip motion_from_string(const std::string& text, const std::string& source, int expectedJoints) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineNo = 0;
    auto next = [&](const char* what) {
        if (!std::getline(in, line)) throw ParseError(source, lineNo + 1, std::string("unexpected end of file, expected ") + what);
        ++lineNo;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return tokenize(line);
    };
    auto fail = [&](const std::string& what) -> ParseError { return ParseError(source, lineNo, what); };
    auto integer = [&](const std::string& tok, const char* field) {
        double v;
        if (!parse_double(tok, v) || v != std::floor(v) || v < 0 || v > 1e9) throw fail(std::string(field) + ": expected a non-negative integer, got '" + tok + "'");
        return static_cast<long>(v);
    };
    auto header = [&](const char* key) {
        auto t = next(key);
        if (t.size() != 2 || t[0] != key) throw fail(std::string("expected '") + key + " <value>'");
        return t[1];
    };

    auto magic = next("header");
    if (magic.size() != 2 || magic[0] != kMotionMagic) throw fail("not an avatar-forge motion file");
    if (magic[1] != std::to_string(kMotionVersion)) throw fail("unsupported motion version " + magic[1]);

    const long K = integer(header("jointCount"), "jointCount");
    if (K < 1) throw fail("jointCount must be at least 1");
    MotionClip clip;
    if (!parse_double(header("frameRate"), clip.frameRate) || !(clip.frameRate > 0.0)) throw fail("frameRate: expected a positive number");
    const long length = integer(header("length"), "length");
    if (length < 1) throw fail("length must be at least 1");

    next("label");
    if (line.rfind("label", 0) != 0 || (line.size() > 5 && line[5] != ' ')) throw fail("expected 'label <text>'");
    clip.label = line.size() > 6 ? line.substr(6) : std::string();

    if (expectedJoints >= 0 && K != expectedJoints)
        throw JointCountMismatch(source + ": motion has " + std::to_string(K) + " joints, rig has " + std::to_string(expectedJoints));

    clip.frames.reserve(static_cast<std::size_t>(length));
    for (long i = 0; i < length; ++i) {
        auto t = next("frame record");
        const std::size_t expected = 7 + 3 * static_cast<std::size_t>(K);  // frame i root x y z rot ...
        if (t.size() < 2 || t[0] != "frame") throw fail("expected 'frame <index> root ... rot ...'");
        if (integer(t[1], "frame index") != i) throw fail("frame index out of order, expected " + std::to_string(i));
        if (t.size() != expected || t[2] != "root" || t[6] != "rot")
            throw fail("frame record must have 3 root values and " + std::to_string(3 * K) + " rotation values");
        Pose p = Pose::identity(static_cast<int>(K));
        for (int c = 0; c < 3; ++c)
            if (!parse_double(t[3 + c], p.rootTranslation[c])) throw fail("root: bad number '" + t[3 + c] + "'");
        for (long j = 0; j < K; ++j)
            for (int c = 0; c < 3; ++c) {
                const std::string& tok = t[7 + 3 * j + c];
                if (!parse_double(tok, p.jointRotations(j, c))) throw fail("rot: bad number '" + tok + "'");
            }
        if (!p.jointRotations.allFinite() || !p.rootTranslation.allFinite()) throw fail("non-finite value");
        clip.frames.push_back(std::move(p));
    }
    while (std::getline(in, line)) {
        ++lineNo;
        if (!tokenize(line).empty()) throw fail("trailing content after the last frame");
    }
    return clip;
}

void save_motion(const MotionClip& clip, const std::filesystem::path& path) { write_file(path, motion_to_string(clip)); }

MotionClip load_motion(const std::filesystem::path& path, int expectedJoints) {
    return motion_from_string(read_file(path), path.string(), expectedJoints);
}

MotionKind parse_motion_kind(const std::string& name) {
    if (name == "arm_raise") return MotionKind::ArmRaise;
    if (name == "walk_cycle") return MotionKind::WalkCycle;
    if (name == "squat") return MotionKind::Squat;
    throw InvalidInput("unknown motion kind '" + name + "' (expected arm_raise, walk_cycle or squat)");
}

std::string motion_kind_name(MotionKind kind) {
    switch (kind) {
        case MotionKind::ArmRaise: return "arm_raise";
        case MotionKind::WalkCycle: return "walk_cycle";
        case MotionKind::Squat: return "squat";
    }
    return "unknown";
}

MotionClip synth_motion(const TemplateRig& rig, MotionKind kind, int length, const SynthOptions& options) {
    if (length < 2) throw InvalidInput("synthetic motion needs at least 2 frames");
    const int K = rig.numJoints();
    auto J = [&](const char* name) { return rig.jointIndex(name); };
    const double defaults[] = {1.0, 0.5, 0.6};
    const double amp = std::isnan(options.amplitude) ? defaults[static_cast<int>(kind)] : options.amplitude;

    MotionClip clip;
    clip.frameRate = options.frameRate;
    clip.label = motion_kind_name(kind);
    clip.frames.assign(static_cast<std::size_t>(length), Pose::identity(K));
    const double n = static_cast<double>(length);

    for (int i = 0; i < length; ++i) {
        Pose& p = clip.frames[static_cast<std::size_t>(i)];
        const double fi = static_cast<double>(i);
        switch (kind) {
            case MotionKind::ArmRaise: {
                // Cosine ramp from the canonical pose to the full amplitude.
                const double s = 0.5 * (1.0 - std::cos(kPi * fi / (n - 1.0)));
                p.jointRotations(J("left_shoulder"), 2) = amp * s;
                p.jointRotations(J("right_shoulder"), 2) = -amp * s;
                break;
            }
            case MotionKind::WalkCycle: {
                const double phase = 2.0 * kPi * fi / options.walkPeriod;
                const double swing = amp * std::sin(phase);
                p.jointRotations(J("left_hip"), 0) = swing;
                p.jointRotations(J("right_hip"), 0) = -swing;
                // Knees flex while their leg trails.
                p.jointRotations(J("left_knee"), 0) = 0.8 * amp * std::max(0.0, -std::sin(phase));
                p.jointRotations(J("right_knee"), 0) = 0.8 * amp * std::max(0.0, std::sin(phase));
                // Arms settle to a relaxed position over the first quarter cycle, then swing.
                const double settle = 0.5 * (1.0 - std::cos(kPi * std::min(1.0, 4.0 * fi / options.walkPeriod)));
                p.jointRotations(J("left_shoulder"), 2) = -0.9 * settle;
                p.jointRotations(J("right_shoulder"), 2) = 0.9 * settle;
                p.jointRotations(J("left_shoulder"), 1) = -0.3 * swing * settle;
                p.jointRotations(J("right_shoulder"), 1) = -0.3 * swing * settle;
                p.rootTranslation = Vec3(0.0, -0.01 * (1.0 - std::cos(2.0 * phase)), 1.2 * fi / options.frameRate);
                break;
            }
            case MotionKind::Squat: {
                const double s = 0.5 * (1.0 - std::cos(2.0 * kPi * fi / n));
                for (const char* hip : {"left_hip", "right_hip"}) p.jointRotations(J(hip), 0) = -amp * s;
                for (const char* knee : {"left_knee", "right_knee"}) p.jointRotations(J(knee), 0) = 2.0 * amp * s;
                for (const char* ankle : {"left_ankle", "right_ankle"}) p.jointRotations(J(ankle), 0) = -amp * s;
                p.jointRotations(J("spine1"), 0) = -0.5 * amp * s;
                p.rootTranslation = Vec3(0.0, -0.3 * amp * s, 0.0);
                break;
            }
        }
    }
    return clip;
}

MotionClip hold_pose(const Pose& pose, int length, double frameRate, std::string label) {
    if (length < 1) throw InvalidInput("clip length must be at least 1");
    MotionClip clip;
    clip.frames.assign(static_cast<std::size_t>(length), pose);
    clip.frameRate = frameRate;
    clip.label = std::move(label);
    return clip;
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm();
}

PenetrationProxies fit_proxies(const TemplateRig& rig, const PosedMesh& mesh) {
    const auto dominant = rig.dominantJoint();
    const int pelvis = rig.jointIndex("pelvis"), spine1 = rig.jointIndex("spine1"), spine2 = rig.jointIndex("spine2"),
              spine3 = rig.jointIndex("spine3"), neck = rig.jointIndex("neck"), head = rig.jointIndex("head");
    const std::vector<std::pair<int, int>> chain = {{pelvis, spine1}, {spine1, spine2}, {spine2, spine3},
                                                    {spine3, neck},   {neck, head},     {head, -1}};
    PenetrationProxies out;
    for (auto [j, child] : chain) {
        std::vector<int> members;
        for (int v = 0; v < rig.numVertices(); ++v)
            if (dominant[v] == j) members.push_back(v);
        if (members.empty()) continue;
        Capsule c;
        c.joint = j;
        c.a = mesh.joints.row(j).transpose();
        if (child >= 0) {
            c.b = mesh.joints.row(child).transpose();
        } else {
            Vec3 centroid = Vec3::Zero();
            for (int v : members) centroid += mesh.vertices.row(v).transpose();
            centroid /= static_cast<double>(members.size());
            c.b = c.a + 2.0 * (centroid - c.a);
        }
        // Mean distance to the infinite axis line.
        const Vec3 axis = (c.b - c.a).normalized();
        double sum = 0.0;
        for (int v : members) {
            const Vec3 d = mesh.vertices.row(v).transpose() - c.a;
            sum += (d - d.dot(axis) * axis).norm();
        }
        c.radius = sum / static_cast<double>(members.size());
        out.capsules.push_back(c);
    }
    const std::vector<int> left = {rig.jointIndex("left_elbow"), rig.jointIndex("left_wrist"), rig.jointIndex("left_hand")};
    const std::vector<int> right = {rig.jointIndex("right_elbow"), rig.jointIndex("right_wrist"), rig.jointIndex("right_hand")};
    for (int v = 0; v < rig.numVertices(); ++v) {
        if (std::find(left.begin(), left.end(), dominant[v]) != left.end()) out.leftLimb.push_back(v);
        if (std::find(right.begin(), right.end(), dominant[v]) != right.end()) out.rightLimb.push_back(v);
    }
    return out;
}

int penetration_count(const PosedMesh& mesh, const PenetrationProxies& proxies, const std::vector<int>& vertices) {
    int count = 0;
    for (int v : vertices) {
        const Vec3 p = mesh.vertices.row(v).transpose();
        for (const Capsule& c : proxies.capsules) {
            if (inside_capsule(p, c)) {
                ++count;
                break;
            }
        }
    }
    return count;
}

int penetration_count(const PosedMesh& mesh, const PenetrationProxies& proxies) {
    return penetration_count(mesh, proxies, proxies.leftLimb) + penetration_count(mesh, proxies, proxies.rightLimb);
}

double leg_length(const TemplateRig& rig, const Points& joints) {
    double total = 0.0;
    for (const char* side : {"left", "right"}) {
        const std::string s(side);
        const Vec3 hip = joints.row(rig.jointIndex(s + "_hip")).transpose();
        const Vec3 knee = joints.row(rig.jointIndex(s + "_knee")).transpose();
        const Vec3 ankle = joints.row(rig.jointIndex(s + "_ankle")).transpose();
        total += (knee - hip).norm() + (ankle - knee).norm();
    }
    return 0.5 * total;
}

RetargetResult retarget(const MotionClip& source, const TemplateRig& sourceRig, const PosedMesh& targetCanonicalMesh,
                        const Points& targetRestJoints, const RetargetOptions& options) {
    source.validate();
    const int K = sourceRig.numJoints();
    if (source.numJoints() != K)
        throw JointCountMismatch("motion has " + std::to_string(source.numJoints()) + " joints, rig has " + std::to_string(K));
    if (targetRestJoints.rows() != K)
        throw JointCountMismatch("target skeleton has " + std::to_string(targetRestJoints.rows()) + " joints, rig has " + std::to_string(K));
    if (targetCanonicalMesh.vertices.rows() != sourceRig.numVertices()) throw InvalidInput("target mesh vertex count does not match rig");
    if (!(options.increment > 0.0) || options.cap < 0.0) throw InvalidInput("retarget increment must be positive and cap non-negative");

    const Points sourceRestJoints = regress_joints(sourceRig, sourceRig.templateVertices);
    RetargetResult res;
    res.legRatio = leg_length(sourceRig, targetRestJoints) / leg_length(sourceRig, sourceRestJoints);

    const std::size_t L = source.length();
    res.skeletonResidual.assign(L, Pose::identity(K));
    res.geometryResidual.assign(L, Pose::identity(K));
    res.penetrationsBefore.assign(L, 0);
    res.penetrationsAfter.assign(L, 0);
    std::vector<char> unresolved(L, 0);

    struct Side {
        int elbow, shoulder;
        double sign;  // abduction direction about the local z axis
        bool left;
    };
    const Side sides[2] = {{sourceRig.jointIndex("left_elbow"), sourceRig.jointIndex("left_shoulder"), 1.0, true},
                           {sourceRig.jointIndex("right_elbow"), sourceRig.jointIndex("right_shoulder"), -1.0, false}};
    const Points& restVerts = targetCanonicalMesh.vertices;
    const int maxSteps = static_cast<int>(std::floor(options.cap / options.increment + 1e-9));

    res.clip.frameRate = source.frameRate;
    res.clip.label = source.label;
    res.clip.frames.assign(L, Pose::identity(K));
    res.residual.assign(L, Pose::identity(K));

    parallel_for(L, [&](std::size_t i) {
        const Pose& src = source.frames[i];
        Pose base = src;
        Pose& skel = res.skeletonResidual[i];
        for (int c = 0; c < 3; ++c) {
            auto [r, v] = exactOffset(src.rootTranslation[c], (res.legRatio - 1.0) * src.rootTranslation[c]);
            skel.rootTranslation[c] = r;
            base.rootTranslation[c] = v;
        }

        auto evaluate = [&](const Pose& geo, const std::vector<int>* subset) {
            const Pose trial = add_poses(base, geo);
            const PosedMesh posed = skin(sourceRig, restVerts, targetRestJoints, trial);
            const PenetrationProxies proxies = fit_proxies(sourceRig, posed);
            return subset ? penetration_count(posed, proxies, *subset) : penetration_count(posed, proxies);
        };

        Pose geo = Pose::identity(K);
        res.penetrationsBefore[i] = evaluate(geo, nullptr);
        if (res.penetrationsBefore[i] > 0) {
            const PenetrationProxies limbs = fit_proxies(sourceRig, skin(sourceRig, restVerts, targetRestJoints, base));
            for (const Side& side : sides) {
                const std::vector<int>& subset = side.left ? limbs.leftLimb : limbs.rightLimb;
                if (evaluate(geo, &subset) == 0) continue;
                auto openJoint = [&](Pose g, int joint) -> std::pair<Pose, bool> {
                    const double start = g.jointRotations(joint, 2);
                    for (int s = 1; s <= maxSteps; ++s) {
                        g.jointRotations(joint, 2) = start + side.sign * options.increment * s;
                        if (evaluate(g, &subset) == 0) return {g, true};
                    }
                    return {g, false};
                };
                // Distal joint first; fall back to the proximal one, then both.
                bool resolved = false;
                for (int joint : {side.elbow, side.shoulder}) {
                    auto [g, ok] = openJoint(geo, joint);
                    if (ok) {
                        geo = g;
                        resolved = true;
                        break;
                    }
                }
                if (!resolved) {
                    Pose g = geo;
                    g.jointRotations(side.shoulder, 2) += side.sign * options.increment * maxSteps;
                    auto [both, ok] = openJoint(g, side.elbow);
                    geo = both;
                    if (!ok) unresolved[i] = 1;
                }
            }
        }

        Pose& out = res.clip.frames[i];
        out.rootTranslation = base.rootTranslation;
        Pose& geoRes = res.geometryResidual[i];
        for (int j = 0; j < K; ++j)
            for (int c = 0; c < 3; ++c) {
                auto [r, v] = exactOffset(src.jointRotations(j, c), geo.jointRotations(j, c));
                geoRes.jointRotations(j, c) = r;
                out.jointRotations(j, c) = v;
            }
        // Skeleton residual lives in the root, geometry residual in the rotations.
        res.residual[i].rootTranslation = skel.rootTranslation;
        res.residual[i].jointRotations = geoRes.jointRotations;

        const PosedMesh posed = skin(sourceRig, restVerts, targetRestJoints, out);
        res.penetrationsAfter[i] = penetration_count(posed, fit_proxies(sourceRig, posed));
    });

    for (std::size_t i = 0; i < L; ++i)
        if (unresolved[i]) res.unresolvedFrames.push_back(static_cast<int>(i));
    return res;
}

}  // namespace forge
