#pragma once

#include "forge/types.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace forge {

/// Facial landmark sets used by the face regularizer and the face mask.
struct FacialSets {
    std::vector<std::pair<int, int>> lipPairs;  // (upper, lower)
    std::vector<int> eyeball;
    std::vector<int> forehead;
    double eyeballRadius = 0.0;
    std::vector<int> faceRegion;
    Vec3 headUp = Vec3::UnitY();
};

/** Fixed template of a skinned parametric body.
 *
 *  Blend bases are stored as (3V x N) matrices whose columns are flattened
 *  row-major point sets, so `templateVertices + reshape(basis * coeffs)` is
 *  the blended shape. An empty pose basis (zero columns) means "no pose
 *  correctives". */
struct TemplateRig {
    Points templateVertices;
    Triangles faces;
    Matrix shapeBasis;
    Matrix expressionBasis;
    Matrix poseBasis;  // 3V x 9(K-1), or 3V x 0
    Matrix jointRegressor;  // K x V, rows sum to 1
    Matrix skinWeights;     // V x K, rows sum to 1, non-negative
    std::vector<int> parents;  // parents[0] == -1
    std::vector<std::string> jointNames;
    Points2D uv;  // V x 2 in [0,1]^2
    FacialSets facial;

    int numVertices() const { return static_cast<int>(templateVertices.rows()); }
    int numFaces() const { return static_cast<int>(faces.rows()); }
    int numJoints() const { return static_cast<int>(parents.size()); }
    int numShape() const { return static_cast<int>(shapeBasis.cols()); }
    int numExpression() const { return static_cast<int>(expressionBasis.cols()); }
    bool hasPoseBasis() const { return poseBasis.cols() > 0; }

    int jointIndex(const std::string& name) const;
    // Joint with the largest skinning weight for every vertex (ties: highest index).
    std::vector<int> dominantJoint() const;

    // Throws InvalidInput on any broken structural invariant.
    void validate() const;
};

/// Learnable avatar parameters: shape, expression, per-vertex offsets, texture.
struct AvatarParams {
    Vector beta;
    Vector psi;
    Points displacement;
    Image texture;

    static AvatarParams zeros(const TemplateRig& rig, int textureWidth = 64, int textureHeight = 64,
                              double textureFill = 0.5);

    void clampTexture();
    void clampDisplacement(double maxNorm);
    void checkCompatible(const TemplateRig& rig) const;
};

struct Pose {
    Vec3 rootTranslation = Vec3::Zero();
    Points jointRotations;  // K x 3 axis-angle, radians

    static Pose identity(int numJoints) {
        Pose p;
        p.jointRotations = Points::Zero(numJoints, 3);
        return p;
    }
    int numJoints() const { return static_cast<int>(jointRotations.rows()); }
    bool operator==(const Pose& o) const {
        return rootTranslation == o.rootTranslation && jointRotations == o.jointRotations;
    }
};

struct PosedMesh {
    Points vertices;
    Points joints;
    std::vector<Mat3> worldRotations;  // per joint, kept for the backward pass
    const TemplateRig* sourceRig = nullptr;  // non-owning
    Pose sourcePose;
};

/// Gradients w.r.t. the geometric parameter groups.
struct GeometryGrad {
    Vector beta;
    Vector psi;
    Points displacement;
};

/// Rodrigues' formula; exact identity for a zero vector.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, 3> rodrigues(const Eigen::MatrixBase<Derived>& axisAngle) {
    using Scalar = typename Derived::Scalar;
    using Mat = Eigen::Matrix<Scalar, 3, 3>;
    const Scalar theta = axisAngle.norm();
    if (theta == Scalar(0)) return Mat::Identity();
    const Eigen::Matrix<Scalar, 3, 1> k = axisAngle / theta;
    Mat K;
    K << Scalar(0), -k.z(), k.y(), k.z(), Scalar(0), -k.x(), -k.y(), k.x(), Scalar(0);
    using std::cos;
    using std::sin;
    return Mat::Identity() + sin(theta) * K + (Scalar(1) - cos(theta)) * K * K;
}

/// Rest-pose vertices: template + shape + expression + pose correctives + displacement.
Points shape_template(const TemplateRig& rig, const AvatarParams& params, const Pose& pose);

/// Joint locations regressed from rest vertices.
Points regress_joints(const TemplateRig& rig, const Points& restVertices);

/// Linear blend skinning along the kinematic tree, with the root translation applied last.
PosedMesh skin(const TemplateRig& rig, const Points& restVertices, const Points& restJoints, const Pose& pose);

/// shape_template -> regress_joints -> skin.
PosedMesh pose_avatar(const TemplateRig& rig, const AvatarParams& params, const Pose& pose);

/// Vector-Jacobian product of skin() w.r.t. its rest vertices, including the
/// dependence of the joint transforms on the regressed rest joints.
/// `gradJoints` may be empty.
Points skin_vjp(const TemplateRig& rig, const PosedMesh& posed, const Points& gradVertices,
                const Points& gradJoints = Points());

/// Chains a rest-vertex gradient into beta/psi/displacement gradients.
GeometryGrad shape_vjp(const TemplateRig& rig, const Points& gradRest);

// Flattened (3V) view helpers for blend bases.
inline Eigen::Map<const Vector> flatten(const Points& p) { return {p.data(), p.size()}; }
inline Eigen::Map<Vector> flatten(Points& p) { return {p.data(), p.size()}; }

}  // namespace forge
