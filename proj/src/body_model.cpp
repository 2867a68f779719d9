#include "forge/body_model.hpp"

#include <algorithm>
#include <string>

namespace forge {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidInput(msg);
}

bool rowStochastic(const Matrix& m, bool nonNegative) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if (std::abs(m.row(r).sum() - 1.0) > 1e-6) return false;
        if (nonNegative && (m.row(r).array() < 0.0).any()) return false;
    }
    return true;
}

}  // namespace

int TemplateRig::jointIndex(const std::string& name) const {
    auto it = std::find(jointNames.begin(), jointNames.end(), name);
    if (it == jointNames.end()) throw InvalidInput("unknown joint '" + name + "'");
    return static_cast<int>(it - jointNames.begin());
}

std::vector<int> TemplateRig::dominantJoint() const {
    std::vector<int> out(numVertices());
    // Ties go to the later joint, i.e. the child side of a blended ring.
    for (int v = 0; v < numVertices(); ++v) {
        int best = 0;
        for (int j = 1; j < numJoints(); ++j)
            if (skinWeights(v, j) >= skinWeights(v, best)) best = j;
        out[v] = best;
    }
    return out;
}

void TemplateRig::validate() const {
    const int V = numVertices();
    const int K = numJoints();
    require(V > 0 && K > 0, "rig has no vertices or joints");
    require(shapeBasis.rows() == 3 * V, "shape basis must have 3V rows");
    require(expressionBasis.rows() == 3 * V, "expression basis must have 3V rows");
    require(poseBasis.cols() == 0 || (poseBasis.rows() == 3 * V && poseBasis.cols() == 9 * (K - 1)),
            "pose basis must be 3V x 9(K-1) or empty");
    require(jointRegressor.rows() == K && jointRegressor.cols() == V, "joint regressor must be K x V");
    require(skinWeights.rows() == V && skinWeights.cols() == K, "skin weights must be V x K");
    require(rowStochastic(skinWeights, true), "skin weight rows must be non-negative and sum to 1");
    require(rowStochastic(jointRegressor, false), "joint regressor rows must sum to 1");
    require(uv.rows() == V, "uv must have V rows");
    require(jointNames.empty() || static_cast<int>(jointNames.size()) == K, "joint names must match joint count");

    require(parents[0] == -1, "joint 0 must be the root");
    for (int j = 1; j < K; ++j) {
        // Parents precede children, which rules out cycles and extra roots.
        require(parents[j] >= 0 && parents[j] < j, "parents must precede children (joint " + std::to_string(j) + ")");
    }
    require((faces.array() >= 0).all() && (faces.array() < V).all(), "face index out of range");

    auto inRange = [V](int i) { return i >= 0 && i < V; };
    for (auto [u, l] : facial.lipPairs) require(inRange(u) && inRange(l), "lip pair index out of range");
    for (int i : facial.eyeball) require(inRange(i), "eyeball index out of range");
    for (int i : facial.forehead) require(inRange(i), "forehead index out of range");
    for (int i : facial.faceRegion) require(inRange(i), "face region index out of range");
    require(facial.eyeballRadius >= 0.0, "eyeball radius must be non-negative");
}

AvatarParams AvatarParams::zeros(const TemplateRig& rig, int textureWidth, int textureHeight, double textureFill) {
    AvatarParams p;
    p.beta = Vector::Zero(rig.numShape());
    p.psi = Vector::Zero(rig.numExpression());
    p.displacement = Points::Zero(rig.numVertices(), 3);
    p.texture = Image(textureWidth, textureHeight, textureFill);
    return p;
}

void AvatarParams::clampTexture() { texture.data = texture.data.max(0.0).min(1.0); }

void AvatarParams::clampDisplacement(double maxNorm) {
    for (Eigen::Index v = 0; v < displacement.rows(); ++v) {
        const double n = displacement.row(v).norm();
        if (n > maxNorm) displacement.row(v) *= maxNorm / n;
    }
}

void AvatarParams::checkCompatible(const TemplateRig& rig) const {
    require(beta.size() == rig.numShape(), "beta has " + std::to_string(beta.size()) + " entries, rig expects " +
                                               std::to_string(rig.numShape()));
    require(psi.size() == rig.numExpression(), "psi has " + std::to_string(psi.size()) + " entries, rig expects " +
                                                   std::to_string(rig.numExpression()));
    require(displacement.rows() == rig.numVertices(), "displacement must have one row per vertex");
    require(texture.width > 0 && texture.height > 0 && texture.data.size() == 3L * texture.width * texture.height,
            "texture is empty or malformed");
}

Points shape_template(const TemplateRig& rig, const AvatarParams& params, const Pose& pose) {
    params.checkCompatible(rig);
    require(pose.numJoints() == rig.numJoints(), "pose joint count does not match rig");

    Points rest = rig.templateVertices + params.displacement;
    auto flat = flatten(rest);
    flat.noalias() += rig.shapeBasis * params.beta;
    flat.noalias() += rig.expressionBasis * params.psi;
    if (rig.hasPoseBasis()) {
        const int K = rig.numJoints();
        Vector feature(9 * (K - 1));
        for (int j = 1; j < K; ++j) {
            const Mat3 d = rodrigues(pose.jointRotations.row(j).transpose()) - Mat3::Identity();
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) feature[9 * (j - 1) + 3 * r + c] = d(r, c);
        }
        flat.noalias() += rig.poseBasis * feature;
    }
    return rest;
}

Points regress_joints(const TemplateRig& rig, const Points& restVertices) {
    require(restVertices.rows() == rig.numVertices(), "rest vertex count does not match rig");
    require(restVertices.allFinite(), "rest vertices must be finite");
    return rig.jointRegressor * restVertices;
}

PosedMesh skin(const TemplateRig& rig, const Points& restVertices, const Points& restJoints, const Pose& pose) {
    const int K = rig.numJoints();
    const int V = rig.numVertices();
    require(restVertices.rows() == V, "rest vertex count does not match rig");
    require(restJoints.rows() == K, "rest joint count does not match rig");
    require(pose.numJoints() == K, "pose joint count does not match rig");
    require(pose.jointRotations.allFinite() && pose.rootTranslation.allFinite(), "pose contains non-finite values");

    PosedMesh out;
    out.sourceRig = &rig;
    out.sourcePose = pose;
    out.worldRotations.resize(K);
    // A_j x = R_j x + a_j with a_j = a_p + R_p (J_j - L_j J_j); every term
    // vanishes exactly at the identity pose, so the rest mesh is reproduced bit-exactly.
    Points offset(K, 3);
    for (int j = 0; j < K; ++j) {
        const Mat3 local = rodrigues(pose.jointRotations.row(j).transpose());
        const Vec3 J = restJoints.row(j).transpose();
        const int p = rig.parents[j];
        if (p < 0) {
            out.worldRotations[j] = local;
            offset.row(j) = (J - local * J).transpose();
        } else {
            out.worldRotations[j] = out.worldRotations[p] * local;
            offset.row(j) = offset.row(p) + (out.worldRotations[p] * (J - local * J)).transpose();
        }
    }

    out.vertices.resize(V, 3);
    for (int v = 0; v < V; ++v) {
        Vec3 acc = Vec3::Zero();
        const Vec3 x = restVertices.row(v).transpose();
        for (int j = 0; j < K; ++j) {
            const double w = rig.skinWeights(v, j);
            if (w == 0.0) continue;
            acc += w * ((out.worldRotations[j] * x - x) + offset.row(j).transpose());
        }
        out.vertices.row(v) = (x + acc + pose.rootTranslation).transpose();
    }
    out.joints.resize(K, 3);
    for (int j = 0; j < K; ++j)
        out.joints.row(j) = (out.worldRotations[j] * restJoints.row(j).transpose() + offset.row(j).transpose() +
                             pose.rootTranslation).transpose();
    return out;
}

PosedMesh pose_avatar(const TemplateRig& rig, const AvatarParams& params, const Pose& pose) {
    const Points rest = shape_template(rig, params, pose);
    const Points joints = regress_joints(rig, rest);
    return skin(rig, rest, joints, pose);
}

Points skin_vjp(const TemplateRig& rig, const PosedMesh& posed, const Points& gradVertices,
                const Points& gradJoints) {
    const int K = rig.numJoints();
    const int V = rig.numVertices();
    require(gradVertices.rows() == V, "vertex gradient count does not match rig");
    require(static_cast<int>(posed.worldRotations.size()) == K, "posed mesh lacks joint transforms");

    Points gradRest(V, 3);
    Points blended = Points::Zero(K, 3);  // sum_v w_vj g_v
    for (int v = 0; v < V; ++v) {
        Mat3 m = Mat3::Zero();
        const Vec3 g = gradVertices.row(v).transpose();
        for (int j = 0; j < K; ++j) {
            const double w = rig.skinWeights(v, j);
            if (w == 0.0) continue;
            m += w * posed.worldRotations[j];
            blended.row(j) += w * g.transpose();
        }
        gradRest.row(v) = (m.transpose() * g).transpose();
    }

    // Gradient w.r.t. world translations t_j, then unwound along the tree.
    Points gradT = blended;
    if (gradJoints.rows() == K) gradT += gradJoints;
    Points gradJ(K, 3);
    for (int j = 0; j < K; ++j) gradJ.row(j) = -(posed.worldRotations[j].transpose() * blended.row(j).transpose()).transpose();
    for (int j = K - 1; j >= 0; --j) {
        const int p = rig.parents[j];
        if (p < 0) {
            gradJ.row(j) += gradT.row(j);
            continue;
        }
        const Vec3 back = posed.worldRotations[p].transpose() * gradT.row(j).transpose();
        gradJ.row(j) += back.transpose();
        gradJ.row(p) -= back.transpose();
        gradT.row(p) += gradT.row(j);
    }
    gradRest.noalias() += rig.jointRegressor.transpose() * gradJ;
    return gradRest;
}

GeometryGrad shape_vjp(const TemplateRig& rig, const Points& gradRest) {
    require(gradRest.rows() == rig.numVertices(), "rest gradient count does not match rig");
    GeometryGrad g;
    g.displacement = gradRest;
    const auto flat = flatten(gradRest);
    g.beta = rig.shapeBasis.transpose() * flat;
    g.psi = rig.expressionBasis.transpose() * flat;
    return g;
}

}  // namespace forge
