#include "fixtures.hpp"
#include "oracles.hpp"

#include "forge/regularize.hpp"
#include "forge/rig_builder.hpp"
#include "forge/rng.hpp"

#include <doctest.h>

#include <map>
#include <numbers>

using namespace forge;
using forge::test::humanoid;
using forge::test::two_bone_rig;

namespace {

Pose elbow_pose(double angle) {
    Pose p = Pose::identity(3);
    p.jointRotations.row(1) << 0, 0, angle;
    return p;
}

}  // namespace

TEST_SUITE("body_model") {

TEST_CASE("shape_template with zero coefficients returns the template") {
    const TemplateRig rig = two_bone_rig();
    const AvatarParams p = AvatarParams::zeros(rig, 4, 4);
    CHECK(shape_template(rig, p, Pose::identity(3)) == rig.templateVertices);
}

TEST_CASE("a unit shape coefficient adds exactly the first basis column") {
    const TemplateRig rig = two_bone_rig();
    AvatarParams p = AvatarParams::zeros(rig, 4, 4);
    p.beta[0] = 1.0;
    const Points rest = shape_template(rig, p, Pose::identity(3));
    Points expect = rig.templateVertices;
    flatten(expect) += rig.shapeBasis.col(0);
    CHECK((rest - expect).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("shape_template agrees with the loop oracle on random coefficients") {
    const TemplateRig rig = two_bone_rig();
    Rng rng(5);
    AvatarParams p = AvatarParams::zeros(rig, 4, 4);
    p.beta << rng.normal(), rng.normal();
    p.psi << rng.normal();
    for (Index i = 0; i < p.displacement.size(); ++i) p.displacement.data()[i] = 0.01 * rng.normal();
    const Points a = shape_template(rig, p, Pose::identity(3));
    const Points b = oracle::shape_template_loop(rig, p, Pose::identity(3));
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("joint regression") {
    TemplateRig rig = two_bone_rig();
    SUBCASE("one-hot rows pick vertices") {
        const Points J = regress_joints(rig, rig.templateVertices);
        CHECK(J.row(0) == rig.templateVertices.row(3));
        CHECK(J.row(1) == rig.templateVertices.row(4));
        CHECK(J.row(2) == rig.templateVertices.row(1));
    }
    SUBCASE("uniform rows give the centroid") {
        rig.jointRegressor.setConstant(1.0 / 5.0);
        const Points J = regress_joints(rig, rig.templateVertices);
        CHECK(J(0, 0) == doctest::Approx(5.0 / 5.0));
        CHECK(J(2, 1) == doctest::Approx(0.0));
    }
    SUBCASE("tetrahedron centroid") {
        TemplateRig t;
        t.templateVertices.resize(4, 3);
        t.templateVertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
        t.jointRegressor = Matrix::Constant(1, 4, 0.25);
        t.parents = {-1};
        const Points J = regress_joints(t, t.templateVertices);
        CHECK(J(0, 0) == doctest::Approx(0.25));
        CHECK(J(0, 1) == doctest::Approx(0.25));
        CHECK(J(0, 2) == doctest::Approx(0.25));
    }
    SUBCASE("humanoid regressor matches the loop oracle") {
        const TemplateRig& h = humanoid();
        const Points a = regress_joints(h, h.templateVertices);
        const Points b = oracle::regress_joints_loop(h, h.templateVertices);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("identity pose reproduces the rest mesh exactly") {
    const TemplateRig& rig = humanoid();
    const AvatarParams p = AvatarParams::zeros(rig);
    const PosedMesh m = pose_avatar(rig, p, Pose::identity(rig.numJoints()));
    CHECK(m.vertices == rig.templateVertices);
    CHECK(m.joints == regress_joints(rig, rig.templateVertices));
}

TEST_CASE("root rotation and translation move the mesh rigidly") {
    const TemplateRig& rig = humanoid();
    const Points rest = rig.templateVertices;
    const Points J = regress_joints(rig, rest);
    Pose pose = Pose::identity(rig.numJoints());
    pose.jointRotations.row(0) << 0.3, -0.7, 0.2;
    pose.rootTranslation = Vec3(0.1, -0.2, 0.5);
    const PosedMesh m = skin(rig, rest, J, pose);
    const Mat3 R = rodrigues(pose.jointRotations.row(0).transpose());
    const Vec3 pivot = J.row(0).transpose();
    double worst = 0.0;
    for (int v = 0; v < rig.numVertices(); ++v) {
        const Vec3 expect = R * (rest.row(v).transpose() - pivot) + pivot + pose.rootTranslation;
        worst = std::max(worst, (expect - m.vertices.row(v).transpose()).norm());
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("two-bone elbow bend by a quarter turn") {
    const TemplateRig rig = two_bone_rig();
    const Points J = regress_joints(rig, rig.templateVertices);
    const PosedMesh m = skin(rig, rig.templateVertices, J, elbow_pose(std::numbers::pi / 2));
    auto near = [](const Points& P, int i, Vec3 e) { return (P.row(i).transpose() - e).norm() < 1e-12; };
    CHECK(near(m.vertices, 0, {0.5, 0, 0}));
    CHECK(near(m.vertices, 1, {1, 1, 0}));
    CHECK(near(m.vertices, 2, {1.25, 0.25, 0}));
    CHECK(near(m.joints, 1, {1, 0, 0}));
    CHECK(near(m.joints, 2, {1, 1, 0}));
}

TEST_CASE("skinning agrees with the homogeneous-transform oracle") {
    const TemplateRig& rig = humanoid();
    Rng rng(17);
    Pose pose = Pose::identity(rig.numJoints());
    for (Index i = 0; i < pose.jointRotations.size(); ++i) pose.jointRotations.data()[i] = 0.4 * rng.normal();
    pose.rootTranslation = Vec3(rng.normal(), rng.normal(), rng.normal());
    const Points J = regress_joints(rig, rig.templateVertices);
    const PosedMesh a = skin(rig, rig.templateVertices, J, pose);
    const oracle::Skinned b = oracle::skin_homogeneous(rig, rig.templateVertices, J, pose);
    CHECK((a.vertices - b.vertices).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((a.joints - b.joints).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("skin_vjp matches a directional finite difference") {
    const TemplateRig rig = two_bone_rig();
    Rng rng(2);
    Pose pose = elbow_pose(0.7);
    pose.jointRotations.row(0) << 0.1, 0.2, -0.3;
    Points g(5, 3), d(5, 3);
    for (Index i = 0; i < g.size(); ++i) {
        g.data()[i] = rng.normal();
        d.data()[i] = rng.normal();
    }
    // Joints are regressed from the rest vertices, so the VJP includes that path.
    auto f = [&](const Vector& x) {
        Points rest = rig.templateVertices;
        flatten(rest) = x;
        const PosedMesh m = skin(rig, rest, regress_joints(rig, rest), pose);
        return flatten(m.vertices).dot(flatten(g));
    };
    const PosedMesh base = skin(rig, rig.templateVertices, regress_joints(rig, rig.templateVertices), pose);
    const Points grad = skin_vjp(rig, base, g);
    const double fd = oracle::directional_difference(f, flatten(rig.templateVertices), flatten(d), 1e-6);
    CHECK(flatten(grad).dot(flatten(d)) == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("shape_vjp is the transpose of the blend bases") {
    const TemplateRig rig = two_bone_rig();
    Points g = Points::Ones(5, 3);
    const GeometryGrad gg = shape_vjp(rig, g);
    CHECK((gg.beta - rig.shapeBasis.transpose() * flatten(g)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((gg.psi - rig.expressionBasis.transpose() * flatten(g)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(gg.displacement == g);
}

TEST_CASE("structural validation") {
    TemplateRig rig = two_bone_rig();
    CHECK_NOTHROW(rig.validate());
    SUBCASE("skin weights must sum to one") {
        rig.skinWeights(0, 0) = 0.9;
        CHECK_THROWS_AS(rig.validate(), InvalidInput);
    }
    SUBCASE("negative skin weight") {
        rig.skinWeights(2, 0) = -0.5;
        rig.skinWeights(2, 1) = 1.5;
        CHECK_THROWS_AS(rig.validate(), InvalidInput);
    }
    SUBCASE("parents must precede children") {
        rig.parents = {-1, 2, 0};
        CHECK_THROWS_AS(rig.validate(), InvalidInput);
    }
    SUBCASE("face index out of range") {
        rig.faces(1, 2) = 5;
        CHECK_THROWS_AS(rig.validate(), InvalidInput);
    }
    SUBCASE("shape basis rows") {
        rig.shapeBasis = Matrix::Zero(14, 2);
        CHECK_THROWS_AS(rig.validate(), InvalidInput);
    }
    SUBCASE("param/rig mismatch") {
        AvatarParams p = AvatarParams::zeros(rig, 4, 4);
        p.beta = Vector::Zero(3);
        CHECK_THROWS_AS(shape_template(rig, p, Pose::identity(3)), InvalidInput);
        CHECK_THROWS_AS(shape_template(rig, AvatarParams::zeros(rig, 4, 4), Pose::identity(4)), InvalidInput);
    }
}

TEST_CASE("procedural humanoid") {
    const TemplateRig& rig = humanoid();
    CHECK_NOTHROW(rig.validate());
    CHECK(rig.numJoints() == 24);
    CHECK(rig.numShape() == 10);
    CHECK(rig.numExpression() == 10);
    CHECK(rig.jointIndex("head") >= 0);
    CHECK(rig.jointIndex("left_shoulder") >= 0);
    CHECK((rig.uv.array() >= 0).all());
    CHECK((rig.uv.array() <= 1).all());

    SUBCASE("surface is closed and manifold") {
        std::map<std::pair<int, int>, int> edges;
        for (int f = 0; f < rig.numFaces(); ++f)
            for (int k = 0; k < 3; ++k) {
                const int a = rig.faces(f, k), b = rig.faces(f, (k + 1) % 3);
                ++edges[{std::min(a, b), std::max(a, b)}];
            }
        bool allTwo = true;
        for (const auto& [e, n] : edges) allTwo = allTwo && n == 2;
        CHECK(allTwo);
    }
    SUBCASE("the rest face satisfies the facial constraints") {
        CHECK(face_reg(rig.templateVertices, rig.facial).loss == 0.0);
        CHECK_FALSE(rig.facial.lipPairs.empty());
        CHECK_FALSE(rig.facial.eyeball.empty());
        CHECK_FALSE(rig.facial.faceRegion.empty());
    }
    SUBCASE("same seed, same rig") {
        const TemplateRig again = make_humanoid();
        CHECK(again.templateVertices == rig.templateVertices);
        CHECK(again.skinWeights == rig.skinWeights);
    }
    SUBCASE("grid spacing outside the supported range") {
        HumanoidOptions o;
        o.gridSpacing = 0.05;
        CHECK_THROWS_AS(make_humanoid(o), InvalidInput);
    }
    SUBCASE("A-pose keeps the arms clear of the torso") {
        const Pose a = a_pose(rig);
        CHECK(a.numJoints() == 24);
        CHECK(a.jointRotations.cwiseAbs().maxCoeff() > 0.5);
    }
}

}
