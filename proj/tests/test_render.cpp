#include "fixtures.hpp"
#include "oracles.hpp"

#include "forge/render.hpp"
#include "forge/rig_builder.hpp"
#include "forge/trainer.hpp"

#include <doctest.h>

using namespace forge;
using forge::test::humanoid;

namespace {

// One-joint rig over explicit geometry; no blend shapes.
TemplateRig flat_rig(const Points& vertices, const Triangles& faces, const Points2D& uv) {
    TemplateRig rig;
    const int V = static_cast<int>(vertices.rows());
    rig.templateVertices = vertices;
    rig.faces = faces;
    rig.uv = uv;
    rig.shapeBasis = Matrix::Zero(3 * V, 0);
    rig.expressionBasis = Matrix::Zero(3 * V, 0);
    rig.jointRegressor = Matrix::Constant(1, V, 1.0 / V);
    rig.skinWeights = Matrix::Ones(V, 1);
    rig.parents = {-1};
    rig.validate();
    return rig;
}

PosedMesh at_rest(const TemplateRig& rig) {
    return pose_avatar(rig, AvatarParams::zeros(rig, 2, 1), Pose::identity(1));
}

Camera front_camera(int size = 32) {
    Camera c;
    c.width = c.height = size;
    return c;
}

// Two large triangles facing the camera at depths z0 and z1 (world z).
struct Sheets {
    TemplateRig rig;
    AvatarParams params;
};
Sheets two_sheets(double z0, double z1) {
    Points v(6, 3);
    v << -20, -20, z0, 20, -20, z0, 0, 20, z0, -20, -20, z1, 20, -20, z1, 0, 20, z1;
    Triangles f(2, 3);
    f << 0, 1, 2, 3, 4, 5;
    Points2D uv(6, 2);
    uv << 0.25, 0.5, 0.25, 0.5, 0.25, 0.5, 0.75, 0.5, 0.75, 0.5, 0.75, 0.5;
    Sheets s{flat_rig(v, f, uv), {}};
    s.params = AvatarParams::zeros(s.rig, 2, 1);
    s.params.texture.pixel(0, 0) = Eigen::Array3d(1, 0, 0);
    s.params.texture.pixel(1, 0) = Eigen::Array3d(0, 0, 1);
    return s;
}

}  // namespace

TEST_SUITE("render") {

TEST_CASE("camera projects the look-at point to the image centre") {
    const Camera c = front_camera(64);
    const Eigen::Vector3d p = c.project(Vec3::Zero());
    CHECK(p.x() == doctest::Approx(32));
    CHECK(p.y() == doctest::Approx(32));
    CHECK(p.z() == doctest::Approx(3));
    // +y world is up in the image, i.e. smaller row index.
    CHECK(c.project(Vec3(0, 0.5, 0)).y() < 32);
    CHECK(c.project(Vec3(0.5, 0, 0)).x() > 32);
    Camera bad = c;
    bad.width = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("a screen-filling triangle renders every pixel") {
    Sheets s = two_sheets(0.0, -100.0);
    s.rig.faces.conservativeResize(1, 3);
    const RenderBuffers b = rasterize(at_rest(s.rig), s.params, s.rig, front_camera());
    CHECK(b.bodyMask.count() == 32u * 32u);
    bool allRed = true, allDepth = true;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            allRed = allRed && (b.color.pixel(x, y) - Eigen::Array3d(1, 0, 0)).abs().maxCoeff() < 1e-12;
            allDepth = allDepth && std::abs(b.depth[y * 32 + x] - 3.0) < 1e-12;
        }
    CHECK(allRed);
    CHECK(allDepth);
    CHECK(b.visibleVertices == std::vector<int>{0, 1, 2});
    CHECK(b.faceMask.count() == 0u);
    CHECK(b.nonFaceMask.count() == 32u * 32u);
}

TEST_CASE("the nearer of two stacked triangles wins regardless of order") {
    for (bool swap : {false, true}) {
        CAPTURE(swap);
        Sheets s = two_sheets(swap ? 0.5 : 0.0, swap ? 0.0 : 0.5);
        const RenderBuffers b = rasterize(at_rest(s.rig), s.params, s.rig, front_camera());
        const Eigen::Array3d nearColour = swap ? Eigen::Array3d(1, 0, 0) : Eigen::Array3d(0, 0, 1);
        CHECK((b.color.pixel(16, 16) - nearColour).abs().maxCoeff() < 1e-12);
        CHECK(b.depth[16 * 32 + 16] == doctest::Approx(2.5));
        CHECK(b.fragment(3, 7).triangle == (swap ? 0 : 1));
        CHECK(b.visibleVertices == (swap ? std::vector<int>{0, 1, 2} : std::vector<int>{3, 4, 5}));
    }
}

TEST_CASE("triangles behind the camera are skipped") {
    Sheets s = two_sheets(5.0, 0.0);
    const RenderBuffers b = rasterize(at_rest(s.rig), s.params, s.rig, front_camera());
    CHECK(b.fragment(16, 16).triangle == 1);
}

TEST_CASE("humanoid depth buffer matches ray casting") {
    const TemplateRig& rig = humanoid();
    const AvatarParams p = AvatarParams::zeros(rig);
    const PosedMesh m = pose_avatar(rig, p, Pose::identity(24));
    const Camera cam = orbit_camera(CameraMode::FullBody, 0.4, 0.2, framing_from_mesh(rig, m));
    const RenderBuffers b = rasterize(m, p, rig, cam);
    int covered = 0;
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            const double expect = oracle::pixel_depth(m.vertices, rig.faces, cam, x, y);
            const double got = b.depth[static_cast<std::size_t>(y) * cam.width + x];
            if (std::isinf(expect)) {
                CHECK(std::isinf(got));
            } else {
                ++covered;
                CHECK(got == doctest::Approx(expect).epsilon(1e-9));
            }
        }
    CHECK(covered > 200);
}

TEST_CASE("texture sampling") {
    SUBCASE("a single texel is constant with zero derivative") {
        Image t(1, 1);
        t.pixel(0, 0) = Eigen::Array3d(0.2, 0.4, 0.6);
        Eigen::Array3d du, dv;
        const Eigen::Array3d c = sample_texture(t, Vec2(0.83, 0.11), &du, &dv);
        CHECK((c - Eigen::Array3d(0.2, 0.4, 0.6)).abs().maxCoeff() < 1e-15);
        CHECK(du.abs().maxCoeff() == 0.0);
        CHECK(dv.abs().maxCoeff() == 0.0);
    }
    SUBCASE("bilinear midpoint and slope") {
        Image t(2, 1, 0.0);
        t.pixel(1, 0) = Eigen::Array3d(1, 1, 1);
        Eigen::Array3d du;
        const Eigen::Array3d c = sample_texture(t, Vec2(0.5, 0.5), &du);
        CHECK(c[0] == doctest::Approx(0.5));
        CHECK(du[0] == doctest::Approx(2.0));
        CHECK(sample_texture(t, Vec2(0.0, 0.5))[0] == 0.0);  // clamped to the edge
        CHECK(sample_texture(t, Vec2(1.0, 0.5))[0] == 1.0);
    }
}

TEST_CASE("render_backward") {
    const TemplateRig& rig = humanoid();
    AvatarParams p = reference_avatar(rig);
    const PosedMesh m = pose_avatar(rig, p, Pose::identity(24));
    const Camera cam = orbit_camera(CameraMode::FullBody, 0.0, 0.1, framing_from_mesh(rig, m));
    const RenderBuffers b = rasterize(m, p, rig, cam);
    SUBCASE("zero pixel gradient gives zero gradients") {
        const RenderGrad g = render_backward(b, m, p, rig, cam, Image(cam.width, cam.height, 0.0));
        CHECK(g.texture.data.abs().maxCoeff() == 0.0);
        CHECK(g.vertices.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("texture gradient of a linear functional is exact") {
        Rng rng(4);
        Image w(cam.width, cam.height);
        for (Index i = 0; i < w.data.size(); ++i) w.data[i] = rng.normal();
        const RenderGrad g = render_backward(b, m, p, rig, cam, w);
        // Colour is linear in the texture at fixed coverage.
        Image d(p.texture.width, p.texture.height);
        for (Index i = 0; i < d.data.size(); ++i) d.data[i] = rng.normal();
        AvatarParams q = p;
        q.texture.data += d.data;
        const RenderBuffers b2 = rasterize(m, q, rig, cam);
        const double lhs = ((b2.color.data - b.color.data) * w.data).sum();
        CHECK(lhs == doctest::Approx((g.texture.data * d.data).sum()).epsilon(1e-9));
    }
    SUBCASE("pixel gradient shape must match") {
        CHECK_THROWS_AS(render_backward(b, m, p, rig, cam, Image(3, 3)), InvalidInput);
    }
}

TEST_CASE("joint visibility is a majority vote over nearest vertices") {
    Sheets s = two_sheets(0.5, 0.0);
    const PosedMesh m = at_rest(s.rig);
    const Camera cam = front_camera();
    const RenderBuffers b = rasterize(m, s.params, s.rig, cam);
    Points joints(2, 3);
    joints.row(0) = m.vertices.topRows(3).colwise().mean();    // front sheet centroid
    joints.row(1) = m.vertices.bottomRows(3).colwise().mean(); // hidden sheet centroid
    const SkeletonMap sk = occluded_skeleton(joints, m, cam, b, 3, {-1, 0});
    CHECK(sk.visibility[0]);
    CHECK_FALSE(sk.visibility[1]);
    CHECK_FALSE(sk.onScreen[0]);  // the big sheet's centroid is below the frame

    std::vector<bool> vis(6, false);
    for (int v : b.visibleVertices) vis[v] = true;
    CHECK(oracle::joint_visibility(joints, m.vertices, vis, {3, 3}) == sk.visibility);
}

TEST_CASE("the far side of the humanoid is hidden") {
    const TemplateRig& rig = humanoid();
    const AvatarParams p = AvatarParams::zeros(rig);
    const PosedMesh m = pose_avatar(rig, p, Pose::identity(24));
    const CameraFraming f = framing_from_mesh(rig, m);
    const Camera front = orbit_camera(CameraMode::FullBody, 0.0, 0.0, f, {.width = 256, .height = 256});
    const RenderBuffers b = rasterize(m, p, rig, front);
    std::vector<bool> vis(rig.numVertices(), false);
    for (int v : b.visibleVertices) vis[v] = true;
    // Vertices on the chest face the camera, those on the back do not.
    int chestHidden = 0, backShown = 0, chest = 0, back = 0;
    for (int v = 0; v < rig.numVertices(); ++v) {
        const Vec3 x = m.vertices.row(v).transpose();
        if (std::abs(x.x()) > 0.05 || x.y() < 0.1 || x.y() > 0.4) continue;
        if (x.z() > 0) {
            ++chest;
            chestHidden += vis[v] ? 0 : 1;
        } else {
            ++back;
            backShown += vis[v] ? 1 : 0;
        }
    }
    CHECK(chest > 0);
    CHECK(back > 0);
    CHECK(chestHidden == 0);
    CHECK(backShown == 0);
}

TEST_CASE("skeleton neighbourhood defaults") {
    const TrainingConfig c;
    CHECK(c.kFace == 20);
    CHECK(c.kBody == 50);
    const Points pts = (Points(4, 3) << 1, 0, 0, -1, 0, 0, 0, 2, 0, 0, 0, 0).finished();
    CHECK(nearest_vertices(pts, Vec3::Zero(), 3) == std::vector<int>{3, 0, 1});
}

TEST_CASE("camera sampling") {
    const TemplateRig& rig = humanoid();
    const PosedMesh m = pose_avatar(rig, AvatarParams::zeros(rig), Pose::identity(24));
    const CameraFraming f = framing_from_mesh(rig, m);
    Rng a(9), b(9);
    for (int i = 0; i < 20; ++i) {
        const Camera ca = sample_camera(a, CameraMode::Head, f);
        const Camera cb = sample_camera(b, CameraMode::Head, f);
        CHECK(ca.position == cb.position);
        CHECK(ca.lookAt == cb.lookAt);
        // Head views centre the head joint.
        const Eigen::Vector3d q = ca.project(f.headJoint);
        CHECK(std::abs(q.x() - 0.5 * ca.width) <= 0.2 * ca.width);
        CHECK(std::abs(q.y() - 0.5 * ca.height) <= 0.2 * ca.height);
        // Elevation stays inside the configured band.
        const Vec3 d = (ca.position - ca.lookAt).normalized();
        const double elevation = std::asin(d.y());
        const CameraSettings cs;
        CHECK(elevation >= cs.minElevation - 1e-12);
        CHECK(elevation <= cs.maxElevation + 1e-12);
    }
    const Camera body = sample_camera(a, CameraMode::FullBody, f);
    const Eigen::Vector3d top = body.project(f.bodyCenter + Vec3(0, 0.5 * f.bodyHeight, 0));
    const Eigen::Vector3d bottom = body.project(f.bodyCenter - Vec3(0, 0.5 * f.bodyHeight, 0));
    CHECK(top.y() >= 0);
    CHECK(bottom.y() <= body.height);
}

}
