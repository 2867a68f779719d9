#include "fixtures.hpp"
#include "oracles.hpp"

#include "forge/regularize.hpp"
#include "forge/rng.hpp"

#include <doctest.h>

using namespace forge;

namespace {

struct Grid {
    Points vertices;
    Triangles faces;
};

Grid grid(int nx, int ny) {
    Grid g;
    g.vertices.resize(nx * ny, 3);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) g.vertices.row(y * nx + x) << x, y, 0;
    g.faces.resize(2 * (nx - 1) * (ny - 1), 3);
    int t = 0;
    for (int y = 0; y + 1 < ny; ++y)
        for (int x = 0; x + 1 < nx; ++x) {
            const int a = y * nx + x;
            g.faces.row(t++) << a, a + 1, a + nx + 1;
            g.faces.row(t++) << a, a + nx + 1, a + nx;
        }
    return g;
}

Points random_points(Rng& rng, int n, double scale) {
    Points p(n, 3);
    for (Index i = 0; i < p.size(); ++i) p.data()[i] = scale * rng.normal();
    return p;
}

// Upper lip 0, lower lip 1, eyeball 2, forehead 3 and 4.
FacialSets toy_face() {
    FacialSets f;
    f.lipPairs = {{0, 1}};
    f.eyeball = {2};
    f.forehead = {3, 4};
    f.eyeballRadius = 0.01;
    return f;
}

Points toy_face_rest() {
    Points m(5, 3);
    m << 0, 0.002, 0, 0, -0.002, 0, 0, 0.05, 0.01, -0.02, 0.08, 0, 0.02, 0.08, 0;
    return m;
}

}  // namespace

TEST_SUITE("regularize") {

TEST_CASE("shape regularizer") {
    CHECK(shape_reg(Vector::Zero(4)).loss == 0.0);
    const ShapeLoss s = shape_reg((Vector(2) << 1, 2).finished());
    CHECK(s.loss == 5.0);
    CHECK(s.grad == (Vector(2) << 2, 4).finished());
    Rng rng(3);
    Vector beta(10);
    for (auto& b : beta) b = rng.normal();
    const Vector fd = oracle::finite_difference([](const Vector& b) { return shape_reg(b).loss; }, beta, 1e-6);
    CHECK(oracle::relative_error(shape_reg(beta).grad, fd) < 1e-8);
}

TEST_CASE("mesh adjacency") {
    const Grid g = grid(3, 3);
    const Adjacency adj = mesh_adjacency(g.faces, 9);
    CHECK(adj[4] == std::vector<int>{0, 1, 3, 5, 7, 8});
    CHECK(adj[0] == std::vector<int>{1, 3, 4});
    Triangles bad = g.faces;
    bad(0, 0) = 9;
    CHECK_THROWS_AS(mesh_adjacency(bad, 9), InvalidInput);
}

TEST_CASE("Laplacian regularizer") {
    const Grid g = grid(5, 5);
    const Adjacency adj = mesh_adjacency(g.faces, 25);

    SUBCASE("a flat regular grid is smooth in the interior") {
        // Only the centre vertex has an all-interior neighbourhood.
        const VertexLoss l = laplacian_reg(g.vertices, adj);
        CHECK(l.grad.row(12).norm() < 1e-12);
        CHECK(l.grad.row(0).norm() > 0.0);
        CHECK(laplacian_reg(Points::Zero(25, 3), adj).loss == 0.0);
    }
    SUBCASE("a single displaced interior vertex") {
        Points d = Points::Zero(25, 3);
        const Vec3 v(0.3, -0.1, 0.2);
        d.row(12) = v.transpose();
        // Own residual |v|^2 plus |v/6|^2 for each of its six degree-6 neighbours.
        CHECK(laplacian_reg(d, adj).loss == doctest::Approx(v.squaredNorm() * (1.0 + 6.0 / 36.0)));
    }
    SUBCASE("agrees with the face-list oracle and finite differences") {
        Rng rng(6);
        const Points m = g.vertices + random_points(rng, 25, 0.1);
        const VertexLoss l = laplacian_reg(m, adj);
        CHECK(l.loss == doctest::Approx(oracle::laplacian_loss(m, g.faces)).epsilon(1e-12));
        auto f = [&](const Vector& x) {
            Points p = m;
            flatten(p) = x;
            return laplacian_reg(p, adj).loss;
        };
        CHECK(oracle::relative_error(flatten(l.grad), oracle::finite_difference(f, flatten(m), 1e-6)) < 1e-7);
    }
    SUBCASE("an isolated vertex is a rig error") {
        Adjacency broken = adj;
        broken[3].clear();
        CHECK_THROWS_AS(laplacian_reg(g.vertices, broken), InvalidInput);
    }
}

TEST_CASE("face regularizer") {
    const FacialSets face = toy_face();
    const Points rest = toy_face_rest();
    CHECK(face_reg(rest, face).loss == 0.0);

    SUBCASE("crossed lips by one millimetre") {
        Points m = rest;
        m(0, 1) = -0.0005;
        m(1, 1) = 0.0005;
        CHECK(face_reg(m, face).loss == doctest::Approx(1e-6));
        CHECK(face_reg(m, face).loss == doctest::Approx(oracle::face_loss(m, face)));
    }
    SUBCASE("eyeball inside the forehead radius") {
        Points m = rest;
        m.row(2) << 0.016, 0.075, 0;  // 0.0064 from forehead vertex 4
        const double d2 = (m.row(2) - m.row(4)).squaredNorm();
        CHECK(face_reg(m, face).loss == doctest::Approx(d2));
    }
    SUBCASE("gradient matches finite differences") {
        Points m = rest;
        m(0, 1) = -0.003;
        m.row(2) << 0.016, 0.075, 0.001;
        auto f = [&](const Vector& x) {
            Points p = m;
            flatten(p) = x;
            return face_reg(p, face).loss;
        };
        const VertexLoss l = face_reg(m, face);
        CHECK(oracle::relative_error(flatten(l.grad), oracle::finite_difference(f, flatten(m), 1e-7)) < 1e-6);
    }
}

TEST_CASE("weighted total") {
    TemplateRig rig = forge::test::two_bone_rig();
    const Grid g = grid(5, 5);
    rig.facial = toy_face();
    // Only the facial sets and vertex count of the rig matter here.
    rig.templateVertices = Points::Zero(25, 3);
    AvatarParams p;
    p.beta = (Vector(2) << 1, 2).finished();
    p.displacement = Points::Zero(25, 3);
    const Vec3 v(0.01, 0.02, -0.03);
    p.displacement.row(12) = v.transpose();
    Points mesh = g.vertices;
    mesh.topRows(5) = toy_face_rest();
    mesh(0, 1) = -0.0005;
    mesh(1, 1) = 0.0005;
    const Adjacency adj = mesh_adjacency(g.faces, 25);

    const double lap = v.squaredNorm() * 7.0 / 6.0;
    SUBCASE("stock weights") {
        const RegResult r = total_reg(p, mesh, rig, adj);
        CHECK(r.shape == 5.0);
        CHECK(r.laplacian == doctest::Approx(lap));
        CHECK(r.face == doctest::Approx(1e-6));
        CHECK(r.total == doctest::Approx(0.01 * 5.0 + 100.0 * lap + 10.0 * 1e-6));
        CHECK(r.gradBeta == (Vector(2) << 0.02, 0.04).finished());
        CHECK(r.gradDisplacement.row(12).norm() > 0.0);
    }
    SUBCASE("zero weights") {
        const RegResult r = total_reg(p, mesh, rig, adj, {0.0, 0.0, 0.0});
        CHECK(r.total == 0.0);
        CHECK(r.shape == 5.0);  // components are reported unweighted
        CHECK(r.gradBeta.cwiseAbs().maxCoeff() == 0.0);
        CHECK(r.gradVertices.cwiseAbs().maxCoeff() == 0.0);
        CHECK(r.gradDisplacement.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("one term at a time") {
        CHECK(total_reg(p, mesh, rig, adj, {1.0, 0.0, 0.0}).total == 5.0);
        CHECK(total_reg(p, mesh, rig, adj, {0.0, 1.0, 0.0}).total == doctest::Approx(lap));
        CHECK(total_reg(p, mesh, rig, adj, {0.0, 0.0, 1.0}).total == doctest::Approx(1e-6));
    }
    SUBCASE("Laplacian on the full mesh") {
        RegWeights w{0.0, 1.0, 0.0, LaplacianTarget::Mesh};
        const RegResult r = total_reg(p, mesh, rig, adj, w);
        CHECK(r.laplacian == doctest::Approx(laplacian_reg(mesh, adj).loss));
        CHECK(r.gradDisplacement.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("negative weight") {
        CHECK_THROWS_AS(total_reg(p, mesh, rig, adj, {-1.0, 0.0, 0.0}), InvalidInput);
    }
}

}
