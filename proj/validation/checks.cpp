#include "checks.hpp"

#include "oracles.hpp"

#include "forge/assets.hpp"
#include "forge/config.hpp"
#include "forge/guidance.hpp"
#include "forge/io.hpp"
#include "forge/rig_builder.hpp"
#include "forge/trainer.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <sstream>

#include <unistd.h>

namespace forge::validation {

namespace {

constexpr double kPi = std::numbers::pi;

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[320];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

struct Outcome {
    bool passed;
    std::string detail;
};

const TemplateRig& humanoid() {
    static const TemplateRig rig = make_humanoid();
    return rig;
}

Pose random_pose(const TemplateRig& rig, Rng& rng, double spread) {
    Pose p = Pose::identity(rig.numJoints());
    for (Index j = 0; j < p.jointRotations.size(); ++j) p.jointRotations.data()[j] = spread * rng.normal();
    p.rootTranslation = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    return p;
}

Vector random_vector(Rng& rng, Index n, double scale = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
    return v;
}

// Jittered nx x ny grid, two triangles per cell.
std::pair<Points, Triangles> random_grid(Rng& rng, int nx, int ny, double jitter) {
    Points v(nx * ny, 3);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            v.row(y * nx + x) << x + jitter * rng.normal(), y + jitter * rng.normal(), jitter * rng.normal();
    Triangles f(2 * (nx - 1) * (ny - 1), 3);
    int t = 0;
    for (int y = 0; y + 1 < ny; ++y)
        for (int x = 0; x + 1 < nx; ++x) {
            const int a = y * nx + x;
            f.row(t++) << a, a + 1, a + nx + 1;
            f.row(t++) << a, a + nx + 1, a + nx;
        }
    return {v, f};
}

// ---------------------------------------------------------------- criterion 1

Outcome lbs_identity() {
    const TemplateRig& rig = humanoid();
    const PosedMesh m = pose_avatar(rig, AvatarParams::zeros(rig), Pose::identity(rig.numJoints()));
    const double err = (m.vertices - rig.templateVertices).cwiseAbs().maxCoeff();
    return {err <= 1e-6, fmt("max |posed - template| = %.3g", err)};
}

Outcome lbs_rigid_root() {
    const TemplateRig& rig = humanoid();
    Rng rng(101);
    const AvatarParams params = AvatarParams::zeros(rig);
    double worstDist = 0.0, worstMap = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        Pose base = random_pose(rig, rng, 0.3);
        base.jointRotations.row(0).setZero();
        base.rootTranslation.setZero();
        Pose moved = base;
        moved.jointRotations.row(0) = random_vector(rng, 3).transpose();
        moved.rootTranslation = random_vector(rng, 3);
        const PosedMesh a = pose_avatar(rig, params, base);
        const PosedMesh b = pose_avatar(rig, params, moved);
        // The root rotation pivots about the rest root joint.
        const Vec3 pivot = regress_joints(rig, shape_template(rig, params, base)).row(0).transpose();
        const Mat3 R = rodrigues(moved.jointRotations.row(0).transpose());
        for (Index v = 0; v < a.vertices.rows(); ++v) {
            const Vec3 expect = R * (a.vertices.row(v).transpose() - pivot) + pivot + moved.rootTranslation;
            worstMap = std::max(worstMap, (expect - b.vertices.row(v).transpose()).norm());
        }
        for (int s = 0; s < 200; ++s) {
            const Index i = rng.integer(0, a.vertices.rows() - 1), j = rng.integer(0, a.vertices.rows() - 1);
            worstDist = std::max(worstDist, std::abs((a.vertices.row(i) - a.vertices.row(j)).norm() -
                                                     (b.vertices.row(i) - b.vertices.row(j)).norm()));
        }
    }
    return {worstDist <= 1e-6 && worstMap <= 1e-6,
            fmt("max distance change %.3g, max deviation from R x + t %.3g", worstDist, worstMap)};
}

// ------------------------------------------------------- supporting body model

Outcome body_oracles() {
    TemplateRig rig = humanoid();
    Rng rng(102);
    rig.poseBasis = Matrix(3 * rig.numVertices(), 9 * (rig.numJoints() - 1));
    for (Index i = 0; i < rig.poseBasis.size(); ++i) rig.poseBasis.data()[i] = 1e-3 * rng.normal();
    double shapeErr = 0, jointErr = 0, skinErr = 0;
    for (int trial = 0; trial < 5; ++trial) {
        AvatarParams p = AvatarParams::zeros(rig);
        p.beta = random_vector(rng, rig.numShape(), 0.5);
        p.psi = random_vector(rng, rig.numExpression(), 0.5);
        for (Index i = 0; i < p.displacement.size(); ++i) p.displacement.data()[i] = 0.01 * rng.normal();
        const Pose q = random_pose(rig, rng, 0.4);
        const Points rest = shape_template(rig, p, q);
        shapeErr = std::max(shapeErr, (rest - oracle::shape_template_loop(rig, p, q)).cwiseAbs().maxCoeff());
        const Points joints = regress_joints(rig, rest);
        jointErr = std::max(jointErr, (joints - oracle::regress_joints_loop(rig, rest)).cwiseAbs().maxCoeff());
        const PosedMesh m = skin(rig, rest, joints, q);
        const auto ref = oracle::skin_homogeneous(rig, rest, joints, q);
        skinErr = std::max({skinErr, (m.vertices - ref.vertices).cwiseAbs().maxCoeff(),
                            (m.joints - ref.joints).cwiseAbs().maxCoeff()});
    }
    return {shapeErr <= 1e-10 && jointErr <= 1e-10 && skinErr <= 1e-9,
            fmt("shape %.2g, joints %.2g, skinning %.2g (max abs vs scalar oracles)", shapeErr, jointErr, skinErr)};
}

Outcome blend_linearity() {
    const TemplateRig& rig = humanoid();
    Rng rng(103);
    const Pose q = Pose::identity(rig.numJoints());
    AvatarParams a = AvatarParams::zeros(rig), b = a, sum = a;
    a.beta = random_vector(rng, rig.numShape());
    b.beta = random_vector(rng, rig.numShape());
    a.psi = random_vector(rng, rig.numExpression());
    b.psi = random_vector(rng, rig.numExpression());
    sum.beta = a.beta + b.beta;
    sum.psi = a.psi + b.psi;
    const Points lhs = shape_template(rig, sum, q) - rig.templateVertices;
    const Points rhs = (shape_template(rig, a, q) - rig.templateVertices) + (shape_template(rig, b, q) - rig.templateVertices);
    const double err = (lhs - rhs).cwiseAbs().maxCoeff();
    return {err <= 1e-12, fmt("superposition error %.3g", err)};
}

Outcome body_jacobian() {
    // Random 50-vertex, 4-joint rigs.
    Rng rng(104);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        TemplateRig rig;
        const int V = 50, K = 4;
        rig.templateVertices = Points(V, 3);
        for (Index i = 0; i < rig.templateVertices.size(); ++i) rig.templateVertices.data()[i] = rng.normal();
        rig.faces = Triangles(V - 2, 3);
        for (int f = 0; f < V - 2; ++f) rig.faces.row(f) << f, f + 1, f + 2;
        rig.shapeBasis = Matrix(3 * V, 3);
        for (Index i = 0; i < rig.shapeBasis.size(); ++i) rig.shapeBasis.data()[i] = 0.1 * rng.normal();
        rig.expressionBasis = Matrix(3 * V, 2);
        for (Index i = 0; i < rig.expressionBasis.size(); ++i) rig.expressionBasis.data()[i] = 0.1 * rng.normal();
        rig.jointRegressor = Matrix(K, V);
        rig.skinWeights = Matrix(V, K);
        for (Index i = 0; i < rig.jointRegressor.size(); ++i) rig.jointRegressor.data()[i] = rng.uniform();
        for (Index i = 0; i < rig.skinWeights.size(); ++i) rig.skinWeights.data()[i] = rng.uniform();
        for (int j = 0; j < K; ++j) rig.jointRegressor.row(j) /= rig.jointRegressor.row(j).sum();
        for (int v = 0; v < V; ++v) rig.skinWeights.row(v) /= rig.skinWeights.row(v).sum();
        rig.parents = {-1, 0, 1, 1};
        rig.uv = Points2D::Constant(V, 2, 0.5);
        rig.validate();

        AvatarParams p = AvatarParams::zeros(rig, 4, 4);
        p.beta = random_vector(rng, 3, 0.3);
        const Pose q = random_pose(rig, rng, 0.5);
        const Points weights = Points::NullaryExpr(V, 3, [&] { return rng.normal(); });
        auto objective = [&](const AvatarParams& x) { return (pose_avatar(rig, x, q).vertices.cwiseProduct(weights)).sum(); };

        const PosedMesh posed = pose_avatar(rig, p, q);
        const GeometryGrad g = shape_vjp(rig, skin_vjp(rig, posed, weights));
        const Vector fdBeta = oracle::finite_difference(
            [&](const Vector& b) {
                AvatarParams x = p;
                x.beta = b;
                return objective(x);
            },
            p.beta, 1e-5);
        Vector d0(p.displacement.size());
        for (Index i = 0; i < d0.size(); ++i) d0[i] = p.displacement.data()[i];
        const Vector fdDelta = oracle::finite_difference(
            [&](const Vector& d) {
                AvatarParams x = p;
                std::copy(d.data(), d.data() + d.size(), x.displacement.data());
                return objective(x);
            },
            d0, 1e-5);
        const Vector gDelta = Eigen::Map<const Vector>(g.displacement.data(), g.displacement.size());
        worst = std::max({worst, oracle::relative_error(g.beta, fdBeta), oracle::relative_error(gDelta, fdDelta)});
    }
    return {worst <= 1e-3, fmt("max relative error vs central differences %.3g", worst)};
}

// ---------------------------------------------------------------- criterion 2

Outcome grad_shape(const ValidationOptions& o) {
    Rng rng(201);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Vector beta = random_vector(rng, 10);
        const Vector fd = oracle::finite_difference([&](const Vector& b) { return o.shapeReg(b).loss; }, beta, 1e-5);
        worst = std::max(worst, oracle::relative_error(o.shapeReg(beta).grad, fd));
    }
    return {worst <= 1e-6, fmt("20 instances, max relative error %.3g (tol 1e-6)", worst)};
}

Outcome grad_laplacian() {
    Rng rng(202);
    double worst = 0.0, lossErr = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto [mesh, faces] = random_grid(rng, 4 + trial % 4, 4 + trial % 3, 0.3);
        const Adjacency adj = mesh_adjacency(faces, static_cast<int>(mesh.rows()));
        Vector x = Eigen::Map<const Vector>(mesh.data(), mesh.size());
        auto loss = [&](const Vector& v) { return laplacian_reg(Eigen::Map<const Points>(v.data(), mesh.rows(), 3), adj).loss; };
        const VertexLoss l = laplacian_reg(mesh, adj);
        const Vector g = Eigen::Map<const Vector>(l.grad.data(), l.grad.size());
        worst = std::max(worst, oracle::relative_error(g, oracle::finite_difference(loss, x, 1e-5)));
        lossErr = std::max(lossErr, std::abs(l.loss - oracle::laplacian_loss(mesh, faces)) / std::max(1.0, l.loss));
    }
    return {worst <= 1e-4 && lossErr <= 1e-12,
            fmt("20 instances, max relative gradient error %.3g (tol 1e-4), loss vs scalar oracle %.2g", worst, lossErr)};
}

// Pushes lips through each other and eyeballs into the forehead, keeping every
// indicator a safe margin away from its switching point.
std::optional<Points> perturbed_face(const TemplateRig& rig, Rng& rng, double margin) {
    const FacialSets& fs = rig.facial;
    Points m = rig.templateVertices;
    const Vec3 up = fs.headUp.normalized();
    for (const auto& [u, l] : fs.lipPairs) {
        const double gap = (m.row(u) - m.row(l)).dot(up.transpose());
        m.row(u) -= rng.uniform(0.3, 1.7) * gap * up.transpose();
        m.row(u) += 1e-3 * Vec3(rng.normal(), 0, rng.normal()).transpose();
    }
    for (int e : fs.eyeball) {
        int best = fs.forehead.front();
        for (int f : fs.forehead)
            if ((m.row(e) - m.row(f)).squaredNorm() < (m.row(e) - m.row(best)).squaredNorm()) best = f;
        const Vec3 d = m.row(e) - m.row(best);
        const double target = rng.uniform(0.4, 1.6) * fs.eyeballRadius;
        m.row(e) = m.row(best) + (target / d.norm()) * d.transpose();
    }
    for (const auto& [u, l] : fs.lipPairs)
        if (std::abs((m.row(u) - m.row(l)).dot(up.transpose())) < margin) return std::nullopt;
    for (int e : fs.eyeball) {
        std::vector<double> d2;
        for (int f : fs.forehead) d2.push_back((m.row(e) - m.row(f)).squaredNorm());
        std::sort(d2.begin(), d2.end());
        if (std::abs(d2[0] - fs.eyeballRadius * fs.eyeballRadius) < margin) return std::nullopt;
        if (d2.size() > 1 && d2[1] - d2[0] < margin) return std::nullopt;
    }
    return m;
}

Outcome grad_face() {
    const TemplateRig& rig = humanoid();
    Rng rng(203);
    std::vector<int> facial;
    for (const auto& [u, l] : rig.facial.lipPairs) facial.insert(facial.end(), {u, l});
    facial.insert(facial.end(), rig.facial.eyeball.begin(), rig.facial.eyeball.end());
    facial.insert(facial.end(), rig.facial.forehead.begin(), rig.facial.forehead.end());
    std::sort(facial.begin(), facial.end());
    facial.erase(std::unique(facial.begin(), facial.end()), facial.end());

    double worst = 0.0, lossErr = 0.0, stray = 0.0;
    int instances = 0, attempts = 0, active = 0;
    while (instances < 20 && attempts < 400) {
        ++attempts;
        const auto mesh = perturbed_face(rig, rng, 1e-6);
        if (!mesh) continue;
        const VertexLoss l = face_reg(*mesh, rig.facial);
        if (l.loss <= 0.0) continue;
        ++instances;
        Vector x(3 * facial.size()), g(3 * facial.size());
        for (std::size_t i = 0; i < facial.size(); ++i)
            for (int c = 0; c < 3; ++c) {
                x[3 * i + c] = (*mesh)(facial[i], c);
                g[3 * i + c] = l.grad(facial[i], c);
            }
        auto loss = [&](const Vector& v) {
            Points m = *mesh;
            for (std::size_t i = 0; i < facial.size(); ++i)
                for (int c = 0; c < 3; ++c) m(facial[i], c) = v[3 * i + c];
            return face_reg(m, rig.facial).loss;
        };
        worst = std::max(worst, oracle::relative_error(g, oracle::finite_difference(loss, x, 1e-7)));
        lossErr = std::max(lossErr, std::abs(l.loss - oracle::face_loss(*mesh, rig.facial)) / l.loss);
        for (Index v = 0; v < mesh->rows(); ++v)
            if (!std::binary_search(facial.begin(), facial.end(), static_cast<int>(v))) stray = std::max(stray, l.grad.row(v).norm());
        for (Index v = 0; v < l.grad.rows(); ++v) active += l.grad.row(v).norm() > 0 ? 1 : 0;
    }
    return {instances >= 20 && worst <= 1e-3 && lossErr <= 1e-12 && stray == 0.0,
            fmt("%g instances, max relative error %.3g (tol 1e-3), loss vs oracle %.2g", instances, worst, lossErr) +
                (stray == 0.0 ? "" : ", gradient outside facial sets")};
}

struct RenderScene {
    PosedMesh mesh;
    AvatarParams params;
    Camera camera;
};

RenderScene random_scene(Rng& rng, int size) {
    const TemplateRig& rig = humanoid();
    RenderScene s;
    s.params = reference_avatar(rig, 32, 32, rng.next());
    s.mesh = pose_avatar(rig, s.params, random_pose(rig, rng, 0.2));
    CameraSettings cs;
    cs.width = cs.height = size;
    const CameraMode mode = rng.uniform() < 0.3 ? CameraMode::Head : CameraMode::FullBody;
    s.camera = sample_camera(rng, mode, framing_from_mesh(rig, s.mesh), cs);
    return s;
}

double weighted_sum(const Image& a, const Image& w) { return (a.data * w.data).sum(); }

Outcome grad_render_texture() {
    const TemplateRig& rig = humanoid();
    Rng rng(204);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const RenderScene s = random_scene(rng, 48);
        const RenderBuffers buf = rasterize(s.mesh, s.params, rig, s.camera);
        Image w(buf.width(), buf.height());
        for (Index i = 0; i < w.data.size(); ++i) w.data[i] = rng.normal();
        const RenderGrad g = render_backward(buf, s.mesh, s.params, rig, s.camera, w);
        const Vector dir = random_vector(rng, s.params.texture.data.size());
        const Vector x = s.params.texture.data.matrix();
        auto f = [&](const Vector& t) {
            AvatarParams p = s.params;
            p.texture.data = t.array();
            return weighted_sum(rasterize(s.mesh, p, rig, s.camera).color, w);
        };
        const double fd = oracle::directional_difference(f, x, dir, 1e-4);
        const double an = g.texture.data.matrix().dot(dir);
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-12}));
    }
    return {worst <= 1e-2, fmt("20 scenes, max relative error %.3g (tol 1e-2)", worst)};
}

bool shares_vertex(const Triangles& faces, int a, int b) {
    if (a == b) return true;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (faces(a, i) == faces(b, j)) return true;
    return false;
}

Outcome grad_render_vertices() {
    const TemplateRig& rig = humanoid();
    Rng rng(205);
    const double h = 1e-4;
    double worst = 0.0;
    std::size_t pixels = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const RenderScene s = random_scene(rng, 96);
        const RenderBuffers buf = rasterize(s.mesh, s.params, rig, s.camera);
        const Vector dir = random_vector(rng, s.mesh.vertices.size());
        auto shifted = [&](double t) {
            PosedMesh m = s.mesh;
            Eigen::Map<Vector>(m.vertices.data(), m.vertices.size()) += t * dir;
            return rasterize(m, s.params, rig, s.camera);
        };
        const RenderBuffers plus = shifted(h), minus = shifted(-h);
        // Bilinear sampling is only piecewise smooth: it kinks at texel
        // centres and where the border clamp starts.
        const Image& tex = s.params.texture;
        auto cell = [&](const Fragment& f) {
            const auto tri = rig.faces.row(f.triangle);
            Vec2 uv = Vec2::Zero();
            for (int k = 0; k < 3; ++k) uv += f.bary[k] * rig.uv.row(tri[k]).transpose();
            return std::pair(std::floor(uv.x() * tex.width - 0.5), std::floor(uv.y() * tex.height - 0.5));
        };
        // Interior pixels: the front triangle is locally connected to every
        // neighbour's front triangle and survives the perturbation, and the
        // sample stays inside one texel cell.
        Image w(buf.width(), buf.height());
        for (int y = 1; y + 1 < buf.height(); ++y)
            for (int x = 1; x + 1 < buf.width(); ++x) {
                const int tri = buf.fragment(x, y).triangle;
                if (tri < 0 || plus.fragment(x, y).triangle != tri || minus.fragment(x, y).triangle != tri) continue;
                const auto c = cell(buf.fragment(x, y));
                if (cell(plus.fragment(x, y)) != c || cell(minus.fragment(x, y)) != c) continue;
                bool interior = true;
                for (int dy = -1; dy <= 1 && interior; ++dy)
                    for (int dx = -1; dx <= 1 && interior; ++dx) {
                        const int n = buf.fragment(x + dx, y + dy).triangle;
                        interior = n >= 0 && shares_vertex(rig.faces, tri, n);
                    }
                if (!interior) continue;
                ++pixels;
                for (int c = 0; c < 3; ++c) w.at(x, y, c) = rng.normal();
            }
        const RenderGrad g = render_backward(buf, s.mesh, s.params, rig, s.camera, w);
        const double fd = (weighted_sum(plus.color, w) - weighted_sum(minus.color, w)) / (2 * h);
        const double an = Eigen::Map<const Vector>(g.vertices.data(), g.vertices.size()).dot(dir);
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-12}));
    }
    return {worst <= 1e-2, fmt("20 scenes, %g interior pixels, max relative error %.3g (tol 1e-2)",
                               static_cast<double>(pixels), worst)};
}

// ---------------------------------------------------------------- criterion 3

GuidanceContext plain_context() {
    GuidanceContext ctx;
    ctx.promptId = "target";
    ctx.cfgScale = 100.0;
    return ctx;
}

Image random_image(Rng& rng, int w, int h) {
    Image im(w, h);
    for (Index i = 0; i < im.data.size(); ++i) im.data[i] = rng.uniform();
    return im;
}

Outcome sds_cancellation() {
    Rng rng(301);
    const DiffusionSchedule sched = DiffusionSchedule::linear();
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Image target = random_image(rng, 16, 16), x = random_image(rng, 16, 16);
        const OraclePrior prior(sched, [&](const GuidanceContext&) { return std::vector<Image>{target}; });
        const int tau = static_cast<int>(rng.integer(0, sched.steps() - 1));
        const Image eps = standard_normal_image(rng, 16, 16);
        const SdsResult r = sds_grad(prior, x, plain_context(), tau, eps, sched);
        const double a = sched.alpha(tau);
        const Eigen::ArrayXd expect = sched.weight(tau) * std::sqrt(a) / std::sqrt(1 - a) * (x.data - target.data);
        worst = std::max(worst, oracle::relative_error(r.grad.data.matrix(), expect.matrix()));
    }
    return {worst <= 1e-9, fmt("100 draws, max relative error %.3g (tol 1e-9)", worst)};
}

// ---------------------------------------------------------------- criterion 4

Outcome sds_convergence() {
    Rng rng(401);
    const DiffusionSchedule sched = DiffusionSchedule::linear();
    Image target(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            for (int c = 0; c < 3; ++c) target.at(x, y, c) = 0.5 + 0.4 * std::sin(0.2 * x + 0.13 * y + 2.0 * c);
    const OraclePrior prior(sched, [&](const GuidanceContext&) { return std::vector<Image>{target}; });
    AvatarParams p;
    p.beta = p.psi = Vector(0);
    p.displacement = Points(0, 3);
    p.texture = Image(64, 64, 0.5);
    AdamState state = AdamState::zerosLike(p);
    AdamOptions opt;
    opt.lrTexture = 1e-2;
    ParamGrad g = ParamGrad::zerosLike(p);
    int step = 0;
    double err = mse(p.texture, target);
    for (; step < 2000 && err > 1e-3; ++step) {
        const int tau = sample_tau(rng, sched);
        g.texture = sds_grad(prior, p.texture, plain_context(), tau, standard_normal_image(rng, 64, 64), sched).grad;
        adam_step(p, g, state, opt);
        err = mse(p.texture, target);
    }
    return {err <= 1e-3, fmt("MSE %.3g after %g steps (target 1e-3 within 2000)", err, step)};
}

// ---------------------------------------------------------------- criterion 5

struct Agreement {
    double joints = 0.0, vertices = 0.0;
};

// Raster visibility against the ray-cast oracle over random pose/camera draws.
Agreement occlusion_agreement(const TemplateRig& rig, int resolution, int draws) {
    Rng rng(501);
    const std::vector<MotionClip> clips = {synth_motion(rig, MotionKind::WalkCycle, 32),
                                           synth_motion(rig, MotionKind::ArmRaise, 16),
                                           synth_motion(rig, MotionKind::Squat, 16)};
    const int head = rig.jointIndex("head");
    std::vector<int> k(rig.numJoints(), 50);
    k[head] = 20;
    const AvatarParams params = AvatarParams::zeros(rig);
    std::size_t jointAgree = 0, joints = 0, vertexAgree = 0, vertices = 0;
    CameraSettings cs;
    cs.width = cs.height = resolution;
    for (int trial = 0; trial < draws; ++trial) {
        const MotionClip& clip = clips[trial % clips.size()];
        Pose q = clip.frames[rng.integer(0, clip.length() - 1)];
        for (Index i = 3; i < q.jointRotations.size(); ++i) q.jointRotations.data()[i] += 0.15 * rng.normal();
        const PosedMesh mesh = pose_avatar(rig, params, q);
        const CameraMode mode = rng.uniform() < 0.3 ? CameraMode::Head : CameraMode::FullBody;
        const Camera cam = sample_camera(rng, mode, framing_from_mesh(rig, mesh), cs);
        const RenderBuffers buf = rasterize(mesh, params, rig, cam);
        const SkeletonMap sk = occluded_skeleton(mesh.joints, mesh, cam, buf, k, rig.parents);

        const std::vector<bool> truth = oracle::raycast_visible_vertices(mesh.vertices, rig.faces, cam);
        std::vector<bool> raster(mesh.vertices.rows(), false);
        for (int v : buf.visibleVertices) raster[v] = true;
        for (std::size_t v = 0; v < truth.size(); ++v) vertexAgree += truth[v] == raster[v];
        vertices += truth.size();
        const std::vector<bool> jointTruth = oracle::joint_visibility(mesh.joints, mesh.vertices, truth, k);
        for (std::size_t j = 0; j < jointTruth.size(); ++j) jointAgree += jointTruth[j] == sk.visibility[j];
        joints += jointTruth.size();
    }
    return {static_cast<double>(jointAgree) / joints, static_cast<double>(vertexAgree) / vertices};
}

// Pixel-centre sampling misses vertices on edge-on triangles at silhouettes
// and keeps hidden vertices of triangles peeking past an occluder; both bands
// shrink with mesh and image resolution, so the comparison is judged on a
// finely polygonized copy of the humanoid. The desk mesh is reported too.
Outcome occlusion() {
    HumanoidOptions fine;
    fine.gridSpacing = 0.008;
    const Agreement a = occlusion_agreement(make_humanoid(fine), 2048, 100);
    const Agreement desk = occlusion_agreement(humanoid(), 256, 100);
    return {a.joints >= 0.95 && a.vertices >= 0.99,
            fmt("100 draws, 8 mm mesh at 2048 px: joint agreement %.4f (>= 0.95), vertex agreement %.4f (>= 0.99); "
                "desk mesh at 256 px: joints %.4f, vertices %.4f",
                a.joints, a.vertices, desk.joints, desk.vertices)};
}

Outcome depth_correctness() {
    const TemplateRig& rig = humanoid();
    Rng rng(502);
    double worst = 0.0;
    int checked = 0;
    for (int trial = 0; trial < 3; ++trial) {
        const RenderScene s = random_scene(rng, 24);
        const RenderBuffers buf = rasterize(s.mesh, s.params, rig, s.camera);
        for (int y = 0; y < buf.height(); ++y)
            for (int x = 0; x < buf.width(); ++x) {
                const double d = buf.depth[static_cast<std::size_t>(y) * buf.width() + x];
                if (!std::isfinite(d)) continue;
                ++checked;
                const double ref = oracle::pixel_depth(s.mesh.vertices, rig.faces, s.camera, x, y);
                worst = std::max(worst, d - ref);  // recorded fragment may not be behind any hit
            }
    }
    return {worst <= 1e-9, fmt("%g covered pixels, max recorded-minus-nearest depth %.3g", checked, worst)};
}

Outcome mask_algebra() {
    const TemplateRig& rig = humanoid();
    Rng rng(503);
    for (int trial = 0; trial < 10; ++trial) {
        const RenderScene s = random_scene(rng, 64);
        const RenderBuffers b = rasterize(s.mesh, s.params, rig, s.camera);
        for (int y = 0; y < b.height(); ++y)
            for (int x = 0; x < b.width(); ++x) {
                if (b.faceMask(x, y) && !b.bodyMask(x, y)) return {false, "face mask outside body mask"};
                if (b.nonFaceMask(x, y) != (b.bodyMask(x, y) && !b.faceMask(x, y))) return {false, "non-face mask mismatch"};
            }
    }
    return {true, "10 scenes: nonFace = body AND NOT face, face within body"};
}

Outcome camera_distribution() {
    const TemplateRig& rig = humanoid();
    Rng rng(504);
    const PosedMesh mesh = pose_avatar(rig, AvatarParams::zeros(rig), Pose::identity(rig.numJoints()));
    const CameraFraming framing = framing_from_mesh(rig, mesh);
    const int n = 10000, bins = 20;
    std::vector<double> count(bins, 0.0);
    for (int i = 0; i < n; ++i) {
        const Camera c = sample_camera(rng, CameraMode::FullBody, framing);
        const Vec3 d = c.position - c.lookAt;
        double az = std::atan2(d.x(), d.z());
        if (az < 0) az += 2 * kPi;
        count[std::min(bins - 1, static_cast<int>(az / (2 * kPi) * bins))] += 1;
    }
    double chi2 = 0.0;
    for (double c : count) chi2 += (c - n / bins) * (c - n / bins) / (n / bins);
    const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(bins - 1), chi2));

    const int headJoint = rig.jointIndex("head");
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Camera c = sample_camera(rng, CameraMode::Head, framing);
        const auto px = c.project(mesh.joints.row(headJoint).transpose());
        worst = std::max({worst, std::abs(px.x() / c.width - 0.5), std::abs(px.y() / c.height - 0.5)});
    }
    return {p > 0.01 && worst <= 0.1, fmt("azimuth chi-squared p = %.3f (> 0.01); head joint max offset %.3f of frame (<= 0.1)", p, worst)};
}

// ---------------------------------------------------------------- criterion 6

Outcome retarget_identity() {
    const TemplateRig& rig = humanoid();
    const MotionClip clip = synth_motion(rig, MotionKind::WalkCycle, 32);
    const PosedMesh canon = pose_avatar(rig, AvatarParams::zeros(rig), Pose::identity(rig.numJoints()));
    const RetargetResult r = retarget(clip, rig, canon, canon.joints);
    bool zero = true;
    for (const Pose& p : r.residual) zero = zero && p.rootTranslation.isZero(0.0) && p.jointRotations.isZero(0.0);
    return {zero && r.clip.frames == clip.frames, zero ? "residual exactly zero" : "nonzero residual"};
}

Outcome retarget_widened() {
    const RetargetFixture fx = widened_torso_fixture();
    const PosedMesh canon = pose_avatar(*fx.rig, fx.target, Pose::identity(fx.rig->numJoints()));
    const RetargetResult r = retarget(fx.clip, *fx.rig, canon, canon.joints);
    int before = 0, after = 0;
    auto count = [&](const Pose& q) {
        // Capsules follow the posed torso; the count itself is the brute-force oracle.
        const PosedMesh m = pose_avatar(*fx.rig, fx.target, q);
        const PenetrationProxies proxies = fit_proxies(*fx.rig, m);
        std::vector<int> limb = proxies.leftLimb;
        limb.insert(limb.end(), proxies.rightLimb.begin(), proxies.rightLimb.end());
        return oracle::penetration_count(m.vertices, limb, proxies.capsules);
    };
    std::vector<double> src, dst;
    bool additive = true;
    for (std::size_t i = 0; i < fx.clip.length(); ++i) {
        before += count(fx.clip.frames[i]);
        after += count(r.clip.frames[i]);
        for (int c : {0, 2}) {
            src.push_back(fx.clip.frames[i].rootTranslation[c]);
            dst.push_back(r.clip.frames[i].rootTranslation[c]);
        }
        additive = additive && r.clip.frames[i] == add_poses(fx.clip.frames[i], r.residual[i]);
    }
    const double corr = oracle::correlation(src, dst);
    return {before > 0 && after == 0 && corr >= 0.99 && additive && r.converged(),
            fmt("penetrations %g -> %g, root correlation %.4f", before, after, corr) + (additive ? ", additive" : ", NOT additive")};
}

Outcome retarget_idempotent() {
    const RetargetFixture fx = widened_torso_fixture();
    const PosedMesh canon = pose_avatar(*fx.rig, fx.target, Pose::identity(fx.rig->numJoints()));
    const RetargetResult once = retarget(fx.clip, *fx.rig, canon, canon.joints);
    const RetargetResult twice = retarget(once.clip, *fx.rig, canon, canon.joints);
    bool zero = true;
    for (const Pose& p : twice.geometryResidual) zero = zero && p.jointRotations.isZero(0.0);
    const RetargetResult again = retarget(fx.clip, *fx.rig, canon, canon.joints);
    bool same = again.clip == once.clip;
    for (std::size_t i = 0; i < once.residual.size(); ++i) same = same && again.residual[i] == once.residual[i];
    return {zero && same, std::string(zero ? "no additional geometry residual" : "extra geometry residual") +
                              (same ? ", deterministic" : ", NOT deterministic")};
}

// ---------------------------------------------------------------- criterion 7

Outcome masked_sequence() {
    const TemplateRig& rig = humanoid();
    Rng rng(701);
    const DiffusionSchedule sched = DiffusionSchedule::linear();
    const AvatarParams current = AvatarParams::zeros(rig, 64, 64, 0.3);
    const auto shared = std::make_shared<const TemplateRig>(rig);
    const Priors priors = ground_truth_priors(shared, reference_avatar(rig), sched);
    const MotionClip clip = synth_motion(rig, MotionKind::WalkCycle, 16);

    const int l = 8;
    GuidanceContext ctx = plain_context();
    ctx.clipLength = l;
    std::vector<Image> frames;
    std::vector<Mask> masks, ones;
    std::vector<RenderBuffers> buffers;
    std::vector<PosedMesh> meshes;
    const PosedMesh mid = pose_avatar(rig, current, clip.frames[l / 2]);
    const Camera cam = orbit_camera(CameraMode::Head, 0.3, 0.1, framing_from_mesh(rig, mid));
    for (int f = 0; f < l; ++f) {
        meshes.push_back(pose_avatar(rig, current, clip.frames[f]));
        buffers.push_back(rasterize(meshes.back(), current, rig, cam));
        frames.push_back(buffers.back().color);
        masks.push_back(buffers.back().nonFaceMask);
        ones.emplace_back(64, 64, true);
        ctx.views.push_back({cam, clip.frames[f]});
    }
    std::vector<Image> eps;
    for (int f = 0; f < l; ++f) eps.push_back(standard_normal_image(rng, 64, 64));
    const int tau = 500;
    const auto masked = masked_seq_sds_grad(*priors.video, frames, masks, ctx, tau, eps, sched);
    const auto open = masked_seq_sds_grad(*priors.video, frames, ones, ctx, tau, eps, sched);

    std::size_t facePixels = 0, exclusiveTexels = 0;
    for (int f = 0; f < l; ++f) {
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                const bool keep = masks[f](x, y);
                facePixels += buffers[f].faceMask(x, y);
                for (int c = 0; c < 3; ++c) {
                    const double g = masked[f].grad.at(x, y, c);
                    if (!keep && g != 0.0) return {false, "nonzero gradient outside the mask"};
                    if (keep && g != open[f].grad.at(x, y, c)) return {false, "masking altered a non-facial gradient"};
                }
            }
        // Texels reached only through facial pixels must receive nothing.
        const RenderGrad tg = render_backward(buffers[f], meshes[f], current, rig, cam, masked[f].grad);
        Image reachBody(64, 64), reachFace(64, 64);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                if (!buffers[f].bodyMask(x, y)) continue;
                (buffers[f].faceMask(x, y) ? reachFace : reachBody).pixel(x, y) = 1.0;
            }
        const Image body = render_backward(buffers[f], meshes[f], current, rig, cam, reachBody).texture;
        const Image face = render_backward(buffers[f], meshes[f], current, rig, cam, reachFace).texture;
        for (Index i = 0; i < tg.texture.data.size(); ++i) {
            if (face.data[i] != 0.0 && body.data[i] == 0.0) {
                ++exclusiveTexels;
                if (tg.texture.data[i] != 0.0) return {false, "facial texel received a gradient"};
            }
        }
    }
    return {facePixels > 0 && exclusiveTexels > 0,
            fmt("%g facial pixels and %g face-only texel channels, all with zero gradient; non-facial pixels identical "
                "to the unmasked gradient",
                facePixels, exclusiveTexels)};
}

// ---------------------------------------------------------------- criterion 8

struct DeskRun {
    RunConfig config;
    RunAssets assets;
    TrainResult first, second;
    double mse = 0.0;
    double seconds = 0.0;
};

const DeskRun& desk_run() {
    static const DeskRun run = [] {
        DeskRun d;
        d.config = desk_run_config();
        d.assets = load_run_assets(d.config);
        const auto t0 = std::chrono::steady_clock::now();
        d.first = train(d.config.training, *d.assets.rig, d.assets.initial, d.assets.source, d.assets.priors);
        d.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        d.second = train(d.config.training, *d.assets.rig, d.assets.initial, d.assets.source, d.assets.priors);
        d.mse = evaluate_render_mse(*d.assets.rig, d.first.params, *d.assets.truth, d.first.motion, d.config.training.camera);
        return d;
    }();
    return run;
}

Outcome desk_mse() {
    const DeskRun& d = desk_run();
    const double initial =
        evaluate_render_mse(*d.assets.rig, d.assets.initial, *d.assets.truth, d.assets.source, d.config.training.camera);
    return {d.mse <= 5e-3, fmt("final render MSE %.3g (<= 5e-3; initial %.3g), one run %.1f s", d.mse, initial, d.seconds)};
}

Outcome desk_trend() {
    const DeskRun& d = desk_run();
    const std::vector<double> blocks = block_means(per_step_loss(d.first.log), 50, 50);
    bool ok = blocks.size() >= 2;
    std::string text;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i > 0 && blocks[i] > blocks[i - 1]) ok = false;
        text += (i ? " " : "") + fmt("%.4g", blocks[i]);
    }
    return {ok, "window-50 means from step 50: " + text};
}

Outcome desk_determinism() {
    const DeskRun& d = desk_run();
    const auto& a = d.first;
    const auto& b = d.second;
    const bool same = a.params.beta == b.params.beta && a.params.psi == b.params.psi &&
                      a.params.displacement == b.params.displacement && (a.params.texture.data == b.params.texture.data).all() &&
                      a.motion == b.motion && a.log == b.log;
    return {same, same ? "two runs bit-identical (params, motion, log)" : "runs differ"};
}

Outcome desk_runtime() {
    const DeskRun& d = desk_run();
    return {d.seconds < 300.0, fmt("%.1f s per run (< 300 s)", d.seconds)};
}

// ---------------------------------------------------------------- criterion 9

Outcome text_round_trips() {
    const TemplateRig& rig = humanoid();
    std::vector<std::string> failed;
    const std::string r1 = rig_to_string(rig);
    if (rig_to_string(rig_from_string(r1)) != r1) failed.push_back("rig");
    AvatarParams p = reference_avatar(rig, 16, 8, 3);
    Rng rng(901);
    p.beta = random_vector(rng, rig.numShape());
    p.psi = random_vector(rng, rig.numExpression());
    for (Index i = 0; i < p.displacement.size(); ++i) p.displacement.data()[i] = 0.01 * rng.normal();
    const std::string p1 = params_to_string(p);
    if (params_to_string(params_from_string(p1)) != p1) failed.push_back("params");
    MotionClip clip = synth_motion(rig, MotionKind::WalkCycle, 12);
    clip.frames[3].jointRotations(5, 1) = 0.1 + 1e-17;
    clip.label = "walk with odd spacing  ";
    const std::string m1 = motion_to_string(clip);
    if (motion_to_string(motion_from_string(m1)) != m1 || !(motion_from_string(m1) == clip)) failed.push_back("motion");
    RunConfig cfg = desk_run_config();
    cfg.training.learningRateTexture = 0.1 + 0.2;
    const std::string c1 = run_config_to_string(cfg);
    if (run_config_to_string(parse_run_config(c1)) != c1) failed.push_back("config");
    const std::string o1 = mesh_to_obj(pose_avatar(rig, p, clip.frames[5]).vertices, rig);
    if (obj_to_string(obj_from_string(o1)) != o1) failed.push_back("obj");
    const Image im = random_image(rng, 13, 7);
    const std::string ppm = image_to_ppm(im), png = image_to_png(im);
    if (image_to_ppm(image_from_ppm(ppm)) != ppm) failed.push_back("ppm");
    if (image_to_png(image_from_png(png)) != png) failed.push_back("png");
    LogRecord rec;
    rec.step = 7;
    rec.branch = "t2i";
    rec.tau = 123;
    rec.sds = 1.0 / 3.0;
    rec.total = 2e-300;
    rec.gradTexture = 1e300;
    const std::string l1 = log_record_json(rec);
    if (log_record_json(log_record_from_json(l1)) != l1 || !(log_record_from_json(l1) == rec)) failed.push_back("log");
    std::string text;
    for (const auto& f : failed) text += (text.empty() ? "" : ", ") + f;
    return {failed.empty(), failed.empty() ? "rig, params, motion, config, obj, ppm, png, log: save-load-save identical"
                                           : "failed: " + text};
}

Outcome checkpoint_split(const std::filesystem::path& dir) {
    RunConfig cfg = desk_run_config();
    cfg.training.totalSteps = 24;
    const RunAssets a = load_run_assets(cfg);
    Trainer whole(cfg.training, *a.rig, a.initial, a.source, a.priors);
    whole.run();

    TrainingConfig half = cfg.training;
    half.totalSteps = 11;
    Trainer first(half, *a.rig, a.initial, a.source, a.priors);
    first.run();
    const auto path = dir / "split.ckpt";
    save_checkpoint(first.state(), path);
    const std::string bytes = read_file(path);
    TrainState loaded = load_checkpoint(path);
    save_checkpoint(loaded, dir / "split2.ckpt");
    const bool bytesSame = read_file(dir / "split2.ckpt") == bytes;

    Trainer resumed(cfg.training, *a.rig, std::move(loaded), a.priors);
    resumed.run();
    const TrainState& x = whole.state();
    const TrainState& y = resumed.state();
    const bool same = x.step == y.step && x.params.beta == y.params.beta && x.params.psi == y.params.psi &&
                      x.params.displacement == y.params.displacement &&
                      (x.params.texture.data == y.params.texture.data).all() && x.adam.m == y.adam.m &&
                      x.adam.v == y.adam.v && x.adam.step == y.adam.step && x.motion == y.motion && x.rng == y.rng &&
                      x.log == y.log && x.residual == y.residual && x.warnings == y.warnings;
    return {same && bytesSame, std::string(bytesSame ? "checkpoint bytes stable" : "checkpoint bytes changed") +
                                   (same ? "; 11+13 split run equals 24-step run bit-exactly" : "; split run diverged")};
}

struct Check {
    const char* name;
    int criterion;
    std::function<Outcome(const ValidationOptions&, const std::filesystem::path&)> run;
};

std::vector<Check> checks() {
    auto plain = [](Outcome (*f)()) {
        return [f](const ValidationOptions&, const std::filesystem::path&) { return f(); };
    };
    return {
        {"lbs_identity", 1, plain(lbs_identity)},
        {"lbs_rigid_root_isometry", 1, plain(lbs_rigid_root)},
        {"body_scalar_oracles", 0, plain(body_oracles)},
        {"blend_shape_linearity", 0, plain(blend_linearity)},
        {"body_jacobian_fd", 0, plain(body_jacobian)},
        {"grad_shape_fd", 2, [](const ValidationOptions& o, const std::filesystem::path&) { return grad_shape(o); }},
        {"grad_laplacian_fd", 2, plain(grad_laplacian)},
        {"grad_face_fd", 2, plain(grad_face)},
        {"grad_render_texture_fd", 2, plain(grad_render_texture)},
        {"grad_render_vertices_fd", 2, plain(grad_render_vertices)},
        {"sds_oracle_cancellation", 3, plain(sds_cancellation)},
        {"sds_image_convergence", 4, plain(sds_convergence)},
        {"occlusion_vs_raycast", 5, plain(occlusion)},
        {"depth_nearest_fragment", 0, plain(depth_correctness)},
        {"mask_algebra", 0, plain(mask_algebra)},
        {"camera_distribution", 0, plain(camera_distribution)},
        {"retarget_identity_zero", 6, plain(retarget_identity)},
        {"retarget_widened_torso", 6, plain(retarget_widened)},
        {"retarget_idempotent_deterministic", 0, plain(retarget_idempotent)},
        {"masked_sequence_sds", 7, plain(masked_sequence)},
        {"desk_run_mse", 8, plain(desk_mse)},
        {"desk_run_loss_trend", 8, plain(desk_trend)},
        {"desk_run_determinism", 8, plain(desk_determinism)},
        {"desk_run_runtime", 8, plain(desk_runtime)},
        {"format_round_trips", 9, plain(text_round_trips)},
        {"checkpoint_split_run", 9, [](const ValidationOptions&, const std::filesystem::path& d) { return checkpoint_split(d); }},
    };
}

}  // namespace

RetargetFixture widened_torso_fixture() {
    RetargetFixture fx;
    fx.rig = std::make_shared<const TemplateRig>(make_humanoid());
    fx.target = AvatarParams::zeros(*fx.rig);
    fx.target.displacement = torso_widening(*fx.rig, 1.8);
    SynthOptions o;
    o.amplitude = -1.5;  // arms swing down through the widened torso
    fx.clip = synth_motion(*fx.rig, MotionKind::ArmRaise, 16, o);
    fx.clip.label = "arms down while drifting";
    for (std::size_t i = 0; i < fx.clip.length(); ++i) {
        const double t = static_cast<double>(i) / fx.clip.frameRate;
        fx.clip.frames[i].rootTranslation = Vec3(0.05 * std::sin(4.0 * t), 0.0, 0.6 * t);
    }
    return fx;
}

ValidationOptions with_shape_grad_sign_error(ValidationOptions options) {
    options.shapeReg = [](const Vector& beta) {
        ShapeLoss s = shape_reg(beta);
        s.grad = -s.grad;
        return s;
    };
    return options;
}

std::vector<CheckResult> run_validation(const ValidationOptions& options) {
    namespace fs = std::filesystem;
    fs::path dir = options.scratchDir;
    if (dir.empty()) {
        dir = fs::temp_directory_path() / ("avatar_forge_validate_" + std::to_string(::getpid()));
    }
    fs::create_directories(dir);

    std::vector<CheckResult> out;
    for (const Check& c : checks()) {
        if (!options.criteria.empty() &&
            std::find(options.criteria.begin(), options.criteria.end(), c.criterion) == options.criteria.end())
            continue;
        if (c.criterion == 8 && !options.includeDeskRun) continue;
        CheckResult r;
        r.name = c.name;
        r.criterion = c.criterion;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const Outcome o = c.run(options, dir);
            r.passed = o.passed;
            r.detail = o.detail;
        } catch (const std::exception& e) {
            r.passed = false;
            r.detail = std::string("exception: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (options.onResult) options.onResult(r);
        out.push_back(std::move(r));
    }
    if (options.scratchDir.empty()) fs::remove_all(dir);
    return out;
}

std::string format_row(const CheckResult& r) {
    char head[96];
    std::snprintf(head, sizeof head, "%-4s %-36s %7.2fs  ", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds);
    return head + r.detail;
}

}  // namespace forge::validation
