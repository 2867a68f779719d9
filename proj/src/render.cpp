#include "forge/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace forge {

void Camera::validate() const {
    if (width <= 0 || height <= 0) throw InvalidInput("camera resolution must be positive");
    if (!(verticalFov > 0.0 && verticalFov < 3.1)) throw InvalidInput("camera fov out of range");
    if (!position.allFinite() || !lookAt.allFinite() || !up.allFinite()) throw InvalidInput("camera is not finite");
    const Vec3 f = lookAt - position;
    if (f.norm() < 1e-12) throw InvalidInput("camera position equals lookAt");
    if (f.normalized().cross(up).norm() < 1e-9) throw InvalidInput("camera up is parallel to view direction");
}

Mat3 Camera::basis() const {
    const Vec3 forward = (lookAt - position).normalized();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 trueUp = right.cross(forward);
    Mat3 b;
    b.col(0) = right;
    b.col(1) = trueUp;
    b.col(2) = forward;
    return b;
}

double Camera::focalPixels() const { return 0.5 * height / std::tan(0.5 * verticalFov); }

Eigen::Vector3d Camera::project(const Vec3& p) const {
    const Vec3 c = basis().transpose() * (p - position);
    const double f = focalPixels();
    return {0.5 * width + f * c.x() / c.z(), 0.5 * height - f * c.y() / c.z(), c.z()};
}

Vec3 Camera::rayDirection(double px, double py) const {
    const double f = focalPixels();
    const Vec3 local((px - 0.5 * width) / f, -(py - 0.5 * height) / f, 1.0);
    return basis() * local;
}

Eigen::Array3d sample_texture(const Image& texture, const Vec2& uv, Eigen::Array3d* dU, Eigen::Array3d* dV) {
    const int tw = texture.width, th = texture.height;
    const double x = uv.x() * tw - 0.5;
    const double y = uv.y() * th - 0.5;
    const double x0f = std::floor(x), y0f = std::floor(y);
    const double fx = x - x0f, fy = y - y0f;
    const auto clampi = [](double v, int hi) { return static_cast<int>(std::clamp(v, 0.0, static_cast<double>(hi))); };
    const int x0 = clampi(x0f, tw - 1), x1 = clampi(x0f + 1, tw - 1);
    const int y0 = clampi(y0f, th - 1), y1 = clampi(y0f + 1, th - 1);
    const Eigen::Array3d c00 = texture.pixel(x0, y0), c10 = texture.pixel(x1, y0);
    const Eigen::Array3d c01 = texture.pixel(x0, y1), c11 = texture.pixel(x1, y1);
    if (dU) *dU = ((1 - fy) * (c10 - c00) + fy * (c11 - c01)) * tw;
    if (dV) *dV = ((1 - fx) * (c01 - c00) + fx * (c11 - c10)) * th;
    return (1 - fy) * ((1 - fx) * c00 + fx * c10) + fy * ((1 - fx) * c01 + fx * c11);
}

namespace {

struct TexelWeights {
    int x[2], y[2];
    double wx[2], wy[2];
};

TexelWeights texel_weights(const Image& texture, const Vec2& uv) {
    const double x = uv.x() * texture.width - 0.5;
    const double y = uv.y() * texture.height - 0.5;
    const double x0f = std::floor(x), y0f = std::floor(y);
    const double fx = x - x0f, fy = y - y0f;
    const auto clampi = [](double v, int hi) { return static_cast<int>(std::clamp(v, 0.0, static_cast<double>(hi))); };
    TexelWeights t;
    t.x[0] = clampi(x0f, texture.width - 1);
    t.x[1] = clampi(x0f + 1, texture.width - 1);
    t.y[0] = clampi(y0f, texture.height - 1);
    t.y[1] = clampi(y0f + 1, texture.height - 1);
    t.wx[0] = 1 - fx;
    t.wx[1] = fx;
    t.wy[0] = 1 - fy;
    t.wy[1] = fy;
    return t;
}

Vec2 interpolate_uv(const TemplateRig& rig, int tri, const Vec3& b) {
    const auto f = rig.faces.row(tri);
    return b[0] * rig.uv.row(f[0]).transpose() + b[1] * rig.uv.row(f[1]).transpose() +
           b[2] * rig.uv.row(f[2]).transpose();
}

}  // namespace

RenderBuffers rasterize(const PosedMesh& mesh, const AvatarParams& params, const TemplateRig& rig, const Camera& camera) {
    camera.validate();
    params.checkCompatible(rig);
    if (mesh.vertices.rows() != rig.numVertices()) throw InvalidInput("mesh vertex count does not match rig");
    const int W = camera.width, H = camera.height;
    const Index V = mesh.vertices.rows();

    Points2D screen(V, 2);
    Vector depth(V);
    for (Index v = 0; v < V; ++v) {
        const Eigen::Vector3d p = camera.project(mesh.vertices.row(v).transpose());
        screen(v, 0) = p.x();
        screen(v, 1) = p.y();
        depth[v] = p.z();
    }

    RenderBuffers out;
    out.fragments.assign(static_cast<std::size_t>(W) * H, Fragment{});
    constexpr double kNear = 1e-6;

    for (Index t = 0; t < rig.numFaces(); ++t) {
        const int ia = rig.faces(t, 0), ib = rig.faces(t, 1), ic = rig.faces(t, 2);
        if (depth[ia] <= kNear || depth[ib] <= kNear || depth[ic] <= kNear) continue;
        const double ax = screen(ia, 0), ay = screen(ia, 1);
        const double bx = screen(ib, 0), by = screen(ib, 1);
        const double cx = screen(ic, 0), cy = screen(ic, 1);
        const double area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
        if (area == 0.0 || !std::isfinite(area)) continue;
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({ax, bx, cx}) - 0.5)));
        const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max({ax, bx, cx}) - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({ay, by, cy}) - 0.5)));
        const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max({ay, by, cy}) - 0.5)));
        const double invA = 1.0 / area;
        for (int py = y0; py <= y1; ++py) {
            const double sy = py + 0.5;
            for (int px = x0; px <= x1; ++px) {
                const double sx = px + 0.5;
                const double l0 = ((bx - sx) * (cy - sy) - (by - sy) * (cx - sx)) * invA;
                const double l1 = ((cx - sx) * (ay - sy) - (cy - sy) * (ax - sx)) * invA;
                const double l2 = ((ax - sx) * (by - sy) - (ay - sy) * (bx - sx)) * invA;
                if (l0 < 0 || l1 < 0 || l2 < 0) continue;
                const double q0 = l0 / depth[ia], q1 = l1 / depth[ib], q2 = l2 / depth[ic];
                const double qs = q0 + q1 + q2;
                const double z = 1.0 / qs;
                Fragment& frag = out.fragments[static_cast<std::size_t>(py) * W + px];
                if (!(z < frag.depth)) continue;
                frag.triangle = static_cast<int>(t);
                frag.bary = Vec3(q0, q1, q2) / qs;
                frag.depth = z;
            }
        }
    }

    std::vector<char> faceVertex(static_cast<std::size_t>(V), 0);
    for (int v : rig.facial.faceRegion) faceVertex[v] = 1;
    std::vector<char> visible(static_cast<std::size_t>(V), 0);

    out.color = Image(W, H, kBackground);
    out.depth.assign(static_cast<std::size_t>(W) * H, std::numeric_limits<double>::infinity());
    out.bodyMask = Mask(W, H);
    out.faceMask = Mask(W, H);
    out.nonFaceMask = Mask(W, H);
    for (int py = 0; py < H; ++py) {
        for (int px = 0; px < W; ++px) {
            const std::size_t idx = static_cast<std::size_t>(py) * W + px;
            const Fragment& frag = out.fragments[idx];
            if (frag.triangle < 0) continue;
            out.depth[idx] = frag.depth;
            out.color.pixel(px, py) = sample_texture(params.texture, interpolate_uv(rig, frag.triangle, frag.bary));
            out.bodyMask.set(px, py, 1);
            const auto f = rig.faces.row(frag.triangle);
            const bool face = faceVertex[f[0]] && faceVertex[f[1]] && faceVertex[f[2]];
            (face ? out.faceMask : out.nonFaceMask).set(px, py, 1);
            for (int k = 0; k < 3; ++k) visible[f[k]] = 1;
        }
    }
    for (Index v = 0; v < V; ++v)
        if (visible[v]) out.visibleVertices.push_back(static_cast<int>(v));
    return out;
}

RenderGrad render_backward(const RenderBuffers& buffers, const PosedMesh& mesh, const AvatarParams& params,
                           const TemplateRig& rig, const Camera& camera, const Image& pixelGrad) {
    if (pixelGrad.width != buffers.width() || pixelGrad.height != buffers.height())
        throw InvalidInput("pixel gradient shape does not match render");
    RenderGrad g;
    g.texture = Image(params.texture.width, params.texture.height, 0.0);
    g.vertices = Points::Zero(mesh.vertices.rows(), 3);
    const Image& tex = params.texture;

    for (int py = 0; py < buffers.height(); ++py) {
        for (int px = 0; px < buffers.width(); ++px) {
            const Fragment& frag = buffers.fragment(px, py);
            if (frag.triangle < 0) continue;
            const Eigen::Array3d gp = pixelGrad.pixel(px, py);
            if ((gp == 0.0).all()) continue;
            const Vec2 uv = interpolate_uv(rig, frag.triangle, frag.bary);

            const TexelWeights tw = texel_weights(tex, uv);
            for (int j = 0; j < 2; ++j)
                for (int i = 0; i < 2; ++i) g.texture.pixel(tw.x[i], tw.y[j]) += tw.wx[i] * tw.wy[j] * gp;

            Eigen::Array3d dU, dV;
            sample_texture(tex, uv, &dU, &dV);
            const double gu = (gp * dU).sum(), gv = (gp * dV).sum();
            const auto f = rig.faces.row(frag.triangle);
            double gb[3];
            for (int k = 0; k < 3; ++k) gb[k] = gu * rig.uv(f[k], 0) + gv * rig.uv(f[k], 1);

            // The barycentrics are the ray/plane intersection coordinates:
            // [-d, B-A, C-A] (s, b1, b2)^T = o - A.
            const Vec3 A = mesh.vertices.row(f[0]).transpose();
            const Vec3 B = mesh.vertices.row(f[1]).transpose();
            const Vec3 C = mesh.vertices.row(f[2]).transpose();
            Mat3 M;
            M.col(0) = -camera.rayDirection(px + 0.5, py + 0.5);
            M.col(1) = B - A;
            M.col(2) = C - A;
            const Vec3 y = M.transpose().partialPivLu().solve(Vec3(0.0, gb[1] - gb[0], gb[2] - gb[0]));
            if (!y.allFinite()) continue;
            for (int k = 0; k < 3; ++k) g.vertices.row(f[k]) -= frag.bary[k] * y.transpose();
        }
    }
    return g;
}

std::vector<int> nearest_vertices(const Points& vertices, const Vec3& point, int k) {
    const int V = static_cast<int>(vertices.rows());
    if (k < 1 || k > V) throw InvalidInput("neighbour count k must be in [1, V]");
    std::vector<double> d2(V);
    for (int v = 0; v < V; ++v) d2[v] = (vertices.row(v).transpose() - point).squaredNorm();
    std::vector<int> idx(V);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](int a, int b) { return d2[a] < d2[b] || (d2[a] == d2[b] && a < b); });
    idx.resize(k);
    return idx;
}

Eigen::Array3d bone_color(int joint) {
    // Evenly spaced hues, fully saturated.
    const double h = std::fmod(joint * 0.618033988749895, 1.0) * 6.0;
    const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
    switch (static_cast<int>(h)) {
        case 0: return {1, x, 0};
        case 1: return {x, 1, 0};
        case 2: return {0, 1, x};
        case 3: return {0, x, 1};
        case 4: return {x, 0, 1};
        default: return {1, 0, x};
    }
}

namespace {

void draw_segment(Image& img, const Vec2& a, const Vec2& b, double radius, const Eigen::Array3d& color) {
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x(), b.x()) - radius)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(a.x(), b.x()) + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y(), b.y()) - radius)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(a.y(), b.y()) + radius)));
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const Vec2 p(x + 0.5, y + 0.5);
            const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
            if ((p - (a + t * ab)).norm() <= radius) img.pixel(x, y) = color;
        }
    }
}

}  // namespace

SkeletonMap occluded_skeleton(const Points& jointsPosed, const PosedMesh& mesh, const Camera& camera,
                              const RenderBuffers& buffers, const std::vector<int>& k, const std::vector<int>& parents) {
    camera.validate();
    const int K = static_cast<int>(jointsPosed.rows());
    if (static_cast<int>(k.size()) != K || static_cast<int>(parents.size()) != K)
        throw InvalidInput("per-joint k and parents must have one entry per joint");
    std::vector<char> visible(static_cast<std::size_t>(mesh.vertices.rows()), 0);
    for (int v : buffers.visibleVertices) visible.at(v) = 1;

    SkeletonMap s;
    s.joints2d.resize(K, 2);
    s.visibility.assign(K, false);
    s.onScreen.assign(K, false);
    for (int j = 0; j < K; ++j) {
        const Vec3 p = jointsPosed.row(j).transpose();
        const Eigen::Vector3d q = camera.project(p);
        s.joints2d(j, 0) = q.x();
        s.joints2d(j, 1) = q.y();
        s.onScreen[j] = q.z() > 0 && q.x() >= 0 && q.x() < camera.width && q.y() >= 0 && q.y() < camera.height;
        int hits = 0;
        for (int v : nearest_vertices(mesh.vertices, p, k[j])) hits += visible[v];
        s.visibility[j] = 2 * hits > k[j];
    }

    s.boneImage = Image(camera.width, camera.height, 0.0);
    const double radius = std::max(1.0, camera.height / 96.0);
    for (int j = 0; j < K; ++j) {
        const int p = parents[j];
        if (p < 0 || !s.visibility[j] || !s.visibility[p]) continue;
        draw_segment(s.boneImage, s.joints2d.row(p).transpose(), s.joints2d.row(j).transpose(), radius, bone_color(j));
    }
    for (int j = 0; j < K; ++j)
        if (s.visibility[j])
            draw_segment(s.boneImage, s.joints2d.row(j).transpose(), s.joints2d.row(j).transpose(), 1.5 * radius,
                         Eigen::Array3d::Ones());
    return s;
}

SkeletonMap occluded_skeleton(const Points& jointsPosed, const PosedMesh& mesh, const Camera& camera,
                              const RenderBuffers& buffers, int k, const std::vector<int>& parents) {
    return occluded_skeleton(jointsPosed, mesh, camera, buffers, std::vector<int>(jointsPosed.rows(), k), parents);
}

CameraFraming framing_from_mesh(const TemplateRig& rig, const PosedMesh& mesh) {
    CameraFraming f;
    const Vec3 lo = mesh.vertices.colwise().minCoeff().transpose();
    const Vec3 hi = mesh.vertices.colwise().maxCoeff().transpose();
    f.bodyCenter = 0.5 * (lo + hi);
    f.bodyHeight = hi.y() - lo.y();

    const int head = rig.jointIndex("head");
    const std::vector<int> dominant = rig.dominantJoint();
    Vec3 hlo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hhi = -hlo;
    int count = 0;
    for (Index v = 0; v < mesh.vertices.rows(); ++v) {
        if (dominant[v] != head) continue;
        hlo = hlo.cwiseMin(mesh.vertices.row(v).transpose());
        hhi = hhi.cwiseMax(mesh.vertices.row(v).transpose());
        ++count;
    }
    if (count == 0) throw InvalidInput("rig has no head vertices");
    f.headJoint = mesh.joints.row(head).transpose();
    f.headSize = (hhi - hlo).maxCoeff();
    return f;
}

Camera orbit_camera(CameraMode mode, double azimuth, double elevation, const CameraFraming& framing,
                    const CameraSettings& settings) {
    Camera c;
    c.verticalFov = settings.verticalFov;
    c.width = settings.width;
    c.height = settings.height;
    const double halfTan = std::tan(0.5 * settings.verticalFov);
    double radius;
    if (mode == CameraMode::FullBody) {
        c.lookAt = framing.bodyCenter;
        radius = 0.5 * framing.bodyHeight / (settings.bodyFill * halfTan);
    } else {
        c.lookAt = framing.headJoint;
        radius = 0.5 * framing.headSize / (settings.headFill * halfTan);
    }
    const Vec3 dir(std::sin(azimuth) * std::cos(elevation), std::sin(elevation), std::cos(azimuth) * std::cos(elevation));
    c.position = c.lookAt + radius * dir;
    c.up = Vec3::UnitY();
    return c;
}

Camera sample_camera(Rng& rng, CameraMode mode, const CameraFraming& framing, const CameraSettings& settings) {
    const double azimuth = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double elevation = rng.uniform(settings.minElevation, settings.maxElevation);
    return orbit_camera(mode, azimuth, elevation, framing, settings);
}

}  // namespace forge
