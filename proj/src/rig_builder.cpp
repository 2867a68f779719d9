#include "forge/rig_builder.hpp"

#include "forge/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <tuple>

namespace forge {

namespace {

constexpr double kPi = std::numbers::pi;

const std::array<const char*, 24> kJointNames = {
    "pelvis",        "left_hip",       "right_hip",      "spine1",      "left_knee",   "right_knee",
    "spine2",        "left_ankle",     "right_ankle",    "spine3",      "left_foot",   "right_foot",
    "neck",          "left_collar",    "right_collar",   "head",        "left_shoulder", "right_shoulder",
    "left_elbow",    "right_elbow",    "left_wrist",     "right_wrist", "left_hand",   "right_hand"};
const std::array<int, 24> kParents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

enum Joint {
    Pelvis = 0, LHip, RHip, Spine1, LKnee, RKnee, Spine2, LAnkle, RAnkle, Spine3, LFoot, RFoot,
    Neck, LCollar, RCollar, Head, LShoulder, RShoulder, LElbow, RElbow, LWrist, RWrist, LHand, RHand
};

// One limb primitive: an elliptic tube from `a` to `b` with rounded ends,
// owned (skinned) by one joint. The body surface is the smooth union of all of them.
struct Segment {
    int owner;
    Vec3 a, b;
    std::vector<double> t;    // profile stations along the axis, in [0, 1]
    std::vector<Vec2> radii;  // per station, along (side, front) axes
    double jointT = 0.0;      // axial position of the owner joint
};

Segment tube(int owner, const Vec3& a, const Vec3& b, std::vector<double> t, std::vector<Vec2> radii, double jointT = 0.0) {
    return Segment{owner, a, b, std::move(t), std::move(radii), jointT};
}

std::vector<Segment> layout() {
    std::vector<Segment> s;
    const auto r2 = [](double x, double z) { return Vec2(x, z); };
    // Torso, neck and head.
    s.push_back(tube(Pelvis, {0, -0.10, 0}, {0, 0.10, 0}, {0, 0.5, 1}, {r2(.15, .10), r2(.16, .11), r2(.15, .10)}, 0.5));
    s.push_back(tube(Spine1, {0, 0.10, 0}, {0, 0.23, 0}, {0, .5, 1}, {r2(.15, .10), r2(.15, .105), r2(.15, .10)}));
    s.push_back(tube(Spine2, {0, 0.23, 0}, {0, 0.36, 0}, {0, .5, 1}, {r2(.15, .10), r2(.155, .10), r2(.16, .10)}));
    s.push_back(tube(Spine3, {0, 0.36, 0}, {0, 0.55, 0}, {0, .5, 1}, {r2(.16, .10), r2(.14, .09), r2(.07, .06)}));
    s.push_back(tube(Neck, {0, 0.55, 0}, {0, 0.62, 0}, {0, 1}, {r2(.05, .05), r2(.05, .05)}));
    s.push_back(tube(Head, {0, 0.62, 0}, {0, 0.86, 0}, {0, .10, .17, .30, .50, .70, .88, 1.0},
                     {r2(.05, .055), r2(.080, .090), r2(.088, .098), r2(.095, .105), r2(.097, .107), r2(.090, .099),
                      r2(.065, .072), r2(.03, .03)},
                     0.30));  // head joint at ear level, not the skull base
    // Arms.
    for (int side : {1, -1}) {
        const double sx = side;
        const bool left = side > 0;
        s.push_back(tube(left ? LCollar : RCollar, {sx * .06, .48, 0}, {sx * .18, .50, 0}, {0, 1}, {r2(.05, .05), r2(.05, .05)}));
        s.push_back(tube(left ? LShoulder : RShoulder, {sx * .18, .50, 0}, {sx * .45, .50, 0}, {0, .33, .66, 1},
                         {r2(.05, .05), r2(.047, .047), r2(.044, .044), r2(.04, .04)}));
        s.push_back(tube(left ? LElbow : RElbow, {sx * .45, .50, 0}, {sx * .70, .50, 0}, {0, .33, .66, 1},
                         {r2(.04, .04), r2(.038, .038), r2(.035, .035), r2(.032, .032)}));
        s.push_back(tube(left ? LWrist : RWrist, {sx * .70, .50, 0}, {sx * .78, .50, 0}, {0, 1}, {r2(.032, .032), r2(.026, .040)}));
        s.push_back(tube(left ? LHand : RHand, {sx * .78, .50, 0}, {sx * .88, .50, 0}, {0, 1}, {r2(.025, .038), r2(.024, .028)}));
    }
    // Legs.
    for (int side : {1, -1}) {
        const double sx = side;
        const bool left = side > 0;
        s.push_back(tube(left ? LHip : RHip, {sx * .09, -.08, 0}, {sx * .10, -.50, .01}, {0, .33, .66, 1},
                         {r2(.075, .075), r2(.068, .068), r2(.06, .06), r2(.05, .05)}));
        s.push_back(tube(left ? LKnee : RKnee, {sx * .10, -.50, .01}, {sx * .10, -.90, -.02}, {0, .33, .66, 1},
                         {r2(.05, .05), r2(.046, .046), r2(.04, .04), r2(.035, .035)}));
        s.push_back(tube(left ? LAnkle : RAnkle, {sx * .10, -.90, -.02}, {sx * .10, -.96, .10}, {0, 1}, {r2(.035, .035), r2(.04, .028)}));
        s.push_back(tube(left ? LFoot : RFoot, {sx * .10, -.96, .10}, {sx * .10, -.97, .20}, {0, 1}, {r2(.04, .026), r2(.032, .024)}));
    }
    return s;
}

// Orthonormal (side, front) axes perpendicular to `axis`.
std::pair<Vec3, Vec3> ringFrame(const Vec3& axis) {
    Vec3 ref = std::abs(axis.dot(Vec3::UnitZ())) > 0.9 ? Vec3::UnitY() : Vec3::UnitZ();
    Vec3 front = (ref - ref.dot(axis) * axis).normalized();
    Vec3 sideAxis = front.cross(axis).normalized();
    if (sideAxis.x() < 0 || (sideAxis.x() == 0 && sideAxis.y() < 0)) sideAxis = -sideAxis;
    return {sideAxis, front};
}

// Where a point sits relative to one segment.
struct Local {
    double field = 0.0;  // approximate signed distance to the segment's surface
    double t = 0.0;      // axial parameter, clamped to [0, 1]
    Vec3 center = Vec3::Zero();
    Vec3 radial = Vec3::Zero();  // point - centre
    double front = 0.0;          // cosine of the angle from the front axis
};

struct Primitive {
    Segment seg;
    Vec3 axis, side, front;
    double length;

    explicit Primitive(Segment s) : seg(std::move(s)) {
        length = (seg.b - seg.a).norm();
        axis = (seg.b - seg.a) / length;
        std::tie(side, front) = ringFrame(axis);
    }

    Vec2 radiiAt(double t) const {
        const auto& ts = seg.t;
        std::size_t i = 1;
        while (i + 1 < ts.size() && ts[i] < t) ++i;
        const double w = std::clamp((t - ts[i - 1]) / (ts[i] - ts[i - 1]), 0.0, 1.0);
        return (1.0 - w) * seg.radii[i - 1] + w * seg.radii[i];
    }

    Local locate(const Vec3& p) const {
        Local l;
        l.t = std::clamp((p - seg.a).dot(axis) / length, 0.0, 1.0);
        l.center = seg.a + l.t * length * axis;
        l.radial = p - l.center;
        const Vec2 r = radiiAt(l.t);
        const double u = l.radial.dot(side) / r.x(), w = l.radial.dot(front) / r.y(), x = l.radial.dot(axis) / r.minCoeff();
        l.field = (std::sqrt(u * u + w * w + x * x) - 1.0) * r.minCoeff();
        const double across = std::hypot(l.radial.dot(side), l.radial.dot(front));
        l.front = across > 0.0 ? l.radial.dot(front) / across : 0.0;
        return l;
    }
};

double smooth_min(double a, double b, double k) {
    const double h = std::max(k - std::abs(a - b), 0.0) / k;
    return std::min(a, b) - h * h * k * 0.25;
}

struct Body {
    std::vector<Primitive> parts;
    std::vector<std::pair<int, int>> blends;  // parent/child segment pairs joined smoothly
    double blendRadius = 0.02;

    double field(const Vec3& p) const {
        std::vector<double> f(parts.size());
        double out = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < parts.size(); ++s) out = std::min(out, f[s] = parts[s].locate(p).field);
        for (auto [a, b] : blends) out = std::min(out, smooth_min(f[a], f[b], blendRadius));
        return out;
    }

    Vec3 gradient(const Vec3& p) const {
        const double e = 1e-5;
        Vec3 g;
        for (int i = 0; i < 3; ++i) {
            Vec3 d = Vec3::Zero();
            d[i] = e;
            g[i] = (field(p + d) - field(p - d)) / (2 * e);
        }
        return g;
    }
};

// Naive surface nets: one vertex per sign-changing cell, one quad per
// sign-changing grid edge, vertices pulled onto the zero level set.
void polygonize(const Body& body, double h, std::vector<Vec3>& positions, std::vector<Eigen::Vector3i>& faces) {
    Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
    for (const Primitive& p : body.parts) {
        double r = 0.0;
        for (const Vec2& x : p.seg.radii) r = std::max(r, x.maxCoeff());
        lo = lo.cwiseMin(p.seg.a.cwiseMin(p.seg.b) - Vec3::Constant(r));
        hi = hi.cwiseMax(p.seg.a.cwiseMax(p.seg.b) + Vec3::Constant(r));
    }
    lo -= Vec3::Constant(2 * h);
    hi += Vec3::Constant(2 * h);
    // Centre the grid on x = 0 so the mesh is left/right symmetric.
    const int hx = static_cast<int>(std::ceil(std::max(-lo.x(), hi.x()) / h));
    const Vec3 origin(-(hx + 0.5) * h, lo.y(), lo.z());
    const int nx = 2 * hx + 2;
    const int ny = static_cast<int>(std::ceil((hi.y() - lo.y()) / h)) + 1;
    const int nz = static_cast<int>(std::ceil((hi.z() - lo.z()) / h)) + 1;
    auto node = [&](int i, int j, int k) -> Vec3 { return origin + h * Vec3(i, j, k); };
    auto at = [&](int i, int j, int k) { return (static_cast<std::size_t>(k) * ny + j) * nx + i; };

    std::vector<double> f(static_cast<std::size_t>(nx) * ny * nz);
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) f[at(i, j, k)] = body.field(node(i, j, k));

    std::vector<int> cellVertex(f.size(), -1);
    static const int corner[8][3] = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {0, 0, 1}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
    static const int edge[12][2] = {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {0, 2}, {1, 3}, {4, 6}, {5, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
    for (int k = 0; k + 1 < nz; ++k)
        for (int j = 0; j + 1 < ny; ++j)
            for (int i = 0; i + 1 < nx; ++i) {
                double v[8];
                int inside = 0;
                for (int c = 0; c < 8; ++c) {
                    v[c] = f[at(i + corner[c][0], j + corner[c][1], k + corner[c][2])];
                    inside += v[c] < 0.0;
                }
                if (inside == 0 || inside == 8) continue;
                Vec3 sum = Vec3::Zero();
                int n = 0;
                for (auto [c0, c1] : edge) {
                    if ((v[c0] < 0.0) == (v[c1] < 0.0)) continue;
                    const double s = v[c0] / (v[c0] - v[c1]);
                    const Vec3 p0 = node(i + corner[c0][0], j + corner[c0][1], k + corner[c0][2]);
                    const Vec3 p1 = node(i + corner[c1][0], j + corner[c1][1], k + corner[c1][2]);
                    sum += p0 + s * (p1 - p0);
                    ++n;
                }
                Vec3 p = sum / n;
                for (int it = 0; it < 3; ++it) {
                    const Vec3 g = body.gradient(p);
                    if (g.squaredNorm() < 1e-12) break;
                    Vec3 step = body.field(p) * g / g.squaredNorm();
                    if (step.norm() > 0.5 * h) step *= 0.5 * h / step.norm();
                    p -= step;
                }
                cellVertex[at(i, j, k)] = static_cast<int>(positions.size());
                positions.push_back(p);
            }

    auto quad = [&](int q0, int q1, int q2, int q3, bool flip) {
        if (flip) std::swap(q1, q3);
        const Vec3 &p0 = positions[q0], &p1 = positions[q1], &p2 = positions[q2], &p3 = positions[q3];
        if ((p0 - p2).squaredNorm() <= (p1 - p3).squaredNorm()) {
            faces.emplace_back(q0, q1, q2);
            faces.emplace_back(q0, q2, q3);
        } else {
            faces.emplace_back(q0, q1, q3);
            faces.emplace_back(q1, q2, q3);
        }
    };
    auto cv = [&](int i, int j, int k) { return cellVertex[at(i, j, k)]; };
    for (int k = 1; k + 1 < nz; ++k)
        for (int j = 1; j + 1 < ny; ++j)
            for (int i = 1; i + 1 < nx; ++i) {
                const bool in = f[at(i, j, k)] < 0.0;
                // Cells around each edge are listed counter-clockwise about the edge direction.
                if (in != (f[at(i + 1, j, k)] < 0.0))
                    quad(cv(i, j - 1, k - 1), cv(i, j, k - 1), cv(i, j, k), cv(i, j - 1, k), !in);
                if (in != (f[at(i, j + 1, k)] < 0.0))
                    quad(cv(i - 1, j, k - 1), cv(i - 1, j, k), cv(i, j, k), cv(i, j, k - 1), !in);
                if (in != (f[at(i, j, k + 1)] < 0.0))
                    quad(cv(i - 1, j - 1, k), cv(i, j - 1, k), cv(i, j, k), cv(i - 1, j, k), !in);
            }
}

int nearest_vertex(const std::vector<Vec3>& positions, const Vec3& target, const std::vector<int>& among) {
    int best = -1;
    double bestD = std::numeric_limits<double>::infinity();
    for (int v : among) {
        const double d = (positions[v] - target).squaredNorm();
        if (d < bestD) {
            bestD = d;
            best = v;
        }
    }
    if (best < 0) throw std::logic_error("humanoid: no candidate vertex for a landmark");
    return best;
}

}  // namespace

TemplateRig make_humanoid(const HumanoidOptions& options) {
    if (options.numShape < 0 || options.numShape > 10) throw InvalidInput("numShape must be in [0, 10]");
    if (options.numExpression < 0) throw InvalidInput("numExpression must be non-negative");
    if (!(options.gridSpacing >= 0.005 && options.gridSpacing <= 0.03)) throw InvalidInput("gridSpacing must be in [0.005, 0.03]");

    const auto segments = layout();
    const int K = static_cast<int>(kParents.size());
    const int S = static_cast<int>(segments.size());
    const int headSeg = 5;

    Body body;
    std::vector<int> segmentOf(K, -1);
    for (const Segment& s : segments) body.parts.emplace_back(s);
    for (int s = 0; s < S; ++s) segmentOf[segments[s].owner] = s;
    for (int s = 0; s < S; ++s) {
        const int parent = kParents[segments[s].owner];
        if (parent >= 0) body.blends.emplace_back(segmentOf[parent], s);
    }

    std::vector<Vec3> positions;
    std::vector<Eigen::Vector3i> faces;
    polygonize(body, options.gridSpacing, positions, faces);
    const int bodyVertices = static_cast<int>(positions.size());

    // Per-vertex placement relative to the nearest segment.
    std::vector<int> seg(bodyVertices);
    std::vector<Local> info(bodyVertices);
    std::vector<std::vector<double>> fields(bodyVertices, std::vector<double>(S));
    for (int v = 0; v < bodyVertices; ++v) {
        int best = 0;
        for (int s = 0; s < S; ++s) {
            fields[v][s] = body.parts[s].locate(positions[v]).field;
            if (fields[v][s] < fields[v][best]) best = s;
        }
        seg[v] = best;
        info[v] = body.parts[best].locate(positions[v]);
    }

    // Skin weights: soft assignment between the nearest segment and the
    // segments it is jointed to, so weights blend across each joint.
    std::vector<std::vector<std::pair<int, double>>> weights(bodyVertices);
    const double sigma = 0.01;
    for (int v = 0; v < bodyVertices; ++v) {
        std::vector<double> w(K, 0.0);
        const int s0 = seg[v];
        for (auto [a, b] : body.blends) {
            if (a != s0 && b != s0) continue;
            const int other = a == s0 ? b : a;
            w[segments[other].owner] += std::exp(-(fields[v][other] - fields[v][s0]) / sigma);
        }
        w[segments[s0].owner] += 1.0;
        double total = 0.0;
        for (double& x : w) total += x;
        double kept = 0.0;
        for (int j = 0; j < K; ++j)
            if (w[j] / total >= 0.02) kept += w[j];
        for (int j = 0; j < K; ++j)
            if (w[j] / total >= 0.02) weights[v].emplace_back(j, w[j] / kept);
    }

    // UV atlas: one vertical strip per kinematic chain; u runs from the front
    // (0) round either side to the back (1), v along the chain.
    const std::vector<std::vector<int>> chains = {{0, 1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}, {11, 12, 13, 14, 15},
                                                  {16, 17, 18, 19}, {20, 21, 22, 23}};
    const std::array<double, 6> stripEdge = {0.0, 0.28, 0.46, 0.64, 0.82, 1.0};
    std::vector<int> chainOf(S);
    std::vector<double> chainStart(S), chainLength(chains.size(), 0.0);
    for (std::size_t c = 0; c < chains.size(); ++c)
        for (int s : chains[c]) {
            chainOf[s] = static_cast<int>(c);
            chainStart[s] = chainLength[c];
            chainLength[c] += body.parts[s].length;
        }
    const double margin = 0.01;
    std::vector<Vec2> uvs(bodyVertices);
    for (int v = 0; v < bodyVertices; ++v) {
        const int c = chainOf[seg[v]];
        const double along = (chainStart[seg[v]] + info[v].t * body.parts[seg[v]].length) / chainLength[c];
        const double around = std::acos(std::clamp(info[v].front, -1.0, 1.0)) / std::numbers::pi;
        const double u0 = stripEdge[c] + margin, u1 = stripEdge[c + 1] - margin;
        uvs[v] = Vec2(u0 + (u1 - u0) * around, margin + (1.0 - 2 * margin) * along);
    }

    // Facial sets on the head segment.
    const Primitive& head = body.parts[headSeg];
    std::vector<int> headVerts, faceVerts;
    for (int v = 0; v < bodyVertices; ++v) {
        if (seg[v] != headSeg) continue;
        headVerts.push_back(v);
        if (info[v].t >= 0.07 && info[v].front >= 0.5) faceVerts.push_back(v);
    }
    auto surfacePoint = [&](double t, double angle) {
        const Vec2 r = head.radiiAt(t);
        return head.seg.a + t * head.length * head.axis + r.x() * std::sin(angle) * head.side + r.y() * std::cos(angle) * head.front;
    };

    FacialSets facial;
    for (double angle : {-0.5, 0.0, 0.5}) {
        const int upper = nearest_vertex(positions, surfacePoint(0.22, angle), faceVerts);
        const int lower = nearest_vertex(positions, surfacePoint(0.08, angle), faceVerts);
        if (upper == lower || positions[upper].y() <= positions[lower].y()) throw std::logic_error("humanoid: degenerate lip landmarks");
        facial.lipPairs.emplace_back(upper, lower);
    }
    for (double angle : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
        const int f = nearest_vertex(positions, surfacePoint(0.70, angle), faceVerts);
        if (std::find(facial.forehead.begin(), facial.forehead.end(), f) == facial.forehead.end()) facial.forehead.push_back(f);
    }

    // Eyeballs: small octahedra resting just proud of the face, skinned to the head.
    const double eyeRadius = 0.012;
    std::vector<int> eyeVerts;
    std::vector<Vec3> eyeRadial;
    for (double sx : {0.032, -0.032}) {
        const double t = (0.755 - head.seg.a.y()) / head.length;
        const Vec2 r = head.radiiAt(t);
        const double z = r.y() * std::sqrt(1.0 - (sx / r.x()) * (sx / r.x()));
        const Vec3 c(sx, 0.755, z + 0.004);
        const int base = static_cast<int>(positions.size());
        const std::array<Vec3, 6> dirs = {Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(), -Vec3::UnitY(), Vec3::UnitZ(), -Vec3::UnitZ()};
        for (int d = 0; d < 6; ++d) {
            positions.push_back(c + eyeRadius * dirs[d]);
            eyeRadial.push_back(eyeRadius * dirs[d]);
            weights.push_back({{Head, 1.0}});
            const double u0 = stripEdge[0] + margin, u1 = stripEdge[1] - margin;
            uvs.emplace_back(u0 + (u1 - u0) * 0.05 * (1.0 + dirs[d].x()), margin + (1.0 - 2 * margin) * 0.97);
            eyeVerts.push_back(base + d);
        }
        // +x=0 -x=1 +y=2 -y=3 +z=4 -z=5
        const int oct[8][3] = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4}, {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
        for (auto& f : oct) faces.emplace_back(base + f[0], base + f[1], base + f[2]);
    }
    facial.eyeball = eyeVerts;
    facial.eyeballRadius = eyeRadius;
    facial.headUp = Vec3::UnitY();
    facial.faceRegion = faceVerts;
    for (int e : eyeVerts) facial.faceRegion.push_back(e);

    const int V = static_cast<int>(positions.size());
    TemplateRig rig;
    rig.templateVertices.resize(V, 3);
    rig.uv.resize(V, 2);
    for (int v = 0; v < V; ++v) {
        rig.templateVertices.row(v) = positions[v].transpose();
        rig.uv.row(v) = uvs[v].transpose();
    }
    rig.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t f = 0; f < faces.size(); ++f) rig.faces.row(static_cast<Eigen::Index>(f)) = faces[f].transpose();
    rig.parents.assign(kParents.begin(), kParents.end());
    rig.jointNames.assign(kJointNames.begin(), kJointNames.end());
    rig.facial = facial;

    rig.skinWeights = Matrix::Zero(V, K);
    for (int v = 0; v < V; ++v)
        for (auto [j, w] : weights[v]) rig.skinWeights(v, j) += w;

    // Joint regressor: the nearest body vertices, reweighted (minimum-norm
    // change from uniform) so that the rest pose reproduces the layout joint.
    rig.jointRegressor = Matrix::Zero(K, V);
    std::vector<int> order(bodyVertices);
    for (int j = 0; j < K; ++j) {
        const Segment& s = segments[segmentOf[j]];
        const Vec3 joint = s.a + s.jointT * (s.b - s.a);
        std::iota(order.begin(), order.end(), 0);
        const int n = 24;
        std::partial_sort(order.begin(), order.begin() + n, order.end(), [&](int a, int b) {
            return (positions[a] - joint).squaredNorm() < (positions[b] - joint).squaredNorm();
        });
        Eigen::Matrix<double, 4, Eigen::Dynamic> A(4, n);
        for (int i = 0; i < n; ++i) A.col(i) << positions[order[i]], 1.0;
        const Vector uniform = Vector::Constant(n, 1.0 / n);
        const Eigen::Vector4d residual = Eigen::Vector4d(joint.x(), joint.y(), joint.z(), 1.0) - A * uniform;
        const Vector w = uniform + A.transpose() * (A * A.transpose()).ldlt().solve(residual);
        for (int i = 0; i < n; ++i) rig.jointRegressor(j, order[i]) = w[i];
    }

    // Shape modes.
    const auto isArm = [](int j) { return j == LCollar || j == RCollar || (j >= LShoulder && j <= RHand); };
    const auto isLeg = [](int j) { return j == LHip || j == RHip || j == LKnee || j == RKnee || j == LAnkle || j == RAnkle || j == LFoot || j == RFoot; };
    const auto isTorso = [](int j) { return j == Pelvis || j == Spine1 || j == Spine2 || j == Spine3; };
    const auto isHead = [](int j) { return j == Head || j == Neck; };
    auto ownerOf = [&](int v) { return v < bodyVertices ? segments[seg[v]].owner : static_cast<int>(Head); };
    auto radialOf = [&](int v) { return v < bodyVertices ? info[v].radial : eyeRadial[v - bodyVertices]; };

    const Vec3 headCenter(0, 0.74, 0);
    Matrix shape = Matrix::Zero(3 * V, 10);
    for (int v = 0; v < V; ++v) {
        const Vec3 p = positions[v];
        const Vec3 rad = radialOf(v);
        const int j = ownerOf(v);
        const bool eye = v >= bodyVertices;
        auto set = [&](int mode, const Vec3& d) { shape.block<3, 1>(3 * v, mode) += d; };
        set(0, 0.1 * p);
        if (!isHead(j) && !eye) set(1, 0.15 * rad);
        if (isLeg(j)) set(2, Vec3(0, 0.1 * (p.y() + 0.08), 0));
        if (isArm(j) && j != LCollar && j != RCollar) set(3, Vec3(0.1 * (p.x() - std::copysign(0.18, p.x())), 0, 0));
        if (isTorso(j)) set(4, Vec3(0.2 * rad.x(), 0, 0));
        if (isArm(j)) set(5, Vec3(std::copysign(0.03, p.x()), 0, 0));
        if (!eye && (j == Spine1 || j == Spine2) && info[v].front > 0) set(6, Vec3(0, 0, 0.04 * info[v].front));
        if (isHead(j) && (j == Head || eye)) set(7, 0.1 * (p - headCenter));
        if (isLeg(j)) set(8, Vec3(std::copysign(0.02, p.x()), 0, 0));
        if (j == Pelvis) set(8, Vec3(0.2 * rad.x(), 0, 0));
        if (p.y() > 0.0) set(9, Vec3(0, 0.1 * p.y(), 0));
    }
    rig.shapeBasis = shape.leftCols(options.numShape);

    // Expression modes act on the face only.
    Matrix expr = Matrix::Zero(3 * V, options.numExpression);
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int m = 0; m < options.numExpression; ++m) {
        // Random bump centre on the face for the seeded modes.
        const Vec3 bumpC = headCenter + Vec3(0.05 * uni(rng), 0.06 * uni(rng), 0.1);
        const Vec3 bumpD = Vec3(uni(rng), uni(rng), uni(rng)).normalized() * 0.006;
        for (int v = 0; v < V; ++v) {
            const bool eye = v >= bodyVertices;
            const bool headVert = !eye && seg[v] == headSeg;
            if (!headVert && !eye) continue;
            const double t = eye ? 0.0 : info[v].t;
            const double fr = eye ? 0.0 : std::max(info[v].front, 0.0);
            Vec3 d = Vec3::Zero();
            switch (m) {
                case 0:  // jaw open
                    if (headVert && t <= 0.13) d = Vec3(0, -0.008 * fr, 0);
                    break;
                case 1:  // smile: mouth corners up
                    if (headVert && t >= 0.07 && t <= 0.20 && fr >= 0.25 && fr <= 0.7) d = Vec3(0, 0.004, 0.002);
                    break;
                case 2:  // cheeks
                    if (headVert && t >= 0.24 && t <= 0.36) d = 0.05 * fr * info[v].radial;
                    break;
                case 3:  // brow raise
                    if (headVert && t >= 0.64 && t <= 0.76) d = Vec3(0, 0.004 * fr, 0);
                    break;
                case 4:  // eye size
                    if (eye) d = 0.1 * radialOf(v);
                    break;
                default: {
                    if (!headVert || fr <= 0.0) break;
                    const double r2 = (positions[v] - bumpC).squaredNorm();
                    d = std::exp(-r2 / (2 * 0.03 * 0.03)) * bumpD;
                }
            }
            expr.block<3, 1>(3 * v, m) = d;
        }
    }
    rig.expressionBasis = expr;
    rig.poseBasis = Matrix::Zero(3 * V, 0);
    rig.validate();
    return rig;
}

Pose a_pose(const TemplateRig& rig) {
    Pose p = Pose::identity(rig.numJoints());
    p.jointRotations.row(rig.jointIndex("left_shoulder")) = Vec3(0, 0, -0.7).transpose();
    p.jointRotations.row(rig.jointIndex("right_shoulder")) = Vec3(0, 0, 0.7).transpose();
    return p;
}

std::vector<int> torso_joints(const TemplateRig& rig) {
    return {rig.jointIndex("pelvis"), rig.jointIndex("spine1"), rig.jointIndex("spine2"), rig.jointIndex("spine3")};
}

std::vector<int> head_joints(const TemplateRig& rig) { return {rig.jointIndex("neck"), rig.jointIndex("head")}; }

Points torso_widening(const TemplateRig& rig, double factor) {
    const auto torso = torso_joints(rig);
    const auto dominant = rig.dominantJoint();
    Points d = Points::Zero(rig.numVertices(), 3);
    for (int v = 0; v < rig.numVertices(); ++v) {
        if (std::find(torso.begin(), torso.end(), dominant[v]) == torso.end()) continue;
        const Vec3 p = rig.templateVertices.row(v).transpose();
        d.row(v) = ((factor - 1.0) * Vec3(p.x(), 0.0, p.z())).transpose();
    }
    return d;
}

AvatarParams reference_avatar(const TemplateRig& rig, int textureWidth, int textureHeight, std::uint64_t seed) {
    AvatarParams p = AvatarParams::zeros(rig, textureWidth, textureHeight);
    Rng rng(seed);
    std::array<double, 3> ph{}, fu{}, fv{};
    for (int c = 0; c < 3; ++c) {
        ph[c] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        fu[c] = 1.0 + c;
        fv[c] = 3.0 - c;
    }
    for (int y = 0; y < textureHeight; ++y) {
        for (int x = 0; x < textureWidth; ++x) {
            const double u = (x + 0.5) / textureWidth, v = (y + 0.5) / textureHeight;
            for (int c = 0; c < 3; ++c)
                p.texture.at(x, y, c) =
                    0.5 + 0.3 * std::sin(2.0 * std::numbers::pi * (fu[c] * u + fv[c] * v) + ph[c]) +
                    0.15 * std::cos(2.0 * std::numbers::pi * 5.0 * (c == 1 ? u : v) + ph[(c + 1) % 3]);
        }
    }
    p.clampTexture();
    return p;
}

}  // namespace forge
