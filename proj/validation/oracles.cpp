#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace forge::oracle {

Points shape_template_loop(const TemplateRig& rig, const AvatarParams& params, const Pose& pose) {
    const int V = rig.numVertices();
    const int K = rig.numJoints();
    Points out(V, 3);
    for (int v = 0; v < V; ++v) {
        for (int c = 0; c < 3; ++c) {
            const int row = 3 * v + c;
            double s = rig.templateVertices(v, c) + params.displacement(v, c);
            for (int i = 0; i < params.beta.size(); ++i) s += params.beta[i] * rig.shapeBasis(row, i);
            for (int i = 0; i < params.psi.size(); ++i) s += params.psi[i] * rig.expressionBasis(row, i);
            if (rig.hasPoseBasis()) {
                for (int j = 1; j < K; ++j) {
                    const Vec3 aa = pose.jointRotations.row(j).transpose();
                    const Mat3 R = Eigen::AngleAxisd(aa.norm(), aa.norm() > 0 ? Vec3(aa.normalized()) : Vec3::UnitX())
                                       .toRotationMatrix();
                    for (int a = 0; a < 3; ++a)
                        for (int b = 0; b < 3; ++b)
                            s += rig.poseBasis(row, 9 * (j - 1) + 3 * a + b) * (R(a, b) - (a == b ? 1.0 : 0.0));
                }
            }
            out(v, c) = s;
        }
    }
    return out;
}

Points regress_joints_loop(const TemplateRig& rig, const Points& rest) {
    const int K = rig.numJoints();
    Points out = Points::Zero(K, 3);
    for (int j = 0; j < K; ++j)
        for (int v = 0; v < rest.rows(); ++v)
            for (int c = 0; c < 3; ++c) out(j, c) += rig.jointRegressor(j, v) * rest(v, c);
    return out;
}

namespace {

Mat4 rigid(const Mat3& R, const Vec3& t) {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = R;
    m.topRightCorner<3, 1>() = t;
    return m;
}

Mat3 axis_angle(const Vec3& aa) {
    const double theta = aa.norm();
    if (theta == 0.0) return Mat3::Identity();
    return Eigen::AngleAxisd(theta, aa / theta).toRotationMatrix();
}

}  // namespace

Skinned skin_homogeneous(const TemplateRig& rig, const Points& rest, const Points& restJoints, const Pose& pose) {
    const int K = rig.numJoints();
    std::vector<Mat4> world(K);
    for (int j = 0; j < K; ++j) {
        const Vec3 J = restJoints.row(j).transpose();
        const int p = rig.parents[j];
        const Vec3 offset = p < 0 ? J : Vec3(J - restJoints.row(p).transpose());
        const Mat4 local = rigid(axis_angle(pose.jointRotations.row(j).transpose()), offset);
        world[j] = p < 0 ? local : Mat4(world[p] * local);
    }
    const Mat4 root = rigid(Mat3::Identity(), pose.rootTranslation);
    Skinned out;
    out.joints.resize(K, 3);
    std::vector<Mat4> relative(K);
    for (int j = 0; j < K; ++j) {
        const Vec3 J = restJoints.row(j).transpose();
        relative[j] = root * world[j] * rigid(Mat3::Identity(), -J);
        out.joints.row(j) = (root * world[j] * Eigen::Vector4d(0, 0, 0, 1)).head<3>().transpose();
    }
    out.vertices.resize(rest.rows(), 3);
    for (int v = 0; v < rest.rows(); ++v) {
        Mat4 blended = Mat4::Zero();
        for (int j = 0; j < K; ++j) blended += rig.skinWeights(v, j) * relative[j];
        const Eigen::Vector4d h(rest(v, 0), rest(v, 1), rest(v, 2), 1.0);
        out.vertices.row(v) = (blended * h).head<3>().transpose();
    }
    return out;
}

std::optional<double> ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 p = dir.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-14) return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3 s = origin - a;
    const double u = s.dot(p) * inv;
    if (u < 0.0 || u > 1.0) return std::nullopt;
    const Vec3 q = s.cross(e1);
    const double w = dir.dot(q) * inv;
    if (w < 0.0 || u + w > 1.0) return std::nullopt;
    const double t = e2.dot(q) * inv;
    if (t <= 0.0) return std::nullopt;
    return t;
}

std::vector<bool> raycast_visible_vertices(const Points& vertices, const Triangles& faces, const Camera& camera) {
    const Index V = vertices.rows(), F = faces.rows();
    // A ray that hits a triangle lying wholly in front of the camera projects
    // inside that triangle's image-plane bounding box, so each vertex only
    // needs the triangles binned to its image tile (plus any triangle that
    // crosses the camera plane). The answer is the same as testing them all.
    const int tile = 16;
    const int tx = (camera.width + tile - 1) / tile, ty = (camera.height + tile - 1) / tile;
    std::vector<std::vector<int>> bins(static_cast<std::size_t>(tx) * ty);
    std::vector<int> always;
    for (Index f = 0; f < F; ++f) {
        double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
        bool projectable = true;
        for (int c = 0; c < 3; ++c) {
            const Vec3 q = camera.project(vertices.row(faces(f, c)).transpose());
            if (!(q.z() > 1e-9)) projectable = false;
            x0 = std::min(x0, q.x()), y0 = std::min(y0, q.y()), x1 = std::max(x1, q.x()), y1 = std::max(y1, q.y());
        }
        if (!projectable) {
            always.push_back(static_cast<int>(f));
            continue;
        }
        const double pad = 1e-6 * (1.0 + camera.width + camera.height);
        const int i0 = std::max(0, static_cast<int>(std::floor((x0 - pad) / tile)));
        const int j0 = std::max(0, static_cast<int>(std::floor((y0 - pad) / tile)));
        const int i1 = std::min(tx - 1, static_cast<int>(std::floor((x1 + pad) / tile)));
        const int j1 = std::min(ty - 1, static_cast<int>(std::floor((y1 + pad) / tile)));
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) bins[static_cast<std::size_t>(j) * tx + i].push_back(static_cast<int>(f));
    }

    auto blocks = [&](Index v, const Vec3& dir, int f) {
        if (faces(f, 0) == v || faces(f, 1) == v || faces(f, 2) == v) return false;
        const auto t = ray_triangle(camera.position, dir, vertices.row(faces(f, 0)).transpose(),
                                    vertices.row(faces(f, 1)).transpose(), vertices.row(faces(f, 2)).transpose());
        return t && *t < 1.0 - 1e-9;
    };
    std::vector<bool> visible(V, false);
    for (Index v = 0; v < V; ++v) {
        const Vec3 p = vertices.row(v).transpose();
        const auto proj = camera.project(p);
        if (proj.z() <= 1e-6 || proj.x() < 0 || proj.y() < 0 || proj.x() >= camera.width || proj.y() >= camera.height)
            continue;
        const Vec3 dir = p - camera.position;
        const auto& bin = bins[static_cast<std::size_t>(proj.y() / tile) * tx + static_cast<std::size_t>(proj.x() / tile)];
        bool blocked = false;
        for (std::size_t i = 0; i < bin.size() && !blocked; ++i) blocked = blocks(v, dir, bin[i]);
        for (std::size_t i = 0; i < always.size() && !blocked; ++i) blocked = blocks(v, dir, always[i]);
        visible[v] = !blocked;
    }
    return visible;
}

std::vector<bool> joint_visibility(const Points& joints, const Points& vertices, const std::vector<bool>& visible,
                                   const std::vector<int>& k) {
    std::vector<bool> out(joints.rows());
    std::vector<int> order(vertices.rows());
    for (Index j = 0; j < joints.rows(); ++j) {
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> d(vertices.rows());
        for (Index v = 0; v < vertices.rows(); ++v) d[v] = (vertices.row(v) - joints.row(j)).squaredNorm();
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return d[a] < d[b]; });
        int votes = 0;
        for (int i = 0; i < k[j]; ++i) votes += visible[order[i]] ? 1 : 0;
        out[j] = 2 * votes > k[j];
    }
    return out;
}

double pixel_depth(const Points& vertices, const Triangles& faces, const Camera& camera, int x, int y) {
    const Vec3 dir = camera.rayDirection(x + 0.5, y + 0.5);
    const Vec3 forward = camera.basis().col(2);
    double best = std::numeric_limits<double>::infinity();
    for (Index f = 0; f < faces.rows(); ++f) {
        const auto t = ray_triangle(camera.position, dir, vertices.row(faces(f, 0)).transpose(),
                                    vertices.row(faces(f, 1)).transpose(), vertices.row(faces(f, 2)).transpose());
        if (t) best = std::min(best, (*t * dir).dot(forward));
    }
    return best;
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    if (ab.squaredNorm() == 0.0) return (p - a).norm();
    if ((p - a).dot(ab) <= 0.0) return (p - a).norm();
    if ((p - b).dot(-ab) <= 0.0) return (p - b).norm();
    return (p - a).cross(p - b).norm() / ab.norm();
}

int penetration_count(const Points& vertices, const std::vector<int>& limbVertices, const std::vector<Capsule>& capsules) {
    const std::set<int> limb(limbVertices.begin(), limbVertices.end());
    int n = 0;
    for (Index v = 0; v < vertices.rows(); ++v) {
        if (!limb.count(static_cast<int>(v))) continue;
        for (const Capsule& c : capsules) {
            if (point_segment_distance(vertices.row(v).transpose(), c.a, c.b) < c.radius) {
                ++n;
                break;
            }
        }
    }
    return n;
}

double laplacian_loss(const Points& mesh, const Triangles& faces) {
    std::vector<std::set<int>> nbr(mesh.rows());
    for (Index f = 0; f < faces.rows(); ++f)
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                if (a != b) nbr[faces(f, a)].insert(faces(f, b));
    double loss = 0.0;
    for (Index v = 0; v < mesh.rows(); ++v) {
        for (int c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (int u : nbr[v]) mean += mesh(u, c);
            mean /= static_cast<double>(nbr[v].size());
            loss += (mesh(v, c) - mean) * (mesh(v, c) - mean);
        }
    }
    return loss;
}

double face_loss(const Points& mesh, const FacialSets& facial) {
    const Vec3 up = facial.headUp / facial.headUp.norm();
    double loss = 0.0;
    for (const auto& [u, l] : facial.lipPairs) {
        double gap = 0.0, d2 = 0.0;
        for (int c = 0; c < 3; ++c) {
            gap += (mesh(u, c) - mesh(l, c)) * up[c];
            d2 += (mesh(u, c) - mesh(l, c)) * (mesh(u, c) - mesh(l, c));
        }
        if (gap < 0.0) loss += d2;
    }
    for (int e : facial.eyeball) {
        double best = std::numeric_limits<double>::infinity();
        for (int f : facial.forehead) {
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) d2 += (mesh(e, c) - mesh(f, c)) * (mesh(e, c) - mesh(f, c));
            best = std::min(best, d2);
        }
        if (best < facial.eyeballRadius * facial.eyeballRadius) loss += best;
    }
    return loss;
}

Vector finite_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
    Vector g(x.size());
    Vector xp = x;
    for (Index i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        const double fp = f(xp);
        xp[i] = x[i] - h;
        const double fm = f(xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2 * h);
    }
    return g;
}

double directional_difference(const std::function<double(const Vector&)>& f, const Vector& x, const Vector& d, double h) {
    return (f(x + h * d) - f(x - h * d)) / (2 * h);
}

double relative_error(const Vector& a, const Vector& b, double floor) {
    return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

double adam_constant_gradient_step(double g, double lr, int steps, double beta1, double beta2, double eps) {
    double m = 0.0, v = 0.0, update = 0.0;
    for (int t = 1; t <= steps; ++t) {
        m = beta1 * m + (1 - beta1) * g;
        v = beta2 * v + (1 - beta2) * g * g;
        const double mh = m / (1 - std::pow(beta1, t));
        const double vh = v / (1 - std::pow(beta2, t));
        update = -lr * mh / (std::sqrt(vh) + eps);
    }
    return update;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace forge::oracle
