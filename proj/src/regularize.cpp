#include "forge/regularize.hpp"

#include <algorithm>
#include <limits>

namespace forge {

Adjacency mesh_adjacency(const Triangles& faces, int numVertices) {
    Adjacency adj(static_cast<std::size_t>(numVertices));
    for (Index f = 0; f < faces.rows(); ++f) {
        for (int k = 0; k < 3; ++k) {
            const int a = faces(f, k), b = faces(f, (k + 1) % 3);
            if (a < 0 || b < 0 || a >= numVertices || b >= numVertices) throw InvalidInput("face index out of range");
            adj[a].push_back(b);
            adj[b].push_back(a);
        }
    }
    for (auto& n : adj) {
        std::sort(n.begin(), n.end());
        n.erase(std::unique(n.begin(), n.end()), n.end());
    }
    return adj;
}

ShapeLoss shape_reg(const Vector& beta) { return {beta.squaredNorm(), 2.0 * beta}; }

VertexLoss laplacian_reg(const Points& mesh, const Adjacency& adjacency) {
    const Index V = mesh.rows();
    if (static_cast<Index>(adjacency.size()) != V) throw InvalidInput("adjacency size does not match mesh");
    Points residual(V, 3);
    for (Index v = 0; v < V; ++v) {
        const auto& n = adjacency[v];
        if (n.empty()) throw InvalidInput("invalid rig: vertex " + std::to_string(v) + " has no neighbours");
        Vec3 mean = Vec3::Zero();
        for (int u : n) mean += mesh.row(u).transpose();
        residual.row(v) = mesh.row(v) - (mean / static_cast<double>(n.size())).transpose();
    }
    VertexLoss out;
    out.loss = residual.squaredNorm();
    // d/dx_v of |r_v|^2 is 2 r_v; each neighbour u of v receives -2 r_v / deg(v).
    out.grad = 2.0 * residual;
    for (Index v = 0; v < V; ++v) {
        const double s = 2.0 / static_cast<double>(adjacency[v].size());
        for (int u : adjacency[v]) out.grad.row(u) -= s * residual.row(v);
    }
    return out;
}

VertexLoss face_reg(const Points& mesh, const FacialSets& facial) {
    VertexLoss out;
    out.grad = Points::Zero(mesh.rows(), 3);
    const Vec3 up = facial.headUp.normalized();
    for (const auto& [u, l] : facial.lipPairs) {
        const Vec3 d = mesh.row(u).transpose() - mesh.row(l).transpose();
        if (!(d.dot(up) < 0.0)) continue;
        out.loss += d.squaredNorm();
        out.grad.row(u) += 2.0 * d.transpose();
        out.grad.row(l) -= 2.0 * d.transpose();
    }
    const double r2 = facial.eyeballRadius * facial.eyeballRadius;
    for (int e : facial.eyeball) {
        int best = -1;
        double bestD2 = std::numeric_limits<double>::infinity();
        for (int f : facial.forehead) {
            const double d2 = (mesh.row(e) - mesh.row(f)).squaredNorm();
            if (d2 < bestD2) {
                bestD2 = d2;
                best = f;
            }
        }
        if (best < 0 || !(bestD2 < r2)) continue;
        const Vec3 d = mesh.row(e).transpose() - mesh.row(best).transpose();
        out.loss += bestD2;
        out.grad.row(e) += 2.0 * d.transpose();
        out.grad.row(best) -= 2.0 * d.transpose();
    }
    return out;
}

RegResult total_reg(const AvatarParams& params, const Points& mesh, const TemplateRig& rig, const Adjacency& adjacency,
                    const RegWeights& weights) {
    if (weights.shape < 0 || weights.laplacian < 0 || weights.face < 0) throw InvalidInput("regularization weights must be >= 0");
    RegResult r;
    const ShapeLoss s = shape_reg(params.beta);
    r.shape = s.loss;
    r.gradBeta = weights.shape * s.grad;
    r.gradVertices = Points::Zero(mesh.rows(), 3);
    r.gradDisplacement = Points::Zero(mesh.rows(), 3);
    if (weights.laplacianOn == LaplacianTarget::Mesh) {
        const VertexLoss lap = laplacian_reg(mesh, adjacency);
        r.laplacian = lap.loss;
        r.gradVertices += weights.laplacian * lap.grad;
    } else {
        if (params.displacement.rows() != mesh.rows()) throw InvalidInput("displacement does not match mesh");
        const VertexLoss lap = laplacian_reg(params.displacement, adjacency);
        r.laplacian = lap.loss;
        r.gradDisplacement += weights.laplacian * lap.grad;
    }
    const VertexLoss face = face_reg(mesh, rig.facial);
    r.face = face.loss;
    r.gradVertices += weights.face * face.grad;
    r.total = weights.shape * r.shape + weights.laplacian * r.laplacian + weights.face * r.face;
    return r;
}

}  // namespace forge
