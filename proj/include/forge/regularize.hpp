#pragma once

#include "forge/body_model.hpp"

#include <vector>

namespace forge {

/// Sorted unique one-ring neighbours per vertex.
using Adjacency = std::vector<std::vector<int>>;

Adjacency mesh_adjacency(const Triangles& faces, int numVertices);

struct ShapeLoss {
    double loss = 0.0;
    Vector grad;
};

struct VertexLoss {
    double loss = 0.0;
    Points grad;
};

/// sum(beta_i^2).
ShapeLoss shape_reg(const Vector& beta);

/// sum_v |v - mean(N(v))|^2. Throws InvalidInput on an isolated vertex.
VertexLoss laplacian_reg(const Points& mesh, const Adjacency& adjacency);

/// Lip pairs penalized when the signed gap along headUp is negative; each
/// eyeball vertex penalized when closer than r to its nearest forehead vertex.
VertexLoss face_reg(const Points& mesh, const FacialSets& facial);

/// What the Laplacian smoothness term is evaluated on: the displacement field
/// delta (zero for the bare template) or the full canonical mesh.
enum class LaplacianTarget { Displacement, Mesh };

struct RegWeights {
    double shape = 0.01;
    double laplacian = 100.0;
    double face = 10.0;
    LaplacianTarget laplacianOn = LaplacianTarget::Displacement;
};

struct RegResult {
    double shape = 0.0;      // unweighted components
    double laplacian = 0.0;
    double face = 0.0;
    double total = 0.0;      // weighted sum
    Vector gradBeta;
    Points gradVertices;      // w.r.t. the mesh passed in
    Points gradDisplacement;  // direct delta gradient (Laplacian on delta)
};

RegResult total_reg(const AvatarParams& params, const Points& mesh, const TemplateRig& rig, const Adjacency& adjacency,
                    const RegWeights& weights = {});

}  // namespace forge
