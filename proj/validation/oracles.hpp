#pragma once

// Brute-force reference implementations used only by tests and the
// validation harness. Deliberately written without the library's
// vectorized formulations so the two can disagree.

#include "forge/body_model.hpp"
#include "forge/motion.hpp"
#include "forge/regularize.hpp"
#include "forge/render.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace forge::oracle {

Points shape_template_loop(const TemplateRig& rig, const AvatarParams& params, const Pose& pose);
Points regress_joints_loop(const TemplateRig& rig, const Points& rest);

struct Skinned {
    Points vertices;
    Points joints;
};
/// Homogeneous 4x4 transforms composed along the tree, applied per vertex.
Skinned skin_homogeneous(const TemplateRig& rig, const Points& rest, const Points& restJoints, const Pose& pose);

/// Moller-Trumbore; returns the ray parameter t > 0 of the hit.
std::optional<double> ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b, const Vec3& c);

/// Vertex visible iff it projects inside the image in front of the camera and
/// the segment to the camera crosses no triangle not incident to it.
std::vector<bool> raycast_visible_vertices(const Points& vertices, const Triangles& faces, const Camera& camera);

/// Majority vote of the k nearest vertices (by a full sort) over `visible`.
std::vector<bool> joint_visibility(const Points& joints, const Points& vertices, const std::vector<bool>& visible,
                                   const std::vector<int>& k);

/// Nearest hit depth (along the camera's forward axis) through the pixel centre, +inf if none.
double pixel_depth(const Points& vertices, const Triangles& faces, const Camera& camera, int x, int y);

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);
int penetration_count(const Points& vertices, const std::vector<int>& limbVertices, const std::vector<Capsule>& capsules);

double laplacian_loss(const Points& mesh, const Triangles& faces);
double face_loss(const Points& mesh, const FacialSets& facial);

/// Central differences of f along each coordinate of x.
Vector finite_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h);
/// Central difference of f along direction d.
double directional_difference(const std::function<double(const Vector&)>& f, const Vector& x, const Vector& d, double h);

/// ||a - b|| / max(||a||, ||b||, floor).
double relative_error(const Vector& a, const Vector& b, double floor = 1e-12);

/// Parameter change made by Adam's n-th step under a constant gradient g, from zero state.
double adam_constant_gradient_step(double g, double lr, int steps, double beta1 = 0.9, double beta2 = 0.999,
                                     double eps = 1e-8);

double correlation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace forge::oracle
