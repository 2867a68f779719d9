#pragma once

#include "forge/body_model.hpp"
#include "forge/rng.hpp"

#include <optional>
#include <vector>

namespace forge {

struct Camera {
    Vec3 position = Vec3(0, 0, 3);
    Vec3 lookAt = Vec3::Zero();
    Vec3 up = Vec3::UnitY();
    double verticalFov = 0.6981317007977318;  // 40 degrees
    int width = 64;
    int height = 64;

    void validate() const;
    // Orthonormal (right, up, forward) basis; forward points into the scene.
    Mat3 basis() const;
    double focalPixels() const;
    /// Pixel coordinates (x right, y down) and view depth along forward.
    Eigen::Vector3d project(const Vec3& p) const;
    /// Unnormalized world-space ray direction through pixel coordinate (px, py).
    Vec3 rayDirection(double px, double py) const;
};

/// Per-pixel rasterization record retained for the backward pass.
struct Fragment {
    int triangle = -1;
    Vec3 bary = Vec3::Zero();  // perspective-correct
    double depth = std::numeric_limits<double>::infinity();
};

struct RenderBuffers {
    Image color;
    std::vector<double> depth;  // +inf where uncovered
    Mask bodyMask;
    Mask faceMask;
    Mask nonFaceMask;
    std::vector<int> visibleVertices;  // sorted
    std::vector<Fragment> fragments;   // row-major, one per pixel

    int width() const { return color.width; }
    int height() const { return color.height; }
    const Fragment& fragment(int x, int y) const { return fragments[static_cast<std::size_t>(y) * width() + x]; }
};

inline constexpr double kBackground = 0.5;

/// Z-buffered rasterization with barycentric UV interpolation and bilinear
/// texture lookup. Triangles with a vertex behind the camera or zero screen
/// area are skipped.
RenderBuffers rasterize(const PosedMesh& mesh, const AvatarParams& params, const TemplateRig& rig, const Camera& camera);

/// Bilinear texture lookup at uv in [0,1]^2 (clamped to edge). Optional outputs
/// receive d(color)/du and d(color)/dv.
Eigen::Array3d sample_texture(const Image& texture, const Vec2& uv, Eigen::Array3d* dU = nullptr, Eigen::Array3d* dV = nullptr);

struct RenderGrad {
    Image texture;   // same shape as the texture
    Points vertices; // V x 3, posed space
};

/// Gradients of sum(pixelGrad . color) w.r.t. texture and posed vertices at
/// fixed coverage.
RenderGrad render_backward(const RenderBuffers& buffers, const PosedMesh& mesh, const AvatarParams& params,
                           const TemplateRig& rig, const Camera& camera, const Image& pixelGrad);

struct SkeletonMap {
    Points2D joints2d;
    std::vector<bool> visibility;
    std::vector<bool> onScreen;
    Image boneImage;
};

/// Joint i is visible iff a strict majority of its k[i] nearest mesh vertices
/// are in buffers.visibleVertices.
SkeletonMap occluded_skeleton(const Points& jointsPosed, const PosedMesh& mesh, const Camera& camera,
                              const RenderBuffers& buffers, const std::vector<int>& k, const std::vector<int>& parents);
SkeletonMap occluded_skeleton(const Points& jointsPosed, const PosedMesh& mesh, const Camera& camera,
                              const RenderBuffers& buffers, int k, const std::vector<int>& parents);

/// Indices of the k nearest vertices to `point` (ties broken by index).
std::vector<int> nearest_vertices(const Points& vertices, const Vec3& point, int k);

/// Fixed bone palette entry for the bone ending at `joint`.
Eigen::Array3d bone_color(int joint);

enum class CameraMode { FullBody, Head };

struct CameraFraming {
    Vec3 bodyCenter = Vec3::Zero();
    double bodyHeight = 1.8;
    Vec3 headJoint = Vec3(0, 0.69, 0);  // head views look at the head joint
    double headSize = 0.25;
};

/// Framing from the posed avatar's bounding box, head joint and head vertices.
CameraFraming framing_from_mesh(const TemplateRig& rig, const PosedMesh& mesh);

struct CameraSettings {
    double verticalFov = 0.6981317007977318;
    int width = 64;
    int height = 64;
    double minElevation = -15.0 * 0.017453292519943295;
    double maxElevation = 30.0 * 0.017453292519943295;
    double bodyFill = 0.85;  // fraction of the frame spanned by body height
    double headFill = 0.60;
};

Camera sample_camera(Rng& rng, CameraMode mode, const CameraFraming& framing, const CameraSettings& settings = {});
/// Deterministic orbit camera used for previews and evaluation.
Camera orbit_camera(CameraMode mode, double azimuth, double elevation, const CameraFraming& framing,
                    const CameraSettings& settings = {});

}  // namespace forge
