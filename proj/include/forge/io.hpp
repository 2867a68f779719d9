#pragma once

#include "forge/body_model.hpp"

#include <filesystem>
#include <string>

namespace forge {

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
// Strict full-token parse; returns false on any trailing garbage.
bool parse_double(const std::string& token, double& out);

// Rig file: one JSON document. Keys:
//   format, version, vertices (3V flat), faces (3F flat), uv (2V flat),
//   shapeBasis / expressionBasis / poseBasis (array of 3V-flat modes; poseBasis
//   omitted when empty), jointRegressor / skinWeights (sparse [row, col, w]
//   triples), parents, jointNames, facial {lipPairs, eyeball, forehead,
//   eyeballRadius, faceRegion, headUp}.
std::string rig_to_string(const TemplateRig& rig);
TemplateRig rig_from_string(const std::string& text, const std::string& source = "<rig>");
void save_rig(const TemplateRig& rig, const std::filesystem::path& path);
TemplateRig load_rig(const std::filesystem::path& path);

// Params file: JSON {format, version, beta, psi, displacement (3V flat),
// texture {width, height, data (row-major RGB)}}.
std::string params_to_string(const AvatarParams& params);
AvatarParams params_from_string(const std::string& text, const std::string& source = "<params>");
void save_params(const AvatarParams& params, const std::filesystem::path& path);
AvatarParams load_params(const std::filesystem::path& path);

/// Wavefront OBJ with per-vertex UVs (vt shares the vertex index).
struct ObjMesh {
    Points vertices;
    Points2D texcoords;  // as stored in the file (v up)
    Triangles faces;
};
std::string obj_to_string(const ObjMesh& mesh);
ObjMesh obj_from_string(const std::string& text, const std::string& source = "<obj>");
std::string mesh_to_obj(const Points& vertices, const TemplateRig& rig);
void save_obj(const Points& vertices, const TemplateRig& rig, const std::filesystem::path& path);

// Images: 8-bit, values clamped to [0,1] and rounded.
std::string image_to_ppm(const Image& image);
Image image_from_ppm(const std::string& bytes, const std::string& source = "<ppm>");
std::string image_to_png(const Image& image);
Image image_from_png(const std::string& bytes, const std::string& source = "<png>");
void save_image(const Image& image, const std::filesystem::path& path);  // by extension: .ppm or .png
Image load_ppm(const std::filesystem::path& path);
Image load_image(const std::filesystem::path& path);  // by extension

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace forge
