#pragma once

#include "forge/body_model.hpp"
#include "forge/rig_builder.hpp"

#include <filesystem>
#include <string>

namespace forge::test {

// Three joints along +x: root at the origin, elbow at (1,0,0), tip at (2,0,0).
// Vertices: 0 (0.5,0,0) on the root, 1 (2,0,0) on the elbow, 2 (1.5,0,0)
// split evenly, 3 and 4 sit on the root and elbow joints.
TemplateRig two_bone_rig();

// The default humanoid, built once per test binary.
const TemplateRig& humanoid();

// Fresh empty directory under the system temp dir, removed at scope exit.
class TempDir {
   public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

   private:
    std::filesystem::path path_;
};

}  // namespace forge::test
