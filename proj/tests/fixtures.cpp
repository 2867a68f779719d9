#include "fixtures.hpp"

#include "forge/rng.hpp"

#include <atomic>
#include <chrono>

namespace forge::test {

TemplateRig two_bone_rig() {
    TemplateRig rig;
    rig.templateVertices.resize(5, 3);
    rig.templateVertices << 0.5, 0, 0, 2, 0, 0, 1.5, 0, 0, 0, 0, 0, 1, 0, 0;
    rig.faces.resize(2, 3);
    rig.faces << 0, 1, 2, 2, 3, 4;
    rig.parents = {-1, 0, 1};
    rig.jointNames = {"root", "elbow", "tip"};
    rig.jointRegressor = Matrix::Zero(3, 5);
    rig.jointRegressor(0, 3) = 1;
    rig.jointRegressor(1, 4) = 1;
    rig.jointRegressor(2, 1) = 1;
    rig.skinWeights = Matrix::Zero(5, 3);
    rig.skinWeights(0, 0) = 1;
    rig.skinWeights(1, 1) = 1;
    rig.skinWeights(2, 0) = 0.5;
    rig.skinWeights(2, 1) = 0.5;
    rig.skinWeights(3, 0) = 1;
    rig.skinWeights(4, 1) = 1;
    Rng rng(3);
    rig.shapeBasis.resize(15, 2);
    rig.expressionBasis.resize(15, 1);
    for (Index i = 0; i < rig.shapeBasis.size(); ++i) rig.shapeBasis.data()[i] = rng.normal();
    for (Index i = 0; i < rig.expressionBasis.size(); ++i) rig.expressionBasis.data()[i] = rng.normal();
    rig.uv = Points2D::Constant(5, 2, 0.5);
    return rig;
}

const TemplateRig& humanoid() {
    static const TemplateRig rig = make_humanoid();
    return rig;
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("avatar_forge_" + tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

}  // namespace forge::test
