#include "cli.hpp"
#include "fixtures.hpp"

#include "forge/config.hpp"
#include "forge/io.hpp"
#include "forge/motion.hpp"
#include "forge/rig_builder.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sstream>

using namespace forge;
using forge::test::humanoid;
using forge::test::TempDir;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "avatar_forge");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

// Default-rig inputs written to a scratch directory.
struct Inputs {
    TempDir dir{"cli"};
    std::string motion = (dir / "walk.txt").string();
    std::string params = (dir / "params.json").string();
    Inputs() {
        save_motion(synth_motion(humanoid(), MotionKind::WalkCycle, 4), motion);
        save_params(reference_avatar(humanoid(), 16, 16), params);
    }
};

}  // namespace

TEST_SUITE("cli_io") {

TEST_CASE("number formatting round-trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
        double back;
        REQUIRE(parse_double(format_double(v), back));
        CHECK(back == v);
    }
    double x;
    CHECK_FALSE(parse_double("1.5x", x));
    CHECK_FALSE(parse_double("", x));
}

TEST_CASE("rig and params files round-trip") {
    const TemplateRig& rig = humanoid();
    const TemplateRig back = rig_from_string(rig_to_string(rig));
    CHECK(back.templateVertices == rig.templateVertices);
    CHECK(back.faces == rig.faces);
    CHECK(back.skinWeights == rig.skinWeights);
    CHECK(back.jointRegressor == rig.jointRegressor);
    CHECK(back.shapeBasis == rig.shapeBasis);
    CHECK(back.uv == rig.uv);
    CHECK(back.parents == rig.parents);
    CHECK(back.facial.lipPairs == rig.facial.lipPairs);

    const AvatarParams p = reference_avatar(rig, 8, 8);
    const AvatarParams q = params_from_string(params_to_string(p));
    CHECK((q.texture.data == p.texture.data).all());
    CHECK(q.displacement == p.displacement);
    CHECK_THROWS_AS(params_from_string("{\"format\": 3}"), ParseError);
    CHECK_THROWS_AS(rig_from_string("not json"), ParseError);
}

TEST_CASE("OBJ round trip") {
    const TemplateRig& rig = humanoid();
    const ObjMesh m = obj_from_string(mesh_to_obj(rig.templateVertices, rig));
    CHECK(m.vertices == rig.templateVertices);
    CHECK(m.faces == rig.faces);
    CHECK(m.texcoords.rows() == rig.numVertices());
    CHECK_THROWS_AS(obj_from_string("v 1 2\n", "m.obj"), ParseError);
}

TEST_CASE("image round trips") {
    Image img(5, 3);
    for (Index i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i % 256) / 255.0;
    CHECK((image_from_png(image_to_png(img)).data - img.data).abs().maxCoeff() < 1e-12);
    CHECK((image_from_ppm(image_to_ppm(img)).data - img.data).abs().maxCoeff() < 1e-12);
    // Out-of-range values are clamped.
    Image hot(1, 1, 2.0);
    CHECK(image_from_png(image_to_png(hot)).data.maxCoeff() == 1.0);
    CHECK_THROWS_AS(image_from_png("definitely not a png"), ParseError);
    CHECK_THROWS_AS(image_from_ppm("P6\n2 2\n255\nab"), ParseError);
}

TEST_CASE("missing files name the path") {
    CHECK_THROWS_AS(read_file("/nonexistent/avatar/file.txt"), FileError);
}

TEST_CASE("argument errors") {
    CHECK(run_cli({}).code == cli::kBadInput);
    CHECK(run_cli({"fly"}).code == cli::kBadInput);
    CHECK(run_cli({"render"}).code == cli::kBadInput);  // --params is required
    CHECK(run_cli({"--help"}).code == cli::kOk);
    CHECK(run_cli({"validate", "--criteria", "12"}).code == cli::kBadInput);
    CHECK(run_cli({"validate", "--mutate", "typo", "--dry-run"}).code == cli::kBadInput);
}

TEST_CASE("dry runs check inputs without computing") {
    Inputs in;
    const Outcome g = run_cli({"--dry-run", "generate"});
    CHECK(g.code == cli::kOk);
    CHECK(contains(g.out, "300 steps"));
    CHECK(run_cli({"--dry-run", "retarget", "--motion", in.motion, "--target", in.params}).code == cli::kOk);
    CHECK(run_cli({"--dry-run", "render", "--params", in.params, "--motion", in.motion, "--frames", "all"}).code == cli::kOk);
    CHECK(run_cli({"--dry-run", "validate"}).code == cli::kOk);
}

TEST_CASE("bad inputs are reported with exit code 2 or 3") {
    Inputs in;
    SUBCASE("missing rig file") {
        const std::string rig = (in.dir / "no_such_rig.json").string();
        const Outcome o = run_cli({"render", "--params", in.params, "--rig", rig, "--out", (in.dir / "r").string()});
        CHECK(o.code == cli::kBadInput);
        CHECK(contains(o.err, rig));
    }
    SUBCASE("malformed motion names the line") {
        std::string text = read_file(in.motion);
        text.replace(text.find("frameRate 30"), 12, "frameRate -1");
        write_file(in.dir / "bad.txt", text);
        const Outcome o = run_cli({"retarget", "--motion", (in.dir / "bad.txt").string(), "--target", in.params,
                                   "--out", (in.dir / "r").string()});
        CHECK(o.code == cli::kBadInput);
        CHECK(contains(o.err, "bad.txt:3"));
    }
    SUBCASE("motion for a different skeleton") {
        MotionClip clip = hold_pose(Pose::identity(22), 2);
        save_motion(clip, in.dir / "k22.txt");
        const Outcome o = run_cli({"retarget", "--motion", (in.dir / "k22.txt").string(), "--target", in.params,
                                   "--out", (in.dir / "r").string()});
        CHECK(o.code == cli::kJointMismatch);
        CHECK(contains(o.err, "22"));
    }
    SUBCASE("bad camera spec") {
        const Outcome o = run_cli({"render", "--params", in.params, "--camera", "side:0:10", "--out", (in.dir / "r").string()});
        CHECK(o.code == cli::kBadInput);
        CHECK(contains(o.err, "camera"));
        CHECK(run_cli({"render", "--params", in.params, "--camera", "head:0:95", "--out", (in.dir / "r").string()}).code ==
              cli::kBadInput);
    }
    SUBCASE("frame out of range") {
        const Outcome o = run_cli({"render", "--params", in.params, "--motion", in.motion, "--frames", "9",
                                   "--out", (in.dir / "r").string()});
        CHECK(o.code == cli::kBadInput);
        CHECK(contains(o.err, "out of range"));
    }
    SUBCASE("missing config") {
        CHECK(run_cli({"--config", (in.dir / "none.ini").string(), "--dry-run", "generate"}).code == cli::kBadInput);
    }
}

TEST_CASE("retargeting onto the source avatar is the identity") {
    Inputs in;
    save_params(AvatarParams::zeros(humanoid(), 4, 4), in.dir / "zero.json");
    const Outcome o = run_cli({"--out", (in.dir / "rt").string(), "retarget", "--motion", in.motion, "--target",
                               (in.dir / "zero.json").string()});
    REQUIRE(o.code == cli::kOk);
    CHECK(read_file(in.dir / "rt/motion.txt") == read_file(in.motion));
    const auto report = nlohmann::json::parse(read_file(in.dir / "rt/report.json"));
    CHECK(report["legRatio"].get<double>() == 1.0);
    CHECK(report["penetrationsAfter"].get<int>() == 0);
    CHECK(report["frames"].size() == 4);
}

TEST_CASE("render writes stable frames and skeleton maps") {
    Inputs in;
    auto render = [&](const std::string& out) {
        return run_cli({"--out", out, "render", "--params", in.params, "--motion", in.motion, "--frames", "1-2",
                        "--camera", "full_body:30:10:48", "--skeleton"});
    };
    REQUIRE(render((in.dir / "a").string()).code == cli::kOk);
    REQUIRE(render((in.dir / "b").string()).code == cli::kOk);
    for (const char* f : {"frame_0001.png", "frame_0002.png", "skeleton_0001.png", "skeleton_0002.png"}) {
        CAPTURE(f);
        CHECK(read_file(in.dir / "a" / f) == read_file(in.dir / "b" / f));
    }
    CHECK_FALSE(std::filesystem::exists(in.dir / "a/frame_0000.png"));
    const Image img = load_image(in.dir / "a/frame_0001.png");
    CHECK(img.width == 48);
    CHECK(img.data.minCoeff() < 0.5);  // something other than background
}

TEST_CASE("generate writes the manifest and one mesh per frame") {
    TempDir dir("gen");
    RunConfig c = desk_run_config();
    c.training.totalSteps = 2;
    c.training.clipLength = 2;
    c.training.t2iViewsPerStep = 1;
    c.training.camera.width = c.training.camera.height = 16;
    c.assets.textureWidth = c.assets.textureHeight = 8;
    c.assets.motionLength = 3;
    write_file(dir / "tiny.ini", run_config_to_string(c));
    const std::string out = (dir / "out").string();
    const Outcome o = run_cli({"--config", (dir / "tiny.ini").string(), "--out", out, "--seed", "5", "generate",
                               "--preview-camera", "full_body:0:10:32"});
    REQUIRE(o.code == cli::kOk);
    const auto m = nlohmann::json::parse(read_file(dir / "out/manifest.json"));
    CHECK(m["steps"] == 2);
    CHECK(m["seed"] == 5);
    CHECK(m["motion"]["frames"] == 3);
    REQUIRE(m["files"]["meshes"].size() == 3);
    for (const auto& f : m["files"]["meshes"]) CHECK(std::filesystem::exists(dir / "out" / f.get<std::string>()));
    for (const auto& f : m["files"]["previews"]) CHECK(std::filesystem::exists(dir / "out" / f.get<std::string>()));
    CHECK(m.contains("finalRenderMse"));
    CHECK(load_params(dir / "out/params.json").beta.size() == 10);
    CHECK(load_motion(dir / "out/motion.txt", 24).length() == 3);
    CHECK(load_run_config(dir / "out/config.ini").training.seed == 5);

    // Resuming a finished run is a no-op that reproduces the outputs.
    const Outcome again = run_cli({"--config", (dir / "tiny.ini").string(), "--out", (dir / "out2").string(), "--seed",
                                   "5", "generate", "--resume", (dir / "out/checkpoint.bin").string(),
                                   "--preview-camera", "full_body:0:10:32"});
    REQUIRE(again.code == cli::kOk);
    CHECK(read_file(dir / "out2/params.json") == read_file(dir / "out/params.json"));
}

TEST_CASE("validate reports one row per check and catches an injected defect") {
    const Outcome ok = run_cli({"validate", "--criteria", "1"});
    CHECK(ok.code == cli::kOk);
    CHECK(contains(ok.out, "PASS lbs_identity"));
    CHECK(contains(ok.out, "PASS lbs_rigid_root_isometry"));
    CHECK(contains(ok.out, "2/2 checks passed"));

    const Outcome bad = run_cli({"validate", "--mutate", "shape-grad-sign", "--criteria", "2"});
    CHECK(bad.code == cli::kFailure);
    CHECK(contains(bad.out, "FAIL grad_shape_fd"));
    CHECK(contains(bad.out, "PASS grad_laplacian_fd"));
}

}
