#include "forge/trainer.hpp"

#include "forge/io.hpp"
#include "forge/parallel.hpp"

#include <json.hpp>
#include <zlib.h>

#include <cmath>
#include <cstring>
#include <numbers>

namespace forge {

void TrainingConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw InvalidInput(std::string("invalid training config: ") + what);
    };
    require(totalSteps >= 0, "totalSteps must be >= 0");
    require(checkpointEvery >= 0, "checkpointEvery must be >= 0");
    require(learningRateTexture > 0 && learningRateGeometry > 0, "learning rates must be positive");
    require(deltaMax > 0, "deltaMax must be positive");
    require(t2iViewsPerStep >= 1, "t2iViewsPerStep must be >= 1");
    require(clipLength >= 2, "clipLength must be >= 2");
    require(cfgScale >= 1, "cfgScale must be >= 1");
    require(kFace >= 1 && kBody >= 1, "kFace and kBody must be >= 1");
    require(headViewProbability >= 0 && headViewProbability <= 1, "headViewProbability must lie in [0, 1]");
    require(motionRefreshEvery >= 1, "motionRefreshEvery must be >= 1");
    require(camera.width > 0 && camera.height > 0, "render resolution must be positive");
    require(camera.verticalFov > 0 && camera.verticalFov < std::numbers::pi, "fov must lie in (0, pi)");
    require(regularization.shape >= 0 && regularization.laplacian >= 0 && regularization.face >= 0,
            "regularization weights must be >= 0");
    require(tauMin >= 0 && tauMin <= tauMax && tauMax <= 1, "tau range must satisfy 0 <= tauMin <= tauMax <= 1");
    require(!promptId.empty(), "promptId must not be empty");
    schedule().validate();
}

DiffusionSchedule TrainingConfig::schedule() const {
    DiffusionSchedule s = DiffusionSchedule::linear(scheduleSteps, betaStart, betaEnd);
    s.weightKind = weightKind;
    s.weightConstant = weightConstant;
    return s;
}

ParamGrad ParamGrad::zerosLike(const AvatarParams& p) {
    ParamGrad g;
    g.beta = Vector::Zero(p.beta.size());
    g.psi = Vector::Zero(p.psi.size());
    g.displacement = Points::Zero(p.displacement.rows(), 3);
    g.texture = Image(p.texture.width, p.texture.height, 0.0);
    return g;
}

bool ParamGrad::allFinite() const {
    return beta.allFinite() && psi.allFinite() && displacement.allFinite() && texture.data.allFinite();
}

AdamState AdamState::zerosLike(const AvatarParams& p) {
    AdamState s;
    const Index sizes[kGroups] = {p.beta.size(), p.psi.size(), p.displacement.size(), p.texture.data.size()};
    for (Index n : sizes) {
        s.m.push_back(Vector::Zero(n));
        s.v.push_back(Vector::Zero(n));
    }
    return s;
}

bool adam_step(AvatarParams& params, const ParamGrad& grad, AdamState& state, const AdamOptions& o) {
    if (!grad.allFinite()) return false;
    if (state.m.size() != AdamState::kGroups) state = AdamState::zerosLike(params);

    Eigen::Map<Vector> values[AdamState::kGroups] = {
        {params.beta.data(), params.beta.size()},
        {params.psi.data(), params.psi.size()},
        {params.displacement.data(), params.displacement.size()},
        {params.texture.data.data(), params.texture.data.size()}};
    const Eigen::Map<const Vector> grads[AdamState::kGroups] = {
        {grad.beta.data(), grad.beta.size()},
        {grad.psi.data(), grad.psi.size()},
        {grad.displacement.data(), grad.displacement.size()},
        {grad.texture.data.data(), grad.texture.data.size()}};
    const double lr[AdamState::kGroups] = {o.lrGeometry, o.lrGeometry, o.lrGeometry, o.lrTexture};
    for (int k = 0; k < AdamState::kGroups; ++k)
        if (grads[k].size() != values[k].size() || state.m[k].size() != values[k].size())
            throw InvalidInput("gradient shapes do not match parameters");

    ++state.step;
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
    for (int k = 0; k < AdamState::kGroups; ++k) {
        Vector& m = state.m[k];
        Vector& v = state.v[k];
        m = o.beta1 * m + (1.0 - o.beta1) * grads[k];
        v = o.beta2 * v + (1.0 - o.beta2) * grads[k].cwiseProduct(grads[k]);
        values[k].array() -= lr[k] * (m.array() / c1) / ((v.array() / c2).sqrt() + o.eps);
    }
    params.clampTexture();
    if (o.deltaMax > 0) params.clampDisplacement(o.deltaMax);
    return true;
}

std::string log_record_json(const LogRecord& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["branch"] = r.branch;
    j["tau"] = r.tau;
    j["loss"] = {{"sds", r.sds}, {"shape", r.shape}, {"laplacian", r.laplacian}, {"face", r.face}, {"total", r.total}};
    j["gradNorm"] = {{"beta", r.gradBeta}, {"psi", r.gradPsi}, {"displacement", r.gradDisplacement}, {"texture", r.gradTexture}};
    j["penetrations"] = r.penetrations;
    j["skipped"] = r.skipped;
    return j.dump();
}

LogRecord log_record_from_json(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        LogRecord r;
        r.step = j.at("step").get<int>();
        r.branch = j.at("branch").get<std::string>();
        r.tau = j.at("tau").get<int>();
        const auto& l = j.at("loss");
        r.sds = l.at("sds").get<double>();
        r.shape = l.at("shape").get<double>();
        r.laplacian = l.at("laplacian").get<double>();
        r.face = l.at("face").get<double>();
        r.total = l.at("total").get<double>();
        const auto& g = j.at("gradNorm");
        r.gradBeta = g.at("beta").get<double>();
        r.gradPsi = g.at("psi").get<double>();
        r.gradDisplacement = g.at("displacement").get<double>();
        r.gradTexture = g.at("texture").get<double>();
        r.penetrations = j.at("penetrations").get<int>();
        r.skipped = j.at("skipped").get<bool>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("<log>", 0, e.what());
    }
}

// ---------------------------------------------------------------------------
// Checkpoints: "AFCKPT\r\n", u32 version, u64 payload size, payload, u32 crc32.
// Integers and doubles are stored in host (little-endian) byte order.

namespace {

constexpr char kMagic[8] = {'A', 'F', 'C', 'K', 'P', 'T', '\r', '\n'};

class Writer {
   public:
    template <typename T>
    void pod(T value) {
        char b[sizeof(T)];
        std::memcpy(b, &value, sizeof(T));
        out_.append(b, sizeof(T));
    }
    void str(const std::string& s) {
        pod<std::uint64_t>(s.size());
        out_ += s;
    }
    void doubles(const double* p, std::size_t n) {
        pod<std::uint64_t>(n);
        out_.append(reinterpret_cast<const char*>(p), n * sizeof(double));
    }
    void vec(const Vector& v) { doubles(v.data(), static_cast<std::size_t>(v.size())); }
    void points(const Points& p) { doubles(p.data(), static_cast<std::size_t>(p.size())); }
    void image(const Image& img) {
        pod<std::int32_t>(img.width);
        pod<std::int32_t>(img.height);
        doubles(img.data.data(), static_cast<std::size_t>(img.data.size()));
    }
    const std::string& bytes() const { return out_; }

   private:
    std::string out_;
};

class Reader {
   public:
    Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}
    template <typename T>
    T pod() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    std::string str() {
        const auto n = pod<std::uint64_t>();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<double> doubles() {
        const auto n = pod<std::uint64_t>();
        if (n > (data_.size() - pos_) / sizeof(double)) fail("truncated array");
        std::vector<double> v(n);
        std::memcpy(v.data(), data_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return v;
    }
    Vector vec() {
        const auto d = doubles();
        return Eigen::Map<const Vector>(d.data(), static_cast<Index>(d.size()));
    }
    Points points() {
        const auto d = doubles();
        if (d.size() % 3) fail("point array length is not a multiple of 3");
        return Eigen::Map<const Points>(d.data(), static_cast<Index>(d.size() / 3), 3);
    }
    Image image() {
        const int w = pod<std::int32_t>(), h = pod<std::int32_t>();
        const auto d = doubles();
        if (w < 0 || h < 0 || d.size() != 3ull * w * h) fail("image size mismatch");
        Image img(w, h);
        img.data = Eigen::Map<const Eigen::ArrayXd>(d.data(), static_cast<Index>(d.size()));
        return img;
    }
    bool atEnd() const { return pos_ == data_.size(); }
    [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, 0, "corrupt checkpoint: " + what); }

   private:
    void need(std::size_t n) const {
        if (n > data_.size() - pos_) fail("unexpected end of data");
    }
    const std::string& data_;
    std::string source_;
    std::size_t pos_ = 0;
};

void write_pose(Writer& w, const Pose& p) {
    w.doubles(p.rootTranslation.data(), 3);
    w.points(p.jointRotations);
}

Pose read_pose(Reader& r) {
    Pose p;
    const auto root = r.doubles();
    if (root.size() != 3) r.fail("pose root must have 3 values");
    p.rootTranslation = Vec3(root[0], root[1], root[2]);
    p.jointRotations = r.points();
    return p;
}

}  // namespace

void save_checkpoint(const TrainState& s, const std::filesystem::path& path) {
    if (path.empty()) throw InvalidInput("checkpoint path is empty");
    Writer w;
    w.pod<std::int64_t>(s.step);
    w.pod<std::int32_t>(s.warnings);
    w.vec(s.params.beta);
    w.vec(s.params.psi);
    w.points(s.params.displacement);
    w.image(s.params.texture);
    w.pod<std::int64_t>(s.adam.step);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(s.adam.m.size()));
    for (std::size_t k = 0; k < s.adam.m.size(); ++k) {
        w.vec(s.adam.m[k]);
        w.vec(s.adam.v[k]);
    }
    w.str(motion_to_string(s.source));
    w.str(motion_to_string(s.motion));
    w.pod<std::uint64_t>(s.residual.size());
    for (const Pose& p : s.residual) write_pose(w, p);
    w.str(s.rng.state());
    w.pod<std::uint64_t>(s.log.size());
    for (const LogRecord& r : s.log) w.str(log_record_json(r));

    const std::string& payload = w.bytes();
    Writer file;
    std::string out(kMagic, sizeof kMagic);
    file.pod<std::uint32_t>(kCheckpointVersion);
    file.pod<std::uint64_t>(payload.size());
    out += file.bytes();
    out += payload;
    Writer tail;
    tail.pod<std::uint32_t>(static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()))));
    out += tail.bytes();
    write_file(path, out);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    if (path.empty()) throw InvalidInput("checkpoint path is empty");
    const std::string data = read_file(path);
    const std::string source = path.string();
    Reader head(data, source);
    if (data.size() < sizeof kMagic + 16 || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0)
        throw ParseError(source, 0, "not an avatar-forge checkpoint");
    for (std::size_t i = 0; i < sizeof kMagic; ++i) head.pod<char>();
    const auto version = head.pod<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw ParseError(source, 0, "unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                        std::to_string(kCheckpointVersion) + ")");
    const auto size = head.pod<std::uint64_t>();
    const std::size_t offset = sizeof kMagic + 12;
    if (size != data.size() - offset - 4) throw ParseError(source, 0, "corrupt checkpoint: size mismatch");
    const std::string payload = data.substr(offset, size);
    std::uint32_t stored;
    std::memcpy(&stored, data.data() + offset + size, 4);
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
    if (crc != stored) throw ParseError(source, 0, "corrupt checkpoint: checksum mismatch");

    Reader r(payload, source);
    TrainState s;
    s.step = static_cast<int>(r.pod<std::int64_t>());
    s.warnings = r.pod<std::int32_t>();
    s.params.beta = r.vec();
    s.params.psi = r.vec();
    s.params.displacement = r.points();
    s.params.texture = r.image();
    s.adam.step = r.pod<std::int64_t>();
    const auto groups = r.pod<std::uint32_t>();
    if (groups != 0 && groups != AdamState::kGroups) r.fail("unexpected optimizer group count");
    for (std::uint32_t k = 0; k < groups; ++k) {
        s.adam.m.push_back(r.vec());
        s.adam.v.push_back(r.vec());
    }
    s.source = motion_from_string(r.str(), source + ":source");
    s.motion = motion_from_string(r.str(), source + ":motion");
    const auto nres = r.pod<std::uint64_t>();
    if (nres > payload.size()) r.fail("implausible residual count");
    for (std::uint64_t i = 0; i < nres; ++i) s.residual.push_back(read_pose(r));
    try {
        s.rng.setState(r.str());
    } catch (const std::runtime_error&) {
        r.fail("invalid rng state");
    }
    const auto nlog = r.pod<std::uint64_t>();
    if (nlog > payload.size()) r.fail("implausible log length");
    for (std::uint64_t i = 0; i < nlog; ++i) s.log.push_back(log_record_from_json(r.str()));
    if (!r.atEnd()) r.fail("trailing data");
    return s;
}

// ---------------------------------------------------------------------------

TargetProvider ground_truth_targets(std::shared_ptr<const TemplateRig> rig, AvatarParams truth) {
    return [rig = std::move(rig), truth = std::move(truth)](const GuidanceContext& ctx) {
        std::vector<Image> out(ctx.views.size());
        parallel_for(ctx.views.size(), [&](std::size_t f) {
            const SceneView& view = ctx.views[f];
            out[f] = rasterize(pose_avatar(*rig, truth, view.pose), truth, *rig, view.camera).color;
        });
        return out;
    };
}

Priors ground_truth_priors(std::shared_ptr<const TemplateRig> rig, AvatarParams truth, const DiffusionSchedule& schedule) {
    auto prior = std::make_shared<OraclePrior>(schedule, ground_truth_targets(std::move(rig), std::move(truth)));
    return {prior, prior};
}

Trainer::Trainer(TrainingConfig config, const TemplateRig& rig, AvatarParams initial, MotionClip source, Priors priors)
    : config_(std::move(config)), rig_(rig), priors_(std::move(priors)) {
    config_.validate();
    initial.checkCompatible(rig_);
    source.validate();
    if (source.numJoints() != rig_.numJoints())
        throw JointCountMismatch("motion has " + std::to_string(source.numJoints()) + " joints, rig has " +
                                 std::to_string(rig_.numJoints()));
    state_.params = std::move(initial);
    state_.adam = AdamState::zerosLike(state_.params);
    state_.motion = source;  // Q^t_0 = Q^s
    state_.residual.assign(source.length(), Pose::identity(rig_.numJoints()));
    state_.source = std::move(source);
    state_.rng = Rng(config_.seed);
    schedule_ = config_.schedule();
    adjacency_ = mesh_adjacency(rig_.faces, rig_.numVertices());
    headJoint_ = rig_.jointIndex("head");
    if (!priors_.image || !priors_.video) throw InvalidInput("both image and video priors are required");
    if (static_cast<int>(state_.source.length()) < config_.clipLength)
        throw InvalidInput("motion is shorter than the training clip length");
}

Trainer::Trainer(TrainingConfig config, const TemplateRig& rig, TrainState resumed, Priors priors)
    : Trainer(config, rig, resumed.params, resumed.source, priors) {
    if (resumed.motion.numJoints() != rig_.numJoints() || resumed.motion.length() != state_.source.length())
        throw InvalidInput("checkpoint motion does not match its source clip");
    state_ = std::move(resumed);
    if (state_.adam.m.empty()) state_.adam = AdamState::zerosLike(state_.params);
}

namespace {

double norm(const Image& img) { return img.data.matrix().norm(); }

std::vector<int> joint_k(int numJoints, int headJoint, int kBody, int kFace) {
    std::vector<int> k(static_cast<std::size_t>(numJoints), kBody);
    k[headJoint] = kFace;
    return k;
}

}  // namespace

void Trainer::applyUpdate(ParamGrad& grad, LogRecord& record, const RegResult& reg) {
    grad.beta += reg.gradBeta;
    grad.displacement += reg.gradDisplacement;
    record.shape = reg.shape;
    record.laplacian = reg.laplacian;
    record.face = reg.face;
    record.total = record.sds + reg.total;
    record.gradBeta = grad.beta.norm();
    record.gradPsi = grad.psi.norm();
    record.gradDisplacement = grad.displacement.norm();
    record.gradTexture = norm(grad.texture);

    AdamOptions o;
    o.lrGeometry = config_.learningRateGeometry;
    o.lrTexture = config_.learningRateTexture;
    o.deltaMax = config_.deltaMax;
    if (!adam_step(state_.params, grad, state_.adam, o)) {
        record.skipped = true;
        ++state_.warnings;
    }
    state_.log.push_back(record);
}

namespace {

// Regularizers act on the pose-independent canonical mesh T(beta, psi, delta).
ParamGrad chain_to_params(const TemplateRig& rig, const Points& gradRest, const Image& gradTexture) {
    ParamGrad g;
    GeometryGrad geo = shape_vjp(rig, gradRest);
    g.beta = std::move(geo.beta);
    g.psi = std::move(geo.psi);
    g.displacement = std::move(geo.displacement);
    g.texture = gradTexture;
    return g;
}

}  // namespace

void Trainer::t2vBranch() {
    const int L = static_cast<int>(state_.motion.length());
    const int l = config_.clipLength;
    const int start = static_cast<int>(state_.rng.integer(0, L - l));
    const AvatarParams& params = state_.params;

    const PosedMesh middle = pose_avatar(rig_, params, state_.motion.frames[start + l / 2]);
    const Camera camera = sample_camera(state_.rng, CameraMode::FullBody, framing_from_mesh(rig_, middle), config_.camera);
    const int tau = sample_tau(state_.rng, schedule_, config_.tauMin, config_.tauMax);
    std::vector<Image> eps;
    for (int f = 0; f < l; ++f) eps.push_back(standard_normal_image(state_.rng, camera.width, camera.height));

    std::vector<PosedMesh> posed(l);
    std::vector<RenderBuffers> buffers(l);
    GuidanceContext ctx;
    ctx.promptId = config_.promptId;
    ctx.cfgScale = config_.cfgScale;
    ctx.clipLength = l;
    ctx.skeletons.resize(l);
    ctx.views.resize(l);
    const std::vector<int> k = joint_k(rig_.numJoints(), headJoint_, config_.kBody, config_.kFace);
    parallel_for(l, [&](std::size_t f) {
        const Pose& q = state_.motion.frames[start + f];
        posed[f] = pose_avatar(rig_, params, q);
        buffers[f] = rasterize(posed[f], params, rig_, camera);
        ctx.skeletons[f] = occluded_skeleton(posed[f].joints, posed[f], camera, buffers[f], k, rig_.parents);
        ctx.views[f] = {camera, q};
    });
    std::vector<Image> frames;
    std::vector<Mask> masks;
    for (int f = 0; f < l; ++f) {
        frames.push_back(buffers[f].color);
        masks.push_back(buffers[f].nonFaceMask);
    }
    const std::vector<SdsResult> sds = masked_seq_sds_grad(*priors_.video, frames, masks, ctx, tau, eps, schedule_);

    std::vector<RenderGrad> back(l);
    std::vector<Points> rest(l);
    parallel_for(l, [&](std::size_t f) {
        back[f] = render_backward(buffers[f], posed[f], params, rig_, camera, sds[f].grad);
        rest[f] = skin_vjp(rig_, posed[f], back[f].vertices);
    });
    // Frame gradients are averaged so one clip weighs like one view.
    Points gradRest = Points::Zero(rig_.numVertices(), 3);
    Image gradTex(params.texture.width, params.texture.height, 0.0);
    LogRecord rec;
    rec.step = state_.step;
    rec.branch = "t2v";
    rec.tau = tau;
    for (int f = 0; f < l; ++f) {
        gradRest += rest[f] / l;
        gradTex.data += back[f].texture.data / l;
        rec.sds += sds[f].loss / l;
    }

    const PosedMesh canonical = pose_avatar(rig_, params, Pose::identity(rig_.numJoints()));
    const RegResult reg = total_reg(params, canonical.vertices, rig_, adjacency_, config_.regularization);
    gradRest += reg.gradVertices;
    ParamGrad grad = chain_to_params(rig_, gradRest, gradTex);
    applyUpdate(grad, rec, reg);
}

void Trainer::t2iBranch() {
    const int L = static_cast<int>(state_.motion.length());
    const AvatarParams& params = state_.params;
    const Pose q = state_.motion.frames[state_.rng.integer(0, L - 1)];
    const CameraMode mode = state_.rng.uniform() < config_.headViewProbability ? CameraMode::Head : CameraMode::FullBody;
    const PosedMesh posed = pose_avatar(rig_, params, q);
    const Camera camera = sample_camera(state_.rng, mode, framing_from_mesh(rig_, posed), config_.camera);
    const int tau = sample_tau(state_.rng, schedule_, config_.tauMin, config_.tauMax);
    const Image eps = standard_normal_image(state_.rng, camera.width, camera.height);

    const RenderBuffers buffers = rasterize(posed, params, rig_, camera);
    GuidanceContext ctx;
    ctx.promptId = config_.promptId;
    ctx.cfgScale = config_.cfgScale;
    ctx.skeletons.push_back(occluded_skeleton(posed.joints, posed, camera, buffers,
                                              joint_k(rig_.numJoints(), headJoint_, config_.kBody, config_.kFace),
                                              rig_.parents));
    ctx.views.push_back({camera, q});
    const SdsResult sds = sds_grad(*priors_.image, buffers.color, ctx, tau, eps, schedule_);
    const RenderGrad back = render_backward(buffers, posed, params, rig_, camera, sds.grad);

    LogRecord rec;
    rec.step = state_.step;
    rec.branch = "t2i";
    rec.tau = tau;
    rec.sds = sds.loss;
    Points gradRest = skin_vjp(rig_, posed, back.vertices);
    const PosedMesh canonical = pose_avatar(rig_, params, Pose::identity(rig_.numJoints()));
    const RegResult reg = total_reg(params, canonical.vertices, rig_, adjacency_, config_.regularization);
    gradRest += reg.gradVertices;
    ParamGrad grad = chain_to_params(rig_, gradRest, back.texture);
    applyUpdate(grad, rec, reg);
}

void Trainer::refreshMotion() {
    const PosedMesh canonical = pose_avatar(rig_, state_.params, Pose::identity(rig_.numJoints()));
    RetargetResult r = retarget(state_.source, rig_, canonical, canonical.joints);
    state_.motion = std::move(r.clip);
    state_.residual = std::move(r.residual);
    LogRecord rec;
    rec.step = state_.step;
    rec.branch = "motion";
    rec.penetrations = static_cast<int>(r.unresolvedFrames.size());
    if (!r.converged()) ++state_.warnings;
    state_.log.push_back(rec);
}

void Trainer::step() {
    t2vBranch();
    for (int i = 0; i < config_.t2iViewsPerStep; ++i) t2iBranch();
    if ((state_.step + 1) % config_.motionRefreshEvery == 0) refreshMotion();
    ++state_.step;
}

void Trainer::run(const std::filesystem::path& checkpointPath) {
    while (!done()) {
        TrainState before = checkpointPath.empty() ? TrainState() : state_;
        try {
            step();
        } catch (...) {
            if (!checkpointPath.empty()) save_checkpoint(before, checkpointPath);
            throw;
        }
        if (!checkpointPath.empty() && config_.checkpointEvery > 0 && state_.step % config_.checkpointEvery == 0)
            save_checkpoint(state_, checkpointPath);
    }
}

TrainResult train(const TrainingConfig& config, const TemplateRig& rig, const AvatarParams& initial,
                  const MotionClip& source, const Priors& priors) {
    Trainer t(config, rig, initial, source, priors);
    t.run();
    const TrainState& s = t.state();
    return {s.params, s.motion, s.log, s.warnings};
}

std::vector<double> per_step_loss(const std::vector<LogRecord>& log) {
    std::vector<double> sum, count;
    for (const LogRecord& r : log) {
        if (r.branch != "t2v" && r.branch != "t2i") continue;
        if (r.step >= static_cast<int>(sum.size())) {
            sum.resize(r.step + 1, 0.0);
            count.resize(r.step + 1, 0.0);
        }
        sum[r.step] += r.total;
        count[r.step] += 1.0;
    }
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = count[i] > 0 ? sum[i] / count[i] : 0.0;
    return sum;
}

std::vector<double> block_means(const std::vector<double>& values, int window, int from) {
    if (window < 1) throw InvalidInput("window must be >= 1");
    std::vector<double> out;
    for (std::size_t b = static_cast<std::size_t>(std::max(from, 0)); b + window <= values.size(); b += window) {
        double s = 0.0;
        for (int i = 0; i < window; ++i) s += values[b + i];
        out.push_back(s / window);
    }
    return out;
}

double evaluate_render_mse(const TemplateRig& rig, const AvatarParams& params, const AvatarParams& truth,
                           const MotionClip& motion, const CameraSettings& settings) {
    motion.validate();
    constexpr int kViews = 8;
    const double elevation = 10.0 * std::numbers::pi / 180.0;
    double total = 0.0;
    for (int v = 0; v < kViews; ++v) {
        const Pose& q = motion.frames[(static_cast<std::size_t>(v) * motion.length()) / kViews];
        const PosedMesh target = pose_avatar(rig, truth, q);
        const Camera cam = orbit_camera(CameraMode::FullBody, 2.0 * std::numbers::pi * v / kViews, elevation,
                                        framing_from_mesh(rig, target), settings);
        const Image a = rasterize(pose_avatar(rig, params, q), params, rig, cam).color;
        const Image b = rasterize(target, truth, rig, cam).color;
        total += mse(a, b);
    }
    return total / kViews;
}

}  // namespace forge
