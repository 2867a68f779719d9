#pragma once

#include "forge/guidance.hpp"
#include "forge/motion.hpp"
#include "forge/regularize.hpp"
#include "forge/render.hpp"
#include "forge/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace forge {

struct TrainingConfig {
    std::uint64_t seed = 0;
    int totalSteps = 300;
    int checkpointEvery = 0;  // 0 disables periodic checkpoints

    double learningRateTexture = 5e-3;
    double learningRateGeometry = 1e-4;  // beta, psi, displacement
    double deltaMax = 0.1;

    int t2iViewsPerStep = 4;
    int clipLength = 8;
    double cfgScale = 100.0;
    int kFace = 20;
    int kBody = 50;
    double headViewProbability = 0.3;
    int motionRefreshEvery = 1;

    CameraSettings camera;
    RegWeights regularization;

    int scheduleSteps = 1000;
    double betaStart = 8.5e-4;
    double betaEnd = 1.2e-2;
    double tauMin = 0.02;
    double tauMax = 0.98;
    WeightKind weightKind = WeightKind::OneMinusAlphaBar;
    double weightConstant = 1.0;

    std::string promptId = "avatar";

    void validate() const;
    DiffusionSchedule schedule() const;
};

/// Per-group gradient / parameter container mirroring AvatarParams.
struct ParamGrad {
    Vector beta;
    Vector psi;
    Points displacement;
    Image texture;

    static ParamGrad zerosLike(const AvatarParams& p);
    bool allFinite() const;
};

struct AdamState {
    static constexpr int kGroups = 4;  // beta, psi, displacement, texture
    std::int64_t step = 0;
    std::vector<Vector> m;
    std::vector<Vector> v;

    static AdamState zerosLike(const AvatarParams& p);
};

struct AdamOptions {
    double lrGeometry = 1e-4;
    double lrTexture = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double deltaMax = 0.1;  // <= 0 disables the displacement bound
};

/// Bias-corrected Adam on every group, then texture clamp and displacement
/// bound. Returns false (and leaves everything untouched) on a non-finite gradient.
bool adam_step(AvatarParams& params, const ParamGrad& grad, AdamState& state, const AdamOptions& options);

struct LogRecord {
    int step = 0;
    std::string branch;  // "t2v", "t2i", "motion"
    int tau = -1;
    double sds = 0.0;
    double shape = 0.0;
    double laplacian = 0.0;
    double face = 0.0;
    double total = 0.0;
    double gradBeta = 0.0;  // L2 norms
    double gradPsi = 0.0;
    double gradDisplacement = 0.0;
    double gradTexture = 0.0;
    int penetrations = 0;  // motion records: unresolved frames
    bool skipped = false;

    bool operator==(const LogRecord&) const = default;
};

std::string log_record_json(const LogRecord& r);
LogRecord log_record_from_json(const std::string& line);

/// Everything needed to continue a run bit-exactly.
struct TrainState {
    int step = 0;
    AvatarParams params;
    AdamState adam;
    MotionClip source;
    MotionClip motion;
    std::vector<Pose> residual;
    Rng rng;
    std::vector<LogRecord> log;
    int warnings = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

struct Priors {
    std::shared_ptr<const DenoisingPrior> image;
    std::shared_ptr<const DenoisingPrior> video;
};

/// Oracle targets rendered from a known avatar at each context view.
TargetProvider ground_truth_targets(std::shared_ptr<const TemplateRig> rig, AvatarParams truth);
Priors ground_truth_priors(std::shared_ptr<const TemplateRig> rig, AvatarParams truth, const DiffusionSchedule& schedule);

class Trainer {
   public:
    Trainer(TrainingConfig config, const TemplateRig& rig, AvatarParams initial, MotionClip source, Priors priors);
    Trainer(TrainingConfig config, const TemplateRig& rig, TrainState resumed, Priors priors);

    /// One outer iteration: T2V update, n T2I updates, motion refresh.
    void step();
    /// Runs until config.totalSteps. With a checkpoint path, saves every
    /// checkpointEvery steps and, on failure, the state at the start of the failed step.
    void run(const std::filesystem::path& checkpointPath = {});

    const TrainState& state() const { return state_; }
    bool done() const { return state_.step >= config_.totalSteps; }
    const TrainingConfig& config() const { return config_; }

   private:
    void t2vBranch();
    void t2iBranch();
    void refreshMotion();
    void applyUpdate(ParamGrad& grad, LogRecord& record, const RegResult& reg);

    TrainingConfig config_;
    const TemplateRig& rig_;
    Priors priors_;
    DiffusionSchedule schedule_;
    Adjacency adjacency_;
    TrainState state_;
    int headJoint_;
};

struct TrainResult {
    AvatarParams params;
    MotionClip motion;
    std::vector<LogRecord> log;
    int warnings = 0;
};

TrainResult train(const TrainingConfig& config, const TemplateRig& rig, const AvatarParams& initial,
                  const MotionClip& source, const Priors& priors);

/// Mean over steps of the mean total loss of each step's records.
std::vector<double> per_step_loss(const std::vector<LogRecord>& log);
/// Means of consecutive non-overlapping blocks of `window` steps, starting at `from`.
std::vector<double> block_means(const std::vector<double>& values, int window, int from);

/// Mean render MSE of `params` vs `truth` over 8 orbit views spread across the clip.
double evaluate_render_mse(const TemplateRig& rig, const AvatarParams& params, const AvatarParams& truth,
                           const MotionClip& motion, const CameraSettings& settings);

}  // namespace forge
