#pragma once

#include "forge/render.hpp"
#include "forge/rng.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace forge {

enum class WeightKind { OneMinusAlphaBar, Constant };

struct DiffusionSchedule {
    Vector alphaBar;  // cumulative alpha, strictly decreasing in (0, 1)
    WeightKind weightKind = WeightKind::OneMinusAlphaBar;
    double weightConstant = 1.0;

    /// Linear per-step noise variance from betaStart to betaEnd.
    static DiffusionSchedule linear(int steps = 1000, double betaStart = 8.5e-4, double betaEnd = 1.2e-2);

    int steps() const { return static_cast<int>(alphaBar.size()); }
    double alpha(int tau) const;  // throws InvalidInput when out of range
    double weight(int tau) const;
    void validate() const;
};

// Array-level forward diffusion and oracle noise; shapes must match.
Eigen::ArrayXd add_noise(const Eigen::ArrayXd& x, int tau, const Eigen::ArrayXd& eps, const DiffusionSchedule& schedule);
Eigen::ArrayXd oracle_predict_noise(const Eigen::ArrayXd& noisy, int tau, const Eigen::ArrayXd& target,
                                    const DiffusionSchedule& schedule);
Eigen::ArrayXd cfg_combine(const Eigen::ArrayXd& epsCond, const Eigen::ArrayXd& epsUncond, double scale);
/// One-step clean-image estimate implied by a noise prediction.
Eigen::ArrayXd denoised_estimate(const Eigen::ArrayXd& noisy, int tau, const Eigen::ArrayXd& epsHat,
                                 const DiffusionSchedule& schedule);

Image add_noise(const Image& x, int tau, const Image& eps, const DiffusionSchedule& schedule);
Image oracle_predict_noise(const Image& noisy, int tau, const Image& target, const DiffusionSchedule& schedule);

/// Everything a renderer-backed prior may need to know about the views.
struct SceneView {
    Camera camera;
    Pose pose;
};

struct GuidanceContext {
    std::string promptId;
    double cfgScale = 100.0;
    std::vector<SkeletonMap> skeletons;  // one per frame; empty means unconditioned
    const Mask* mask = nullptr;
    int clipLength = 1;
    std::vector<SceneView> views;  // one per frame; opaque to generic priors

    void validate(int width, int height) const;
};

class DenoisingPrior {
   public:
    virtual ~DenoisingPrior() = default;
    /// One noisy image per frame in, one noise prediction per frame out.
    virtual std::vector<Image> predictNoise(const std::vector<Image>& noisy, int tau, const GuidanceContext& context) const = 0;
    virtual bool hasUnconditional() const { return false; }
    virtual std::vector<Image> predictNoiseUnconditional(const std::vector<Image>& noisy, int tau,
                                                         const GuidanceContext& context) const;
};

/// Maps a context to the clean images the oracle believes generated x_tau.
using TargetProvider = std::function<std::vector<Image>(const GuidanceContext&)>;

class OraclePrior : public DenoisingPrior {
   public:
    OraclePrior(DiffusionSchedule schedule, TargetProvider targets)
        : schedule_(std::move(schedule)), targets_(std::move(targets)) {}
    std::vector<Image> predictNoise(const std::vector<Image>& noisy, int tau, const GuidanceContext& context) const override;
    const DiffusionSchedule& schedule() const { return schedule_; }

   private:
    DiffusionSchedule schedule_;
    TargetProvider targets_;
};

/// promptId -> static image or clip targets.
class TargetRegistry {
   public:
    void add(const std::string& promptId, std::vector<Image> frames);
    bool contains(const std::string& promptId) const { return entries_.count(promptId) > 0; }
    /// Frames for the prompt; a single registered image is reused for every frame.
    std::vector<Image> lookup(const std::string& promptId, int frames) const;
    TargetProvider provider() const;

    /// Directory layout: `<promptId>.ppm` (image) or `<promptId>/frame_%04d.ppm` (clip).
    static TargetRegistry load(const std::filesystem::path& dir);

   private:
    std::map<std::string, std::vector<Image>> entries_;
};

struct SdsResult {
    Image grad;
    Image noisy;
    Image predictedNoise;
    double loss = 0.0;  // MSE between x and the one-step denoised estimate
};

/// grad = w(tau) * (eps_hat - eps), eps_hat CFG-combined when the prior has
/// an unconditional branch.
SdsResult sds_grad(const DenoisingPrior& prior, const Image& x, const GuidanceContext& context, int tau, const Image& eps,
                   const DiffusionSchedule& schedule);

/// Per-frame mask (x) w(tau) (eps_hat_f - eps_f) with the prior seeing the whole clip.
std::vector<SdsResult> masked_seq_sds_grad(const DenoisingPrior& videoPrior, const std::vector<Image>& frames,
                                           const std::vector<Mask>& masks, const GuidanceContext& context, int tau,
                                           const std::vector<Image>& eps, const DiffusionSchedule& schedule);

/// Uniform integer tau in [ceil(lo*T), floor(hi*T)] clipped to [0, T-1].
int sample_tau(Rng& rng, const DiffusionSchedule& schedule, double lo = 0.02, double hi = 0.98);
Image standard_normal_image(Rng& rng, int width, int height);

double mse(const Image& a, const Image& b);

}  // namespace forge
