#include "forge/guidance.hpp"

#include "forge/io.hpp"

#include <cmath>
#include <cstdio>

namespace forge {

DiffusionSchedule DiffusionSchedule::linear(int steps, double betaStart, double betaEnd) {
    if (steps < 2) throw InvalidInput("diffusion schedule needs at least 2 steps");
    if (!(betaStart > 0 && betaEnd < 1 && betaStart <= betaEnd)) throw InvalidInput("invalid beta range");
    DiffusionSchedule s;
    s.alphaBar.resize(steps);
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
        const double beta = betaStart + (betaEnd - betaStart) * t / (steps - 1);
        prod *= 1.0 - beta;
        s.alphaBar[t] = prod;
    }
    return s;
}

double DiffusionSchedule::alpha(int tau) const {
    if (tau < 0 || tau >= steps()) throw InvalidInput("timestep " + std::to_string(tau) + " out of range");
    return alphaBar[tau];
}

double DiffusionSchedule::weight(int tau) const {
    const double a = alpha(tau);
    return weightKind == WeightKind::Constant ? weightConstant : 1.0 - a;
}

void DiffusionSchedule::validate() const {
    if (steps() < 2) throw InvalidInput("diffusion schedule needs at least 2 steps");
    for (int t = 0; t < steps(); ++t) {
        if (!(alphaBar[t] > 0.0 && alphaBar[t] < 1.0)) throw InvalidInput("alphaBar must lie in (0, 1)");
        if (t > 0 && !(alphaBar[t] < alphaBar[t - 1])) throw InvalidInput("alphaBar must be strictly decreasing");
    }
    if (weightKind == WeightKind::Constant && !(weightConstant >= 0.0)) throw InvalidInput("weight must be non-negative");
}

namespace {

constexpr double kMaxAlpha = 1.0 - 1e-6;

void require_same_size(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
    if (a.size() != b.size()) throw InvalidInput("array shapes do not match");
}

}  // namespace

Eigen::ArrayXd add_noise(const Eigen::ArrayXd& x, int tau, const Eigen::ArrayXd& eps, const DiffusionSchedule& schedule) {
    require_same_size(x, eps);
    const double a = schedule.alpha(tau);
    return std::sqrt(a) * x + std::sqrt(1.0 - a) * eps;
}

Eigen::ArrayXd oracle_predict_noise(const Eigen::ArrayXd& noisy, int tau, const Eigen::ArrayXd& target,
                                    const DiffusionSchedule& schedule) {
    require_same_size(noisy, target);
    const double a = std::min(schedule.alpha(tau), kMaxAlpha);
    return (noisy - std::sqrt(a) * target) / std::sqrt(1.0 - a);
}

Eigen::ArrayXd cfg_combine(const Eigen::ArrayXd& epsCond, const Eigen::ArrayXd& epsUncond, double scale) {
    require_same_size(epsCond, epsUncond);
    return epsUncond + scale * (epsCond - epsUncond);
}

Eigen::ArrayXd denoised_estimate(const Eigen::ArrayXd& noisy, int tau, const Eigen::ArrayXd& epsHat,
                                 const DiffusionSchedule& schedule) {
    require_same_size(noisy, epsHat);
    const double a = std::min(schedule.alpha(tau), kMaxAlpha);
    return (noisy - std::sqrt(1.0 - a) * epsHat) / std::sqrt(a);
}

namespace {

Image like(const Image& shape, Eigen::ArrayXd data) {
    Image out;
    out.width = shape.width;
    out.height = shape.height;
    out.data = std::move(data);
    return out;
}

}  // namespace

Image add_noise(const Image& x, int tau, const Image& eps, const DiffusionSchedule& schedule) {
    if (!x.sameShape(eps)) throw InvalidInput("noise shape does not match image");
    return like(x, add_noise(x.data, tau, eps.data, schedule));
}

Image oracle_predict_noise(const Image& noisy, int tau, const Image& target, const DiffusionSchedule& schedule) {
    if (!noisy.sameShape(target)) throw InvalidInput("target shape does not match image");
    return like(noisy, oracle_predict_noise(noisy.data, tau, target.data, schedule));
}

void GuidanceContext::validate(int width, int height) const {
    if (!(cfgScale >= 1.0)) throw InvalidInput("cfgScale must be >= 1");
    if (clipLength < 1) throw InvalidInput("clipLength must be >= 1");
    if (mask && (mask->width != width || mask->height != height)) throw InvalidInput("mask shape does not match image");
}

std::vector<Image> DenoisingPrior::predictNoiseUnconditional(const std::vector<Image>&, int, const GuidanceContext&) const {
    throw std::logic_error("prior has no unconditional branch");
}

std::vector<Image> OraclePrior::predictNoise(const std::vector<Image>& noisy, int tau, const GuidanceContext& context) const {
    const std::vector<Image> targets = targets_(context);
    if (targets.size() != noisy.size()) throw InvalidInput("oracle target frame count does not match input");
    std::vector<Image> out;
    out.reserve(noisy.size());
    for (std::size_t f = 0; f < noisy.size(); ++f) out.push_back(oracle_predict_noise(noisy[f], tau, targets[f], schedule_));
    return out;
}

void TargetRegistry::add(const std::string& promptId, std::vector<Image> frames) {
    if (frames.empty()) throw InvalidInput("target registry entry needs at least one frame");
    entries_[promptId] = std::move(frames);
}

std::vector<Image> TargetRegistry::lookup(const std::string& promptId, int frames) const {
    const auto it = entries_.find(promptId);
    if (it == entries_.end()) throw InvalidInput("no target registered for prompt '" + promptId + "'");
    const auto& e = it->second;
    if (e.size() == 1) return std::vector<Image>(static_cast<std::size_t>(frames), e.front());
    if (static_cast<int>(e.size()) < frames) throw InvalidInput("target clip for '" + promptId + "' is too short");
    return {e.begin(), e.begin() + frames};
}

TargetProvider TargetRegistry::provider() const {
    return [registry = *this](const GuidanceContext& ctx) {
        return registry.lookup(ctx.promptId, std::max<int>(1, static_cast<int>(ctx.views.size())));
    };
}

TargetRegistry TargetRegistry::load(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw InvalidInput("target registry directory not found: " + dir.string());
    TargetRegistry reg;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const fs::path p = entry.path();
        if (entry.is_regular_file() && p.extension() == ".ppm") {
            reg.add(p.stem().string(), {load_ppm(p)});
        } else if (entry.is_directory()) {
            std::vector<Image> frames;
            for (int i = 0;; ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "frame_%04d.ppm", i);
                if (!fs::exists(p / name)) break;
                frames.push_back(load_ppm(p / name));
            }
            if (!frames.empty()) reg.add(p.filename().string(), std::move(frames));
        }
    }
    return reg;
}

namespace {

SdsResult finish(const Image& x, const Image& noisy, Eigen::ArrayXd epsHat, const Image& eps, int tau,
                 const DiffusionSchedule& schedule, const Mask* mask) {
    SdsResult r;
    r.noisy = noisy;
    r.predictedNoise = like(x, std::move(epsHat));
    r.grad = like(x, schedule.weight(tau) * (r.predictedNoise.data - eps.data));
    if (mask) {
        for (int y = 0; y < x.height; ++y)
            for (int px = 0; px < x.width; ++px)
                if (!(*mask)(px, y)) r.grad.pixel(px, y).setZero();
    }
    r.loss = (x.data - denoised_estimate(noisy.data, tau, r.predictedNoise.data, schedule)).square().mean();
    return r;
}

std::vector<Eigen::ArrayXd> guided_noise(const DenoisingPrior& prior, const std::vector<Image>& noisy, int tau,
                                         const GuidanceContext& context) {
    const std::vector<Image> cond = prior.predictNoise(noisy, tau, context);
    if (cond.size() != noisy.size()) throw std::runtime_error("prior returned the wrong number of frames");
    std::vector<Eigen::ArrayXd> out(cond.size());
    std::vector<Image> uncond;
    if (prior.hasUnconditional()) uncond = prior.predictNoiseUnconditional(noisy, tau, context);
    for (std::size_t f = 0; f < cond.size(); ++f) {
        if (!cond[f].sameShape(noisy[f])) throw std::runtime_error("prior output shape differs from input");
        out[f] = prior.hasUnconditional() ? cfg_combine(cond[f].data, uncond.at(f).data, context.cfgScale) : cond[f].data;
    }
    return out;
}

}  // namespace

SdsResult sds_grad(const DenoisingPrior& prior, const Image& x, const GuidanceContext& context, int tau, const Image& eps,
                   const DiffusionSchedule& schedule) {
    context.validate(x.width, x.height);
    const Image noisy = add_noise(x, tau, eps, schedule);
    auto epsHat = guided_noise(prior, {noisy}, tau, context);
    return finish(x, noisy, std::move(epsHat.front()), eps, tau, schedule, context.mask);
}

std::vector<SdsResult> masked_seq_sds_grad(const DenoisingPrior& videoPrior, const std::vector<Image>& frames,
                                           const std::vector<Mask>& masks, const GuidanceContext& context, int tau,
                                           const std::vector<Image>& eps, const DiffusionSchedule& schedule) {
    const std::size_t l = frames.size();
    if (l < 2) throw InvalidInput("sequential SDS needs at least 2 frames");
    if (masks.size() != l || eps.size() != l) throw InvalidInput("frames, masks and noise must have equal length");
    std::vector<Image> noisy;
    noisy.reserve(l);
    for (std::size_t f = 0; f < l; ++f) {
        if (masks[f].width != frames[f].width || masks[f].height != frames[f].height)
            throw InvalidInput("mask shape does not match frame");
        noisy.push_back(add_noise(frames[f], tau, eps[f], schedule));
    }
    context.validate(frames.front().width, frames.front().height);
    auto epsHat = guided_noise(videoPrior, noisy, tau, context);
    std::vector<SdsResult> out;
    out.reserve(l);
    for (std::size_t f = 0; f < l; ++f)
        out.push_back(finish(frames[f], noisy[f], std::move(epsHat[f]), eps[f], tau, schedule, &masks[f]));
    return out;
}

int sample_tau(Rng& rng, const DiffusionSchedule& schedule, double lo, double hi) {
    const int T = schedule.steps();
    const int a = std::clamp(static_cast<int>(std::ceil(lo * T)), 0, T - 1);
    const int b = std::clamp(static_cast<int>(std::floor(hi * T)), a, T - 1);
    return static_cast<int>(rng.integer(a, b));
}

Image standard_normal_image(Rng& rng, int width, int height) {
    Image img(width, height);
    for (Index i = 0; i < img.data.size(); ++i) img.data[i] = rng.normal();
    return img;
}

double mse(const Image& a, const Image& b) {
    if (!a.sameShape(b)) throw InvalidInput("image shapes do not match");
    return (a.data - b.data).square().mean();
}

}  // namespace forge
