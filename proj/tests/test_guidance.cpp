#include "fixtures.hpp"

#include "forge/guidance.hpp"
#include "forge/io.hpp"

#include <doctest.h>

#include <cstdio>

using namespace forge;

namespace {

Image constant(int w, int h, double v) { return Image(w, h, v); }

TargetProvider fixed(std::vector<Image> frames) {
    return [frames](const GuidanceContext&) { return frames; };
}

// Returns fixed conditional / unconditional predictions to exercise CFG plumbing.
class FixedPrior : public DenoisingPrior {
   public:
    FixedPrior(Image cond, Image uncond) : cond_(std::move(cond)), uncond_(std::move(uncond)) {}
    std::vector<Image> predictNoise(const std::vector<Image>& noisy, int, const GuidanceContext&) const override {
        return std::vector<Image>(noisy.size(), cond_);
    }
    bool hasUnconditional() const override { return true; }
    std::vector<Image> predictNoiseUnconditional(const std::vector<Image>& noisy, int,
                                                 const GuidanceContext&) const override {
        return std::vector<Image>(noisy.size(), uncond_);
    }

   private:
    Image cond_, uncond_;
};

}  // namespace

TEST_SUITE("guidance") {

TEST_CASE("linear schedule") {
    const DiffusionSchedule s = DiffusionSchedule::linear();
    CHECK(s.steps() == 1000);
    CHECK(s.alpha(0) == doctest::Approx(1.0 - 8.5e-4));
    CHECK_NOTHROW(s.validate());
    CHECK(s.weight(500) == doctest::Approx(1.0 - s.alpha(500)));
    CHECK_THROWS_AS(s.alpha(1000), InvalidInput);
    CHECK_THROWS_AS(s.alpha(-1), InvalidInput);
    CHECK_THROWS_AS(DiffusionSchedule::linear(1), InvalidInput);
    CHECK_THROWS_AS(DiffusionSchedule::linear(10, 0.5, 0.1), InvalidInput);
}

TEST_CASE("forward noising limits") {
    DiffusionSchedule s;
    s.alphaBar = (Vector(3) << 1.0 - 1e-12, 0.25, 1e-12).finished();
    const Eigen::ArrayXd x = Eigen::ArrayXd::Constant(4, 2.0), eps = Eigen::ArrayXd::Constant(4, -1.0);
    CHECK((add_noise(x, 0, eps, s) - x).abs().maxCoeff() < 1e-5);
    CHECK((add_noise(x, 2, eps, s) - eps).abs().maxCoeff() < 1e-5);
    CHECK(add_noise(x, 1, eps, s)[0] == doctest::Approx(0.5 * 2.0 + std::sqrt(0.75) * -1.0));
    CHECK_THROWS_AS(add_noise(x, 1, Eigen::ArrayXd::Zero(3), s), InvalidInput);
}

TEST_CASE("noising has the right mean and variance") {
    const DiffusionSchedule s = DiffusionSchedule::linear();
    Rng rng(21);
    const int tau = 400;
    const Image eps = standard_normal_image(rng, 100, 100);
    const Image x = constant(100, 100, 0.7);
    const Image n = add_noise(x, tau, eps, s);
    const double mean = n.data.mean();
    const double var = (n.data - mean).square().mean();
    const double a = s.alpha(tau);
    CHECK(mean == doctest::Approx(std::sqrt(a) * 0.7).epsilon(0.02));
    CHECK(var == doctest::Approx(1.0 - a).epsilon(0.03));
}

TEST_CASE("oracle noise prediction inverts noising") {
    const DiffusionSchedule s = DiffusionSchedule::linear();
    Rng rng(1);
    const Image x = standard_normal_image(rng, 8, 8), eps = standard_normal_image(rng, 8, 8);
    for (int tau : {0, 20, 500, 999}) {
        const Image n = add_noise(x, tau, eps, s);
        CHECK((oracle_predict_noise(n, tau, x, s).data - eps.data).abs().maxCoeff() < 1e-9);
        CHECK((denoised_estimate(n.data, tau, eps.data, s) - x.data).abs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("classifier-free guidance combination") {
    const Eigen::ArrayXd c = Eigen::ArrayXd::Constant(2, 3.0), u = Eigen::ArrayXd::Constant(2, 1.0);
    CHECK(cfg_combine(c, u, 1.0)[0] == 3.0);
    CHECK(cfg_combine(c, u, 100.0)[0] == doctest::Approx(201.0));
    CHECK(cfg_combine(c, c, 100.0)[1] == 3.0);
}

TEST_CASE("SDS gradient") {
    const DiffusionSchedule s = DiffusionSchedule::linear();
    Rng rng(8);
    const Image x = standard_normal_image(rng, 6, 6), eps = standard_normal_image(rng, 6, 6);
    GuidanceContext ctx;
    ctx.promptId = "p";

    SUBCASE("vanishes when the oracle target is the input") {
        OraclePrior prior(s, fixed({x}));
        const SdsResult r = sds_grad(prior, x, ctx, 300, eps, s);
        CHECK(r.grad.data.abs().maxCoeff() < 1e-9);
        CHECK(r.loss < 1e-18);
    }
    SUBCASE("points from the target to the input") {
        const Image target = constant(6, 6, 0.0);
        OraclePrior prior(s, fixed({target}));
        const int tau = 300;
        const SdsResult r = sds_grad(prior, x, ctx, tau, eps, s);
        const double a = s.alpha(tau);
        // eps_hat - eps = sqrt(a/(1-a)) (x - target)
        const Eigen::ArrayXd expect = (1.0 - a) * std::sqrt(a / (1.0 - a)) * (x.data - target.data);
        CHECK((r.grad.data - expect).abs().maxCoeff() < 1e-9);
        CHECK(r.loss == doctest::Approx(mse(x, target)));
    }
    SUBCASE("constant weighting and zero weight") {
        DiffusionSchedule c = s;
        c.weightKind = WeightKind::Constant;
        c.weightConstant = 0.0;
        OraclePrior prior(c, fixed({constant(6, 6, 0.3)}));
        CHECK(sds_grad(prior, x, ctx, 300, eps, c).grad.data.abs().maxCoeff() == 0.0);
    }
    SUBCASE("guidance scale applies to priors with an unconditional branch") {
        FixedPrior prior(constant(6, 6, 2.0), constant(6, 6, 1.0));
        ctx.cfgScale = 10.0;
        const SdsResult r = sds_grad(prior, x, ctx, 300, eps, s);
        const Eigen::ArrayXd expect = (1.0 - s.alpha(300)) * (11.0 - eps.data);
        CHECK((r.grad.data - expect).abs().maxCoeff() < 1e-12);
    }
    SUBCASE("a mask zeroes outside pixels") {
        Mask m(6, 6);
        m.set(2, 3, true);
        ctx.mask = &m;
        OraclePrior prior(s, fixed({constant(6, 6, 0.0)}));
        const SdsResult r = sds_grad(prior, x, ctx, 300, eps, s);
        for (int yy = 0; yy < 6; ++yy)
            for (int xx = 0; xx < 6; ++xx)
                if (!(xx == 2 && yy == 3)) CHECK(r.grad.pixel(xx, yy).abs().maxCoeff() == 0.0);
        CHECK(r.grad.pixel(2, 3).abs().maxCoeff() > 0.0);
    }
    SUBCASE("invalid context") {
        ctx.cfgScale = 0.5;
        OraclePrior prior(s, fixed({x}));
        CHECK_THROWS_AS(sds_grad(prior, x, ctx, 300, eps, s), InvalidInput);
    }
}

TEST_CASE("masked sequential SDS") {
    const DiffusionSchedule s = DiffusionSchedule::linear();
    Rng rng(12);
    const int l = 3;
    std::vector<Image> frames, eps, targets;
    for (int f = 0; f < l; ++f) {
        frames.push_back(standard_normal_image(rng, 5, 4));
        eps.push_back(standard_normal_image(rng, 5, 4));
        targets.push_back(standard_normal_image(rng, 5, 4));
    }
    OraclePrior prior(s, fixed(targets));
    GuidanceContext ctx;
    ctx.promptId = "clip";
    ctx.clipLength = l;
    const int tau = 250;

    SUBCASE("all-zero masks give zero gradients") {
        const auto r = masked_seq_sds_grad(prior, frames, std::vector<Mask>(l, Mask(5, 4, false)), ctx, tau, eps, s);
        for (const auto& fr : r) CHECK(fr.grad.data.abs().maxCoeff() == 0.0);
    }
    SUBCASE("all-one masks give the unmasked per-frame gradient") {
        const auto r = masked_seq_sds_grad(prior, frames, std::vector<Mask>(l, Mask(5, 4, true)), ctx, tau, eps, s);
        for (int f = 0; f < l; ++f) {
            OraclePrior single(s, fixed({targets[f]}));
            GuidanceContext one_ctx;
            one_ctx.promptId = "clip";
            const SdsResult one = sds_grad(single, frames[f], one_ctx, tau, eps[f], s);
            CHECK((r[f].grad.data - one.grad.data).abs().maxCoeff() < 1e-12);
        }
    }
    SUBCASE("mixed masks select per pixel") {
        std::vector<Mask> masks(l, Mask(5, 4, false));
        for (int f = 0; f < l; ++f) masks[f].set(f, f, true);
        const auto full = masked_seq_sds_grad(prior, frames, std::vector<Mask>(l, Mask(5, 4, true)), ctx, tau, eps, s);
        const auto r = masked_seq_sds_grad(prior, frames, masks, ctx, tau, eps, s);
        for (int f = 0; f < l; ++f)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 5; ++x) {
                    const Eigen::Array3d expect = masks[f](x, y) ? Eigen::Array3d(full[f].grad.pixel(x, y)) : Eigen::Array3d::Zero();
                    CHECK((r[f].grad.pixel(x, y) - expect).abs().maxCoeff() == 0.0);
                }
    }
    SUBCASE("shape errors") {
        CHECK_THROWS_AS(masked_seq_sds_grad(prior, {frames[0]}, {Mask(5, 4)}, ctx, tau, {eps[0]}, s), InvalidInput);
        CHECK_THROWS_AS(masked_seq_sds_grad(prior, frames, std::vector<Mask>(l, Mask(4, 4)), ctx, tau, eps, s), InvalidInput);
        CHECK_THROWS_AS(masked_seq_sds_grad(prior, frames, std::vector<Mask>(2, Mask(5, 4)), ctx, tau, eps, s), InvalidInput);
    }
}

TEST_CASE("target registry") {
    TargetRegistry reg;
    reg.add("still", {constant(2, 2, 0.2)});
    reg.add("clip", {constant(2, 2, 0.0), constant(2, 2, 1.0)});
    CHECK(reg.lookup("still", 3).size() == 3);
    CHECK(reg.lookup("clip", 2)[1].data[0] == 1.0);
    CHECK_THROWS_AS(reg.lookup("clip", 3), InvalidInput);
    CHECK_THROWS_AS(reg.lookup("missing", 1), InvalidInput);
    CHECK_THROWS_AS(reg.add("empty", {}), InvalidInput);

    forge::test::TempDir dir("registry");
    write_file(dir / "hello.ppm", image_to_ppm(constant(3, 2, 1.0)));
    char name[32];
    for (int i = 0; i < 2; ++i) {
        std::snprintf(name, sizeof name, "frame_%04d.ppm", i);
        write_file(dir.path() / "walk" / name, image_to_ppm(constant(3, 2, i)));
    }
    const TargetRegistry loaded = TargetRegistry::load(dir.path());
    CHECK(loaded.contains("hello"));
    CHECK(loaded.lookup("walk", 2)[1].data[0] == 1.0);
    CHECK_THROWS_AS(TargetRegistry::load(dir / "nope"), InvalidInput);
}

TEST_CASE("timestep sampling stays in range and covers it") {
    const DiffusionSchedule s = DiffusionSchedule::linear();
    Rng rng(5);
    int lo = 1000, hi = -1;
    for (int i = 0; i < 20000; ++i) {
        const int t = sample_tau(rng, s);
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    CHECK(lo == 20);
    CHECK(hi == 980);
    Rng a(3), b(3);
    CHECK(sample_tau(a, s) == sample_tau(b, s));
}

}
