#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace forge {

/// Seeded generator whose draws are fully specified (no library-defined
/// distribution algorithms) and whose state round-trips through text.
class Rng {
   public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [lo, hi].
    std::int64_t integer(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next() % span);
    }
    /// Standard normal by Box-Muller; one draw consumes two uniforms.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::string state() const {
        std::ostringstream out;
        out << engine_;
        return out.str();
    }
    void setState(const std::string& s) {
        std::istringstream in(s);
        in >> engine_;
        if (!in) throw std::runtime_error("invalid rng state");
    }
    bool operator==(const Rng& o) const { return engine_ == o.engine_; }

   private:
    std::mt19937_64 engine_;
};

}  // namespace forge
