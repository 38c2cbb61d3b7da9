#pragma once

#include "bggan/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace bggan {

/// Seeded RNG wrapper. Gaussian sampling is hand-rolled (Box-Muller) so the
/// byte stream does not depend on the standard library's distribution
/// implementation; checkpoints can serialize the engine state exactly.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(static_cast<std::mt19937::result_type>(seed)) {}

    std::uint32_t next_u32() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u32()) * (1.0 / 4294967296.0);
    }

    /// Uniform integer in [0, n). Degenerate n <= 1 consumes no state.
    Index uniform_index(Index n) {
        if (n <= 1) return 0;
        return static_cast<Index>(uniform() * static_cast<double>(n)) % n;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-12) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    template <typename Scalar>
    Tensor4<Scalar> normal_tensor(const Shape4& shape, double stddev = 1.0, double mean = 0.0) {
        Tensor4<Scalar> t(shape);
        for (Index i = 0; i < t.numel(); ++i)
            t.data[i] = static_cast<Scalar>(mean + stddev * normal());
        return t;
    }

    template <typename Scalar>
    Tensor4<Scalar> uniform_tensor(const Shape4& shape, double lo, double hi) {
        Tensor4<Scalar> t(shape);
        for (Index i = 0; i < t.numel(); ++i)
            t.data[i] = static_cast<Scalar>(lo + (hi - lo) * uniform());
        return t;
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_ << " " << (have_spare_ ? 1 : 0) << " " << spare_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        int flag = 0;
        is >> engine_ >> flag >> spare_;
        if (!is) throw IoError("Rng: malformed serialized state");
        have_spare_ = flag != 0;
    }

private:
    std::mt19937 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace bggan
