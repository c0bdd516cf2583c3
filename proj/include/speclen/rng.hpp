#pragma once

#include <cstdint>
#include <random>

namespace speclen {

// splitmix64 finalizer; used to derive independent stream seeds from a
// (master, tag, index) triple so results do not depend on execution order.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                 std::uint64_t index = 0) {
    return mix64(mix64(master ^ mix64(tag)) ^ index);
}

// Stream tags, one per module / workload.
namespace stream {
inline constexpr std::uint64_t generator = 0x67656e;    // sample generators
inline constexpr std::uint64_t trial = 0x747269;        // MC trials
inline constexpr std::uint64_t bootstrap = 0x626f6f;    // knee bootstrap
inline constexpr std::uint64_t task = 0x7461736b;       // calibration tasks
inline constexpr std::uint64_t noise = 0x6e6f69;        // label noise
}  // namespace stream

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return unif_(engine_); }
    double gauss() { return normal_(engine_); }
    double gauss(double mean, double sd) { return mean + sd * normal_(engine_); }
    double chi_squared(double dof) {
        std::chi_squared_distribution<double> d(dof);
        return d(engine_);
    }
    // uniform integer in [0, n)
    std::size_t index(std::size_t n) {
        std::uniform_int_distribution<std::size_t> d(0, n - 1);
        return d(engine_);
    }
    int sign() { return unif_(engine_) < 0.5 ? -1 : 1; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

}  // namespace speclen
