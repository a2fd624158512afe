#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>

#include <Eigen/Dense>

namespace ccgen {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed and a tag path,
// e.g. derive_seed(cfg.seed, {kSeedProbe, C}). Stable across runs.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = base;
    (void)splitmix64(s);
    for (std::uint64_t t : tags) {
        s ^= t + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
        (void)splitmix64(s);
    }
    return splitmix64(s);
}

// xoshiro256++ with a Box-Muller normal cache. All draws are pinned by this
// code so identical seeds give bitwise-identical streams on any platform.
// The full state (including the cached normal) serializes to 6 u64 words.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t sm = seed;
        for (auto& w : state_) w = splitmix64(sm);
        has_spare_ = false;
        spare_ = 0.0;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::int64_t uniform_int(std::int64_t n) {
        return static_cast<std::int64_t>(static_cast<double>(n) * uniform());
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    void fill_normal(Eigen::Ref<Eigen::MatrixXd> out) {
        for (Eigen::Index i = 0; i < out.rows(); ++i)
            for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = normal();
    }

    template <class It>
    void shuffle(It first, It last) {
        const std::int64_t n = last - first;
        for (std::int64_t i = n - 1; i > 0; --i) {
            const std::int64_t j = uniform_int(i + 1);
            std::swap(first[i], first[j]);
        }
    }

    std::array<std::uint64_t, 6> serialize() const {
        return {state_[0], state_[1], state_[2], state_[3],
                std::bit_cast<std::uint64_t>(spare_), has_spare_ ? 1ULL : 0ULL};
    }

    void deserialize(const std::array<std::uint64_t, 6>& words) {
        for (int i = 0; i < 4; ++i) state_[i] = words[i];
        spare_ = std::bit_cast<double>(words[4]);
        has_spare_ = words[5] != 0;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace ccgen
