#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace soda {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent stream key from a master seed and a path of
// integer ids (task, particle, sample...).
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> ids) noexcept {
    std::uint64_t k = mix64(master);
    for (auto id : ids) k = mix64(k ^ mix64(id + 0x632be59bd9b4e019ULL));
    return k;
}

// Counter-based generator: output n is mix64(key + n * golden). Cheap to
// construct, so every particle or trajectory gets its own stream and results
// do not depend on how work is split across threads.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t key = 0) noexcept : key_(mix64(key)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        counter_ += 0x9e3779b97f4a7c15ULL;
        return mix64(key_ + counter_);
    }

    // Child stream keyed on this stream's key, independent of its position.
    Rng fork(std::uint64_t id) const noexcept { return Rng(key_ ^ mix64(id + 0xd1b54a32d192ed03ULL)); }

    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double normal() {
        std::normal_distribution<double> n;
        return n(*this);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace soda
