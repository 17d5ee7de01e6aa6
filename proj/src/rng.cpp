#include "glmamp/rng.hpp"

#include <cmath>

namespace glmamp {

namespace {

uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& s : s_) s = splitmix64(sm);
}

Rng Rng::stream(uint64_t seed, uint64_t stream_id) {
    // Mix the stream id through splitmix64 before seeding so that adjacent
    // ids land in unrelated regions of the state space.
    uint64_t x = seed;
    uint64_t a = splitmix64(x);
    x ^= 0x510e527fade682d1ULL + stream_id * 0x9e3779b97f4a7c15ULL;
    uint64_t b = splitmix64(x);
    return Rng(a ^ rotl(b, 17) ^ stream_id);
}

uint64_t Rng::next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, q;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double f = std::sqrt(-2.0 * std::log(q) / q);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

uint64_t Rng::below(uint64_t n) {
    // Rejection-free enough for our n (permutation shuffles); use Lemire's
    // multiply-shift with a rejection loop to stay exactly uniform.
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    uint64_t lo = static_cast<uint64_t>(m);
    if (lo < n) {
        const uint64_t floor = (0 - n) % n;
        while (lo < floor) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * n;
            lo = static_cast<uint64_t>(m);
        }
    }
    return static_cast<uint64_t>(m >> 64);
}

}  // namespace glmamp
