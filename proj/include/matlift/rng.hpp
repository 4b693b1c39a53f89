#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace matlift {

// Seeded random stream with explicitly specified draw algorithms.
// std::uniform_*_distribution is implementation-defined, so all draws here are
// built directly on mt19937_64 output to keep generated corpora byte-identical
// across platforms and standard libraries.
class RngStream {
public:
    explicit RngStream(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, bound) via rejection sampling; bound >= 1.
    uint64_t uniform_u64(uint64_t bound) {
        const uint64_t zone = (UINT64_MAX / bound) * bound;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= zone);
        return x % bound;
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform_real() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

    // Fisher-Yates.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_u64(i));
            using std::swap;
            swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), returned in increasing order so that
    // order-preserving subsampling is a stable operation.
    std::vector<size_t> sample_indices(size_t n, size_t k) {
        std::vector<size_t> idx(n);
        for (size_t i = 0; i < n; ++i) idx[i] = i;
        for (size_t i = 0; i < k; ++i) {
            const size_t j = i + static_cast<size_t>(uniform_u64(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        std::sort(idx.begin(), idx.end());
        return idx;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace matlift
