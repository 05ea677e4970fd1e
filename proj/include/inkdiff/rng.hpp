#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "inkdiff/errors.hpp"

namespace inkdiff {

// Deterministic random source. mt19937_64 is fully specified by the
// standard; the variate transforms live here (not in std distributions,
// whose output is implementation-defined) so that a seed produces the
// same stream on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : eng_(seed) {}

    uint64_t raw() { return eng_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // (0, 1]
    double uniform_open_low() { return 1.0 - uniform(); }

    // [a, b)
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // integer in [0, n)
    int64_t below(int64_t n) {
        // rejection-free modulo bias is negligible for n << 2^64, but be exact anyway
        uint64_t un = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return static_cast<int64_t>(x % un);
    }

    // standard normal via Box-Muller; spare value cached
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;  // (0,1)
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void fill_gaussian(std::vector<T>& v) {
        for (auto& x : v) x = static_cast<T>(gaussian());
    }

    std::string serialize() const {
        std::ostringstream os;
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(spare_));
        std::memcpy(&bits, &spare_, sizeof(bits));
        os << eng_ << " " << (has_spare_ ? 1 : 0) << " " << bits;
        return os.str();
    }

    static Rng deserialize(const std::string& s) {
        Rng r;
        std::istringstream is(s);
        int hs = 0;
        uint64_t bits = 0;
        is >> r.eng_ >> hs >> bits;
        if (is.fail()) throw DataError("bad rng state string");
        r.has_spare_ = hs != 0;
        std::memcpy(&r.spare_, &bits, sizeof(bits));
        return r;
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace inkdiff
