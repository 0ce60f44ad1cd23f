#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace tracemark {

// Error categories map 1:1 onto CLI exit codes.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;  // exit code 1
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;  // exit code 2
};
struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;  // exit code 3
};

// ---------------------------------------------------------------------------
// Little-endian binary I/O. Checkpoints and feature files are LE on disk
// regardless of host order.

namespace io {

template <typename T>
void write_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (sizeof(T) > 1) {
        uint16_t probe = 1;
        if (*reinterpret_cast<unsigned char*>(&probe) == 0) {  // big-endian host
            for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
        }
    }
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw DataError("unexpected end of file while reading binary value");
    if constexpr (sizeof(T) > 1) {
        uint16_t probe = 1;
        if (*reinterpret_cast<unsigned char*>(&probe) == 0) {
            for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
        }
    }
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_le<uint32_t>(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
    auto n = read_le<uint32_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw DataError("unexpected end of file while reading string");
    return s;
}

}  // namespace io

// ---------------------------------------------------------------------------
// Rng: deterministic samplers on top of mt19937_64. std::*_distribution is
// implementation-specified, so the samplers are spelled out here; seeded runs
// reproduce bit-exactly on any platform.

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1) with 53-bit resolution
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) {
        // rejection sampling, unbiased
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        // Box-Muller, one value per call (cache the pair)
        if (have_cached_) {
            have_cached_ = false;
            return mean + stddev * cached_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return mean + stddev * r * std::cos(theta);
    }

    // exponential inter-arrival gap for a Poisson process of the given rate
    double exp_gap(double rate) {
        double u = 0.0;
        while (u == 0.0) u = uniform();
        return -std::log(u) / rate;
    }

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), order-stable across runs
    std::vector<size_t> sample_indices(size_t n, size_t k) {
        std::vector<size_t> all(n);
        for (size_t i = 0; i < n; ++i) all[i] = i;
        shuffle(all);
        all.resize(std::min(k, n));
        std::sort(all.begin(), all.end());
        return all;
    }

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace tracemark
