#pragma once

// Shared plumbing for the desd toolkit: error taxonomy, seeded RNG,
// content hashing and a stderr logger controlled by DESD_LOG.

#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace desd {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Error categories map 1:1 onto CLI exit codes (see tools/).
struct ConfigError : std::runtime_error {   // exit 2
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct ContractError : std::runtime_error { // exit 3
    explicit ContractError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericError : std::runtime_error {  // exit 4
    explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};
struct IoError : std::runtime_error {       // exit 5
    explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

// ---------------------------------------------------------------------------
// RNG. Distribution sampling is hand-rolled on top of mt19937_64 so results
// do not depend on the standard library's unspecified distribution internals.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Marsaglia polar method; one cached value.
    double normal() {
        if (have_cache_) {
            have_cache_ = false;
            return cache_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double k = std::sqrt(-2.0 * std::log(s) / s);
        cache_ = v * k;
        have_cache_ = true;
        return u * k;
    }

    int uniform_int(int n) { return int(next_u64() % uint64_t(n)); }

    // Derive an independent stream, e.g. per sequence or per parameter.
    Rng fork(uint64_t salt) const {
        uint64_t s = state_;
        s ^= salt * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL;
        return Rng(s);
    }

private:
    uint64_t state_;
    double cache_ = 0.0;
    bool have_cache_ = false;
};

// ---------------------------------------------------------------------------
// FNV-1a, used for topology identities and config hashes.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(s.data(), s.size(), h);
}

inline std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Logging. DESD_LOG={error,info,debug}; default info.
enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
    static LogLevel lvl = [] {
        const char* e = std::getenv("DESD_LOG");
        if (!e) return LogLevel::Info;
        if (std::strcmp(e, "error") == 0) return LogLevel::Error;
        if (std::strcmp(e, "debug") == 0) return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return lvl;
}

inline void logf(LogLevel lvl, const char* fmt, ...) {
    if (int(lvl) > int(log_level())) return;
    const char* tag = lvl == LogLevel::Error ? "error" : lvl == LogLevel::Debug ? "debug" : "info";
    std::fprintf(stderr, "[desd:%s] ", tag);
    va_list ap;
    va_start(ap, fmt);
    std::vfprintf(stderr, fmt, ap);
    va_end(ap);
    std::fputc('\n', stderr);
}

#define DESD_INFO(...) ::desd::logf(::desd::LogLevel::Info, __VA_ARGS__)
#define DESD_DEBUG(...) ::desd::logf(::desd::LogLevel::Debug, __VA_ARGS__)
#define DESD_ERROR(...) ::desd::logf(::desd::LogLevel::Error, __VA_ARGS__)

}  // namespace desd
