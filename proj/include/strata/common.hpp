#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace strata {

// Failure categories surfaced by library operations. Hard errors throw;
// recoverable conditions are returned as flags on the result objects.
enum class ErrorKind {
    EmptyInput,
    NonClosedContour,
    DegenerateContour,
    TooFewBoundarySamples,
    NoTargets,
    EmptyTargetRegion,
    FrameMismatch,
    AllInadmissible,
    CflViolation,
    RingMismatch,
    DepthOutOfRange,
    UnknownPrimitive,
    ParseError,
    ConfigError,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::NonClosedContour: return "NonClosedContour";
        case ErrorKind::DegenerateContour: return "DegenerateContour";
        case ErrorKind::TooFewBoundarySamples: return "TooFewBoundarySamples";
        case ErrorKind::NoTargets: return "NoTargets";
        case ErrorKind::EmptyTargetRegion: return "EmptyTargetRegion";
        case ErrorKind::FrameMismatch: return "FrameMismatch";
        case ErrorKind::AllInadmissible: return "AllInadmissible";
        case ErrorKind::CflViolation: return "CflViolation";
        case ErrorKind::RingMismatch: return "RingMismatch";
        case ErrorKind::DepthOutOfRange: return "DepthOutOfRange";
        case ErrorKind::UnknownPrimitive: return "UnknownPrimitive";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

// ---- Deterministic random numbers -----------------------------------------
// SplitMix64 based generator. Self-contained so streams are identical across
// platforms and standard library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t x = (state_ += 0x9e3779b97f4a7c15ULL);
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // Uniform in [0, 1).
    double uniform() {
        return double(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + int(next_u64() % std::uint64_t(hi - lo + 1));
    }

    // Standard normal via Box-Muller (cached pair).
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(6.283185307179586 * u2);
        have_spare_ = true;
        return mag * std::cos(6.283185307179586 * u2);
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a, used for config digests and input fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

// ---- Parallel map over an index range --------------------------------------
// Tasks must write only to their own output slots; results are then identical
// for any thread count.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (threads <= 0) threads = int(std::thread::hardware_concurrency());
    if (threads <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    int k = std::min<std::size_t>(threads, n);
    pool.reserve(k);
    for (int t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

}  // namespace strata
