#pragma once

// Shared plumbing: error taxonomy, deterministic RNG, numeric helpers.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace hocslm {

// Error categories map onto CLI exit codes (usage=2, io=3, data=4, state=5).
enum class ErrorCategory { Usage, Io, Data, State, Internal };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory cat, std::string name, const std::string& what)
        : std::runtime_error(name + ": " + what), cat_(cat), name_(std::move(name)) {}

    ErrorCategory category() const noexcept { return cat_; }
    const std::string& name() const noexcept { return name_; }

    const char* category_name() const noexcept {
        switch (cat_) {
            case ErrorCategory::Usage: return "usage";
            case ErrorCategory::Io: return "io";
            case ErrorCategory::Data: return "data";
            case ErrorCategory::State: return "state";
            default: return "internal";
        }
    }

private:
    ErrorCategory cat_;
    std::string name_;
};

#define HOCSLM_DEFINE_ERROR(NAME, CATEGORY)                                     \
    class NAME : public Error {                                                 \
    public:                                                                     \
        explicit NAME(const std::string& what)                                  \
            : Error(ErrorCategory::CATEGORY, #NAME, what) {}                    \
    }

HOCSLM_DEFINE_ERROR(MalformedHeader, Data);
HOCSLM_DEFINE_ERROR(JointCountMismatch, Data);
HOCSLM_DEFINE_ERROR(TruncatedFile, Data);
HOCSLM_DEFINE_ERROR(TooFewFrames, Data);
HOCSLM_DEFINE_ERROR(EmptySequence, Data);
HOCSLM_DEFINE_ERROR(ShapeMismatch, Internal);
HOCSLM_DEFINE_ERROR(NonFiniteActivation, State);
HOCSLM_DEFINE_ERROR(EmptyCaption, Data);
HOCSLM_DEFINE_ERROR(DecoderUnavailable, State);
HOCSLM_DEFINE_ERROR(DivergedLoss, State);
HOCSLM_DEFINE_ERROR(EmptyDataset, Data);
HOCSLM_DEFINE_ERROR(LengthMismatch, Data);
HOCSLM_DEFINE_ERROR(SampleNotFound, Usage);
HOCSLM_DEFINE_ERROR(CheckpointVersionMismatch, Data);
HOCSLM_DEFINE_ERROR(CheckpointLacksSsf, State);
HOCSLM_DEFINE_ERROR(UsageError, Usage);
HOCSLM_DEFINE_ERROR(IoError, Io);

#undef HOCSLM_DEFINE_ERROR

// Deterministic RNG wrapper. Distribution code is hand-rolled so streams are
// stable across standard-library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
        std::seed_seq seq{a, b, c};
        engine_.seed(seq);
    }

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller
    double gauss() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace hocslm
