#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace sabias::rng {

/// SplitMix64 finalizer (Steele et al.). Used only for key derivation.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stream roles keep the x-transition draws separate from the noise draws,
/// so the same data path can be replayed bit-identically against a
/// different noise stream (e.g. the 2-alpha arm of an extrapolation pair).
enum class Role : std::uint64_t {
    Chain = 1,
    Noise = 2,
    NoiseAlt = 3,
    Probe = 4,
};

/// Derive an independent stream key from (master seed, replica, role).
inline std::uint64_t derive_key(std::uint64_t seed, std::uint64_t replica, Role role) {
    std::uint64_t k = mix64(seed);
    k = mix64(k ^ mix64(replica + 1));
    k = mix64(k ^ mix64(static_cast<std::uint64_t>(role)));
    return k;
}

/// A deterministic random stream: mt19937_64 plus our own uniform/normal
/// transforms, so draws do not depend on the standard library's
/// (unspecified) distribution implementations.
class Stream {
public:
    explicit Stream(std::uint64_t key) : eng_(key) {}
    Stream(std::uint64_t seed, std::uint64_t replica, Role role)
        : eng_(derive_key(seed, replica, role)) {}

    /// Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0, 1].
    double uniform_pos() {
        return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    void normal_vector(Eigen::VectorXd& out) {
        for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = normal();
    }

    /// Index into a CDF row (values in [0,1], nondecreasing, last >= 1).
    int sample_cdf(const double* cdf, int n) {
        const double u = uniform();
        for (int i = 0; i < n - 1; ++i) {
            if (u < cdf[i]) return i;
        }
        return n - 1;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace sabias::rng
