// Synthetic data generation. The main citizen is the Fourier manifold dataset:
// N x N grayscale images synthesized from a fixed set of active Fourier modes,
// so the intrinsic dimension of the data is controlled exactly. Also provides
// Gaussian toy data and a small 2-D mixture for sampler smoke tests.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flowdn/fft.hpp"
#include "flowdn/oracle.hpp"
#include "flowdn/rng.hpp"
#include "flowdn/tensor.hpp"

namespace flowdn::data {

// ---- mode selection --------------------------------------------------------

enum class ModeSelection { LowFreq, SeededRandom };
enum class CoeffLaw { Gaussian, Uniform };

struct FourierManifoldSpec {
    int grid_n = 32;             // image is grid_n x grid_n
    int modes = 8;               // number of active mode representatives (intrinsic dim m)
    ModeSelection selection = ModeSelection::LowFreq;
    bool exclude_dc = true;
    std::uint64_t selection_seed = 0;  // SeededRandom only
    CoeffLaw coeff_law = CoeffLaw::Gaussian;
    double coeff_scale = 1.0;
    double tanh_alpha = 2.0;
    std::uint64_t dataset_seed = 1;
};

struct ModeIndex {
    int k = 0, l = 0;
    bool operator==(const ModeIndex& o) const { return k == o.k && l == o.l; }
    bool operator<(const ModeIndex& o) const { return k != o.k ? k < o.k : l < o.l; }
};

inline ModeIndex conjugate_partner(ModeIndex m, int n) {
    return {(n - m.k) % n, (n - m.l) % n};
}

inline bool is_self_conjugate(ModeIndex m, int n) { return conjugate_partner(m, n) == m; }

// Periodic radius used by the lowfreq ordering.
inline long periodic_radius(ModeIndex m, int n) {
    const long a = std::min(m.k, n - m.k);
    const long b = std::min(m.l, n - m.l);
    return a * a + b * b;
}

struct ModeSet {
    int grid_n = 0;
    std::vector<ModeIndex> representatives;
    std::vector<ModeIndex> support;  // representatives plus conjugate partners

    // Real degrees of freedom: 2 per conjugate pair, 1 per self-conjugate mode.
    int real_dof() const {
        int dof = 0;
        for (const ModeIndex& m : representatives) dof += is_self_conjugate(m, grid_n) ? 1 : 2;
        return dof;
    }

    bool contains(int k, int l) const {
        for (const ModeIndex& m : support)
            if (m.k == k && m.l == l) return true;
        return false;
    }
};

// All canonical representatives of conjugate pairs: the lexicographically
// smaller member of each pair (self-conjugate modes represent themselves).
inline std::vector<ModeIndex> all_representatives(int n, bool exclude_dc) {
    std::vector<ModeIndex> reps;
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
            const ModeIndex m{k, l};
            if (exclude_dc && k == 0 && l == 0) continue;
            const ModeIndex p = conjugate_partner(m, n);
            if (!(p < m)) reps.push_back(m);
        }
    return reps;
}

inline ModeSet select_modes(const FourierManifoldSpec& spec) {
    const int n = spec.grid_n;
    std::vector<ModeIndex> reps = all_representatives(n, spec.exclude_dc);
    if (spec.modes < 1 || spec.modes > static_cast<int>(reps.size()))
        throw ConfigError("mode count " + std::to_string(spec.modes) + " not admissible for grid " +
                          std::to_string(n) + " (max " + std::to_string(reps.size()) + ")");
    ModeSet ms;
    ms.grid_n = n;
    if (spec.selection == ModeSelection::LowFreq) {
        std::stable_sort(reps.begin(), reps.end(), [n](const ModeIndex& a, const ModeIndex& b) {
            const long ra = periodic_radius(a, n), rb = periodic_radius(b, n);
            return ra != rb ? ra < rb : a < b;
        });
        ms.representatives.assign(reps.begin(), reps.begin() + spec.modes);
    } else {
        // uniform without replacement, deterministic in the selection seed
        Rng rng(spec.selection_seed, /*stream=*/0x6d6f6465);
        std::sort(reps.begin(), reps.end());
        for (int i = 0; i < spec.modes; ++i) {
            const std::uint64_t j = i + rng.index(reps.size() - i);
            std::swap(reps[i], reps[j]);
            ms.representatives.push_back(reps[i]);
        }
        std::sort(ms.representatives.begin(), ms.representatives.end());
    }
    for (const ModeIndex& m : ms.representatives) {
        ms.support.push_back(m);
        const ModeIndex p = conjugate_partner(m, n);
        if (!(p == m)) ms.support.push_back(p);
    }
    std::sort(ms.support.begin(), ms.support.end());
    return ms;
}

// ---- image synthesis -------------------------------------------------------

// Builds the pre-tanh image from explicit per-representative coefficients:
// coefficient at the representative, conjugate at the partner, imaginary part
// dropped at self-conjugate modes so the spatial signal is real.
inline TensorValue synthesize_pretanh(const ModeSet& ms, const std::vector<fft::cplx>& coeffs) {
    const int n = ms.grid_n;
    if (coeffs.size() != ms.representatives.size())
        throw ShapeError("synthesize: coefficient count vs representative count");
    fft::Spectrum spec(static_cast<size_t>(n) * n, fft::cplx(0.0, 0.0));
    for (size_t i = 0; i < coeffs.size(); ++i) {
        const ModeIndex m = ms.representatives[i];
        const ModeIndex p = conjugate_partner(m, n);
        if (p == m) {
            spec[static_cast<size_t>(m.k) * n + m.l] = fft::cplx(coeffs[i].real(), 0.0);
        } else {
            spec[static_cast<size_t>(m.k) * n + m.l] = coeffs[i];
            spec[static_cast<size_t>(p.k) * n + p.l] = std::conj(coeffs[i]);
        }
    }
    return fft::real_part(fft::ifft2(std::move(spec), n), n);
}

inline std::vector<fft::cplx> draw_coefficients(const FourierManifoldSpec& spec, const ModeSet& ms,
                                                Rng& rng) {
    std::vector<fft::cplx> coeffs;
    coeffs.reserve(ms.representatives.size());
    const double s = spec.coeff_scale;
    for (const ModeIndex& m : ms.representatives) {
        if (is_self_conjugate(m, ms.grid_n)) {
            const double re =
                spec.coeff_law == CoeffLaw::Gaussian ? rng.normal(0.0, s) : rng.uniform(-s, s);
            coeffs.emplace_back(re, 0.0);
        } else if (spec.coeff_law == CoeffLaw::Gaussian) {
            coeffs.emplace_back(rng.normal(0.0, s * M_SQRT1_2), rng.normal(0.0, s * M_SQRT1_2));
        } else {
            coeffs.emplace_back(rng.uniform(-s, s), rng.uniform(-s, s));
        }
    }
    return coeffs;
}

inline TensorValue sample_fourier_pretanh(const FourierManifoldSpec& spec, const ModeSet& ms, Rng& rng) {
    return synthesize_pretanh(ms, draw_coefficients(spec, ms, rng));
}

// One training image: pre-tanh synthesis followed by tanh(alpha * x), so
// every pixel lands strictly inside (-1, 1).
inline TensorValue sample_fourier_image(const FourierManifoldSpec& spec, const ModeSet& ms, Rng& rng) {
    TensorValue img = sample_fourier_pretanh(spec, ms, rng);
    for (double& v : img.data) v = std::tanh(spec.tanh_alpha * v);
    return img;
}

// Energy outside the manifold support under the orthonormal transform.
inline double spectral_residual(const TensorValue& image, const ModeSet& ms) {
    const fft::Spectrum spec = fft::fft2(image);
    const int n = ms.grid_n;
    std::vector<char> on(static_cast<size_t>(n) * n, 0);
    for (const ModeIndex& m : ms.support) on[static_cast<size_t>(m.k) * n + m.l] = 1;
    double e = 0.0;
    for (long i = 0; i < static_cast<long>(spec.size()); ++i)
        if (!on[i]) e += std::norm(spec[i]);
    return e;
}

// ---- toy distributions -----------------------------------------------------

// n i.i.d. rows from N(0, tau^2 I_d).
inline TensorValue sample_gaussian_data(const oracle::GaussianDataSpec& spec, int n, Rng& rng) {
    TensorValue out = TensorValue::zeros({n, spec.dim});
    for (double& v : out.data) v = rng.normal(0.0, spec.tau);
    return out;
}

struct Mixture2dSpec {
    std::vector<std::array<double, 2>> centers;
    std::vector<double> weights;
    double stddev = 0.1;
};

inline TensorValue sample_mixture2d(const Mixture2dSpec& spec, int n, Rng& rng) {
    if (spec.centers.empty() || spec.centers.size() != spec.weights.size())
        throw ConfigError("mixture: centers/weights mismatch");
    double wsum = 0.0;
    for (double w : spec.weights) {
        if (w < 0.0) throw ConfigError("mixture: negative weight");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw ConfigError("mixture: weights must sum to 1");
    TensorValue out = TensorValue::zeros({n, 2});
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        size_t c = 0;
        for (; c + 1 < spec.weights.size(); ++c) {
            if (u < spec.weights[c]) break;
            u -= spec.weights[c];
        }
        out.data[static_cast<size_t>(i) * 2] = spec.centers[c][0] + rng.normal(0.0, spec.stddev);
        out.data[static_cast<size_t>(i) * 2 + 1] = spec.centers[c][1] + rng.normal(0.0, spec.stddev);
    }
    return out;
}

}  // namespace flowdn::data
