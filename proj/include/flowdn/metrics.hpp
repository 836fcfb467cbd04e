// Quality measures: PSNR of denoiser outputs over a time grid, paired delta
// curves between two parametrizations, spectral residual summaries, and cheap
// moment/energy distances standing in for FID at this scale.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "flowdn/datasets.hpp"
#include "flowdn/objectives.hpp"
#include "flowdn/rng.hpp"
#include "flowdn/sampler.hpp"
#include "flowdn/tensor.hpp"

namespace flowdn::metrics {

// Peak value for PSNR; data lives in [-1, 1].
inline constexpr double kPsnrPeak = 2.0;
inline constexpr double kPsnrCap = 99.0;

inline double psnr_from_mse(double mse, double peak = kPsnrPeak) {
    if (mse < 0.0) throw ConfigError("psnr: negative MSE");
    if (mse == 0.0) return kPsnrCap;
    return 10.0 * std::log10(peak * peak / mse);
}

// A denoiser evaluated on a batch at a shared time: returns the predicted
// clean sample D(x, t), whatever the underlying parametrization was.
using DenoiserFn = std::function<TensorValue(const TensorValue&, double)>;

inline DenoiserFn denoiser_from_network(sampler::NetworkFn net, obj::ParamClass cls) {
    return [net = std::move(net), cls](const TensorValue& x, double t) {
        return obj::denoiser_from_output(cls, net(x, t), x, t);
    };
}

// Corrupts the first/random n images of eval_set to time t, denoises, and
// reports PSNR with MSE averaged over pixels and images. noise_scale inflates
// the injected noise beyond the interpolant's own (1-t) factor; 1 is standard.
inline double psnr_at_t(const DenoiserFn& den, const TensorValue& eval_set, double t, int n,
                        Rng& rng, double noise_scale = 1.0) {
    if (eval_set.numel() == 0) throw ConfigError("psnr_at_t: empty evaluation set");
    if (n < 1 || n > eval_set.rows())
        throw ConfigError("psnr_at_t: need 1 <= n <= evaluation set size");
    const int d = eval_set.cols();
    TensorValue x1 = TensorValue::zeros({n, d});
    for (int i = 0; i < n; ++i) {
        const std::uint64_t src = rng.index(eval_set.rows());
        std::copy_n(eval_set.data.data() + src * d, d, x1.data.data() + static_cast<size_t>(i) * d);
    }
    TensorValue xt = TensorValue::zeros({n, d});
    for (long i = 0; i < xt.numel(); ++i)
        xt.data[i] = (1.0 - t) * noise_scale * rng.normal() + t * x1.data[i];
    const TensorValue dpred = den(xt, t);
    require_same_shape(dpred, x1, "psnr_at_t denoiser output");
    double mse = 0.0;
    for (long i = 0; i < dpred.numel(); ++i) {
        const double e = dpred.data[i] - x1.data[i];
        mse += e * e;
    }
    mse /= static_cast<double>(dpred.numel());
    return psnr_from_mse(mse);
}

inline const std::vector<double>& default_psnr_grid() {
    static const std::vector<double> grid{0.1, 0.3, 0.6, 0.9, 0.95};
    return grid;
}

struct PsnrCurve {
    std::vector<double> grid;
    std::vector<double> psnr;
    int n_eval = 0;
    std::uint64_t seed = 0;
};

// One RNG stream per grid point, derived from (seed, point index): two curves
// computed with the same seed see identical (image, noise) draws, which is
// what makes the delta curve a paired comparison.
inline PsnrCurve psnr_curve(const DenoiserFn& den, const TensorValue& eval_set,
                            const std::vector<double>& grid, int n, std::uint64_t seed) {
    PsnrCurve c;
    c.grid = grid;
    c.n_eval = n;
    c.seed = seed;
    for (size_t j = 0; j < grid.size(); ++j) {
        Rng rng(seed, /*stream=*/j);
        c.psnr.push_back(psnr_at_t(den, eval_set, grid[j], n, rng));
    }
    return c;
}

// den_a - den_b pointwise; positive means den_a denoises better at that t.
inline PsnrCurve delta_psnr_curve(const DenoiserFn& den_a, const DenoiserFn& den_b,
                                  const TensorValue& eval_set, const std::vector<double>& grid,
                                  int n, std::uint64_t seed) {
    PsnrCurve a = psnr_curve(den_a, eval_set, grid, n, seed);
    const PsnrCurve b = psnr_curve(den_b, eval_set, grid, n, seed);
    for (size_t j = 0; j < a.psnr.size(); ++j) a.psnr[j] -= b.psnr[j];
    return a;
}

// ---- spectral residual -----------------------------------------------------

struct ResidualStats {
    double mean = 0.0;
    double median = 0.0;
    double baseline_ratio = std::numeric_limits<double>::quiet_NaN();
};

inline ResidualStats residual_energy_stats(const TensorValue& batch, const data::ModeSet& ms,
                                           double baseline_mean = 0.0) {
    if (batch.numel() == 0) throw ConfigError("residual_energy_stats: empty batch");
    const int n = ms.grid_n;
    if (batch.cols() != n * n) throw ShapeError("residual_energy_stats: batch vs grid size");
    std::vector<double> e;
    e.reserve(batch.rows());
    for (int i = 0; i < batch.rows(); ++i) {
        TensorValue img({n, n}, std::vector<double>(
                                    batch.data.begin() + static_cast<size_t>(i) * n * n,
                                    batch.data.begin() + static_cast<size_t>(i + 1) * n * n));
        e.push_back(data::spectral_residual(img, ms));
    }
    ResidualStats st;
    st.mean = std::accumulate(e.begin(), e.end(), 0.0) / e.size();
    std::sort(e.begin(), e.end());
    st.median = e.size() % 2 == 1 ? e[e.size() / 2] : 0.5 * (e[e.size() / 2 - 1] + e[e.size() / 2]);
    if (baseline_mean > 0.0) st.baseline_ratio = st.mean / baseline_mean;
    return st;
}

// ---- moment / energy distances --------------------------------------------

struct MomentDistance {
    double mean_err = 0.0;
    double cov_err_frobenius = 0.0;
    double energy_distance = 0.0;
};

namespace detail {

inline void mean_rows(const TensorValue& x, std::vector<double>& mu) {
    const int n = x.rows(), d = x.cols();
    mu.assign(d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) mu[j] += x.data[static_cast<size_t>(i) * d + j];
    for (double& v : mu) v /= n;
}

inline std::vector<double> covariance(const TensorValue& x, const std::vector<double>& mu) {
    const int n = x.rows(), d = x.cols();
    std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* row = x.data.data() + static_cast<size_t>(i) * d;
        for (int a = 0; a < d; ++a) {
            const double xa = row[a] - mu[a];
            double* crow = cov.data() + static_cast<size_t>(a) * d;
            for (int b = 0; b < d; ++b) crow[b] += xa * (row[b] - mu[b]);
        }
    }
    for (double& v : cov) v /= (n - 1);
    return cov;
}

// Deterministic strided subsample of at most cap rows.
inline TensorValue subsample(const TensorValue& x, int cap) {
    if (x.rows() <= cap) return x;
    const int stride = (x.rows() + cap - 1) / cap;
    const int k = (x.rows() + stride - 1) / stride;
    TensorValue out = TensorValue::zeros({k, x.cols()});
    for (int i = 0; i < k; ++i)
        std::copy_n(x.data.data() + static_cast<size_t>(i) * stride * x.cols(), x.cols(),
                    out.data.data() + static_cast<size_t>(i) * x.cols());
    return out;
}

inline double mean_pair_distance(const TensorValue& a, const TensorValue& b) {
    const int na = a.rows(), nb = b.rows(), d = a.cols();
    double s = 0.0;
    for (int i = 0; i < na; ++i) {
        const double* ra = a.data.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < nb; ++j) {
            const double* rb = b.data.data() + static_cast<size_t>(j) * d;
            double q = 0.0;
            for (int k = 0; k < d; ++k) {
                const double diff = ra[k] - rb[k];
                q += diff * diff;
            }
            s += std::sqrt(q);
        }
    }
    return s / (static_cast<double>(na) * nb);
}

// V-statistic normalization (the zero diagonal counts): keeps the combined
// energy estimate nonnegative and exactly zero when both sets coincide.
inline double mean_self_distance(const TensorValue& a) {
    const int n = a.rows(), d = a.cols();
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* ra = a.data.data() + static_cast<size_t>(i) * d;
        for (int j = i + 1; j < n; ++j) {
            const double* rb = a.data.data() + static_cast<size_t>(j) * d;
            double q = 0.0;
            for (int k = 0; k < d; ++k) {
                const double diff = ra[k] - rb[k];
                q += diff * diff;
            }
            s += std::sqrt(q);
        }
    }
    return n > 0 ? 2.0 * s / (static_cast<double>(n) * n) : 0.0;
}

}  // namespace detail

inline double energy_distance(const TensorValue& gen, const TensorValue& ref, int cap = 2048) {
    if (gen.cols() != ref.cols()) throw ShapeError("energy_distance: dimension mismatch");
    const TensorValue a = detail::subsample(gen, cap);
    const TensorValue b = detail::subsample(ref, cap);
    return 2.0 * detail::mean_pair_distance(a, b) - detail::mean_self_distance(a) -
           detail::mean_self_distance(b);
}

inline MomentDistance moment_distance(const TensorValue& gen, const TensorValue& ref) {
    if (gen.cols() != ref.cols()) throw ShapeError("moment_distance: dimension mismatch");
    if (gen.rows() < 2 || ref.rows() < 2) throw ConfigError("moment_distance: batches need >= 2 rows");
    std::vector<double> mg, mr;
    detail::mean_rows(gen, mg);
    detail::mean_rows(ref, mr);
    MomentDistance md;
    for (size_t j = 0; j < mg.size(); ++j) md.mean_err += (mg[j] - mr[j]) * (mg[j] - mr[j]);
    md.mean_err = std::sqrt(md.mean_err);
    const std::vector<double> cg = detail::covariance(gen, mg);
    const std::vector<double> cr = detail::covariance(ref, mr);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < cg.size(); ++i) {
        num += (cg[i] - cr[i]) * (cg[i] - cr[i]);
        den += cr[i] * cr[i];
    }
    md.cov_err_frobenius = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    md.energy_distance = energy_distance(gen, ref);
    return md;
}

// Spearman rank correlation, average ranks on ties.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw ConfigError("spearman: need two equal-length series of >= 2 points");
    auto ranks = [](const std::vector<double>& v) {
        const size_t n = v.size();
        std::vector<size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
            for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const std::vector<double> rx = ranks(xs), ry = ranks(ys);
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= rx.size();
    my /= ry.size();
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace flowdn::metrics
