// Closed-form linear-Gaussian denoising machinery and the empirical-posterior
// brute-force denoiser used as ground truth in tests and evaluations.
//
// For x1 ~ N(0, tau^2 I) and x_t = (1-t) x0 + t x1 the posterior of x1 given
// the rescaled observation y = x_t / t is Gaussian with mean coefficient
// tau^2 / (tau^2 + ((1-t)/t)^2) and variance (1/tau^2 + t^2/(1-t)^2)^-1.
// All forms below are algebraically stabilized so the [0,1] endpoints are
// well defined.
#pragma once

#include <cmath>
#include <vector>

#include "flowdn/tensor.hpp"

namespace flowdn::oracle {

struct GaussianDataSpec {
    double tau = 1.0;  // data standard deviation
    int dim = 1;

    GaussianDataSpec(double tau_, int dim_) : tau(tau_), dim(dim_) {
        if (tau <= 0.0) throw ConfigError("gaussian data needs tau > 0");
        if (dim < 1) throw ConfigError("gaussian data needs dim >= 1");
    }
};

inline double posterior_mean_coeff(double t, double tau) {
    const double r = (1.0 - t) / t;
    return tau * tau / (tau * tau + r * r);
}

inline double posterior_variance(double t, double tau) {
    const double s = t / (1.0 - t);
    return 1.0 / (1.0 / (tau * tau) + s * s);
}

// Inverse posterior variance; grows like (1-t)^-2 as t -> 1 and equals the
// SNR weighting plus 1/tau^2 for every t.
inline double optimal_weight(double t, double tau) {
    const double s = t / (1.0 - t);
    return 1.0 / (tau * tau) + s * s;
}

// D*(x,t) = tau^2 t x / (t^2 tau^2 + (1-t)^2); equals the posterior mean and
// is defined at both endpoints (0 at t=0, x at t=1).
inline TensorValue ideal_denoiser_gaussian(const TensorValue& x, double t, double tau) {
    const double denom = t * t * tau * tau + (1.0 - t) * (1.0 - t);
    const double c = tau * tau * t / denom;
    TensorValue d = TensorValue::zeros(x.shape);
    for (long i = 0; i < d.numel(); ++i) d.data[i] = c * x.data[i];
    return d;
}

// v*(x,t) = (D* - x)/(1-t) simplified: x (tau^2 t - (1-t)) / (t^2 tau^2 + (1-t)^2).
// The (1-t) factor cancels symbolically, so t=1 is fine.
inline TensorValue ideal_velocity_gaussian(const TensorValue& x, double t, double tau) {
    const double denom = t * t * tau * tau + (1.0 - t) * (1.0 - t);
    const double c = (tau * tau * t - (1.0 - t)) / denom;
    TensorValue v = TensorValue::zeros(x.shape);
    for (long i = 0; i < v.numel(); ++i) v.data[i] = c * x.data[i];
    return v;
}

// Posterior mean over a discrete dataset: softmax over training points with
// logits -|x - t x1_i|^2 / (2 (1-t)^2), computed with the max-shift so the
// t -> 1 regime cannot overflow. `dataset` is [n, d]; x is a single point [d]
// (any shape with matching numel).
inline TensorValue empirical_posterior_denoiser(const TensorValue& x, double t,
                                                const TensorValue& dataset) {
    const int n = dataset.rows(), d = dataset.cols();
    if (dataset.numel() == 0) throw ConfigError("empirical posterior needs a nonempty dataset");
    if (x.numel() != d) throw ShapeError("empirical posterior: point dim vs dataset dim");
    const double inv2s2 = 1.0 / (2.0 * (1.0 - t) * (1.0 - t));
    std::vector<double> logit(static_cast<size_t>(n));
    double max_logit = -1e300;
    for (int i = 0; i < n; ++i) {
        double sq = 0.0;
        for (int j = 0; j < d; ++j) {
            const double r = x.data[j] - t * dataset.data[static_cast<size_t>(i) * d + j];
            sq += r * r;
        }
        logit[i] = -sq * inv2s2;
        if (logit[i] > max_logit) max_logit = logit[i];
    }
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
        logit[i] = std::exp(logit[i] - max_logit);
        z += logit[i];
    }
    TensorValue out = TensorValue::zeros(x.shape);
    for (int i = 0; i < n; ++i) {
        const double w = logit[i] / z;
        for (int j = 0; j < d; ++j) out.data[j] += w * dataset.data[static_cast<size_t>(i) * d + j];
    }
    return out;
}

// Softmax weights themselves, for concentration checks.
inline std::vector<double> empirical_posterior_weights(const TensorValue& x, double t,
                                                       const TensorValue& dataset) {
    const int n = dataset.rows(), d = dataset.cols();
    const double inv2s2 = 1.0 / (2.0 * (1.0 - t) * (1.0 - t));
    std::vector<double> logit(static_cast<size_t>(n));
    double max_logit = -1e300;
    for (int i = 0; i < n; ++i) {
        double sq = 0.0;
        for (int j = 0; j < d; ++j) {
            const double r = x.data[j] - t * dataset.data[static_cast<size_t>(i) * d + j];
            sq += r * r;
        }
        logit[i] = -sq * inv2s2;
        if (logit[i] > max_logit) max_logit = logit[i];
    }
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
        logit[i] = std::exp(logit[i] - max_logit);
        z += logit[i];
    }
    for (double& w : logit) w /= z;
    return logit;
}

}  // namespace flowdn::oracle
