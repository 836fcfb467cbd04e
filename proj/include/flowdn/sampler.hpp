// Probability-flow ODE integration from t=0 to t=1. The network is queried
// through a class-aware velocity field that converts whatever the model
// predicts into a velocity using the numerically safe form for that class.
#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "flowdn/models.hpp"
#include "flowdn/objectives.hpp"
#include "flowdn/rng.hpp"
#include "flowdn/tensor.hpp"

namespace flowdn::sampler {

enum class Method { Euler, Heun };

inline std::string format_method(Method m) { return m == Method::Euler ? "euler" : "heun"; }

inline Method parse_method(const std::string& s) {
    if (s == "euler") return Method::Euler;
    if (s == "heun") return Method::Heun;
    throw ConfigError("unknown integrator '" + s + "'");
}

struct IntegratorConfig {
    Method method = Method::Euler;
    int steps = 200;
    double t_start = 0.0;
    double t_end = 1.0;
    double t_clamp = 1e-3;

    void validate() const {
        if (steps < 1) throw ConfigError("integrator: steps must be positive");
        if (!(t_start >= 0.0 && t_start < t_end && t_end <= 1.0))
            throw ConfigError("integrator: need 0 <= t_start < t_end <= 1");
        if (!(t_clamp > 0.0 && t_clamp < 0.5)) throw ConfigError("integrator: bad t_clamp");
    }
};

// Raw network evaluation N(x, t) on a batch at a shared time.
using NetworkFn = std::function<TensorValue(const TensorValue&, double)>;

// Converts network output to velocity with the per-class safe form; times
// outside [t_clamp, 1-t_clamp] are clamped and counted, never evaluated raw.
struct VelocityField {
    NetworkFn net;
    obj::ParamClass cls = obj::ParamClass::CVel;
    double t_clamp = 1e-3;
    long clamp_count = 0;

    TensorValue operator()(const TensorValue& x, double t) {
        double tc = t;
        if (tc < t_clamp) {
            tc = t_clamp;
            ++clamp_count;
        } else if (tc > 1.0 - t_clamp) {
            tc = 1.0 - t_clamp;
            ++clamp_count;
        }
        TensorValue n = net(x, tc);
        require_same_shape(n, x, "velocity field output");
        switch (cls) {
            case obj::ParamClass::CVel: return n;
            case obj::ParamClass::CDen: {
                const double inv = 1.0 / (1.0 - tc);
                for (long i = 0; i < n.numel(); ++i) n.data[i] = (n.data[i] - x.data[i]) * inv;
                return n;
            }
            case obj::ParamClass::CNoise: {
                const double inv = 1.0 / tc;
                for (long i = 0; i < n.numel(); ++i) n.data[i] = (x.data[i] - n.data[i]) * inv;
                return n;
            }
        }
        throw ConfigError("unknown parametrization class");
    }
};

inline VelocityField velocity_field(NetworkFn net, obj::ParamClass cls, double t_clamp = 1e-3) {
    return VelocityField{std::move(net), cls, t_clamp, 0};
}

// Wraps a trained model as a NetworkFn. The store must outlive the returned
// function; EMA weights are used when available and requested.
inline NetworkFn network_from_model(const models::ModelSpec& spec, const ParamStore& store,
                                    bool use_ema = true) {
    const ParamStore* sp = &store;
    return [spec, sp, use_ema](const TensorValue& x, double t) {
        return models::eval_forward(spec, *sp, use_ema, x, std::vector<double>(x.rows(), t));
    };
}

inline TensorValue gaussian_init(int n, int d, Rng& rng) {
    TensorValue x = TensorValue::zeros({n, d});
    for (double& v : x.data) v = rng.normal();
    return x;
}

// Fixed-grid integration, velocity at the left endpoint of each step; Heun
// adds the trapezoidal corrector. Aborts with step/class context if the state
// leaves the finite range (the expected failure mode of CNoise near t=0).
inline TensorValue integrate(VelocityField& field, TensorValue x, const IntegratorConfig& cfg) {
    cfg.validate();
    const double dt = (cfg.t_end - cfg.t_start) / cfg.steps;
    for (int k = 0; k < cfg.steps; ++k) {
        const double tk = cfg.t_start + k * dt;
        const TensorValue v1 = field(x, tk);
        if (cfg.method == Method::Euler) {
            for (long i = 0; i < x.numel(); ++i) x.data[i] += dt * v1.data[i];
        } else {
            TensorValue xe = x;
            for (long i = 0; i < x.numel(); ++i) xe.data[i] += dt * v1.data[i];
            const TensorValue v2 = field(xe, tk + dt);
            for (long i = 0; i < x.numel(); ++i) x.data[i] += 0.5 * dt * (v1.data[i] + v2.data[i]);
        }
        if (!x.all_finite())
            throw DivergenceError("sampler: non-finite state at step " + std::to_string(k) +
                                      " (t=" + std::to_string(tk) +
                                      ", class=" + obj::format_param_class(field.cls) + ")",
                                  k);
    }
    return x;
}

inline TensorValue integrate(NetworkFn net, obj::ParamClass cls, TensorValue x_init,
                             const IntegratorConfig& cfg) {
    VelocityField field = velocity_field(std::move(net), cls, cfg.t_clamp);
    return integrate(field, std::move(x_init), cfg);
}

// Draws x_init ~ N(0, I) internally and integrates.
inline TensorValue generate(NetworkFn net, obj::ParamClass cls, int count, int dim,
                            const IntegratorConfig& cfg, Rng& rng) {
    return integrate(std::move(net), cls, gaussian_init(count, dim, rng), cfg);
}

}  // namespace flowdn::sampler
